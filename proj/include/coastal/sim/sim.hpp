#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coastal::sim {

/// One tidal constituent of the open-boundary forcing
/// a * cos(t / divisor + phase), with t in hours.
struct Constituent {
    double amplitude = 0.0;
    double divisor = 1.0;
    double phase = 0.0;
};

/// The five-constituent forcing used by the default basins.
std::vector<Constituent> default_constituents();

enum class EdgeKind { Land, Open };

struct BoundaryLayout {
    EdgeKind west = EdgeKind::Land;
    EdgeKind east = EdgeKind::Land;
    EdgeKind south = EdgeKind::Land;
    EdgeKind north = EdgeKind::Land;
};

struct SimConfig {
    int nx = 64;
    int ny = 64;
    double dx = 156.25;   // m
    double dy = 156.25;   // m
    double dt = 20.0;     // s
    double t_end = 86400.0;
    double g = 9.81;
    double f_c = 3.19e-5;    // Coriolis coefficient, 1/s
    double c_f = 0.009;      // quadratic bottom friction coefficient
    double h_min = 0.05;     // minimum total depth clamp, m
    int output_stride = 12;  // steps between saved frames
    std::vector<Constituent> constituents = default_constituents();
    BoundaryLayout boundary;
    std::string basin = "tidal-bay";

    /// Throws ConfigError on any violated invariant.
    void validate() const;

    int steps() const;  // rounded t_end / dt
};

/// Row-major ny x nx grid of doubles.
struct Field {
    int ny = 0, nx = 0;
    std::vector<double> v;

    Field() = default;
    Field(int ny_, int nx_, double fill = 0.0) : ny(ny_), nx(nx_), v((size_t)ny_ * nx_, fill) {}
    double& at(int i, int j) { return v[(size_t)i * nx + j]; }
    double at(int i, int j) const { return v[(size_t)i * nx + j]; }
};

/// Physical state on the grid at one time. On land cells xi = u = v = 0.
struct SimState {
    Field xi;   // water elevation above datum, m
    Field u;    // depth-integrated x velocity U, m^2/s
    Field v;    // depth-integrated y velocity V, m^2/s
    Field h_b;  // bathymetric depth below datum, m
    std::vector<uint8_t> mask;  // 1 = water
    double t = 0.0;

    bool water(int i, int j) const { return mask[(size_t)i * xi.nx + j] != 0; }
};

/// Tidal elevation from Eq.-style constituents; t in hours.
double tidal_elevation(double t_hours, const std::vector<Constituent>& constituents);

/// Quadratic bottom friction rate C_f * |q| / H^2. Throws NumericsError if H <= 0.
double bottom_friction_coeff(double q_mag, double H, double c_f);

/// Builds the initial at-rest state for cfg.basin and adjusts cfg.boundary to match.
/// Built-in basins: "tidal-bay", "closed-flat", "closed-slope".
SimState make_basin(SimConfig& cfg);

/// Advances one dt: well-balanced Rusanov flux update (two-stage SSP Runge-Kutta)
/// followed by a pointwise semi-implicit friction/Coriolis solve.
/// Throws NumericsError on CFL violation or non-finite fields.
SimState step(const SimState& state, const SimConfig& cfg);

/// Runs the simulation from rest, collecting a frame every output_stride steps
/// (including t = 0). If out_dir is non-empty the CSF directory is written there.
/// Deterministic for fixed inputs; seed is recorded but the dynamics are not random.
std::vector<SimState> run(SimConfig cfg, uint64_t seed = 0, const std::string& out_dir = "");

/// Discrete mass integral sum(xi * dx * dy) over water cells.
double total_mass(const SimState& state, const SimConfig& cfg);

}  // namespace coastal::sim
