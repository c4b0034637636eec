#include "coastal/sim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "coastal/errors.hpp"
#include "coastal/sim/csf.hpp"

namespace coastal::sim {

std::vector<Constituent> default_constituents() {
    return {{0.075, 25.82, 3.40},
            {0.095, 23.94, 3.60},
            {0.1, 12.66, 5.93},
            {0.395, 12.42, 0.0},
            {0.06, 12.00, 0.75}};
}

void SimConfig::validate() const {
    if (nx < 4 || ny < 4) throw ConfigError("grid must be at least 4x4 cells");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(dx > 0.0) || !(dy > 0.0)) throw ConfigError("cell size must be positive");
    if (!(h_min > 0.0)) throw ConfigError("H_min must be positive");
    if (!(g > 0.0)) throw ConfigError("g must be positive");
    if (c_f < 0.0) throw ConfigError("friction coefficient must be non-negative");
    if (t_end < 0.0) throw ConfigError("t_end must be non-negative");
    if (output_stride < 1) throw ConfigError("output_stride must be >= 1");
    for (const auto& c : constituents) {
        if (c.amplitude < 0.0) throw ConfigError("constituent amplitude must be >= 0");
        if (!(c.divisor > 0.0)) throw ConfigError("constituent period divisor must be > 0");
    }
}

int SimConfig::steps() const { return (int)std::llround(t_end / dt); }

double tidal_elevation(double t_hours, const std::vector<Constituent>& constituents) {
    double xi = 0.0;
    for (const auto& c : constituents) xi += c.amplitude * std::cos(t_hours / c.divisor + c.phase);
    return xi;
}

double bottom_friction_coeff(double q_mag, double H, double c_f) {
    if (!(H > 0.0)) throw NumericsError("bottom friction requires positive total depth (clamp failed upstream)");
    return c_f * q_mag / (H * H);
}

SimState make_basin(SimConfig& cfg) {
    cfg.validate();
    SimState s;
    s.xi = Field(cfg.ny, cfg.nx, 0.0);
    s.u = Field(cfg.ny, cfg.nx, 0.0);
    s.v = Field(cfg.ny, cfg.nx, 0.0);
    s.h_b = Field(cfg.ny, cfg.nx, 0.0);
    s.mask.assign((size_t)cfg.ny * cfg.nx, 1);
    s.t = 0.0;

    if (cfg.basin == "tidal-bay") {
        // Open west edge, depth sloping from 2 m at the opening to 0.5 m at the far shore.
        cfg.boundary = {EdgeKind::Open, EdgeKind::Land, EdgeKind::Land, EdgeKind::Land};
        for (int i = 0; i < cfg.ny; ++i)
            for (int j = 0; j < cfg.nx; ++j) {
                double x = (j + 0.5) / cfg.nx;
                s.h_b.at(i, j) = 2.0 + (0.5 - 2.0) * x;
            }
    } else if (cfg.basin == "closed-flat") {
        cfg.boundary = {EdgeKind::Land, EdgeKind::Land, EdgeKind::Land, EdgeKind::Land};
        for (auto& h : s.h_b.v) h = 2.0;
    } else if (cfg.basin == "closed-slope") {
        cfg.boundary = {EdgeKind::Land, EdgeKind::Land, EdgeKind::Land, EdgeKind::Land};
        for (int i = 0; i < cfg.ny; ++i)
            for (int j = 0; j < cfg.nx; ++j) {
                double x = (j + 0.5) / cfg.nx;
                s.h_b.at(i, j) = 2.0 + (0.5 - 2.0) * x;
            }
    } else {
        throw ConfigError("unknown basin '" + cfg.basin + "'");
    }
    return s;
}

namespace {

struct CellState {
    double xi, hb, uvel, vvel;  // velocities, not momenta
};

struct Flux {
    double m, xm, ym;
};

/// Rusanov flux across one edge on hydrostatically reconstructed states; the
/// normal velocity is uvel. hl_s/hr_s are the reconstructed interface depths,
/// returned for the pressure corrections applied by the caller.
inline Flux rusanov_1d(const CellState& L, const CellState& R, double g, double& hl_s, double& hr_s) {
    const double ze = std::max(-L.hb, -R.hb);
    hl_s = std::max(0.0, L.xi - ze);
    hr_s = std::max(0.0, R.xi - ze);
    const double a = std::max(std::abs(L.uvel) + std::sqrt(g * hl_s), std::abs(R.uvel) + std::sqrt(g * hr_s));
    const double fl_m = hl_s * L.uvel;
    const double fr_m = hr_s * R.uvel;
    Flux f;
    f.m = 0.5 * (fl_m + fr_m) - 0.5 * a * (hr_s - hl_s);
    f.xm = 0.5 * (hl_s * L.uvel * L.uvel + 0.5 * g * hl_s * hl_s + hr_s * R.uvel * R.uvel + 0.5 * g * hr_s * hr_s) -
           0.5 * a * (hr_s * R.uvel - hl_s * L.uvel);
    f.ym = 0.5 * (fl_m * L.vvel + fr_m * R.vvel) - 0.5 * a * (hr_s * R.vvel - hl_s * L.vvel);
    return f;
}

class Stepper {
public:
    Stepper(const SimState& s, const SimConfig& cfg) : cfg_(cfg), st_(s) {}

    void check_input() const {
        const double rx = cfg_.dt / cfg_.dx, ry = cfg_.dt / cfg_.dy;
        for (int i = 0; i < cfg_.ny; ++i)
            for (int j = 0; j < cfg_.nx; ++j) {
                if (!st_.water(i, j)) continue;
                const double xi = st_.xi.at(i, j), u = st_.u.at(i, j), v = st_.v.at(i, j);
                if (!std::isfinite(xi) || !std::isfinite(u) || !std::isfinite(v))
                    throw NumericsError("non-finite field value at cell (" + std::to_string(i) + "," +
                                        std::to_string(j) + ")");
                const double H = std::max(st_.h_b.at(i, j) + xi, cfg_.h_min);
                const double c = std::sqrt(cfg_.g * H);
                const double nu = std::max((std::abs(u) / H + c) * rx, (std::abs(v) / H + c) * ry);
                if (nu >= 1.0) {
                    std::ostringstream os;
                    os << "CFL violation at cell (" << i << "," << j << "): wave speed "
                       << std::max(std::abs(u) / H, std::abs(v) / H) + c << " m/s, CFL " << nu;
                    throw NumericsError(os.str());
                }
            }
    }

    /// dxi/du/dv <- one-dimensional flux divergence + bathymetry source along
    /// the given axis (0 = x, 1 = y) at forcing time t_sec. The two sweeps are
    /// composed by Godunov splitting, so the CFL bound applies per axis.
    void rhs(int axis, const Field& xi, const Field& u, const Field& v, double t_sec, Field& dxi, Field& du,
             Field& dv) const {
        const int ny = cfg_.ny, nx = cfg_.nx;
        const double g = cfg_.g;
        const double r = axis == 0 ? 1.0 / cfg_.dx : 1.0 / cfg_.dy;
        const double xi_bc = tidal_elevation(t_sec / 3600.0, cfg_.constituents);
        std::fill(dxi.v.begin(), dxi.v.end(), 0.0);
        std::fill(du.v.begin(), du.v.end(), 0.0);
        std::fill(dv.v.begin(), dv.v.end(), 0.0);

        auto cell = [&](int i, int j) {
            CellState c;
            c.xi = xi.at(i, j);
            c.hb = st_.h_b.at(i, j);
            const double H = std::max(c.hb + c.xi, cfg_.h_min);
            c.uvel = u.at(i, j) / H;
            c.vvel = v.at(i, j) / H;
            if (axis == 1) std::swap(c.uvel, c.vvel);  // normal component first
            return c;
        };
        auto reflect = [](CellState c) { c.uvel = -c.uvel; return c; };
        auto open_ghost = [&](CellState c) { c.xi = xi_bc; return c; };

        const EdgeKind lo_edge = axis == 0 ? cfg_.boundary.west : cfg_.boundary.south;
        const EdgeKind hi_edge = axis == 0 ? cfg_.boundary.east : cfg_.boundary.north;
        const int n_lines = axis == 0 ? ny : nx;
        const int n_cells = axis == 0 ? nx : ny;

        for (int line = 0; line < n_lines; ++line) {
            for (int e = 0; e <= n_cells; ++e) {
                auto cell_at = [&](int k) {  // k-th cell along the sweep
                    return axis == 0 ? std::pair<int, int>{line, k} : std::pair<int, int>{k, line};
                };
                const auto [li, lj] = cell_at(e - 1);
                const auto [ri, rj] = cell_at(e);
                const bool has_l = e > 0 && st_.water(li, lj);
                const bool has_r = e < n_cells && st_.water(ri, rj);
                if (!has_l && !has_r) continue;
                CellState L, R;
                if (has_l && has_r) {
                    L = cell(li, lj);
                    R = cell(ri, rj);
                } else if (has_l) {
                    L = cell(li, lj);
                    R = (e == n_cells && hi_edge == EdgeKind::Open) ? open_ghost(L) : reflect(L);
                } else {
                    R = cell(ri, rj);
                    L = (e == 0 && lo_edge == EdgeKind::Open) ? open_ghost(R) : reflect(R);
                }
                double hl_s, hr_s;
                const Flux f = rusanov_1d(L, R, g, hl_s, hr_s);
                Field& dn = axis == 0 ? du : dv;  // normal momentum
                Field& dtg = axis == 0 ? dv : du;  // tangential momentum
                if (has_l) {
                    dxi.at(li, lj) -= f.m * r;
                    dn.at(li, lj) += (-f.xm + 0.5 * g * hl_s * hl_s) * r;
                    dtg.at(li, lj) -= f.ym * r;
                }
                if (has_r) {
                    dxi.at(ri, rj) += f.m * r;
                    dn.at(ri, rj) += (f.xm - 0.5 * g * hr_s * hr_s) * r;
                    dtg.at(ri, rj) += f.ym * r;
                }
            }
        }
    }

private:
    const SimConfig& cfg_;
    const SimState& st_;
};

}  // namespace

SimState step(const SimState& state, const SimConfig& cfg) {
    Stepper stepper(state, cfg);
    stepper.check_input();

    const int ny = cfg.ny, nx = cfg.nx;
    const double dt = cfg.dt;
    Field dxi(ny, nx), du(ny, nx), dv(ny, nx);
    Field xi1(ny, nx), u1(ny, nx), v1(ny, nx);

    SimState out = state;
    // Godunov splitting: an SSP-RK2 substep per axis.
    for (int axis = 0; axis < 2; ++axis) {
        stepper.rhs(axis, out.xi, out.u, out.v, state.t, dxi, du, dv);
        for (size_t k = 0; k < xi1.v.size(); ++k) {
            xi1.v[k] = out.xi.v[k] + dt * dxi.v[k];
            u1.v[k] = out.u.v[k] + dt * du.v[k];
            v1.v[k] = out.v.v[k] + dt * dv.v[k];
        }
        stepper.rhs(axis, xi1, u1, v1, state.t + dt, dxi, du, dv);
        for (size_t k = 0; k < xi1.v.size(); ++k) {
            out.xi.v[k] = 0.5 * out.xi.v[k] + 0.5 * (xi1.v[k] + dt * dxi.v[k]);
            out.u.v[k] = 0.5 * out.u.v[k] + 0.5 * (u1.v[k] + dt * du.v[k]);
            out.v.v[k] = 0.5 * out.v.v[k] + 0.5 * (v1.v[k] + dt * dv.v[k]);
        }
    }
    out.t = state.t + dt;

    // Pointwise semi-implicit friction + Coriolis, then the depth clamp.
    for (int i = 0; i < ny; ++i)
        for (int j = 0; j < nx; ++j) {
            if (!out.water(i, j)) {
                out.xi.at(i, j) = out.u.at(i, j) = out.v.at(i, j) = 0.0;
                continue;
            }
            out.xi.at(i, j) = std::max(out.xi.at(i, j), cfg.h_min - out.h_b.at(i, j));
            const double H = out.h_b.at(i, j) + out.xi.at(i, j);
            double& U = out.u.at(i, j);
            double& V = out.v.at(i, j);
            const double tau = bottom_friction_coeff(std::hypot(U, V), H, cfg.c_f);
            const double a = 1.0 + dt * tau;
            const double b = dt * cfg.f_c;
            const double det = a * a + b * b;
            const double Un = (a * U + b * V) / det;
            const double Vn = (-b * U + a * V) / det;
            U = Un;
            V = Vn;
        }
    return out;
}

std::vector<SimState> run(SimConfig cfg, uint64_t seed, const std::string& out_dir) {
    SimState state = make_basin(cfg);
    const int n_steps = cfg.steps();
    std::vector<SimState> frames;
    frames.reserve(n_steps / cfg.output_stride + 1);
    frames.push_back(state);
    for (int s = 1; s <= n_steps; ++s) {
        state = step(state, cfg);
        if (s % cfg.output_stride == 0) frames.push_back(state);
    }
    if (!out_dir.empty()) write_csf(out_dir, cfg, frames, seed);
    return frames;
}

double total_mass(const SimState& state, const SimConfig& cfg) {
    double m = 0.0;
    for (int i = 0; i < cfg.ny; ++i)
        for (int j = 0; j < cfg.nx; ++j)
            if (state.water(i, j)) m += state.xi.at(i, j);
    return m * cfg.dx * cfg.dy;
}

}  // namespace coastal::sim
