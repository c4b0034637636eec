#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coastal/sim/sim.hpp"

namespace coastal::sim {

/// Metadata of a Coastal Simulation Format directory (meta.json).
struct CsfMeta {
    int ny = 0, nx = 0;
    double dx = 0, dy = 0, dt = 0;
    int output_stride = 1;
    double g = 9.81, f_c = 0, c_f = 0, h_min = 0.05, t_end = 0;
    std::vector<Constituent> constituents;
    std::string basin;
    int frame_count = 0;
    uint64_t seed = 0;
    std::string dtype = "f32";
    std::string endianness = "little";

    double frame_interval() const { return dt * output_stride; }
    double frame_time(int k) const { return k * frame_interval(); }
};

/// Writes meta.json, mask.bin, bathy.bin and frame_%06d.bin (xi, U, V
/// concatenated, row-major little-endian float32) under dir.
void write_csf(const std::string& dir, const SimConfig& cfg, const std::vector<SimState>& frames, uint64_t seed);

/// Read access to a CSF directory; frames are loaded on demand.
class CsfReader {
public:
    explicit CsfReader(const std::string& dir);

    const CsfMeta& meta() const { return meta_; }
    const std::vector<float>& mask() const { return mask_; }
    const std::vector<float>& bathy() const { return bathy_; }

    /// Frame k as 3 * ny * nx floats in (xi, U, V) plane order.
    std::vector<float> frame(int k) const;

private:
    std::string dir_;
    CsfMeta meta_;
    std::vector<float> mask_;
    std::vector<float> bathy_;
};

}  // namespace coastal::sim
