#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "coastal/rng.hpp"
#include "coastal/sim/csf.hpp"
#include "coastal/sim/sim.hpp"

namespace coastal::data {

/// Per-channel affine normalization ranges in (U, V, xi) order.
struct NormRanges {
    std::array<double, 2> u{-1.0, 1.0};
    std::array<double, 2> v{-1.0, 1.0};
    std::array<double, 2> xi{-1.0, 1.0};

    double lo(int c) const { return c == 0 ? u[0] : c == 1 ? v[0] : xi[0]; }
    double hi(int c) const { return c == 0 ? u[1] : c == 1 ? v[1] : xi[1]; }
    void validate() const;
};

/// A rendered, masked, normalized 3-channel image of one simulation state.
struct FrameImage {
    int h = 0, w = 0;
    std::vector<float> data;    // [3, h, w], channels (U, V, xi), values in [0,1]
    std::vector<uint8_t> mask;  // [h, w], 1 = water
    double t = 0.0;
    NormRanges norm;
};

/// Two coarse frames paired with the three fine frames they bracket.
struct SamplePair {
    int id = 0;
    int h = 0, w = 0;
    std::vector<float> lr;      // [2, 3, h, w]
    std::vector<float> hr;      // [3, 3, h, w]
    std::vector<uint8_t> mask;  // [h, w]
    double t0 = 0, t1 = 0;      // physical times of the coarse frames
};

struct DatasetManifest {
    uint64_t seed = 0;
    int patch = 64;
    int h = 0, w = 0;
    std::array<double, 3> split_ratios{0.6, 0.2, 0.2};
    std::vector<int> train, val, test;
    NormRanges norm;
    std::string coarse_dir, fine_dir;

    int total() const { return (int)(train.size() + val.size() + test.size()); }
};

/// Bilinearly samples the cell-centered (xi,U,V) planes onto an hpix x wpix
/// lattice, affine-normalizes each channel to [0,1] (clamped) and zeroes
/// land pixels. planes is the CSF layout (xi, then U, then V).
FrameImage render_planes(const float* planes, const float* cell_mask, int ny, int nx, double t, int hpix,
                         int wpix, const NormRanges& norm);

/// Convenience overload for a simulator state.
FrameImage render(const sim::SimState& state, int hpix, int wpix, const NormRanges& norm);

/// Inverts the normalization of one channel (land pixels stay zero).
std::vector<double> denormalize_channel(const FrameImage& img, int channel);

/// Per-channel min/max with 1% headroom over the given coarse frames.
/// U and V share one symmetric range so that flips and rotations stay exact
/// sign maps in normalized space.
NormRanges compute_norm_ranges(const sim::CsfReader& coarse, const std::vector<int>& frame_ids);

/// All aligned sample pairs from a coarse and a fine CSF series rendered at
/// the fine grid size. Throws ConfigError when the fine cadence is not half
/// the coarse cadence, naming the first mismatched timestamp.
std::vector<SamplePair> build_pairs(const sim::CsfReader& coarse, const sim::CsfReader& fine, int hpix,
                                    int wpix, const NormRanges& norm);

/// Uniformly random square crop; windows without any water pixel are
/// rejected and resampled (bounded retries, then a deterministic scan).
SamplePair crop_patch(const SamplePair& sample, int size, Rng& rng);

struct AugmentFlags {
    bool hflip = false;
    bool vflip = false;
    int rot90 = 0;  // counter-clockwise quarter turns
    bool time_reverse = false;
};

AugmentFlags draw_augment(Rng& rng);

/// Applies flips / rotations / temporal reversal. Flips and rotations remap
/// the velocity channels (value -> 1 - value about the mid-range) so the
/// augmented sample remains physically consistent under the symmetric U/V
/// normalization. Requires a square patch when rotating.
SamplePair apply_augment(const SamplePair& sample, const AugmentFlags& flags);

inline SamplePair augment(const SamplePair& sample, Rng& rng) {
    return apply_augment(sample, draw_augment(rng));
}

/// Builds the dataset directory: manifest.json plus samples/<id>.bin
/// (lr, hr, mask as little-endian float32).
DatasetManifest make_dataset(const std::string& coarse_dir, const std::string& fine_dir,
                             const std::string& out_dir, int patch, std::array<double, 3> ratios,
                             uint64_t seed);

DatasetManifest load_manifest(const std::string& dir);
SamplePair load_sample(const std::string& dir, const DatasetManifest& m, int id);

/// 8-bit export of one channel (round(255 * x)) and of the channel-stacked
/// RGB image, written as PNGs.
void export_frame_pngs(const std::string& prefix, const float* chw, const uint8_t* mask, int h, int w);

}  // namespace coastal::data
