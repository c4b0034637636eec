#include "coastal/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "coastal/data/png_io.hpp"
#include "coastal/errors.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace coastal::data {

void NormRanges::validate() const {
    for (int c = 0; c < 3; ++c)
        if (!(hi(c) > lo(c))) throw ConfigError("degenerate normalization range for channel " + std::to_string(c));
}

namespace {

std::string sample_name(int id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.bin", id);
    return buf;
}

struct BilinearTap {
    int j0, j1, i0, i1;
    double tx, ty;
};

BilinearTap taps(int p, int npix, int ncell, bool /*unused*/) {
    BilinearTap t{};
    const double g = (p + 0.5) * (double)ncell / npix - 0.5;
    const double gc = std::clamp(g, 0.0, (double)ncell - 1);
    t.j0 = (int)std::floor(gc);
    t.j1 = std::min(t.j0 + 1, ncell - 1);
    t.tx = gc - t.j0;
    return t;
}

}  // namespace

FrameImage render_planes(const float* planes, const float* cell_mask, int ny, int nx, double t, int hpix,
                         int wpix, const NormRanges& norm) {
    norm.validate();
    FrameImage img;
    img.h = hpix;
    img.w = wpix;
    img.t = t;
    img.norm = norm;
    img.data.assign((size_t)3 * hpix * wpix, 0.0f);
    img.mask.assign((size_t)hpix * wpix, 0);

    const int64_t plane = (int64_t)ny * nx;
    // CSF plane order is (xi, U, V); image channel order is (U, V, xi).
    const float* src[3] = {planes + plane, planes + 2 * plane, planes};

    for (int r = 0; r < hpix; ++r) {
        const BilinearTap tv = taps(r, hpix, ny, false);
        for (int c = 0; c < wpix; ++c) {
            const BilinearTap th = taps(c, wpix, nx, false);
            const int in = (int)std::llround(std::clamp((r + 0.5) * ny / hpix - 0.5, 0.0, (double)ny - 1));
            const int jn = (int)std::llround(std::clamp((c + 0.5) * nx / wpix - 0.5, 0.0, (double)nx - 1));
            const bool water = cell_mask[(size_t)in * nx + jn] != 0.0f;
            img.mask[(size_t)r * wpix + c] = water ? 1 : 0;
            if (!water) continue;

            const int idx[4] = {tv.j0 * nx + th.j0, tv.j0 * nx + th.j1, tv.j1 * nx + th.j0,
                                tv.j1 * nx + th.j1};
            const double wgt[4] = {(1 - tv.tx) * (1 - th.tx), (1 - tv.tx) * th.tx, tv.tx * (1 - th.tx),
                                   tv.tx * th.tx};
            for (int ch = 0; ch < 3; ++ch) {
                double acc = 0, wsum = 0;
                for (int k = 0; k < 4; ++k) {
                    if (cell_mask[(size_t)idx[k]] == 0.0f) continue;
                    acc += wgt[k] * (double)src[ch][idx[k]];
                    wsum += wgt[k];
                }
                const double value = wsum > 0 ? acc / wsum : 0.0;
                const double lo = norm.lo(ch), hi = norm.hi(ch);
                img.data[((size_t)ch * hpix + r) * wpix + c] =
                    (float)std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
            }
        }
    }
    return img;
}

FrameImage render(const sim::SimState& state, int hpix, int wpix, const NormRanges& norm) {
    const int ny = state.xi.ny, nx = state.xi.nx;
    std::vector<float> planes((size_t)3 * ny * nx);
    std::vector<float> mask((size_t)ny * nx);
    for (int64_t k = 0; k < (int64_t)ny * nx; ++k) {
        planes[(size_t)k] = (float)state.xi.v[(size_t)k];
        planes[(size_t)(k + (int64_t)ny * nx)] = (float)state.u.v[(size_t)k];
        planes[(size_t)(k + 2 * (int64_t)ny * nx)] = (float)state.v.v[(size_t)k];
        mask[(size_t)k] = state.mask[(size_t)k] ? 1.0f : 0.0f;
    }
    return render_planes(planes.data(), mask.data(), ny, nx, state.t, hpix, wpix, norm);
}

std::vector<double> denormalize_channel(const FrameImage& img, int channel) {
    std::vector<double> out((size_t)img.h * img.w, 0.0);
    const double lo = img.norm.lo(channel), hi = img.norm.hi(channel);
    for (size_t i = 0; i < out.size(); ++i)
        if (img.mask[i]) out[i] = (double)img.data[(size_t)channel * img.h * img.w + i] * (hi - lo) + lo;
    return out;
}

NormRanges compute_norm_ranges(const sim::CsfReader& coarse, const std::vector<int>& frame_ids) {
    if (frame_ids.empty()) throw ConfigError("norm ranges need at least one frame");
    const auto& meta = coarse.meta();
    const int64_t plane = (int64_t)meta.ny * meta.nx;
    double xi_lo = 1e300, xi_hi = -1e300, uv_mag = 0.0;
    for (int id : frame_ids) {
        const auto fr = coarse.frame(id);
        for (int64_t k = 0; k < plane; ++k) {
            if (coarse.mask()[(size_t)k] == 0.0f) continue;
            xi_lo = std::min(xi_lo, (double)fr[(size_t)k]);
            xi_hi = std::max(xi_hi, (double)fr[(size_t)k]);
            uv_mag = std::max({uv_mag, std::abs((double)fr[(size_t)(plane + k)]),
                               std::abs((double)fr[(size_t)(2 * plane + k)])});
        }
    }
    NormRanges norm;
    const double span = std::max(xi_hi - xi_lo, 1e-6);
    norm.xi = {xi_lo - 0.01 * span, xi_hi + 0.01 * span};
    const double m = std::max(uv_mag, 1e-6) * 1.01;
    norm.u = {-m, m};
    norm.v = {-m, m};
    return norm;
}

namespace {

void check_cadence(const sim::CsfReader& coarse, const sim::CsfReader& fine) {
    const double ic = coarse.meta().frame_interval();
    const double iff = fine.meta().frame_interval();
    if (std::abs(2.0 * iff - ic) > 1e-9 * std::max(1.0, ic)) {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "fine cadence %.9g s is not half the coarse cadence %.9g s; first mismatch at coarse "
                      "t=%.9g s vs fine t=%.9g s",
                      iff, ic, coarse.meta().frame_time(1), fine.meta().frame_time(2));
        throw ConfigError(buf);
    }
}

SamplePair build_one_pair(const sim::CsfReader& coarse, const sim::CsfReader& fine, int hpix, int wpix,
                          const NormRanges& norm, int n) {
    const auto& cm = coarse.meta();
    const auto& fm = fine.meta();
    SamplePair s;
    s.id = n;
    s.h = hpix;
    s.w = wpix;
    s.t0 = cm.frame_time(n);
    s.t1 = cm.frame_time(n + 1);
    const int64_t npix = (int64_t)hpix * wpix;
    s.lr.resize((size_t)(2 * 3 * npix));
    s.hr.resize((size_t)(3 * 3 * npix));
    s.mask.assign((size_t)npix, 1);

    for (int k = 0; k < 2; ++k) {
        const auto planes = coarse.frame(n + k);
        FrameImage img = render_planes(planes.data(), coarse.mask().data(), cm.ny, cm.nx, cm.frame_time(n + k),
                                       hpix, wpix, norm);
        std::copy(img.data.begin(), img.data.end(), s.lr.begin() + (size_t)k * 3 * npix);
        for (int64_t i = 0; i < npix; ++i) s.mask[(size_t)i] &= img.mask[(size_t)i];
    }
    for (int k = 0; k < 3; ++k) {
        const auto planes = fine.frame(2 * n + k);
        FrameImage img = render_planes(planes.data(), fine.mask().data(), fm.ny, fm.nx, fm.frame_time(2 * n + k),
                                       hpix, wpix, norm);
        std::copy(img.data.begin(), img.data.end(), s.hr.begin() + (size_t)k * 3 * npix);
        for (int64_t i = 0; i < npix; ++i) s.mask[(size_t)i] &= img.mask[(size_t)i];
    }
    // shared mask: re-zero any pixel that is land in either series
    for (int64_t p = 0; p < 5 * 3 * npix; ++p) {
        float* dst = p < 2 * 3 * npix ? &s.lr[(size_t)p] : &s.hr[(size_t)(p - 2 * 3 * npix)];
        if (!s.mask[(size_t)(p % npix)]) *dst = 0.0f;
    }
    return s;
}

}  // namespace

std::vector<SamplePair> build_pairs(const sim::CsfReader& coarse, const sim::CsfReader& fine, int hpix,
                                    int wpix, const NormRanges& norm) {
    check_cadence(coarse, fine);
    const int n_pairs = std::min(coarse.meta().frame_count - 1, (fine.meta().frame_count - 1) / 2);
    std::vector<SamplePair> out;
    out.reserve((size_t)std::max(n_pairs, 0));
    for (int n = 0; n < n_pairs; ++n) out.push_back(build_one_pair(coarse, fine, hpix, wpix, norm, n));
    return out;
}

SamplePair crop_patch(const SamplePair& sample, int size, Rng& rng) {
    if (sample.h < size || sample.w < size) throw ConfigError("crop_patch: patch larger than the frame");
    const int ri = sample.h - size + 1, rj = sample.w - size + 1;
    auto window_has_water = [&](int i0, int j0) {
        for (int i = 0; i < size; ++i)
            for (int j = 0; j < size; ++j)
                if (sample.mask[(size_t)(i0 + i) * sample.w + (j0 + j)]) return true;
        return false;
    };
    int i0 = -1, j0 = -1;
    for (int attempt = 0; attempt < 64; ++attempt) {
        const int ci = (int)rng.below((uint64_t)ri), cj = (int)rng.below((uint64_t)rj);
        if (window_has_water(ci, cj)) {
            i0 = ci;
            j0 = cj;
            break;
        }
    }
    if (i0 < 0) {  // deterministic fallback scan
        for (int ci = 0; ci < ri && i0 < 0; ++ci)
            for (int cj = 0; cj < rj; ++cj)
                if (window_has_water(ci, cj)) {
                    i0 = ci;
                    j0 = cj;
                    break;
                }
        if (i0 < 0) throw ConfigError("crop_patch: no window contains water");
    }

    SamplePair out;
    out.id = sample.id;
    out.h = out.w = size;
    out.t0 = sample.t0;
    out.t1 = sample.t1;
    out.lr.resize((size_t)2 * 3 * size * size);
    out.hr.resize((size_t)3 * 3 * size * size);
    out.mask.resize((size_t)size * size);
    auto copy_plane = [&](const float* src, float* dst) {
        for (int i = 0; i < size; ++i)
            std::copy_n(src + (size_t)(i0 + i) * sample.w + j0, size, dst + (size_t)i * size);
    };
    for (int p = 0; p < 6; ++p)
        copy_plane(sample.lr.data() + (size_t)p * sample.h * sample.w, out.lr.data() + (size_t)p * size * size);
    for (int p = 0; p < 9; ++p)
        copy_plane(sample.hr.data() + (size_t)p * sample.h * sample.w, out.hr.data() + (size_t)p * size * size);
    for (int i = 0; i < size; ++i)
        std::copy_n(sample.mask.data() + (size_t)(i0 + i) * sample.w + j0, size,
                    out.mask.data() + (size_t)i * size);
    return out;
}

AugmentFlags draw_augment(Rng& rng) {
    AugmentFlags f;
    f.hflip = rng.coin();
    f.vflip = rng.coin();
    f.rot90 = (int)rng.below(4);
    f.time_reverse = rng.coin();
    return f;
}

namespace {

// value map for mirrored velocity components in normalized space
inline float mirror(float v) { return 1.0f - v; }

void hflip_plane(const float* src, float* dst, int h, int w, bool negate) {
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const float v = src[(size_t)i * w + (w - 1 - j)];
            dst[(size_t)i * w + j] = negate ? mirror(v) : v;
        }
}

void vflip_plane(const float* src, float* dst, int h, int w, bool negate) {
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const float v = src[(size_t)(h - 1 - i) * w + j];
            dst[(size_t)i * w + j] = negate ? mirror(v) : v;
        }
}

// one counter-clockwise quarter turn of a square [3,s,s] frame with the
// velocity channel permutation U' = -V, V' = U
void rot90_frame(const float* src, float* dst, int s) {
    const int64_t plane = (int64_t)s * s;
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) {
            const int64_t d = (int64_t)j * s + (s - 1 - i);
            dst[(size_t)d] = mirror(src[(size_t)(plane + i * s + j)]);            // U' = -V
            dst[(size_t)(plane + d)] = src[(size_t)(i * s + j)];                  // V' = U
            dst[(size_t)(2 * plane + d)] = src[(size_t)(2 * plane + i * s + j)];  // xi
        }
}

void rot90_mask(const uint8_t* src, uint8_t* dst, int s) {
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < s; ++j) dst[(size_t)j * s + (s - 1 - i)] = src[(size_t)i * s + j];
}

}  // namespace

SamplePair apply_augment(const SamplePair& sample, const AugmentFlags& flags) {
    if (flags.rot90 % 4 != 0 && sample.h != sample.w)
        throw ConfigError("augment: rotations need a square patch");
    SamplePair cur = sample;
    const int h = sample.h, w = sample.w;
    const int64_t plane = (int64_t)h * w;

    auto for_each_frame = [&](auto&& fn) {
        for (int f = 0; f < 2; ++f) fn(cur.lr.data() + (size_t)f * 3 * plane);
        for (int f = 0; f < 3; ++f) fn(cur.hr.data() + (size_t)f * 3 * plane);
    };

    if (flags.hflip) {
        SamplePair next = cur;
        float* outs[5] = {next.lr.data(), next.lr.data() + 3 * plane, next.hr.data(),
                          next.hr.data() + 3 * plane, next.hr.data() + 6 * plane};
        int fi = 0;
        for_each_frame([&](float* frame) {
            for (int c = 0; c < 3; ++c)
                hflip_plane(frame + (size_t)c * plane, outs[fi] + (size_t)c * plane, h, w, c == 0);
            ++fi;
        });
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                next.mask[(size_t)i * w + j] = cur.mask[(size_t)i * w + (w - 1 - j)];
        cur = std::move(next);
    }
    if (flags.vflip) {
        SamplePair next = cur;
        float* outs[5] = {next.lr.data(), next.lr.data() + 3 * plane, next.hr.data(),
                          next.hr.data() + 3 * plane, next.hr.data() + 6 * plane};
        int fi = 0;
        for_each_frame([&](float* frame) {
            for (int c = 0; c < 3; ++c)
                vflip_plane(frame + (size_t)c * plane, outs[fi] + (size_t)c * plane, h, w, c == 1);
            ++fi;
        });
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                next.mask[(size_t)i * w + j] = cur.mask[(size_t)(h - 1 - i) * w + j];
        cur = std::move(next);
    }
    for (int r = 0; r < flags.rot90 % 4; ++r) {
        SamplePair next = cur;
        float* outs[5] = {next.lr.data(), next.lr.data() + 3 * plane, next.hr.data(),
                          next.hr.data() + 3 * plane, next.hr.data() + 6 * plane};
        int fi = 0;
        for_each_frame([&](float* frame) {
            rot90_frame(frame, outs[fi], h);
            ++fi;
        });
        rot90_mask(cur.mask.data(), next.mask.data(), h);
        cur = std::move(next);
    }
    if (flags.time_reverse) {
        for (int64_t i = 0; i < 3 * plane; ++i)
            std::swap(cur.lr[(size_t)i], cur.lr[(size_t)(3 * plane + i)]);
        for (int64_t i = 0; i < 3 * plane; ++i)
            std::swap(cur.hr[(size_t)i], cur.hr[(size_t)(6 * plane + i)]);
    }
    // land pixels stay exactly zero under the value mirror
    for (int64_t p = 0; p < 5 * 3 * plane; ++p) {
        float* dst = p < 2 * 3 * plane ? &cur.lr[(size_t)p] : &cur.hr[(size_t)(p - 2 * 3 * plane)];
        if (!cur.mask[(size_t)(p % plane)]) *dst = 0.0f;
    }
    return cur;
}

DatasetManifest make_dataset(const std::string& coarse_dir, const std::string& fine_dir,
                             const std::string& out_dir, int patch, std::array<double, 3> ratios,
                             uint64_t seed) {
    sim::CsfReader coarse(coarse_dir), fine(fine_dir);
    check_cadence(coarse, fine);
    const double rsum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(rsum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    const int n = std::min(coarse.meta().frame_count - 1, (fine.meta().frame_count - 1) / 2);
    if (n < 1) throw ConfigError("not enough aligned frames to build any sample pair");

    DatasetManifest m;
    m.seed = seed;
    m.patch = patch;
    m.h = fine.meta().ny;
    m.w = fine.meta().nx;
    m.split_ratios = ratios;
    m.coarse_dir = coarse_dir;
    m.fine_dir = fine_dir;

    std::vector<int> ids(n);
    for (int i = 0; i < n; ++i) ids[(size_t)i] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(ids[(size_t)i], ids[(size_t)rng.below((uint64_t)i + 1)]);
    int n_train = (int)std::llround(ratios[0] * n);
    int n_val = (int)std::llround(ratios[1] * n);
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    m.train.assign(ids.begin(), ids.begin() + n_train);
    m.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    m.test.assign(ids.begin() + n_train + n_val, ids.end());
    std::sort(m.train.begin(), m.train.end());
    std::sort(m.val.begin(), m.val.end());
    std::sort(m.test.begin(), m.test.end());

    std::vector<int> norm_frames;
    for (int id : m.train) {
        norm_frames.push_back(id);
        norm_frames.push_back(id + 1);
    }
    std::sort(norm_frames.begin(), norm_frames.end());
    norm_frames.erase(std::unique(norm_frames.begin(), norm_frames.end()), norm_frames.end());
    m.norm = compute_norm_ranges(coarse, norm_frames);

    fs::create_directories(out_dir + "/samples");
    for (int id = 0; id < n; ++id) {
        const SamplePair s = build_one_pair(coarse, fine, m.h, m.w, m.norm, id);
        std::ofstream f(out_dir + "/samples/" + sample_name(id), std::ios::binary);
        if (!f) throw ConfigError("cannot write sample " + std::to_string(id));
        f.write(reinterpret_cast<const char*>(s.lr.data()), (std::streamsize)(s.lr.size() * 4));
        f.write(reinterpret_cast<const char*>(s.hr.data()), (std::streamsize)(s.hr.size() * 4));
        std::vector<float> maskf(s.mask.begin(), s.mask.end());
        f.write(reinterpret_cast<const char*>(maskf.data()), (std::streamsize)(maskf.size() * 4));
    }

    json j = {{"seed", seed},
              {"patch", patch},
              {"pix", {m.h, m.w}},
              {"split_ratios", {ratios[0], ratios[1], ratios[2]}},
              {"train", m.train},
              {"val", m.val},
              {"test", m.test},
              {"norm_ranges",
               {{"u", {m.norm.u[0], m.norm.u[1]}},
                {"v", {m.norm.v[0], m.norm.v[1]}},
                {"xi", {m.norm.xi[0], m.norm.xi[1]}}}},
              {"coarse", coarse_dir},
              {"fine", fine_dir},
              {"augmentation", {{"flips", true}, {"rotations", true}, {"frame_reversal", true}}}};
    std::ofstream mf(out_dir + "/manifest.json");
    mf << j.dump(2) << "\n";
    return m;
}

DatasetManifest load_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw ConfigError("missing manifest.json in " + dir);
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("malformed manifest.json in " + dir);
    DatasetManifest m;
    m.seed = j.at("seed");
    m.patch = j.at("patch");
    m.h = j.at("pix")[0];
    m.w = j.at("pix")[1];
    for (int i = 0; i < 3; ++i) m.split_ratios[(size_t)i] = j.at("split_ratios")[(size_t)i];
    m.train = j.at("train").get<std::vector<int>>();
    m.val = j.at("val").get<std::vector<int>>();
    m.test = j.at("test").get<std::vector<int>>();
    m.norm.u = {j.at("norm_ranges").at("u")[0], j.at("norm_ranges").at("u")[1]};
    m.norm.v = {j.at("norm_ranges").at("v")[0], j.at("norm_ranges").at("v")[1]};
    m.norm.xi = {j.at("norm_ranges").at("xi")[0], j.at("norm_ranges").at("xi")[1]};
    m.coarse_dir = j.value("coarse", "");
    m.fine_dir = j.value("fine", "");
    return m;
}

SamplePair load_sample(const std::string& dir, const DatasetManifest& m, int id) {
    std::ifstream f(dir + "/samples/" + sample_name(id), std::ios::binary);
    if (!f) throw ConfigError("missing sample " + std::to_string(id) + " in " + dir);
    SamplePair s;
    s.id = id;
    s.h = m.h;
    s.w = m.w;
    const int64_t plane = (int64_t)m.h * m.w;
    s.lr.resize((size_t)(6 * plane));
    s.hr.resize((size_t)(9 * plane));
    std::vector<float> maskf((size_t)plane);
    f.read(reinterpret_cast<char*>(s.lr.data()), (std::streamsize)(s.lr.size() * 4));
    f.read(reinterpret_cast<char*>(s.hr.data()), (std::streamsize)(s.hr.size() * 4));
    f.read(reinterpret_cast<char*>(maskf.data()), (std::streamsize)(maskf.size() * 4));
    if (!f) throw ConfigError("truncated sample file " + std::to_string(id));
    s.mask.resize((size_t)plane);
    for (int64_t i = 0; i < plane; ++i) s.mask[(size_t)i] = maskf[(size_t)i] != 0.0f ? 1 : 0;
    return s;
}

void export_frame_pngs(const std::string& prefix, const float* chw, const uint8_t* mask, int h, int w) {
    const int64_t plane = (int64_t)h * w;
    const char* names[3] = {"_u.png", "_v.png", "_xi.png"};
    std::vector<uint8_t> rgb((size_t)(3 * plane));
    for (int c = 0; c < 3; ++c) {
        std::vector<uint8_t> gray((size_t)plane);
        for (int64_t i = 0; i < plane; ++i) {
            const float v = mask && !mask[(size_t)i] ? 0.0f : chw[(size_t)(c * plane + i)];
            gray[(size_t)i] = (uint8_t)std::lround(255.0 * std::clamp((double)v, 0.0, 1.0));
            rgb[(size_t)(3 * i + c)] = gray[(size_t)i];
        }
        write_png_gray(prefix + names[c], gray, h, w);
    }
    write_png_rgb(prefix + "_rgb.png", rgb, h, w);
}

}  // namespace coastal::data
