#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "coastal/data/dataset.hpp"
#include "coastal/data/png_io.hpp"
#include "coastal/errors.hpp"

using namespace coastal;
namespace fs = std::filesystem;

namespace {

sim::SimState flat_state(int ny, int nx, double xi, double u, double v) {
    sim::SimState s;
    s.xi = sim::Field(ny, nx, xi);
    s.u = sim::Field(ny, nx, u);
    s.v = sim::Field(ny, nx, v);
    s.h_b = sim::Field(ny, nx, 2.0);
    s.mask.assign((size_t)ny * nx, 1);
    return s;
}

data::NormRanges simple_norm() {
    data::NormRanges n;
    n.u = {-1.0, 1.0};
    n.v = {-1.0, 1.0};
    n.xi = {-0.5, 0.5};
    return n;
}

/// A tiny synthetic pair with distinct plane values for augmentation checks.
data::SamplePair make_sample(int h, int w, uint64_t seed = 5) {
    data::SamplePair s;
    s.id = 0;
    s.h = h;
    s.w = w;
    Rng rng(seed);
    s.lr.resize((size_t)2 * 3 * h * w);
    s.hr.resize((size_t)3 * 3 * h * w);
    s.mask.assign((size_t)h * w, 1);
    for (auto& x : s.lr) x = (float)rng.uniform(0.05, 0.95);
    for (auto& x : s.hr) x = (float)rng.uniform(0.05, 0.95);
    return s;
}

bool same(const data::SamplePair& a, const data::SamplePair& b) {
    return a.lr == b.lr && a.hr == b.hr && a.mask == b.mask;
}

void write_tiny_csf(const std::string& dir, int ny, int nx, double dt, int stride, int n_frames) {
    sim::SimConfig cfg;
    cfg.basin = "tidal-bay";
    cfg.nx = nx;
    cfg.ny = ny;
    cfg.dx = cfg.dy = 100.0;
    cfg.dt = dt;
    cfg.output_stride = stride;
    std::vector<sim::SimState> frames;
    for (int k = 0; k < n_frames; ++k) {
        auto s = flat_state(ny, nx, 0.01 * k, 0.1 * k, -0.05 * k);
        s.t = k * dt * stride;
        frames.push_back(s);
    }
    sim::write_csf(dir, cfg, frames, 0);
}

}  // namespace

TEST_CASE("render endpoints and mask contract") {
    const auto norm = simple_norm();
    // all channels at their range minimum -> all pixels 0
    auto lo = flat_state(4, 4, norm.xi[0], norm.u[0], norm.v[0]);
    auto img = data::render(lo, 4, 4, norm);
    for (float v : img.data) CHECK(v == 0.0f);
    // all channels at the maximum -> all pixels 1
    auto hi = flat_state(4, 4, norm.xi[1], norm.u[1], norm.v[1]);
    img = data::render(hi, 4, 4, norm);
    for (float v : img.data) CHECK(v == 1.0f);

    // checkerboard mask: exactly the land pixels are zero
    auto st = flat_state(6, 6, 0.2, 0.3, 0.1);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) st.mask[(size_t)i * 6 + j] = (i + j) % 2;
    img = data::render(st, 6, 6, norm);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            const bool water = (i + j) % 2;
            CHECK(img.mask[(size_t)i * 6 + j] == (water ? 1 : 0));
            for (int c = 0; c < 3; ++c) {
                const float v = img.data[((size_t)c * 6 + i) * 6 + j];
                if (water)
                    CHECK(v > 0.0f);
                else
                    CHECK(v == 0.0f);
            }
        }

    data::NormRanges bad = norm;
    bad.xi = {0.5, 0.5};
    CHECK_THROWS_AS(data::render(st, 6, 6, bad), ConfigError);
}

TEST_CASE("render/denormalize round trip on the float path") {
    data::NormRanges norm;
    norm.u = {-1.5, 1.5};
    norm.v = {-1.5, 1.5};
    norm.xi = {-0.4, 0.6};
    sim::SimState st = flat_state(8, 8, 0, 0, 0);
    Rng rng(3);
    for (auto& v : st.xi.v) v = rng.uniform(-0.3, 0.5);
    for (auto& v : st.u.v) v = rng.uniform(-1.2, 1.2);
    for (auto& v : st.v.v) v = rng.uniform(-1.2, 1.2);
    // same pixel lattice as the grid -> sampling is the identity
    const auto img = data::render(st, 8, 8, norm);
    const auto xi = data::denormalize_channel(img, 2);
    const auto u = data::denormalize_channel(img, 0);
    for (int k = 0; k < 64; ++k) {
        CHECK(std::abs(xi[(size_t)k] - st.xi.v[(size_t)k]) <= 1e-6);
        CHECK(std::abs(u[(size_t)k] - st.u.v[(size_t)k]) <= 1e-6);
    }
    // 8-bit export path: quantization error bounded by (hi-lo)/255
    for (int k = 0; k < 64; ++k) {
        const float x = img.data[(size_t)(2 * 64 + k)];
        const double q = std::lround(255.0 * x) / 255.0;
        const double back = q * (norm.xi[1] - norm.xi[0]) + norm.xi[0];
        CHECK(std::abs(back - st.xi.v[(size_t)k]) <= (norm.xi[1] - norm.xi[0]) / 255.0);
    }
}

TEST_CASE("build_pairs counting, alignment and cadence errors") {
    const auto base = fs::temp_directory_path() / "coastal_pairs_test";
    fs::remove_all(base);
    const std::string cdir = (base / "coarse").string(), fdir = (base / "fine").string();
    const int F = 5;
    write_tiny_csf(cdir, 8, 8, 40.0, 1, F);
    write_tiny_csf(fdir, 16, 16, 20.0, 1, 2 * F - 1);

    sim::CsfReader coarse(cdir), fine(fdir);
    const auto pairs = data::build_pairs(coarse, fine, 16, 16, simple_norm());
    CHECK(pairs.size() == F - 1);
    for (size_t n = 0; n < pairs.size(); ++n) {
        CHECK(pairs[n].t0 == doctest::Approx(40.0 * n));
        CHECK(pairs[n].t1 == doctest::Approx(40.0 * (n + 1)));
    }

    // wrong cadence: fine interval not half the coarse interval
    const std::string bad = (base / "bad").string();
    write_tiny_csf(bad, 16, 16, 30.0, 1, 2 * F - 1);
    sim::CsfReader badr(bad);
    CHECK_THROWS_WITH_AS(data::build_pairs(coarse, badr, 16, 16, simple_norm()),
                         doctest::Contains("cadence"), ConfigError);
    fs::remove_all(base);
}

TEST_CASE("crop_patch: identity, determinism, all-land error") {
    auto s = make_sample(8, 8);
    Rng rng(1);
    auto c = data::crop_patch(s, 8, rng);
    CHECK(same(c, s));  // single valid window

    auto s2 = make_sample(16, 16);
    Rng r1(42), r2(42);
    auto a = data::crop_patch(s2, 8, r1);
    auto b = data::crop_patch(s2, 8, r2);
    CHECK(same(a, b));
    CHECK(a.h == 8);
    CHECK(a.w == 8);

    auto land = make_sample(8, 8);
    std::fill(land.mask.begin(), land.mask.end(), 0);
    Rng r3(7);
    CHECK_THROWS_AS(data::crop_patch(land, 4, r3), ConfigError);
}

TEST_CASE("crop avoids all-land windows when water exists") {
    auto s = make_sample(16, 16);
    // water only in the top-left 8x8 corner
    std::fill(s.mask.begin(), s.mask.end(), 0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) s.mask[(size_t)i * 16 + j] = 1;
    Rng rng(9);
    for (int k = 0; k < 20; ++k) {
        auto c = data::crop_patch(s, 8, rng);
        int water = 0;
        for (auto m : c.mask) water += m;
        CHECK(water > 0);
    }
}

TEST_CASE("augmentations are involutions / invertible") {
    const auto s = make_sample(8, 8);

    data::AugmentFlags none;
    CHECK(same(data::apply_augment(s, none), s));

    data::AugmentFlags tr;
    tr.time_reverse = true;
    CHECK(same(data::apply_augment(data::apply_augment(s, tr), tr), s));

    data::AugmentFlags hf;
    hf.hflip = true;
    CHECK(same(data::apply_augment(data::apply_augment(s, hf), hf), s));

    data::AugmentFlags vf;
    vf.vflip = true;
    CHECK(same(data::apply_augment(data::apply_augment(s, vf), vf), s));

    for (int k = 1; k < 4; ++k) {
        data::AugmentFlags r, rinv;
        r.rot90 = k;
        rinv.rot90 = 4 - k;
        CHECK(same(data::apply_augment(data::apply_augment(s, r), rinv), s));
    }

    // full rotation is the identity
    data::AugmentFlags r4;
    r4.rot90 = 4;
    CHECK(same(data::apply_augment(s, r4), s));

    // rotations on a non-square patch are rejected
    auto rect = make_sample(8, 16);
    data::AugmentFlags r1;
    r1.rot90 = 1;
    CHECK_THROWS_AS(data::apply_augment(rect, r1), ConfigError);
}

TEST_CASE("h-flip mirrors the U channel about the normalized mid-range") {
    auto s = make_sample(4, 4);
    data::AugmentFlags hf;
    hf.hflip = true;
    const auto f = data::apply_augment(s, hf);
    const int plane = 16;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            // U (channel 0): mirrored and value-flipped; xi (channel 2): mirrored only
            CHECK(f.lr[(size_t)(i * 4 + j)] ==
                  doctest::Approx(1.0f - s.lr[(size_t)(i * 4 + (3 - j))]));
            CHECK(f.lr[(size_t)(2 * plane + i * 4 + j)] ==
                  doctest::Approx(s.lr[(size_t)(2 * plane + i * 4 + (3 - j))]));
        }
}

TEST_CASE("augmented land pixels stay zero") {
    auto s = make_sample(8, 8);
    for (int i = 0; i < 8; ++i) s.mask[(size_t)i * 8 + 3] = 0;
    const int plane = 64;
    for (size_t p = 0; p < s.lr.size(); ++p)
        if (!s.mask[p % plane]) s.lr[p] = 0.0f;
    for (size_t p = 0; p < s.hr.size(); ++p)
        if (!s.mask[p % plane]) s.hr[p] = 0.0f;
    Rng rng(13);
    for (int k = 0; k < 10; ++k) {
        const auto a = data::augment(s, rng);
        for (size_t p = 0; p < a.lr.size(); ++p)
            if (!a.mask[p % plane]) CHECK(a.lr[p] == 0.0f);
    }
}

TEST_CASE("make_dataset splits, manifest round trip and sample io") {
    const auto base = fs::temp_directory_path() / "coastal_ds_test";
    fs::remove_all(base);
    const std::string cdir = (base / "coarse").string(), fdir = (base / "fine").string();
    const int F = 21;
    write_tiny_csf(cdir, 8, 8, 40.0, 1, F);
    write_tiny_csf(fdir, 16, 16, 20.0, 1, 2 * F - 1);
    const std::string out = (base / "ds").string();
    const auto m = data::make_dataset(cdir, fdir, out, 8, {0.6, 0.2, 0.2}, 99);

    const int n = F - 1;
    CHECK(m.total() == n);
    CHECK(std::abs((int)m.train.size() - (int)std::llround(0.6 * n)) <= 1);
    CHECK(std::abs((int)m.val.size() - (int)std::llround(0.2 * n)) <= 1);
    CHECK(std::abs((int)m.test.size() - (int)std::llround(0.2 * n)) <= 1);

    std::vector<int> all;
    for (auto* split : {&m.train, &m.val, &m.test}) all.insert(all.end(), split->begin(), split->end());
    std::sort(all.begin(), all.end());
    for (int i = 0; i < n; ++i) CHECK(all[(size_t)i] == i);  // disjoint and complete

    const auto loaded = data::load_manifest(out);
    CHECK(loaded.train == m.train);
    CHECK(loaded.val == m.val);
    CHECK(loaded.test == m.test);
    CHECK(loaded.norm.u[0] == doctest::Approx(m.norm.u[0]));
    CHECK(loaded.norm.u[0] == -loaded.norm.u[1]);  // symmetric velocity range
    CHECK(loaded.norm.v == loaded.norm.u);

    const auto s = data::load_sample(out, loaded, 3);
    CHECK(s.h == 16);
    CHECK(s.lr.size() == (size_t)(2 * 3 * 16 * 16));
    for (float v : s.hr) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    // determinism: building again yields an identical manifest file
    const std::string out2 = (base / "ds2").string();
    data::make_dataset(cdir, fdir, out2, 8, {0.6, 0.2, 0.2}, 99);
    std::ifstream f1(out + "/manifest.json"), f2(out2 + "/manifest.json");
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
    fs::remove_all(base);
}

TEST_CASE("png export writes valid files") {
    const auto base = fs::temp_directory_path() / "coastal_png_test";
    fs::remove_all(base);
    fs::create_directories(base);
    auto s = make_sample(8, 8);
    data::export_frame_pngs((base / "frame").string(), s.lr.data(), s.mask.data(), 8, 8);
    for (const char* name : {"frame_u.png", "frame_v.png", "frame_xi.png", "frame_rgb.png"}) {
        std::ifstream f(base / name, std::ios::binary);
        REQUIRE(f.good());
        unsigned char sig[8];
        f.read(reinterpret_cast<char*>(sig), 8);
        CHECK(sig[0] == 0x89);
        CHECK(sig[1] == 'P');
    }
    fs::remove_all(base);
}
