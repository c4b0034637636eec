#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "coastal/loss/losses.hpp"
#include "coastal/model/checkpoint.hpp"
#include "coastal/model/model.hpp"
#include "gradcheck.hpp"

using namespace coastal;
using nn::Node;
using nn::Tape;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

template <class T>
Tensor<T> rand_t(nn::Shape s, uint64_t seed, T lo, T hi) {
    Rng rng(seed);
    return Tensor<T>::random_uniform(std::move(s), rng, lo, hi);
}

model::ModelConfig tiny_cfg() {
    model::ModelConfig cfg;
    cfg.feat = 8;
    cfg.n_rcab = 1;
    cfg.reduction = 4;
    cfg.window = 8;
    cfg.n_heads = 2;
    return cfg;
}

/// Zeroes every attention-side weight (qkvo, ffn, fold/unfold, positional codes).
template <class T>
void zero_attention(model::Params<T>& p) {
    for (const char* name :
         {"attn.wq.w", "attn.wq.b", "attn.wk.w", "attn.wk.b", "attn.wv.w", "attn.wv.b", "attn.wo.w",
          "attn.wo.b", "attn.ffn1.w", "attn.ffn1.b", "attn.ffn2.w", "attn.ffn2.b", "pos.h", "pos.v",
          "pos.d", "fold.w", "fold.b", "unfold.w", "unfold.b"})
        std::fill(p.at(name).v.begin(), p.at(name).v.end(), T(0));
}

}  // namespace

TEST_CASE("shuffle round trips are bit-exact permutations") {
    for (int rep = 0; rep < 5; ++rep) {
        const auto z = rand_t<float>({2, 6, 4, 10}, 100 + (uint64_t)rep, -2.f, 2.f);
        Tape<float> t;
        auto* zn = t.constant(z);
        auto* h = model::unshuffle_h(model::shuffle_h(zn), 6, 4, 10);
        auto* v = model::unshuffle_v(model::shuffle_v(zn), 6, 4, 10);
        auto* d = model::unshuffle_d(model::shuffle_d(zn), 6, 4, 10);
        CHECK(h->val.v == z.v);
        CHECK(v->val.v == z.v);
        CHECK(d->val.v == z.v);
    }
}

TEST_CASE("shuffle layout: frame values interleave along the fused axis") {
    Tensor<float> z({2, 1, 2, 3});
    for (int j = 0; j < 6; ++j) z.v[(size_t)j] = 0.0f;        // frame 0
    for (int j = 0; j < 6; ++j) z.v[(size_t)(6 + j)] = 1.0f;  // frame 1
    Tape<float> t;
    auto* f = model::shuffle_h(t.constant(z));
    REQUIRE(f->val.shape == nn::Shape({1, 2, 6}));
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 6; ++j) CHECK(f->val.v[(size_t)(i * 6 + j)] == (j % 2 ? 1.0f : 0.0f));

    auto* d = model::shuffle_d(t.constant(z));
    CHECK(d->val.shape == nn::Shape({2, 2, 3}));  // channels doubled, h/w kept

    Tensor<float> bad({3, 1, 2, 2});
    CHECK_THROWS_AS(model::shuffle_h(t.constant(bad)), ConfigError);
}

TEST_CASE("swapping the frames swaps width neighbors of the fused map") {
    const auto z = rand_t<float>({2, 3, 4, 4}, 7, -1.f, 1.f);
    Tensor<float> swapped = z;
    const int64_t block = 3 * 4 * 4;
    for (int64_t i = 0; i < block; ++i)
        std::swap(swapped.v[(size_t)i], swapped.v[(size_t)(block + i)]);
    Tape<float> t;
    auto* a = model::shuffle_h(t.constant(z));
    auto* b = model::shuffle_h(t.constant(swapped));
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const size_t even = ((size_t)c * 4 + i) * 8 + 2 * (size_t)j;
                CHECK(a->val.v[even] == b->val.v[even + 1]);
                CHECK(a->val.v[even + 1] == b->val.v[even]);
            }
}

TEST_CASE("rcab: zero conv maps zero input to zero; shapes preserved") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 3);
    std::fill(params.at("rcab0.w1.w").v.begin(), params.at("rcab0.w1.w").v.end(), 0.0f);

    Tape<float> t;
    auto bp = model::bind(t, params, false);
    auto* zero_in = t.constant(Tensor<float>({8, 16, 16}));
    auto* out = model::rcab(zero_in, bp, 0);
    CHECK(out->val.shape == nn::Shape({8, 16, 16}));
    for (float v : out->val.v) CHECK(v == 0.0f);

    // any input shape flows through
    auto* x = t.constant(rand_t<float>({8, 8, 24}, 5, -1.f, 1.f));
    CHECK(model::rcab(x, bp, 0)->val.shape == nn::Shape({8, 8, 24}));
}

TEST_CASE("rcab gate saturation reduces to body + skip") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 4);
    // push the sigmoid input far positive so the gate is 1
    std::fill(params.at("rcab0.w2b.b").v.begin(), params.at("rcab0.w2b.b").v.end(), 50.0f);

    const auto x = rand_t<float>({8, 16, 16}, 6, -1.f, 1.f);
    Tape<float> t;
    auto bp = model::bind(t, params, false);
    auto* got = model::rcab(t.constant(x), bp, 0);
    auto* body = nn::conv2d(t.constant(x), bp.at("rcab0.w1.w"), bp.at("rcab0.w1.b"), 1);
    for (int64_t i = 0; i < got->val.size(); ++i)
        CHECK(got->val.v[(size_t)i] ==
              doctest::Approx(body->val.v[(size_t)i] + x.v[(size_t)i]).epsilon(1e-5));
}

TEST_CASE("mha uniform-attention limit: output = token + mean over tokens") {
    model::ModelConfig cfg = tiny_cfg();
    cfg.feat = 4;
    cfg.n_heads = 1;
    cfg.reduction = 2;
    auto params = model::init_params<float>(cfg, 8);
    zero_attention(params);
    // W_V = W_O = I
    for (int i = 0; i < 4; ++i) {
        params.at("attn.wv.w").v[(size_t)(i * 4 + i)] = 1.0f;
        params.at("attn.wo.w").v[(size_t)(i * 4 + i)] = 1.0f;
    }
    const auto tokens = rand_t<float>({2, 5, 4}, 9, -1.f, 1.f);
    Tape<float> t;
    auto bp = model::bind(t, params, false);
    auto* y = model::mha_block(t.constant(tokens), (Node<float>*)nullptr, bp, cfg);
    REQUIRE(y->val.shape == tokens.shape);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 4; ++c) {
            float mean = 0;
            for (int l = 0; l < 5; ++l) mean += tokens.v[(size_t)((b * 5 + l) * 4 + c)];
            mean /= 5;
            for (int l = 0; l < 5; ++l) {
                const size_t i = (size_t)((b * 5 + l) * 4 + c);
                CHECK(y->val.v[i] == doctest::Approx(tokens.v[i] + mean).epsilon(1e-4));
            }
        }
}

TEST_CASE("st_attention runs at non-square fused shapes") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 10);
    Tape<float> t;
    auto bp = model::bind(t, params, false);
    const auto z = rand_t<float>({2, 8, 16, 24}, 11, 0.f, 1.f);
    auto* out = model::st_attention(t.constant(z), bp, cfg, model::Ablation{});
    CHECK(out->val.shape == z.shape);
    CHECK(nn::all_finite(out->val));
}

TEST_CASE("st_attention with zero attention weights is the identity") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 12);
    zero_attention(params);
    const auto z = rand_t<float>({2, 8, 16, 16}, 13, -1.f, 1.f);
    Tape<float> t;
    auto bp = model::bind(t, params, false);
    auto* out = model::st_attention(t.constant(z), bp, cfg, model::Ablation{});
    CHECK(out->val.v == z.v);  // exact, the permutation sandwich carries the values

    // window must divide the fused dimensions
    const auto odd = rand_t<float>({2, 8, 12, 12}, 14, -1.f, 1.f);
    CHECK_THROWS_AS(model::st_attention(t.constant(odd), bp, cfg, model::Ablation{}), ConfigError);
}

TEST_CASE("fsr with zero output conv reproduces the interpolation baseline") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 15);  // out.w is zero-initialized
    const auto x = rand_t<float>({2, 3, 16, 16}, 16, 0.f, 1.f);
    const auto y = model::predict(params, x);
    REQUIRE(y.shape == nn::Shape({3, 3, 16, 16}));
    const int64_t fr = 3 * 16 * 16;
    for (int64_t i = 0; i < fr; ++i) {
        const float a = x.v[(size_t)i], b = x.v[(size_t)(fr + i)];
        CHECK(std::abs(y.v[(size_t)i] - a) <= 1e-7f);
        CHECK(std::abs(y.v[(size_t)(fr + i)] - 0.5f * (a + b)) <= 1e-7f);
        CHECK(std::abs(y.v[(size_t)(2 * fr + i)] - b) <= 1e-7f);
    }
}

TEST_CASE("forward determinism") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 17);
    Rng rng(18);
    for (auto& t : params.values)
        for (auto& v : t.v) v += (float)rng.uniform(-0.05, 0.05);

    const auto xa = rand_t<float>({2, 3, 16, 16}, 19, 0.f, 1.f);
    const auto xb = rand_t<float>({2, 3, 16, 16}, 20, 0.f, 1.f);
    const auto ya1 = model::predict(params, xa);
    const auto ya2 = model::predict(params, xa);
    CHECK(ya1.v == ya2.v);  // bitwise

    // outputs depend only on the own sample, so batch order cannot matter
    const auto yb = model::predict(params, xb);
    const auto ya3 = model::predict(params, xa);
    CHECK(ya3.v == ya1.v);
    CHECK(yb.v != ya1.v);
}

TEST_CASE("forward rejects malformed inputs and non-finite intermediates") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 21);
    Tape<float> t;
    auto bp = model::bind(t, params, false);
    CHECK_THROWS_AS(model::forward_sample(t, bp, cfg, rand_t<float>({2, 2, 16, 16}, 22, 0.f, 1.f)),
                    ConfigError);
    Tape<float> t2;
    auto bp2 = model::bind(t2, params, false);
    auto bad = rand_t<float>({2, 3, 16, 16}, 23, 0.f, 1.f);
    bad.v[5] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(model::forward_sample(t2, bp2, cfg, bad), NumericsError);
}

TEST_CASE("ablation flags prune branches but keep shapes") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 24);
    const auto x = rand_t<float>({2, 3, 16, 16}, 25, 0.f, 1.f);
    model::Ablation none;
    none.st_attn = none.fsr = none.pos = false;
    model::Ablation axes_h;
    axes_h.axis_v = axes_h.axis_d = false;
    model::Ablation no_pos;
    no_pos.pos = false;
    for (const auto& ab : {none, axes_h, no_pos}) {
        const auto y = model::predict(params, x, ab);
        CHECK(y.shape == nn::Shape({3, 3, 16, 16}));
        CHECK(nn::all_finite(y));
    }
}

TEST_CASE("checkpoint round trip is bitwise and preserves forward outputs") {
    auto cfg = tiny_cfg();
    auto params = model::init_params<float>(cfg, 26);
    Rng rng(27);
    for (auto& t : params.values)
        for (auto& v : t.v) v += (float)rng.uniform(-0.05, 0.05);

    const auto path = (fs::temp_directory_path() / "coastal_ckpt_test.bin").string();
    model::save_checkpoint(path, params, 123);
    const auto ck = model::load_checkpoint(path);
    CHECK(ck.iteration == 123);
    CHECK(ck.params.cfg.feat == cfg.feat);
    CHECK(ck.params.names == params.names);
    for (size_t i = 0; i < params.values.size(); ++i) CHECK(ck.params.values[i].v == params.values[i].v);

    const auto x = rand_t<float>({2, 3, 16, 16}, 28, 0.f, 1.f);
    CHECK(model::predict(params, x).v == model::predict(ck.params, x).v);
    fs::remove(path);

    CHECK_THROWS_AS(model::load_checkpoint("/nonexistent/ckpt.bin"), ConfigError);
}

TEST_CASE("parameter summary reports the full-scale count") {
    model::ModelConfig full;
    full.feat = 64;
    full.n_rcab = 8;
    const auto params = model::init_params<float>(full, 0);
    const auto text = model::summarize(params);
    CHECK(text.find("total parameters:") != std::string::npos);
    CHECK(params.total_count() > 100000);
    MESSAGE("full-config parameter count: ", params.total_count());
}

TEST_CASE("analytic gradients of forward + total loss match finite differences") {
    const auto cfg = tiny_cfg();
    auto params64 = model::init_params<double>(cfg, 29);
    // randomize everything, including the zero-initialized tensors, so that
    // every parameter is probed at a generic point
    Rng rng(30);
    for (auto& t : params64.values)
        for (auto& v : t.v) v += rng.uniform(-0.08, 0.08);

    const auto x = rand_t<double>({2, 3, 16, 16}, 31, 0.0, 1.0);
    Tensor<double> mask({16, 16});
    Rng mrng(32);
    int64_t water = 0;
    for (auto& m : mask.v) water += (int64_t)(m = mrng.uniform(0.0, 1.0) < 0.85 ? 1.0 : 0.0);
    REQUIRE(water > 0);

    // ground truth offset from the prediction at the probe point keeps the
    // |.| terms away from their kinks
    Tensor<double> gt;
    {
        Tape<double> tape;
        auto bp = model::bind(tape, params64, false);
        gt = model::forward_sample(tape, bp, cfg, x)->val;
        Rng grng(33);
        for (auto& v : gt.v) {
            const double off = grng.uniform(0.05, 0.3);
            v -= grng.coin() ? off : -off;
        }
    }
    const loss::LossWeights<double> w;

    // analytic gradient
    Tape<double> tape;
    auto bp = model::bind(tape, params64, true);
    auto lb = loss::total_loss(model::forward_sample(tape, bp, cfg, x), gt, mask, w);
    tape.backward(lb.total);
    std::vector<Tensor<double>> grads;
    for (auto* n : bp.nodes) grads.push_back(n->grad.empty() ? Tensor<double>(n->val.shape) : n->grad);

    auto eval = [&](const model::Params<double>& p) {
        Tape<double> t2;
        auto b2 = model::bind(t2, p, false);
        return (double)loss::total_loss(model::forward_sample(t2, b2, cfg, x), gt, mask, w)
            .total->val.v[0];
    };

    Rng prng(34);
    const double h = 1e-6;
    double max_rel = 0;
    int probes = 0;
    model::Params<double> work = params64;
    while (probes < 220) {
        const size_t ti = (size_t)prng.below(work.values.size());
        auto& tensor = work.values[ti];
        if (tensor.size() == 0) continue;
        const size_t ei = (size_t)prng.below((uint64_t)tensor.size());
        const double orig = tensor.v[ei];
        tensor.v[ei] = orig + h;
        const double fp = eval(work);
        tensor.v[ei] = orig - h;
        const double fm = eval(work);
        tensor.v[ei] = orig;
        const double fd = (fp - fm) / (2 * h);
        max_rel = std::max(max_rel, gradcheck::rel_err(grads[ti].v[ei], fd));
        ++probes;
    }
    MESSAGE("max relative gradient error over ", probes, " parameters: ", max_rel);
    CHECK(max_rel <= 1e-3);
}
