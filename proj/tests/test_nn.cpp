#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coastal/nn/ops.hpp"
#include "gradcheck.hpp"

using namespace coastal;
using nn::Node;
using nn::Shape;
using nn::Tape;
using nn::Tensor;
using Td = Tensor<double>;

namespace {

Td rand_t(Shape s, uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    return Td::random_uniform(std::move(s), rng, lo, hi);
}

/// scalar head used to reduce any output to a checkable root: sum(y * probe)
Node<double>* probe_sum(Node<double>* y, uint64_t seed) {
    return nn::sum_all(nn::mul_const(y, rand_t(y->val.shape, seed, 0.1, 1.0)));
}

}  // namespace

TEST_CASE("elementwise and reduction gradients") {
    auto a = rand_t({3, 4}, 1), b = rand_t({3, 4}, 2);
    auto res = gradcheck::check(
        [](Tape<double>& t, const std::vector<Node<double>*>& l) {
            (void)t;
            auto* s = nn::add(nn::mul(l[0], l[1]), nn::sub(l[0], nn::scale(l[1], 0.7)));
            return probe_sum(nn::square(s), 11);
        },
        {a, b}, 60, 5);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("unary op gradients") {
    // inputs kept away from the |x| and relu kinks
    auto a = rand_t({40}, 3, 0.2, 1.4);
    for (auto kind : {0, 1, 2, 3, 4, 5}) {
        auto res = gradcheck::check(
            [kind](Tape<double>&, const std::vector<Node<double>*>& l) {
                Node<double>* y = nullptr;
                switch (kind) {
                    case 0: y = nn::abs_(l[0]); break;
                    case 1: y = nn::sigmoid(l[0]); break;
                    case 2: y = nn::relu(l[0]); break;
                    case 3: y = nn::gelu(l[0]); break;
                    case 4: y = nn::cos_(l[0]); break;
                    default: y = nn::sin_(l[0]); break;
                }
                return probe_sum(y, 13);
            },
            {a}, 40, 7);
        CAPTURE(kind);
        CHECK(res.max_rel_err < 1e-6);
    }
}

TEST_CASE("abs sign handling on negatives") {
    auto a = rand_t({30}, 4, -1.5, -0.2);
    auto res = gradcheck::check(
        [](Tape<double>&, const std::vector<Node<double>*>& l) { return probe_sum(nn::abs_(l[0]), 17); },
        {a}, 30, 9);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("structure op gradients: slice/stack/concat/gather/diff/broadcast") {
    auto a = rand_t({2, 3, 4}, 5), b = rand_t({3, 4}, 6), p = rand_t({3, 4}, 7);
    auto idx = std::make_shared<const std::vector<int64_t>>([] {
        std::vector<int64_t> v(24);
        for (int i = 0; i < 24; ++i) v[(size_t)i] = (i * 7) % 24;  // a permutation
        return v;
    }());
    auto res = gradcheck::check(
        [idx](Tape<double>&, const std::vector<Node<double>*>& l) {
            auto* s0 = nn::slice0(l[0], 0);
            auto* s1 = nn::slice0(l[0], 1);
            auto* st = nn::stack0<double>({s0, nn::add(s1, l[1])});
            auto* g = nn::gather(st, idx, {4, 3, 2});
            auto* d = nn::diff_along(nn::add_broadcast0(l[0], l[2]), 2);
            auto* c = nn::concat0(nn::slice0_range(l[0], 0, 1), nn::slice0_range(l[0], 1, 2));
            return nn::add(nn::add(probe_sum(g, 19), probe_sum(d, 23)), probe_sum(c, 29));
        },
        {a, b, p}, 80, 11);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("linear and bmm gradients") {
    auto x = rand_t({2, 5, 4}, 8), w = rand_t({4, 6}, 9), bias = rand_t({6}, 10);
    auto bm = rand_t({2, 6, 3}, 11), bt = rand_t({2, 3, 6}, 12);
    auto res = gradcheck::check(
        [](Tape<double>&, const std::vector<Node<double>*>& l) {
            auto* y = nn::linear(l[0], l[1], l[2]);  // [2,5,6]
            auto* z = nn::bmm(y, l[3]);              // [2,5,3]
            auto* zt = nn::bmm(y, l[4], true);       // [2,5,3]
            return nn::add(probe_sum(z, 31), probe_sum(zt, 37));
        },
        {x, w, bias, bm, bt}, 100, 13);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("layer_norm matches finite differences and normalizes rows") {
    auto x = rand_t({6, 8}, 14), g = rand_t({8}, 15, 0.5, 1.5), b = rand_t({8}, 16);
    {
        Tape<double> t;
        auto* n = nn::layer_norm(t.leaf(x, false), t.leaf(g, false), t.leaf(b, false));
        // rows of (y - beta) / gamma have zero mean and unit variance
        for (int r = 0; r < 6; ++r) {
            double mean = 0, var = 0;
            for (int c = 0; c < 8; ++c) {
                const double xh = (n->val.v[(size_t)(r * 8 + c)] - b.v[(size_t)c]) / g.v[(size_t)c];
                mean += xh;
                var += xh * xh;
            }
            mean /= 8;
            var = var / 8 - mean * mean;
            CHECK(std::abs(mean) < 1e-12);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps in the denominator
        }
    }
    auto res = gradcheck::check(
        [](Tape<double>&, const std::vector<Node<double>*>& l) {
            return probe_sum(nn::layer_norm(l[0], l[1], l[2]), 41);
        },
        {x, g, b}, 80, 17);
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("softmax rows sum to one and gradients check") {
    auto x = rand_t({5, 7}, 18, -2, 2);
    {
        Tape<double> t;
        auto* s = nn::softmax_last(t.leaf(x, false));
        for (int r = 0; r < 5; ++r) {
            double sum = 0;
            for (int c = 0; c < 7; ++c) sum += s->val.v[(size_t)(r * 7 + c)];
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
        }
    }
    auto res = gradcheck::check(
        [](Tape<double>&, const std::vector<Node<double>*>& l) {
            return probe_sum(nn::softmax_last(l[0]), 43);
        },
        {x}, 50, 19);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("conv2d forward matches a naive reference") {
    const int Ci = 3, H = 5, W = 6, Co = 4, k = 3, pad = 1;
    auto x = rand_t({Ci, H, W}, 20), w = rand_t({Co, Ci, k, k}, 21), b = rand_t({Co}, 22);
    Tape<double> t;
    auto* y = nn::conv2d(t.leaf(x, false), t.leaf(w, false), t.leaf(b, false), pad);
    REQUIRE(y->val.shape == Shape({Co, H, W}));
    for (int co = 0; co < Co; ++co)
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                double acc = b.v[(size_t)co];
                for (int ci = 0; ci < Ci; ++ci)
                    for (int di = 0; di < k; ++di)
                        for (int dj = 0; dj < k; ++dj) {
                            const int si = i + di - pad, sj = j + dj - pad;
                            if (si < 0 || si >= H || sj < 0 || sj >= W) continue;
                            acc += x.v[(size_t)((ci * H + si) * W + sj)] *
                                   w.v[(size_t)(((co * Ci + ci) * k + di) * k + dj)];
                        }
                CHECK(y->val.v[(size_t)((co * H + i) * W + j)] == doctest::Approx(acc).epsilon(1e-12));
            }
}

TEST_CASE("conv2d gradients (3x3 and 1x1)") {
    auto x = rand_t({2, 4, 5}, 23), w3 = rand_t({3, 2, 3, 3}, 24), b3 = rand_t({3}, 25);
    auto w1 = rand_t({4, 3, 1, 1}, 26), b1 = rand_t({4}, 27);
    auto res = gradcheck::check(
        [](Tape<double>&, const std::vector<Node<double>*>& l) {
            auto* y = nn::conv2d(l[0], l[1], l[2], 1);
            auto* z = nn::conv2d(y, l[3], l[4], 0);
            return probe_sum(z, 47);
        },
        {x, w3, b3, w1, b1}, 120, 23);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("pooling and channel scale gradients") {
    auto x = rand_t({3, 4, 4}, 28), s = rand_t({3}, 29);
    auto res = gradcheck::check(
        [](Tape<double>&, const std::vector<Node<double>*>& l) {
            auto* g = nn::global_avg_pool(l[0]);
            auto* y = nn::channel_scale(l[0], nn::sigmoid(g));
            return nn::add(probe_sum(y, 53), probe_sum(nn::channel_scale(l[0], l[1]), 59));
        },
        {x, s}, 60, 29);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("backward frees interior storage but keeps leaf gradients") {
    Tape<double> t;
    auto* x = t.leaf(rand_t({8}, 30), true);
    auto* y = nn::sum_all(nn::square(x));
    t.backward(y);
    CHECK_FALSE(x->grad.empty());
    CHECK(y->val.empty());  // interior released
}

TEST_CASE("shape mismatches throw") {
    Tape<double> t;
    auto* a = t.leaf(rand_t({3, 4}, 31), false);
    auto* b = t.leaf(rand_t({4, 3}, 32), false);
    CHECK_THROWS_AS(nn::add(a, b), ConfigError);
    CHECK_THROWS_AS(nn::bmm(a, b), ConfigError);
    CHECK_THROWS_AS(t.backward(a), ConfigError);  // non-scalar root
}
