#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "coastal/loss/losses.hpp"
#include "gradcheck.hpp"

using namespace coastal;
using nn::Node;
using nn::Tape;
using nn::Tensor;
using Td = Tensor<double>;

namespace {

Td rand_t(nn::Shape s, uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    return Td::random_uniform(std::move(s), rng, lo, hi);
}

Td full_mask(int h, int w) { return Td::full({h, w}, 1.0); }

/// ground truth offset elementwise by at least min_gap from pred
Td offset_gt(const Td& pred, uint64_t seed, double min_gap = 0.05) {
    Td gt = pred;
    Rng rng(seed);
    for (auto& v : gt.v) {
        const double off = rng.uniform(min_gap, 0.3);
        v -= rng.coin() ? off : -off;
    }
    return gt;
}

double eval_loss(int which, const Td& pred, const Td& gt, const Td& mask) {
    Tape<double> t;
    Node<double>* p = t.leaf(pred, false);
    Node<double>* l = which == 0   ? loss::mae_loss(p, gt, mask)
                      : which == 1 ? loss::lp_loss(p, gt, mask)
                                   : loss::diff_loss(p, gt, mask);
    return l->val.v[0];
}

}  // namespace

TEST_CASE("mae oracle values") {
    const Td mask = full_mask(2, 2);
    Td y({1, 3, 2, 2});
    Td yp = y;
    CHECK(eval_loss(0, y, y, mask) == 0.0);

    // constant fields 0.5 vs 0.25
    Td a = Td::full({1, 3, 2, 2}, 0.25);
    Td b = Td::full({1, 3, 2, 2}, 0.5);
    CHECK(eval_loss(0, a, b, mask) == doctest::Approx(0.25).epsilon(1e-12));

    // half the elements differ by 0.2 -> 0.1
    Td c = Td::full({1, 3, 2, 2}, 0.4);
    Td d = c;
    for (int64_t i = 0; i < c.size() / 2; ++i) d.v[(size_t)i] += 0.2;
    CHECK(eval_loss(0, c, d, mask) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("lp oracle: single water pixel normalizes by the gt energy") {
    // Y (gt) = 2, Y' (pred) = 1 -> (1)^2 / (4 + eps) ~= 0.25
    Td gt({1, 1, 1, 1}, {2.0});
    Td pred({1, 1, 1, 1}, {1.0});
    Tape<double> t;
    auto* l = loss::lp_loss(t.leaf(pred, false), gt, full_mask(1, 1));
    CHECK(l->val.v[0] == doctest::Approx(0.249999999375).epsilon(1e-9));
    CHECK(eval_loss(1, gt, gt, full_mask(1, 1)) == 0.0);
}

TEST_CASE("lp loss is invariant under joint positive scaling") {
    const Td pred = rand_t({2, 3, 4, 4}, 1, 0.1, 0.9);
    const Td gt = offset_gt(pred, 2);
    const Td mask = full_mask(4, 4);
    const double base = eval_loss(1, pred, gt, mask);
    for (double c : {0.5, 3.0, 17.0}) {
        Td ps = pred, gs = gt;
        for (auto& v : ps.v) v *= c;
        for (auto& v : gs.v) v *= c;
        CHECK(eval_loss(1, ps, gs, mask) == doctest::Approx(base).epsilon(1e-6));
    }
}

TEST_CASE("diff oracle: x-ramp against flat equals 1") {
    // 3 identical channels of a slope-1 ramp along x on a 2x3 grid; the
    // channel gradients vanish, the y term vanishes, the x term is 1
    Td gt({1, 3, 2, 3});
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) gt.v[(size_t)((c * 2 + i) * 3 + j)] = (double)j;
    const Td flat({1, 3, 2, 3});
    CHECK(eval_loss(2, flat, gt, full_mask(2, 3)) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eval_loss(2, gt, gt, full_mask(2, 3)) == 0.0);
}

TEST_CASE("diff loss ignores constant shifts") {
    const Td pred = rand_t({3, 3, 5, 5}, 3, 0.0, 1.0);
    Td shifted = pred;
    for (auto& v : shifted.v) v += 0.37;
    CHECK(eval_loss(2, shifted, pred, full_mask(5, 5)) == doctest::Approx(0.0).epsilon(1e-18));
}

TEST_CASE("total loss combines the terms with the configured weights") {
    const Td pred = rand_t({3, 3, 6, 6}, 4, 0.1, 0.9);
    const Td gt = offset_gt(pred, 5);
    const Td mask = full_mask(6, 6);
    Tape<double> t;
    loss::LossWeights<double> w;
    auto lb = loss::total_loss(t.leaf(pred, false), gt, mask, w);
    CHECK(lb.total->val.v[0] ==
          doctest::Approx(4.0 * lb.mae + 1.0 * lb.lp + 100.0 * lb.diff).epsilon(1e-9));

    // the arithmetic of the documented example: terms (1, 0.5, 0.01) -> 5.5
    CHECK(4.0 * 1.0 + 1.0 * 0.5 + 100.0 * 0.01 == doctest::Approx(5.5));

    // degenerate weighting (1, 0, 0) equals the bare mae term
    loss::LossWeights<double> only_mae;
    only_mae.a_mae = 1;
    only_mae.a_lp = 0;
    only_mae.a_diff = 0;
    Tape<double> t2;
    auto lb2 = loss::total_loss(t2.leaf(pred, false), gt, mask, only_mae);
    CHECK(lb2.total->val.v[0] == doctest::Approx(eval_loss(0, pred, gt, mask)).epsilon(1e-12));
}

TEST_CASE("losses reject empty masks and degenerate dims") {
    const Td pred = rand_t({1, 3, 4, 4}, 6, 0.0, 1.0);
    const Td gt = offset_gt(pred, 7);
    Td empty({4, 4});
    Tape<double> t;
    CHECK_THROWS_AS(loss::mae_loss(t.leaf(pred, false), gt, empty), ConfigError);
    CHECK_THROWS_AS(loss::lp_loss(t.leaf(pred, false), gt, empty), ConfigError);

    const Td tiny = rand_t({1, 3, 1, 4}, 8, 0.0, 1.0);
    CHECK_THROWS_AS(loss::diff_loss(t.leaf(tiny, false), tiny, full_mask(1, 4)), ConfigError);
    const Td one_ch = rand_t({1, 1, 4, 4}, 9, 0.0, 1.0);
    CHECK_THROWS_AS(loss::diff_loss(t.leaf(one_ch, false), one_ch, full_mask(4, 4)), ConfigError);

    // shape mismatch
    const Td other = rand_t({1, 3, 4, 5}, 10, 0.0, 1.0);
    CHECK_THROWS_AS(loss::mae_loss(t.leaf(pred, false), other, full_mask(4, 4)), ConfigError);
}

TEST_CASE("losses are non-negative and masked-out pixels do not contribute") {
    const Td pred = rand_t({3, 3, 6, 6}, 11, 0.0, 1.0);
    const Td gt = offset_gt(pred, 12);
    Td mask = full_mask(6, 6);
    const double full_mae = eval_loss(0, pred, gt, mask);
    CHECK(full_mae > 0);

    // corrupt one pixel, then mask it out: the loss must not see it
    Td corrupted = pred;
    for (int t = 0; t < 3; ++t)
        for (int c = 0; c < 3; ++c) corrupted.v[(size_t)(((t * 3 + c) * 6 + 2) * 6 + 3)] = 1e6;
    Td masked = mask;
    masked.v[(size_t)(2 * 6 + 3)] = 0.0;
    const double masked_mae = eval_loss(0, corrupted, gt, masked);
    CHECK(masked_mae < 1e3);
    CHECK(masked_mae == doctest::Approx(eval_loss(0, pred, gt, masked)).epsilon(1e-12));
}

TEST_CASE("analytic loss gradients match finite differences") {
    const Td pred = rand_t({3, 3, 6, 6}, 13, 0.1, 0.9);
    const Td gt = offset_gt(pred, 14);
    Rng mrng(15);
    Td mask({6, 6});
    for (auto& m : mask.v) m = mrng.uniform(0.0, 1.0) < 0.8 ? 1.0 : 0.0;
    mask.v[0] = 1.0;

    for (int which = 0; which < 4; ++which) {
        auto res = gradcheck::check(
            [&, which](Tape<double>&, const std::vector<Node<double>*>& l) -> Node<double>* {
                switch (which) {
                    case 0: return loss::mae_loss(l[0], gt, mask);
                    case 1: return loss::lp_loss(l[0], gt, mask);
                    case 2: return loss::diff_loss(l[0], gt, mask);
                    default: return loss::total_loss(l[0], gt, mask, loss::LossWeights<double>{}).total;
                }
            },
            {pred}, 80, 16 + (uint64_t)which);
        CAPTURE(which);
        CHECK(res.max_rel_err <= 1e-3);
        CHECK(res.max_rel_err < 1e-5);  // losses alone are smooth away from kinks
    }
}
