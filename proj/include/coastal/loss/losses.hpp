#pragma once

#include "coastal/nn/ops.hpp"

namespace coastal::loss {

using nn::Node;
using nn::Tensor;

/// Weighted combination used for training; defaults follow the loss design.
template <class T>
struct LossWeights {
    T a_mae = (T)4;
    T a_lp = (T)1;
    T a_diff = (T)100;
    T eps = (T)1e-8;
};

namespace detail {

template <class T>
int64_t water_count(const Tensor<T>& mask) {
    int64_t n = 0;
    for (T m : mask.v)
        if (m != T(0)) ++n;
    return n;
}

/// Tiles an [h,w] mask over leading frame/channel axes.
template <class T>
Tensor<T> tile_mask(const Tensor<T>& mask, int t, int c) {
    nn::Shape s = {t, c, mask.dim(0), mask.dim(1)};
    Tensor<T> out(s);
    const int64_t block = mask.size();
    for (int64_t k = 0; k < t * (int64_t)c; ++k)
        std::copy_n(mask.data(), block, out.data() + k * block);
    return out;
}

template <class T>
void check_pair(const Tensor<T>& gt, Node<T>* pred, const Tensor<T>& mask) {
    if (pred->val.shape != gt.shape) throw ConfigError("loss: prediction/ground-truth shape mismatch");
    if (pred->val.ndim() != 4) throw ConfigError("loss: expects [T,C,h,w]");
    if (mask.ndim() != 2 || mask.dim(0) != pred->val.dim(2) || mask.dim(1) != pred->val.dim(3))
        throw ConfigError("loss: mask shape mismatch");
    if (water_count(mask) == 0) throw ConfigError("loss: empty water mask");
}

}  // namespace detail

/// Mean absolute error over water elements.
template <class T>
Node<T>* mae_loss(Node<T>* pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    detail::check_pair(gt, pred, mask);
    const int t = gt.dim(0), c = gt.dim(1);
    const int64_t n = detail::water_count(mask) * t * c;
    Node<T>* d = mul_const(sub(pred, pred->tape->constant(gt)), detail::tile_mask(mask, t, c));
    return scale(sum_all(abs_(d)), (T)(1.0 / (double)n));
}

/// Squared error normalized per frame by the ground-truth energy
/// ||Y(t)||^2 over water elements (plus eps), averaged over water elements.
template <class T>
Node<T>* lp_loss(Node<T>* pred, const Tensor<T>& gt, const Tensor<T>& mask, T eps = (T)1e-8) {
    detail::check_pair(gt, pred, mask);
    const int t_n = gt.dim(0), c = gt.dim(1), h = gt.dim(2), w = gt.dim(3);
    const int64_t n = detail::water_count(mask) * t_n * c;
    const Tensor<T> mask_c = detail::tile_mask(mask, 1, c);  // [1,c,h,w] == [c,h,w] block

    Node<T>* acc = nullptr;
    for (int t = 0; t < t_n; ++t) {
        Tensor<T> gt_t({c, h, w});
        std::copy_n(gt.data() + (size_t)t * c * h * w, (int64_t)c * h * w, gt_t.data());
        double denom = 0.0;
        for (int64_t i = 0; i < gt_t.size(); ++i) {
            const double g = (double)(gt_t.v[(size_t)i] * mask_c.v[(size_t)i]);
            denom += g * g;
        }
        denom += (double)eps;
        Tensor<T> m3 = mask_c;
        m3.shape = {c, h, w};
        Node<T>* d = mul_const(sub(slice0(pred, t), pred->tape->constant(gt_t)), m3);
        Node<T>* term = scale(sum_all(square(d)), (T)(1.0 / denom));
        acc = acc ? add(acc, term) : term;
    }
    return scale(acc, (T)(1.0 / (double)n));
}

/// First-order gradient-difference loss along x, y and the channel axis,
/// restricted to element pairs that are both on water; the three directional
/// means are summed.
template <class T>
Node<T>* diff_loss(Node<T>* pred, const Tensor<T>& gt, const Tensor<T>& mask) {
    detail::check_pair(gt, pred, mask);
    const int t = gt.dim(0), c = gt.dim(1), h = gt.dim(2), w = gt.dim(3);
    if (h < 2 || w < 2) throw ConfigError("diff_loss: spatial dims must be >= 2");
    if (c < 2) throw ConfigError("diff_loss: needs at least 2 channels");

    nn::Tape<T>& tape = *pred->tape;
    auto direction = [&](int axis, const Tensor<T>& pair_mask, int rep_t, int rep_c) -> Node<T>* {
        double cnt = 0;
        for (T m : pair_mask.v) cnt += (double)m;
        cnt *= rep_t * rep_c;
        if (cnt == 0) return nullptr;
        Node<T>* gp = diff_along(pred, axis);
        Node<T>* gg = diff_along(tape.constant(gt), axis);
        Node<T>* d = mul_const(sub(gp, gg), detail::tile_mask(pair_mask, rep_t, rep_c));
        return scale(sum_all(square(d)), (T)(1.0 / cnt));
    };

    Tensor<T> mx({h, w - 1}), my({h - 1, w});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j + 1 < w; ++j)
            mx.v[(size_t)(i * (w - 1) + j)] = mask.v[(size_t)(i * w + j)] * mask.v[(size_t)(i * w + j + 1)];
    for (int i = 0; i + 1 < h; ++i)
        for (int j = 0; j < w; ++j)
            my.v[(size_t)(i * w + j)] = mask.v[(size_t)(i * w + j)] * mask.v[(size_t)((i + 1) * w + j)];

    Node<T>* acc = nullptr;
    for (Node<T>* term : {direction(3, mx, t, c), direction(2, my, t, c), direction(1, mask, t, c - 1)})
        if (term) acc = acc ? add(acc, term) : term;
    if (!acc) throw ConfigError("diff_loss: no valid element pairs");
    return acc;
}

template <class T>
struct LossBreakdown {
    Node<T>* total = nullptr;
    double mae = 0, lp = 0, diff = 0;
};

/// a_mae * L_mae + a_lp * L_lp + a_diff * L_diff with the per-term values
/// recorded for logging. Disabled terms (weight 0) are not evaluated.
template <class T>
LossBreakdown<T> total_loss(Node<T>* pred, const Tensor<T>& gt, const Tensor<T>& mask,
                            const LossWeights<T>& w) {
    LossBreakdown<T> out;
    Node<T>* acc = nullptr;
    auto accumulate = [&](Node<T>* term, T weight, double& slot) {
        slot = (double)term->val.v[0];
        Node<T>* scaled = scale(term, weight);
        acc = acc ? add(acc, scaled) : scaled;
    };
    accumulate(mae_loss(pred, gt, mask), w.a_mae, out.mae);
    if (w.a_lp != T(0)) accumulate(lp_loss(pred, gt, mask, w.eps), w.a_lp, out.lp);
    if (w.a_diff != T(0)) accumulate(diff_loss(pred, gt, mask), w.a_diff, out.diff);
    out.total = acc;
    return out;
}

}  // namespace coastal::loss
