#pragma once

#include <array>
#include <map>
#include <unordered_map>

#include "coastal/nn/ops.hpp"

namespace coastal::model {

using nn::Node;
using nn::Shape;
using nn::Tape;
using nn::Tensor;

struct ModelConfig {
    int feat = 32;       // F, feature channels (64 at full scale)
    int n_rcab = 4;      // RCAB blocks (8 at full scale)
    int reduction = 16;  // channel-attention bottleneck ratio r
    int window = 8;      // attention window size w
    int n_heads = 4;
    int in_ch = 3;       // U, V, xi
    int t_in = 2;
    int t_out = 3;

    void validate() const {
        if (feat % n_heads != 0) throw ConfigError("feat must be divisible by n_heads");
        if (feat < 1 || n_rcab < 0 || window < 1) throw ConfigError("invalid model config");
        if (t_in != 2 || t_out != 3) throw ConfigError("the network maps 2 input frames to 3 output frames");
    }
    int bottleneck() const { return std::max(1, feat / reduction); }
};

/// Which parts of the network are active; everything on is the full model.
struct Ablation {
    bool st_attn = true;
    bool fsr = true;
    bool pos = true;
    bool axis_h = true;
    bool axis_v = true;
    bool axis_d = true;
};

/// Named parameter registry with a stable order (checkpoints, flat optimizer state).
template <class T>
struct Params {
    ModelConfig cfg;
    uint64_t seed = 0;
    std::vector<std::string> names;
    std::vector<Tensor<T>> values;
    std::unordered_map<std::string, int> index;

    void add(const std::string& name, Tensor<T> t) {
        index.emplace(name, (int)names.size());
        names.push_back(name);
        values.push_back(std::move(t));
    }
    Tensor<T>& at(const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw ConfigError("unknown parameter " + name);
        return values[(size_t)it->second];
    }
    const Tensor<T>& at(const std::string& name) const {
        return const_cast<Params*>(this)->at(name);
    }
    int64_t total_count() const {
        int64_t n = 0;
        for (const auto& t : values) n += t.size();
        return n;
    }
    template <class U>
    Params<U> cast() const {
        Params<U> out;
        out.cfg = cfg;
        out.seed = seed;
        for (size_t i = 0; i < names.size(); ++i) out.add(names[i], values[i].template cast<U>());
        return out;
    }
};

namespace detail {

template <class T>
Tensor<T> he_uniform(Shape s, int fan_in, Rng& rng) {
    const double bound = std::sqrt(6.0 / fan_in);
    return Tensor<T>::random_uniform(std::move(s), rng, (T)-bound, (T)bound);
}

template <class T>
Tensor<T> xavier_uniform(Shape s, int fan_in, int fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    return Tensor<T>::random_uniform(std::move(s), rng, (T)-bound, (T)bound);
}

}  // namespace detail

/// Deterministic initialization: He-uniform convolutions, Xavier-uniform
/// attention projections, zero positional codes, zero output convolution
/// (so an untrained network reproduces the interpolation baseline).
template <class T>
Params<T> init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Params<T> p;
    p.cfg = cfg;
    p.seed = seed;
    Rng rng(seed);
    const int F = cfg.feat, C = cfg.in_ch, mid = cfg.bottleneck(), w = cfg.window;

    p.add("head.w", detail::he_uniform<T>({F, C, 3, 3}, C * 9, rng));
    p.add("head.b", Tensor<T>({F}));
    for (int i = 0; i < cfg.n_rcab; ++i) {
        const std::string b = "rcab" + std::to_string(i);
        p.add(b + ".w1.w", detail::he_uniform<T>({F, F, 3, 3}, F * 9, rng));
        p.add(b + ".w1.b", Tensor<T>({F}));
        p.add(b + ".w2a.w", detail::he_uniform<T>({F, mid}, F, rng));
        p.add(b + ".w2a.b", Tensor<T>({mid}));
        p.add(b + ".w2b.w", detail::he_uniform<T>({mid, F}, mid, rng));
        p.add(b + ".w2b.b", Tensor<T>({F}));
    }
    for (const char* nm : {"wq", "wk", "wv", "wo"}) {
        p.add(std::string("attn.") + nm + ".w", detail::xavier_uniform<T>({F, F}, F, F, rng));
        p.add(std::string("attn.") + nm + ".b", Tensor<T>({F}));
    }
    for (const char* nm : {"lnq", "lnk"}) {
        p.add(std::string("attn.") + nm + ".g", Tensor<T>::full({F}, T(1)));
        p.add(std::string("attn.") + nm + ".b", Tensor<T>({F}));
    }
    p.add("attn.ffn1.w", detail::xavier_uniform<T>({F, 2 * F}, F, 2 * F, rng));
    p.add("attn.ffn1.b", Tensor<T>({2 * F}));
    p.add("attn.ffn2.w", detail::xavier_uniform<T>({2 * F, F}, 2 * F, F, rng));
    p.add("attn.ffn2.b", Tensor<T>({F}));
    p.add("pos.h", Tensor<T>({F, w, w}));
    p.add("pos.v", Tensor<T>({F, w, w}));
    p.add("pos.d", Tensor<T>({F, w, w}));
    p.add("fold.w", detail::xavier_uniform<T>({F, 2 * F, 1, 1}, 2 * F, F, rng));
    p.add("fold.b", Tensor<T>({F}));
    p.add("unfold.w", detail::xavier_uniform<T>({2 * F, F, 1, 1}, F, 2 * F, rng));
    p.add("unfold.b", Tensor<T>({2 * F}));
    p.add("fsr.freq.w", detail::he_uniform<T>({2 * F, 2 * F, 1, 1}, 2 * F, rng));
    p.add("fsr.freq.b", Tensor<T>({2 * F}));
    p.add("fsr.merge.w", detail::he_uniform<T>({2 * F, 4 * F, 1, 1}, 4 * F, rng));
    p.add("fsr.merge.b", Tensor<T>({2 * F}));
    p.add("fsr.expand.w", detail::he_uniform<T>({cfg.t_out * C, 2 * F, 3, 3}, 2 * F * 9, rng));
    p.add("fsr.expand.b", Tensor<T>({cfg.t_out * C}));
    p.add("out.w", Tensor<T>({C, C, 3, 3}));
    p.add("out.b", Tensor<T>({C}));
    return p;
}

/// One human-readable line per parameter plus the total count.
template <class T>
std::string summarize(const Params<T>& p) {
    std::string out;
    for (size_t i = 0; i < p.names.size(); ++i)
        out += p.names[i] + " " + nn::shape_str(p.values[i].shape) + " " +
               std::to_string(p.values[i].size()) + "\n";
    out += "total parameters: " + std::to_string(p.total_count()) + "\n";
    return out;
}

/// Graph leaves for every parameter of one forward pass.
template <class T>
struct BoundParams {
    const Params<T>* src = nullptr;
    std::vector<Node<T>*> nodes;

    Node<T>* at(const std::string& name) const {
        auto it = src->index.find(name);
        if (it == src->index.end()) throw ConfigError("unknown parameter " + name);
        return nodes[(size_t)it->second];
    }
    /// Flat gradient in registry order (zeros for parameters not on the tape path).
    std::vector<T> collect_grad() const {
        std::vector<T> flat;
        flat.reserve((size_t)src->total_count());
        for (size_t i = 0; i < nodes.size(); ++i) {
            if (nodes[i]->grad.empty())
                flat.insert(flat.end(), (size_t)src->values[i].size(), T(0));
            else
                flat.insert(flat.end(), nodes[i]->grad.v.begin(), nodes[i]->grad.v.end());
        }
        return flat;
    }
};

template <class T>
BoundParams<T> bind(Tape<T>& tape, const Params<T>& params, bool needs_grad) {
    BoundParams<T> b;
    b.src = &params;
    b.nodes.reserve(params.values.size());
    for (const auto& t : params.values) b.nodes.push_back(tape.leaf(t, needs_grad));
    return b;
}

// ---------------------------------------------------------------------------
// index maps for the pixel shuffles, window partition and head split
// ---------------------------------------------------------------------------

namespace detail {

using IdxPtr = std::shared_ptr<const std::vector<int64_t>>;

/// Small process-wide cache; the maps depend only on shapes.
inline IdxPtr cached(const std::array<int64_t, 6>& key, const std::function<std::vector<int64_t>()>& build) {
    static std::map<std::array<int64_t, 6>, IdxPtr> cache;
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto ptr = std::make_shared<const std::vector<int64_t>>(build());
    cache.emplace(key, ptr);
    return ptr;
}

// Flattened index helpers for [2,F,h,w] and fused maps.
inline IdxPtr shuffle_idx(int axis, int F, int h, int w, bool inverse) {
    return cached({axis, F, h, w, inverse, 0}, [=] {
        std::vector<int64_t> idx((size_t)2 * F * h * w);
        auto in_flat = [&](int k, int c, int i, int j) { return (((int64_t)k * F + c) * h + i) * w + j; };
        for (int k = 0; k < 2; ++k)
            for (int c = 0; c < F; ++c)
                for (int i = 0; i < h; ++i)
                    for (int j = 0; j < w; ++j) {
                        int64_t fused;
                        if (axis == 0)  // horizontal: [F, h, 2w], out[c,i,2j+k]
                            fused = ((int64_t)c * h + i) * (2 * w) + 2 * j + k;
                        else if (axis == 1)  // vertical: [F, 2h, w], out[c,2i+k,j]
                            fused = ((int64_t)c * 2 * h + 2 * i + k) * w + j;
                        else  // depth: [2F, h, w], out[2c+k,i,j]
                            fused = ((int64_t)(2 * c + k) * h + i) * w + j;
                        if (inverse)
                            idx[(size_t)in_flat(k, c, i, j)] = fused;
                        else
                            idx[(size_t)fused] = in_flat(k, c, i, j);
                    }
        return idx;
    });
}

/// [C,H,W] -> [nw, s*s, C] token layout (row-major windows, row-major pixels).
inline IdxPtr partition_idx(int C, int H, int W, int s, bool inverse) {
    return cached({100 + inverse, C, H, W, s, 0}, [=] {
        std::vector<int64_t> idx((size_t)C * H * W);
        const int wj_n = W / s;
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    const int64_t chw = ((int64_t)c * H + i) * W + j;
                    const int win = (i / s) * wj_n + (j / s);
                    const int tok = (i % s) * s + (j % s);
                    const int64_t tkc = ((int64_t)win * s * s + tok) * C + c;
                    if (inverse)
                        idx[(size_t)chw] = tkc;
                    else
                        idx[(size_t)tkc] = chw;
                }
        return idx;
    });
}

/// [nw, L, d] -> [nw*nh, L, d/nh] contiguous head split.
inline IdxPtr head_idx(int nw, int L, int d, int nh, bool inverse) {
    return cached({200 + inverse, nw, L, d, nh, 0}, [=] {
        std::vector<int64_t> idx((size_t)nw * L * d);
        const int dh = d / nh;
        for (int b = 0; b < nw; ++b)
            for (int l = 0; l < L; ++l)
                for (int c = 0; c < d; ++c) {
                    const int64_t full = ((int64_t)b * L + l) * d + c;
                    const int hh = c / dh, e = c % dh;
                    const int64_t split = (((int64_t)b * nh + hh) * L + l) * dh + e;
                    if (inverse)
                        idx[(size_t)full] = split;
                    else
                        idx[(size_t)split] = full;
                }
        return idx;
    });
}

/// [F, s, s] positional map -> [s*s, F] token layout.
inline IdxPtr pos_idx(int F, int s) {
    return cached({300, F, s, 0, 0, 0}, [=] {
        std::vector<int64_t> idx((size_t)F * s * s);
        for (int t = 0; t < s * s; ++t)
            for (int c = 0; c < F; ++c) idx[(size_t)t * F + c] = (int64_t)(c * s + t / s) * s + (t % s);
        return idx;
    });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// network blocks
// ---------------------------------------------------------------------------

/// Temporal pixel shuffles fusing the two frames of [2,F,h,w] into one map.
template <class T>
Node<T>* shuffle_h(Node<T>* z) {
    if (z->val.ndim() != 4 || z->val.dim(0) != 2) throw ConfigError("shuffle expects [2,F,h,w]");
    const int F = z->val.dim(1), h = z->val.dim(2), w = z->val.dim(3);
    return gather(z, detail::shuffle_idx(0, F, h, w, false), {F, h, 2 * w});
}

template <class T>
Node<T>* unshuffle_h(Node<T>* z, int F, int h, int w) {
    return gather(z, detail::shuffle_idx(0, F, h, w, true), {2, F, h, w});
}

template <class T>
Node<T>* shuffle_v(Node<T>* z) {
    if (z->val.ndim() != 4 || z->val.dim(0) != 2) throw ConfigError("shuffle expects [2,F,h,w]");
    const int F = z->val.dim(1), h = z->val.dim(2), w = z->val.dim(3);
    return gather(z, detail::shuffle_idx(1, F, h, w, false), {F, 2 * h, w});
}

template <class T>
Node<T>* unshuffle_v(Node<T>* z, int F, int h, int w) {
    return gather(z, detail::shuffle_idx(1, F, h, w, true), {2, F, h, w});
}

template <class T>
Node<T>* shuffle_d(Node<T>* z) {
    if (z->val.ndim() != 4 || z->val.dim(0) != 2) throw ConfigError("shuffle expects [2,F,h,w]");
    const int F = z->val.dim(1), h = z->val.dim(2), w = z->val.dim(3);
    return gather(z, detail::shuffle_idx(2, F, h, w, false), {2 * F, h, w});
}

template <class T>
Node<T>* unshuffle_d(Node<T>* z, int F, int h, int w) {
    return gather(z, detail::shuffle_idx(2, F, h, w, true), {2, F, h, w});
}

/// Residual channel-attention block: 3x3 body convolution gated by pooled
/// channel statistics, with the input skip.
template <class T>
Node<T>* rcab(Node<T>* x, const BoundParams<T>& p, int block) {
    const std::string b = "rcab" + std::to_string(block);
    Node<T>* body = conv2d(x, p.at(b + ".w1.w"), p.at(b + ".w1.b"), 1);
    Node<T>* pooled = global_avg_pool(body);
    Node<T>* gate = sigmoid(linear(relu(linear(pooled, p.at(b + ".w2a.w"), p.at(b + ".w2a.b"))),
                                   p.at(b + ".w2b.w"), p.at(b + ".w2b.b")));
    return add(channel_scale(body, gate), x);
}

/// Window multi-head attention with LayerNorm on the query/key projections
/// and a two-layer feed-forward tail; identity when all weights are zero.
template <class T>
Node<T>* mha_block(Node<T>* tokens, Node<T>* pos, const BoundParams<T>& p, const ModelConfig& cfg) {
    if (tokens->val.ndim() != 3) throw ConfigError("mha_block expects [n_win, L, d]");
    const int nw = tokens->val.dim(0), L = tokens->val.dim(1), d = tokens->val.dim(2);
    if (d % cfg.n_heads != 0) throw ConfigError("embedding dim not divisible by n_heads");
    const int nh = cfg.n_heads, dh = d / nh;

    Node<T>* x = pos ? add_broadcast0(tokens, pos) : tokens;
    Node<T>* q = layer_norm(linear(x, p.at("attn.wq.w"), p.at("attn.wq.b")), p.at("attn.lnq.g"),
                            p.at("attn.lnq.b"));
    Node<T>* k = layer_norm(linear(x, p.at("attn.wk.w"), p.at("attn.wk.b")), p.at("attn.lnk.g"),
                            p.at("attn.lnk.b"));
    Node<T>* v = linear(x, p.at("attn.wv.w"), p.at("attn.wv.b"));

    auto split = detail::head_idx(nw, L, d, nh, false);
    Shape hs = {nw * nh, L, dh};
    Node<T>* qh = gather(q, split, hs);
    Node<T>* kh = gather(k, split, hs);
    Node<T>* vh = gather(v, split, hs);

    Node<T>* att = softmax_last(scale(bmm(qh, kh, /*transpose_b=*/true), (T)(1.0 / std::sqrt((double)dh))));
    Node<T>* ctx = gather(bmm(att, vh), detail::head_idx(nw, L, d, nh, true), {nw, L, d});
    Node<T>* m = add(x, linear(ctx, p.at("attn.wo.w"), p.at("attn.wo.b")));
    Node<T>* f = linear(relu(linear(m, p.at("attn.ffn1.w"), p.at("attn.ffn1.b"))), p.at("attn.ffn2.w"),
                        p.at("attn.ffn2.b"));
    return add(m, f);
}

namespace detail {

/// partition -> (+pos) -> shared attention -> unpartition, on a fused map.
template <class T>
Node<T>* windowed_attention(Node<T>* fused, const char* pos_name, const BoundParams<T>& p,
                            const ModelConfig& cfg, const Ablation& ab) {
    const int C = fused->val.dim(0), H = fused->val.dim(1), W = fused->val.dim(2);
    const int s = cfg.window;
    if (H % s != 0 || W % s != 0)
        throw ConfigError("attention window " + std::to_string(s) + " must divide the fused map " +
                          nn::shape_str(fused->val.shape));
    const int nw = (H / s) * (W / s), L = s * s;
    Node<T>* tokens = gather(fused, partition_idx(C, H, W, s, false), {nw, L, C});
    Node<T>* pos = nullptr;
    if (ab.pos) pos = gather(p.at(pos_name), pos_idx(C, s), {L, C});
    Node<T>* out = mha_block(tokens, pos, p, cfg);
    return gather(out, partition_idx(C, H, W, s, true), {C, H, W});
}

}  // namespace detail

/// Spatiotemporal attention: horizontal, vertical then depth branches share
/// one attention module. For h/v the shuffle/unshuffle sandwich around the
/// residual attention is itself the skip connection; the depth branch needs
/// an explicit skip around its fold/expand projections.
template <class T>
Node<T>* st_attention(Node<T>* z, const BoundParams<T>& p, const ModelConfig& cfg, const Ablation& ab) {
    if (z->val.ndim() != 4 || z->val.dim(0) != 2) throw ConfigError("st_attention expects [2,F,h,w]");
    const int F = z->val.dim(1), h = z->val.dim(2), w = z->val.dim(3);

    if (ab.axis_h) {
        Node<T>* fused = detail::windowed_attention(shuffle_h(z), "pos.h", p, cfg, ab);
        z = unshuffle_h(fused, F, h, w);
    }
    if (ab.axis_v) {
        Node<T>* fused = detail::windowed_attention(shuffle_v(z), "pos.v", p, cfg, ab);
        z = unshuffle_v(fused, F, h, w);
    }
    if (ab.axis_d) {
        Node<T>* folded = conv2d(shuffle_d(z), p.at("fold.w"), p.at("fold.b"), 0);
        Node<T>* fused = detail::windowed_attention(folded, "pos.d", p, cfg, ab);
        Node<T>* expanded = conv2d(fused, p.at("unfold.w"), p.at("unfold.b"), 0);
        z = add(z, unshuffle_d(expanded, F, h, w));
    }
    return z;
}

/// Feature split and reconstruction: frequency enhancement of the fused
/// features, channel split into three residual maps, added to the temporally
/// interpolated input frames through a shared output convolution.
template <class T>
Node<T>* fsr(Node<T>* d_out, Node<T>* x0, Node<T>* x1, const BoundParams<T>& p, const ModelConfig& cfg,
             const Ablation& ab) {
    const int C = cfg.in_ch;
    Node<T>* a = concat0(slice0(d_out, 0), slice0(d_out, 1));  // [2F,h,w]
    Node<T>* e = a;
    if (ab.fsr) {
        Node<T>* proj = conv2d(a, p.at("fsr.freq.w"), p.at("fsr.freq.b"), 0);
        Node<T>* freq = concat0(cos_(proj), sin_(proj));
        e = add(conv2d(freq, p.at("fsr.merge.w"), p.at("fsr.merge.b"), 0), a);
    }
    Node<T>* r = conv2d(e, p.at("fsr.expand.w"), p.at("fsr.expand.b"), 1);  // [3C,h,w]
    std::array<Node<T>*, 3> base = {x0, scale(add(x0, x1), (T)0.5), x1};
    std::vector<Node<T>*> frames;
    for (int t = 0; t < 3; ++t) {
        Node<T>* rt = slice0_range(r, t * C, (t + 1) * C);
        frames.push_back(add(base[(size_t)t], conv2d(rt, p.at("out.w"), p.at("out.b"), 1)));
    }
    return stack0(frames);
}

namespace detail {

template <class T>
void guard_finite(Node<T>* n, const char* stage) {
    if (!nn::all_finite(n->val)) throw NumericsError(std::string("non-finite value after ") + stage);
}

}  // namespace detail

/// Full forward pass for one sample x: [2,C,h,w] -> [3,C,h,w].
template <class T>
Node<T>* forward_sample(Tape<T>& tape, const BoundParams<T>& p, const ModelConfig& cfg,
                        const Tensor<T>& x, const Ablation& ab = {}) {
    if (x.ndim() != 4 || x.dim(0) != cfg.t_in || x.dim(1) != cfg.in_ch)
        throw ConfigError("forward expects input [2,C,h,w], got " + nn::shape_str(x.shape));
    Node<T>* xin = tape.constant(x);
    Node<T>* x0 = slice0(xin, 0);
    Node<T>* x1 = slice0(xin, 1);

    std::vector<Node<T>*> feats;
    for (Node<T>* xf : {x0, x1}) {
        Node<T>* f = conv2d(xf, p.at("head.w"), p.at("head.b"), 1);
        for (int i = 0; i < cfg.n_rcab; ++i) f = rcab(f, p, i);
        feats.push_back(f);
    }
    Node<T>* z = stack0(feats);
    detail::guard_finite(z, "feature extraction");

    if (ab.st_attn) {
        z = st_attention(z, p, cfg, ab);
        detail::guard_finite(z, "st_attention");
    }
    Node<T>* y = fsr(z, x0, x1, p, cfg, ab);
    detail::guard_finite(y, "fsr");
    return y;
}

/// Inference helper without gradient bookkeeping.
template <class T>
Tensor<T> predict(const Params<T>& params, const Tensor<T>& x, const Ablation& ab = {}) {
    Tape<T> tape;
    BoundParams<T> bp = bind(tape, params, false);
    return forward_sample(tape, bp, params.cfg, x, ab)->val;
}

}  // namespace coastal::model
