#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "coastal/nn/graph.hpp"

namespace coastal::nn {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using MapC = Eigen::Map<const MatRM<T>>;
template <class T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <class T>
using ArrMapC = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

template <class T>
void axpy(Tensor<T>& dst, const Tensor<T>& src, T a) {
    ArrMap<T>(dst.data(), dst.size()) += a * ArrMapC<T>(src.data(), src.size());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
Node<T>* add(Node<T>* a, Node<T>* b) {
    detail::require(a->val.shape == b->val.shape, "add: shape mismatch");
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) =
        ArrMapC<T>(a->val.data(), out.size()) + ArrMapC<T>(b->val.data(), out.size());
    return a->tape->make(std::move(out), {a, b}, [a, b](Node<T>& n) {
        if (a->needs_grad) detail::axpy(a->ensure_grad(), n.grad, T(1));
        if (b->needs_grad) detail::axpy(b->ensure_grad(), n.grad, T(1));
    });
}

template <class T>
Node<T>* sub(Node<T>* a, Node<T>* b) {
    detail::require(a->val.shape == b->val.shape, "sub: shape mismatch");
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) =
        ArrMapC<T>(a->val.data(), out.size()) - ArrMapC<T>(b->val.data(), out.size());
    return a->tape->make(std::move(out), {a, b}, [a, b](Node<T>& n) {
        if (a->needs_grad) detail::axpy(a->ensure_grad(), n.grad, T(1));
        if (b->needs_grad) detail::axpy(b->ensure_grad(), n.grad, T(-1));
    });
}

template <class T>
Node<T>* mul(Node<T>* a, Node<T>* b) {
    detail::require(a->val.shape == b->val.shape, "mul: shape mismatch");
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) =
        ArrMapC<T>(a->val.data(), out.size()) * ArrMapC<T>(b->val.data(), out.size());
    return a->tape->make(std::move(out), {a, b}, [a, b](Node<T>& n) {
        if (a->needs_grad)
            ArrMap<T>(a->ensure_grad().data(), n.grad.size()) +=
                ArrMapC<T>(n.grad.data(), n.grad.size()) * ArrMapC<T>(b->val.data(), n.grad.size());
        if (b->needs_grad)
            ArrMap<T>(b->ensure_grad().data(), n.grad.size()) +=
                ArrMapC<T>(n.grad.data(), n.grad.size()) * ArrMapC<T>(a->val.data(), n.grad.size());
    });
}

template <class T>
Node<T>* scale(Node<T>* a, T c) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) = c * ArrMapC<T>(a->val.data(), out.size());
    return a->tape->make(std::move(out), {a}, [a, c](Node<T>& n) {
        if (a->needs_grad) detail::axpy(a->ensure_grad(), n.grad, c);
    });
}

/// Elementwise product with a constant tensor (no gradient to the constant).
template <class T>
Node<T>* mul_const(Node<T>* a, const Tensor<T>& m) {
    return mul(a, a->tape->constant(m));
}

template <class T>
Node<T>* square(Node<T>* a) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) = ArrMapC<T>(a->val.data(), out.size()).square();
    return a->tape->make(std::move(out), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        ArrMap<T>(a->ensure_grad().data(), n.grad.size()) +=
            T(2) * ArrMapC<T>(a->val.data(), n.grad.size()) * ArrMapC<T>(n.grad.data(), n.grad.size());
    });
}

template <class T>
Node<T>* abs_(Node<T>* a) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) = ArrMapC<T>(a->val.data(), out.size()).abs();
    return a->tape->make(std::move(out), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            const T x = a->val.v[(size_t)i];
            const T s = x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0));
            g.v[(size_t)i] += s * n.grad.v[(size_t)i];
        }
    });
}

template <class T>
Node<T>* sigmoid(Node<T>* a) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) = T(1) / (T(1) + (-ArrMapC<T>(a->val.data(), out.size())).exp());
    return a->tape->make(std::move(out), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        auto y = ArrMapC<T>(n.val.data(), n.grad.size());
        ArrMap<T>(a->ensure_grad().data(), n.grad.size()) +=
            y * (T(1) - y) * ArrMapC<T>(n.grad.data(), n.grad.size());
    });
}

template <class T>
Node<T>* relu(Node<T>* a) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) = ArrMapC<T>(a->val.data(), out.size()).max(T(0));
    return a->tape->make(std::move(out), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < n.grad.size(); ++i)
            if (a->val.v[(size_t)i] > T(0)) g.v[(size_t)i] += n.grad.v[(size_t)i];
    });
}

template <class T>
Node<T>* gelu(Node<T>* a) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    for (int64_t i = 0; i < out.size(); ++i) {
        const T x = a->val.v[(size_t)i];
        out.v[(size_t)i] = T(0.5) * x * (T(1) + (T)std::erf((double)x * M_SQRT1_2));
    }
    return a->tape->make(std::move(out), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        constexpr double inv_sqrt2pi = 0.3989422804014327;
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            const double x = (double)a->val.v[(size_t)i];
            const double d = 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
            g.v[(size_t)i] += (T)d * n.grad.v[(size_t)i];
        }
    });
}

template <class T>
Node<T>* cos_(Node<T>* a) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) = ArrMapC<T>(a->val.data(), out.size()).cos();
    return a->tape->make(std::move(out), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        ArrMap<T>(a->ensure_grad().data(), n.grad.size()) -=
            ArrMapC<T>(a->val.data(), n.grad.size()).sin() * ArrMapC<T>(n.grad.data(), n.grad.size());
    });
}

template <class T>
Node<T>* sin_(Node<T>* a) {
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    ArrMap<T>(out.data(), out.size()) = ArrMapC<T>(a->val.data(), out.size()).sin();
    return a->tape->make(std::move(out), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        ArrMap<T>(a->ensure_grad().data(), n.grad.size()) +=
            ArrMapC<T>(a->val.data(), n.grad.size()).cos() * ArrMapC<T>(n.grad.data(), n.grad.size());
    });
}

// ---------------------------------------------------------------------------
// reductions and structure
// ---------------------------------------------------------------------------

template <class T>
Node<T>* sum_all(Node<T>* a) {
    const T s = ArrMapC<T>(a->val.data(), a->val.size()).sum();
    return a->tape->make(Tensor<T>({1}, {s}), {a}, [a](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        const T d = n.grad.v[0];
        for (auto& x : g.v) x += d;
    });
}

/// Block slice along axis 0: x[i0] of shape x.shape[1:].
template <class T>
Node<T>* slice0(Node<T>* a, int i0) {
    detail::require(a->val.ndim() >= 1 && i0 >= 0 && i0 < a->val.dim(0), "slice0: index out of range");
    Shape out_shape(a->val.shape.begin() + 1, a->val.shape.end());
    const int64_t block = shape_numel(out_shape);
    Tensor<T> out = Tensor<T>::uninit(out_shape);
    std::copy_n(a->val.data() + (size_t)i0 * block, block, out.data());
    return a->tape->make(std::move(out), {a}, [a, i0, block](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < block; ++i) g.v[(size_t)(i0 * block + i)] += n.grad.v[(size_t)i];
    });
}

/// Contiguous slice [c0, c1) along axis 0.
template <class T>
Node<T>* slice0_range(Node<T>* a, int c0, int c1) {
    detail::require(0 <= c0 && c0 < c1 && c1 <= a->val.dim(0), "slice0_range: bad range");
    Shape out_shape = a->val.shape;
    out_shape[0] = c1 - c0;
    const int64_t inner = a->val.size() / a->val.dim(0);
    const int64_t off = c0 * inner, len = (c1 - c0) * inner;
    Tensor<T> out = Tensor<T>::uninit(out_shape);
    std::copy_n(a->val.data() + off, len, out.data());
    return a->tape->make(std::move(out), {a}, [a, off, len](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        for (int64_t i = 0; i < len; ++i) g.v[(size_t)(off + i)] += n.grad.v[(size_t)i];
    });
}

/// Stacks equal-shape tensors along a new leading axis.
template <class T>
Node<T>* stack0(const std::vector<Node<T>*>& parts) {
    detail::require(!parts.empty(), "stack0: empty");
    const Shape& inner = parts[0]->val.shape;
    for (auto* p : parts) detail::require(p->val.shape == inner, "stack0: shape mismatch");
    Shape out_shape;
    out_shape.push_back((int)parts.size());
    out_shape.insert(out_shape.end(), inner.begin(), inner.end());
    const int64_t block = shape_numel(inner);
    Tensor<T> out = Tensor<T>::uninit(out_shape);
    for (size_t k = 0; k < parts.size(); ++k)
        std::copy_n(parts[k]->val.data(), block, out.data() + k * (size_t)block);
    std::vector<Node<T>*> parents(parts.begin(), parts.end());
    auto ps = parts;
    return parts[0]->tape->make(std::move(out), parents, [ps, block](Node<T>& n) {
        for (size_t k = 0; k < ps.size(); ++k) {
            if (!ps[k]->needs_grad) continue;
            auto& g = ps[k]->ensure_grad();
            const T* src = n.grad.data() + k * (size_t)block;
            ArrMap<T>(g.data(), block) += ArrMapC<T>(src, block);
        }
    });
}

/// Concatenation along axis 0 (channel concat for CHW tensors).
template <class T>
Node<T>* concat0(Node<T>* a, Node<T>* b) {
    detail::require(a->val.ndim() == b->val.ndim() && a->val.ndim() >= 1, "concat0: rank mismatch");
    for (int i = 1; i < a->val.ndim(); ++i)
        detail::require(a->val.dim(i) == b->val.dim(i), "concat0: trailing shape mismatch");
    Shape out_shape = a->val.shape;
    out_shape[0] += b->val.dim(0);
    Tensor<T> out = Tensor<T>::uninit(out_shape);
    std::copy_n(a->val.data(), a->val.size(), out.data());
    std::copy_n(b->val.data(), b->val.size(), out.data() + a->val.size());
    const int64_t na = a->val.size();
    return a->tape->make(std::move(out), {a, b}, [a, b, na](Node<T>& n) {
        if (a->needs_grad) ArrMap<T>(a->ensure_grad().data(), na) += ArrMapC<T>(n.grad.data(), na);
        if (b->needs_grad)
            ArrMap<T>(b->ensure_grad().data(), b->val.size()) +=
                ArrMapC<T>(n.grad.data() + na, b->val.size());
    });
}

/// out[i] = x[idx[i]]. The index map is shared and typically a bijection
/// (pixel shuffles, window partitions, head splits).
template <class T>
Node<T>* gather(Node<T>* a, std::shared_ptr<const std::vector<int64_t>> idx, Shape out_shape) {
    detail::require((int64_t)idx->size() == shape_numel(out_shape), "gather: index size mismatch");
    Tensor<T> out = Tensor<T>::uninit(std::move(out_shape));
    const T* src = a->val.data();
    const int64_t* ix = idx->data();
    for (size_t i = 0; i < idx->size(); ++i) out.v[i] = src[(size_t)ix[i]];
    return a->tape->make(std::move(out), {a}, [a, idx](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        const int64_t* ix = idx->data();
        for (size_t i = 0; i < idx->size(); ++i) g.v[(size_t)ix[i]] += n.grad.v[i];
    });
}

/// Adjacent forward difference along the given axis.
template <class T>
Node<T>* diff_along(Node<T>* a, int axis) {
    detail::require(axis >= 0 && axis < a->val.ndim(), "diff_along: bad axis");
    detail::require(a->val.dim(axis) >= 2, "diff_along: axis too short");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a->val.dim(i);
    for (int i = axis + 1; i < a->val.ndim(); ++i) inner *= a->val.dim(i);
    const int64_t n_ax = a->val.dim(axis);
    Shape out_shape = a->val.shape;
    out_shape[(size_t)axis] -= 1;
    Tensor<T> out = Tensor<T>::uninit(out_shape);
    const T* src = a->val.data();
    T* dst = out.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i + 1 < n_ax; ++i) {
            const T* s = src + (o * n_ax + i) * inner;
            T* d = dst + (o * (n_ax - 1) + i) * inner;
            for (int64_t k = 0; k < inner; ++k) d[k] = s[inner + k] - s[k];
        }
    return a->tape->make(std::move(out), {a}, [a, outer, inner, n_ax](Node<T>& n) {
        if (!a->needs_grad) return;
        auto& g = a->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i + 1 < n_ax; ++i) {
                const T* d = n.grad.data() + (o * (n_ax - 1) + i) * inner;
                T* lo = g.data() + (o * n_ax + i) * inner;
                for (int64_t k = 0; k < inner; ++k) {
                    lo[k] -= d[k];
                    lo[inner + k] += d[k];
                }
            }
    });
}

/// y[b, ...] = x[b, ...] + p[...]; p broadcast over the leading axis.
template <class T>
Node<T>* add_broadcast0(Node<T>* a, Node<T>* p) {
    detail::require(a->val.ndim() == p->val.ndim() + 1, "add_broadcast0: rank mismatch");
    const int64_t block = p->val.size();
    detail::require(a->val.size() % block == 0, "add_broadcast0: size mismatch");
    const int64_t nb = a->val.size() / block;
    Tensor<T> out = Tensor<T>::uninit(a->val.shape);
    for (int64_t b = 0; b < nb; ++b)
        ArrMap<T>(out.data() + b * block, block) =
            ArrMapC<T>(a->val.data() + b * block, block) + ArrMapC<T>(p->val.data(), block);
    return a->tape->make(std::move(out), {a, p}, [a, p, nb, block](Node<T>& n) {
        if (a->needs_grad) detail::axpy(a->ensure_grad(), n.grad, T(1));
        if (p->needs_grad) {
            auto& g = p->ensure_grad();
            for (int64_t b = 0; b < nb; ++b)
                ArrMap<T>(g.data(), block) += ArrMapC<T>(n.grad.data() + b * block, block);
        }
    });
}

// ---------------------------------------------------------------------------
// dense algebra
// ---------------------------------------------------------------------------

/// y = x @ w (+ b). x: [..., d_in] treated as rows; w: [d_in, d_out].
template <class T>
Node<T>* linear(Node<T>* x, Node<T>* w, Node<T>* b) {
    detail::require(w->val.ndim() == 2, "linear: weight must be 2-d");
    const int din = w->val.dim(0), dout = w->val.dim(1);
    detail::require(x->val.dim(x->val.ndim() - 1) == din, "linear: input dim mismatch");
    const int64_t rows = x->val.size() / din;
    Shape out_shape = x->val.shape;
    out_shape.back() = dout;
    Tensor<T> out = Tensor<T>::uninit(out_shape);
    MapC<T> X(x->val.data(), rows, din);
    MapC<T> W(w->val.data(), din, dout);
    MapM<T> Y(out.data(), rows, dout);
    Y.noalias() = X * W;
    if (b) {
        detail::require(b->val.size() == dout, "linear: bias dim mismatch");
        MapC<T> B(b->val.data(), 1, dout);
        Y.rowwise() += B.row(0);
    }
    std::vector<Node<T>*> parents = {x, w};
    if (b) parents.push_back(b);
    return x->tape->make(std::move(out), parents, [x, w, b, rows, din, dout](Node<T>& n) {
        MapC<T> dY(n.grad.data(), rows, dout);
        if (x->needs_grad) {
            MapM<T> dX(x->ensure_grad().data(), rows, din);
            MapC<T> W(w->val.data(), din, dout);
            dX.noalias() += dY * W.transpose();
        }
        if (w->needs_grad) {
            MapC<T> X(x->val.data(), rows, din);
            MapM<T> dW(w->ensure_grad().data(), din, dout);
            dW.noalias() += X.transpose() * dY;
        }
        if (b && b->needs_grad) {
            MapM<T> dB(b->ensure_grad().data(), 1, dout);
            dB.row(0) += dY.colwise().sum();
        }
    });
}

/// Batched matmul: a [B,n,k] x b [B,k,m] -> [B,n,m]. transpose_b treats b as [B,m,k].
template <class T>
Node<T>* bmm(Node<T>* a, Node<T>* b, bool transpose_b = false) {
    detail::require(a->val.ndim() == 3 && b->val.ndim() == 3, "bmm: rank must be 3");
    const int B = a->val.dim(0), n = a->val.dim(1), k = a->val.dim(2);
    detail::require(b->val.dim(0) == B, "bmm: batch mismatch");
    const int m = transpose_b ? b->val.dim(1) : b->val.dim(2);
    detail::require((transpose_b ? b->val.dim(2) : b->val.dim(1)) == k, "bmm: inner dim mismatch");
    Tensor<T> out = Tensor<T>::uninit({B, n, m});
    for (int i = 0; i < B; ++i) {
        MapC<T> A(a->val.data() + (size_t)i * n * k, n, k);
        MapM<T> Y(out.data() + (size_t)i * n * m, n, m);
        if (transpose_b) {
            MapC<T> Bm(b->val.data() + (size_t)i * m * k, m, k);
            Y.noalias() = A * Bm.transpose();
        } else {
            MapC<T> Bm(b->val.data() + (size_t)i * k * m, k, m);
            Y.noalias() = A * Bm;
        }
    }
    return a->tape->make(std::move(out), {a, b}, [a, b, B, n, k, m, transpose_b](Node<T>& n_) {
        for (int i = 0; i < B; ++i) {
            MapC<T> dY(n_.grad.data() + (size_t)i * n * m, n, m);
            if (a->needs_grad) {
                MapM<T> dA(a->ensure_grad().data() + (size_t)i * n * k, n, k);
                if (transpose_b) {
                    MapC<T> Bm(b->val.data() + (size_t)i * m * k, m, k);
                    dA.noalias() += dY * Bm;
                } else {
                    MapC<T> Bm(b->val.data() + (size_t)i * k * m, k, m);
                    dA.noalias() += dY * Bm.transpose();
                }
            }
            if (b->needs_grad) {
                MapC<T> A(a->val.data() + (size_t)i * n * k, n, k);
                if (transpose_b) {
                    MapM<T> dB(b->ensure_grad().data() + (size_t)i * m * k, m, k);
                    dB.noalias() += dY.transpose() * A;
                } else {
                    MapM<T> dB(b->ensure_grad().data() + (size_t)i * k * m, k, m);
                    dB.noalias() += A.transpose() * dY;
                }
            }
        }
    });
}

/// Layer normalization over the last axis with learnable affine parameters.
template <class T>
Node<T>* layer_norm(Node<T>* x, Node<T>* gamma, Node<T>* beta, T eps = (T)1e-5) {
    const int d = x->val.dim(x->val.ndim() - 1);
    detail::require(gamma->val.size() == d && beta->val.size() == d, "layer_norm: affine dim mismatch");
    const int64_t rows = x->val.size() / d;
    Tensor<T> out = Tensor<T>::uninit(x->val.shape);
    auto mu = std::make_shared<std::vector<T>>((size_t)rows);
    auto inv = std::make_shared<std::vector<T>>((size_t)rows);
    for (int64_t r = 0; r < rows; ++r) {
        const T* xr = x->val.data() + r * d;
        ArrMapC<T> xa(xr, d);
        const T m = xa.mean();
        const T var = (xa - m).square().sum() / (T)d;
        const T is = T(1) / std::sqrt(var + eps);
        (*mu)[(size_t)r] = m;
        (*inv)[(size_t)r] = is;
        ArrMap<T>(out.data() + r * d, d) = (xa - m) * is * ArrMapC<T>(gamma->val.data(), d) +
                                           ArrMapC<T>(beta->val.data(), d);
    }
    return x->tape->make(std::move(out), {x, gamma, beta}, [x, gamma, beta, rows, d, mu, inv](Node<T>& n) {
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = x->val.data() + r * d;
            const T* dy = n.grad.data() + r * d;
            const T m = (*mu)[(size_t)r], is = (*inv)[(size_t)r];
            if (gamma->needs_grad) {
                auto& gg = gamma->ensure_grad();
                ArrMap<T>(gg.data(), d) +=
                    ArrMapC<T>(dy, d) * (ArrMapC<T>(xr, d) - m) * is;
            }
            if (beta->needs_grad) ArrMap<T>(beta->ensure_grad().data(), d) += ArrMapC<T>(dy, d);
            if (x->needs_grad) {
                T s1 = 0, s2 = 0;
                for (int i = 0; i < d; ++i) {
                    const T gdy = dy[i] * gamma->val.v[(size_t)i];
                    s1 += gdy;
                    s2 += gdy * (xr[i] - m) * is;
                }
                s1 /= (T)d;
                s2 /= (T)d;
                T* gx = x->ensure_grad().data() + r * d;
                for (int i = 0; i < d; ++i) {
                    const T gdy = dy[i] * gamma->val.v[(size_t)i];
                    const T xh = (xr[i] - m) * is;
                    gx[i] += (gdy - s1 - xh * s2) * is;
                }
            }
        }
    });
}

/// Softmax over the last axis.
template <class T>
Node<T>* softmax_last(Node<T>* x) {
    const int d = x->val.dim(x->val.ndim() - 1);
    const int64_t rows = x->val.size() / d;
    Tensor<T> out = Tensor<T>::uninit(x->val.shape);
    for (int64_t r = 0; r < rows; ++r) {
        ArrMapC<T> xr(x->val.data() + r * d, d);
        ArrMap<T> yr(out.data() + r * d, d);
        yr = (xr - xr.maxCoeff()).exp();
        yr *= T(1) / yr.sum();
    }
    return x->tape->make(std::move(out), {x}, [x, rows, d](Node<T>& n) {
        if (!x->needs_grad) return;
        auto& g = x->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            ArrMapC<T> y(n.val.data() + r * d, d);
            ArrMapC<T> dy(n.grad.data() + r * d, d);
            const T dot = (y * dy).sum();
            ArrMap<T>(g.data() + r * d, d) += y * (dy - dot);
        }
    });
}

// ---------------------------------------------------------------------------
// convolutional
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int pad, T* cols) {
    const int Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
    for (int c = 0; c < C; ++c)
        for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj) {
                T* dst = cols + (int64_t)((c * kh + di) * kw + dj) * Ho * Wo;
                for (int y = 0; y < Ho; ++y) {
                    const int sy = y + di - pad;
                    if (sy < 0 || sy >= H) {
                        std::fill_n(dst + (int64_t)y * Wo, Wo, T(0));
                        continue;
                    }
                    const T* src = x + ((int64_t)c * H + sy) * W;
                    const int x0 = std::max(0, pad - dj);
                    const int x1 = std::min(Wo, W + pad - dj);
                    T* drow = dst + (int64_t)y * Wo;
                    for (int xo = 0; xo < x0; ++xo) drow[xo] = T(0);
                    if (x1 > x0) std::copy_n(src + (x0 + dj - pad), x1 - x0, drow + x0);
                    for (int xo = x1; xo < Wo; ++xo) drow[xo] = T(0);
                }
            }
}

template <class T>
void col2im_add(const T* cols, int C, int H, int W, int kh, int kw, int pad, T* gx) {
    const int Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
    for (int c = 0; c < C; ++c)
        for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj) {
                const T* src = cols + (int64_t)((c * kh + di) * kw + dj) * Ho * Wo;
                for (int y = 0; y < Ho; ++y) {
                    const int sy = y + di - pad;
                    if (sy < 0 || sy >= H) continue;
                    T* dst = gx + ((int64_t)c * H + sy) * W;
                    const int x0 = std::max(0, pad - dj);
                    const int x1 = std::min(Wo, W + pad - dj);
                    const T* srow = src + (int64_t)y * Wo;
                    for (int xo = x0; xo < x1; ++xo) dst[xo + dj - pad] += srow[xo];
                }
            }
}

}  // namespace detail

/// 2-d convolution, stride 1. x: [Ci,H,W], w: [Co,Ci,kh,kw], optional b: [Co].
/// pad = k/2 keeps the spatial size.
template <class T>
Node<T>* conv2d(Node<T>* x, Node<T>* w, Node<T>* b, int pad) {
    detail::require(x->val.ndim() == 3 && w->val.ndim() == 4, "conv2d: bad ranks");
    const int Ci = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
    const int Co = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
    detail::require(w->val.dim(1) == Ci, "conv2d: channel mismatch");
    const int Ho = H + 2 * pad - kh + 1, Wo = W + 2 * pad - kw + 1;
    detail::require(Ho > 0 && Wo > 0, "conv2d: kernel larger than padded input");
    const int K = Ci * kh * kw;
    const int64_t P = (int64_t)Ho * Wo;

    const bool unit = (kh == 1 && kw == 1 && pad == 0);
    auto cols = std::make_shared<Tensor<T>>();
    const T* col_ptr;
    if (unit) {
        col_ptr = x->val.data();
    } else {
        *cols = Tensor<T>::uninit({K, (int)P});
        detail::im2col(x->val.data(), Ci, H, W, kh, kw, pad, cols->data());
        col_ptr = cols->data();
    }

    Tensor<T> out = Tensor<T>::uninit({Co, Ho, Wo});
    {
        MapC<T> Wm(w->val.data(), Co, K);
        MapC<T> Cm(col_ptr, K, P);
        MapM<T> Y(out.data(), Co, P);
        Y.noalias() = Wm * Cm;
    }
    if (b) {
        detail::require(b->val.size() == Co, "conv2d: bias mismatch");
        for (int c = 0; c < Co; ++c)
            ArrMap<T>(out.data() + (int64_t)c * P, P) += b->val.v[(size_t)c];
    }
    std::vector<Node<T>*> parents = {x, w};
    if (b) parents.push_back(b);
    return x->tape->make(std::move(out), parents,
                         [x, w, b, cols, unit, Ci, H, W, Co, kh, kw, pad, K, P](Node<T>& n) {
                             MapC<T> dY(n.grad.data(), Co, P);
                             if (b && b->needs_grad) {
                                 auto& g = b->ensure_grad();
                                 for (int c = 0; c < Co; ++c)
                                     g.v[(size_t)c] += ArrMapC<T>(n.grad.data() + (int64_t)c * P, P).sum();
                             }
                             if (w->needs_grad) {
                                 const T* col_ptr = unit ? x->val.data() : cols->data();
                                 MapC<T> Cm(col_ptr, K, P);
                                 MapM<T> dW(w->ensure_grad().data(), Co, K);
                                 dW.noalias() += dY * Cm.transpose();
                             }
                             if (x->needs_grad) {
                                 MapC<T> Wm(w->val.data(), Co, K);
                                 if (unit) {
                                     MapM<T> dX(x->ensure_grad().data(), K, P);
                                     dX.noalias() += Wm.transpose() * dY;
                                 } else {
                                     Tensor<T> dcols = Tensor<T>::uninit({K, (int)P});
                                     MapM<T> dC(dcols.data(), K, P);
                                     dC.noalias() = Wm.transpose() * dY;
                                     detail::col2im_add(dcols.data(), Ci, H, W, kh, kw, pad,
                                                        x->ensure_grad().data());
                                 }
                             }
                         });
}

/// Spatial global average pooling: [C,H,W] -> [C].
template <class T>
Node<T>* global_avg_pool(Node<T>* x) {
    detail::require(x->val.ndim() == 3, "global_avg_pool: expects CHW");
    const int C = x->val.dim(0);
    const int64_t P = (int64_t)x->val.dim(1) * x->val.dim(2);
    Tensor<T> out = Tensor<T>::uninit({C});
    for (int c = 0; c < C; ++c) out.v[(size_t)c] = ArrMapC<T>(x->val.data() + c * P, P).mean();
    return x->tape->make(std::move(out), {x}, [x, C, P](Node<T>& n) {
        if (!x->needs_grad) return;
        auto& g = x->ensure_grad();
        for (int c = 0; c < C; ++c) ArrMap<T>(g.data() + c * P, P) += n.grad.v[(size_t)c] / (T)P;
    });
}

/// y[c,i,j] = x[c,i,j] * s[c].
template <class T>
Node<T>* channel_scale(Node<T>* x, Node<T>* s) {
    detail::require(x->val.ndim() == 3 && s->val.size() == x->val.dim(0), "channel_scale: shape mismatch");
    const int C = x->val.dim(0);
    const int64_t P = (int64_t)x->val.dim(1) * x->val.dim(2);
    Tensor<T> out = Tensor<T>::uninit(x->val.shape);
    for (int c = 0; c < C; ++c)
        ArrMap<T>(out.data() + c * P, P) = ArrMapC<T>(x->val.data() + c * P, P) * s->val.v[(size_t)c];
    return x->tape->make(std::move(out), {x, s}, [x, s, C, P](Node<T>& n) {
        if (x->needs_grad) {
            auto& g = x->ensure_grad();
            for (int c = 0; c < C; ++c)
                ArrMap<T>(g.data() + c * P, P) +=
                    ArrMapC<T>(n.grad.data() + c * P, P) * s->val.v[(size_t)c];
        }
        if (s->needs_grad) {
            auto& g = s->ensure_grad();
            for (int c = 0; c < C; ++c)
                g.v[(size_t)c] += (ArrMapC<T>(n.grad.data() + c * P, P) *
                                   ArrMapC<T>(x->val.data() + c * P, P))
                                      .sum();
        }
    });
}

}  // namespace coastal::nn
