#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "coastal/errors.hpp"
#include "coastal/rng.hpp"

namespace coastal::nn {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + "]";
}

/// Allocator that skips zero-initialization for arithmetic element types;
/// large intermediate buffers are fully overwritten anyway.
template <class T>
struct UninitAlloc : std::allocator<T> {
    template <class U>
    struct rebind {
        using other = UninitAlloc<U>;
    };
    template <class U, class... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0)
            ::new (static_cast<void*>(p)) U;
        else
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

/// Dense row-major tensor. The scalar type is float on the training path
/// and double for the finite-difference checks. Tensor(shape) zero-fills;
/// uninit(shape) does not.
template <class T>
struct Tensor {
    using Vec = std::vector<T, UninitAlloc<T>>;

    Shape shape;
    Vec v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), v((size_t)shape_numel(shape)) {
        std::fill(v.begin(), v.end(), T(0));
    }
    Tensor(Shape s, Vec data) : shape(std::move(s)), v(std::move(data)) {
        if ((int64_t)v.size() != shape_numel(shape))
            throw ConfigError("tensor data size does not match shape " + shape_str(shape));
    }
    Tensor(Shape s, const std::vector<T>& data) : shape(std::move(s)), v(data.begin(), data.end()) {
        if ((int64_t)v.size() != shape_numel(shape))
            throw ConfigError("tensor data size does not match shape " + shape_str(shape));
    }
    Tensor(Shape s, std::initializer_list<T> data) : shape(std::move(s)), v(data.begin(), data.end()) {
        if ((int64_t)v.size() != shape_numel(shape))
            throw ConfigError("tensor data size does not match shape " + shape_str(shape));
    }

    static Tensor uninit(Shape s) {
        Tensor t;
        t.shape = std::move(s);
        t.v.resize((size_t)shape_numel(t.shape));
        return t;
    }

    static Tensor full(Shape s, T value) {
        Tensor t = uninit(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    static Tensor random_uniform(Shape s, Rng& rng, T lo, T hi) {
        Tensor t = uninit(std::move(s));
        for (auto& x : t.v) x = (T)rng.uniform((double)lo, (double)hi);
        return t;
    }

    int64_t size() const { return (int64_t)v.size(); }
    int dim(int i) const { return shape[(size_t)i]; }
    int ndim() const { return (int)shape.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }
    bool empty() const { return v.empty(); }
    void release() {
        v.clear();
        v.shrink_to_fit();
    }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out = Tensor<U>::uninit(shape);
        for (size_t i = 0; i < v.size(); ++i) out.v[i] = (U)v[i];
        return out;
    }
};

template <class T>
bool all_finite(const Tensor<T>& t) {
    for (T x : t.v)
        if (!std::isfinite((double)x)) return false;
    return true;
}

}  // namespace coastal::nn
