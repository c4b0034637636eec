#pragma once

// Central finite-difference oracle for analytic gradients. Rebuilds the graph
// from leaf values, so it stays independent of the backward implementation.

#include <functional>
#include <vector>

#include "coastal/nn/graph.hpp"
#include "coastal/rng.hpp"

namespace gradcheck {

using coastal::Rng;
using coastal::nn::Node;
using coastal::nn::Tape;
using coastal::nn::Tensor;

using BuildFn = std::function<Node<double>*(Tape<double>&, const std::vector<Node<double>*>&)>;

struct Result {
    double max_rel_err = 0.0;
    int probes = 0;
};

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

/// Compares analytic leaf gradients against central differences on randomly
/// probed leaf elements. h is the absolute finite-difference step.
inline Result check(const BuildFn& build, const std::vector<Tensor<double>>& leaf_vals, int probes,
                    uint64_t seed, double h = 1e-6) {
    // analytic pass
    Tape<double> tape;
    std::vector<Node<double>*> leaves;
    for (const auto& t : leaf_vals) leaves.push_back(tape.leaf(t, true));
    Node<double>* root = build(tape, leaves);
    tape.backward(root);
    std::vector<Tensor<double>> grads;
    for (auto* l : leaves) grads.push_back(l->grad.empty() ? Tensor<double>(l->val.shape) : l->grad);

    auto eval = [&](const std::vector<Tensor<double>>& vals) {
        Tape<double> t2;
        std::vector<Node<double>*> ls;
        for (const auto& t : vals) ls.push_back(t2.leaf(t, false));
        return build(t2, ls)->val.v[0];
    };

    Rng rng(seed);
    Result res;
    std::vector<Tensor<double>> work = leaf_vals;
    for (int p = 0; p < probes; ++p) {
        const size_t li = (size_t)rng.below(leaf_vals.size());
        if (leaf_vals[li].size() == 0) continue;
        const size_t ei = (size_t)rng.below((uint64_t)leaf_vals[li].size());
        const double orig = work[li].v[ei];
        work[li].v[ei] = orig + h;
        const double fp = eval(work);
        work[li].v[ei] = orig - h;
        const double fm = eval(work);
        work[li].v[ei] = orig;
        const double fd = (fp - fm) / (2 * h);
        res.max_rel_err = std::max(res.max_rel_err, rel_err(grads[li].v[ei], fd));
        ++res.probes;
    }
    return res;
}

}  // namespace gradcheck
