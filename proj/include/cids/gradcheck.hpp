#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "cids/autodiff.hpp"

namespace cids::nn {

// Central finite differences against reverse-mode gradients. `f` must
// rebuild its graph from the given leaves on every call; only forward
// evaluations of `f` are used on the numeric side, so the check is
// independent of every backward rule it verifies.
//
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator;
// returns the maximum over every element of every leaf.
//
// Central differences carry an irreducible rounding error of a few ulps of
// |f| divided by the step; a disagreement below that floor is unmeasurable
// by this oracle and counts as agreement.
inline double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& leaves,
                         double step = 1e-5) {
    Tensor loss = f();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(leaves.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grads());

    const double noise_floor = 8.0 * std::numeric_limits<double>::epsilon() *
                               std::max(1.0, std::fabs(loss.item())) / (2.0 * step);

    double max_rel = 0.0;
    for (size_t l = 0; l < leaves.size(); ++l) {
        auto& values = const_cast<Tensor&>(leaves[l]).mutable_values();
        for (size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double up = f().item();
            values[i] = saved - step;
            const double down = f().item();
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[l][i];
            if (std::fabs(a - numeric) <= noise_floor) continue;
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
        }
    }
    return max_rel;
}

} // namespace cids::nn
