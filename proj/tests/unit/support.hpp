#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cal/tape.hpp"

namespace cal::testing {

inline constexpr double kStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

/// Max-norm relative error between two gradient vectors.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    }
    return scale < 1e-8 ? diff : diff / scale;
}

/// Scalar function of a fixed set of leaf tensors, rebuilt on a fresh tape each call.
using ScalarFn = std::function<Tensor(Tape&)>;

/// Worst relative error between backward() and central differences, over the given leaves.
inline double gradient_check(const ScalarFn& f, const std::vector<Tensor>& leaves, double h = kStep) {
    for (auto leaf : leaves) leaf.zero_grad();
    {
        Tape tape;
        tape.backward(f(tape));
    }
    double worst = 0.0;
    for (auto leaf : leaves) {
        std::vector<double> analytic(leaf.size(), 0.0);
        if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
        std::vector<double> numeric(leaf.size());
        auto v = leaf.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double saved = v[i];
            Tape plus(false), minus(false);
            v[i] = saved + h;
            const double fp = f(plus).item();
            v[i] = saved - h;
            const double fm = f(minus).item();
            v[i] = saved;
            numeric[i] = (fp - fm) / (2.0 * h);
        }
        worst = std::max(worst, relative_error(analytic, numeric));
        leaf.zero_grad();
    }
    return worst;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(r * c);
    for (auto& x : v) x = u(rng);
    return Tensor::from({r, c}, std::move(v), requires_grad);
}

/// Values bounded away from zero, so relu kinks sit outside the difference stencil.
inline Tensor away_from_zero(std::size_t r, std::size_t c, std::mt19937_64& rng) {
    Tensor t = random_tensor(r, c, rng);
    for (auto& x : t.values()) x = x < 0 ? x - 0.05 : x + 0.05;
    return t;
}

/// Scalar reduction with random weights so every output entry matters.
inline Tensor weighted_sum(Tape& tape, const Tensor& t, const Tensor& weights) {
    return tape.sum(tape.mul(t, weights));
}

}  // namespace cal::testing
