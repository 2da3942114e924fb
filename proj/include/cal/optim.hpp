#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cal/tensor.hpp"

namespace cal {

/// A trainable tensor together with its checkpoint path, e.g. "encoder.layers.0.weight".
struct NamedParameter {
    std::string name;
    Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

using Rng = std::mt19937_64;

/// Glorot-uniform (fan_in x fan_out) weight matrix that requires a gradient.
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// (1 x width) zero bias that requires a gradient.
Tensor zero_bias(std::size_t width);

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment buffers for one fixed, ordered set of parameters.
struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;

    explicit AdamState(AdamOptions opts = {}) : options(opts) {}
};

/// One bias-corrected Adam update of every tensor in `params`, then zeroes
/// their gradients. The parameter order must be the same on every call
/// sharing a state. Throws ContractError if a parameter carries no gradient.
void adam_step(AdamState& state, const ParameterList& params);

}  // namespace cal
