#include "cal/optim.hpp"

#include <cmath>

#include "cal/errors.hpp"

namespace cal {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<double> values(fan_in * fan_out);
    for (double& v : values) v = dist(rng);
    return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

Tensor zero_bias(std::size_t width) { return Tensor::zeros({1, width}, true); }

void adam_step(AdamState& state, const ParameterList& params) {
    if (state.step == 0) {
        state.first_moment.clear();
        state.second_moment.clear();
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.tensor.size(), 0.0);
            state.second_moment.emplace_back(p.tensor.size(), 0.0);
        }
    } else if (state.first_moment.size() != params.size()) {
        throw ContractError("adam_step: parameter list changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].tensor.has_grad()) throw ContractError("adam_step: no gradient for parameter " + params[i].name);
        if (state.first_moment[i].size() != params[i].tensor.size())
            throw ContractError("adam_step: shape of parameter " + params[i].name + " changed");
    }

    const auto& o = state.options;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(o.beta1, t);
    const double correction2 = 1.0 - std::pow(o.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].tensor;
        auto values = p.values();
        auto grad = p.grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t k = 0; k < values.size(); ++k) {
            const double g = grad[k];
            m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g;
            v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g * g;
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            values[k] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
        }
        p.zero_grad();
    }
}

}  // namespace cal
