// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "lumeneq/error.hpp"
#include "lumeneq/nn/model.hpp"

namespace lumeneq::nn {

template <typename Scalar>
struct AdamState {
    ModelParams<Scalar> first_moment;
    ModelParams<Scalar> second_moment;
    std::int64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-4;

    static AdamState zeros(const ModelArch& arch, double learning_rate) {
        AdamState s{ModelParams<Scalar>::zeros(arch), ModelParams<Scalar>::zeros(arch)};
        s.learning_rate = learning_rate;
        return s;
    }
};

/// Bias-corrected Adam update of every trainable tensor. Increments the step
/// counter once.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, AdamState<Scalar>& state) {
    auto p = params.tensors();
    const auto g = grads.tensors();
    auto m = state.first_moment.tensors();
    auto v = state.second_moment.tensors();
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
        throw ShapeError("adam_step: parameter lists differ");
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const Scalar b1 = Scalar(state.beta1), b2 = Scalar(state.beta2);
    const Scalar correction1 = Scalar(1.0 - std::pow(state.beta1, t));
    const Scalar correction2 = Scalar(1.0 - std::pow(state.beta2, t));
    const Scalar lr = Scalar(state.learning_rate);
    const Scalar eps = Scalar(state.epsilon);
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (!p[k].trainable) continue;
        auto& w = *p[k].tensor;
        const auto& dw = *g[k].tensor;
        if (w.rows() != dw.rows() || w.cols() != dw.cols()) {
            throw ShapeError("adam_step: gradient shape mismatch for " + p[k].name);
        }
        auto& mk = *m[k].tensor;
        auto& vk = *v[k].tensor;
        mk = b1 * mk + (Scalar(1) - b1) * dw;
        vk = b2 * vk + (Scalar(1) - b2) * dw.cwiseAbs2();
        w.array() -= lr * (mk.array() / correction1) / ((vk.array() / correction2).sqrt() + eps);
    }
}

}  // namespace lumeneq::nn
