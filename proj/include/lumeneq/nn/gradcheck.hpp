// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lumeneq/nn/model.hpp"

namespace lumeneq::nn {

struct GradcheckOptions {
    double step = 1e-5;
    double lambda = 0.01;
    /// Normalize with batch statistics instead of the frozen running stats.
    bool batch_stats = false;
    /// 0 checks every trainable coordinate; otherwise a seeded sample of this size.
    std::size_t max_coordinates = 0;
    /// Central differences in double carry an absolute noise floor of about
    /// eps * |L| / h, near 1e-10 at h = 1e-5 for losses of order one.
    /// Coordinates whose gradient magnitude (analytic and numeric) is below
    /// this bound are compared in absolute terms instead.
    double resolvable_gradient = 1e-5;
    Seed seed = 7;
};

struct GradcheckReport {
    /// Over resolvable coordinates.
    double max_relative_error = 0.0;
    std::string worst_coordinate;
    std::size_t checked = 0;
    /// Coordinates below the resolvable bound and the largest |a - n| among them.
    std::size_t unresolved = 0;
    double max_unresolved_abs_error = 0.0;
    /// Coordinates whose perturbation moved a ReLU or max-pool decision.
    std::size_t skipped_kinks = 0;
    std::map<LayerKind, std::size_t> checked_per_kind;
};

/// Central differences (L(w + h) - L(w - h)) / 2h against backward(), in
/// 64-bit with dropout off. Relative error is |a - n| / max(|a|, |n|, 1e-12).
/// Coordinates whose perturbation flips a ReLU sign or a pooling winner are
/// skipped, since the loss is not differentiable across that step.
/// Throws ContractViolation when two identical forward passes disagree.
GradcheckReport finite_difference_gradcheck(const ModelParams<double>& params, const Tensor<double>& batch,
                                            const std::vector<std::uint8_t>& labels,
                                            const GradcheckOptions& options = {});

struct GradcheckProblem {
    ModelParams<double> params;
    Tensor<double> batch;
    std::vector<std::uint8_t> labels;
};

/// Tiny-profile model with randomized biases and normalization statistics,
/// a small random batch, and labels opposite to the model's current output.
GradcheckProblem tiny_gradcheck_problem(Seed seed, Index batch_size = 4);

}  // namespace lumeneq::nn
