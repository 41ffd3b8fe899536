// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "lumeneq/channel.hpp"

namespace lumeneq {

/// Mismatches / length. Throws ContractViolation on a length mismatch.
double bit_error_rate(const BitSequence& truth, const BitSequence& estimate);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t true_negative = 0;
    std::size_t false_negative = 0;
};

/// Positive class is bit 1; prediction is prob >= threshold. Precision and
/// recall are 1.0 when their denominator is zero.
ClassificationMetrics classification_metrics(const Eigen::VectorXd& probs, const std::vector<std::uint8_t>& labels,
                                             double threshold = 0.5);

/// sqrt(p (1 - p) / n)
double binomial_stderr(double p, std::size_t n);

}  // namespace lumeneq
