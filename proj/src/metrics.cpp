// SPDX-License-Identifier: Apache-2.0
#include "lumeneq/metrics.hpp"

#include <cmath>
#include <string>

#include "lumeneq/error.hpp"

namespace lumeneq {

double bit_error_rate(const BitSequence& truth, const BitSequence& estimate) {
    if (truth.size() != estimate.size()) {
        throw ContractViolation("bit_error_rate: lengths differ (" + std::to_string(truth.size()) + " vs " +
                                std::to_string(estimate.size()) + ")");
    }
    std::size_t errors = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) errors += truth[i] != estimate[i];
    return static_cast<double>(errors) / static_cast<double>(truth.size());
}

ClassificationMetrics classification_metrics(const Eigen::VectorXd& probs, const std::vector<std::uint8_t>& labels,
                                             double threshold) {
    if (static_cast<std::size_t>(probs.size()) != labels.size()) {
        throw ContractViolation("classification_metrics: " + std::to_string(probs.size()) + " predictions for " +
                                std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) {
        throw EmptySequenceError("classification_metrics: no predictions");
    }
    ClassificationMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 1) throw DomainError("classification_metrics: labels must be 0 or 1");
        const bool predicted = probs[static_cast<Eigen::Index>(i)] >= threshold;
        const bool actual = labels[i] == 1;
        if (predicted && actual) ++m.true_positive;
        else if (predicted) ++m.false_positive;
        else if (actual) ++m.false_negative;
        else ++m.true_negative;
    }
    const auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    m.accuracy = ratio(m.true_positive + m.true_negative, labels.size());
    m.precision = ratio(m.true_positive, m.true_positive + m.false_positive);
    m.recall = ratio(m.true_positive, m.true_positive + m.false_negative);
    return m;
}

double binomial_stderr(double p, std::size_t n) {
    if (n == 0) return 0.0;
    return std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

}  // namespace lumeneq
