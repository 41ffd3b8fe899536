// SPDX-License-Identifier: Apache-2.0
#include "lumeneq/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "lumeneq/error.hpp"

namespace lumeneq::nn {

namespace {

/// Every discrete decision taken by the forward pass: ReLU signs and pool winners.
struct KinkSignature {
    std::vector<bool> decisions;
    friend bool operator==(const KinkSignature&, const KinkSignature&) = default;
};

KinkSignature signature(const ForwardCache<double>& c) {
    KinkSignature s;
    const auto signs = [&s](const Mat<double>& pre) {
        for (Index i = 0; i < pre.size(); ++i) s.decisions.push_back(pre.data()[i] > 0.0);
    };
    const auto winners = [&s](const auto& arg) {
        for (Index i = 0; i < arg.size(); ++i) {
            const auto v = arg.data()[i];
            for (int bit = 0; bit < 8; ++bit) s.decisions.push_back(((v >> bit) & 1) != 0);
        }
    };
    signs(c.conv1.pre);
    signs(c.conv2.pre);
    signs(c.dense1.pre);
    winners(c.pool1.argmax);
    winners(c.pool2.argmax);
    return s;
}

struct Evaluation {
    double loss;
    KinkSignature kinks;
};

Evaluation evaluate(const ModelParams<double>& params, const Tensor<double>& batch,
                    const std::vector<std::uint8_t>& labels, const GradcheckOptions& opt) {
    ForwardCache<double> cache;
    const ForwardOptions fo{opt.batch_stats, false, 0};
    const Mat<double> probs = model_forward(params, batch, fo, &cache);
    return {bce_l2_loss(probs, labels, params, opt.lambda), signature(cache)};
}

}  // namespace

GradcheckReport finite_difference_gradcheck(const ModelParams<double>& params, const Tensor<double>& batch,
                                            const std::vector<std::uint8_t>& labels,
                                            const GradcheckOptions& opt) {
    const ForwardOptions fo{opt.batch_stats, false, 0};
    ForwardCache<double> cache;
    model_forward(params, batch, fo, &cache);
    ForwardCache<double> again;
    model_forward(params, batch, fo, &again);
    if (!(cache.probs.array() == again.probs.array()).all()) {
        throw ContractViolation("gradcheck: forward pass is not deterministic");
    }
    const ModelParams<double> analytic = backward(params, cache, labels, opt.lambda);
    const KinkSignature base = signature(cache);

    ModelParams<double> probe = params;
    auto probe_tensors = probe.tensors();
    const auto grad_tensors = analytic.tensors();

    struct Coordinate {
        std::size_t tensor;
        Index index;
    };
    std::vector<Coordinate> coords;
    for (std::size_t k = 0; k < probe_tensors.size(); ++k) {
        if (!probe_tensors[k].trainable) continue;
        for (Index i = 0; i < probe_tensors[k].tensor->size(); ++i) coords.push_back({k, i});
    }
    if (opt.max_coordinates != 0 && opt.max_coordinates < coords.size()) {
        Engine rng = make_engine(opt.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(opt.max_coordinates);
    }

    GradcheckReport report;
    for (const auto& [k, i] : coords) {
        double& w = probe_tensors[k].tensor->data()[i];
        const double saved = w;
        w = saved + opt.step;
        const Evaluation plus = evaluate(probe, batch, labels, opt);
        w = saved - opt.step;
        const Evaluation minus = evaluate(probe, batch, labels, opt);
        w = saved;
        if (!(plus.kinks == base) || !(minus.kinks == base)) {
            ++report.skipped_kinks;
            continue;
        }
        const double numeric = (plus.loss - minus.loss) / (2.0 * opt.step);
        const double exact = grad_tensors[k].tensor->data()[i];
        if (std::max(std::abs(exact), std::abs(numeric)) < opt.resolvable_gradient) {
            ++report.unresolved;
            report.max_unresolved_abs_error = std::max(report.max_unresolved_abs_error, std::abs(exact - numeric));
            continue;
        }
        const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-12});
        const double rel = std::abs(exact - numeric) / denom;
        ++report.checked;
        ++report.checked_per_kind[probe_tensors[k].kind];
        if (rel > report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_coordinate = probe_tensors[k].name + "[" + std::to_string(i) + "]";
        }
    }
    return report;
}

GradcheckProblem tiny_gradcheck_problem(Seed seed, Index batch_size) {
    const ModelArch arch = ModelArch::tiny();
    auto params = init_params<double>(arch, derive_seed(seed, Stream::weight_init));
    Engine rng = make_engine(seed, Stream::gradcheck);
    std::uniform_real_distribution<double> uni(-0.5, 0.5);
    std::uniform_real_distribution<double> pos(0.5, 1.5);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Move every bias and normalization statistic off its default so no
    // gradient path is trivially zero.
    for (auto& t : params.tensors()) {
        const bool is_bias = t.name.ends_with(".bias") || t.name.ends_with(".beta") ||
                             t.name.ends_with(".running_mean");
        const bool is_scale = t.name.ends_with(".gamma") || t.name.ends_with(".running_var") ||
                              t.name == "dense1.bias";  // keeps the 4 ReLU units from all dying at once
        for (Index i = 0; i < t.tensor->size(); ++i) {
            double& v = t.tensor->data()[i];
            if (is_scale) {
                v = pos(rng);
            } else if (is_bias) {
                v += uni(rng);
            }
        }
    }
    Tensor<double> batch(batch_size, arch.window, 1);
    for (Index i = 0; i < batch.data.size(); ++i) batch.data.data()[i] = gauss(rng);
    // Label every window against the network's current call. A confident,
    // correct output would leave p - y, and every gradient behind it, too
    // small for central differences to resolve.
    const Mat<double> probs = model_forward(params, batch, ForwardOptions{});
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(batch_size));
    for (Index b = 0; b < batch_size; ++b) labels[static_cast<std::size_t>(b)] = probs(b, 0) >= 0.5 ? 0 : 1;
    return {std::move(params), std::move(batch), std::move(labels)};
}

}  // namespace lumeneq::nn
