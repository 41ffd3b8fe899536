// SPDX-License-Identifier: Apache-2.0
//
// The CNN-BiLSTM equalizer:
//   Conv1D(k5) -> BN -> MaxPool2 -> Dropout
//   Conv1D(k3) -> BN -> MaxPool2 -> Dropout
//   BiLSTM(sequences) -> BiLSTM(final state)
//   Dense(ReLU) -> Dropout -> Dense(1, sigmoid)
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lumeneq/nn/layers.hpp"
#include "lumeneq/rng.hpp"

namespace lumeneq::nn {

enum class LayerKind { conv1d, batchnorm, maxpool, dropout, bilstm, dense };

std::string to_string(LayerKind kind);

struct LayerSpec {
    LayerKind kind;
    int filters = 0;
    int kernel_size = 0;
    int pool_size = 0;
    double rate = 0.0;
    int units = 0;
    bool return_sequences = false;
    Activation activation = Activation::linear;
    double l2 = 0.0;
    bool same_padding = false;

    /// Throws ConfigError when a hyperparameter is out of range.
    void validate() const;
};

/// Hyperparameters of the fixed layer stack.
struct ModelArch {
    int window = 64;
    int conv1_filters = 64;
    int conv1_kernel = 5;
    int conv2_filters = 128;
    int conv2_kernel = 3;
    int pool = 2;
    double conv_dropout = 0.3;
    int lstm1_units = 64;
    int lstm2_units = 32;
    int dense_units = 32;
    double dense_dropout = 0.2;
    double l2 = 0.01;

    /// The full equalizer.
    static ModelArch standard() { return {}; }
    /// Small profile for finite-difference checks: window 8, filters 2/4,
    /// LSTM units 3/2.
    static ModelArch tiny();

    [[nodiscard]] std::vector<LayerSpec> layers() const;
    void validate() const;
    /// Stable hash of the canonical description.
    [[nodiscard]] std::uint64_t hash() const;
    [[nodiscard]] std::string describe() const;

    friend bool operator==(const ModelArch&, const ModelArch&) = default;
};

template <typename Scalar>
struct NamedTensor {
    std::string name;
    Mat<Scalar>* tensor;
    bool trainable;
    LayerKind kind;
};

template <typename Scalar>
struct ConstNamedTensor {
    std::string name;
    const Mat<Scalar>* tensor;
    bool trainable;
    LayerKind kind;
};

template <typename Scalar>
struct ModelParams {
    ModelArch arch;
    Conv1dParams<Scalar> conv1;
    BatchNormParams<Scalar> bn1;
    Conv1dParams<Scalar> conv2;
    BatchNormParams<Scalar> bn2;
    BiLstmParams<Scalar> lstm1;
    BiLstmParams<Scalar> lstm2;
    DenseParams<Scalar> dense1;
    DenseParams<Scalar> dense2;

    /// Shapes `arch` implies; batchnorm is the identity (gamma = 1,
    /// running_var = 1), everything else zero.
    static ModelParams identity(const ModelArch& arch);
    /// Every tensor zero. The shape of a gradient or optimizer moment.
    static ModelParams zeros(const ModelArch& arch);

    /// Every tensor in declaration order. This order is the serialization order.
    std::vector<NamedTensor<Scalar>> tensors();
    [[nodiscard]] std::vector<ConstNamedTensor<Scalar>> tensors() const;

    [[nodiscard]] Index parameter_count(bool trainable_only = true) const;

    template <typename Other>
    [[nodiscard]] ModelParams<Other> cast() const;

    /// Throws ShapeError when any tensor disagrees with `arch`.
    void check_shapes() const;
};

/// Which stochastic or batch-dependent behaviour a forward pass uses.
struct ForwardOptions {
    bool batch_stats = false;  // batchnorm normalizes with batch statistics
    bool dropout = false;
    Seed dropout_seed = 0;

    static ForwardOptions for_mode(Mode mode, Seed seed = 0) {
        return mode == Mode::train ? ForwardOptions{true, true, seed} : ForwardOptions{};
    }
};

template <typename Scalar>
struct ForwardCache {
    ForwardOptions options;
    Tensor<Scalar> input;
    Conv1dCache<Scalar> conv1;
    BatchNormCache<Scalar> bn1;
    MaxPoolCache<Scalar> pool1;
    DropoutCache<Scalar> drop1;
    Conv1dCache<Scalar> conv2;
    BatchNormCache<Scalar> bn2;
    MaxPoolCache<Scalar> pool2;
    DropoutCache<Scalar> drop2;
    Tensor<Scalar> lstm1_in;
    BiLstmCache<Scalar> lstm1;
    Tensor<Scalar> lstm2_in;
    BiLstmCache<Scalar> lstm2;
    DenseCache<Scalar> dense1;
    DropoutCache<Scalar> drop3;
    DenseCache<Scalar> dense2;
    Mat<Scalar> probs;
    bool valid = false;
};

/// Shape of every intermediate activation, for assertion in tests.
struct ShapeTrace {
    struct Entry {
        std::string layer;
        Index batch, time, channels;
    };
    std::vector<Entry> entries;
};

/// batch: (B, window, 1). Returns (B, 1) probabilities in (0, 1).
template <typename Scalar>
Mat<Scalar> model_forward(const ModelParams<Scalar>& params, const Tensor<Scalar>& batch,
                          const ForwardOptions& options, ForwardCache<Scalar>* cache = nullptr,
                          ShapeTrace* trace = nullptr);

template <typename Scalar>
Mat<Scalar> model_forward(const ModelParams<Scalar>& params, const Tensor<Scalar>& batch, Mode mode,
                          Seed seed = 0) {
    return model_forward(params, batch, ForwardOptions::for_mode(mode, seed));
}

inline constexpr double kProbClip = 1e-7;

/// Mean binary cross-entropy over the batch (probabilities clipped to
/// [1e-7, 1 - 1e-7]) plus lambda * sum of squared conv kernel weights.
template <typename Scalar>
double bce_l2_loss(const Mat<Scalar>& probs, const std::vector<std::uint8_t>& labels,
                   const ModelParams<Scalar>& params, double lambda);

/// The L2 term alone.
template <typename Scalar>
double l2_penalty(const ModelParams<Scalar>& params, double lambda);

/// Reverse-mode gradient of bce_l2_loss with respect to every trainable
/// tensor. Non-trainable slots (running statistics) stay zero.
template <typename Scalar>
ModelParams<Scalar> backward(const ModelParams<Scalar>& params, const ForwardCache<Scalar>& cache,
                             const std::vector<std::uint8_t>& labels, double lambda);

/// Folds the batch statistics of a train-mode pass into the running stats.
template <typename Scalar>
void update_running_stats(ModelParams<Scalar>& params, const ForwardCache<Scalar>& cache);

/// Glorot-uniform kernels, zero biases, forget-gate bias 1, BN identity.
template <typename Scalar>
ModelParams<Scalar> init_params(const ModelArch& arch, Seed seed);

/// Packs windows (one row per window) into a (B, window, 1) tensor.
template <typename Scalar, typename Derived>
Tensor<Scalar> windows_to_tensor(const Eigen::MatrixBase<Derived>& windows) {
    const Index B = windows.rows(), T = windows.cols();
    Tensor<Scalar> x(B, T, 1);
    for (Index t = 0; t < T; ++t) {
        x.step(t).col(0) = windows.col(t).template cast<Scalar>();
    }
    return x;
}

}  // namespace lumeneq::nn
