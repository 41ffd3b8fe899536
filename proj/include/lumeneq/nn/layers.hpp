// SPDX-License-Identifier: Apache-2.0
//
// Layer kernels for the equalizer network. Every layer is a pair of free
// functions: `*_forward` fills an optional cache, `*_backward` consumes it and
// accumulates parameter gradients. All activations use the time-major Tensor
// layout, so temporal shifts and pooling windows are contiguous row blocks.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "lumeneq/error.hpp"
#include "lumeneq/nn/tensor.hpp"
#include "lumeneq/rng.hpp"

namespace lumeneq::nn {

enum class Activation { linear, relu, sigmoid };

enum class Mode { train, infer };

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

// ---------------------------------------------------------------------------
// Activations

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    if (x >= Scalar(0)) {
        return Scalar(1) / (Scalar(1) + std::exp(-x));
    }
    const Scalar e = std::exp(x);
    return e / (Scalar(1) + e);
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
    return x.logistic();
}

/// Applies `act` in place.
template <typename Scalar>
void activate(Mat<Scalar>& z, Activation act) {
    switch (act) {
        case Activation::linear:
            break;
        case Activation::relu:
            z = z.cwiseMax(Scalar(0));
            break;
        case Activation::sigmoid:
            z = z.array().logistic().matrix();
            break;
    }
}

/// d(act)/dz given pre-activation z and output y, multiplied into `grad`.
/// ReLU'(0) is taken as 0.
template <typename Scalar>
void activation_backward(Mat<Scalar>& grad, const Mat<Scalar>& pre, const Mat<Scalar>& out,
                         Activation act) {
    switch (act) {
        case Activation::linear:
            break;
        case Activation::relu:
            grad = (pre.array() > Scalar(0)).select(grad, Scalar(0));
            break;
        case Activation::sigmoid:
            grad.array() *= out.array() * (Scalar(1) - out.array());
            break;
    }
}

// ---------------------------------------------------------------------------
// Conv1D, stride 1, "same" zero padding.

template <typename Scalar>
struct Conv1dParams {
    /// (kernel_size * in_channels) x filters; row k * in_channels + c is the
    /// weight from input channel c at tap k to every filter.
    Mat<Scalar> kernel;
    Mat<Scalar> bias;  // 1 x filters
    Index kernel_size = 1;

    [[nodiscard]] Index in_channels() const { return kernel.rows() / kernel_size; }
    [[nodiscard]] Index filters() const { return kernel.cols(); }
    /// Weight w[k, c_in, c_out].
    [[nodiscard]] Scalar& weight(Index k, Index c_in, Index c_out) {
        return kernel(k * in_channels() + c_in, c_out);
    }
};

template <typename Scalar>
struct Conv1dCache {
    Mat<Scalar> columns;
    Mat<Scalar> pre;
    Mat<Scalar> out;
};

/// Unfolds each time step's receptive field into one row. Tap k reads input
/// time t + k - kernel_size / 2, zero outside [0, time).
template <typename Scalar>
Mat<Scalar> im2col(const Tensor<Scalar>& x, Index kernel_size) {
    const Index B = x.batch, T = x.time, C = x.channels();
    const Index half = kernel_size / 2;
    Mat<Scalar> cols = Mat<Scalar>::Zero(B * T, kernel_size * C);
    for (Index k = 0; k < kernel_size; ++k) {
        const Index shift = k - half;
        const Index t0 = std::max<Index>(0, -shift);
        const Index t1 = std::min<Index>(T, T - shift);
        if (t1 <= t0) continue;
        cols.block(t0 * B, k * C, (t1 - t0) * B, C) = x.data.middleRows((t0 + shift) * B, (t1 - t0) * B);
    }
    return cols;
}

/// Adjoint of im2col: scatters column gradients back onto the input.
template <typename Scalar>
void col2im_add(const Mat<Scalar>& dcols, Index kernel_size, Tensor<Scalar>& dx) {
    const Index B = dx.batch, T = dx.time, C = dx.channels();
    const Index half = kernel_size / 2;
    for (Index k = 0; k < kernel_size; ++k) {
        const Index shift = k - half;
        const Index t0 = std::max<Index>(0, -shift);
        const Index t1 = std::min<Index>(T, T - shift);
        if (t1 <= t0) continue;
        dx.data.middleRows((t0 + shift) * B, (t1 - t0) * B) += dcols.block(t0 * B, k * C, (t1 - t0) * B, C);
    }
}

template <typename Scalar>
Tensor<Scalar> conv1d_forward(const Tensor<Scalar>& x, const Conv1dParams<Scalar>& p, Activation act,
                              Conv1dCache<Scalar>* cache = nullptr) {
    if (p.kernel_size % 2 == 0) {
        throw ShapeError("conv1d: kernel length must be odd for same padding");
    }
    if (p.kernel.rows() != p.kernel_size * x.channels()) {
        throw ShapeError("conv1d: input has " + std::to_string(x.channels()) +
                         " channels, kernel expects " + std::to_string(p.in_channels()));
    }
    Mat<Scalar> cols = im2col(x, p.kernel_size);
    Mat<Scalar> pre = cols * p.kernel;
    pre.rowwise() += p.bias.row(0);
    Mat<Scalar> out = pre;
    activate(out, act);
    if (cache) {
        cache->columns = std::move(cols);
        cache->pre = std::move(pre);
        cache->out = out;
    }
    return Tensor<Scalar>(std::move(out), x.batch, x.time);
}

/// Accumulates into `grad`; returns the input gradient.
template <typename Scalar>
Tensor<Scalar> conv1d_backward(const Tensor<Scalar>& dy, const Conv1dParams<Scalar>& p, Activation act,
                               const Conv1dCache<Scalar>& cache, Conv1dParams<Scalar>& grad,
                               bool need_input_grad = true) {
    Mat<Scalar> dpre = dy.data;
    activation_backward(dpre, cache.pre, cache.out, act);
    grad.kernel.noalias() += cache.columns.transpose() * dpre;
    grad.bias += dpre.colwise().sum();
    Tensor<Scalar> dx(dy.batch, dy.time, p.in_channels());
    if (need_input_grad) {
        const Mat<Scalar> dcols = dpre * p.kernel.transpose();
        col2im_add(dcols, p.kernel_size, dx);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Batch normalization over (batch x time) per channel.

template <typename Scalar>
struct BatchNormParams {
    Mat<Scalar> gamma;  // 1 x C
    Mat<Scalar> beta;
    Mat<Scalar> running_mean;
    Mat<Scalar> running_var;
};

template <typename Scalar>
struct BatchNormCache {
    bool batch_stats = false;
    Mat<Scalar> xhat;
    RowVec<Scalar> inv_std;
    RowVec<Scalar> mean;
    RowVec<Scalar> var;
};

template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& x, const BatchNormParams<Scalar>& p,
                                 bool batch_stats, BatchNormCache<Scalar>* cache = nullptr) {
    if (p.gamma.cols() != x.channels()) {
        throw ShapeError("batchnorm: channel mismatch");
    }
    const Scalar eps = Scalar(kBatchNormEpsilon);
    RowVec<Scalar> mean, var;
    if (batch_stats) {
        if (x.batch < 2) {
            throw DegenerateBatchError("batchnorm: train mode needs a batch of at least 2");
        }
        const Scalar n = Scalar(x.data.rows());
        mean = x.data.colwise().sum() / n;
        var = (x.data.rowwise() - mean).array().square().colwise().sum().matrix() / n;
    } else {
        mean = p.running_mean.row(0);
        var = p.running_var.row(0);
    }
    const RowVec<Scalar> inv_std = (var.array() + eps).rsqrt().matrix();
    Mat<Scalar> xhat = ((x.data.rowwise() - mean).array().rowwise() * inv_std.array()).matrix();
    Mat<Scalar> out = (xhat.array().rowwise() * p.gamma.row(0).array()).matrix();
    out.rowwise() += p.beta.row(0);
    if (cache) {
        cache->batch_stats = batch_stats;
        cache->xhat = std::move(xhat);
        cache->inv_std = inv_std;
        cache->mean = std::move(mean);
        cache->var = std::move(var);
    }
    return Tensor<Scalar>(std::move(out), x.batch, x.time);
}

template <typename Scalar>
Tensor<Scalar> batchnorm_backward(const Tensor<Scalar>& dy, const BatchNormParams<Scalar>& p,
                                  const BatchNormCache<Scalar>& cache, BatchNormParams<Scalar>& grad) {
    grad.gamma += (dy.data.array() * cache.xhat.array()).colwise().sum().matrix();
    grad.beta += dy.data.colwise().sum();
    const Mat<Scalar> dxhat = (dy.data.array().rowwise() * p.gamma.row(0).array()).matrix();
    Mat<Scalar> dx;
    if (cache.batch_stats) {
        const Scalar n = Scalar(dy.data.rows());
        const RowVec<Scalar> sum_dxhat = dxhat.colwise().sum();
        const RowVec<Scalar> sum_dxhat_xhat = (dxhat.array() * cache.xhat.array()).colwise().sum().matrix();
        dx = ((dxhat.array() * n).rowwise() - sum_dxhat.array()).matrix();
        dx.array() -= cache.xhat.array().rowwise() * sum_dxhat_xhat.array();
        dx.array().rowwise() *= (cache.inv_std.array() / n);
    } else {
        dx = (dxhat.array().rowwise() * cache.inv_std.array()).matrix();
    }
    return Tensor<Scalar>(std::move(dx), dy.batch, dy.time);
}

/// Exponential moving update of the running statistics from one batch.
template <typename Scalar>
void batchnorm_update_running(BatchNormParams<Scalar>& p, const BatchNormCache<Scalar>& cache) {
    if (!cache.batch_stats) return;
    const Scalar m = Scalar(kBatchNormMomentum);
    p.running_mean = m * p.running_mean + (Scalar(1) - m) * cache.mean;
    p.running_var = m * p.running_var + (Scalar(1) - m) * cache.var;
}

// ---------------------------------------------------------------------------
// MaxPool1D, non-overlapping windows; a trailing remainder is dropped.

template <typename Scalar>
struct MaxPoolCache {
    Index in_time = 0;
    /// Offset within the window of the winning element.
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> argmax;
};

template <typename Scalar>
Tensor<Scalar> maxpool1d_forward(const Tensor<Scalar>& x, Index pool, MaxPoolCache<Scalar>* cache = nullptr) {
    if (pool < 1 || pool > 255) {
        throw ShapeError("maxpool1d: pool size out of range");
    }
    if (x.time < pool) {
        throw ShapeError("maxpool1d: time length " + std::to_string(x.time) + " shorter than pool " +
                         std::to_string(pool));
    }
    const Index B = x.batch, C = x.channels(), T_out = x.time / pool;
    Tensor<Scalar> y(B, T_out, C);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> arg;
    if (cache) arg.setZero(B * T_out, C);
    for (Index t = 0; t < T_out; ++t) {
        auto out = y.step(t);
        out = x.step(t * pool);
        for (Index j = 1; j < pool; ++j) {
            const auto cand = x.step(t * pool + j);
            for (Index c = 0; c < C; ++c) {
                for (Index b = 0; b < B; ++b) {
                    // Strict comparison: the earliest maximum wins ties.
                    if (cand(b, c) > out(b, c)) {
                        out(b, c) = cand(b, c);
                        if (cache) arg(t * B + b, c) = static_cast<std::uint8_t>(j);
                    }
                }
            }
        }
    }
    if (cache) {
        cache->in_time = x.time;
        cache->argmax = std::move(arg);
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> maxpool1d_backward(const Tensor<Scalar>& dy, Index pool, const MaxPoolCache<Scalar>& cache) {
    const Index B = dy.batch, C = dy.channels();
    Tensor<Scalar> dx(B, cache.in_time, C);
    for (Index t = 0; t < dy.time; ++t) {
        for (Index c = 0; c < C; ++c) {
            for (Index b = 0; b < B; ++b) {
                const Index j = cache.argmax(t * B + b, c);
                dx.data((t * pool + j) * B + b, c) += dy.data(t * B + b, c);
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Inverted dropout.

template <typename Scalar>
struct DropoutCache {
    bool active = false;
    Mat<Scalar> mask;  // 0 or 1 / (1 - rate)
};

template <typename Scalar>
Tensor<Scalar> dropout_forward(const Tensor<Scalar>& x, double rate, bool active, Seed seed,
                               DropoutCache<Scalar>* cache = nullptr) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw DomainError("dropout: rate must lie in [0, 1)");
    }
    if (!active || rate == 0.0) {
        if (cache) cache->active = false;
        return x;
    }
    Engine rng = make_engine(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Scalar keep_scale = Scalar(1.0 / (1.0 - rate));
    Mat<Scalar> mask(x.data.rows(), x.data.cols());
    for (Index i = 0; i < mask.size(); ++i) {
        mask.data()[i] = unit(rng) < rate ? Scalar(0) : keep_scale;
    }
    Tensor<Scalar> y(x.data.cwiseProduct(mask), x.batch, x.time);
    if (cache) {
        cache->active = true;
        cache->mask = std::move(mask);
    }
    return y;
}

template <typename Scalar>
Tensor<Scalar> dropout_backward(const Tensor<Scalar>& dy, const DropoutCache<Scalar>& cache) {
    if (!cache.active) return dy;
    return Tensor<Scalar>(dy.data.cwiseProduct(cache.mask), dy.batch, dy.time);
}

// ---------------------------------------------------------------------------
// LSTM.

enum class Gate : Index { forget = 0, input = 1, candidate = 2, output = 3 };

template <typename Scalar>
struct LstmParams {
    /// (units + in_channels) x (4 * units). Rows act on the concatenation
    /// [h_{t-1}, x_t]; column blocks are the forget, input, candidate and
    /// output gates in that order.
    Mat<Scalar> weights;
    Mat<Scalar> bias;  // 1 x (4 * units)
    Index units = 0;

    [[nodiscard]] Index in_channels() const { return weights.rows() - units; }
    [[nodiscard]] auto gate_weights(Gate g) { return weights.middleCols(static_cast<Index>(g) * units, units); }
    [[nodiscard]] auto gate_weights(Gate g) const {
        return weights.middleCols(static_cast<Index>(g) * units, units);
    }
    [[nodiscard]] auto gate_bias(Gate g) { return bias.middleCols(static_cast<Index>(g) * units, units); }
    [[nodiscard]] auto gate_bias(Gate g) const { return bias.middleCols(static_cast<Index>(g) * units, units); }
    [[nodiscard]] auto recurrent_weights() const { return weights.topRows(units); }
    [[nodiscard]] auto input_weights() const { return weights.bottomRows(in_channels()); }
};

template <typename Scalar>
struct LstmStep {
    Mat<Scalar> h;
    Mat<Scalar> c;
    /// Activated gates [f, i, c~, o], batch x (4 * units).
    Mat<Scalar> gates;
};

/// Turns gate pre-activations into the activated gates and the new state.
template <typename Scalar, typename Pre, typename CPrev>
void lstm_gate_update(const Eigen::MatrixBase<Pre>& pre, const Eigen::MatrixBase<CPrev>& c_prev, Index H,
                      Mat<Scalar>& gates, Mat<Scalar>& c, Mat<Scalar>& tanh_c, Mat<Scalar>& h) {
    gates.resize(pre.rows(), 4 * H);
    gates.leftCols(2 * H) = pre.leftCols(2 * H).array().logistic().matrix();
    gates.middleCols(2 * H, H) = pre.middleCols(2 * H, H).array().tanh().matrix();
    gates.rightCols(H) = pre.rightCols(H).array().logistic().matrix();
    c = (gates.leftCols(H).array() * c_prev.array() +
         gates.middleCols(H, H).array() * gates.middleCols(2 * H, H).array())
            .matrix();
    tanh_c = c.array().tanh().matrix();
    h = (gates.rightCols(H).array() * tanh_c.array()).matrix();
}

/// One step of the gated recurrence:
///   f = sig(W_f [h, x] + b_f), i = sig(W_i [h, x] + b_i), c~ = tanh(W_C [h, x] + b_C)
///   C = f * C_prev + i * c~,   o = sig(W_o [h, x] + b_o),  h = o * tanh(C)
template <typename Scalar>
LstmStep<Scalar> lstm_cell_step(const Mat<Scalar>& x_t, const Mat<Scalar>& h_prev, const Mat<Scalar>& c_prev,
                                const LstmParams<Scalar>& p) {
    const Index H = p.units;
    if (h_prev.cols() != H || c_prev.cols() != H || x_t.cols() != p.in_channels() ||
        h_prev.rows() != x_t.rows() || c_prev.rows() != x_t.rows()) {
        throw ShapeError("lstm_cell_step: [h, x] does not match the gate weights");
    }
    Mat<Scalar> pre = h_prev * p.recurrent_weights() + x_t * p.input_weights();
    pre.rowwise() += p.bias.row(0);
    LstmStep<Scalar> s;
    Mat<Scalar> tanh_c;
    lstm_gate_update<Scalar>(pre, c_prev, H, s.gates, s.c, tanh_c, s.h);
    return s;
}

template <typename Scalar>
struct LstmCache {
    bool reverse = false;
    Mat<Scalar> gates;   // (T*B) x 4H, activated, indexed by time
    Mat<Scalar> c;       // (T*B) x H
    Mat<Scalar> tanh_c;  // (T*B) x H
    Mat<Scalar> h;       // (T*B) x H
};

/// Runs one direction over the whole sequence from zero state. Returns the
/// hidden state at every time index (time order, regardless of direction).
template <typename Scalar>
Tensor<Scalar> lstm_sequence_forward(const Tensor<Scalar>& x, const LstmParams<Scalar>& p, bool reverse,
                                     LstmCache<Scalar>* cache = nullptr) {
    if (x.channels() != p.in_channels()) {
        throw ShapeError("lstm: input has " + std::to_string(x.channels()) + " channels, expected " +
                         std::to_string(p.in_channels()));
    }
    const Index B = x.batch, T = x.time, H = p.units;
    Mat<Scalar> xw = x.data * p.input_weights();
    xw.rowwise() += p.bias.row(0);
    LstmCache<Scalar> local;
    LstmCache<Scalar>& cc = cache ? *cache : local;
    cc.reverse = reverse;
    cc.gates.resize(T * B, 4 * H);
    cc.c.resize(T * B, H);
    cc.tanh_c.resize(T * B, H);
    cc.h.resize(T * B, H);
    Mat<Scalar> h = Mat<Scalar>::Zero(B, H), c = Mat<Scalar>::Zero(B, H);
    Mat<Scalar> gates, tanh_c, pre;
    for (Index s = 0; s < T; ++s) {
        const Index t = reverse ? T - 1 - s : s;
        pre = xw.middleRows(t * B, B);
        pre.noalias() += h * p.recurrent_weights();
        Mat<Scalar> c_new, h_new;
        lstm_gate_update<Scalar>(pre, c, H, gates, c_new, tanh_c, h_new);
        cc.gates.middleRows(t * B, B) = gates;
        cc.c.middleRows(t * B, B) = c_new;
        cc.tanh_c.middleRows(t * B, B) = tanh_c;
        cc.h.middleRows(t * B, B) = h_new;
        h = std::move(h_new);
        c = std::move(c_new);
    }
    return Tensor<Scalar>(cc.h, B, T);
}

/// Backpropagation through time. `dh` holds dL/dh at every time index.
template <typename Scalar>
Tensor<Scalar> lstm_sequence_backward(const Tensor<Scalar>& x, const Mat<Scalar>& dh_all,
                                      const LstmParams<Scalar>& p, const LstmCache<Scalar>& cc,
                                      LstmParams<Scalar>& grad, bool need_input_grad = true) {
    const Index B = x.batch, T = x.time, H = p.units;
    Mat<Scalar> dpre_all(T * B, 4 * H);
    Mat<Scalar> dh_next = Mat<Scalar>::Zero(B, H), dc_next = Mat<Scalar>::Zero(B, H);
    Mat<Scalar> dpre(B, 4 * H);
    const auto wh = p.recurrent_weights();
    auto grad_wh = grad.weights.topRows(H);
    for (Index s = T - 1; s >= 0; --s) {
        const Index t = cc.reverse ? T - 1 - s : s;
        const Index t_prev = cc.reverse ? t + 1 : t - 1;
        const bool has_prev = s > 0;
        const auto g = cc.gates.middleRows(t * B, B);
        const auto f = g.leftCols(H).array();
        const auto i = g.middleCols(H, H).array();
        const auto cand = g.middleCols(2 * H, H).array();
        const auto o = g.rightCols(H).array();
        const auto tc = cc.tanh_c.middleRows(t * B, B).array();

        const Mat<Scalar> dh = dh_all.middleRows(t * B, B) + dh_next;
        const Mat<Scalar> dc = (dh.array() * o * (Scalar(1) - tc.square()) + dc_next.array()).matrix();
        if (has_prev) {
            const auto c_prev = cc.c.middleRows(t_prev * B, B).array();
            dpre.leftCols(H) = (dc.array() * c_prev * f * (Scalar(1) - f)).matrix();
        } else {
            dpre.leftCols(H).setZero();
        }
        dpre.middleCols(H, H) = (dc.array() * cand * i * (Scalar(1) - i)).matrix();
        dpre.middleCols(2 * H, H) = (dc.array() * i * (Scalar(1) - cand.square())).matrix();
        dpre.rightCols(H) = (dh.array() * tc * o * (Scalar(1) - o)).matrix();
        dc_next = (dc.array() * f).matrix();
        dpre_all.middleRows(t * B, B) = dpre;
        if (has_prev) {
            grad_wh.noalias() += cc.h.middleRows(t_prev * B, B).transpose() * dpre;
            dh_next.noalias() = dpre * wh.transpose();
        }
    }
    grad.weights.bottomRows(p.in_channels()).noalias() += x.data.transpose() * dpre_all;
    grad.bias += dpre_all.colwise().sum();
    Tensor<Scalar> dx(B, T, p.in_channels());
    if (need_input_grad) {
        dx.data.noalias() = dpre_all * p.input_weights().transpose();
    }
    return dx;
}

template <typename Scalar>
struct BiLstmParams {
    LstmParams<Scalar> forward;
    LstmParams<Scalar> backward;
};

template <typename Scalar>
struct BiLstmCache {
    bool return_sequences = true;
    LstmCache<Scalar> forward;
    LstmCache<Scalar> backward;
};

/// Concatenates [forward h, backward h] per step. Without return_sequences
/// only the final state of each direction is emitted: forward at the last
/// time index, backward at index 0.
template <typename Scalar>
Tensor<Scalar> bilstm_forward(const Tensor<Scalar>& x, const BiLstmParams<Scalar>& p, bool return_sequences,
                              BiLstmCache<Scalar>* cache = nullptr) {
    LstmCache<Scalar> fwd_local, bwd_local;
    LstmCache<Scalar>& fc = cache ? cache->forward : fwd_local;
    LstmCache<Scalar>& bc = cache ? cache->backward : bwd_local;
    if (cache) cache->return_sequences = return_sequences;
    const Tensor<Scalar> hf = lstm_sequence_forward(x, p.forward, false, &fc);
    const Tensor<Scalar> hb = lstm_sequence_forward(x, p.backward, true, &bc);
    const Index Hf = p.forward.units, Hb = p.backward.units;
    if (return_sequences) {
        Tensor<Scalar> y(x.batch, x.time, Hf + Hb);
        y.data.leftCols(Hf) = hf.data;
        y.data.rightCols(Hb) = hb.data;
        return y;
    }
    Tensor<Scalar> y(x.batch, 1, Hf + Hb);
    y.data.leftCols(Hf) = hf.step(x.time - 1);
    y.data.rightCols(Hb) = hb.step(0);
    return y;
}

template <typename Scalar>
Tensor<Scalar> bilstm_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& dy, const BiLstmParams<Scalar>& p,
                               const BiLstmCache<Scalar>& cache, BiLstmParams<Scalar>& grad,
                               bool need_input_grad = true) {
    const Index B = x.batch, T = x.time, Hf = p.forward.units, Hb = p.backward.units;
    Mat<Scalar> dhf = Mat<Scalar>::Zero(T * B, Hf), dhb = Mat<Scalar>::Zero(T * B, Hb);
    if (cache.return_sequences) {
        dhf = dy.data.leftCols(Hf);
        dhb = dy.data.rightCols(Hb);
    } else {
        dhf.middleRows((T - 1) * B, B) = dy.data.leftCols(Hf);
        dhb.middleRows(0, B) = dy.data.rightCols(Hb);
    }
    Tensor<Scalar> dx = lstm_sequence_backward(x, dhf, p.forward, cache.forward, grad.forward, need_input_grad);
    if (need_input_grad) {
        dx.data += lstm_sequence_backward(x, dhb, p.backward, cache.backward, grad.backward, true).data;
    } else {
        lstm_sequence_backward(x, dhb, p.backward, cache.backward, grad.backward, false);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Dense.

template <typename Scalar>
struct DenseParams {
    Mat<Scalar> weights;  // in x out
    Mat<Scalar> bias;     // 1 x out
};

template <typename Scalar>
struct DenseCache {
    Mat<Scalar> input;
    Mat<Scalar> pre;
    Mat<Scalar> out;
};

template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& x, const DenseParams<Scalar>& p, Activation act,
                             DenseCache<Scalar>* cache = nullptr) {
    if (x.channels() != p.weights.rows()) {
        throw ShapeError("dense: input width " + std::to_string(x.channels()) + " but weights expect " +
                         std::to_string(p.weights.rows()));
    }
    Mat<Scalar> pre = x.data * p.weights;
    pre.rowwise() += p.bias.row(0);
    Mat<Scalar> out = pre;
    activate(out, act);
    if (cache) {
        cache->input = x.data;
        cache->pre = std::move(pre);
        cache->out = out;
    }
    return Tensor<Scalar>(std::move(out), x.batch, x.time);
}

template <typename Scalar>
Tensor<Scalar> dense_backward(const Tensor<Scalar>& dy, const DenseParams<Scalar>& p, Activation act,
                              const DenseCache<Scalar>& cache, DenseParams<Scalar>& grad) {
    Mat<Scalar> dpre = dy.data;
    activation_backward(dpre, cache.pre, cache.out, act);
    grad.weights.noalias() += cache.input.transpose() * dpre;
    grad.bias += dpre.colwise().sum();
    return Tensor<Scalar>(dpre * p.weights.transpose(), dy.batch, dy.time);
}

}  // namespace lumeneq::nn
