// SPDX-License-Identifier: Apache-2.0
#include "lumeneq/nn/model.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "lumeneq/error.hpp"
#include "lumeneq/format.hpp"

namespace lumeneq::nn {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv1d: return "conv1d";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::dropout: return "dropout";
        case LayerKind::bilstm: return "bilstm";
        case LayerKind::dense: return "dense";
    }
    return "unknown";
}

void LayerSpec::validate() const {
    const auto fail = [&](const std::string& what) {
        throw ConfigError(to_string(kind) + ": " + what);
    };
    switch (kind) {
        case LayerKind::conv1d:
            if (filters < 1) fail("filters must be >= 1");
            if (kernel_size < 1 || kernel_size % 2 == 0) fail("kernel size must be odd and >= 1");
            if (l2 < 0.0) fail("L2 coefficient must be >= 0");
            if (!same_padding) fail("only same padding is supported");
            break;
        case LayerKind::batchnorm:
            break;
        case LayerKind::maxpool:
            if (pool_size < 1 || pool_size > 255) fail("pool size must lie in [1, 255]");
            break;
        case LayerKind::dropout:
            if (!(rate >= 0.0 && rate < 1.0)) fail("rate must lie in [0, 1)");
            break;
        case LayerKind::bilstm:
            if (units < 1) fail("units must be >= 1");
            break;
        case LayerKind::dense:
            if (units < 1) fail("units must be >= 1");
            break;
    }
}

ModelArch ModelArch::tiny() {
    ModelArch a;
    a.window = 8;
    a.conv1_filters = 2;
    a.conv2_filters = 4;
    a.lstm1_units = 3;
    a.lstm2_units = 2;
    a.dense_units = 4;
    return a;
}

std::vector<LayerSpec> ModelArch::layers() const {
    using K = LayerKind;
    std::vector<LayerSpec> out;
    LayerSpec conv1{K::conv1d};
    conv1.filters = conv1_filters;
    conv1.kernel_size = conv1_kernel;
    conv1.activation = Activation::relu;
    conv1.l2 = l2;
    conv1.same_padding = true;
    LayerSpec conv2 = conv1;
    conv2.filters = conv2_filters;
    conv2.kernel_size = conv2_kernel;
    LayerSpec bn{K::batchnorm};
    LayerSpec pool_spec{K::maxpool};
    pool_spec.pool_size = pool;
    LayerSpec drop_conv{K::dropout};
    drop_conv.rate = conv_dropout;
    LayerSpec lstm1{K::bilstm};
    lstm1.units = lstm1_units;
    lstm1.return_sequences = true;
    LayerSpec lstm2{K::bilstm};
    lstm2.units = lstm2_units;
    LayerSpec dense1{K::dense};
    dense1.units = dense_units;
    dense1.activation = Activation::relu;
    LayerSpec drop_dense{K::dropout};
    drop_dense.rate = dense_dropout;
    LayerSpec out_layer{K::dense};
    out_layer.units = 1;
    out_layer.activation = Activation::sigmoid;
    out = {conv1, bn, pool_spec, drop_conv, conv2, bn, pool_spec, drop_conv,
           lstm1, lstm2, dense1, drop_dense, out_layer};
    return out;
}

void ModelArch::validate() const {
    for (const auto& layer : layers()) layer.validate();
    if (window < 1) throw ConfigError("architecture: window must be >= 1");
    if (window / pool / pool < 1) {
        throw ConfigError("architecture: window " + std::to_string(window) + " too short for two pooling stages");
    }
}

std::string ModelArch::describe() const {
    std::ostringstream os;
    os << "window=" << window << ";conv1=" << conv1_filters << "x" << conv1_kernel << ";conv2=" << conv2_filters
       << "x" << conv2_kernel << ";pool=" << pool << ";conv_dropout=" << format_g17(conv_dropout)
       << ";lstm1=" << lstm1_units << ";lstm2=" << lstm2_units << ";dense=" << dense_units
       << ";dense_dropout=" << format_g17(dense_dropout) << ";l2=" << format_g17(l2);
    return os.str();
}

std::uint64_t ModelArch::hash() const { return fnv1a64(describe()); }

// ---------------------------------------------------------------------------

namespace {

template <typename Scalar>
Conv1dParams<Scalar> conv_zeros(Index kernel_size, Index in, Index out) {
    return {Mat<Scalar>::Zero(kernel_size * in, out), Mat<Scalar>::Zero(1, out), kernel_size};
}

template <typename Scalar>
BatchNormParams<Scalar> bn_zeros(Index channels) {
    return {Mat<Scalar>::Ones(1, channels), Mat<Scalar>::Zero(1, channels), Mat<Scalar>::Zero(1, channels),
            Mat<Scalar>::Ones(1, channels)};
}

template <typename Scalar>
LstmParams<Scalar> lstm_zeros(Index in, Index units) {
    return {Mat<Scalar>::Zero(units + in, 4 * units), Mat<Scalar>::Zero(1, 4 * units), units};
}

template <typename Scalar>
DenseParams<Scalar> dense_zeros(Index in, Index out) {
    return {Mat<Scalar>::Zero(in, out), Mat<Scalar>::Zero(1, out)};
}

template <typename Self, typename Entry>
std::vector<Entry> collect_tensors(Self& p) {
    using K = LayerKind;
    std::vector<Entry> v;
    const auto add = [&v](std::string name, auto& t, bool trainable, K kind) {
        v.push_back(Entry{std::move(name), &t, trainable, kind});
    };
    const auto conv = [&](const std::string& n, auto& c) {
        add(n + ".kernel", c.kernel, true, K::conv1d);
        add(n + ".bias", c.bias, true, K::conv1d);
    };
    const auto bn = [&](const std::string& n, auto& b) {
        add(n + ".gamma", b.gamma, true, K::batchnorm);
        add(n + ".beta", b.beta, true, K::batchnorm);
        add(n + ".running_mean", b.running_mean, false, K::batchnorm);
        add(n + ".running_var", b.running_var, false, K::batchnorm);
    };
    const auto bilstm = [&](const std::string& n, auto& l) {
        add(n + ".forward.weights", l.forward.weights, true, K::bilstm);
        add(n + ".forward.bias", l.forward.bias, true, K::bilstm);
        add(n + ".backward.weights", l.backward.weights, true, K::bilstm);
        add(n + ".backward.bias", l.backward.bias, true, K::bilstm);
    };
    const auto dense = [&](const std::string& n, auto& d) {
        add(n + ".weights", d.weights, true, K::dense);
        add(n + ".bias", d.bias, true, K::dense);
    };
    conv("conv1", p.conv1);
    bn("bn1", p.bn1);
    conv("conv2", p.conv2);
    bn("bn2", p.bn2);
    bilstm("lstm1", p.lstm1);
    bilstm("lstm2", p.lstm2);
    dense("dense1", p.dense1);
    dense("dense2", p.dense2);
    return v;
}

template <typename Scalar>
void fill_uniform(Mat<Scalar>& m, double limit, Engine& rng) {
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

double glorot_limit(double fan_in, double fan_out) { return std::sqrt(6.0 / (fan_in + fan_out)); }

template <typename Scalar>
void init_lstm(LstmParams<Scalar>& l, Engine& rng) {
    const Index H = l.units, in = l.in_channels();
    Mat<Scalar> wh(H, 4 * H), wx(in, 4 * H);
    fill_uniform(wx, glorot_limit(double(in), double(4 * H)), rng);
    fill_uniform(wh, glorot_limit(double(H), double(4 * H)), rng);
    l.weights.topRows(H) = wh;
    l.weights.bottomRows(in) = wx;
    l.bias.setZero();
    l.gate_bias(Gate::forget).setConstant(Scalar(1));
}

void check_labels(const std::vector<std::uint8_t>& labels, Index rows) {
    if (static_cast<Index>(labels.size()) != rows) {
        throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                         " predictions");
    }
    for (auto y : labels) {
        if (y > 1) throw DomainError("loss: labels must be 0 or 1");
    }
}

}  // namespace

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::zeros(const ModelArch& a) {
    ModelParams p = identity(a);
    for (auto& t : p.tensors()) t.tensor->setZero();
    return p;
}

template <typename Scalar>
ModelParams<Scalar> ModelParams<Scalar>::identity(const ModelArch& a) {
    a.validate();
    ModelParams p;
    p.arch = a;
    p.conv1 = conv_zeros<Scalar>(a.conv1_kernel, 1, a.conv1_filters);
    p.bn1 = bn_zeros<Scalar>(a.conv1_filters);
    p.conv2 = conv_zeros<Scalar>(a.conv2_kernel, a.conv1_filters, a.conv2_filters);
    p.bn2 = bn_zeros<Scalar>(a.conv2_filters);
    p.lstm1 = {lstm_zeros<Scalar>(a.conv2_filters, a.lstm1_units), lstm_zeros<Scalar>(a.conv2_filters, a.lstm1_units)};
    p.lstm2 = {lstm_zeros<Scalar>(2 * a.lstm1_units, a.lstm2_units),
               lstm_zeros<Scalar>(2 * a.lstm1_units, a.lstm2_units)};
    p.dense1 = dense_zeros<Scalar>(2 * a.lstm2_units, a.dense_units);
    p.dense2 = dense_zeros<Scalar>(a.dense_units, 1);
    return p;
}

template <typename Scalar>
std::vector<NamedTensor<Scalar>> ModelParams<Scalar>::tensors() {
    return collect_tensors<ModelParams, NamedTensor<Scalar>>(*this);
}

template <typename Scalar>
std::vector<ConstNamedTensor<Scalar>> ModelParams<Scalar>::tensors() const {
    return collect_tensors<const ModelParams, ConstNamedTensor<Scalar>>(*this);
}

template <typename Scalar>
Index ModelParams<Scalar>::parameter_count(bool trainable_only) const {
    Index n = 0;
    for (const auto& t : tensors()) {
        if (t.trainable || !trainable_only) n += t.tensor->size();
    }
    return n;
}

template <typename Scalar>
template <typename Other>
ModelParams<Other> ModelParams<Scalar>::cast() const {
    ModelParams<Other> out = ModelParams<Other>::identity(arch);
    auto dst = out.tensors();
    const auto src = tensors();
    for (std::size_t i = 0; i < src.size(); ++i) {
        *dst[i].tensor = src[i].tensor->template cast<Other>();
    }
    return out;
}

template <typename Scalar>
void ModelParams<Scalar>::check_shapes() const {
    const auto expected = ModelParams::identity(arch);
    const auto want = expected.tensors();
    const auto have = tensors();
    for (std::size_t i = 0; i < want.size(); ++i) {
        if (want[i].tensor->rows() != have[i].tensor->rows() || want[i].tensor->cols() != have[i].tensor->cols()) {
            throw ShapeError("parameter " + want[i].name + " has shape " + std::to_string(have[i].tensor->rows()) +
                             "x" + std::to_string(have[i].tensor->cols()) + ", architecture implies " +
                             std::to_string(want[i].tensor->rows()) + "x" + std::to_string(want[i].tensor->cols()));
        }
    }
    if (conv1.kernel_size != arch.conv1_kernel || conv2.kernel_size != arch.conv2_kernel ||
        lstm1.forward.units != arch.lstm1_units || lstm2.forward.units != arch.lstm2_units) {
        throw ShapeError("parameter metadata disagrees with architecture");
    }
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelArch& arch, Seed seed) {
    auto p = ModelParams<Scalar>::identity(arch);
    Engine rng = make_engine(seed);
    const auto conv_init = [&](Conv1dParams<Scalar>& c) {
        const double k = double(c.kernel_size);
        fill_uniform(c.kernel, glorot_limit(k * double(c.in_channels()), k * double(c.filters())), rng);
    };
    const auto dense_init = [&](DenseParams<Scalar>& d) {
        fill_uniform(d.weights, glorot_limit(double(d.weights.rows()), double(d.weights.cols())), rng);
    };
    conv_init(p.conv1);
    conv_init(p.conv2);
    init_lstm(p.lstm1.forward, rng);
    init_lstm(p.lstm1.backward, rng);
    init_lstm(p.lstm2.forward, rng);
    init_lstm(p.lstm2.backward, rng);
    dense_init(p.dense1);
    dense_init(p.dense2);
    return p;
}

template <typename Scalar>
Mat<Scalar> model_forward(const ModelParams<Scalar>& params, const Tensor<Scalar>& batch,
                          const ForwardOptions& options, ForwardCache<Scalar>* cache, ShapeTrace* trace) {
    const ModelArch& a = params.arch;
    batch.check();
    if (batch.time != a.window || batch.channels() != 1) {
        throw ShapeError("model_forward: expected (B, " + std::to_string(a.window) + ", 1) windows, got (B, " +
                         std::to_string(batch.time) + ", " + std::to_string(batch.channels()) + ")");
    }
    const auto record = [trace](const char* layer, const Tensor<Scalar>& t) {
        if (trace) trace->entries.push_back({layer, t.batch, t.time, t.channels()});
    };
    const bool keep = cache != nullptr;
    ForwardCache<Scalar> scratch;
    ForwardCache<Scalar>& c = keep ? *cache : scratch;
    c.options = options;
    const Seed ds = options.dropout_seed;

    record("input", batch);
    Tensor<Scalar> x = conv1d_forward(batch, params.conv1, Activation::relu, keep ? &c.conv1 : nullptr);
    record("conv1", x);
    x = batchnorm_forward(x, params.bn1, options.batch_stats, keep ? &c.bn1 : nullptr);
    x = maxpool1d_forward(x, a.pool, keep ? &c.pool1 : nullptr);
    record("pool1", x);
    x = dropout_forward(x, a.conv_dropout, options.dropout, derive_seed(ds, Stream::dropout, 1),
                        keep ? &c.drop1 : nullptr);
    x = conv1d_forward(x, params.conv2, Activation::relu, keep ? &c.conv2 : nullptr);
    record("conv2", x);
    x = batchnorm_forward(x, params.bn2, options.batch_stats, keep ? &c.bn2 : nullptr);
    x = maxpool1d_forward(x, a.pool, keep ? &c.pool2 : nullptr);
    record("pool2", x);
    x = dropout_forward(x, a.conv_dropout, options.dropout, derive_seed(ds, Stream::dropout, 2),
                        keep ? &c.drop2 : nullptr);
    if (keep) c.lstm1_in = x;
    x = bilstm_forward(x, params.lstm1, true, keep ? &c.lstm1 : nullptr);
    record("bilstm1", x);
    if (keep) c.lstm2_in = x;
    x = bilstm_forward(x, params.lstm2, false, keep ? &c.lstm2 : nullptr);
    record("bilstm2", x);
    x = dense_forward(x, params.dense1, Activation::relu, keep ? &c.dense1 : nullptr);
    record("dense1", x);
    x = dropout_forward(x, a.dense_dropout, options.dropout, derive_seed(ds, Stream::dropout, 3),
                        keep ? &c.drop3 : nullptr);
    x = dense_forward(x, params.dense2, Activation::sigmoid, keep ? &c.dense2 : nullptr);
    record("output", x);
    if (keep) {
        c.input = batch;
        c.probs = x.data;
        c.valid = true;
    }
    return std::move(x.data);
}

template <typename Scalar>
double l2_penalty(const ModelParams<Scalar>& params, double lambda) {
    if (lambda == 0.0) return 0.0;
    return lambda * (params.conv1.kernel.template cast<double>().squaredNorm() +
                     params.conv2.kernel.template cast<double>().squaredNorm());
}

template <typename Scalar>
double bce_l2_loss(const Mat<Scalar>& probs, const std::vector<std::uint8_t>& labels,
                   const ModelParams<Scalar>& params, double lambda) {
    check_labels(labels, probs.rows());
    double sum = 0.0;
    for (Index i = 0; i < probs.rows(); ++i) {
        const double p = std::clamp(static_cast<double>(probs(i, 0)), kProbClip, 1.0 - kProbClip);
        sum -= labels[static_cast<std::size_t>(i)] ? std::log(p) : std::log1p(-p);
    }
    return sum / static_cast<double>(probs.rows()) + l2_penalty(params, lambda);
}

template <typename Scalar>
ModelParams<Scalar> backward(const ModelParams<Scalar>& params, const ForwardCache<Scalar>& c,
                             const std::vector<std::uint8_t>& labels, double lambda) {
    if (!c.valid) {
        throw ContractViolation("backward: no cached forward pass");
    }
    const ModelArch& a = params.arch;
    check_labels(labels, c.probs.rows());
    auto g = ModelParams<Scalar>::zeros(a);
    const Index B = c.probs.rows();

    // dL/dlogit of the clipped cross-entropy: (p - y) / B inside the clip
    // range, zero where the clip is active.
    Mat<Scalar> dlogit(B, 1);
    for (Index i = 0; i < B; ++i) {
        const double p = static_cast<double>(c.probs(i, 0));
        const bool clipped = p < kProbClip || p > 1.0 - kProbClip;
        dlogit(i, 0) = clipped ? Scalar(0) : Scalar((p - double(labels[static_cast<std::size_t>(i)])) / double(B));
    }
    Tensor<Scalar> d(std::move(dlogit), B, 1);
    d = dense_backward(d, params.dense2, Activation::linear, c.dense2, g.dense2);
    d = dropout_backward(d, c.drop3);
    d = dense_backward(d, params.dense1, Activation::relu, c.dense1, g.dense1);
    d = bilstm_backward(c.lstm2_in, d, params.lstm2, c.lstm2, g.lstm2);
    d = bilstm_backward(c.lstm1_in, d, params.lstm1, c.lstm1, g.lstm1);
    d = dropout_backward(d, c.drop2);
    d = maxpool1d_backward(d, a.pool, c.pool2);
    d = batchnorm_backward(d, params.bn2, c.bn2, g.bn2);
    d = conv1d_backward(d, params.conv2, Activation::relu, c.conv2, g.conv2);
    d = dropout_backward(d, c.drop1);
    d = maxpool1d_backward(d, a.pool, c.pool1);
    d = batchnorm_backward(d, params.bn1, c.bn1, g.bn1);
    conv1d_backward(d, params.conv1, Activation::relu, c.conv1, g.conv1, false);

    if (lambda != 0.0) {
        g.conv1.kernel += Scalar(2 * lambda) * params.conv1.kernel;
        g.conv2.kernel += Scalar(2 * lambda) * params.conv2.kernel;
    }
    return g;
}

template <typename Scalar>
void update_running_stats(ModelParams<Scalar>& params, const ForwardCache<Scalar>& cache) {
    batchnorm_update_running(params.bn1, cache.bn1);
    batchnorm_update_running(params.bn2, cache.bn2);
}

#define LUMENEQ_INSTANTIATE(S)                                                                             \
    template struct ModelParams<S>;                                                                        \
    template ModelParams<S> init_params<S>(const ModelArch&, Seed);                                        \
    template Mat<S> model_forward<S>(const ModelParams<S>&, const Tensor<S>&, const ForwardOptions&,        \
                                     ForwardCache<S>*, ShapeTrace*);                                       \
    template double l2_penalty<S>(const ModelParams<S>&, double);                                          \
    template double bce_l2_loss<S>(const Mat<S>&, const std::vector<std::uint8_t>&, const ModelParams<S>&, \
                                   double);                                                                \
    template ModelParams<S> backward<S>(const ModelParams<S>&, const ForwardCache<S>&,                     \
                                        const std::vector<std::uint8_t>&, double);                         \
    template void update_running_stats<S>(ModelParams<S>&, const ForwardCache<S>&);

LUMENEQ_INSTANTIATE(float)
LUMENEQ_INSTANTIATE(double)
#undef LUMENEQ_INSTANTIATE

template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;

}  // namespace lumeneq::nn
