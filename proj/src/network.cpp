#include "curvlab/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

namespace curvlab {

Activation parse_activation(std::string_view name) {
    std::string key;
    for (char c : name) {
        if (c == '-' || c == '_') continue;
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (key == "relu") return Activation::relu;
    if (key == "leakyrelu") return Activation::leaky_relu;
    if (key == "tanh") return Activation::tanh;
    if (key == "identity" || key == "linear") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "unknown";
}

double activate(Activation a, double z) noexcept {
    switch (a) {
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::leaky_relu: return z > 0.0 ? z : kLeakySlope * z;
        case Activation::tanh: return std::tanh(z);
        case Activation::identity: return z;
    }
    return z;
}

double activate_derivative(Activation a, double z) noexcept {
    switch (a) {
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::leaky_relu: return z > 0.0 ? 1.0 : kLeakySlope;
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::identity: return 1.0;
    }
    return 1.0;
}

ParamSet::ParamSet(std::vector<std::size_t> layout) : layout_(std::move(layout)) {
    if (layout_.size() < 2) throw std::invalid_argument("layout needs at least input and output widths");
    if (std::any_of(layout_.begin(), layout_.end(), [](std::size_t w) { return w == 0; })) {
        throw std::invalid_argument("layout widths must be positive");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < layout_.size(); ++l) {
        const std::size_t w = layout_[l] * layout_[l + 1];
        tensors_.push_back({offset, w});
        offset += w;
        tensors_.push_back({offset, layout_[l + 1]});
        offset += layout_[l + 1];
    }
    values_.assign(offset, 0.0);
    freeze_snapshot();
}

std::span<double> ParamSet::weights(std::size_t l) {
    const auto& t = tensors_.at(2 * l);
    return {values_.data() + t.offset, t.size};
}
std::span<const double> ParamSet::weights(std::size_t l) const {
    const auto& t = tensors_.at(2 * l);
    return {values_.data() + t.offset, t.size};
}
std::span<double> ParamSet::biases(std::size_t l) {
    const auto& t = tensors_.at(2 * l + 1);
    return {values_.data() + t.offset, t.size};
}
std::span<const double> ParamSet::biases(std::size_t l) const {
    const auto& t = tensors_.at(2 * l + 1);
    return {values_.data() + t.offset, t.size};
}

Matrix ParamSet::weight_matrix(std::size_t l) const {
    const auto w = weights(l);
    return Matrix(fan_out(l), fan_in(l), std::vector<double>(w.begin(), w.end()));
}

void ParamSet::unflatten(std::span<const double> flat) {
    if (flat.size() != values_.size()) {
        throw ShapeError("unflatten: expected " + std::to_string(values_.size()) + " values, got " +
                         std::to_string(flat.size()));
    }
    std::copy(flat.begin(), flat.end(), values_.begin());
}

void ParamSet::freeze_snapshot() { set_snapshot(values_); }

void ParamSet::set_snapshot(std::span<const double> flat) {
    if (flat.size() != values_.size()) throw ShapeError("set_snapshot: size mismatch");
    Snapshot snap{std::vector<double>(flat.begin(), flat.end()), std::vector<double>(flat.begin(), flat.end())};
    for (const auto& t : tensors_) {
        const auto first = snap.sorted.begin() + static_cast<std::ptrdiff_t>(t.offset);
        std::sort(first, first + static_cast<std::ptrdiff_t>(t.size));
    }
    init_ = std::make_shared<const Snapshot>(std::move(snap));
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

ParamSet init_glorot(const std::vector<std::size_t>& layout, RandomStream& rng) {
    ParamSet params(layout);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const double bound = glorot_bound(params.fan_in(l), params.fan_out(l));
        for (double& w : params.weights(l)) w = rng.next_uniform(-bound, bound);
    }
    params.freeze_snapshot();
    return params;
}

void check_batch(const ParamSet& params, const Matrix& x, std::span<const int> labels) {
    if (x.cols() != params.fan_in(0)) {
        throw ShapeError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(params.fan_in(0)));
    }
    if (labels.size() != x.rows()) {
        throw ShapeError("batch has " + std::to_string(x.rows()) + " rows but " +
                         std::to_string(labels.size()) + " labels");
    }
}

ForwardResult forward(const ParamSet& params, Activation activation, const Matrix& x) {
    if (x.cols() != params.fan_in(0)) {
        throw ShapeError("input has " + std::to_string(x.cols()) + " columns, network expects " +
                         std::to_string(params.fan_in(0)));
    }
    const std::size_t batch = x.rows();
    const std::size_t layers = params.num_layers();
    ForwardCache cache;
    cache.pre.reserve(layers);
    cache.post.reserve(layers + 1);
    cache.post.push_back(x);

    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = params.fan_in(l);
        const std::size_t out = params.fan_out(l);
        Matrix z(batch, out);
        gemm(false, true, batch, out, in, cache.post[l].raw(), in, params.weights(l).data(), in,
             z.raw(), out);
        const auto b = params.biases(l);
        for (std::size_t r = 0; r < batch; ++r) {
            auto row = z.row(r);
            for (std::size_t c = 0; c < out; ++c) row[c] += b[c];
        }
        Matrix a = z;
        if (l + 1 < layers && activation != Activation::identity) {
            for (double& v : a.data()) v = activate(activation, v);
        }
        cache.pre.push_back(std::move(z));
        cache.post.push_back(std::move(a));
    }
    Matrix logits = cache.post.back();
    return {std::move(logits), std::move(cache)};
}

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        const double zmax = *std::max_element(z.begin(), z.end());
        double total = 0.0;
        auto out = p.row(r);
        for (std::size_t c = 0; c < z.size(); ++c) {
            out[c] = std::exp(z[c] - zmax);
            total += out[c];
        }
        for (double& v : out) v /= total;
    }
    return p;
}

namespace {

void check_labels(std::span<const int> labels, std::size_t rows, std::size_t classes) {
    if (labels.size() != rows) {
        throw ShapeError("expected " + std::to_string(rows) + " labels, got " +
                         std::to_string(labels.size()));
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
            throw std::out_of_range("label " + std::to_string(labels[i]) + " at index " +
                                    std::to_string(i) + " outside [0, " + std::to_string(classes) +
                                    ")");
        }
    }
}

}  // namespace

LossError loss_and_error(const Matrix& logits, std::span<const int> labels) {
    check_labels(labels, logits.rows(), logits.cols());
    if (logits.rows() == 0) return {0.0, 0.0};
    double loss = 0.0;
    std::size_t wrong = 0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        const double zmax = z[best];
        double total = 0.0;
        for (double v : z) total += std::exp(v - zmax);
        loss += std::log(total) - (z[static_cast<std::size_t>(labels[r])] - zmax);
        if (best != static_cast<std::size_t>(labels[r])) ++wrong;
    }
    const double n = static_cast<double>(logits.rows());
    return {loss / n, static_cast<double>(wrong) / n};
}

Matrix output_residuals(const Matrix& logits, std::span<const int> labels) {
    check_labels(labels, logits.rows(), logits.cols());
    Matrix r = softmax(logits);
    for (std::size_t i = 0; i < r.rows(); ++i) r(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    return r;
}

namespace {

std::vector<Matrix> propagate_down(const ParamSet& params, Activation activation,
                                   const ForwardCache& cache, std::vector<Matrix> deltas,
                                   std::size_t start) {
    const std::size_t batch = cache.post[0].rows();
    for (std::size_t l = start; l > 0; --l) {
        const std::size_t in = params.fan_in(l);
        const std::size_t out = params.fan_out(l);
        Matrix d(batch, in);
        gemm(false, false, batch, in, out, deltas[l].raw(), out, params.weights(l).data(), in,
             d.raw(), in);
        if (activation != Activation::identity) {
            const auto z = cache.pre[l - 1].data();
            auto dv = d.data();
            for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= activate_derivative(activation, z[i]);
        }
        deltas[l - 1] = std::move(d);
    }
    return deltas;
}

}  // namespace

std::vector<Matrix> backprop_deltas(const ParamSet& params, Activation activation,
                                    const ForwardCache& cache, const Matrix& output_signal) {
    const std::size_t layers = params.num_layers();
    if (output_signal.rows() != cache.post[0].rows() || output_signal.cols() != params.fan_out(layers - 1)) {
        throw ShapeError("backprop_deltas: output signal shape mismatch");
    }
    std::vector<Matrix> deltas(layers);
    deltas[layers - 1] = output_signal;
    return propagate_down(params, activation, cache, std::move(deltas), layers - 1);
}

std::vector<Matrix> backprop_from_representation(const ParamSet& params, Activation activation,
                                                 const ForwardCache& cache,
                                                 const Matrix& representation_signal) {
    const std::size_t layers = params.num_layers();
    const std::size_t batch = cache.post[0].rows();
    const Matrix& phi = cache.representation();
    if (representation_signal.rows() != phi.rows() || representation_signal.cols() != phi.cols()) {
        throw ShapeError("backprop_from_representation: signal shape mismatch");
    }
    std::vector<Matrix> deltas(layers);
    deltas[layers - 1] = Matrix(batch, params.fan_out(layers - 1));
    if (layers == 1) return deltas;
    Matrix d = representation_signal;
    if (activation != Activation::identity) {
        const auto z = cache.pre[layers - 2].data();
        auto dv = d.data();
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= activate_derivative(activation, z[i]);
    }
    deltas[layers - 2] = std::move(d);
    return propagate_down(params, activation, cache, std::move(deltas), layers - 2);
}

std::vector<double> accumulate_gradient(const ParamSet& params, const ForwardCache& cache,
                                        const std::vector<Matrix>& deltas, double scale) {
    std::vector<double> grad(params.size(), 0.0);
    const std::size_t batch = cache.post[0].rows();
    const auto& slices = params.tensors();
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const std::size_t in = params.fan_in(l);
        const std::size_t out = params.fan_out(l);
        gemm(true, false, out, in, batch, deltas[l].raw(), out, cache.post[l].raw(), in,
             grad.data() + slices[2 * l].offset, in, scale);
        double* gb = grad.data() + slices[2 * l + 1].offset;
        for (std::size_t r = 0; r < batch; ++r) {
            const auto d = deltas[l].row(r);
            for (std::size_t c = 0; c < out; ++c) gb[c] += d[c];
        }
        for (std::size_t c = 0; c < out; ++c) gb[c] *= scale;
    }
    return grad;
}

std::vector<double> batch_gradient(const ParamSet& params, Activation activation, const Matrix& x,
                                   std::span<const int> labels) {
    check_batch(params, x, labels);
    if (x.rows() == 0) throw ShapeError("batch_gradient: empty batch");
    const auto fwd = forward(params, activation, x);
    const Matrix signal = output_residuals(fwd.logits, labels);
    const auto deltas = backprop_deltas(params, activation, fwd.cache, signal);
    return accumulate_gradient(params, fwd.cache, deltas, 1.0 / static_cast<double>(x.rows()));
}

Matrix per_sample_gradients_from_signal(const ParamSet& params, Activation activation,
                                        const ForwardCache& cache, const Matrix& output_signal) {
    const auto deltas = backprop_deltas(params, activation, cache, output_signal);
    const std::size_t m = output_signal.rows();
    Matrix g(params.size(), m);
    const auto& slices = params.tensors();
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const std::size_t in = params.fan_in(l);
        const std::size_t out = params.fan_out(l);
        const std::size_t w_off = slices[2 * l].offset;
        const std::size_t b_off = slices[2 * l + 1].offset;
        for (std::size_t i = 0; i < m; ++i) {
            const auto d = deltas[l].row(i);
            const auto a = cache.post[l].row(i);
            for (std::size_t r = 0; r < out; ++r) {
                for (std::size_t c = 0; c < in; ++c) g(w_off + r * in + c, i) = d[r] * a[c];
                g(b_off + r, i) = d[r];
            }
        }
    }
    return g;
}

Matrix per_sample_gradients(const ParamSet& params, Activation activation, const Matrix& x,
                            std::span<const int> labels) {
    check_batch(params, x, labels);
    if (x.rows() == 0) throw ShapeError("per_sample_gradients: need at least one sample");
    const auto fwd = forward(params, activation, x);
    return per_sample_gradients_from_signal(params, activation, fwd.cache,
                                            output_residuals(fwd.logits, labels));
}

Matrix per_sample_gram_from_signal(const ParamSet& params, Activation activation,
                                   const ForwardCache& cache, const Matrix& output_signal) {
    const auto deltas = backprop_deltas(params, activation, cache, output_signal);
    const std::size_t m = output_signal.rows();
    Matrix k(m, m);
    for (std::size_t l = 0; l < params.num_layers(); ++l) {
        const Matrix dd = gram_rows(deltas[l]);
        const Matrix aa = gram_rows(cache.post[l]);
        auto kv = k.data();
        const auto dv = dd.data();
        const auto av = aa.data();
        for (std::size_t i = 0; i < kv.size(); ++i) kv[i] += dv[i] * (av[i] + 1.0);
    }
    return k;
}

Matrix per_sample_gram(const ParamSet& params, Activation activation, const Matrix& x,
                       std::span<const int> labels) {
    check_batch(params, x, labels);
    const auto fwd = forward(params, activation, x);
    return per_sample_gram_from_signal(params, activation, fwd.cache,
                                       output_residuals(fwd.logits, labels));
}

}  // namespace curvlab
