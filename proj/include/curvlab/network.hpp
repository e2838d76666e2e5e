#pragma once

// Fully connected classifier with hand-written backpropagation.
//
// Parameters live in one flat vector in canonical order: layer 0 weights
// (row-major, fan_out x fan_in), layer 0 biases, layer 1 weights, ... Hidden
// layers apply the activation; the output layer is affine and feeds a
// softmax cross-entropy loss.

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "curvlab/numerics.hpp"
#include "curvlab/random.hpp"

namespace curvlab {

enum class Activation { relu, leaky_relu, tanh, identity };

inline constexpr double kLeakySlope = 0.01;

/// Case-insensitive; accepts "leaky_relu", "leaky-relu" and "leakyrelu".
Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

double activate(Activation a, double z) noexcept;
/// Derivative at z; relu'(0) = 0 and leaky_relu'(0) = kLeakySlope.
double activate_derivative(Activation a, double z) noexcept;

/// Location of one tensor (a weight matrix or a bias vector) in the flat
/// parameter vector.
struct TensorSlice {
    std::size_t offset;
    std::size_t size;
};

class ParamSet {
public:
    /// All-zero parameters for `layout` (input width, hidden widths...,
    /// output width). The current values become the init snapshot.
    explicit ParamSet(std::vector<std::size_t> layout);

    const std::vector<std::size_t>& layout() const noexcept { return layout_; }
    std::size_t num_layers() const noexcept { return layout_.size() - 1; }
    std::size_t fan_in(std::size_t l) const { return layout_.at(l); }
    std::size_t fan_out(std::size_t l) const { return layout_.at(l + 1); }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    std::span<double> weights(std::size_t l);
    std::span<const double> weights(std::size_t l) const;
    std::span<double> biases(std::size_t l);
    std::span<const double> biases(std::size_t l) const;
    Matrix weight_matrix(std::size_t l) const;

    /// Weight and bias tensors in canonical order (2 per layer).
    const std::vector<TensorSlice>& tensors() const noexcept { return tensors_; }

    std::vector<double> flatten() const { return values_; }
    void unflatten(std::span<const double> flat);

    /// Values recorded when the snapshot was last frozen (at initialization).
    std::span<const double> init_snapshot() const noexcept { return init_->values; }
    /// The snapshot with each tensor sorted ascending in place.
    std::span<const double> sorted_snapshot() const noexcept { return init_->sorted; }
    /// Replaces the snapshot with the current values. Only initializers and
    /// checkpoint restore call this.
    void freeze_snapshot();
    void set_snapshot(std::span<const double> flat);

private:
    std::vector<std::size_t> layout_;
    std::vector<TensorSlice> tensors_;
    std::vector<double> values_;
    struct Snapshot {
        std::vector<double> values;
        std::vector<double> sorted;
    };
    std::shared_ptr<const Snapshot> init_;
};

/// Glorot-uniform weights on ±sqrt(6 / (fan_in + fan_out)), zero biases.
ParamSet init_glorot(const std::vector<std::size_t>& layout, RandomStream& rng);

double glorot_bound(std::size_t fan_in, std::size_t fan_out);

struct ForwardCache {
    std::vector<Matrix> pre;   // pre[l]: batch x fan_out(l)
    std::vector<Matrix> post;  // post[0] = input; post[l + 1] = output of layer l

    /// Post-activation output of the last hidden layer (the input itself for
    /// a network without hidden layers).
    const Matrix& representation() const { return post[post.size() - 2]; }
};

struct ForwardResult {
    Matrix logits;
    ForwardCache cache;
};

ForwardResult forward(const ParamSet& params, Activation activation, const Matrix& x);

/// Row-wise softmax with max-logit subtraction.
Matrix softmax(const Matrix& logits);

struct LossError {
    double loss;   // mean cross-entropy
    double error;  // fraction misclassified by argmax (ties -> lowest index)
};

LossError loss_and_error(const Matrix& logits, std::span<const int> labels);

/// Per-sample error signals: softmax(logits) - onehot(labels), unscaled.
Matrix output_residuals(const Matrix& logits, std::span<const int> labels);

/// Backpropagates per-sample output signals (batch x classes) through the
/// cached activations. Returns deltas[l] = dLoss_i/dpre[l] for each sample.
std::vector<Matrix> backprop_deltas(const ParamSet& params, Activation activation,
                                    const ForwardCache& cache, const Matrix& output_signal);

/// Same, starting from a signal on the representation (last hidden output).
/// The output layer's delta is zero.
std::vector<Matrix> backprop_from_representation(const ParamSet& params, Activation activation,
                                                 const ForwardCache& cache,
                                                 const Matrix& representation_signal);

/// Sum over samples of the per-sample gradients implied by `deltas`, scaled
/// by `scale`, in canonical flat order.
std::vector<double> accumulate_gradient(const ParamSet& params, const ForwardCache& cache,
                                        const std::vector<Matrix>& deltas, double scale);

/// Gradient of the mean cross-entropy over the batch.
std::vector<double> batch_gradient(const ParamSet& params, Activation activation, const Matrix& x,
                                   std::span<const int> labels);

/// d x M matrix whose column i is the gradient of sample i's loss.
Matrix per_sample_gradients(const ParamSet& params, Activation activation, const Matrix& x,
                            std::span<const int> labels);

/// Per-sample gradient columns for explicit per-sample output signals.
Matrix per_sample_gradients_from_signal(const ParamSet& params, Activation activation,
                                        const ForwardCache& cache, const Matrix& output_signal);

/// GᵀG for the per-sample gradient matrix G, computed layer by layer from
/// deltas and activations without materializing G:
///   (GᵀG)_ij = Σ_l (δ_l,i · δ_l,j) (a_l,i · a_l,j + 1).
Matrix per_sample_gram_from_signal(const ParamSet& params, Activation activation,
                                   const ForwardCache& cache, const Matrix& output_signal);

Matrix per_sample_gram(const ParamSet& params, Activation activation, const Matrix& x,
                       std::span<const int> labels);

/// Checks that x has fan_in(0) columns and labels match the batch.
void check_batch(const ParamSet& params, const Matrix& x, std::span<const int> labels);

}  // namespace curvlab
