#pragma once

// Adam and the parameter-space regularizers.
//
// Regularizers are coupled: strength * d(penalty)/dθ is added to the
// minibatch loss gradient before the Adam step.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "curvlab/network.hpp"

namespace curvlab {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class AdamState {
public:
    AdamState() = default;
    AdamState(std::size_t dim, AdamHyper hyper = {});

    const AdamHyper& hyper() const noexcept { return hyper_; }
    std::size_t dim() const noexcept { return m_.size(); }
    std::uint64_t step() const noexcept { return t_; }
    std::span<const double> first_moment() const noexcept { return m_; }
    std::span<const double> second_moment() const noexcept { return v_; }

    /// Clears moments and the step counter; hyperparameters are kept.
    void reset();
    /// Restores moments and counter (checkpoint resume).
    void restore(std::vector<double> m, std::vector<double> v, std::uint64_t t);

    /// Bias-corrected Adam update of `params` in place. Returns the applied
    /// delta (new - old) per coordinate.
    std::vector<double> apply(std::span<double> params, std::span<const double> gradient);

private:
    AdamHyper hyper_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t t_ = 0;
};

std::vector<double> adam_step(AdamState& state, ParamSet& params, std::span<const double> gradient);

enum class RegularizerKind { none, weight_decay, regenerative, wasserstein, feature_rank };

RegularizerKind parse_regularizer(std::string_view name);
std::string_view to_string(RegularizerKind k);

struct RegularizerSpec {
    RegularizerKind kind = RegularizerKind::none;
    double strength = 0.0;

    /// Throws std::invalid_argument for negative strength or a nonzero
    /// strength on `none`.
    void validate() const;
};

struct Penalty {
    double value = 0.0;
    std::vector<double> gradient;
};

/// Σ over tensors of Σ_i (sorted(current)_i - sorted(init)_i)², each weight
/// matrix and bias vector sorted separately. Ties sort by original index.
Penalty wasserstein_penalty(const ParamSet& params);
Penalty wasserstein_penalty(const ParamSet& params, std::span<const double> snapshot);

/// One tensor: writes 2(θ_(i) - θ⁰_(i)) back through the sort permutation
/// into `gradient` (same length as `current`) and returns the penalty.
double wasserstein_tensor(std::span<const double> current, std::span<const double> initial,
                          std::span<double> gradient);

/// Σ_i (θ_i - θ⁰_i)².
Penalty regenerative_penalty(const ParamSet& params);
Penalty regenerative_penalty(const ParamSet& params, std::span<const double> snapshot);

/// Σ_i θ_i².
Penalty weight_decay_penalty(const ParamSet& params);

/// σ₁²(Φ) − σ_d²(Φ) for the last-hidden representation Φ of batch x, with
/// d = min(batch, width), backpropagated into parameter space.
Penalty feature_rank_penalty(const ParamSet& params, Activation activation, const Matrix& x);

/// Same penalty given an existing forward pass over the minibatch.
Penalty feature_rank_penalty(const ParamSet& params, Activation activation,
                             const ForwardCache& cache);

/// Adds strength * gradient of the configured penalty to `gradient` and
/// returns the unscaled penalty value. A zero strength leaves `gradient`
/// untouched.
double add_regularizer_gradient(const RegularizerSpec& spec, const ParamSet& params,
                                Activation activation, const ForwardCache& cache,
                                std::span<double> gradient);

}  // namespace curvlab
