#pragma once

// Curvature and plasticity metrics.
//
// The main curvature estimate is the empirical Fisher Ĥ = GGᵀ built from
// per-sample gradients G (d x M). Its effective rank is read off the M x M
// Gram matrix GᵀG, which shares the nonzero spectrum of GGᵀ. The exact
// Hessian, the sampled Fisher and the Gauss-Newton matrix are validation
// oracles for small networks only.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "curvlab/network.hpp"
#include "curvlab/random.hpp"

namespace curvlab {

inline constexpr double kErankThreshold = 0.99;
inline constexpr std::size_t kDenseCurvatureLimit = 5000;

struct RankReport {
    std::size_t erank = 0;
    std::size_t max_rank = 0;
    double relative = 0.0;
};

RankReport make_rank_report(std::size_t erank, std::size_t max_rank);

/// Smallest j with Σ_{i<=j} σ_i / Σ σ_i > threshold; 0 for an all-zero
/// spectrum. Rejects negative or ascending entries.
std::size_t effective_rank(std::span<const double> singular_values,
                           double threshold = kErankThreshold);

/// erank of G from the eigenvalues of GᵀG; max_rank = min(d, M).
RankReport empirical_fisher_rank(const Matrix& g);

/// Same estimate given K = GᵀG and the parameter count d.
RankReport rank_from_gram(const Matrix& gram, std::size_t param_count);

/// Central-difference Hessian of the mean batch loss. Column j is
/// (∇J(θ + h e_j) − ∇J(θ − h e_j)) / 2h with h = 1e-4 (1 + ‖θ‖_∞).
/// Refuses d > kDenseCurvatureLimit.
Matrix exact_hessian(const ParamSet& params, Activation activation, const Matrix& x,
                     std::span<const int> labels, bool symmetrize = true);

/// erank of a symmetric matrix from |eigenvalues|; max_rank = its dimension
/// unless given.
RankReport symmetric_rank(const Matrix& h, std::optional<std::size_t> max_rank = std::nullopt);

/// Sampled Fisher: one label per input drawn from the model's softmax, then
/// the empirical Fisher machinery on those labels.
RankReport fisher_rank(const ParamSet& params, Activation activation, const Matrix& x,
                       RandomStream& rng);

/// diag(p) − ppᵀ for one softmax row.
Matrix softmax_hessian(std::span<const double> probs);

/// (1/M) Σ_i J_iᵀ H_z,i J_i, J_i the logit Jacobian of sample i.
Matrix gauss_newton_matrix(const ParamSet& params, Activation activation, const Matrix& x);

/// Gauss-Newton erank; max_rank = min(d, M (C − 1)).
RankReport gauss_newton_rank(const ParamSet& params, Activation activation, const Matrix& x);

/// gᵀĤ_top g / (‖g‖ ‖Ĥ_top g‖) where Ĥ_top keeps the top-erank eigenpairs of
/// GGᵀ. Returns 0 when Ĥ_top g vanishes; rejects g = 0.
double grad_overlap(const Matrix& g_matrix, std::span<const double> g);

/// Same quantity from K = GᵀG and c = Gᵀg, with ‖g‖ given.
double grad_overlap_from_gram(const Matrix& gram, std::span<const double> g_dot_columns,
                              double g_norm);

/// Σ_u p_u ln p_u with p_u ∝ mean |Φ_{:,u}|; in [−ln n, 0].
double dormancy_negentropy(const Matrix& representation);

double l1_norm(std::span<const double> v);

/// Mean over recorded steps of the per-step L1 update norm.
double update_norm_avg(std::span<const double> step_l1_norms);
double update_norm_avg(const std::vector<std::vector<double>>& deltas);

/// Σ |θ_i| over all parameters.
double weight_norm(const ParamSet& params);

struct InitDistance {
    double l2 = 0.0;  // sqrt(regenerative penalty)
    double w2 = 0.0;  // sqrt(wasserstein penalty)
};

InitDistance dist_from_init(const ParamSet& params);
InitDistance dist_from_init(const ParamSet& params, std::span<const double> snapshot);

/// erank of Φ's singular values; max_rank = min(batch, width).
RankReport feature_effective_rank(const Matrix& representation);

/// Start-of-task curvature probe on a fixed batch, computed through the
/// per-sample Gram matrix so G is never materialized.
struct CurvatureProbe {
    RankReport empirical_fisher;
    double grad_overlap = 0.0;
};

CurvatureProbe probe_curvature(const ParamSet& params, Activation activation, const Matrix& x,
                               std::span<const int> labels);

struct DiagnosticsRecord {
    std::size_t task = 0;
    double task_end_error = 0.0;
    double task_end_loss = 0.0;
    double avg_online_error = 0.0;
    double hessian_relative_erank = 0.0;
    double feature_relative_erank = 0.0;
    double avg_update_norm_l1 = 0.0;
    double weight_norm_l1 = 0.0;
    double dormancy_negentropy = 0.0;
    double grad_overlap = 0.0;
    double dist_init_l2 = 0.0;
    double dist_init_w2 = 0.0;
    std::optional<double> fisher_relative_erank;
    std::optional<double> gauss_newton_relative_erank;
    std::optional<double> exact_relative_erank;
};

}  // namespace curvlab
