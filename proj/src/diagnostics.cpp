#include "curvlab/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "curvlab/optim.hpp"

namespace curvlab {

namespace {

void guard_dense(std::size_t d) {
    if (d > kDenseCurvatureLimit) {
        throw std::length_error("dense curvature matrix refused: " + std::to_string(d) +
                                " parameters exceeds the limit of " +
                                std::to_string(kDenseCurvatureLimit));
    }
}

}  // namespace

RankReport make_rank_report(std::size_t erank, std::size_t max_rank) {
    RankReport r{erank, max_rank, 0.0};
    if (max_rank > 0) r.relative = static_cast<double>(erank) / static_cast<double>(max_rank);
    return r;
}

std::size_t effective_rank(std::span<const double> sv, double threshold) {
    double total = 0.0;
    for (std::size_t i = 0; i < sv.size(); ++i) {
        if (!(sv[i] >= 0.0)) throw std::invalid_argument("effective_rank: negative singular value");
        if (i > 0 && sv[i] > sv[i - 1]) {
            throw std::invalid_argument("effective_rank: singular values must be descending");
        }
        total += sv[i];
    }
    if (total == 0.0) return 0;
    double cumulative = 0.0;
    for (std::size_t j = 0; j < sv.size(); ++j) {
        cumulative += sv[j];
        if (cumulative / total > threshold) return j + 1;
    }
    return sv.size();
}

RankReport rank_from_gram(const Matrix& gram, std::size_t param_count) {
    const auto sv = sqrt_clamped(sym_eigvals(gram));
    return make_rank_report(effective_rank(sv), std::min(param_count, gram.rows()));
}

RankReport empirical_fisher_rank(const Matrix& g) {
    if (g.cols() == 0) throw ShapeError("empirical_fisher_rank: need at least one column");
    return rank_from_gram(gram_cols(g), g.rows());
}

Matrix exact_hessian(const ParamSet& params, Activation activation, const Matrix& x,
                     std::span<const int> labels, bool symmetrize) {
    const std::size_t d = params.size();
    guard_dense(d);
    check_batch(params, x, labels);
    double theta_max = 0.0;
    for (double v : params.values()) theta_max = std::max(theta_max, std::abs(v));
    const double h = 1e-4 * (1.0 + theta_max);

    ParamSet probe = params;
    Matrix hess(d, d);
    for (std::size_t j = 0; j < d; ++j) {
        const double orig = probe.values()[j];
        probe.values()[j] = orig + h;
        const auto plus = batch_gradient(probe, activation, x, labels);
        probe.values()[j] = orig - h;
        const auto minus = batch_gradient(probe, activation, x, labels);
        probe.values()[j] = orig;
        for (std::size_t i = 0; i < d; ++i) hess(i, j) = (plus[i] - minus[i]) / (2.0 * h);
    }
    if (symmetrize) {
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i + 1; j < d; ++j) {
                const double avg = 0.5 * (hess(i, j) + hess(j, i));
                hess(i, j) = avg;
                hess(j, i) = avg;
            }
        }
    }
    return hess;
}

RankReport symmetric_rank(const Matrix& h, std::optional<std::size_t> max_rank) {
    auto ev = sym_eigvals(h);
    for (double& v : ev) v = std::abs(v);
    std::sort(ev.begin(), ev.end(), std::greater<>());
    return make_rank_report(effective_rank(ev), max_rank.value_or(h.rows()));
}

RankReport fisher_rank(const ParamSet& params, Activation activation, const Matrix& x,
                       RandomStream& rng) {
    if (x.rows() == 0) throw ShapeError("fisher_rank: empty batch");
    const auto fwd = forward(params, activation, x);
    Matrix signal = softmax(fwd.logits);
    for (std::size_t i = 0; i < signal.rows(); ++i) {
        auto p = signal.row(i);
        const double u = rng.next_unit();
        double cumulative = 0.0;
        std::size_t drawn = p.size() - 1;
        for (std::size_t c = 0; c < p.size(); ++c) {
            cumulative += p[c];
            if (u < cumulative) {
                drawn = c;
                break;
            }
        }
        p[drawn] -= 1.0;
    }
    const Matrix gram = per_sample_gram_from_signal(params, activation, fwd.cache, signal);
    return rank_from_gram(gram, params.size());
}

Matrix softmax_hessian(std::span<const double> p) {
    const std::size_t c = p.size();
    Matrix h(c, c);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < c; ++j) h(i, j) = (i == j ? p[i] : 0.0) - p[i] * p[j];
    return h;
}

Matrix gauss_newton_matrix(const ParamSet& params, Activation activation, const Matrix& x) {
    const std::size_t d = params.size();
    guard_dense(d);
    const std::size_t m = x.rows();
    if (m == 0) throw ShapeError("gauss_newton_matrix: empty batch");
    const auto fwd = forward(params, activation, x);
    const Matrix probs = softmax(fwd.logits);
    const std::size_t classes = probs.cols();

    // jac[c] is d x M: column i is ∂z_{i,c}/∂θ.
    std::vector<Matrix> jac;
    jac.reserve(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        Matrix unit(m, classes);
        for (std::size_t i = 0; i < m; ++i) unit(i, c) = 1.0;
        jac.push_back(per_sample_gradients_from_signal(params, activation, fwd.cache, unit));
    }

    // H_z = S Sᵀ with S = diag(√p) − p √pᵀ, so J H_z Jᵀ = (J S)(J S)ᵀ.
    Matrix b(d, m * classes);
    for (std::size_t i = 0; i < m; ++i) {
        const auto p = probs.row(i);
        for (std::size_t cp = 0; cp < classes; ++cp) {
            const double sq = std::sqrt(p[cp]);
            const std::size_t col = i * classes + cp;
            for (std::size_t c = 0; c < classes; ++c) {
                const double s = (c == cp ? sq : 0.0) - p[c] * sq;
                if (s == 0.0) continue;
                for (std::size_t r = 0; r < d; ++r) b(r, col) += jac[c](r, i) * s;
            }
        }
    }
    Matrix gn = gram_rows(b);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (double& v : gn.data()) v *= inv_m;
    return gn;
}

RankReport gauss_newton_rank(const ParamSet& params, Activation activation, const Matrix& x) {
    const Matrix gn = gauss_newton_matrix(params, activation, x);
    const std::size_t classes = params.fan_out(params.num_layers() - 1);
    const std::size_t cap = x.rows() * (classes > 0 ? classes - 1 : 0);
    return symmetric_rank(gn, std::min(params.size(), cap));
}

double grad_overlap_from_gram(const Matrix& gram, std::span<const double> c, double g_norm) {
    if (!(g_norm > 0.0)) throw std::invalid_argument("grad_overlap: gradient must be nonzero");
    const std::size_t m = gram.rows();
    if (c.size() != m) throw ShapeError("grad_overlap: Gᵀg length mismatch");
    const auto eig = sym_eig(gram);
    const auto sv = sqrt_clamped(eig.values);
    const std::size_t k = effective_rank(sv);
    if (k == 0) return 0.0;

    // Ĥ_top g = G V_k V_kᵀ Gᵀ g; with w = V_k V_kᵀ c:
    //   gᵀĤ_top g = ‖V_kᵀ c‖²,  ‖Ĥ_top g‖² = wᵀ K w.
    std::vector<double> w(m, 0.0);
    double numerator = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        double proj = 0.0;
        for (std::size_t i = 0; i < m; ++i) proj += eig.vectors(i, j) * c[i];
        numerator += proj * proj;
        for (std::size_t i = 0; i < m; ++i) w[i] += eig.vectors(i, j) * proj;
    }
    const auto kw = matvec(gram, w);
    const double hg_sq = dot(w, kw);
    if (!(hg_sq > 0.0)) return 0.0;
    const double overlap = numerator / (g_norm * std::sqrt(hg_sq));
    return std::clamp(overlap, 0.0, 1.0);
}

double grad_overlap(const Matrix& g_matrix, std::span<const double> g) {
    if (g.size() != g_matrix.rows()) throw ShapeError("grad_overlap: g length mismatch");
    const double g_norm = norm2(g);
    if (!(g_norm > 0.0)) throw std::invalid_argument("grad_overlap: gradient must be nonzero");
    std::vector<double> c(g_matrix.cols(), 0.0);
    for (std::size_t r = 0; r < g_matrix.rows(); ++r) {
        const auto row = g_matrix.row(r);
        for (std::size_t i = 0; i < c.size(); ++i) c[i] += row[i] * g[r];
    }
    return grad_overlap_from_gram(gram_cols(g_matrix), c, g_norm);
}

double dormancy_negentropy(const Matrix& phi) {
    const std::size_t units = phi.cols();
    if (units == 0) throw ShapeError("dormancy_negentropy: representation has no units");
    std::vector<double> a(units, 0.0);
    for (std::size_t r = 0; r < phi.rows(); ++r) {
        const auto row = phi.row(r);
        for (std::size_t u = 0; u < units; ++u) a[u] += std::abs(row[u]);
    }
    double total = 0.0;
    for (double& v : a) {
        v /= static_cast<double>(std::max<std::size_t>(phi.rows(), 1));
        total += v;
    }
    if (total == 0.0) return 0.0;
    double negentropy = 0.0;
    for (double v : a) {
        const double p = v / total;
        if (p > 0.0) negentropy += p * std::log(p);
    }
    return negentropy;
}

double l1_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
}

double update_norm_avg(std::span<const double> step_l1_norms) {
    if (step_l1_norms.empty()) throw std::invalid_argument("update_norm_avg: no updates recorded");
    double s = 0.0;
    for (double v : step_l1_norms) s += v;
    return s / static_cast<double>(step_l1_norms.size());
}

double update_norm_avg(const std::vector<std::vector<double>>& deltas) {
    std::vector<double> norms;
    norms.reserve(deltas.size());
    for (const auto& d : deltas) norms.push_back(l1_norm(d));
    return update_norm_avg(norms);
}

double weight_norm(const ParamSet& params) { return l1_norm(params.values()); }

InitDistance dist_from_init(const ParamSet& params, std::span<const double> snapshot) {
    return {std::sqrt(regenerative_penalty(params, snapshot).value),
            std::sqrt(wasserstein_penalty(params, snapshot).value)};
}

InitDistance dist_from_init(const ParamSet& params) {
    return {std::sqrt(regenerative_penalty(params).value), std::sqrt(wasserstein_penalty(params).value)};
}

RankReport feature_effective_rank(const Matrix& phi) {
    if (phi.empty()) throw ShapeError("feature_effective_rank: empty representation");
    const auto sv = singular_values(phi);
    return make_rank_report(effective_rank(sv), std::min(phi.rows(), phi.cols()));
}

CurvatureProbe probe_curvature(const ParamSet& params, Activation activation, const Matrix& x,
                               std::span<const int> labels) {
    check_batch(params, x, labels);
    const std::size_t m = x.rows();
    if (m == 0) throw ShapeError("probe_curvature: empty probe batch");
    const auto fwd = forward(params, activation, x);
    const Matrix signal = output_residuals(fwd.logits, labels);
    const Matrix gram = per_sample_gram_from_signal(params, activation, fwd.cache, signal);

    CurvatureProbe out;
    out.empirical_fisher = rank_from_gram(gram, params.size());

    // Probe-batch gradient g = G 1/M, so Gᵀg = K 1/M and ‖g‖² = 1ᵀK1/M².
    std::vector<double> c(m, 0.0);
    double g_sq = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = gram.row(i);
        double s = 0.0;
        for (double v : row) s += v;
        c[i] = s / static_cast<double>(m);
        g_sq += s;
    }
    g_sq /= static_cast<double>(m) * static_cast<double>(m);
    out.grad_overlap = g_sq > 0.0 ? grad_overlap_from_gram(gram, c, std::sqrt(g_sq)) : 0.0;
    return out;
}

}  // namespace curvlab
