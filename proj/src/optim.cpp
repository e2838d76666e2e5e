#include "curvlab/optim.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

namespace curvlab {

AdamState::AdamState(std::size_t dim, AdamHyper hyper)
    : hyper_(hyper), m_(dim, 0.0), v_(dim, 0.0) {}

void AdamState::reset() {
    std::fill(m_.begin(), m_.end(), 0.0);
    std::fill(v_.begin(), v_.end(), 0.0);
    t_ = 0;
}

void AdamState::restore(std::vector<double> m, std::vector<double> v, std::uint64_t t) {
    if (m.size() != m_.size() || v.size() != v_.size()) {
        throw ShapeError("AdamState::restore: moment dimension mismatch");
    }
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

std::vector<double> AdamState::apply(std::span<double> params, std::span<const double> gradient) {
    if (params.size() != m_.size() || gradient.size() != m_.size()) {
        throw ShapeError("adam_step: state has dimension " + std::to_string(m_.size()) +
                         ", params " + std::to_string(params.size()) + ", gradient " +
                         std::to_string(gradient.size()));
    }
    ++t_;
    const auto& h = hyper_;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t_));
    std::vector<double> delta(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = gradient[i];
        m_[i] = h.beta1 * m_[i] + (1.0 - h.beta1) * g;
        v_[i] = h.beta2 * v_[i] + (1.0 - h.beta2) * g * g;
        const double mhat = m_[i] / bc1;
        const double vhat = v_[i] / bc2;
        const double before = params[i];
        params[i] = before - h.lr * mhat / (std::sqrt(vhat) + h.eps);
        delta[i] = params[i] - before;
    }
    return delta;
}

std::vector<double> adam_step(AdamState& state, ParamSet& params, std::span<const double> gradient) {
    return state.apply(params.values(), gradient);
}

RegularizerKind parse_regularizer(std::string_view name) {
    std::string key;
    for (char c : name) {
        if (c == '-') c = '_';
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (key == "none") return RegularizerKind::none;
    if (key == "weight_decay" || key == "l2") return RegularizerKind::weight_decay;
    if (key == "regenerative") return RegularizerKind::regenerative;
    if (key == "wasserstein") return RegularizerKind::wasserstein;
    if (key == "feature_rank") return RegularizerKind::feature_rank;
    throw std::invalid_argument("unknown regularizer '" + std::string(name) + "'");
}

std::string_view to_string(RegularizerKind k) {
    switch (k) {
        case RegularizerKind::none: return "none";
        case RegularizerKind::weight_decay: return "weight_decay";
        case RegularizerKind::regenerative: return "regenerative";
        case RegularizerKind::wasserstein: return "wasserstein";
        case RegularizerKind::feature_rank: return "feature_rank";
    }
    return "unknown";
}

void RegularizerSpec::validate() const {
    if (!(strength >= 0.0) || !std::isfinite(strength)) {
        throw std::invalid_argument("regularizer strength must be a finite nonnegative number");
    }
    if (kind == RegularizerKind::none && strength != 0.0) {
        throw std::invalid_argument("regularizer 'none' cannot have a nonzero strength");
    }
}

namespace {

void require_snapshot(const ParamSet& params, std::span<const double> snapshot) {
    if (snapshot.size() != params.size()) {
        throw ShapeError("snapshot has " + std::to_string(snapshot.size()) +
                         " values, parameters have " + std::to_string(params.size()));
    }
}

// Order-preserving map from double to unsigned; -0.0 and 0.0 share a key.
std::uint64_t sort_key(double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x + 0.0);
    return (bits >> 63) ? ~bits : bits | (std::uint64_t{1} << 63);
}

// Stable argsort by value, ties by index. LSD radix for large tensors.
void argsort(std::span<const double> values, std::vector<std::size_t>& order) {
    const std::size_t n = values.size();
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (n < 2048) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return values[a] < values[b] || (values[a] == values[b] && a < b);
        });
        return;
    }
    constexpr int kBits = 11;
    constexpr std::size_t kBuckets = std::size_t{1} << kBits;
    std::vector<std::uint64_t> keys(n), keys_tmp(n);
    std::vector<std::size_t> order_tmp(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = sort_key(values[i]);
    std::vector<std::size_t> count(kBuckets);
    for (int shift = 0; shift < 64; shift += kBits) {
        std::fill(count.begin(), count.end(), 0);
        for (const auto k : keys) ++count[(k >> shift) & (kBuckets - 1)];
        if (std::find(count.begin(), count.end(), n) != count.end()) continue;
        std::size_t sum = 0;
        for (auto& c : count) sum += std::exchange(c, sum);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t dst = count[(keys[i] >> shift) & (kBuckets - 1)]++;
            keys_tmp[dst] = keys[i];
            order_tmp[dst] = order[i];
        }
        keys.swap(keys_tmp);
        order.swap(order_tmp);
    }
}

double wasserstein_sorted_init(std::span<const double> current, std::span<const double> sorted_init,
                               std::span<double> gradient, std::vector<std::size_t>& order) {
    argsort(current, order);
    double total = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const double diff = current[order[i]] - sorted_init[i];
        total += diff * diff;
        gradient[order[i]] = 2.0 * diff;
    }
    return total;
}

}  // namespace

double wasserstein_tensor(std::span<const double> current, std::span<const double> initial,
                          std::span<double> gradient) {
    if (current.size() != initial.size() || gradient.size() != current.size()) {
        throw ShapeError("wasserstein_tensor: length mismatch");
    }
    std::vector<double> sorted_init(initial.begin(), initial.end());
    std::sort(sorted_init.begin(), sorted_init.end());
    std::vector<std::size_t> order;
    return wasserstein_sorted_init(current, sorted_init, gradient, order);
}

Penalty wasserstein_penalty(const ParamSet& params) {
    Penalty out{0.0, std::vector<double>(params.size(), 0.0)};
    const auto cur = params.values();
    const auto sorted = params.sorted_snapshot();
    std::vector<std::size_t> order;
    for (const auto& t : params.tensors()) {
        out.value += wasserstein_sorted_init(cur.subspan(t.offset, t.size),
                                             sorted.subspan(t.offset, t.size),
                                             std::span(out.gradient).subspan(t.offset, t.size), order);
    }
    return out;
}

Penalty wasserstein_penalty(const ParamSet& params, std::span<const double> snapshot) {
    require_snapshot(params, snapshot);
    Penalty out{0.0, std::vector<double>(params.size(), 0.0)};
    const auto cur = params.values();
    for (const auto& t : params.tensors()) {
        out.value += wasserstein_tensor(cur.subspan(t.offset, t.size), snapshot.subspan(t.offset, t.size),
                                        std::span(out.gradient).subspan(t.offset, t.size));
    }
    return out;
}

Penalty regenerative_penalty(const ParamSet& params, std::span<const double> snapshot) {
    require_snapshot(params, snapshot);
    Penalty out{0.0, std::vector<double>(params.size())};
    const auto cur = params.values();
    for (std::size_t i = 0; i < cur.size(); ++i) {
        const double diff = cur[i] - snapshot[i];
        out.value += diff * diff;
        out.gradient[i] = 2.0 * diff;
    }
    return out;
}

Penalty regenerative_penalty(const ParamSet& params) {
    return regenerative_penalty(params, params.init_snapshot());
}

Penalty weight_decay_penalty(const ParamSet& params) {
    Penalty out{0.0, std::vector<double>(params.size())};
    const auto cur = params.values();
    for (std::size_t i = 0; i < cur.size(); ++i) {
        out.value += cur[i] * cur[i];
        out.gradient[i] = 2.0 * cur[i];
    }
    return out;
}

Penalty feature_rank_penalty(const ParamSet& params, Activation activation,
                             const ForwardCache& cache) {
    const Matrix& phi = cache.representation();
    Penalty out{0.0, std::vector<double>(params.size(), 0.0)};
    const std::size_t batch = phi.rows();
    const std::size_t width = phi.cols();
    if (batch == 0 || width == 0) return out;
    if (std::all_of(phi.data().begin(), phi.data().end(), [](double v) { return v == 0.0; })) {
        return out;
    }

    // Work on the smaller Gram side. With right singular vectors v (width
    // side) d(σ²)/dΦ = 2Φvvᵀ; with left vectors u (batch side) it is 2uuᵀΦ.
    const bool right_side = width <= batch;
    const auto eig = sym_eig(right_side ? gram_cols(phi) : gram_rows(phi));
    const std::size_t d = std::min(batch, width);
    const double top = std::max(eig.values.front(), 0.0);
    const double bottom = std::max(eig.values[d - 1], 0.0);
    out.value = top - bottom;
    if (out.value == 0.0) return out;

    const std::size_t n = eig.vectors.rows();
    Matrix proj(n, n);  // v1 v1ᵀ − v_d v_dᵀ
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            proj(i, j) = eig.vectors(i, 0) * eig.vectors(j, 0) -
                         eig.vectors(i, d - 1) * eig.vectors(j, d - 1);
        }
    }
    Matrix signal = right_side ? matmul(phi, proj) : matmul(proj, phi);
    for (double& v : signal.data()) v *= 2.0;
    const auto deltas = backprop_from_representation(params, activation, cache, signal);
    out.gradient = accumulate_gradient(params, cache, deltas, 1.0);
    return out;
}

Penalty feature_rank_penalty(const ParamSet& params, Activation activation, const Matrix& x) {
    const auto fwd = forward(params, activation, x);
    return feature_rank_penalty(params, activation, fwd.cache);
}

double add_regularizer_gradient(const RegularizerSpec& spec, const ParamSet& params,
                                Activation activation, const ForwardCache& cache,
                                std::span<double> gradient) {
    if (spec.kind == RegularizerKind::none || spec.strength == 0.0) return 0.0;
    if (gradient.size() != params.size()) throw ShapeError("regularizer: gradient size mismatch");
    Penalty p;
    switch (spec.kind) {
        case RegularizerKind::weight_decay: p = weight_decay_penalty(params); break;
        case RegularizerKind::regenerative: p = regenerative_penalty(params); break;
        case RegularizerKind::wasserstein: p = wasserstein_penalty(params); break;
        case RegularizerKind::feature_rank: p = feature_rank_penalty(params, activation, cache); break;
        case RegularizerKind::none: return 0.0;
    }
    for (std::size_t i = 0; i < gradient.size(); ++i) gradient[i] += spec.strength * p.gradient[i];
    return p.value;
}

}  // namespace curvlab
