#pragma once

// Reference algorithms that share no code with the library: cyclic Jacobi
// for symmetric eigenvalues and one-sided (Hestenes) Jacobi for singular
// values. Slow, simple, and accurate to near machine precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<double>>;

inline std::vector<double> jacobi_eigenvalues(Dense a) {
    const std::size_t n = a.size();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                total += a[i][j] * a[i][j];
                if (i != j) off += a[i][j] * a[i][j];
            }
        if (off <= 1e-30 * total) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = a[i][i];
    std::sort(w.begin(), w.end(), std::greater<>());
    return w;
}

/// Singular values of a rows x cols matrix (row-major vector of rows),
/// orthogonalizing columns pairwise until they are mutually orthogonal.
inline std::vector<double> jacobi_singular_values(Dense m) {
    if (m.empty()) return {};
    const std::size_t rows = m.size(), cols = m[0].size();
    if (cols > rows) {
        Dense t(cols, std::vector<double>(rows));
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) t[j][i] = m[i][j];
        return jacobi_singular_values(std::move(t));
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double alpha = 0, beta = 0, gamma = 0;
                for (std::size_t i = 0; i < rows; ++i) {
                    alpha += m[i][p] * m[i][p];
                    beta += m[i][q] * m[i][q];
                    gamma += m[i][p] * m[i][q];
                }
                if (std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t), s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double x = m[i][p], y = m[i][q];
                    m[i][p] = c * x - s * y;
                    m[i][q] = s * x + c * y;
                }
            }
        }
        if (!rotated) break;
    }
    std::vector<double> sv(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double s = 0;
        for (std::size_t i = 0; i < rows; ++i) s += m[i][j] * m[i][j];
        sv[j] = std::sqrt(s);
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

/// Smallest j with cumulative fraction strictly above `threshold`.
inline std::size_t erank(const std::vector<double>& sv, double threshold = 0.99) {
    double total = 0;
    for (double s : sv) total += s;
    if (total == 0) return 0;
    double acc = 0;
    for (std::size_t j = 0; j < sv.size(); ++j) {
        acc += sv[j];
        if (acc / total > threshold) return j + 1;
    }
    return sv.size();
}

}  // namespace oracle
