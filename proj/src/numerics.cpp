#include "curvlab/numerics.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace curvlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::vector<double> Matrix::column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Stride = Eigen::OuterStride<>;
using ConstMap = Eigen::Map<const RowMajor, Eigen::Unaligned, Stride>;
using MutMap = Eigen::Map<RowMajor, Eigen::Unaligned, Stride>;

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc, double alpha, bool accumulate) {
    if (m == 0 || n == 0) return;
    MutMap cm(c, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n),
              Stride(static_cast<Eigen::Index>(ldc)));
    if (!accumulate) cm.setZero();
    if (k == 0) return;
    const auto mi = static_cast<Eigen::Index>(m);
    const auto ni = static_cast<Eigen::Index>(n);
    const auto ki = static_cast<Eigen::Index>(k);
    const Stride sa(static_cast<Eigen::Index>(lda));
    const Stride sb(static_cast<Eigen::Index>(ldb));
    // Stored shapes: A is m x k (or k x m when transposed), B is k x n (or n x k).
    const ConstMap am(a, trans_a ? ki : mi, trans_a ? mi : ki, sa);
    const ConstMap bm(b, trans_b ? ni : ki, trans_b ? ki : ni, sb);
    if (!trans_a && !trans_b) cm.noalias() += alpha * am * bm;
    else if (!trans_a && trans_b) cm.noalias() += alpha * am * bm.transpose();
    else if (trans_a && !trans_b) cm.noalias() += alpha * am.transpose() * bm;
    else cm.noalias() += alpha * am.transpose() * bm.transpose();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix c(a.rows(), b.cols());
    gemm(false, false, a.rows(), b.cols(), a.cols(), a.raw(), a.cols(), b.raw(), b.cols(),
         c.raw(), c.cols());
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row counts differ");
    Matrix c(a.cols(), b.cols());
    gemm(true, false, a.cols(), b.cols(), a.rows(), a.raw(), a.cols(), b.raw(), b.cols(),
         c.raw(), c.cols());
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column counts differ");
    Matrix c(a.rows(), b.rows());
    gemm(false, true, a.rows(), b.rows(), a.cols(), a.raw(), a.cols(), b.raw(), b.cols(),
         c.raw(), c.cols());
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

namespace {

// Lower triangle from the product, mirrored so the result is exactly symmetric.
void mirror_lower(Matrix& s) {
    for (std::size_t i = 0; i < s.rows(); ++i)
        for (std::size_t j = i + 1; j < s.cols(); ++j) s(i, j) = s(j, i);
}

}  // namespace

Matrix gram_cols(const Matrix& m) {
    Matrix s(m.cols(), m.cols());
    if (m.rows() == 0 || m.cols() == 0) return s;
    gemm(true, false, m.cols(), m.cols(), m.rows(), m.raw(), m.cols(), m.raw(), m.cols(), s.raw(),
         s.cols());
    mirror_lower(s);
    return s;
}

Matrix gram_rows(const Matrix& m) {
    Matrix s(m.rows(), m.rows());
    if (m.rows() == 0 || m.cols() == 0) return s;
    gemm(false, true, m.rows(), m.rows(), m.cols(), m.raw(), m.cols(), m.raw(), m.cols(), s.raw(),
         s.cols());
    mirror_lower(s);
    return s;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
    std::vector<double> y(a.rows(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r) y[r] = dot(a.row(r), x);
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

void require_symmetric(const Matrix& a, double rel_tol) {
    if (a.rows() != a.cols()) {
        throw ShapeError("expected a square matrix, got " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()));
    }
    if (a.rows() == 0) throw ShapeError("expected a matrix of dimension >= 1");
    double scale = 0.0;
    for (double v : a.data()) scale = std::max(scale, std::abs(v));
    const double tol = rel_tol * scale;
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = i + 1; j < a.cols(); ++j) {
            if (std::abs(a(i, j) - a(j, i)) > tol) {
                throw ShapeError("matrix is not symmetric at (" + std::to_string(i) + ", " +
                                 std::to_string(j) + ")");
            }
        }
    }
}

EigenDecomposition sym_eig(const Matrix& input) {
    require_symmetric(input);
    const auto n = static_cast<Eigen::Index>(input.rows());
    const Eigen::Map<const RowMajor> a(input.raw(), n, n);
    Eigen::SelfAdjointEigenSolver<RowMajor> solver(a, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw std::runtime_error("sym_eig: solver did not converge");
    // Eigen returns ascending order; reverse it, keeping ties in reverse solver order.
    EigenDecomposition out{std::vector<double>(input.rows()), Matrix(input.rows(), input.rows())};
    for (Eigen::Index j = 0; j < n; ++j) {
        const Eigen::Index src = n - 1 - j;
        out.values[static_cast<std::size_t>(j)] = solver.eigenvalues()(src);
        for (Eigen::Index k = 0; k < n; ++k) {
            out.vectors(static_cast<std::size_t>(k), static_cast<std::size_t>(j)) =
                solver.eigenvectors()(k, src);
        }
    }
    return out;
}

std::vector<double> sym_eigvals(const Matrix& input) {
    require_symmetric(input);
    const auto n = static_cast<Eigen::Index>(input.rows());
    const Eigen::Map<const RowMajor> a(input.raw(), n, n);
    Eigen::SelfAdjointEigenSolver<RowMajor> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw std::runtime_error("sym_eigvals: solver did not converge");
    std::vector<double> w(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    std::reverse(w.begin(), w.end());
    return w;
}

std::vector<double> sqrt_clamped(std::span<const double> eigenvalues) {
    std::vector<double> out(eigenvalues.size());
    std::transform(eigenvalues.begin(), eigenvalues.end(), out.begin(),
                   [](double v) { return std::sqrt(std::max(v, 0.0)); });
    std::sort(out.begin(), out.end(), std::greater<>());
    return out;
}

std::vector<double> singular_values(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) return {};
    const Matrix g = m.rows() >= m.cols() ? gram_cols(m) : gram_rows(m);
    return sqrt_clamped(sym_eigvals(g));
}

}  // namespace curvlab
