#pragma once

// Dense row-major matrices, symmetric eigensolvers and singular values.
//
// Matrix products and symmetric eigensolvers run through Eigen on mapped
// row-major buffers, single-threaded, so results are a deterministic
// function of the inputs.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace curvlab {

/// Thrown when operands have incompatible shapes or violate a structural
/// precondition (symmetry, squareness).
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* raw() noexcept { return data_.data(); }
    const double* raw() const noexcept { return data_.data(); }

    std::vector<double> column(std::size_t c) const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// C = op(A) * op(B) on raw row-major buffers; C is overwritten (beta = 0)
/// unless `accumulate` is set, in which case the product is added to C.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double* c, std::size_t ldc, double alpha = 1.0, bool accumulate = false);

Matrix matmul(const Matrix& a, const Matrix& b);     // A B
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // Aᵀ B
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // A Bᵀ
Matrix transpose(const Matrix& a);

/// MᵀM (cols × cols), exactly symmetric.
Matrix gram_cols(const Matrix& m);
/// MMᵀ (rows × rows), exactly symmetric.
Matrix gram_rows(const Matrix& m);

std::vector<double> matvec(const Matrix& a, std::span<const double> x);

double frobenius_norm(const Matrix& a);
double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

/// Throws ShapeError unless `a` is square and symmetric within
/// `rel_tol * max|a_ij|`.
void require_symmetric(const Matrix& a, double rel_tol = 1e-10);

struct EigenDecomposition {
    std::vector<double> values;  // descending
    Matrix vectors;              // column j pairs with values[j]
};

/// Eigendecomposition of a symmetric matrix (Householder tridiagonalization
/// + implicit QR), eigenvalues descending.
EigenDecomposition sym_eig(const Matrix& a);

/// Eigenvalues only (descending); several times cheaper than sym_eig for
/// the parameter-space Hessians.
std::vector<double> sym_eigvals(const Matrix& a);

/// Singular values (descending) from the eigenvalues of the smaller of MᵀM
/// and MMᵀ, negative round-off clamped to zero before the square root.
std::vector<double> singular_values(const Matrix& m);

/// Square roots of the clamped eigenvalues of a PSD matrix, descending.
std::vector<double> sqrt_clamped(std::span<const double> eigenvalues);

}  // namespace curvlab
