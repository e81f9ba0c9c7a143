#pragma once

#include <complex>
#include <vector>

#include "coadapt/matrix.hpp"

namespace coadapt {

// Singular values of a (possibly rectangular) matrix, descending,
// min(rows, cols) values. One-sided Jacobi orthogonalization.
std::vector<double> svd_values(const Matrix& a);

// Thin SVD: a = u * diag(sigma) * v^T with u (rows x k), v (cols x k),
// k = min(rows, cols). sigma descending, u/v columns orthonormal.
struct SvdResult {
    Matrix u;
    std::vector<double> sigma;
    Matrix v;
};
SvdResult svd(const Matrix& a);

// Minimum-norm least-squares solution of a x = b via the pseudoinverse.
// Singular values below rel_tol * sigma_max are treated as zero.
std::vector<double> pinv_solve(const Matrix& a, const std::vector<double>& b,
                               double rel_tol = 1e-12);

// All n eigenvalues of a square matrix, with multiplicity. Balancing,
// Householder reduction to Hessenberg form, then shifted QR with implicit
// double shifts; 2x2 trailing blocks yield conjugate complex pairs.
// Result sorted by descending real part, then descending imaginary part.
std::vector<std::complex<double>> eig_complex(const Matrix& a);

}  // namespace coadapt
