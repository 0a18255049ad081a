#pragma once

#include "uln/types.hpp"

namespace uln {

struct CholeskyFactor {
  Matrix l;             // lower triangular, l * l^T == m + jitter * I
  double jitter = 0.0;  // diagonal shift actually applied (0 when none was needed)
};

bool is_symmetric(const Matrix& m, double tol = 1e-12);
Matrix symmetrize(const Matrix& m);

/// Cholesky factor of a positive semidefinite matrix. Exactly singular
/// directions are handled without jitter; otherwise a small diagonal shift
/// is tried before giving up with NotPSD.
CholeskyFactor cholesky_psd(const Matrix& m);

/// Solves P = a P a^T + q.
Matrix discrete_lyapunov(const Matrix& a, const Matrix& q);

/// exp(-t m) for symmetric m.
Matrix sym_matrix_exp(const Matrix& m, double t);

double spectral_radius(const Matrix& a);
double min_eigenvalue(const Matrix& m);
double relative_frobenius_error(const Matrix& estimate, const Matrix& reference);
double quad_form(const Vector& v, const Matrix& m);

}  // namespace uln
