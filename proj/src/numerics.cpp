#include "uln/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "uln/error.hpp"

namespace uln {
namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be square and nonempty");
}

void require_symmetric(const Matrix& m, const char* what) {
  require_square(m, what);
  if (!is_symmetric(m)) throw Error(ErrorCode::NotSymmetric, what);
}

// Cholesky that tolerates exactly-singular pivots whose remaining column is
// also (numerically) zero. Returns false on a genuinely negative pivot.
bool try_cholesky(const Matrix& m, Matrix& l) {
  const Eigen::Index n = m.rows();
  const double scale = std::max(m.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  const double zero_tol = 1e-13 * scale;
  l.setZero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d > zero_tol) {
      const double ljj = std::sqrt(d);
      l(j, j) = ljj;
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double s = m(i, j);
        for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        l(i, j) = s / ljj;
      }
    } else if (d >= -zero_tol) {
      for (Eigen::Index i = j + 1; i < n; ++i) {
        double s = m(i, j);
        for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        if (std::abs(s) > std::sqrt(zero_tol * scale)) return false;
      }
    } else {
      return false;
    }
  }
  return true;
}

}  // namespace

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j)
      if (!(std::abs(m(i, j) - m(j, i)) <= tol)) return false;
  return true;
}

Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

CholeskyFactor cholesky_psd(const Matrix& m) {
  require_symmetric(m, "cholesky_psd input");
  const Eigen::Index n = m.rows();
  CholeskyFactor out;
  if (try_cholesky(m, out.l)) return out;

  const double tr = m.trace();
  const double base = 1e-12 * std::max(tr, 0.0) / static_cast<double>(n);
  double jitter = base;
  for (int attempt = 0; attempt <= 6 && base > 0.0; ++attempt, jitter *= 2.0) {
    Matrix shifted = m;
    shifted.diagonal().array() += jitter;
    if (try_cholesky(shifted, out.l)) {
      out.jitter = jitter;
      return out;
    }
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo >= -1e-6 * std::abs(tr) / static_cast<double>(n)))
    throw Error(ErrorCode::NotPSD, "most negative eigenvalue " + std::to_string(lo));
  // Rounding-level negative eigenvalues: clip them and take the triangular
  // factor of V sqrt(max(L, 0)) through a QR decomposition.
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix b = es.eigenvectors() * root.asDiagonal();
  Eigen::HouseholderQR<Matrix> qr(b.transpose());
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i, i) < 0) r.row(i) *= -1.0;
  out.l = r.transpose();
  out.jitter = -lo;
  return out;
}

double spectral_radius(const Matrix& a) {
  require_square(a, "spectral_radius input");
  if (is_symmetric(a)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double min_eigenvalue(const Matrix& m) {
  require_symmetric(m, "min_eigenvalue input");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

namespace {

Matrix lyapunov_solve(const Matrix& a, const Matrix& q) {
  if (is_symmetric(a)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    const Matrix& v = es.eigenvectors();
    const Vector& lam = es.eigenvalues();
    Matrix qt = v.transpose() * q * v;
    for (Eigen::Index i = 0; i < qt.rows(); ++i)
      for (Eigen::Index j = 0; j < qt.cols(); ++j) qt(i, j) /= 1.0 - lam(i) * lam(j);
    return symmetrize(v * qt * v.transpose());
  }
  // Smith doubling: P_{k+1} = P_k + A_k P_k A_k^T, A_{k+1} = A_k^2.
  Matrix p = q;
  Matrix ak = a;
  for (int it = 0; it < 200; ++it) {
    const Matrix inc = ak * p * ak.transpose();
    p += inc;
    ak = ak * ak;
    if (inc.norm() <= 1e-17 * p.norm()) break;
  }
  return symmetrize(p);
}

}  // namespace

Matrix discrete_lyapunov(const Matrix& a, const Matrix& q) {
  require_square(a, "lyapunov a");
  require_symmetric(q, "lyapunov q");
  if (a.rows() != q.rows()) throw Error(ErrorCode::DimensionMismatch, "lyapunov a/q sizes differ");
  const double rho = spectral_radius(a);
  if (!(rho < 1.0))
    throw Error(ErrorCode::Unstable, "spectral radius " + std::to_string(rho) + " >= 1");

  Matrix p = lyapunov_solve(a, q);
  // One refinement sweep keeps the residual at rounding level.
  const Matrix resid = q + a * p * a.transpose() - p;
  if (resid.norm() > 1e-13 * q.norm()) p = symmetrize(p + lyapunov_solve(a, symmetrize(resid)));
  return p;
}

Matrix sym_matrix_exp(const Matrix& m, double t) {
  require_symmetric(m, "sym_matrix_exp input");
  if (t == 0.0) return Matrix::Identity(m.rows(), m.cols());
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const Vector e = (-t * es.eigenvalues()).array().exp();
  return symmetrize(es.eigenvectors() * e.asDiagonal() * es.eigenvectors().transpose());
}

double relative_frobenius_error(const Matrix& estimate, const Matrix& reference) {
  const double denom = reference.norm();
  const double diff = (estimate - reference).norm();
  return denom > 0.0 ? diff / denom : diff;
}

double quad_form(const Vector& v, const Matrix& m) { return v.dot(m * v); }

}  // namespace uln
