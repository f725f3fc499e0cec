#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <lapacke.h>

#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace nhqm {

using complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when an iterative norm estimate fails to certify the requested
/// tolerance; carries the best estimate and its relative residual.
class norm_convergence_error : public error {
 public:
  norm_convergence_error(const std::string& msg, double best, double residual)
      : error(msg), best_estimate(best), residual(residual) {}
  double best_estimate;
  double residual;
};

/// Dense complex square matrix in a fixed, tagged basis. Instances are
/// immutable after construction; every operation below is a pure function,
/// safe to call concurrently.
class Operator {
 public:
  Operator(Matrix entries, std::string basis_tag)
      : mat_(std::move(entries)), tag_(std::move(basis_tag)) {
    if (mat_.rows() != mat_.cols() || mat_.rows() < 1)
      throw error("Operator: entries must form a nonempty square matrix");
    if (!mat_.allFinite())
      throw error("Operator: non-finite entry in basis '" + tag_ + "'");
  }

  static Operator identity(Eigen::Index dim, std::string basis_tag) {
    return Operator(Matrix::Identity(dim, dim), std::move(basis_tag));
  }
  static Operator zero(Eigen::Index dim, std::string basis_tag) {
    return Operator(Matrix::Zero(dim, dim), std::move(basis_tag));
  }

  Eigen::Index dim() const { return mat_.rows(); }
  const Matrix& mat() const { return mat_; }
  const std::string& basis_tag() const { return tag_; }

 private:
  Matrix mat_;
  std::string tag_;
};

inline void require_same_basis(const Operator& a, const Operator& b,
                               const char* what) {
  if (a.basis_tag() != b.basis_tag())
    throw error(std::string(what) + ": basis mismatch ('" + a.basis_tag() +
                "' vs '" + b.basis_tag() + "')");
  if (a.dim() != b.dim())
    throw error(std::string(what) + ": dimension mismatch");
}

inline Operator operator+(const Operator& a, const Operator& b) {
  require_same_basis(a, b, "operator+");
  return Operator(a.mat() + b.mat(), a.basis_tag());
}

inline Operator operator-(const Operator& a, const Operator& b) {
  require_same_basis(a, b, "operator-");
  return Operator(a.mat() - b.mat(), a.basis_tag());
}

inline Operator operator*(const Operator& a, const Operator& b) {
  require_same_basis(a, b, "operator*");
  return Operator(a.mat() * b.mat(), a.basis_tag());
}

inline Operator operator*(complex c, const Operator& a) {
  return Operator(c * a.mat(), a.basis_tag());
}

inline Operator operator*(double c, const Operator& a) {
  return Operator(c * a.mat(), a.basis_tag());
}

inline complex trace(const Operator& a) { return a.mat().trace(); }

inline Operator adjoint(const Operator& a) {
  return Operator(a.mat().adjoint(), a.basis_tag());
}

/// sqrt(Tr(A^dag A)) = sqrt(sum |a_ij|^2).
inline double frobenius_norm(const Operator& a) { return a.mat().norm(); }

namespace detail {

double largest_singular_value_exact(const Matrix& a);

// Largest singular value by block power iteration on A^dag A with
// Rayleigh-Ritz extraction; runs in real arithmetic when A is real. The
// relative residual of the dominant Ritz pair certifies convergence.
// Deterministic: the start block comes from a fixed PRNG stream. When the
// residual plateaus (top singular value with multiplicity beyond the block),
// the caller gets NaN and falls back to the exact dense path.
template <typename Scalar>
double block_iteration(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& a,
                       double tol, int max_iter) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = a.rows();
  const Eigen::Index block = std::min<Eigen::Index>(8, n);
  std::mt19937_64 rng(0x6e68716d5f6f70ULL ^ static_cast<std::uint64_t>(n));
  std::normal_distribution<double> nd;
  Mat q(n, block);
  for (Eigen::Index j = 0; j < block; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      if constexpr (std::is_same_v<Scalar, double>)
        q(i, j) = nd(rng);
      else
        q(i, j) = Scalar(nd(rng), nd(rng));
    }
  q = Eigen::HouseholderQR<Mat>(q).householderQ() * Mat::Identity(n, block);

  double plateau_ref = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    Mat w = a * q;                      // n x b
    Mat b = w.adjoint() * w;            // b x b, = Q^H A^H A Q
    Eigen::SelfAdjointEigenSolver<Mat> es(b);
    Eigen::Index top;
    es.eigenvalues().maxCoeff(&top);
    const double theta = std::max(0.0, es.eigenvalues()(top));
    Vec y = es.eigenvectors().col(top);
    Vec r = a.adjoint() * (w * y) - theta * (q * y);
    const double relres = theta > 0 ? r.norm() / theta : 0.0;
    if (relres <= tol) return std::sqrt(theta);
    if (it % 50 == 49) {
      // no meaningful progress across 50 sweeps: clustered top spectrum
      if (relres > 0.25 * plateau_ref) return std::numeric_limits<double>::quiet_NaN();
      plateau_ref = relres;
    }
    Mat z = a.adjoint() * w;            // next subspace: (A^H A) Q
    q = Eigen::HouseholderQR<Mat>(z).householderQ() * Mat::Identity(n, block);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

// Dense certificate: full eigenvalue run of A^dag A (real path when A is
// real). Used for small matrices and as the fallback when iteration stalls.
inline double largest_singular_value_exact(const Matrix& a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  lapack_int info = 0;
  if (a.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::MatrixXd re = a.real();
    Eigen::MatrixXd b = re.transpose() * re;
    Eigen::VectorXd w(n);
    info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'U', n, b.data(), n, w.data());
    if (info == 0) return std::sqrt(std::max(0.0, w(n - 1)));
  } else {
    Matrix b = a.adjoint() * a;
    Eigen::VectorXd w(n);
    info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'N', 'U', n,
                          reinterpret_cast<lapack_complex_double*>(b.data()), n,
                          w.data());
    if (info == 0) return std::sqrt(std::max(0.0, w(n - 1)));
  }
  throw norm_convergence_error(
      "operator_norm: dense eigensolve failed (info=" + std::to_string(info) + ")",
      0.0, 1.0);
}

}  // namespace detail

/// Operator (spectral) norm: sqrt of the largest eigenvalue of A^dag A.
/// Exact Hermitian eigensolve for dim <= 64; block power iteration with
/// relative tolerance 1e-12 and a 10,000-iteration cap above that, falling
/// back to the exact dense eigensolve when clustered top singular values
/// stall the iteration.
inline double operator_norm(const Operator& a) {
  const Matrix& m = a.mat();
  if (m.norm() == 0.0) return 0.0;
  if (a.dim() <= 64) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.adjoint() * m);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
  double est;
  if (m.imag().cwiseAbs().maxCoeff() == 0.0)
    est = detail::block_iteration<double>(m.real(), 1e-12, 10000);
  else
    est = detail::block_iteration<complex>(m, 1e-12, 10000);
  if (!std::isnan(est)) return est;
  return detail::largest_singular_value_exact(m);
}

}  // namespace nhqm
