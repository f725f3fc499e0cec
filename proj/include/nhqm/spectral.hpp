#pragma once

#include <lapacke.h>

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "nhqm/operator.hpp"

namespace nhqm {

/// Eigenvalues with paired right kets |R_m> (unit norm, columns of `right`)
/// and left bras <L_m| (rows of `left`), satisfying <L_m|R_n> = delta_mn.
/// `condition` is max_m 1/|<Lhat_m|R_m>| with unit-normalized left vectors,
/// a defectiveness diagnostic; `ep_flag` marks condition > threshold.
struct BiorthogonalSystem {
  Eigen::Index dim;
  Vector eigenvalues;   // sorted by (Re, Im) ascending
  Matrix right;         // column m = |R_m>
  Matrix left;          // row m = <L_m|
  double condition;
  bool ep_flag;
  std::string basis_tag;

  Matrix left_kets() const { return left.adjoint(); }  // column m = |L_m>
};

/// Permutation that sorts eigenvalues by ascending real part, ties broken by
/// ascending imaginary part. Identity for an already canonically sorted list.
inline std::vector<Eigen::Index> eigen_order(const Vector& eigenvalues) {
  std::vector<Eigen::Index> perm(eigenvalues.size());
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::stable_sort(perm.begin(), perm.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (eigenvalues(a).real() != eigenvalues(b).real())
      return eigenvalues(a).real() < eigenvalues(b).real();
    return eigenvalues(a).imag() < eigenvalues(b).imag();
  });
  return perm;
}

inline std::vector<Eigen::Index> eigen_order(const BiorthogonalSystem& sys) {
  return eigen_order(sys.eigenvalues);
}

// The distribution's LAPACKE trsen wrappers crash on workspace handling, so
// the Fortran entry points are declared and driven with explicit workspace.
extern "C" {
void dtrsen_(const char* job, const char* compq, const lapack_logical* select,
             const lapack_int* n, double* t, const lapack_int* ldt, double* q,
             const lapack_int* ldq, double* wr, double* wi, lapack_int* m,
             double* s, double* sep, double* work, const lapack_int* lwork,
             lapack_int* iwork, const lapack_int* liwork, lapack_int* info);
void ztrsen_(const char* job, const char* compq, const lapack_logical* select,
             const lapack_int* n, lapack_complex_double* t, const lapack_int* ldt,
             lapack_complex_double* q, const lapack_int* ldq,
             lapack_complex_double* w, lapack_int* m, double* s, double* sep,
             lapack_complex_double* work, const lapack_int* lwork,
             lapack_int* info);
}

namespace detail {

// OpenBLAS threading is capped at one thread per call; parallelism in this
// project lives at the grid-cell level.
inline void ensure_single_threaded_blas() {
  static const bool done = [] {
#ifdef __unix__
    ::setenv("OPENBLAS_NUM_THREADS", "1", 0);
#endif
    return true;
  }();
  (void)done;
}

static_assert(sizeof(lapack_complex_double) == sizeof(complex),
              "LAPACK complex layout mismatch");

inline lapack_complex_double* lp(complex* p) {
  return reinterpret_cast<lapack_complex_double*>(p);
}

// All eigenvalues and (optionally) right eigenvectors of a general dense
// matrix. Real input goes through dgeev with conjugate-pair unpacking,
// complex input through zgeev.
inline void general_eigen(const Matrix& h, Vector& w, Matrix* vr) {
  ensure_single_threaded_blas();
  const lapack_int n = static_cast<lapack_int>(h.rows());
  w.resize(n);
  const bool is_real = (h.imag().cwiseAbs().maxCoeff() == 0.0);
  const char jobvr = vr ? 'V' : 'N';
  lapack_int info = 0;
  if (is_real) {
    Eigen::MatrixXd a = h.real();
    Eigen::VectorXd wr(n), wi(n);
    Eigen::MatrixXd v(vr ? n : 1, vr ? n : 1);
    info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', jobvr, n, a.data(), n,
                         wr.data(), wi.data(), nullptr, 1, v.data(),
                         vr ? n : 1);
    if (info == 0) {
      if (vr) vr->resize(n, n);
      for (lapack_int j = 0; j < n; ++j) {
        if (wi(j) != 0.0 && j + 1 < n && wi(j) == -wi(j + 1)) {
          w(j) = complex(wr(j), wi(j));
          w(j + 1) = complex(wr(j + 1), wi(j + 1));
          if (vr) {
            vr->col(j) = v.col(j).cast<complex>() +
                         complex(0, 1) * v.col(j + 1).cast<complex>();
            vr->col(j + 1) = v.col(j).cast<complex>() -
                             complex(0, 1) * v.col(j + 1).cast<complex>();
          }
          ++j;
        } else {
          w(j) = complex(wr(j), wi(j));
          if (vr) vr->col(j) = v.col(j).cast<complex>();
        }
      }
    }
  } else {
    Matrix a = h;
    if (vr) vr->resize(n, n);
    Matrix dummy(1, 1);
    info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'N', jobvr, n, lp(a.data()), n,
                         lp(w.data()), nullptr, 1, lp(vr ? vr->data() : dummy.data()),
                         vr ? n : 1);
  }
  if (info != 0)
    throw error("diagonalize: LAPACK geev failed (info=" + std::to_string(info) + ")");
}

inline std::string nearest_eigenvalue_cluster(const Vector& w) {
  double best = std::numeric_limits<double>::infinity();
  Eigen::Index bi = 0, bj = 1;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    for (Eigen::Index j = i + 1; j < w.size(); ++j) {
      double d = std::abs(w(i) - w(j));
      if (d < best) { best = d; bi = i; bj = j; }
    }
  std::ostringstream os;
  os << "nearest eigenvalues " << w(bi) << " and " << w(bj)
     << " (separation " << best << ")";
  return os.str();
}

}  // namespace detail

namespace detail {

// Hermitian inputs go through the symmetric solver: orthonormal vectors in
// every (near-)degenerate subspace, so left = right^dag holds exactly and
// Hermitian models score zero instead of eigenvector-gauge noise.
inline BiorthogonalSystem hermitian_system(const Operator& h) {
  ensure_single_threaded_blas();
  const lapack_int n = static_cast<lapack_int>(h.dim());
  Eigen::VectorXd w(n);
  Matrix right(n, n);
  lapack_int info = 0;
  if (h.mat().imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::MatrixXd a = h.mat().real();
    info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, w.data());
    right = a.cast<complex>();
  } else {
    Matrix a = h.mat();
    info = LAPACKE_zheevd(LAPACK_COL_MAJOR, 'V', 'U', n, lp(a.data()), n, w.data());
    right = std::move(a);
  }
  if (info != 0)
    throw error("diagonalize: LAPACK heevd failed (info=" + std::to_string(info) + ")");
  return BiorthogonalSystem{h.dim(), w.cast<complex>(), right, right.adjoint(),
                            1.0, false, h.basis_tag()};
}

}  // namespace detail

namespace detail {

// Canonical gauge inside numerically degenerate clusters: the solver's basis
// there is arbitrary and generally non-orthogonal, so orthonormalize it (for
// normal matrices this makes left = right^dag exactly). A cluster whose
// returned vectors collapsed onto fewer directions is rebuilt by shifted
// inverse iteration; if the true eigenspace is smaller than the multiplicity
// (Jordan structure), the residual check reports defectiveness.
inline void canonicalize_clusters(const Matrix& hmat, const Vector& ws,
                                  Matrix& right) {
  const Eigen::Index n = ws.size();
  double eig_scale = 0.0;
  for (Eigen::Index m = 0; m < n; ++m)
    eig_scale = std::max(eig_scale, std::abs(ws(m)));
  const double tol = 1e-12 * std::max(1.0, eig_scale);
  Eigen::Index lo = 0;
  while (lo < n) {
    Eigen::Index hi = lo;
    while (hi + 1 < n && std::abs(ws(hi + 1) - ws(hi)) <= tol) ++hi;
    if (hi > lo) {
      const Eigen::Index len = hi - lo + 1;
      Eigen::ColPivHouseholderQR<Matrix> qr(right.middleCols(lo, len));
      qr.setThreshold(1e-7);
      if (qr.rank() == len) {
        right.middleCols(lo, len) =
            qr.householderQ() * Matrix::Identity(n, len);
      } else {
        complex mean = 0.0;
        for (Eigen::Index m = lo; m <= hi; ++m) mean += ws(m);
        mean /= static_cast<double>(len);
        const complex shift =
            mean + complex(1.0, 1.0) * std::max(tol, 1e-13 * std::max(1.0, eig_scale));
        Eigen::PartialPivLU<Matrix> lu_shift(hmat - shift * Matrix::Identity(n, n));
        std::mt19937_64 rng(0x636c7573746572ULL ^ static_cast<std::uint64_t>(lo));
        std::normal_distribution<double> nd;
        Matrix block(n, len);
        for (Eigen::Index j = 0; j < len; ++j)
          for (Eigen::Index i = 0; i < n; ++i)
            block(i, j) = complex(nd(rng), nd(rng));
        for (int pass = 0; pass < 2; ++pass) {
          block = lu_shift.solve(block);
          block = Eigen::HouseholderQR<Matrix>(block).householderQ() *
                  Matrix::Identity(n, len);
        }
        const double resid =
            (hmat * block - block * ws.segment(lo, len).asDiagonal()).norm();
        if (resid > 1e-9 * std::max(1.0, eig_scale))
          throw error(
              "diagonalize: defective matrix (eigenspace of the degenerate "
              "cluster is smaller than its multiplicity); " +
              nearest_eigenvalue_cluster(ws));
        right.middleCols(lo, len) = block;
      }
    }
    lo = hi + 1;
  }
}

// Sector deflation for stiff spectra. When eigenvalue groups sit on widely
// separated baselines (interaction sectors at huge V), the dense solver's
// back-substitution loses the intra-group structure and returns linearly
// dependent vectors across distinct eigenvalues. Rebuild from one Schur
// decomposition: per group, reorder its eigenvalues to the front (certified
// orthonormal invariant subspace), then solve the small compressed block
// with the group baseline shifted out, where conditioning is healthy again.
// Returns false when no useful partition exists.
inline bool deflated_eigenvectors(const Matrix& hmat, Vector& ws, Matrix& right) {
  detail::ensure_single_threaded_blas();
  const Eigen::Index n = ws.size();
  const double re_spread = ws(n - 1).real() - ws(0).real();
  const double gap_cut = 0.02 * std::max(re_spread, 1.0);
  struct Group {
    double re_lo, re_hi;
    Eigen::Index len;
  };
  std::vector<Group> groups;
  {
    Eigen::Index lo = 0;
    for (Eigen::Index m = 1; m <= n; ++m) {
      if (m == n || ws(m).real() - ws(m - 1).real() > gap_cut) {
        double a = ws(lo).real(), b = ws(lo).real();
        for (Eigen::Index i = lo; i < m; ++i) {
          a = std::min(a, ws(i).real());
          b = std::max(b, ws(i).real());
        }
        groups.push_back({a, b, m - lo});
        lo = m;
      }
    }
  }
  if (groups.size() < 2) return false;

  const bool is_real = hmat.imag().cwiseAbs().maxCoeff() == 0.0;
  const lapack_int ln = static_cast<lapack_int>(n);

  // one Schur decomposition, reused for every group reordering
  Eigen::MatrixXd t_re, z_re;
  Matrix t_cx, z_cx;
  if (is_real) {
    t_re = hmat.real();
    z_re.resize(n, n);
    Eigen::VectorXd wr(n), wi(n);
    lapack_int sdim = 0;
    if (LAPACKE_dgees(LAPACK_COL_MAJOR, 'V', 'N', nullptr, ln, t_re.data(), ln,
                      &sdim, wr.data(), wi.data(), z_re.data(), ln) != 0)
      return false;
  } else {
    t_cx = hmat;
    z_cx.resize(n, n);
    Vector w(n);
    lapack_int sdim = 0;
    if (LAPACKE_zgees(LAPACK_COL_MAJOR, 'V', 'N', nullptr, ln, lp(t_cx.data()),
                      ln, &sdim, lp(w.data()), lp(z_cx.data()), ln) != 0)
      return false;
  }

  Vector new_ws(n);
  Matrix new_right(n, n);
  Eigen::Index filled = 0;
  for (const Group& g : groups) {
    const double window = 0.25 * gap_cut;
    lapack_int m_out = 0;
    Matrix q_basis;      // n x m orthonormal invariant basis
    Matrix block;        // m x m compressed matrix
    if (is_real) {
      Eigen::MatrixXd t = t_re, z = z_re;
      Eigen::VectorXd wr(n), wi(n);
      // diagonal of the real Schur form carries the eigenvalue real parts
      std::vector<lapack_logical> select(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i)
        select[static_cast<std::size_t>(i)] =
            (t(i, i) >= g.re_lo - window && t(i, i) <= g.re_hi + window) ? 1 : 0;
      double cond_s = 0.0, cond_sep = 0.0;
      lapack_int info = 0, lwork = ln * ln, liwork = ln * ln;
      std::vector<double> work(static_cast<std::size_t>(lwork));
      std::vector<lapack_int> iwork(static_cast<std::size_t>(liwork));
      dtrsen_("N", "V", select.data(), &ln, t.data(), &ln, z.data(), &ln,
              wr.data(), wi.data(), &m_out, &cond_s, &cond_sep, work.data(),
              &lwork, iwork.data(), &liwork, &info);
      if (info != 0) return false;
      if (m_out != static_cast<lapack_int>(g.len)) return false;
      q_basis = z.leftCols(m_out).cast<complex>();
      block = t.topLeftCorner(m_out, m_out).cast<complex>();
    } else {
      Matrix t = t_cx, z = z_cx;
      Vector w(n);
      std::vector<lapack_logical> select(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i)
        select[static_cast<std::size_t>(i)] =
            (t(i, i).real() >= g.re_lo - window && t(i, i).real() <= g.re_hi + window)
                ? 1
                : 0;
      double cond_s = 0.0, cond_sep = 0.0;
      lapack_int info = 0, lwork = ln * ln;
      std::vector<complex> work(static_cast<std::size_t>(lwork));
      ztrsen_("N", "V", select.data(), &ln, lp(t.data()), &ln, lp(z.data()), &ln,
              lp(w.data()), &m_out, &cond_s, &cond_sep, lp(work.data()), &lwork,
              &info);
      if (info != 0) return false;
      if (m_out != static_cast<lapack_int>(g.len)) return false;
      q_basis = z.leftCols(m_out);
      block = t.topLeftCorner(m_out, m_out);
    }

    // small solve with the baseline removed; its eigenvector conditioning is
    // set by intra-group structure, not the absolute eigenvalue location.
    // Degenerate multiplets inside the group are canonicalized here, where
    // the background has been shifted out.
    const complex sigma(0.5 * (g.re_lo + g.re_hi), 0.0);
    Matrix shifted = block - sigma * Matrix::Identity(g.len, g.len);
    Vector mu;
    Matrix y;
    general_eigen(shifted, mu, &y);
    auto gperm = eigen_order(mu);
    Vector mu_s(g.len);
    Matrix y_s(g.len, g.len);
    for (Eigen::Index j = 0; j < g.len; ++j) {
      mu_s(j) = mu(gperm[static_cast<std::size_t>(j)]);
      y_s.col(j) = y.col(gperm[static_cast<std::size_t>(j)]);
      y_s.col(j) /= y_s.col(j).norm();
    }
    try {
      canonicalize_clusters(shifted, mu_s, y_s);
    } catch (const error&) {
      return false;
    }
    for (Eigen::Index j = 0; j < g.len; ++j) {
      new_ws(filled + j) = mu_s(j) + sigma;
      Vector v = q_basis * y_s.col(j);
      new_right.col(filled + j) = v / v.norm();
    }
    filled += g.len;
  }
  if (filled != n) return false;

  auto perm = eigen_order(new_ws);
  for (Eigen::Index m = 0; m < n; ++m) {
    ws(m) = new_ws(perm[m]);
    right.col(m) = new_right.col(perm[m]);
  }
  return true;
}

}  // namespace detail

/// Full biorthogonal eigendecomposition. Eigenvalues are sorted by (Re, Im);
/// right vectors are unit-normalized; left rows come from inverting the
/// right-eigenvector matrix, then are rescaled so <L_m|R_m> = 1. A matrix
/// whose eigenvector matrix is singular at working precision throws, naming
/// the near-degenerate eigenvalue cluster.
inline BiorthogonalSystem diagonalize(const Operator& h,
                                      double ep_threshold = 1e8) {
  if (ep_threshold <= 0) throw error("diagonalize: ep_threshold must be > 0");
  const Eigen::Index n = h.dim();
  const double scale = h.mat().cwiseAbs().maxCoeff();
  if ((h.mat() - h.mat().adjoint()).cwiseAbs().maxCoeff() <=
      1e-14 * std::max(1.0, scale))
    return detail::hermitian_system(h);
  Vector w;
  Matrix vr;
  detail::general_eigen(h.mat(), w, &vr);

  auto perm = eigen_order(w);
  Vector ws(n);
  Matrix right(n, n);
  for (Eigen::Index m = 0; m < n; ++m) {
    ws(m) = w(perm[m]);
    right.col(m) = vr.col(perm[m]) / vr.col(perm[m]).norm();
  }
  detail::canonicalize_clusters(h.mat(), ws, right);

  Eigen::PartialPivLU<Matrix> lu(right);
  if (lu.rcond() < 1e-14) {
    // stiff-spectrum precision collapse: retry through sector deflation
    // (degenerate clusters are re-canonicalized inside the deflated solve)
    if (detail::deflated_eigenvectors(h.mat(), ws, right)) lu.compute(right);
    if (lu.rcond() < 1e-14)
      throw error("diagonalize: defective matrix (eigenvector matrix singular "
                  "at working precision); " +
                  detail::nearest_eigenvalue_cluster(ws));
  }
  Matrix left = lu.inverse();

  double condition = 0.0;
  for (Eigen::Index m = 0; m < n; ++m)
    condition = std::max(condition, left.row(m).norm());
  for (Eigen::Index m = 0; m < n; ++m) {
    complex d = left.row(m) * right.col(m);
    left.row(m) /= d;
  }

  return BiorthogonalSystem{n,         ws,
                            std::move(right), std::move(left),
                            condition, condition > ep_threshold,
                            h.basis_tag()};
}

/// Eigenvalues only, canonically sorted. Much cheaper than diagonalize when
/// vectors are not needed (level-spacing scans).
inline Vector eigenvalues_only(const Operator& h) {
  Vector w;
  detail::general_eigen(h.mat(), w, nullptr);
  auto perm = eigen_order(w);
  Vector ws(w.size());
  for (Eigen::Index m = 0; m < w.size(); ++m) ws(m) = w(perm[m]);
  return ws;
}

/// Sum_m lambda_m |R_m><L_m|; inverse of diagonalize up to solver error.
inline Operator reconstruct(const BiorthogonalSystem& sys) {
  return Operator(sys.right * sys.eigenvalues.asDiagonal() * sys.left,
                  sys.basis_tag);
}

/// U(t) = sum_m e^{-i lambda_m t} |R_m><L_m|. Guards against exponent
/// overflow: max_m |Im lambda_m| * |t| must stay below 700.
inline Operator propagator(const BiorthogonalSystem& sys, double t) {
  if (!std::isfinite(t)) throw error("propagator: time must be finite");
  double max_im = 0.0;
  for (Eigen::Index m = 0; m < sys.dim; ++m)
    max_im = std::max(max_im, std::abs(sys.eigenvalues(m).imag()));
  if (max_im * std::abs(t) > 700.0)
    throw error("propagator overflow; rescale t or shift spectrum");
  Vector phases(sys.dim);
  for (Eigen::Index m = 0; m < sys.dim; ++m)
    phases(m) = std::exp(complex(0, -1) * sys.eigenvalues(m) * t);
  return Operator(sys.right * phases.asDiagonal() * sys.left, sys.basis_tag);
}

}  // namespace nhqm
