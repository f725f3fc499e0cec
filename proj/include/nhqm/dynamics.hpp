#pragma once

#include <iostream>
#include <utility>
#include <vector>

#include "nhqm/measures.hpp"
#include "nhqm/observables.hpp"
#include "nhqm/spectral.hpp"

namespace nhqm {

enum class Side { right, left };

/// Time grid plus initial state for one ensemble evolution. side = right
/// evolves under H, side = left under H^dag.
struct EvolutionSpec {
  std::vector<double> times;
  DensityMatrix initial;
  Side side = Side::right;
};

namespace detail {

inline void check_overflow(const BiorthogonalSystem& sys, double t) {
  double max_im = 0.0;
  for (Eigen::Index m = 0; m < sys.dim; ++m)
    max_im = std::max(max_im, std::abs(sys.eigenvalues(m).imag()));
  if (max_im * std::abs(t) > 700.0)
    throw error("propagator overflow; rescale t or shift spectrum");
}

// e^{-iHt} (right) or e^{-iH^dag t} (left) from the same decomposition:
// H^dag = sum_m conj(lambda_m) |L_m><R_m|.
inline Matrix propagator_matrix(const BiorthogonalSystem& sys, double t, Side side) {
  check_overflow(sys, t);
  Vector phases(sys.dim);
  for (Eigen::Index m = 0; m < sys.dim; ++m) {
    const complex lam = side == Side::right ? sys.eigenvalues(m)
                                            : std::conj(sys.eigenvalues(m));
    phases(m) = std::exp(complex(0, -1) * lam * t);
  }
  if (side == Side::right) return sys.right * phases.asDiagonal() * sys.left;
  return sys.left_kets() * phases.asDiagonal() * sys.right.adjoint();
}

}  // namespace detail

/// rho(t) = U(t) rho_in U(t)^dag / Tr[...] at each requested time. Output
/// states are rescaled to unit trace and symmetrized; a pre-normalization
/// trace below 1e-300 aborts (state fully decayed).
inline std::vector<DensityMatrix> evolve_ensemble(const BiorthogonalSystem& sys,
                                                  const EvolutionSpec& spec) {
  if (spec.times.empty() || spec.times.front() < 0.0 ||
      !std::is_sorted(spec.times.begin(), spec.times.end()))
    throw error("evolve_ensemble: times must be ascending and start at >= 0");
  if (!spec.initial.normalized)
    throw error("evolve_ensemble: initial state must be normalized");
  if (spec.initial.basis_tag() != sys.basis_tag)
    throw error("evolve_ensemble: basis mismatch");

  std::vector<DensityMatrix> out;
  out.reserve(spec.times.size());
  for (double t : spec.times) {
    const Matrix u = detail::propagator_matrix(sys, t, spec.side);
    Matrix rho = u * spec.initial.mat() * u.adjoint();
    const double tr = rho.trace().real();
    if (tr < 1e-300) throw error("evolve_ensemble: state fully decayed at t=" +
                                 std::to_string(t));
    rho /= tr;
    rho = 0.5 * (rho + rho.adjoint().eval());
    out.push_back(DensityMatrix{Operator(std::move(rho), sys.basis_tag), true});
  }
  return out;
}

/// SC^F(t) = |F[rho_RR(t)] - F[rho_LL(t)]| over the time grid.
inline std::vector<std::pair<double, double>> score_timeseries(
    const StateFunctional& f, const BiorthogonalSystem& sys,
    const std::vector<double>& times, const DensityMatrix& initial) {
  const auto rr = evolve_ensemble(sys, {times, initial, Side::right});
  const auto ll = evolve_ensemble(sys, {times, initial, Side::left});
  std::vector<std::pair<double, double>> out;
  out.reserve(times.size());
  for (std::size_t i = 0; i < times.size(); ++i)
    out.emplace_back(times[i],
                     std::abs(f.on_density(rr[i]) - f.on_density(ll[i])));
  return out;
}

// ---------------------------------------------------------------------------
// Kraus dilation / postselection oracle
// ---------------------------------------------------------------------------

struct DilationSpec {
  double dt;
  int n_steps;
  int ancilla_dim = 2;
};

/// Joint-space Kraus pair K0 = (I - iH'dt) x I_A, K1 = sqrt(dt Gamma') x
/// sigma_x with Gamma' = i(H' - H'^dag), where H' = H - i c I is the shifted
/// Hamiltonian making Gamma' positive semidefinite (decaying convention).
/// `shift` records c; c = 0 when H already decays.
struct DilationOps {
  Matrix k0;
  Matrix k1;
  double shift;
  std::string joint_tag;
};

namespace detail {

inline Matrix kron_with_ancilla(const Matrix& a, const Eigen::Matrix2cd& b) {
  Matrix out(a.rows() * 2, a.cols() * 2);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

// Hermitian PSD square root; eigenvalues in [-1e-12, 0) clip to zero.
inline Matrix psd_sqrt(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.adjoint()));
  Vector d(es.eigenvalues().size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    double p = es.eigenvalues()(i);
    if (p < -1e-12)
      throw error("dilation: operand of matrix square root not PSD "
                  "(eigenvalue " + std::to_string(p) + ")");
    d(i) = std::sqrt(std::max(0.0, p));
  }
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().adjoint();
}

}  // namespace detail

inline DilationOps make_dilation_ops(const Operator& h, double dt) {
  if (!(dt > 0.0)) throw error("dilation: dt must be positive");
  const Eigen::Index n = h.dim();
  Matrix gamma = complex(0, 1) * (h.mat() - h.mat().adjoint());
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gamma + gamma.adjoint()),
                                           Eigen::EigenvaluesOnly);
  const double lambda_min = es.eigenvalues().minCoeff();
  double shift = 0.0;
  if (lambda_min < 0.0) {
    // H -> H - i c I raises Gamma by 2c; the smallest c restoring PSD.
    shift = -lambda_min / 2.0;
    gamma += 2.0 * shift * Matrix::Identity(n, n);
  }
  const Matrix h_shifted = h.mat() - complex(0, shift) * Matrix::Identity(n, n);

  Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();
  Eigen::Matrix2cd sx;
  sx << 0, 1, 1, 0;
  Matrix k0 = detail::kron_with_ancilla(
      Matrix::Identity(n, n) - complex(0, dt) * h_shifted, id2);
  Matrix k1 = detail::kron_with_ancilla(detail::psd_sqrt(dt * gamma), sx);
  return DilationOps{std::move(k0), std::move(k1), shift,
                     h.basis_tag() + "+anc2"};
}

/// System state tensored with the ancilla flag in |0><0|.
inline DensityMatrix attach_ancilla(const DensityMatrix& rho_sys) {
  Eigen::Matrix2cd p0 = Eigen::Matrix2cd::Zero();
  p0(0, 0) = 1.0;
  return DensityMatrix{
      Operator(detail::kron_with_ancilla(rho_sys.mat(), p0),
               rho_sys.basis_tag() + "+anc2"),
      rho_sys.normalized};
}

/// One Kraus step K0 rho K0^dag + K1 rho K1^dag on the joint space.
/// Completeness holds to O(dt^2): ||K0^dag K0 + K1^dag K1 - I|| <= ||H'||^2 dt^2.
inline DensityMatrix dilation_step(const Operator& h, const DensityMatrix& rho_joint,
                                   double dt) {
  const DilationOps ops = make_dilation_ops(h, dt);
  if (rho_joint.basis_tag() != ops.joint_tag)
    throw error("dilation_step: expected joint state in basis '" + ops.joint_tag + "'");
  Matrix next = ops.k0 * rho_joint.mat() * ops.k0.adjoint() +
                ops.k1 * rho_joint.mat() * ops.k1.adjoint();
  return DensityMatrix{Operator(std::move(next), ops.joint_tag), false};
}

/// Ancilla-block extraction: <0| rho_joint |0> on the flag qubit,
/// unnormalized.
inline Matrix project_ancilla0(const Matrix& rho_joint) {
  const Eigen::Index n = rho_joint.rows() / 2;
  Matrix out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = rho_joint(2 * i, 2 * j);
  return out;
}

struct TrajectoryResult {
  DensityMatrix state;   // normalized system state after n_steps
  double shift;          // spectral shift applied for the decaying convention
  double final_trace;    // trace before normalization (postselection weight)
};

/// No-jump trajectory: repeat (Kraus step, project flag onto |0><0|)
/// n_steps times, renormalizing once at the end. Converges to the exact
/// propagated ensemble at first order in dt.
inline TrajectoryResult postselected_trajectory(const Operator& h,
                                                const DensityMatrix& rho_in,
                                                const DilationSpec& spec) {
  if (spec.ancilla_dim != 2) throw error("postselected_trajectory: ancilla must be a qubit");
  if (spec.n_steps < 0) throw error("postselected_trajectory: n_steps must be >= 0");
  if (rho_in.basis_tag() != h.basis_tag())
    throw error("postselected_trajectory: basis mismatch");
  if (!rho_in.normalized)
    throw error("postselected_trajectory: initial state must be normalized");
  if (spec.n_steps == 0) return {rho_in, 0.0, 1.0};

  const DilationOps ops = make_dilation_ops(h, spec.dt);
  // dt * max|Im lambda| <= dt * ||Gamma||/2; warn when the step is too coarse
  {
    const Matrix gamma = complex(0, 1) * (h.mat() - h.mat().adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (gamma + gamma.adjoint()),
                                             Eigen::EigenvaluesOnly);
    const double bound = 0.5 * es.eigenvalues().cwiseAbs().maxCoeff() + ops.shift;
    if (spec.dt * bound > 0.1)
      std::cerr << "postselected_trajectory: warning, dt * max|Im lambda| "
                   "estimate " << spec.dt * bound << " exceeds 0.1\n";
  }

  Eigen::Matrix2cd p0 = Eigen::Matrix2cd::Zero();
  p0(0, 0) = 1.0;
  Matrix rho = rho_in.mat();
  for (int step = 0; step < spec.n_steps; ++step) {
    Matrix joint = detail::kron_with_ancilla(rho, p0);
    joint = ops.k0 * joint * ops.k0.adjoint() + ops.k1 * joint * ops.k1.adjoint();
    rho = project_ancilla0(joint);
    const double tr = rho.trace().real();
    if (tr < 1e-300)
      throw error("postselected_trajectory: state fully decayed at step " +
                  std::to_string(step));
  }
  const double tr = rho.trace().real();
  rho /= tr;
  rho = 0.5 * (rho + rho.adjoint().eval());
  return {DensityMatrix{Operator(std::move(rho), h.basis_tag()), true},
          ops.shift, tr};
}

}  // namespace nhqm
