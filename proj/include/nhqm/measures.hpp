#pragma once

#include <variant>
#include <vector>

#include "nhqm/observables.hpp"
#include "nhqm/spectral.hpp"

namespace nhqm {

// ---------------------------------------------------------------------------
// Hamiltonian non-Hermiticity
// ---------------------------------------------------------------------------

enum class NormVariant {
  operator_norm,          // ||H - H^dag|| / ||H||, in [0, 2]
  frobenius,              // same ratio in the Frobenius norm
  unnormalized_operator,  // ||H - H^dag||
};

inline double hamiltonian_nonhermiticity(const Operator& h, NormVariant variant) {
  const Operator x = h - adjoint(h);
  switch (variant) {
    case NormVariant::operator_norm: {
      const double hn = operator_norm(h);
      if (hn == 0.0) throw error("hamiltonian_nonhermiticity: zero-norm Hamiltonian");
      return operator_norm(x) / hn;
    }
    case NormVariant::frobenius: {
      const double hn = frobenius_norm(h);
      if (hn == 0.0) throw error("hamiltonian_nonhermiticity: zero-norm Hamiltonian");
      return frobenius_norm(x) / hn;
    }
    case NormVariant::unnormalized_operator:
      return operator_norm(x);
  }
  throw error("hamiltonian_nonhermiticity: unknown variant");
}

/// ||H - H^dag||_F evaluated purely from eigenvalues and the Gram matrices
/// of the right and left vectors: sqrt( sum_{mn} 2 Re[eps_m^* eps_n
/// <R_m|R_n> <L_m|L_n>^*] - sum_m 2 Re[eps_m^2] ). Agrees with the direct
/// Frobenius distance; a radicand below -1e-8 (scaled) means the
/// biorthogonal pairing is broken.
inline double frobenius_distance_overlap(const BiorthogonalSystem& sys) {
  if (sys.ep_flag)
    throw error("frobenius_distance_overlap: system is ep-flagged");
  const Matrix gram_r = sys.right.adjoint() * sys.right;   // (m,n) = <R_m|R_n>
  const Matrix lk = sys.left_kets();
  const Matrix gram_l = lk.adjoint() * lk;                 // (m,n) = <L_m|L_n>
  const Vector& eps = sys.eigenvalues;
  complex cross = 0.0, diag = 0.0;
  for (Eigen::Index m = 0; m < sys.dim; ++m) {
    for (Eigen::Index n = 0; n < sys.dim; ++n)
      cross += std::conj(eps(m)) * eps(n) * gram_r(m, n) * std::conj(gram_l(m, n));
    diag += eps(m) * eps(m);
  }
  const double radicand = 2.0 * cross.real() - 2.0 * diag.real();
  const double scale = std::max(1.0, eps.squaredNorm());
  if (radicand < -1e-8 * scale)
    throw error("frobenius_distance_overlap: negative radicand (broken biorthogonality)");
  return std::sqrt(std::max(0.0, radicand));
}

// ---------------------------------------------------------------------------
// Non-Hermiticity scores
// ---------------------------------------------------------------------------

/// Per-eigenstate scores for one functional, in canonical spectral order.
struct ScoreVector {
  std::string functional_name;
  std::vector<double> values;
  std::vector<bool> ep_flags;
};

/// SC^F = |F[rho_R] - F[rho_L]|.
inline double score(const StateFunctional& f, const DensityMatrix& rho_r,
                    const DensityMatrix& rho_l) {
  require_same_basis(rho_r.op, rho_l.op, "score");
  if (!rho_r.normalized || !rho_l.normalized)
    throw error("score: states must be normalized");
  return std::abs(f.on_density(rho_r) - f.on_density(rho_l));
}

/// SC^F[k] = |F[|R_k><R_k|/<R_k|R_k>] - F[|L_k><L_k|/<L_k|L_k>]| for every k.
inline ScoreVector score_spectrum(const StateFunctional& f,
                                  const BiorthogonalSystem& sys) {
  ScoreVector out{f.name, {}, {}};
  out.values.reserve(static_cast<std::size_t>(sys.dim));
  out.ep_flags.assign(static_cast<std::size_t>(sys.dim), sys.ep_flag);
  for (Eigen::Index k = 0; k < sys.dim; ++k) {
    const Vector r = sys.right.col(k);
    const Vector l = sys.left.row(k).adjoint();
    double fr, fl;
    if (f.on_pure) {
      fr = f.on_pure(r / r.norm(), sys.basis_tag);
      fl = f.on_pure(l / l.norm(), sys.basis_tag);
    } else {
      fr = f.on_density(DensityMatrix::pure(r, sys.basis_tag));
      fl = f.on_density(DensityMatrix::pure(l, sys.basis_tag));
    }
    out.values.push_back(std::abs(fr - fl));
  }
  return out;
}

/// Diagnostic only: Tr(O |R_k><L_k|) in the biorthogonal cross basis; not a
/// physical expectation and never aggregated.
inline complex cross_expectation(const Operator& o, const BiorthogonalSystem& sys,
                                 Eigen::Index k) {
  if (o.basis_tag() != sys.basis_tag) throw error("cross_expectation: basis mismatch");
  const Vector r = sys.right.col(k);
  return sys.left.row(k) * (o.mat() * r);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

enum class EpPolicy { include, exclude, error };

struct PNorm { double p; };
struct Infinity {};
struct ThresholdCount { double e_th; bool scaled = false; };
using AggregateMode = std::variant<PNorm, Infinity, ThresholdCount>;

namespace detail {

inline std::vector<double> aggregable_values(const ScoreVector& v, EpPolicy policy) {
  if (v.values.empty()) throw error("aggregate: empty score vector");
  std::vector<double> out;
  out.reserve(v.values.size());
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    const bool flagged = i < v.ep_flags.size() && v.ep_flags[i];
    if (flagged && policy == EpPolicy::error)
      throw error("aggregate: score at index " + std::to_string(i) + " is ep-flagged");
    if (flagged && policy == EpPolicy::exclude) continue;
    out.push_back(v.values[i]);
  }
  if (out.empty()) throw error("aggregate: all scores excluded by ep policy");
  return out;
}

}  // namespace detail

/// p-norm, infinity norm, or threshold count of a score vector. The count
/// variant optionally divides by the full Hilbert dimension.
inline double aggregate(const ScoreVector& v, const AggregateMode& mode,
                        EpPolicy policy = EpPolicy::include) {
  const std::vector<double> vals = detail::aggregable_values(v, policy);
  if (std::holds_alternative<PNorm>(mode)) {
    const double p = std::get<PNorm>(mode).p;
    if (!(p > 0)) throw error("aggregate: p must be positive");
    double acc = 0.0;
    for (double x : vals) acc += std::pow(x, p);
    return std::pow(acc, 1.0 / p);
  }
  if (std::holds_alternative<Infinity>(mode))
    return *std::max_element(vals.begin(), vals.end());
  const auto& tc = std::get<ThresholdCount>(mode);
  if (tc.e_th < 0) throw error("aggregate: threshold must be nonnegative");
  double count = 0.0;
  for (double x : vals)
    if (x >= tc.e_th) count += 1.0;
  return tc.scaled ? count / static_cast<double>(v.values.size()) : count;
}

}  // namespace nhqm
