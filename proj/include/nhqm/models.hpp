#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <vector>

#include "nhqm/operator.hpp"

namespace nhqm {

inline const std::string kQubit2Tag = "qubit2";

// ---------------------------------------------------------------------------
// Imperfect-Bell model
// ---------------------------------------------------------------------------

struct BellModelParams {
  double alpha;                    // imperfection parameter, 0 < alpha <= 1
  std::array<double, 4> lambdas;   // eigenvalues
};

struct BellVectors {
  Matrix right;  // column m = |R_m>, unit norm
  Matrix left;   // column m = |L_m> (ket); <L_m|R_n> = delta_mn
};

/// Right and left vectors of the imperfect-Bell family in the computational
/// basis |00>,|01>,|10>,|11>. At alpha = 1 the right set is the four Bell
/// states and left = right.
inline BellVectors bell_vectors(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw error("bell_vectors: alpha must lie in (0, 1]");
  Matrix r = Matrix::Zero(4, 4), l = Matrix::Zero(4, 4);
  const double d1 = std::sqrt(1.0 + 1.0 / (alpha * alpha));
  r(0, 0) = (1.0 / alpha) / d1;  r(3, 0) = 1.0 / d1;
  r(0, 1) = (1.0 / alpha) / d1;  r(3, 1) = -1.0 / d1;
  const double d2 = std::sqrt((1.0 - alpha) * (1.0 - alpha) + 2.0);
  r(0, 2) = (1.0 - alpha) / d2;  r(1, 2) = 1.0 / d2;  r(2, 2) = 1.0 / d2;
  r(0, 3) = (1.0 - alpha) / d2;  r(1, 3) = 1.0 / d2;  r(2, 3) = -1.0 / d2;
  const double c1 = std::sqrt(1.0 + alpha * alpha) / 2.0;
  l(0, 0) = c1;  l(1, 0) = (alpha - 1.0) * c1;  l(3, 0) = c1 / alpha;
  l(0, 1) = c1;  l(1, 1) = (alpha - 1.0) * c1;  l(3, 1) = -c1 / alpha;
  const double c2 = d2 / 2.0;
  l(1, 2) = c2;  l(2, 2) = c2;
  l(1, 3) = c2;  l(2, 3) = -c2;
  return {std::move(r), std::move(l)};
}

/// H = sum_m lambda_m |R_m><L_m| in the 2-qubit computational basis.
/// Hermitian iff alpha = 1.
inline Operator build_bell_hamiltonian(const BellModelParams& p) {
  for (double lam : p.lambdas)
    if (!std::isfinite(lam)) throw error("build_bell_hamiltonian: non-finite lambda");
  BellVectors v = bell_vectors(p.alpha);
  Matrix h = Matrix::Zero(4, 4);
  for (int m = 0; m < 4; ++m)
    h += p.lambdas[static_cast<std::size_t>(m)] * v.right.col(m) * v.left.col(m).adjoint();
  return Operator(std::move(h), kQubit2Tag);
}

/// Werner state delta |Psi-><Psi-| + (1-delta) I/4 as a trace-one matrix.
inline Operator werner_state(double delta) {
  if (!(delta >= 0.0 && delta <= 1.0))
    throw error("werner_state: delta must lie in [0, 1]");
  Vector psim = Vector::Zero(4);
  psim(1) = 1.0 / std::sqrt(2.0);
  psim(2) = -1.0 / std::sqrt(2.0);
  Matrix w = delta * (psim * psim.adjoint()) + (1.0 - delta) / 4.0 * Matrix::Identity(4, 4);
  return Operator(std::move(w), kQubit2Tag);
}

// ---------------------------------------------------------------------------
// Fixed-filling fermionic sector
// ---------------------------------------------------------------------------

/// Ordered occupation basis for N spinless-fermion modes at fixed particle
/// number k. Bit i of a word is the occupation of site i+1; words ascend.
struct SectorBasis {
  int n_sites;
  int n_particles;
  std::vector<std::uint32_t> states;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(states.size()); }

  Eigen::Index index_of(std::uint32_t word) const {
    auto it = std::lower_bound(states.begin(), states.end(), word);
    if (it == states.end() || *it != word)
      throw error("SectorBasis: word outside sector");
    return static_cast<Eigen::Index>(it - states.begin());
  }

  std::string tag() const {
    return "fock:N=" + std::to_string(n_sites) + ",k=" + std::to_string(n_particles);
  }
};

inline SectorBasis build_sector_basis(int n_sites, int n_particles) {
  if (n_sites < 1 || n_sites > 24 || n_particles < 0 || n_particles > n_sites)
    throw error("build_sector_basis: need 0 <= k <= N <= 24");
  SectorBasis b{n_sites, n_particles, {}};
  const std::uint32_t top = std::uint32_t{1} << n_sites;
  for (std::uint32_t w = 0; w < top; ++w)
    if (std::popcount(w) == n_particles) b.states.push_back(w);
  return b;
}

// ---------------------------------------------------------------------------
// Interacting Hatano-Nelson model
// ---------------------------------------------------------------------------

struct HNParams {
  int n_sites;                   // even
  double J = 1.0;                // hopping scale
  double chi = 0.0;              // hopping asymmetry
  double V = 0.0;                // nearest-neighbor interaction
  bool wrap_interaction = true;  // include the n_N n_1 boundary pair
};

/// +1 (periodic) for odd N/2, -1 (anti-periodic) for even N/2.
inline double boundary_phase(int n_sites) {
  return ((n_sites / 2) % 2 == 0) ? -1.0 : 1.0;
}

namespace detail {

// Parity of occupations strictly between sites i < j (1-based) in site order.
inline double jw_string(std::uint32_t word, int site_lo, int site_hi) {
  int count = 0;
  for (int s = site_lo + 1; s < site_hi; ++s) count += (word >> (s - 1)) & 1u;
  return (count % 2) ? -1.0 : 1.0;
}

// Adds amp * c^dag_{to} c_{from} (1-based sites) for every basis word.
inline void add_hop(Eigen::MatrixXd& h, const SectorBasis& basis, int to,
                    int from, double amp) {
  const std::uint32_t bt = std::uint32_t{1} << (to - 1);
  const std::uint32_t bf = std::uint32_t{1} << (from - 1);
  for (Eigen::Index s = 0; s < basis.dim(); ++s) {
    const std::uint32_t w = basis.states[static_cast<std::size_t>(s)];
    if ((w & bf) && !(w & bt)) {
      const std::uint32_t w2 = (w & ~bf) | bt;
      const double sgn = jw_string(w, std::min(to, from), std::max(to, from));
      h(basis.index_of(w2), s) += amp * sgn;
    }
  }
}

}  // namespace detail

/// Ring Hamiltonian sum_i [-J(e^chi c^dag_i c_{i+1} + e^-chi c^dag_{i+1} c_i)
/// + V n_i n_{i+1}] in the sector basis, site N+1 = 1, with the boundary bond
/// multiplied by boundary_phase(N). Hermitian at chi = 0.
inline Operator build_hatano_nelson(const HNParams& p, const SectorBasis& basis) {
  if (p.n_sites % 2 != 0) throw error("build_hatano_nelson: N must be even");
  if (basis.n_sites != p.n_sites || basis.n_particles != p.n_sites / 2)
    throw error("build_hatano_nelson: basis must be the half-filling sector of N sites");
  const int n = p.n_sites;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(basis.dim(), basis.dim());

  for (int i = 1; i <= n; ++i) {
    const int j = (i % n) + 1;  // site i+1 on the ring
    const double phase = (i == n) ? boundary_phase(n) : 1.0;
    detail::add_hop(h, basis, i, j, -p.J * std::exp(p.chi) * phase);
    detail::add_hop(h, basis, j, i, -p.J * std::exp(-p.chi) * phase);
  }

  const int last_pair = p.wrap_interaction ? n : n - 1;
  for (Eigen::Index s = 0; s < basis.dim(); ++s) {
    const std::uint32_t w = basis.states[static_cast<std::size_t>(s)];
    int pairs = 0;
    for (int i = 1; i <= last_pair; ++i) {
      const int j = (i % n) + 1;
      if (((w >> (i - 1)) & 1u) && ((w >> (j - 1)) & 1u)) ++pairs;
    }
    h(s, s) += p.V * pairs;
  }
  return Operator(h.cast<complex>(), basis.tag());
}

// ---------------------------------------------------------------------------
// Dissipative realization
// ---------------------------------------------------------------------------

/// Rectangular matrix between two fixed-number sectors (one-body loss maps
/// k -> k-1, so a square Operator cannot represent it).
struct SectorMap {
  Eigen::MatrixXcd mat;
  std::string from_tag;
  std::string to_tag;
};

struct JumpOperators {
  Operator herm_part;            // -J cosh(chi) hopping + interaction
  std::vector<SectorMap> jumps;  // K_i = c_i -+ i c_{i+1}, one per bond
  double gamma;                  // uniform dissipation strength 2 J sinh(chi)
};

namespace detail {

// c_site as a map from sector (N,k) to (N,k-1), with the JW sign over
// occupations below the site.
inline Eigen::MatrixXcd annihilator(const SectorBasis& from, const SectorBasis& to,
                                    int site) {
  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(to.dim(), from.dim());
  const std::uint32_t bit = std::uint32_t{1} << (site - 1);
  for (Eigen::Index s = 0; s < from.dim(); ++s) {
    const std::uint32_t w = from.states[static_cast<std::size_t>(s)];
    if (!(w & bit)) continue;
    int below = std::popcount(w & (bit - 1));
    m(to.index_of(w & ~bit), s) = (below % 2) ? -1.0 : 1.0;
  }
  return m;
}

}  // namespace detail

/// Hermitian part, jump operators K_i = c_i + sign * i * c_{i+1} (the wrapped
/// c_1 component carries the boundary phase, matching the hopping), and the
/// uniform strength gamma = 2 J sinh(chi).
inline JumpOperators build_jump_operators(const HNParams& p, const SectorBasis& basis,
                                          int sign) {
  if (sign != 1 && sign != -1) throw error("build_jump_operators: sign must be +1 or -1");
  if (p.n_sites % 2 != 0) throw error("build_jump_operators: N must be even");
  if (basis.n_sites != p.n_sites || basis.n_particles != p.n_sites / 2)
    throw error("build_jump_operators: basis must be the half-filling sector");
  const int n = p.n_sites;

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(basis.dim(), basis.dim());
  for (int i = 1; i <= n; ++i) {
    const int j = (i % n) + 1;
    const double phase = (i == n) ? boundary_phase(n) : 1.0;
    detail::add_hop(h, basis, i, j, -p.J * std::cosh(p.chi) * phase);
    detail::add_hop(h, basis, j, i, -p.J * std::cosh(p.chi) * phase);
  }
  const int last_pair = p.wrap_interaction ? n : n - 1;
  for (Eigen::Index s = 0; s < basis.dim(); ++s) {
    const std::uint32_t w = basis.states[static_cast<std::size_t>(s)];
    int pairs = 0;
    for (int i = 1; i <= last_pair; ++i) {
      const int j = (i % n) + 1;
      if (((w >> (i - 1)) & 1u) && ((w >> (j - 1)) & 1u)) ++pairs;
    }
    h(s, s) += p.V * pairs;
  }

  SectorBasis lower = build_sector_basis(n, basis.n_particles - 1);
  std::vector<SectorMap> jumps;
  jumps.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    const int j = (i % n) + 1;
    const double phase = (i == n) ? boundary_phase(n) : 1.0;
    Eigen::MatrixXcd k = detail::annihilator(basis, lower, i) +
                         complex(0, sign) * phase * detail::annihilator(basis, lower, j);
    jumps.push_back({std::move(k), basis.tag(), lower.tag()});
  }

  return JumpOperators{Operator(h.cast<complex>(), basis.tag()), std::move(jumps),
                       2.0 * p.J * std::sinh(p.chi)};
}

/// herm_part - (i/2) gamma sum_i K_i^dag K_i, the no-jump generator.
inline Operator effective_hamiltonian(const JumpOperators& ops) {
  Matrix acc = Matrix::Zero(ops.herm_part.dim(), ops.herm_part.dim());
  for (const auto& k : ops.jumps) acc += k.mat.adjoint() * k.mat;
  return Operator(ops.herm_part.mat() - complex(0, 0.5) * ops.gamma * acc,
                  ops.herm_part.basis_tag());
}

}  // namespace nhqm
