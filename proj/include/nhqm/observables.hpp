#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nhqm/models.hpp"
#include "nhqm/operator.hpp"

namespace nhqm {

/// Quantum state. `normalized` asserts Tr = 1 within 1e-10. States built by
/// the factories are Hermitian; the constructor-level check keeps evolution
/// rounding from leaking into the functionals.
struct DensityMatrix {
  Operator op;
  bool normalized;

  const Matrix& mat() const { return op.mat(); }
  Eigen::Index dim() const { return op.dim(); }
  const std::string& basis_tag() const { return op.basis_tag(); }

  static DensityMatrix pure(const Vector& v, const std::string& tag) {
    const double n2 = v.squaredNorm();
    if (n2 <= 0.0) throw error("DensityMatrix::pure: zero vector");
    return DensityMatrix{Operator(v * v.adjoint() / n2, tag), true};
  }

  static DensityMatrix from_matrix(Matrix rho, const std::string& tag,
                                   bool normalize = true) {
    const double scale = std::max(1.0, rho.norm());
    if ((rho - rho.adjoint()).norm() > 1e-8 * scale)
      throw error("DensityMatrix: matrix is not Hermitian");
    rho = 0.5 * (rho + rho.adjoint().eval());
    if (normalize) {
      const double tr = rho.trace().real();
      if (tr <= 0.0) throw error("DensityMatrix: trace must be positive");
      rho /= tr;
    }
    const bool unit = std::abs(rho.trace().real() - 1.0) < 1e-10;
    return DensityMatrix{Operator(std::move(rho), tag), unit};
  }

  static DensityMatrix maximally_mixed(Eigen::Index dim, const std::string& tag) {
    return DensityMatrix{
        Operator(Matrix::Identity(dim, dim) / static_cast<double>(dim), tag), true};
  }
};

/// Site split for a partial trace. Construct with keep(); sites are 1-based.
struct Bipartition {
  std::vector<int> kept_sites;
  std::vector<int> traced_sites;

  static Bipartition keep(std::vector<int> kept, int n_total) {
    std::sort(kept.begin(), kept.end());
    Bipartition b{std::move(kept), {}};
    for (int s = 1; s <= n_total; ++s)
      if (!std::binary_search(b.kept_sites.begin(), b.kept_sites.end(), s))
        b.traced_sites.push_back(s);
    for (int s : b.kept_sites)
      if (s < 1 || s > n_total) throw error("Bipartition: site out of range");
    if (b.kept_sites.empty()) throw error("Bipartition: nothing kept");
    return b;
  }

  int n_total() const {
    return static_cast<int>(kept_sites.size() + traced_sites.size());
  }
};

// ---------------------------------------------------------------------------
// Expectation values
// ---------------------------------------------------------------------------

/// Re Tr(O rho). For Hermitian O the imaginary residual of the trace must
/// stay below 1e-9 (asserted).
inline double expectation(const Operator& o, const DensityMatrix& rho) {
  require_same_basis(o, rho.op, "expectation");
  if (!rho.normalized) throw error("expectation: state must be normalized");
  const complex tr = (o.mat().transpose().cwiseProduct(rho.mat())).sum();
  const bool hermitian =
      (o.mat() - o.mat().adjoint()).norm() <= 1e-12 * std::max(1.0, o.mat().norm());
  if (hermitian && std::abs(tr.imag()) >= 1e-9)
    throw error("expectation: imaginary residual " + std::to_string(tr.imag()) +
                " for Hermitian observable");
  return tr.real();
}

/// sigma_z on one qubit (1-based, qubit 1 = leftmost tensor factor).
inline Operator pauli_z_qubit(int qubit, int n_qubits) {
  if (qubit < 1 || qubit > n_qubits) throw error("pauli_z_qubit: qubit out of range");
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  Matrix m = Matrix::Zero(dim, dim);
  const Eigen::Index bit = Eigen::Index{1} << (n_qubits - qubit);
  for (Eigen::Index i = 0; i < dim; ++i) m(i, i) = (i & bit) ? -1.0 : 1.0;
  return Operator(std::move(m), "qubit" + std::to_string(n_qubits));
}

/// Number operator n_site as a sector-basis diagonal.
inline Operator site_occupation_op(const SectorBasis& basis, int site) {
  if (site < 1 || site > basis.n_sites) throw error("site_occupation_op: site out of range");
  Matrix m = Matrix::Zero(basis.dim(), basis.dim());
  for (Eigen::Index s = 0; s < basis.dim(); ++s)
    m(s, s) = (basis.states[static_cast<std::size_t>(s)] >> (site - 1)) & 1u;
  return Operator(std::move(m), basis.tag());
}

/// Staggered occupation I = sum_i (-1)^i n_i (site index 1-based, so site 1
/// contributes -n_1).
inline Operator staggered_magnetization(const SectorBasis& basis) {
  Matrix m = Matrix::Zero(basis.dim(), basis.dim());
  for (Eigen::Index s = 0; s < basis.dim(); ++s) {
    const std::uint32_t w = basis.states[static_cast<std::size_t>(s)];
    double v = 0.0;
    for (int i = 1; i <= basis.n_sites; ++i)
      if ((w >> (i - 1)) & 1u) v += (i % 2) ? -1.0 : 1.0;
    m(s, s) = v;
  }
  return Operator(std::move(m), basis.tag());
}

// ---------------------------------------------------------------------------
// Partial trace
// ---------------------------------------------------------------------------

namespace detail {

struct TensorBasisView {
  int n_factors;                        // two-level sites/qubits
  std::vector<std::uint32_t> words;     // full tensor word per basis index,
                                        // factor s at bit (n_factors - s)
};

inline bool parse_fock_tag(const std::string& tag, int& n, int& k) {
  if (tag.rfind("fock:N=", 0) != 0) return false;
  const auto comma = tag.find(",k=");
  if (comma == std::string::npos) return false;
  n = std::stoi(tag.substr(7, comma - 7));
  k = std::stoi(tag.substr(comma + 3));
  return true;
}

inline TensorBasisView tensor_view(const std::string& tag, Eigen::Index dim) {
  int n = 0, k = 0;
  if (tag.rfind("qubit", 0) == 0) {
    n = std::stoi(tag.substr(5));
    if (dim != (Eigen::Index{1} << n))
      throw error("partial_trace: dimension does not match tag '" + tag + "'");
    TensorBasisView v{n, {}};
    v.words.resize(static_cast<std::size_t>(dim));
    for (Eigen::Index i = 0; i < dim; ++i)
      v.words[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
    return v;
  }
  if (parse_fock_tag(tag, n, k)) {
    SectorBasis basis = build_sector_basis(n, k);
    if (basis.dim() != dim)
      throw error("partial_trace: dimension does not match tag '" + tag + "'");
    TensorBasisView v{n, {}};
    v.words.reserve(basis.states.size());
    // occupation of site s (word bit s-1) becomes tensor bit n-s
    for (std::uint32_t w : basis.states) {
      std::uint32_t e = 0;
      for (int s = 1; s <= n; ++s)
        if ((w >> (s - 1)) & 1u) e |= std::uint32_t{1} << (n - s);
      v.words.push_back(e);
    }
    return v;
  }
  throw error("partial_trace: basis '" + tag + "' has no tensor structure");
}

// Embed-and-trace over the tensor factors not kept. Works directly on the
// (possibly sector-restricted) index list; equivalent to embedding into the
// full 2^N occupation basis and tracing factor by factor.
inline Matrix partial_trace_raw(const Matrix& rho, const std::string& tag,
                                const std::vector<int>& kept_sites) {
  TensorBasisView view = tensor_view(tag, rho.rows());
  const int n = view.n_factors;
  const int m = static_cast<int>(kept_sites.size());
  std::vector<std::uint32_t> kept_mask_bits;
  for (int s : kept_sites) {
    if (s < 1 || s > n) throw error("partial_trace: kept site out of range");
    kept_mask_bits.push_back(std::uint32_t{1} << (n - s));
  }

  const Eigen::Index sz = rho.rows();
  std::vector<std::uint32_t> kept_part(static_cast<std::size_t>(sz));
  std::vector<std::uint32_t> traced_part(static_cast<std::size_t>(sz));
  for (Eigen::Index i = 0; i < sz; ++i) {
    const std::uint32_t e = view.words[static_cast<std::size_t>(i)];
    std::uint32_t a = 0;
    for (int j = 0; j < m; ++j)
      if (e & kept_mask_bits[static_cast<std::size_t>(j)])
        a |= std::uint32_t{1} << (m - 1 - j);
    std::uint32_t b = e;
    for (std::uint32_t km : kept_mask_bits) b &= ~km;
    kept_part[static_cast<std::size_t>(i)] = a;
    traced_part[static_cast<std::size_t>(i)] = b;
  }

  std::map<std::uint32_t, std::vector<Eigen::Index>> groups;
  for (Eigen::Index i = 0; i < sz; ++i)
    groups[traced_part[static_cast<std::size_t>(i)]].push_back(i);

  Matrix out = Matrix::Zero(Eigen::Index{1} << m, Eigen::Index{1} << m);
  for (const auto& [tb, idxs] : groups)
    for (Eigen::Index i : idxs)
      for (Eigen::Index j : idxs)
        out(kept_part[static_cast<std::size_t>(i)],
            kept_part[static_cast<std::size_t>(j)]) += rho(i, j);
  return out;
}

}  // namespace detail

/// Trace out the factors in part.traced_sites. Qubit states accept any site
/// subset; fermionic sector states require kept_sites contiguous in
/// Jordan-Wigner order (the sign structure of a non-contiguous block is out
/// of scope). The result lives in the occupation basis of the kept block.
inline DensityMatrix partial_trace(const DensityMatrix& rho, const Bipartition& part) {
  int n = 0, k = 0;
  if (detail::parse_fock_tag(rho.basis_tag(), n, k)) {
    for (std::size_t i = 1; i < part.kept_sites.size(); ++i)
      if (part.kept_sites[i] != part.kept_sites[i - 1] + 1)
        throw error("partial_trace: unsupported bipartition (fermionic kept "
                    "sites must be contiguous in Jordan-Wigner order)");
  }
  Matrix red = detail::partial_trace_raw(rho.mat(), rho.basis_tag(), part.kept_sites);
  const double tr = red.trace().real();
  if (std::abs(tr - 1.0) > 1e-10 && rho.normalized)
    throw error("partial_trace: trace drifted from 1");
  red /= tr;
  red = 0.5 * (red + red.adjoint().eval());
  Eigen::SelfAdjointEigenSolver<Matrix> es(red, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw error("partial_trace: reduced matrix not positive semidefinite");
  return DensityMatrix{
      Operator(std::move(red), "qubit" + std::to_string(part.kept_sites.size())),
      true};
}

// ---------------------------------------------------------------------------
// Scalar functionals
// ---------------------------------------------------------------------------

/// -sum p log2 p over the eigenvalue distribution. Eigenvalues in
/// [-1e-10, 0) are clipped to zero; anything lower is not a state.
inline double von_neumann_entropy(const DensityMatrix& rho) {
  if (!rho.normalized) throw error("von_neumann_entropy: state must be normalized");
  Eigen::SelfAdjointEigenSolver<Matrix> es(
      0.5 * (rho.mat() + rho.mat().adjoint()), Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    double p = es.eigenvalues()(i);
    if (p < -1e-10)
      throw error("von_neumann_entropy: eigenvalue " + std::to_string(p) +
                  " below -1e-10; not a state");
    if (p > 0.0) s -= p * std::log2(p);
  }
  return std::max(0.0, s);
}

/// Tr(rho^2) / Tr(rho)^2; accepts unnormalized input, scale-invariant.
inline double purity(const DensityMatrix& rho) {
  const double tr = rho.mat().trace().real();
  if (tr <= 0.0) throw error("purity: vanishing trace");
  const double tr2 = (rho.mat().transpose().cwiseProduct(rho.mat())).sum().real();
  return tr2 / (tr * tr);
}

// ---------------------------------------------------------------------------
// State functionals F[rho]
// ---------------------------------------------------------------------------

/// Named functional with a general density-matrix path and an optional pure
/// state fast path (must agree with the general path on |v><v|; covered by
/// property tests).
struct StateFunctional {
  std::string name;
  std::function<double(const DensityMatrix&)> on_density;
  std::function<double(const Vector&, const std::string&)> on_pure;

  double operator()(const DensityMatrix& rho) const { return on_density(rho); }
};

inline StateFunctional magnetization_z(int qubit, int n_qubits) {
  Operator op = pauli_z_qubit(qubit, n_qubits);
  return StateFunctional{
      "m_z",
      [op](const DensityMatrix& rho) { return expectation(op, rho); },
      [op](const Vector& v, const std::string& tag) {
        if (tag != op.basis_tag()) throw error("m_z: basis mismatch");
        double acc = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i)
          acc += op.mat()(i, i).real() * std::norm(v(i));
        return acc;
      }};
}

namespace detail {

inline StateFunctional diagonal_functional(std::string name, Operator op) {
  return StateFunctional{
      std::move(name),
      [op](const DensityMatrix& rho) { return expectation(op, rho); },
      [op](const Vector& v, const std::string& tag) {
        if (tag != op.basis_tag()) throw error("functional: basis mismatch");
        double acc = 0.0;
        for (Eigen::Index i = 0; i < v.size(); ++i)
          acc += op.mat()(i, i).real() * std::norm(v(i));
        return acc;
      }};
}

// Entropy of the reduced state of a pure sector/qubit vector, kept block =
// sites 1..m. Reshape in the embedded tensor basis, then eigensolve M M^dag.
inline double pure_state_block_entropy(const Vector& v, const std::string& tag,
                                       int m_kept) {
  TensorBasisView view = tensor_view(tag, v.size());
  const int n = view.n_factors;
  if (m_kept < 1 || m_kept >= n) throw error("block entropy: bad block size");
  const Eigen::Index rows = Eigen::Index{1} << m_kept;
  const Eigen::Index cols = Eigen::Index{1} << (n - m_kept);
  Matrix psi = Matrix::Zero(rows, cols);
  const double nrm = v.norm();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const std::uint32_t e = view.words[static_cast<std::size_t>(i)];
    psi(e >> (n - m_kept), e & ((std::uint32_t{1} << (n - m_kept)) - 1)) +=
        v(i) / nrm;
  }
  Matrix rho_a = psi * psi.adjoint();
  Eigen::SelfAdjointEigenSolver<Matrix> es(rho_a, Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double p = es.eigenvalues()(i);
    if (p > 0.0) s -= p * std::log2(p);
  }
  return std::max(0.0, s);
}

}  // namespace detail

inline StateFunctional site_occupation(const SectorBasis& basis, int site) {
  return detail::diagonal_functional("n_" + std::to_string(site),
                                     site_occupation_op(basis, site));
}

inline StateFunctional staggered_functional(const SectorBasis& basis) {
  return detail::diagonal_functional("staggered", staggered_magnetization(basis));
}

/// Von Neumann entropy of the first-half block (sites 1..N/2).
inline StateFunctional half_chain_vne(const SectorBasis& basis) {
  const int half = basis.n_sites / 2;
  std::vector<int> kept(static_cast<std::size_t>(half));
  std::iota(kept.begin(), kept.end(), 1);
  const int n_total = basis.n_sites;
  return StateFunctional{
      "vne_half",
      [kept, n_total](const DensityMatrix& rho) {
        return von_neumann_entropy(
            partial_trace(rho, Bipartition::keep(kept, n_total)));
      },
      [half](const Vector& v, const std::string& tag) {
        return detail::pure_state_block_entropy(v, tag, half);
      }};
}

/// Entanglement entropy of qubit 1 of a two-qubit state.
inline StateFunctional qubit_vne(int n_qubits) {
  return StateFunctional{
      "vne_A",
      [n_qubits](const DensityMatrix& rho) {
        return von_neumann_entropy(
            partial_trace(rho, Bipartition::keep({1}, n_qubits)));
      },
      [](const Vector& v, const std::string& tag) {
        return detail::pure_state_block_entropy(v, tag, 1);
      }};
}

/// Entropy of the full (generally mixed) state; the dynamic-case functional.
inline StateFunctional global_vne() {
  return StateFunctional{
      "vne",
      [](const DensityMatrix& rho) { return von_neumann_entropy(rho); },
      [](const Vector&, const std::string&) { return 0.0; }};
}

inline StateFunctional purity_functional() {
  return StateFunctional{
      "purity",
      [](const DensityMatrix& rho) { return purity(rho); },
      [](const Vector&, const std::string&) { return 1.0; }};
}

/// Diagnostic only: block entropy of the biorthogonal cross state
/// Tr_B(|R><L|), whose spectrum is generally complex; evaluated with the
/// principal-branch log2. Not a certified measure and never aggregated.
inline complex biorthogonal_vne_diagnostic(const Vector& right_ket,
                                           const Vector& left_ket,
                                           const std::string& tag,
                                           const std::vector<int>& kept_sites) {
  Matrix cross = right_ket * left_ket.adjoint();
  const complex tr = cross.trace();
  if (std::abs(tr) < 1e-300) throw error("biorthogonal_vne_diagnostic: zero overlap");
  cross /= tr;
  Matrix red = detail::partial_trace_raw(cross, tag, kept_sites);
  Eigen::ComplexEigenSolver<Matrix> es(red, false);
  complex s = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const complex lam = es.eigenvalues()(i);
    if (std::abs(lam) > 1e-14) s -= lam * std::log(lam) / std::log(2.0);
  }
  return s;
}

}  // namespace nhqm
