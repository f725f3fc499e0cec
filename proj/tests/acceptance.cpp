// Acceptance suite: one line per criterion, exit code = number of failures.
//
//   ./acceptance [--threads N] [--with-n14] [--only K]
//
// --with-n14 adds the N = 14 size to the finite-size criterion (hours of
// eigensolves on small machines); without it that criterion is tested at the
// 2-sigma level as documented in the README.

#include <chrono>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>

#include "nhqm/analysis.hpp"
#include "nhqm/cli.hpp"

using namespace nhqm;

namespace {

struct Checker {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (detail.tellp() > 0) detail << "; ";
      detail << what;
    }
  }
};

struct Options {
  int threads = 0;
  bool with_n14 = false;
  int only = -1;
};

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out;
  for (int i = 0; i < n; ++i)
    out.push_back(lo + (hi - lo) * i / std::max(1, n - 1));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double binary_entropy(double p) {
  double q = 1.0 - p, s = 0.0;
  if (p > 0) s -= p * std::log2(p);
  if (q > 0) s -= q * std::log2(q);
  return s;
}

// Appendix-table closed forms for the imperfect-Bell family.
double mz_right(int k, double a) {
  if (k <= 2) return (1 - a * a) / (1 + a * a);
  const double b2 = (1 - a) * (1 - a);
  return b2 / (2 + b2);
}
double mz_left(int k, double a) {
  if (k > 2) return 0.0;
  const double den = a * a + a * a * (a - 1) * (a - 1) + 1;
  return (den - 2.0) / den;
}
double lam_right(int k, double a) {
  if (k <= 2) return 1.0 / (1.0 + a * a);
  const double b2 = (a - 1) * (a - 1);
  return 0.5 + 0.5 * std::sqrt(1.0 - 4.0 / ((2 + b2) * (2 + b2)));
}
double lam_left(int k, double a) {
  if (k > 2) return 0.5;
  const double den = a * a + a * a * (a - 1) * (a - 1) + 1;
  return 0.5 + 0.5 * std::sqrt(1.0 - 4.0 * a * a / (den * den));
}

// ---------------------------------------------------------------------------

void criterion_1(Checker& c, const Options&) {
  // closed-form magnetization and reduced spectra, 1e-10 absolute
  const Bipartition keep1 = Bipartition::keep({1}, 2);
  const Operator sz = pauli_z_qubit(1, 2);
  for (double a : {0.1, 0.25, 0.5, 0.75, 0.9}) {
    BellVectors v = bell_vectors(a);
    for (int k = 1; k <= 4; ++k) {
      DensityMatrix rr = DensityMatrix::pure(v.right.col(k - 1), kQubit2Tag);
      DensityMatrix ll = DensityMatrix::pure(v.left.col(k - 1), kQubit2Tag);
      c.require(std::abs(expectation(sz, rr) - mz_right(k, a)) < 1e-10,
                "m_z^R k=" + std::to_string(k) + " a=" + fmt(a));
      c.require(std::abs(expectation(sz, ll) - mz_left(k, a)) < 1e-10,
                "m_z^L k=" + std::to_string(k) + " a=" + fmt(a));
      Eigen::SelfAdjointEigenSolver<Matrix> er(partial_trace(rr, keep1).mat());
      c.require(std::abs(er.eigenvalues().maxCoeff() - lam_right(k, a)) < 1e-10,
                "lam^R k=" + std::to_string(k) + " a=" + fmt(a));
      Eigen::SelfAdjointEigenSolver<Matrix> el(partial_trace(ll, keep1).mat());
      c.require(std::abs(el.eigenvalues().maxCoeff() - lam_left(k, a)) < 1e-10,
                "lam^L k=" + std::to_string(k) + " a=" + fmt(a));
    }
  }
}

void criterion_2(Checker& c, const Options&) {
  // biorthonormality and reconstruction over 100 random models
  std::mt19937_64 rng(0xACCE1ULL);
  std::uniform_real_distribution<double> ua(0.05, 1.0);
  std::normal_distribution<double> gauss;
  double worst_biorth = 0.0, worst_recon = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    BellModelParams p{ua(rng), {gauss(rng), gauss(rng), gauss(rng), gauss(rng)}};
    Operator h = build_bell_hamiltonian(p);
    BiorthogonalSystem sys = diagonalize(h);
    worst_biorth = std::max(worst_biorth,
                            (sys.left * sys.right - Matrix::Identity(4, 4)).norm());
    worst_recon = std::max(worst_recon,
                           frobenius_norm(reconstruct(sys) - h) / frobenius_norm(h));
  }
  c.require(worst_biorth < 1e-9, "||LR - I||_F worst " + fmt(worst_biorth));
  c.require(worst_recon < 1e-9, "reconstruction worst " + fmt(worst_recon));
}

void criterion_3(Checker& c, const Options&) {
  // purity score identically zero for the maximally mixed input
  std::mt19937_64 rng(0xACCE3ULL);
  std::uniform_real_distribution<double> ua(0.05, 1.0);
  std::normal_distribution<double> gauss;
  const auto times = linspace(0.0, 100.0, 50);
  const DensityMatrix mixed = DensityMatrix::maximally_mixed(4, kQubit2Tag);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    BellModelParams p{ua(rng), {gauss(rng), gauss(rng), gauss(rng), gauss(rng)}};
    auto sys = diagonalize(build_bell_hamiltonian(p));
    for (const auto& [t, sc] : score_timeseries(purity_functional(), sys, times, mixed))
      worst = std::max(worst, sc);
  }
  c.require(worst < 1e-10, "max SC^P " + fmt(worst));
}

void criterion_4(Checker& c, const Options& opt) {
  // ensemble maximum reaches 1 at the endpoint and grows monotonically
  auto pts = bell_ensemble_sweep(linspace(0.0, 1.0, 20), 1000, 0xACCE4ULL, opt.threads);
  const double d_end = pts.back().d_max;
  c.require(std::abs(d_end - 1.0) <= 0.02, "D_max(abar=1) = " + fmt(d_end));
  for (std::size_t i = 1; i < pts.size(); ++i)
    c.require(pts[i].d_max >= pts[i - 1].d_max - 0.03,
              "drop at abar=" + fmt(pts[i].alphabar));
}

void criterion_5(Checker& c, const Options&) {
  // grid search of the k=1,2 entropy score maximum from the closed forms
  double best = -1.0, best_ab = 0.0;
  for (int i = 1; i < 10000; ++i) {
    const double ab = i * 1e-4;
    const double a = 1.0 - ab;
    const double sc = std::abs(binary_entropy(lam_right(1, a)) -
                               binary_entropy(lam_left(1, a)));
    if (sc > best) {
      best = sc;
      best_ab = ab;
    }
  }
  c.require(std::abs(best_ab - 0.449) <= 0.005,
            "argmax at abar=" + fmt(best_ab) + " (value " + fmt(best) + ")");
}

void criterion_6(Checker& c, const Options& opt) {
  const int n = 12;
  const SectorBasis basis = build_sector_basis(n, n / 2);
  const StateFunctional f_n = site_occupation(basis, 1);
  const StateFunctional f_s = half_chain_vne(basis);
  const StateFunctional f_i = staggered_functional(basis);
  const auto v_grid = cli::parse_range("1e-1:1e5:49log");
  const auto chi_grid = cli::parse_range("0:5.4:41");

  // chi = 0 column: distances and scores vanish
  {
    std::vector<double> worst_d(v_grid.size()), worst_sc(v_grid.size());
    detail::parallel_for(v_grid.size(), opt.threads, [&](std::size_t i) {
      Operator h = build_hatano_nelson({n, 1.0, 0.0, v_grid[i]}, basis);
      worst_d[i] = std::max(
          {hamiltonian_nonhermiticity(h, NormVariant::operator_norm),
           hamiltonian_nonhermiticity(h, NormVariant::frobenius),
           hamiltonian_nonhermiticity(h, NormVariant::unnormalized_operator)});
      auto sys = diagonalize(h);
      worst_sc[i] = std::max({aggregate(score_spectrum(f_n, sys), Infinity{}),
                              aggregate(score_spectrum(f_s, sys), Infinity{}),
                              aggregate(score_spectrum(f_i, sys), Infinity{})});
    });
    const double wd = *std::max_element(worst_d.begin(), worst_d.end());
    const double ws = *std::max_element(worst_sc.begin(), worst_sc.end());
    c.require(wd < 1e-9, "chi=0 distance " + fmt(wd));
    c.require(ws < 1e-9, "chi=0 score " + fmt(ws));
  }

  // conjugation closure at 20 random grid points
  {
    std::mt19937_64 rng(0xACCE6ULL);
    std::uniform_real_distribution<double> uchi(0.0, 5.4), ulogv(-1.0, 5.0);
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i < 20; ++i)
      pts.emplace_back(uchi(rng), std::pow(10.0, ulogv(rng)));
    std::vector<double> worst(pts.size());
    detail::parallel_for(pts.size(), opt.threads, [&](std::size_t i) {
      Operator h = build_hatano_nelson({n, 1.0, pts[i].first, pts[i].second}, basis);
      Vector w = eigenvalues_only(h);
      double worst_here = 0.0;
      for (Eigen::Index a = 0; a < w.size(); ++a) {
        double best = 1e300;
        for (Eigen::Index b = 0; b < w.size(); ++b)
          best = std::min(best, std::abs(w(b) - std::conj(w(a))));
        worst_here = std::max(worst_here, best);
      }
      worst[i] = worst_here;
    });
    const double w = *std::max_element(worst.begin(), worst.end());
    c.require(w < 1e-8, "conjugation closure " + fmt(w));
  }

  // saturation at V = 0, chi = 5 and suppression at V = 1e5
  {
    Operator h = build_hatano_nelson({n, 1.0, 5.0, 0.0}, basis);
    const double d = hamiltonian_nonhermiticity(h, NormVariant::operator_norm);
    c.require(std::abs(d - 2.0) <= 0.05, "D(V=0, chi=5) = " + fmt(d));
  }
  {
    std::vector<double> ds(chi_grid.size());
    detail::parallel_for(chi_grid.size(), opt.threads, [&](std::size_t i) {
      Operator h = build_hatano_nelson({n, 1.0, chi_grid[i], 1e5}, basis);
      ds[i] = hamiltonian_nonhermiticity(h, NormVariant::operator_norm);
    });
    const double w = *std::max_element(ds.begin(), ds.end());
    c.require(w < 0.01, "D(V=1e5) worst " + fmt(w));
  }
}

void criterion_7(Checker& c, const Options& opt) {
  // overlap formula vs direct Frobenius distance
  double worst = 0.0;
  for (double a : linspace(0.05, 0.95, 19)) {
    Operator h = build_bell_hamiltonian({a, {1.0, 2.0, 3.0, 4.0}});
    const double direct = frobenius_norm(h - adjoint(h));
    const double via = frobenius_distance_overlap(diagonalize(h));
    worst = std::max(worst, std::abs(via - direct) / direct);
  }
  c.require(worst < 1e-8, "bell worst rel " + fmt(worst));

  const SectorBasis basis = build_sector_basis(8, 4);
  std::vector<std::pair<double, double>> pts;
  for (double chi : {0.5, 1.5, 3.0})
    for (double v : {0.5, 5.0, 50.0}) pts.emplace_back(chi, v);
  std::vector<double> rel(pts.size());
  detail::parallel_for(pts.size(), opt.threads, [&](std::size_t i) {
    Operator h = build_hatano_nelson({8, 1.0, pts[i].first, pts[i].second}, basis);
    const double direct = frobenius_norm(h - adjoint(h));
    rel[i] = std::abs(frobenius_distance_overlap(diagonalize(h)) - direct) / direct;
  });
  const double w = *std::max_element(rel.begin(), rel.end());
  c.require(w < 1e-8, "ring worst rel " + fmt(w));
}

void criterion_8(Checker& c, const Options&) {
  for (int n : {4, 6}) {
    const SectorBasis basis = build_sector_basis(n, n / 2);
    for (double chi : {0.5, 1.0, 2.5}) {
      HNParams p{n, 1.0, chi, 1.0};
      Operator hn = build_hatano_nelson(p, basis);
      Operator shift(complex(0, -1) * 2.0 * std::sinh(chi) * (n / 2.0) *
                         Matrix::Identity(basis.dim(), basis.dim()),
                     basis.tag());
      const double err_m = frobenius_norm(
          effective_hamiltonian(build_jump_operators(p, basis, -1)) - (hn + shift));
      const double err_p = frobenius_norm(
          effective_hamiltonian(build_jump_operators(p, basis, +1)) -
          (adjoint(hn) + shift));
      c.require(err_m < 1e-10, "sign -1 N=" + std::to_string(n) + " chi=" + fmt(chi) +
                                   " err " + fmt(err_m));
      c.require(err_p < 1e-10, "sign +1 N=" + std::to_string(n) + " chi=" + fmt(chi) +
                                   " err " + fmt(err_p));
    }
  }
}

void criterion_9(Checker& c, const Options&) {
  // trajectory error halves with dt on both models
  auto halving = [&c](const std::string& label, const Operator& h,
                      const DensityMatrix& rho0, double t_final) {
    auto exact = evolve_ensemble(diagonalize(h), {{t_final}, rho0, Side::right})[0];
    std::vector<double> errs;
    for (double dt : {1e-3, 5e-4, 2.5e-4}) {
      TrajectoryResult tr = postselected_trajectory(
          h, rho0, {dt, static_cast<int>(std::llround(t_final / dt))});
      errs.push_back((tr.state.mat() - exact.mat()).norm());
    }
    for (std::size_t i = 1; i < errs.size(); ++i) {
      const double ratio = errs[i - 1] / errs[i];
      c.require(std::abs(ratio - 2.0) <= 0.4,
                label + " ratio " + fmt(ratio) + " at step " + std::to_string(i));
    }
  };
  halving("bell", build_bell_hamiltonian({0.5, {0.3, -0.4, 1.1, 0.7}}),
          DensityMatrix::maximally_mixed(4, kQubit2Tag), 1.0);
  const SectorBasis basis = build_sector_basis(4, 2);
  halving("ring",
          effective_hamiltonian(build_jump_operators({4, 1.0, 0.5, 1.0}, basis, -1)),
          DensityMatrix::maximally_mixed(basis.dim(), basis.tag()), 0.5);
}

void criterion_10(Checker& c, const Options& opt) {
  const int n = 12;
  const SectorBasis basis = build_sector_basis(n, n / 2);

  // (a) occupation score vanishes along the free column
  {
    const auto chi_grid = cli::parse_range("0:5.4:41");
    const StateFunctional f_n = site_occupation(basis, 1);
    std::vector<double> sc(chi_grid.size());
    detail::parallel_for(chi_grid.size(), opt.threads, [&](std::size_t i) {
      auto sys = diagonalize(build_hatano_nelson({n, 1.0, chi_grid[i], 0.0}, basis));
      sc[i] = aggregate(score_spectrum(f_n, sys), Infinity{});
    });
    const double w = *std::max_element(sc.begin(), sc.end());
    c.require(w < 1e-6, "(a) V=0 worst SCn_max " + fmt(w));
  }

  // (b) exactly one dominant level-spacing kink at chi = 2.5
  {
    auto scan = delta01_scan(cli::parse_range("1:1e3:33log"), 2.5, n, true, opt.threads);
    std::vector<bool> window(scan.second_diff.size(), true);
    const int kinks = count_dominant_kinks(scan.second_diff, window);
    c.require(kinks == 1, "(b) dominant kinks = " + std::to_string(kinks) +
                              " (kink at V=" + fmt(scan.kink_v) + ")");
  }

  // full default sweep for (c) and (d)
  HNSweepConfig cfg;
  cfg.n_sites = n;
  cfg.chi_grid = cli::parse_range("0:5.4:41");
  cfg.v_grid = cli::parse_range("1e-1:1e5:49log");
  cfg.threads = opt.threads;
  HNSweepResult res = hn_sweep(cfg);
  // the extreme (chi, V) corner is physically near-defective (eigenvector
  // condition 1e10..1e16); such cells error or carry ep flags and are
  // recorded, not discarded -- structure checks run on the valid cells
  std::size_t errored = 0;
  for (const auto& cell : res.cells) errored += cell.errored ? 1 : 0;
  const double errored_frac =
      static_cast<double>(errored) / static_cast<double>(res.cells.size());
  c.require(errored_frac < 0.05,
            "errored cell fraction " + fmt(errored_frac) + " (" +
                std::to_string(errored) + " cells)");

  {
    std::size_t overlap = 0;
    for (const auto& cell : res.cells)
      if (!cell.errored && cell.d_op > 0.5 && cell.scn_max > 0.5) ++overlap;
    const double frac = static_cast<double>(overlap) /
                        static_cast<double>(res.cells.size());
    c.require(frac < 0.10, "(c) complementarity overlap " + fmt(frac));
  }
  {
    std::vector<double> scn, gn, scs, gs;
    for (const auto& cell : res.cells) {
      if (cell.errored) continue;
      scn.push_back(cell.scn_max);
      gn.push_back(cell.gn_scaled);
      scs.push_back(cell.scs_max);
      gs.push_back(cell.gs_scaled);
    }
    const double rn = spearman_rank_correlation(gn, scn);
    const double rs = spearman_rank_correlation(gs, scs);
    c.require(rn > 0.8, "(d) spearman(Gn, SCn_max) = " + fmt(rn) + " over " +
                            std::to_string(scn.size()) + " valid cells");
    c.require(rs > 0.8, "(d) spearman(GS, SCS_max) = " + fmt(rs));
  }
}

void criterion_11(Checker& c, const Options& opt) {
  std::vector<int> sizes{4, 6, 8, 10, 12};
  double sigma = 2.0;
  if (opt.with_n14) {
    sizes.push_back(14);
    sigma = 3.0;
  }
  FssResult res = fss_extrapolate(sizes, 2.5, cli::parse_range("1e-1:1e2:33log"),
                                  FitForm::inv_n, true, opt.threads);
  c.require(res.z_v > sigma, "z_V = " + fmt(res.z_v) + " (need > " + fmt(sigma) + ")");
  c.require(res.z_log > sigma,
            "z_log10V = " + fmt(res.z_log) + " (need > " + fmt(sigma) + ")");
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    if (!std::strcmp(argv[i], "--threads") && i + 1 < argc)
      opt.threads = std::atoi(argv[++i]);
    else if (!std::strcmp(argv[i], "--with-n14"))
      opt.with_n14 = true;
    else if (!std::strcmp(argv[i], "--only") && i + 1 < argc)
      opt.only = std::atoi(argv[++i]);
    else {
      std::cerr << "usage: acceptance [--threads N] [--with-n14] [--only K]\n";
      return 64;
    }
  }

  struct Entry {
    int id;
    const char* label;
    std::function<void(Checker&, const Options&)> fn;
  };
  const std::vector<Entry> criteria{
      {1, "closed-form magnetization and reduced spectra", criterion_1},
      {2, "biorthonormality and reconstruction", criterion_2},
      {3, "purity score vanishes for maximally mixed input", criterion_3},
      {4, "ensemble maximum reaches 1 and grows monotonically", criterion_4},
      {5, "entropy-score maximum location on the closed forms", criterion_5},
      {6, "asymmetric-ring structural suite at N=12", criterion_6},
      {7, "overlap formula equals direct Frobenius distance", criterion_7},
      {8, "jump operators reproduce the effective Hamiltonian", criterion_8},
      {9, "dilation trajectory error halves with dt", criterion_9},
      {10, "qualitative map structure at N=12", criterion_10},
      {11, "finite-size markers extrapolate to distinct values", criterion_11},
  };

  int failures = 0;
  for (const auto& entry : criteria) {
    if (opt.only > 0 && entry.id != opt.only) continue;
    Checker check;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      entry.fn(check, opt);
    } catch (const std::exception& e) {
      check.require(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (check.ok ? "[PASS]" : "[FAIL]") << " criterion " << entry.id
              << ": " << entry.label << " (" << fmt(secs) << " s)";
    if (!check.ok) {
      std::cout << " -- " << check.detail.str();
      ++failures;
    }
    std::cout << std::endl;
  }
  return failures;
}
