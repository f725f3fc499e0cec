#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <thread>

#include "nhqm/dynamics.hpp"
#include "nhqm/measures.hpp"
#include "nhqm/models.hpp"

namespace nhqm {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Per-point stream keyed by (seed, index): deterministic no matter how work
/// is scheduled across threads.
inline std::mt19937_64 cell_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(index + 1)));
}

/// Maps fn over [0, count) on a small worker pool. Results land by index, so
/// assembly order cannot depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  int n_threads = threads > 0
                      ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  if (n_threads < 1) n_threads = 1;
  n_threads = std::min<int>(n_threads, static_cast<int>(count));
  if (n_threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  std::exception_ptr first_error;
  std::mutex error_mutex;
  for (int t = 0; t < n_threads; ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

/// alphabar = 1 - alpha; the alphabar = 1 endpoint is evaluated at
/// alpha = 1e-6 (the alpha -> 0+ limit).
inline double alpha_from_alphabar(double alphabar) {
  return std::max(1.0 - alphabar, 1e-6);
}

// ---------------------------------------------------------------------------
// Imperfect-Bell ensemble sweep
// ---------------------------------------------------------------------------

struct BellSweepPoint {
  double alphabar;
  double d_min;
  double d_max;
};

/// Per alphabar: `realizations` draws of lambda ~ N(0,1)^4, recording the
/// min and max Hamiltonian non-Hermiticity (operator norm variant).
inline std::vector<BellSweepPoint> bell_ensemble_sweep(
    const std::vector<double>& alphabar_grid, int realizations,
    std::uint64_t seed, int threads = 0) {
  if (alphabar_grid.empty()) throw error("bell_ensemble_sweep: empty grid");
  if (realizations < 1) throw error("bell_ensemble_sweep: realizations must be >= 1");
  std::vector<BellSweepPoint> out(alphabar_grid.size());
  detail::parallel_for(alphabar_grid.size(), threads, [&](std::size_t i) {
    const double alphabar = alphabar_grid[i];
    const double alpha = alpha_from_alphabar(alphabar);
    auto rng = detail::cell_rng(seed, i);
    std::normal_distribution<double> gauss;
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (int r = 0; r < realizations; ++r) {
      BellModelParams p{alpha, {gauss(rng), gauss(rng), gauss(rng), gauss(rng)}};
      const double d = hamiltonian_nonhermiticity(build_bell_hamiltonian(p),
                                                  NormVariant::operator_norm);
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    out[i] = {alphabar, dmin, dmax};
  });
  return out;
}

// ---------------------------------------------------------------------------
// Hatano-Nelson parameter sweep
// ---------------------------------------------------------------------------

struct HNSweepConfig {
  int n_sites = 12;
  std::vector<double> chi_grid;
  std::vector<double> v_grid;
  double ep_threshold = 1e8;
  double e_th = 0.1;          // threshold for the count aggregations
  bool wrap_interaction = true;
  int threads = 0;
};

struct HNCell {
  double chi = 0.0, v = 0.0;
  double d_op = 0.0, d_frob = 0.0, d_unnorm = 0.0;
  double scn_max = 0.0, scs_max = 0.0, sci_max = 0.0;
  double gn_scaled = 0.0, gs_scaled = 0.0;
  double delta01 = 0.0;
  double condition = 0.0;
  bool ep_flag = false;
  bool errored = false;
  std::string error_msg;
  double wall_s = 0.0;
};

struct HNSweepResult {
  HNSweepConfig config;
  std::vector<HNCell> cells;  // row-major over (chi, v)
  double ep_flag_rate = 0.0;

  const HNCell& at(std::size_t chi_idx, std::size_t v_idx) const {
    return cells[chi_idx * config.v_grid.size() + v_idx];
  }
};

/// Full per-cell pipeline: build, distances, biorthogonal diagonalization,
/// per-eigenstate scores for n_1 / half-chain VNE / staggered occupation,
/// infinity and scaled-count aggregations, and the level spacing
/// Delta01 = Re(lambda_1 - lambda_0). Cell errors are recorded, not fatal.
inline HNSweepResult hn_sweep(const HNSweepConfig& cfg) {
  if (cfg.chi_grid.empty() || cfg.v_grid.empty()) throw error("hn_sweep: empty grid");
  if (cfg.n_sites % 2 != 0 || cfg.n_sites > 14)
    throw error("hn_sweep: N must be even and <= 14");
  const SectorBasis basis = build_sector_basis(cfg.n_sites, cfg.n_sites / 2);
  const StateFunctional f_n = site_occupation(basis, 1);
  const StateFunctional f_s = half_chain_vne(basis);
  const StateFunctional f_i = staggered_functional(basis);

  HNSweepResult result{cfg, {}, 0.0};
  result.cells.resize(cfg.chi_grid.size() * cfg.v_grid.size());
  detail::parallel_for(result.cells.size(), cfg.threads, [&](std::size_t idx) {
    const auto t0 = std::chrono::steady_clock::now();
    HNCell& cell = result.cells[idx];
    cell.chi = cfg.chi_grid[idx / cfg.v_grid.size()];
    cell.v = cfg.v_grid[idx % cfg.v_grid.size()];
    try {
      HNParams p{cfg.n_sites, 1.0, cell.chi, cell.v, cfg.wrap_interaction};
      const Operator h = build_hatano_nelson(p, basis);
      const Operator x = h - adjoint(h);
      cell.d_unnorm = operator_norm(x);
      cell.d_op = cell.d_unnorm / operator_norm(h);
      cell.d_frob = frobenius_norm(x) / frobenius_norm(h);

      const BiorthogonalSystem sys = diagonalize(h, cfg.ep_threshold);
      cell.condition = sys.condition;
      cell.ep_flag = sys.ep_flag;
      cell.delta01 = (sys.eigenvalues(1) - sys.eigenvalues(0)).real();

      const ScoreVector sc_n = score_spectrum(f_n, sys);
      const ScoreVector sc_s = score_spectrum(f_s, sys);
      const ScoreVector sc_i = score_spectrum(f_i, sys);
      cell.scn_max = aggregate(sc_n, Infinity{});
      cell.scs_max = aggregate(sc_s, Infinity{});
      cell.sci_max = aggregate(sc_i, Infinity{});
      cell.gn_scaled = aggregate(sc_n, ThresholdCount{cfg.e_th, true});
      cell.gs_scaled = aggregate(sc_s, ThresholdCount{cfg.e_th, true});
    } catch (const std::exception& e) {
      cell.errored = true;
      cell.error_msg = e.what();
    }
    cell.wall_s = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t0).count();
  });

  std::size_t flagged = 0;
  for (const auto& c : result.cells) flagged += c.ep_flag ? 1 : 0;
  result.ep_flag_rate = static_cast<double>(flagged) /
                        static_cast<double>(result.cells.size());
  return result;
}

// ---------------------------------------------------------------------------
// Level-spacing scan and kink detection
// ---------------------------------------------------------------------------

struct Delta01Scan {
  std::vector<double> v_grid;
  std::vector<double> delta01;
  std::vector<double> second_diff;  // over log V, interior points (size-2)
  int kink_index = -1;              // into v_grid
  double kink_v = 0.0;
  double kink_err_lo = 0.0, kink_err_hi = 0.0;  // neighboring grid spacing
  bool exact_degeneracy = false;    // some |lambda1 - lambda0| < 1e-10
};

/// Delta01 over a (log-spaced) V grid at fixed chi; the kink is the grid
/// point maximizing the second-difference magnitude of Delta01 in log V.
inline Delta01Scan delta01_scan(const std::vector<double>& v_grid, double chi,
                                int n_sites, bool wrap_interaction = true,
                                int threads = 0) {
  if (v_grid.size() < 3) throw error("delta01_scan: need at least 3 grid points");
  const SectorBasis basis = build_sector_basis(n_sites, n_sites / 2);
  Delta01Scan scan;
  scan.v_grid = v_grid;
  scan.delta01.resize(v_grid.size());
  std::vector<std::uint8_t> degenerate(v_grid.size(), 0);
  detail::parallel_for(v_grid.size(), threads, [&](std::size_t i) {
    HNParams p{n_sites, 1.0, chi, v_grid[i], wrap_interaction};
    const Vector w = eigenvalues_only(build_hatano_nelson(p, basis));
    scan.delta01[i] = (w(1) - w(0)).real();
    degenerate[i] = std::abs(w(1) - w(0)) < 1e-10 ? 1 : 0;
  });
  scan.exact_degeneracy =
      std::any_of(degenerate.begin(), degenerate.end(), [](auto d) { return d != 0; });

  scan.second_diff.resize(v_grid.size() - 2);
  double best = -1.0;
  for (std::size_t i = 1; i + 1 < v_grid.size(); ++i) {
    const double d2 = scan.delta01[i + 1] - 2.0 * scan.delta01[i] + scan.delta01[i - 1];
    scan.second_diff[i - 1] = d2;
    if (std::abs(d2) > best) {
      best = std::abs(d2);
      scan.kink_index = static_cast<int>(i);
    }
  }
  const auto ki = static_cast<std::size_t>(scan.kink_index);
  scan.kink_v = v_grid[ki];
  scan.kink_err_lo = v_grid[ki] - v_grid[ki - 1];
  scan.kink_err_hi = v_grid[ki + 1] - v_grid[ki];
  return scan;
}

/// Clusters of consecutive interior points whose |second difference| exceeds
/// 10x the median; a slope discontinuity shows up as one such cluster.
inline int count_dominant_kinks(const std::vector<double>& second_diff,
                                const std::vector<bool>& in_window) {
  std::vector<double> mags;
  for (double d : second_diff) mags.push_back(std::abs(d));
  std::vector<double> sorted = mags;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double cut = 10.0 * std::max(median, 1e-300);
  int clusters = 0;
  bool in_cluster = false;
  for (std::size_t i = 0; i < mags.size(); ++i) {
    const bool spike = in_window[i] && mags[i] > cut;
    if (spike && !in_cluster) ++clusters;
    in_cluster = spike;
  }
  return clusters;
}

// ---------------------------------------------------------------------------
// Finite-size extrapolation
// ---------------------------------------------------------------------------

enum class FitForm { inv_n, inv_n2 };

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double intercept_se = 0.0;
};

/// Ordinary least squares y = a + b x with the standard error of a.
inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 3 || y.size() != n) throw error("linear_fit: need at least 3 points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i]; sy += y[i]; sxx += x[i] * x[i]; sxy += x[i] * y[i];
  }
  const double nn = static_cast<double>(n);
  const double denom = nn * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) throw error("linear_fit: degenerate abscissae");
  LinearFit fit;
  fit.slope = (nn * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / nn;
  double ss_res = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    ss_res += r * r;
  }
  const double sigma2 = n > 2 ? ss_res / (nn - 2.0) : 0.0;
  fit.intercept_se = std::sqrt(sigma2 * sxx / denom);
  return fit;
}

struct FssResult {
  std::vector<int> n_list;
  std::vector<double> vc_dprime;            // per N, derivative-minimum of D'
  std::vector<double> vc_delta;             // per N, Delta01 kink
  std::vector<std::vector<double>> dprime_curves;   // per N over v_grid
  std::vector<std::vector<double>> delta01_curves;  // per N over v_grid
  std::vector<double> v_grid;
  LinearFit fit_dprime_v, fit_delta_v;      // intercepts in V
  LinearFit fit_dprime_log, fit_delta_log;  // intercepts in log10 V
  double z_v = 0.0, z_log = 0.0;            // |a1 - a2| / sqrt(se1^2 + se2^2)
  FitForm form = FitForm::inv_n;
};

/// Per system size: V_c^{D'} from the minimum of dD'/dV (centered differences
/// in log V, converted back) and V_c^{Delta} from the Delta01 kink; then a
/// least-squares extrapolation of both to 1/N -> 0 (optionally 1/N^2).
/// Intercepts are reported in V and in log10 V.
inline FssResult fss_extrapolate(const std::vector<int>& n_list, double chi,
                                 const std::vector<double>& v_grid,
                                 FitForm form = FitForm::inv_n,
                                 bool wrap_interaction = true, int threads = 0) {
  if (n_list.size() < 3) throw error("fss_extrapolate: need at least 3 sizes");
  for (int n : n_list)
    if (n % 2 != 0 || n < 4) throw error("fss_extrapolate: sizes must be even and >= 4");
  if (v_grid.size() < 5) throw error("fss_extrapolate: need at least 5 V points");

  FssResult res;
  res.n_list = n_list;
  res.v_grid = v_grid;
  res.form = form;
  for (int n : n_list) {
    const SectorBasis basis = build_sector_basis(n, n / 2);
    std::vector<double> dprime(v_grid.size()), d01(v_grid.size());
    detail::parallel_for(v_grid.size(), threads, [&](std::size_t i) {
      HNParams p{n, 1.0, chi, v_grid[i], wrap_interaction};
      const Operator h = build_hatano_nelson(p, basis);
      dprime[i] = frobenius_norm(h - adjoint(h)) / frobenius_norm(h);
      const Vector w = eigenvalues_only(h);
      d01[i] = (w(1) - w(0)).real();
    });

    // dD'/dV = (1/V) dD'/d(ln V), centered in ln V on the interior
    double best_slope = std::numeric_limits<double>::infinity();
    std::size_t best_i = 1;
    for (std::size_t i = 1; i + 1 < v_grid.size(); ++i) {
      const double dlog = std::log(v_grid[i + 1]) - std::log(v_grid[i - 1]);
      const double deriv = (dprime[i + 1] - dprime[i - 1]) / dlog / v_grid[i];
      if (deriv < best_slope) { best_slope = deriv; best_i = i; }
    }
    res.vc_dprime.push_back(v_grid[best_i]);

    double best_d2 = -1.0;
    std::size_t kink_i = 1;
    for (std::size_t i = 1; i + 1 < v_grid.size(); ++i) {
      const double d2 = std::abs(d01[i + 1] - 2.0 * d01[i] + d01[i - 1]);
      if (d2 > best_d2) { best_d2 = d2; kink_i = i; }
    }
    res.vc_delta.push_back(v_grid[kink_i]);
    res.dprime_curves.push_back(std::move(dprime));
    res.delta01_curves.push_back(std::move(d01));
  }

  std::vector<double> xs;
  for (int n : n_list)
    xs.push_back(form == FitForm::inv_n ? 1.0 / n : 1.0 / (static_cast<double>(n) * n));
  auto log10v = [](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back(std::log10(x));
    return out;
  };
  res.fit_dprime_v = linear_fit(xs, res.vc_dprime);
  res.fit_delta_v = linear_fit(xs, res.vc_delta);
  res.fit_dprime_log = linear_fit(xs, log10v(res.vc_dprime));
  res.fit_delta_log = linear_fit(xs, log10v(res.vc_delta));
  auto zscore = [](const LinearFit& a, const LinearFit& b) {
    const double se = std::sqrt(a.intercept_se * a.intercept_se +
                                b.intercept_se * b.intercept_se);
    return se > 0 ? std::abs(a.intercept - b.intercept) / se
                  : std::numeric_limits<double>::infinity();
  };
  res.z_v = zscore(res.fit_dprime_v, res.fit_delta_v);
  res.z_log = zscore(res.fit_dprime_log, res.fit_delta_log);
  return res;
}

// ---------------------------------------------------------------------------
// Rank correlation
// ---------------------------------------------------------------------------

/// Spearman rank correlation with average ranks on ties.
inline double spearman_rank_correlation(const std::vector<double>& xs,
                                        const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n < 2 || ys.size() != n) throw error("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t m = v.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(m);
    std::size_t i = 0;
    while (i < m) {
      std::size_t j = i;
      while (j + 1 < m && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const std::vector<double> rx = ranks(xs), ry = ranks(ys);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) { mx += rx[i]; my += ry[i]; }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) throw error("spearman: constant series");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace nhqm
