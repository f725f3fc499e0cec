#pragma once

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <sstream>

#include "nhqm/analysis.hpp"
#include "nhqm/csv.hpp"
#include "nhqm/version.hpp"

namespace nhqm::cli {

/// Bad flags, ranges, or parameter combinations: exit code 1.
class config_error : public error {
 public:
  using error::error;
};

/// "start:stop:count" with an optional "log" suffix for geometric spacing.
inline std::vector<double> parse_range(const std::string& spec) {
  const bool log = spec.size() > 3 && spec.substr(spec.size() - 3) == "log";
  const std::string body = log ? spec.substr(0, spec.size() - 3) : spec;
  const auto c1 = body.find(':');
  const auto c2 = body.find(':', c1 == std::string::npos ? c1 : c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos)
    throw config_error("range '" + spec + "': expected start:stop:count[log]");
  double start = 0, stop = 0;
  long count = 0;
  std::size_t pos = 0;
  try {
    start = std::stod(body.substr(0, c1), &pos);
    if (pos != c1) throw std::invalid_argument("");
    stop = std::stod(body.substr(c1 + 1, c2 - c1 - 1), &pos);
    if (pos != c2 - c1 - 1) throw std::invalid_argument("");
    count = std::stol(body.substr(c2 + 1), &pos);
    if (pos != body.size() - c2 - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw config_error("range '" + spec + "': malformed number");
  }
  if (count < 1) throw config_error("range '" + spec + "': count must be >= 1");
  if (count == 1 && start != stop)
    throw config_error("range '" + spec + "': a single point needs start == stop");
  if (log && (start <= 0 || stop <= 0))
    throw config_error("range '" + spec + "': log spacing needs positive bounds");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    const double f = count == 1 ? 0.0
                                : static_cast<double>(i) / static_cast<double>(count - 1);
    out.push_back(log ? start * std::pow(stop / start, f)
                      : start + (stop - start) * f);
  }
  return out;
}

inline std::vector<double> parse_list(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw config_error("list '" + spec + "': malformed number '" + item + "'");
    }
  }
  if (out.empty()) throw config_error("list '" + spec + "': empty");
  return out;
}

namespace detail {

using MetaRows = std::vector<std::pair<std::string, std::string>>;

struct RunContext {
  std::string command;
  std::string out_path;
  std::uint64_t seed = 0;
  int threads = 0;
  MetaRows config_echo;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void finish(const MetaRows& extra = {}) const {
    MetaRows rows;
    rows.emplace_back("command", command);
    rows.emplace_back("version", kVersion);
    rows.emplace_back("seed", std::to_string(seed));
    rows.emplace_back("threads", std::to_string(threads));
    for (const auto& kv : config_echo) rows.emplace_back("config." + kv.first, kv.second);
    for (const auto& kv : extra) rows.push_back(kv);
    rows.emplace_back("wall_time_s",
                      format_double(std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - started)
                                        .count()));
    write_metadata(out_path + ".meta", rows);
  }
};

inline std::string bool_str(bool b) { return b ? "1" : "0"; }

}  // namespace detail

/// Entry point behind the binary: parses one subcommand, runs it, writes the
/// CSV plus a ".meta" sidecar. Exit codes: 0 success, 1 configuration error,
/// 2 numerical error, 3 I/O error.
inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"non-Hermiticity measures for quantum Hamiltonians"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; command-line flags win");
  app.allow_config_extras(CLI::config_extras_mode::error);

  // common options, duplicated per subcommand so config files stay scoped
  struct Common {
    std::string out = "out.csv";
    std::uint64_t seed = 0;
    int threads = 0;
  };

  auto add_common = [](CLI::App* sub, Common& c) {
    sub->add_option("--out", c.out, "output CSV path (sidecar: <out>.meta)");
    sub->add_option("--seed", c.seed, "master seed for per-cell RNG streams");
    sub->add_option("--threads", c.threads,
                    "worker threads (0 = all available cores)");
  };

  int exit_code = 0;

  // ---- bell-sweep ----------------------------------------------------
  auto* bell = app.add_subcommand("bell-sweep",
                                  "min/max Hamiltonian non-Hermiticity over "
                                  "random imperfect-Bell realizations");
  struct {
    Common c;
    std::string alphabar = "0:1:21";
    int realizations = 1000;
  } bs;
  add_common(bell, bs.c);
  bell->add_option("--alphabar", bs.alphabar, "alphabar grid start:stop:count");
  bell->add_option("--realizations", bs.realizations, "draws per grid point");
  bell->callback([&] {
    detail::RunContext ctx{"bell-sweep", bs.c.out, bs.c.seed, bs.c.threads, {}};
    ctx.config_echo = {{"alphabar", bs.alphabar},
                       {"realizations", std::to_string(bs.realizations)},
                       {"seed", std::to_string(bs.c.seed)},
                       {"threads", std::to_string(bs.c.threads)},
                       {"out", bs.c.out}};
    auto grid = parse_range(bs.alphabar);
    auto points = bell_ensemble_sweep(grid, bs.realizations, bs.c.seed, bs.c.threads);
    CsvWriter csv(bs.c.out);
    csv.header({"alphabar", "D_min", "D_max"});
    for (const auto& p : points)
      csv.row({format_double(p.alphabar), format_double(p.d_min), format_double(p.d_max)});
    csv.close();
    ctx.finish({{"rows", std::to_string(points.size())}});
  });

  // ---- hn-sweep ------------------------------------------------------
  auto* hn = app.add_subcommand("hn-sweep",
                                "distance and score maps of the interacting "
                                "asymmetric-hopping ring on a (chi, V) grid");
  struct {
    Common c;
    int n = 12;
    std::string chi = "0:5.4:41";
    std::string v = "1e-1:1e5:49log";
    double ep_threshold = 1e8;
    double eth = 0.1;
    bool no_wrap = false;
  } hs;
  add_common(hn, hs.c);
  hn->add_option("--N", hs.n, "sites (even)");
  hn->add_option("--chi", hs.chi, "chi grid start:stop:count");
  hn->add_option("--V", hs.v, "V grid start:stop:count[log]");
  hn->add_option("--ep-threshold", hs.ep_threshold, "condition threshold for ep flags");
  hn->add_option("--eth", hs.eth, "score threshold for the count aggregations");
  hn->add_flag("--no-wrap", hs.no_wrap, "drop the n_N n_1 boundary interaction pair");
  hn->callback([&] {
    detail::RunContext ctx{"hn-sweep", hs.c.out, hs.c.seed, hs.c.threads, {}};
    ctx.config_echo = {{"N", std::to_string(hs.n)},
                       {"chi", hs.chi},
                       {"V", hs.v},
                       {"ep-threshold", format_double(hs.ep_threshold)},
                       {"eth", format_double(hs.eth)},
                       {"no-wrap", detail::bool_str(hs.no_wrap)},
                       {"seed", std::to_string(hs.c.seed)},
                       {"threads", std::to_string(hs.c.threads)},
                       {"out", hs.c.out}};
    HNSweepConfig cfg;
    cfg.n_sites = hs.n;
    cfg.chi_grid = parse_range(hs.chi);
    cfg.v_grid = parse_range(hs.v);
    cfg.ep_threshold = hs.ep_threshold;
    cfg.e_th = hs.eth;
    cfg.wrap_interaction = !hs.no_wrap;
    cfg.threads = hs.c.threads;
    HNSweepResult res = hn_sweep(cfg);
    CsvWriter csv(hs.c.out);
    csv.header({"chi", "V", "D_op", "D_frob", "D_unnorm", "SCn_max", "SCS_max",
                "SCI_max", "Gn_scaled", "GS_scaled", "delta01", "ep_flag"});
    detail::MetaRows errors;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < res.cells.size(); ++i) {
      const HNCell& c = res.cells[i];
      const bool bad = c.errored;
      auto val = [&](double x) { return format_double(bad ? nan : x); };
      csv.row({format_double(c.chi), format_double(c.v), val(c.d_op), val(c.d_frob),
               val(c.d_unnorm), val(c.scn_max), val(c.scs_max), val(c.sci_max),
               val(c.gn_scaled), val(c.gs_scaled), val(c.delta01),
               bad ? "nan" : detail::bool_str(c.ep_flag)});
      if (bad) errors.emplace_back("cell_error." + std::to_string(i), c.error_msg);
    }
    csv.close();
    detail::MetaRows extra{{"rows", std::to_string(res.cells.size())},
                           {"ep_flag_rate", format_double(res.ep_flag_rate)}};
    for (auto& e : errors) extra.push_back(e);
    ctx.finish(extra);
    if (!errors.empty())
      throw error(std::to_string(errors.size()) + " sweep cells errored (see sidecar)");
  });

  // ---- bell-evolve ---------------------------------------------------
  auto* ev = app.add_subcommand("bell-evolve",
                                "time series of purity and entropy scores for "
                                "a Werner state under the imperfect-Bell model");
  struct {
    Common c;
    double alpha = 0.9;
    double delta = 0.5;
    std::string lambdas = "0.1,0.2,0.3,0.4";
    std::string times = "0:100:501";
  } es;
  add_common(ev, es.c);
  ev->add_option("--alpha", es.alpha, "imperfection parameter in (0, 1]");
  ev->add_option("--delta", es.delta, "Werner mixing parameter in [0, 1]");
  ev->add_option("--lambdas", es.lambdas, "four eigenvalues, comma separated");
  ev->add_option("--times", es.times, "time grid start:stop:count");
  ev->callback([&] {
    detail::RunContext ctx{"bell-evolve", es.c.out, es.c.seed, es.c.threads, {}};
    ctx.config_echo = {{"alpha", format_double(es.alpha)},
                       {"delta", format_double(es.delta)},
                       {"lambdas", es.lambdas},
                       {"times", es.times},
                       {"seed", std::to_string(es.c.seed)},
                       {"threads", std::to_string(es.c.threads)},
                       {"out", es.c.out}};
    auto lam = parse_list(es.lambdas);
    if (lam.size() != 4) throw config_error("bell-evolve: need exactly 4 lambdas");
    auto times = parse_range(es.times);
    BellModelParams p{es.alpha, {lam[0], lam[1], lam[2], lam[3]}};
    auto sys = diagonalize(build_bell_hamiltonian(p));
    DensityMatrix rho0 =
        DensityMatrix::from_matrix(werner_state(es.delta).mat(), kQubit2Tag);
    auto sc_p = score_timeseries(purity_functional(), sys, times, rho0);
    auto sc_s = score_timeseries(global_vne(), sys, times, rho0);
    CsvWriter csv(es.c.out);
    csv.header({"t", "SC_P", "SC_S"});
    for (std::size_t i = 0; i < times.size(); ++i)
      csv.row({format_double(times[i]), format_double(sc_p[i].second),
               format_double(sc_s[i].second)});
    csv.close();
    ctx.finish({{"rows", std::to_string(times.size())}});
  });

  // ---- delta01 -------------------------------------------------------
  auto* d01 = app.add_subcommand("delta01",
                                 "level spacing Re(lambda_1 - lambda_0) along V "
                                 "at fixed chi, with kink location");
  struct {
    Common c;
    int n = 12;
    double chi = 2.5;
    std::string v = "1:1e3:33log";
    bool no_wrap = false;
  } ds;
  add_common(d01, ds.c);
  d01->add_option("--N", ds.n, "sites (even)");
  d01->add_option("--chi", ds.chi, "fixed chi");
  d01->add_option("--V", ds.v, "V grid start:stop:count[log]");
  d01->add_flag("--no-wrap", ds.no_wrap, "drop the boundary interaction pair");
  d01->callback([&] {
    detail::RunContext ctx{"delta01", ds.c.out, ds.c.seed, ds.c.threads, {}};
    ctx.config_echo = {{"N", std::to_string(ds.n)},
                       {"chi", format_double(ds.chi)},
                       {"V", ds.v},
                       {"no-wrap", detail::bool_str(ds.no_wrap)},
                       {"seed", std::to_string(ds.c.seed)},
                       {"threads", std::to_string(ds.c.threads)},
                       {"out", ds.c.out}};
    auto scan = delta01_scan(parse_range(ds.v), ds.chi, ds.n, !ds.no_wrap, ds.c.threads);
    CsvWriter csv(ds.c.out);
    csv.header({"V", "delta01"});
    for (std::size_t i = 0; i < scan.v_grid.size(); ++i)
      csv.row({format_double(scan.v_grid[i]), format_double(scan.delta01[i])});
    csv.close();
    ctx.finish({{"kink_V", format_double(scan.kink_v)},
                {"kink_index", std::to_string(scan.kink_index)},
                {"kink_err_lo", format_double(scan.kink_err_lo)},
                {"kink_err_hi", format_double(scan.kink_err_hi)},
                {"exact_degeneracy", detail::bool_str(scan.exact_degeneracy)}});
  });

  // ---- fss -----------------------------------------------------------
  auto* fss = app.add_subcommand("fss",
                                 "finite-size extrapolation of the distance "
                                 "crossover and the level-spacing kink");
  struct {
    Common c;
    std::string sizes = "4,6,8,10,12";
    double chi = 2.5;
    std::string v = "1e-1:1e2:33log";
    std::string fit_form = "invN";
    bool no_wrap = false;
  } fs;
  add_common(fss, fs.c);
  fss->add_option("--sizes", fs.sizes, "even system sizes, comma separated");
  fss->add_option("--chi", fs.chi, "fixed chi");
  fss->add_option("--V", fs.v, "V grid start:stop:count[log]");
  fss->add_option("--fit-form", fs.fit_form, "invN or invN2");
  fss->add_flag("--no-wrap", fs.no_wrap, "drop the boundary interaction pair");
  fss->callback([&] {
    detail::RunContext ctx{"fss", fs.c.out, fs.c.seed, fs.c.threads, {}};
    ctx.config_echo = {{"sizes", fs.sizes},
                       {"chi", format_double(fs.chi)},
                       {"V", fs.v},
                       {"fit-form", fs.fit_form},
                       {"no-wrap", detail::bool_str(fs.no_wrap)},
                       {"seed", std::to_string(fs.c.seed)},
                       {"threads", std::to_string(fs.c.threads)},
                       {"out", fs.c.out}};
    FitForm form;
    if (fs.fit_form == "invN") form = FitForm::inv_n;
    else if (fs.fit_form == "invN2") form = FitForm::inv_n2;
    else throw config_error("fss: --fit-form must be invN or invN2");
    std::vector<int> sizes;
    for (double s : parse_list(fs.sizes)) {
      if (s != std::floor(s)) throw config_error("fss: sizes must be integers");
      sizes.push_back(static_cast<int>(s));
    }
    FssResult res = fss_extrapolate(sizes, fs.chi, parse_range(fs.v), form,
                                    !fs.no_wrap, fs.c.threads);
    CsvWriter csv(fs.c.out);
    csv.header({"N", "Vc_Dprime", "Vc_delta01"});
    for (std::size_t i = 0; i < sizes.size(); ++i)
      csv.row({std::to_string(sizes[i]), format_double(res.vc_dprime[i]),
               format_double(res.vc_delta[i])});
    csv.close();
    ctx.finish({{"intercept_Dprime_V", format_double(res.fit_dprime_v.intercept)},
                {"intercept_Dprime_V_se", format_double(res.fit_dprime_v.intercept_se)},
                {"intercept_delta01_V", format_double(res.fit_delta_v.intercept)},
                {"intercept_delta01_V_se", format_double(res.fit_delta_v.intercept_se)},
                {"intercept_Dprime_log10V", format_double(res.fit_dprime_log.intercept)},
                {"intercept_Dprime_log10V_se", format_double(res.fit_dprime_log.intercept_se)},
                {"intercept_delta01_log10V", format_double(res.fit_delta_log.intercept)},
                {"intercept_delta01_log10V_se", format_double(res.fit_delta_log.intercept_se)},
                {"z_V", format_double(res.z_v)},
                {"z_log10V", format_double(res.z_log)}});
  });

  // ---- trajectory-check ------------------------------------------------
  auto* traj = app.add_subcommand("trajectory-check",
                                  "postselected-dilation oracle vs the exact "
                                  "propagator at a sequence of step sizes");
  struct {
    Common c;
    std::string model = "bell";
    double alpha = 0.5;
    std::string lambdas = "0.3,-0.4,1.1,0.7";
    int n = 4;
    double chi = 0.5;
    double v = 1.0;
    double t_final = 1.0;
    std::string dts = "1e-3,5e-4,2.5e-4";
  } ts;
  add_common(traj, ts.c);
  traj->add_option("--model", ts.model, "bell or hn");
  traj->add_option("--alpha", ts.alpha, "bell: imperfection parameter");
  traj->add_option("--lambdas", ts.lambdas, "bell: four eigenvalues");
  traj->add_option("--N", ts.n, "hn: sites (even)");
  traj->add_option("--chi", ts.chi, "hn: hopping asymmetry");
  traj->add_option("--V", ts.v, "hn: interaction strength");
  traj->add_option("--T", ts.t_final, "final time");
  traj->add_option("--dts", ts.dts, "step sizes, comma separated");
  traj->callback([&] {
    detail::RunContext ctx{"trajectory-check", ts.c.out, ts.c.seed, ts.c.threads, {}};
    ctx.config_echo = {{"model", ts.model},
                       {"alpha", format_double(ts.alpha)},
                       {"lambdas", ts.lambdas},
                       {"N", std::to_string(ts.n)},
                       {"chi", format_double(ts.chi)},
                       {"V", format_double(ts.v)},
                       {"T", format_double(ts.t_final)},
                       {"dts", ts.dts},
                       {"seed", std::to_string(ts.c.seed)},
                       {"threads", std::to_string(ts.c.threads)},
                       {"out", ts.c.out}};
    Operator h = Operator::identity(1, "none");
    DensityMatrix rho0 = DensityMatrix::maximally_mixed(1, "none");
    if (ts.model == "bell") {
      auto lam = parse_list(ts.lambdas);
      if (lam.size() != 4) throw config_error("trajectory-check: need exactly 4 lambdas");
      h = build_bell_hamiltonian({ts.alpha, {lam[0], lam[1], lam[2], lam[3]}});
      rho0 = DensityMatrix::maximally_mixed(4, kQubit2Tag);
    } else if (ts.model == "hn") {
      SectorBasis basis = build_sector_basis(ts.n, ts.n / 2);
      HNParams p{ts.n, 1.0, ts.chi, ts.v};
      h = effective_hamiltonian(build_jump_operators(p, basis, -1));
      rho0 = DensityMatrix::maximally_mixed(basis.dim(), basis.tag());
    } else {
      throw config_error("trajectory-check: --model must be bell or hn");
    }
    auto exact = evolve_ensemble(diagonalize(h), {{ts.t_final}, rho0, Side::right})[0];
    CsvWriter csv(ts.c.out);
    csv.header({"model", "dt", "error", "ratio_prev"});
    double prev = -1.0, shift = 0.0;
    for (double dt : parse_list(ts.dts)) {
      const int steps = static_cast<int>(std::llround(ts.t_final / dt));
      TrajectoryResult tr = postselected_trajectory(h, rho0, {dt, steps});
      const double err = (tr.state.mat() - exact.mat()).norm();
      csv.row({ts.model, format_double(dt), format_double(err),
               prev > 0 ? format_double(prev / err) : "nan"});
      prev = err;
      shift = tr.shift;
    }
    csv.close();
    ctx.finish({{"spectral_shift", format_double(shift)}});
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const io_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return exit_code;
}

}  // namespace nhqm::cli
