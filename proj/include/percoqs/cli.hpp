#pragma once

// Command-line front end. Exit codes: 0 ok, 1 usage, 2 capacity, 3 IO,
// 4 failed check.

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "percoqs/analysis.hpp"
#include "percoqs/errors.hpp"
#include "percoqs/experiments.hpp"
#include "percoqs/io.hpp"
#include "percoqs/percolation.hpp"
#include "percoqs/render.hpp"

namespace percoqs {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitCapacity = 2, kExitIo = 3, kExitCheckFailed = 4 };

inline constexpr const char* kNodeBudgetEnv = "PERCOQS_NODE_BUDGET";

struct RunConfig {
  int M = 3;
  int d = 2;
  double p = 0.7;
  int K = 1;
  std::string eta;  // labels separated by ',' or '.'; empty selects the centre label K times
  std::uint64_t seed = 42;
  int depth = -1;
  std::size_t trials = 0;
  unsigned workers = 1;
  std::string out;
  // command-specific
  std::string in;
  std::string csv;
  std::vector<int> levels;
  bool image = false;
  bool nonextinct = false;
  std::vector<double> s_values;
  std::optional<double> s;
  std::size_t trees = 0;
  std::size_t pairs = 0;
  std::string sampling = "uniform";

  int depth_or(int def) const { return depth >= 0 ? depth : def; }
  std::size_t trials_or(std::size_t def) const { return trials > 0 ? trials : def; }
  std::size_t trees_or(std::size_t def) const { return trees > 0 ? trees : def; }
};

inline Word parse_eta(const std::string& text) {
  Word w;
  std::string tok;
  std::istringstream ss(text);
  while (std::getline(ss, tok, text.find(',') != std::string::npos ? ',' : '.')) {
    if (tok.empty()) continue;
    try {
      std::size_t pos = 0;
      const unsigned long v = std::stoul(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      w.push_back(static_cast<Label>(v));
    } catch (const std::exception&) {
      throw DomainError("bad eta label '" + tok + "'");
    }
  }
  return w;
}

inline Params resolve_params(const RunConfig& c) {
  Word eta = c.eta.empty() ? Word{} : parse_eta(c.eta);
  Params pr = make_params(c.d, c.M, c.p, c.K, std::move(eta));
  pr.validate();
  Lattice lat(pr);
  lat.check_word(pr.eta);
  return pr;
}

inline SampleOptions resolve_sampling(const RunConfig& c) {
  SampleOptions opt;
  opt.workers = std::max(1u, c.workers);
  if (const char* env = std::getenv(kNodeBudgetEnv)) {
    try {
      std::size_t pos = 0;
      const std::string s(env);
      opt.node_budget = std::stoull(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw DomainError(std::string(kNodeBudgetEnv) + " must be a positive integer");
    }
  }
  return opt;
}

/// Resolved configuration embedded in reports. The worker count is left
/// out: it never changes results.
inline Json config_json(const Params& pr, const RunConfig& c) {
  Json j = params_to_json(pr);
  j["seed"] = c.seed;
  return j;
}

inline void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_text(path, text);
}

inline int finish_report(const Report& r, const RunConfig& c, std::ostream& out, std::ostream& err) {
  emit(c.out, dump_canonical(r.to_json()), out);
  for (const auto& ch : r.checks)
    err << ch.at("name").get<std::string>() << ": " << (ch.at("pass").get<bool>() ? "PASS" : "FAIL") << " ("
        << ch.at("detail").get<std::string>() << ")\n";
  if (!r.all_pass()) {
    err << "failed check(s):";
    for (const auto& f : r.failures()) err << ' ' << f;
    err << "\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

inline std::string fmt_detail(std::initializer_list<std::pair<const char*, double>> kv) {
  std::ostringstream ss;
  bool first = true;
  for (const auto& [k, v] : kv) {
    ss << (first ? "" : ", ") << k << "=" << fmt_double(v);
    first = false;
  }
  return ss.str();
}

inline int cmd_sample(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  const int depth = c.depth_or(5);
  const SampleOptions opt = resolve_sampling(c);
  std::uint64_t rejections = 0;
  PercTree tree = c.nonextinct ? [&] {
    auto s = sample_nonextinct(pr, depth, c.seed, opt);
    rejections = s.rejections;
    return std::move(s.tree);
  }()
                               : sample_tree(pr, depth, c.seed, opt);
  const bool to_stdout = c.out.empty() || c.out == "-";
  emit(c.out, dump_canonical(tree_to_json(tree)), out);
  std::ostream& log = to_stdout ? err : out;
  for (int k = 0; k <= depth; ++k) log << "level " << k << ": " << tree.count(k) << "\n";
  if (c.nonextinct) log << "rejections: " << rejections << " (accepted seed " << tree.seed() << ")\n";
  return kExitOk;
}

inline int cmd_render(const RunConfig& c, std::ostream& out, std::ostream&) {
  RenderOptions ro;
  ro.image = c.image;
  std::optional<PercTree> tree;
  if (!c.in.empty()) {
    tree.emplace(load_tree(c.in));
  } else {
    const Params pr = resolve_params(c);
    tree.emplace(sample_tree(pr, c.depth_or(3), c.seed, resolve_sampling(c)));
  }
  if (!c.levels.empty()) {
    ro.levels = c.levels;
  } else {
    ro.levels.clear();
    for (int k = 1; k <= std::min(3, tree->depth()); ++k) ro.levels.push_back(k);
    if (ro.levels.empty()) ro.levels.push_back(0);
  }
  emit(c.out, render_svg(*tree, ro), out);
  return kExitOk;
}

inline Json dim_report_json(const DimReport& r) {
  return Json{{"s_hausdorff", r.s_hausdorff}, {"t_upper", r.t_upper},     {"kappa_at_t", r.kappa_at_t},
              {"gap", r.gap},                 {"gap_bound", r.gap_bound}, {"K", r.K},
              {"residual", r.residual},       {"bracketed", r.bracketed}, {"subcritical", r.subcritical}};
}

inline int cmd_solve_t(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  const DimReport r = solve_t(pr, pr.K);
  Report rep;
  rep.command = "solve t";
  rep.config = config_json(pr, c);
  rep.results = dim_report_json(r);
  if (r.subcritical) err << "warning: p <= M^-d, the limit set is almost surely empty\n";
  rep.add_check("solver_residual", r.residual <= kSolverResidual, fmt_detail({{"residual", r.residual}}));
  if (!r.subcritical)
    // A drop under one ulp leaves t_upper == s_hausdorff in double; the gap stays exact.
    rep.add_check("t_below_s", r.gap > 0.0 && r.t_upper <= r.s_hausdorff,
                  fmt_detail({{"t_upper", r.t_upper}, {"s_hausdorff", r.s_hausdorff}, {"gap", r.gap}}));
  return finish_report(rep, c, out, err);
}

struct EpsilonRow {
  int M, d;
  double published;
};
inline const std::vector<EpsilonRow>& epsilon_table() {
  static const std::vector<EpsilonRow> rows{{3, 2, 0.00389}, {4, 2, 0.00556}, {5, 2, 0.00608}, {3, 3, 0.00157}, {4, 3, 0.00240}};
  return rows;
}

inline int cmd_solve_epsilon(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Report rep;
  rep.command = "solve epsilon-table";
  Json rows = Json::array();
  std::vector<SeriesRow> csv;
  for (const auto& row : epsilon_table()) {
    const EpsilonResult e = solve_epsilon(row.M, row.d);
    rows.push_back(Json{{"M", row.M}, {"d", row.d}, {"p_star", e.p_star}, {"epsilon", e.epsilon},
                        {"published", row.published}, {"residual", e.residual}});
    err << "M=" << row.M << " d=" << row.d << " epsilon=" << fmt_double(e.epsilon) << "\n";
    const std::string tag = "M" + std::to_string(row.M) + "d" + std::to_string(row.d);
    rep.add_check("epsilon_" + tag, std::abs(e.epsilon - row.published) <= 1e-5,
                  fmt_detail({{"epsilon", e.epsilon}, {"published", row.published}}));
    csv.push_back(SeriesRow{"epsilon_" + tag, 0.0, 0, e.epsilon, 0.0, 0});
  }
  rep.results["rows"] = rows;
  if (!c.csv.empty()) write_text(c.csv, series_csv(csv));
  return finish_report(rep, c, out, err);
}

inline int cmd_solve_kappa(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  std::vector<double> ss = c.s_values.empty() ? std::vector<double>{0.0, 0.5, 1.0, 1.5, 2.0} : c.s_values;
  Report rep;
  rep.command = "solve kappa";
  rep.config = config_json(pr, c);
  Json rows = Json::array();
  std::vector<SeriesRow> csv;
  for (double s : ss) {
    const double k = kappa(pr, s, pr.K);
    rows.push_back(Json{{"s", s}, {"kappa", k}, {"growth", growth_factor(pr, s, pr.K)}});
    csv.push_back(SeriesRow{"kappa", s, 0, k, 0.0, 0});
  }
  rep.results["rows"] = rows;
  rep.results["kappa_prime"] = kappa_prime(pr);
  if (!c.csv.empty()) write_text(c.csv, series_csv(csv));
  return finish_report(rep, c, out, err);
}

inline int cmd_check_oracle(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  std::vector<double> ss = c.s_values;
  if (ss.empty())
    for (int k = 1; k <= 8; ++k) ss.push_back(0.25 * k);
  Report rep;
  rep.command = "check oracle";
  rep.config = config_json(pr, c);
  double worst = 0.0;
  Json rows = Json::array();
  for (double s : ss) {
    const double enumerated = level1_oracle(pr, s, pr.K);
    const double closed = growth_factor(pr, s, pr.K);
    worst = std::max(worst, std::abs(enumerated - closed));
    rows.push_back(Json{{"s", s}, {"enumerated", enumerated}, {"closed_form", closed}});
  }
  rep.results["rows"] = rows;
  rep.results["max_residual"] = worst;
  rep.add_check("oracle_residual", worst <= 1e-12, fmt_detail({{"max_residual", worst}}));
  return finish_report(rep, c, out, err);
}

inline int cmd_check_martingale(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  const int depth = c.depth_or(4);
  const std::size_t trials = c.trials_or(10000);
  const SampleOptions opt = resolve_sampling(c);
  const DimReport dr = solve_t(pr, pr.K);
  const double s = c.s.value_or(dr.t_upper);
  const auto sample = sample_nonextinct(pr, depth, c.seed, opt);
  const FlaggedTree ft(sample.tree);
  const MartingaleResult m = martingale_check(ft, s, trials, opt.workers);
  Report rep;
  rep.command = "check martingale";
  rep.config = config_json(pr, c);
  rep.config["depth"] = depth;
  rep.config["trials"] = trials;
  rep.config["s"] = s;
  rep.results = Json{{"tree_seed", ft.tree().seed()}, {"y_n", m.y_n},       {"mean", m.mean},
                     {"stderr", m.stderr_},          {"theory", m.theory}, {"ratio", m.ratio},
                     {"ratio_stderr", m.ratio_stderr}, {"z", m.z},        {"t_upper", dr.t_upper}};
  rep.add_check("conditional_mean_3sigma", m.within(3.0), fmt_detail({{"ratio", m.ratio}, {"z", m.z}}));
  if (!c.csv.empty())
    write_text(c.csv, series_csv({SeriesRow{"Y", s, depth, m.y_n, 0.0, 1},
                                  SeriesRow{"Y_next_mean", s, depth + 1, m.mean, m.stderr_, trials}}));
  return finish_report(rep, c, out, err);
}

inline int cmd_check_qs(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  const int depth = c.depth_or(8);
  const int shallow = std::min(5, depth);
  const std::size_t trees = c.trees_or(20);
  const std::size_t triples = c.trials_or(10000);
  const TripleSampling mode = c.sampling == "multiscale" ? TripleSampling::multiscale : TripleSampling::uniform;
  if (c.sampling != "uniform" && c.sampling != "multiscale") throw DomainError("--sampling must be uniform or multiscale");
  const QsExperiment ex = qs_experiment(pr, trees, depth, shallow, triples, c.seed, mode, resolve_sampling(c));
  const double bound = std::pow(static_cast<double>(pr.M), pr.K + 3);
  Report rep;
  rep.command = "check qs";
  rep.config = config_json(pr, c);
  rep.config["depth"] = depth;
  rep.config["shallow_depth"] = shallow;
  rep.config["trees"] = trees;
  rep.config["triples"] = triples;
  rep.config["sampling"] = c.sampling;
  std::size_t degenerate = 0, evaluated = 0;
  for (const auto& s : ex.deep) {
    degenerate += s.degenerate;
    evaluated += s.evaluated;
  }
  rep.results = Json{{"c_emp_deep", ex.c_deep},
                     {"c_emp_shallow", ex.c_shallow},
                     {"comparability_min", ex.comparability_min},
                     {"comparability_max", ex.comparability_max},
                     {"evaluated", evaluated},
                     {"degenerate", degenerate},
                     {"violations", ex.violations}};
  rep.add_check("control_function_holds", ex.violations == 0, fmt_detail({{"violations", double(ex.violations)}}));
  rep.add_check("c_emp_bounded", ex.c_deep <= bound, fmt_detail({{"c_emp", ex.c_deep}, {"bound", bound}}));
  rep.add_check("c_emp_stable", ex.c_deep <= 1.5 * ex.c_shallow,
                fmt_detail({{"deep", ex.c_deep}, {"shallow", ex.c_shallow}}));
  return finish_report(rep, c, out, err);
}

inline int cmd_check_dims(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  const int depth = c.depth_or(6);
  const std::size_t trees = c.trials_or(200);
  const DimsExperiment ex = dims_experiment(pr, trees, depth, c.seed, 200, resolve_sampling(c));
  const DimEstimate& e = ex.estimate;
  Report rep;
  rep.command = "check dims";
  rep.config = config_json(pr, c);
  rep.config["depth"] = depth;
  rep.config["trees"] = trees;
  rep.results = Json{{"s_hat", e.s_hat},
                     {"t_hat", e.t_hat},
                     {"s_ci", {e.s_ci.first, e.s_ci.second}},
                     {"t_ci", {e.t_ci.first, e.t_ci.second}},
                     {"slope_at_s_hat", e.slope_at_s_hat},
                     {"widened", e.widened},
                     {"flagged", e.flagged},
                     {"rejections", ex.rejections},
                     {"theory", dim_report_json(ex.theory)}};
  err << "s_hat=" << fmt_double(e.s_hat) << " t_hat=" << fmt_double(e.t_hat) << "\n";
  rep.add_check("t_hat_below_s_hat", e.t_hat < e.s_hat, fmt_detail({{"t_hat", e.t_hat}, {"s_hat", e.s_hat}}));
  rep.add_check("s_hat_near_s", std::abs(e.s_hat - ex.theory.s_hausdorff) <= 0.05,
                fmt_detail({{"s_hat", e.s_hat}, {"s_hausdorff", ex.theory.s_hausdorff}}));
  rep.add_check("t_hat_near_t", std::abs(e.t_hat - ex.theory.t_upper) <= 0.05,
                fmt_detail({{"t_hat", e.t_hat}, {"t_upper", ex.theory.t_upper}}));
  if (!c.csv.empty()) {
    std::vector<SeriesRow> rows;
    std::vector<std::size_t> all(ex.series.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    for (int n = 0; n <= depth; ++n) {
      double sum_n = 0.0, sum_y = 0.0;
      for (const auto& ts : ex.series) {
        sum_n += static_cast<double>(ts.counts[static_cast<std::size_t>(n)]);
        sum_y += y_of(ts, n, e.t_hat, pr.M);
      }
      const double S = static_cast<double>(ex.series.size());
      rows.push_back(SeriesRow{"N", 0.0, n, sum_n / S, 0.0, ex.series.size()});
      rows.push_back(SeriesRow{"Y", e.t_hat, n, sum_y / S, 0.0, ex.series.size()});
    }
    write_text(c.csv, series_csv(rows));
  }
  return finish_report(rep, c, out, err);
}

inline int cmd_check_global(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Params pr = resolve_params(c);
  const int depth = c.depth_or(5);
  const std::size_t trees = c.trees_or(20);
  const std::size_t boundary = c.trials_or(10000);
  const std::size_t pairs = c.pairs > 0 ? c.pairs : 100000;
  const GlobalChecks gc = global_checks(pr, trees, depth, boundary, pairs, c.seed, resolve_sampling(c));
  const double spread_bound = std::pow(static_cast<double>(pr.M), pr.K + 2);
  Report rep;
  rep.command = "check global";
  rep.config = config_json(pr, c);
  rep.config["depth"] = depth;
  rep.config["trees"] = trees;
  rep.config["boundary_points"] = boundary;
  rep.config["pairs"] = pairs;
  rep.results = Json{{"boundary_max_error", gc.boundary_max_error},
                     {"branch_max_gap", gc.branch_max_gap},
                     {"lipschitz_lower", gc.lipschitz.lower},
                     {"lipschitz_upper", gc.lipschitz.upper},
                     {"lipschitz_spread", gc.lipschitz.spread()},
                     {"local_lipschitz_spread", gc.lipschitz_local.spread()},
                     {"corners", gc.corners},
                     {"corner_max_error", gc.corner_max_error}};
  rep.add_check("boundary_identity", gc.boundary_max_error == 0.0, fmt_detail({{"max_error", gc.boundary_max_error}}));
  rep.add_check("branches_agree", gc.branch_max_gap <= 1e-12, fmt_detail({{"max_gap", gc.branch_max_gap}}));
  rep.add_check("bi_lipschitz_spread", gc.lipschitz.spread() <= spread_bound,
                fmt_detail({{"spread", gc.lipschitz.spread()}, {"bound", spread_bound}}));
  rep.add_check("corner_agreement", gc.corner_max_error <= 1e-9, fmt_detail({{"max_error", gc.corner_max_error}}));
  return finish_report(rep, c, out, err);
}

inline void add_common(CLI::App* app, RunConfig& c) {
  app->add_option("--M", c.M, "subdivision base (>= 3)");
  app->add_option("--d", c.d, "dimension (>= 1)");
  app->add_option("--p", c.p, "survival probability in (0,1)");
  app->add_option("--K", c.K, "substitution word length (>= 1)");
  app->add_option("--eta", c.eta, "substitution word, labels joined by ',' or '.'");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--depth", c.depth, "tree depth");
  app->add_option("--trials", c.trials, "number of trials (command specific)");
  app->add_option("--workers", c.workers, "worker threads; never changes output");
  app->add_option("-o,--out", c.out, "output file ('-' or omitted: stdout)");
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  RunConfig c;
  CLI::App app{"Fractal percolation and the boundary-death substitution map"};
  app.require_subcommand(1);

  auto* sample = app.add_subcommand("sample", "sample a tree and write percoqs-tree/1 JSON");
  add_common(sample, c);
  sample->add_flag("--nonextinct", c.nonextinct, "reject seeds until the tree survives to depth");

  auto* render = app.add_subcommand("render", "render a planar tree as SVG panels");
  add_common(render, c);
  render->add_option("--in", c.in, "tree file (default: sample from the flags)");
  render->add_option("--levels", c.levels, "levels to draw")->delimiter(',');
  render->add_flag("--image", c.image, "draw the image cover instead of the survivors");

  auto* solve = app.add_subcommand("solve", "closed-form solvers");
  solve->require_subcommand(1);
  auto* solve_t_cmd = solve->add_subcommand("t", "dimension upper bound t");
  auto* solve_eps = solve->add_subcommand("epsilon-table", "epsilon(M,d) table");
  auto* solve_kappa = solve->add_subcommand("kappa", "kappa(s,K) values");
  for (auto* sc : {solve_t_cmd, solve_eps, solve_kappa}) {
    add_common(sc, c);
    sc->add_option("--csv", c.csv, "series CSV output");
  }
  solve_kappa->add_option("--s", c.s_values, "exponents")->delimiter(',');

  auto* check = app.add_subcommand("check", "verification experiments");
  check->require_subcommand(1);
  auto* ck_oracle = check->add_subcommand("oracle", "enumeration vs closed form");
  auto* ck_mart = check->add_subcommand("martingale", "frozen-tree resampling");
  auto* ck_qs = check->add_subcommand("qs", "quasisymmetry ratio scan");
  auto* ck_dims = check->add_subcommand("dims", "dimension estimates");
  auto* ck_global = check->add_subcommand("global", "global map properties");
  for (auto* sc : {ck_oracle, ck_mart, ck_qs, ck_dims, ck_global}) {
    add_common(sc, c);
    sc->add_option("--csv", c.csv, "series CSV output");
  }
  ck_oracle->add_option("--s", c.s_values, "exponents")->delimiter(',');
  ck_mart->add_option("--s", c.s, "exponent (default: t_upper)");
  ck_qs->add_option("--trees", c.trees, "number of trees");
  ck_qs->add_option("--sampling", c.sampling, "uniform or multiscale triples");
  ck_global->add_option("--trees", c.trees, "number of trees");
  ck_global->add_option("--pairs", c.pairs, "Lipschitz sample pairs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (sample->parsed()) return cmd_sample(c, out, err);
    if (render->parsed()) return cmd_render(c, out, err);
    if (solve_t_cmd->parsed()) return cmd_solve_t(c, out, err);
    if (solve_eps->parsed()) return cmd_solve_epsilon(c, out, err);
    if (solve_kappa->parsed()) return cmd_solve_kappa(c, out, err);
    if (ck_oracle->parsed()) return cmd_check_oracle(c, out, err);
    if (ck_mart->parsed()) return cmd_check_martingale(c, out, err);
    if (ck_qs->parsed()) return cmd_check_qs(c, out, err);
    if (ck_dims->parsed()) return cmd_check_dims(c, out, err);
    if (ck_global->parsed()) return cmd_check_global(c, out, err);
  } catch (const CapacityError& e) {
    err << "capacity error: " << e.what() << "\n";
    return kExitCapacity;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  err << "no command\n";
  return kExitUsage;
}

}  // namespace percoqs
