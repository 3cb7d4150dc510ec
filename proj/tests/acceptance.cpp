// Runs every acceptance criterion at its stated size and tolerance and prints
// one PASS/FAIL line each. Exit status is nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "percoqs/analysis.hpp"
#include "percoqs/cli.hpp"
#include "percoqs/experiments.hpp"
#include "percoqs/io.hpp"

using namespace percoqs;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail += (detail.empty() ? "" : "; ") + std::string(ok ? "" : "VIOLATED ") + what;
  }
};

std::string num(double x) {
  std::ostringstream ss;
  ss.precision(6);
  ss << x;
  return ss.str();
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

const Params kBase = make_params(2, 3, 0.7, 1);
constexpr std::uint64_t kMaster = 42;

Verdict epsilon_table() {
  Verdict v;
  const auto t0 = Clock::now();
  const struct {
    int M, d;
    double published;
  } rows[] = {{3, 2, 0.00389}, {4, 2, 0.00556}, {5, 2, 0.00608}, {3, 3, 0.00157}, {4, 3, 0.00240}};
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, std::abs(solve_epsilon(r.M, r.d).epsilon - r.published));
  const double dt = seconds_since(t0);
  v.require(worst <= 1e-5, "max |eps - published| = " + num(worst) + " <= 1e-5");
  v.require(dt < 1.0, "runtime " + num(dt) + " s < 1 s");
  return v;
}

Verdict oracle_grid() {
  Verdict v;
  for (auto [M, d, limit] : {std::tuple{3, 2, 10.0}, std::tuple{4, 2, 300.0}}) {
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (double p : {0.3, 0.5, 0.7})
      for (int K : {1, 2}) {
        const Params pr = make_params(d, M, p, K);
        for (int k = 1; k <= 8; ++k)
          worst = std::max(worst, std::abs(level1_oracle(pr, 0.25 * k, K) - growth_factor(pr, 0.25 * k, K)));
      }
    const double dt = seconds_since(t0);
    const std::string tag = "M^d=" + std::to_string(static_cast<int>(std::pow(M, d)));
    v.require(worst <= 1e-12, tag + " max error " + num(worst) + " <= 1e-12");
    v.require(dt < limit, tag + " runtime " + num(dt) + " s < " + num(limit) + " s");
  }
  return v;
}

Verdict solver_soundness() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20261016);
  std::size_t bad_residual = 0, bad_order = 0, bad_bound = 0, resolved = 0;
  double worst_residual = 0.0;
  for (int i = 0; i < 50; ++i) {
    const int M = std::uniform_int_distribution<int>(3, 5)(rng);
    const int d = std::uniform_int_distribution<int>(1, 3)(rng);
    const int K = std::uniform_int_distribution<int>(1, 4)(rng);
    const double pmin = std::pow(static_cast<double>(M), -d);
    double p = 0.0;
    while (p <= pmin || p >= 1.0) p = std::uniform_real_distribution<double>(pmin, 1.0)(rng);
    const DimReport r = solve_t(make_params(d, M, p, K), K);
    worst_residual = std::max(worst_residual, r.residual);
    if (r.residual > kSolverResidual) ++bad_residual;
    // Below one ulp t_upper rounds onto s_hausdorff; the drop itself must stay positive.
    if (!(r.t_upper > 0.0 && r.gap > 0.0 && r.t_upper <= r.s_hausdorff)) ++bad_order;
    if (r.t_upper < r.s_hausdorff) ++resolved;
    if (r.t_upper < r.gap_bound - 1e-12) ++bad_bound;
  }
  const double dt = seconds_since(t0);
  v.require(bad_residual == 0, "max residual " + num(worst_residual) + " <= 1e-12");
  v.require(bad_order == 0, "0 < t_upper < s_hausdorff in all 50 (" + std::to_string(resolved) +
                                " resolved in double, rest via positive drop)");
  v.require(bad_bound == 0, "t_upper >= gap bound in all 50");
  v.require(dt < 5.0, "runtime " + num(dt) + " s < 5 s");
  return v;
}

Verdict branching_mean() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto stats = expectation_series(kBase, 5, 2000, kMaster, {});
  double worst = 0.0;
  for (const auto& st : stats)
    if (st.quantity == "N") worst = std::max(worst, std::abs(st.z()));
  const double dt = seconds_since(t0);
  v.require(worst <= 3.0, "max |z| over n<=5 = " + num(worst) + " <= 3");
  v.require(dt < 60.0, "runtime " + num(dt) + " s < 60 s");
  return v;
}

Verdict martingale_property() {
  Verdict v;
  const auto t0 = Clock::now();
  const double t = solve_t(kBase, 1).t_upper;
  const FlaggedTree ft(sample_nonextinct(kBase, 4, kMaster).tree);
  const MartingaleResult m = martingale_check(ft, t, 10000);
  const double dt = seconds_since(t0);
  v.require(m.within(3.0), "ratio " + num(m.ratio) + " +- " + num(m.ratio_stderr) + " (z=" + num(m.z) + ") within 3 sigma of 1");
  v.require(dt < 120.0, "runtime " + num(dt) + " s < 120 s");
  return v;
}

Verdict dimension_drop() {
  Verdict v;
  const auto t0 = Clock::now();
  const DimsExperiment ex = dims_experiment(kBase, 200, 6, kMaster);
  const DimEstimate& e = ex.estimate;
  const double dt = seconds_since(t0);
  v.require(std::abs(e.s_hat - 1.675) <= 0.05, "s_hat " + num(e.s_hat) + " in 1.675 +- 0.05");
  v.require(e.t_hat < e.s_hat, "t_hat " + num(e.t_hat) + " < s_hat");
  v.require(std::abs(e.t_hat - ex.theory.t_upper) <= 0.05, "|t_hat - t_upper| <= 0.05 (t_upper " + num(ex.theory.t_upper) + ")");
  v.require(dt < 600.0, "runtime " + num(dt) + " s < 600 s");
  return v;
}

Verdict quasisymmetry() {
  Verdict v;
  const auto t0 = Clock::now();
  const QsExperiment ex = qs_experiment(kBase, 20, 8, 5, 10000, kMaster, TripleSampling::uniform);
  const double dt = seconds_since(t0);
  const double bound = std::pow(3.0, kBase.K + 3);
  v.require(ex.violations == 0, std::to_string(ex.violations) + " control-function violations");
  v.require(ex.c_deep <= bound, "C_emp " + num(ex.c_deep) + " <= " + num(bound));
  v.require(ex.c_deep <= 1.5 * ex.c_shallow, "C_emp(8) <= 1.5 C_emp(5) = " + num(1.5 * ex.c_shallow));
  v.require(dt < 300.0, "runtime " + num(dt) + " s < 300 s");
  return v;
}

Verdict structural() {
  Verdict v;
  const auto t0 = Clock::now();
  std::size_t words = 0, dup = 0, conj = 0, conj_bad = 0, face_pairs = 0, face_bad = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const FlaggedTree ft(sample_nonextinct(kBase, 8, tree_seed(kMaster, i)).tree);
    const InjectivityResult inj = tilde_injectivity(ft);
    words += inj.words;
    dup += inj.duplicates;
    const auto [checked, bad] = conjugation_check(ft, 1);
    conj += checked;
    conj_bad += bad;
    const FaceCheck fc = shared_face_check(ft);
    face_pairs += fc.pairs;
    face_bad += fc.violations;
  }
  const double dt = seconds_since(t0);
  v.require(dup == 0, "tilde injective on " + std::to_string(words) + " survivor words");
  v.require(conj_bad == 0, "conjugation identity on " + std::to_string(conj) + " level-1 splits");
  v.require(face_bad == 0, "shared-face bound on " + std::to_string(face_pairs) + " pairs");
  v.require(dt < 120.0, "runtime " + num(dt) + " s < 120 s");
  return v;
}

Verdict global_map() {
  Verdict v;
  const auto t0 = Clock::now();
  const GlobalChecks gc = global_checks(kBase, 20, 5, 10000, 100000, kMaster);
  const double dt = seconds_since(t0);
  const double bound = std::pow(3.0, kBase.K + 2);
  v.require(gc.boundary_max_error == 0.0, "boundary error " + num(gc.boundary_max_error) + " == 0");
  v.require(gc.branch_max_gap <= 1e-12, "branch gap " + num(gc.branch_max_gap) + " <= 1e-12");
  v.require(gc.lipschitz.spread() <= bound, "bi-Lipschitz ratio " + num(gc.lipschitz.spread()) + " <= " + num(bound));
  v.require(gc.corner_max_error <= 1e-9, "corner error " + num(gc.corner_max_error) + " <= 1e-9 over " +
                                             std::to_string(gc.corners) + " corners");
  v.require(dt < 120.0, "runtime " + num(dt) + " s < 120 s");
  return v;
}

std::string cli_output(std::vector<std::string> args) {
  args.insert(args.begin(), "percoqs");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return out.str();
}

Verdict determinism() {
  Verdict v;
  const std::vector<std::vector<std::string>> commands = {
      {"sample", "--depth", "6", "--seed", "7"},
      {"sample", "--depth", "5", "--nonextinct", "--p", "0.3", "--seed", "3"},
      {"check", "martingale", "--depth", "3", "--trials", "500"},
      {"check", "qs", "--trees", "2", "--depth", "6", "--trials", "2000"},
      {"check", "global", "--trees", "2", "--depth", "4", "--trials", "500", "--pairs", "5000"},
  };
  for (const auto& cmd : commands) {
    std::string name;
    for (const auto& a : cmd) name += (name.empty() ? "" : " ") + a;
    std::vector<std::string> outs;
    for (const char* w : {"1", "4", "16"}) {
      auto args = cmd;
      args.insert(args.end(), {"--workers", w});
      outs.push_back(cli_output(args));
    }
    v.require(!outs[0].empty() && outs[0] == outs[1] && outs[0] == outs[2], "identical bytes for '" + name + "'");
  }
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, Verdict (*)()>> criteria = {
      {"epsilon table", epsilon_table},
      {"closed form vs enumeration", oracle_grid},
      {"solver soundness", solver_soundness},
      {"branching mean", branching_mean},
      {"martingale property", martingale_property},
      {"dimension drop", dimension_drop},
      {"quasisymmetry scan", quasisymmetry},
      {"structural invariants", structural},
      {"global map", global_map},
      {"determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    if (!v.pass) ++failures;
    std::printf("criterion %zu (%s): %s [%.2f s] %s\n", i + 1, criteria[i].first.c_str(), v.pass ? "PASS" : "FAIL",
                seconds_since(t0), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
