#pragma once

// Closed forms, root finding and Monte Carlo experiments around the
// partition sums Y^s_n = sum_{i in T_n} M^{-s |tilde i|}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "percoqs/errors.hpp"
#include "percoqs/lattice.hpp"
#include "percoqs/parallel.hpp"
#include "percoqs/percolation.hpp"
#include "percoqs/seeding.hpp"
#include "percoqs/substitution.hpp"

namespace percoqs {

inline constexpr int kBisectionIterations = 200;
inline constexpr double kSolverResidual = 1e-12;

inline double log_base(double x, int M) { return std::log(x) / std::log(static_cast<double>(M)); }

/// Almost-sure Hausdorff dimension of the limit set on non-extinction.
inline double hausdorff_dimension(const Params& pr) { return pr.d + log_base(pr.p, pr.M); }

inline double boundary_death_probability(const Params& pr) {
  return std::pow(1.0 - pr.p, static_cast<double>(pr.boundary_count()));
}

inline double interior_fraction(const Params& pr) {
  return static_cast<double>(pr.interior_count()) / static_cast<double>(pr.alphabet_size());
}

/// kappa(s,K) = 1 - ((M-2)^d / M^d) (1 - M^{-sK}) (1-p)^{M^d-(M-2)^d}.
/// 1 - kappa(s,K), formed without cancellation so that tiny deficits survive.
inline double kappa_deficit(const Params& pr, double s, int K) {
  if (s < 0) throw DomainError("kappa needs s >= 0");
  return interior_fraction(pr) * -std::expm1(-s * K * std::log(static_cast<double>(pr.M))) *
         boundary_death_probability(pr);
}

inline double kappa(const Params& pr, double s, int K) { return 1.0 - kappa_deficit(pr, s, K); }

/// K -> infinity limit of kappa.
inline double kappa_prime(const Params& pr) {
  return 1.0 - interior_fraction(pr) * boundary_death_probability(pr);
}

/// Expected one-generation growth factor p M^{d-s} kappa(s,K) of Y^s.
inline double growth_factor(const Params& pr, double s, int K) {
  return pr.p * std::pow(static_cast<double>(pr.M), pr.d - s) * kappa(pr, s, K);
}

struct DimReport {
  double s_hausdorff = 0.0;
  double t_upper = 0.0;
  double kappa_at_t = 0.0;
  double gap = 0.0;          // s_hausdorff - t_upper, as -log_M kappa(t_upper,K); stays positive below one ulp
  double gap_bound = 0.0;    // d + log_M p + log_M kappa'  (lower bound for t_upper)
  int K = 1;
  double residual = 0.0;     // |p M^{d-t} kappa(t,K) - 1|
  int iterations = 0;
  bool bracketed = true;     // false when p <= M^-d (no sign change on [0,d])
  bool subcritical = false;  // p <= M^-d
};

/// Bisection on a decreasing function over [lo, hi].
template <typename F>
std::pair<double, int> bisect_decreasing(F&& f, double lo, double hi) {
  int it = 0;
  for (; it < kBisectionIterations; ++it) {
    const double mid = std::midpoint(lo, hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) > 0)
      lo = mid;
    else
      hi = mid;
  }
  // Return whichever endpoint has the smaller residual.
  return {std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi, it};
}

/// Unique t in [0,d] with p M^{d-t} kappa(t,K) = 1.
inline DimReport solve_t(const Params& pr, int K) {
  pr.validate();
  if (K < 1) throw DomainError("K must be >= 1");
  DimReport r;
  r.K = K;
  r.s_hausdorff = hausdorff_dimension(pr);
  r.gap_bound = pr.d + log_base(pr.p, pr.M) + log_base(kappa_prime(pr), pr.M);
  r.subcritical = pr.p <= 1.0 / static_cast<double>(pr.alphabet_size());
  const double lnM = std::log(static_cast<double>(pr.M));
  const auto f = [&](double t) { return growth_factor(pr, t, K) - 1.0; };
  // drop below the Hausdorff dimension, -log_M kappa(t,K) > 0
  const auto drop = [&](double t) { return -std::log1p(-kappa_deficit(pr, t, K)) / lnM; };
  if (f(0.0) <= 0.0) {
    r.bracketed = false;
    r.t_upper = 0.0;
    r.kappa_at_t = kappa(pr, 0.0, K);
    r.residual = std::abs(f(0.0));
    r.gap = r.s_hausdorff - r.t_upper;
    return r;
  }
  // Log form of the equation: t = s_hausdorff - drop(t).
  const auto g = [&](double t) { return (r.s_hausdorff - t) - drop(t); };
  const auto [t, it] = bisect_decreasing(g, 0.0, static_cast<double>(pr.d));
  r.t_upper = t;
  r.iterations = it;
  r.kappa_at_t = kappa(pr, t, K);
  r.residual = std::abs(f(t));
  r.gap = drop(t);
  return r;
}

struct EpsilonResult {
  int M = 3;
  int d = 2;
  double p_star = 0.0;
  double epsilon = 0.0;
  double residual = 0.0;
};

/// Threshold below which the conformal-dimension bound drops under 1:
/// solve d + (log p + log kappa'(p)) / log M = 1 for p, then
/// epsilon = d - 1 + log_M p_star.
inline EpsilonResult solve_epsilon(int M, int d) {
  if (M < 3 || d < 2) throw DomainError("solve_epsilon needs M >= 3 and d >= 2");
  const auto objective = [M, d](double p) {
    const Params pr{d, M, p, 1, {}};
    return 1.0 - (d + (std::log(p) + std::log(kappa_prime(pr))) / std::log(static_cast<double>(M)));
  };
  const double lo = std::pow(static_cast<double>(M), -d) + 1e-9;
  const double hi = 1.0 - 1e-9;
  const auto [p, it] = bisect_decreasing(objective, lo, hi);
  (void)it;
  return EpsilonResult{M, d, p, d - 1 + log_base(p, M), std::abs(objective(p))};
}

/// Exact expectation of the one-generation sum by enumerating every survival
/// configuration of the M^d children. A child's image exponent is 1, or K+1
/// when it is interior and every boundary child is dead.
inline double level1_oracle(const Params& pr, double s, int K, std::uint32_t max_children = 25) {
  const std::uint32_t n = pr.alphabet_size();
  if (n > max_children) throw CapacityError("enumeration over 2^" + std::to_string(n) + " configurations exceeds budget");
  const std::uint32_t nb = pr.boundary_count();
  const long double M = pr.M;
  const long double short_weight = std::pow(M, -static_cast<long double>(s));
  const long double long_weight = std::pow(M, -static_cast<long double>(s) * (K + 1));
  const std::uint64_t configs = std::uint64_t{1} << n;
  const std::uint64_t boundary_mask = (std::uint64_t{1} << nb) - 1;  // labels 1..nb are bits 0..nb-1
  std::vector<long double> pp(n + 1), qq(n + 1);
  pp[0] = qq[0] = 1.0L;
  for (std::uint32_t i = 1; i <= n; ++i) {
    pp[i] = pp[i - 1] * pr.p;
    qq[i] = qq[i - 1] * (1.0L - pr.p);
  }
  // Neumaier-compensated sum over all configurations.
  long double total = 0.0L, carry = 0.0L;
  for (std::uint64_t c = 0; c < configs; ++c) {
    const auto alive = static_cast<std::uint32_t>(std::popcount(c));
    const long double prob = pp[alive] * qq[n - alive];
    const bool boundary_dead = (c & boundary_mask) == 0;
    long double inner = 0.0L;
    for (std::uint32_t i = 0; i < n; ++i) {
      if (!((c >> i) & 1u)) continue;
      const bool interior = i >= nb;
      inner += (interior && boundary_dead) ? long_weight : short_weight;
    }
    const long double term = prob * inner;
    const long double next = total + term;
    carry += std::abs(total) >= std::abs(term) ? (total - next) + term : (term - next) + total;
    total = next;
  }
  return static_cast<double>(total + carry);
}

/// Y^s_n in floating point, plus the exact rational value for integral s.
struct PartitionSum {
  double value = 0.0;
  std::optional<Rational> exact;
};

/// Histogram of tilde lengths over T_n: length -> count.
inline std::map<std::uint32_t, std::uint64_t> tilde_length_histogram(const FlaggedTree& ft, int n) {
  if (n < 0 || n > ft.depth()) throw PreconditionError("level beyond the sampled depth");
  std::map<std::uint32_t, std::uint64_t> h;
  for (std::uint32_t L : ft.tilde_lengths(n)) ++h[L];
  return h;
}

inline PartitionSum partition_sum(const FlaggedTree& ft, double s, int n) {
  const auto hist = tilde_length_histogram(ft, n);
  const int M = ft.params().M;
  PartitionSum out;
  for (const auto& [L, c] : hist) out.value += static_cast<double>(c) * std::pow(static_cast<double>(M), -s * L);
  if (s >= 0 && s == std::floor(s) && s <= 64) {
    Rational q = 0;
    const int si = static_cast<int>(s);
    for (const auto& [L, c] : hist) q += Rational(BigInt(c), big_pow(M, si * static_cast<int>(L)));
    out.exact = q;
  }
  return out;
}

struct MartingaleResult {
  int n = 0;
  double s = 0.0;
  std::size_t trials = 0;
  double y_n = 0.0;        // Y^s_n of the frozen tree
  double mean = 0.0;       // mean of resampled Y^s_{n+1}
  double stderr_ = 0.0;    // standard error of the mean
  double theory = 0.0;     // p M^{d-s} kappa(s,K) Y^s_n
  double ratio = 0.0;      // mean / Y^s_n
  double ratio_stderr = 0.0;
  double z = 0.0;          // (mean - theory) / stderr
  bool within(double sigmas) const { return std::abs(z) <= sigmas; }
};

/// Freeze the tree at its depth n and redraw generation n+1 `trials` times
/// with independent seeds.
inline MartingaleResult martingale_check(const FlaggedTree& ft, double s, std::size_t trials,
                                         unsigned workers = 1) {
  if (trials < 100) throw PreconditionError("martingale check needs at least 100 trials");
  const PercTree& t = ft.tree();
  const Params& pr = ft.params();
  const int n = t.depth();
  const std::size_t cnt = t.count(n);
  const double M = pr.M;
  const Label nl = t.lattice().alphabet_size();
  const Label nb = t.lattice().boundary_count();
  const std::uint64_t threshold = survival_threshold(pr.p);

  std::vector<double> base_weight(cnt);
  std::vector<std::string> stems(cnt);
  double y_n = 0.0;
  for (std::size_t i = 0; i < cnt; ++i) {
    base_weight[i] = std::pow(M, -s * ft.tilde_length(n, i));
    y_n += base_weight[i];
    stems[i] = word_to_string(concat(t.prefix(), t.word(n, i)));
  }
  const double short_w = std::pow(M, -s);
  const double long_w = std::pow(M, -s * (pr.K + 1));

  const auto samples = parallel_map<double>(trials, workers, [&](std::size_t r) {
    const std::uint64_t rs = derive_seed(t.seed(), "resample", r);
    const std::string head = std::to_string(rs) + ":";
    std::string msg;
    double y = 0.0;
    for (std::size_t i = 0; i < cnt; ++i) {
      std::uint32_t alive = 0;
      bool boundary_alive = false;
      for (Label j = 1; j <= nl; ++j) {
        msg = head;
        msg += stems[i];
        if (!stems[i].empty()) msg.push_back('.');
        msg += std::to_string(j);
        if (verdict(msg, threshold)) {
          ++alive;
          if (j <= nb) boundary_alive = true;
        }
      }
      y += base_weight[i] * alive * (boundary_alive ? short_w : long_w);
    }
    return y;
  });

  MartingaleResult res;
  res.n = n;
  res.s = s;
  res.trials = trials;
  res.y_n = y_n;
  double sum = 0.0;
  for (double v : samples) sum += v;
  res.mean = sum / static_cast<double>(trials);
  double ss = 0.0;
  for (double v : samples) ss += (v - res.mean) * (v - res.mean);
  const double var = ss / static_cast<double>(trials - 1);
  res.stderr_ = std::sqrt(var / static_cast<double>(trials));
  res.theory = growth_factor(pr, s, pr.K) * y_n;
  res.ratio = y_n > 0 ? res.mean / y_n : 0.0;
  res.ratio_stderr = y_n > 0 ? res.stderr_ / y_n : 0.0;
  res.z = res.stderr_ > 0 ? (res.mean - res.theory) / res.stderr_ : (res.mean == res.theory ? 0.0 : INFINITY);
  return res;
}

/// Per-tree summary used by the dimension fits: survivor counts and tilde
/// length histograms for levels 0..n_max.
struct TreeSeries {
  std::vector<std::uint64_t> counts;
  std::vector<std::map<std::uint32_t, std::uint64_t>> lengths;
};

inline TreeSeries tree_series(const FlaggedTree& ft, int n_max) {
  if (n_max > ft.depth()) throw PreconditionError("series level beyond the sampled depth");
  TreeSeries ts;
  for (int n = 0; n <= n_max; ++n) {
    ts.counts.push_back(ft.tree().count(n));
    ts.lengths.push_back(tilde_length_histogram(ft, n));
  }
  return ts;
}

inline double y_of(const TreeSeries& ts, int n, double s, int M) {
  double y = 0.0;
  for (const auto& [L, c] : ts.lengths[static_cast<std::size_t>(n)])
    y += static_cast<double>(c) * std::pow(static_cast<double>(M), -s * L);
  return y;
}

/// Least-squares slope of ys against xs.
inline double ols_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

/// First + to - sign change of slope(s) along the grid, linearly
/// interpolated. slopes[i] belongs to grid[i].
inline std::optional<double> zero_crossing(const std::vector<double>& grid, const std::vector<double>& slopes) {
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    if (slopes[i] == 0.0) return grid[i];
    if (slopes[i] > 0.0 && slopes[i + 1] <= 0.0) {
      const double w = slopes[i] / (slopes[i] - slopes[i + 1]);
      return grid[i] + w * (grid[i + 1] - grid[i]);
    }
  }
  return std::nullopt;
}

/// Regression slopes of log_M mean Y^s_n on n, one per grid value, where
/// mean Y is taken over the selected trees (indices, with repetition).
inline std::vector<double> y_slopes(const std::vector<TreeSeries>& series, const std::vector<std::size_t>& pick,
                                    const std::vector<int>& levels, const std::vector<double>& grid, int M) {
  std::vector<double> xs(levels.begin(), levels.end());
  std::vector<double> out;
  out.reserve(grid.size());
  std::vector<double> ys(levels.size());
  for (double s : grid) {
    for (std::size_t li = 0; li < levels.size(); ++li) {
      double sum = 0.0;
      for (std::size_t idx : pick) sum += y_of(series[idx], levels[li], s, M);
      ys[li] = log_base(sum / static_cast<double>(pick.size()), M);
    }
    out.push_back(ols_slope(xs, ys));
  }
  return out;
}

inline double n_slope(const std::vector<TreeSeries>& series, const std::vector<std::size_t>& pick,
                      const std::vector<int>& levels, int M) {
  std::vector<double> xs(levels.begin(), levels.end());
  std::vector<double> ys;
  for (int n : levels) {
    double sum = 0.0;
    for (std::size_t idx : pick) sum += static_cast<double>(series[idx].counts[static_cast<std::size_t>(n)]);
    ys.push_back(log_base(sum / static_cast<double>(pick.size()), M));
  }
  return ols_slope(xs, ys);
}

struct DimEstimate {
  double s_hat = 0.0;
  double t_hat = 0.0;
  std::pair<double, double> s_ci{0.0, 0.0};
  std::pair<double, double> t_ci{0.0, 0.0};
  double slope_at_s_hat = 0.0;  // slope of log_M mean Y^s_n at s = s_hat
  std::size_t trees = 0;
  bool widened = false;         // grid had to be widened to find the crossing
  bool flagged = false;         // no crossing even on the widened grid
};

struct DimOptions {
  std::vector<double> grid;     // empty: 0, 0.01, ..., d
  std::vector<int> levels;      // empty: 1..n_max
  std::size_t bootstrap = 200;
  std::uint64_t seed = 0;
};

inline std::vector<double> default_grid(double lo, double hi, double step) {
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / step));
  for (std::size_t i = 0; i <= n; ++i) g.push_back(lo + step * static_cast<double>(i));
  return g;
}

/// Zero-slope dimension fits from per-tree series: s_hat is the growth
/// exponent of mean survivor counts, t_hat the s at which mean Y^s_n is flat.
inline DimEstimate estimate_dims(const std::vector<TreeSeries>& series, int M, int d, DimOptions opt = {}) {
  if (series.size() < 30) throw PreconditionError("dimension fits need at least 30 trees");
  const std::size_t n_max = series.front().counts.size() - 1;
  if (opt.levels.empty())
    for (std::size_t n = 1; n <= n_max; ++n) opt.levels.push_back(static_cast<int>(n));
  if (opt.levels.size() < 3) throw PreconditionError("dimension fits need at least 3 levels");
  if (std::all_of(series.begin(), series.end(), [&](const TreeSeries& ts) {
        return ts.counts[static_cast<std::size_t>(opt.levels.back())] == 0;
      }))
    throw DomainError("all trees are extinct");
  if (opt.grid.empty()) opt.grid = default_grid(0.0, d, 0.01);

  std::vector<std::size_t> all(series.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  DimEstimate est;
  est.trees = series.size();
  est.s_hat = n_slope(series, all, opt.levels, M);
  auto crossing = zero_crossing(opt.grid, y_slopes(series, all, opt.levels, opt.grid, M));
  std::vector<double> grid = opt.grid;
  if (!crossing) {
    est.widened = true;
    grid = default_grid(-static_cast<double>(d), 2.0 * d, 0.01);
    crossing = zero_crossing(grid, y_slopes(series, all, opt.levels, grid, M));
  }
  if (!crossing) {
    est.flagged = true;
    est.t_hat = std::numeric_limits<double>::quiet_NaN();
  } else {
    est.t_hat = *crossing;
  }
  est.slope_at_s_hat = y_slopes(series, all, opt.levels, {est.s_hat}, M).front();

  if (opt.bootstrap > 0) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<std::size_t> pick_tree(0, series.size() - 1);
    std::vector<double> s_boot, t_boot;
    std::vector<std::size_t> pick(series.size());
    for (std::size_t b = 0; b < opt.bootstrap; ++b) {
      for (auto& x : pick) x = pick_tree(rng);
      s_boot.push_back(n_slope(series, pick, opt.levels, M));
      const auto c = zero_crossing(grid, y_slopes(series, pick, opt.levels, grid, M));
      if (c) t_boot.push_back(*c);
    }
    const auto quantiles = [](std::vector<double> v) -> std::pair<double, double> {
      if (v.empty()) return {NAN, NAN};
      std::sort(v.begin(), v.end());
      const auto at = [&](double q) {
        const auto i = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
        return v[i];
      };
      return {at(0.025), at(0.975)};
    };
    est.s_ci = quantiles(s_boot);
    est.t_ci = quantiles(t_boot);
  }
  return est;
}

struct QsScan {
  std::size_t requested = 0;
  std::size_t evaluated = 0;
  std::size_t degenerate = 0;   // x = z or x = y
  double c_emp = 0.0;           // max r_out / max(r_in, r_in^{K+1})
  double max_r_in = 0.0;
  double max_r_out = 0.0;
  std::vector<double> control_ratios;  // r_out / max(r_in, r_in^{K+1}), per evaluated triple
  double comparability_min = std::numeric_limits<double>::infinity();
  double comparability_max = 0.0;
};

enum class TripleSampling { uniform, multiscale };

/// Draws a level-n survivor that shares its first `a` letters with node x.
inline std::size_t draw_relative(const PercTree& t, int n, std::size_t x, int a, std::mt19937_64& rng) {
  // Ancestor of x at level a.
  std::size_t anc = x;
  for (int lvl = n; lvl > a; --lvl) anc = t.node(lvl, anc).parent;
  std::size_t lo = anc, hi = anc + 1;
  for (int k = a; k < n; ++k) {
    lo = t.children(k, lo).first;
    hi = t.children(k, hi - 1).second;
  }
  std::uniform_int_distribution<std::size_t> u(lo, hi - 1);
  return u(rng);
}

/// Quasisymmetry ratio scan over triples of distinct level-n corners.
inline QsScan qs_ratio_scan(const FlaggedTree& ft, std::size_t triples, int n, std::uint64_t seed,
                            TripleSampling mode = TripleSampling::multiscale, unsigned workers = 1) {
  const PercTree& t = ft.tree();
  if (n > t.depth()) throw PreconditionError("scan level beyond the sampled depth");
  const std::size_t cnt = t.count(n);
  if (cnt < 3) throw PreconditionError("quasisymmetry scan needs at least 3 surviving words");
  const int K = ft.params().K;
  const Lattice& lat = ft.lattice();

  struct Triple {
    std::size_t x, y, z;
  };
  std::vector<Triple> tr(triples);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> any(0, cnt - 1);
  std::uniform_int_distribution<int> lvl(0, std::max(0, n - 1));
  for (auto& q : tr) {
    q.x = any(rng);
    if (mode == TripleSampling::uniform) {
      q.y = any(rng);
      q.z = any(rng);
    } else {
      q.y = draw_relative(t, n, q.x, lvl(rng), rng);
      q.z = draw_relative(t, n, q.x, lvl(rng), rng);
    }
  }

  struct Eval {
    bool degenerate = true;
    double r_in = 0, r_out = 0, control = 0, comparability = 0;
  };
  const auto evals = parallel_map<Eval>(tr.size(), workers, [&](std::size_t i) {
    const Triple& q = tr[i];
    Eval e;
    if (q.x == q.z || q.x == q.y) return e;
    const Word wx = t.word(n, q.x), wy = t.word(n, q.y), wz = t.word(n, q.z);
    const ExactPoint px = lat.pi(wx), py = lat.pi(wy), pz = lat.pi(wz);
    const ExactPoint fx = f_point(ft, wx), fy = f_point(ft, wy), fz = f_point(ft, wz);
    const auto ratio = [](const MAdic& a, const MAdic& b) {
      return static_cast<double>(Rational(a.num * big_pow(a.base, b.level), b.num * big_pow(b.base, a.level)));
    };
    e.degenerate = false;
    e.r_in = ratio(dist_max(px, py), dist_max(px, pz));
    e.r_out = ratio(dist_max(fx, fy), dist_max(fx, fz));
    e.control = e.r_out / std::max(e.r_in, std::pow(e.r_in, K + 1));
    e.comparability = static_cast<double>(comparability_ratio(ft, wx, wy));
    return e;
  });

  QsScan out;
  out.requested = triples;
  for (const Eval& e : evals) {
    if (e.degenerate) {
      ++out.degenerate;
      continue;
    }
    ++out.evaluated;
    out.c_emp = std::max(out.c_emp, e.control);
    out.max_r_in = std::max(out.max_r_in, e.r_in);
    out.max_r_out = std::max(out.max_r_out, e.r_out);
    out.control_ratios.push_back(e.control);
    out.comparability_min = std::min(out.comparability_min, e.comparability);
    out.comparability_max = std::max(out.comparability_max, e.comparability);
  }
  return out;
}

}  // namespace percoqs
