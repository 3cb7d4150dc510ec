#pragma once

// Multi-tree experiments shared by the command line and the acceptance
// suite. Tree i of an experiment uses seed derive_seed(master, "tree", i),
// so every result is a pure function of (params, sizes, master seed).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "percoqs/analysis.hpp"
#include "percoqs/globalmap.hpp"
#include "percoqs/percolation.hpp"
#include "percoqs/seeding.hpp"
#include "percoqs/substitution.hpp"

namespace percoqs {

inline std::uint64_t tree_seed(std::uint64_t master, std::size_t i) { return derive_seed(master, "tree", i); }

struct MeanStat {
  std::string quantity;  // "N" or "Y"
  double s = 0.0;
  int n = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t seeds = 0;
  double expected = 0.0;
  double z() const { return stderr_ > 0 ? (mean - expected) / stderr_ : (mean == expected ? 0.0 : INFINITY); }
};

/// Unconditioned means over `seeds` trees of |T_n| and of Y^s_n for each s,
/// n = 1..depth, next to their expectations (pM^d)^n and (pM^{d-s}kappa)^n.
inline std::vector<MeanStat> expectation_series(const Params& pr, int depth, std::size_t seeds, std::uint64_t master,
                                                const std::vector<double>& s_values, const SampleOptions& opt = {}) {
  pr.validate();
  const std::size_t ns = s_values.size();
  // acc[n][0] counts, acc[n][1+j] Y for s_values[j]; sums and sums of squares.
  std::vector<std::vector<double>> sum(static_cast<std::size_t>(depth) + 1, std::vector<double>(ns + 1, 0.0));
  auto sq = sum;
  SampleOptions inner = opt;
  for (std::size_t i = 0; i < seeds; ++i) {
    const PercTree t = sample_tree(pr, depth, tree_seed(master, i), inner);
    std::optional<FlaggedTree> ft;
    if (depth >= 1) ft.emplace(t);
    for (int n = 1; n <= depth; ++n) {
      auto& sm = sum[static_cast<std::size_t>(n)];
      auto& sc = sq[static_cast<std::size_t>(n)];
      const double c = static_cast<double>(t.count(n));
      sm[0] += c;
      sc[0] += c * c;
      for (std::size_t j = 0; j < ns; ++j) {
        const double y = partition_sum(*ft, s_values[j], n).value;
        sm[1 + j] += y;
        sc[1 + j] += y * y;
      }
    }
  }
  std::vector<MeanStat> out;
  const double S = static_cast<double>(seeds);
  const auto stat = [&](std::string q, double s, int n, std::size_t col, double expected) {
    const double m = sum[static_cast<std::size_t>(n)][col] / S;
    const double var = (sq[static_cast<std::size_t>(n)][col] - S * m * m) / (S - 1);
    out.push_back(MeanStat{std::move(q), s, n, m, std::sqrt(std::max(var, 0.0) / S), seeds, expected});
  };
  const double mean_children = pr.p * pr.alphabet_size();
  for (int n = 1; n <= depth; ++n) stat("N", 0.0, n, 0, std::pow(mean_children, n));
  for (std::size_t j = 0; j < ns; ++j)
    for (int n = 1; n <= depth; ++n) stat("Y", s_values[j], n, 1 + j, std::pow(growth_factor(pr, s_values[j], pr.K), n));
  return out;
}

struct DimsExperiment {
  DimEstimate estimate;
  DimReport theory;
  std::uint64_t rejections = 0;
  std::vector<TreeSeries> series;
};

inline DimsExperiment dims_experiment(const Params& pr, std::size_t trees, int depth, std::uint64_t master,
                                      std::size_t bootstrap = 200, const SampleOptions& opt = {}) {
  pr.validate();
  if (depth < 1) throw PreconditionError("dimension fits need depth >= 1");
  DimsExperiment ex;
  for (std::size_t i = 0; i < trees; ++i) {
    auto s = sample_nonextinct(pr, depth, tree_seed(master, i), opt);
    ex.rejections += s.rejections;
    ex.series.push_back(tree_series(FlaggedTree(std::move(s.tree)), depth));
  }
  DimOptions dopt;
  dopt.bootstrap = bootstrap;
  dopt.seed = derive_seed(master, "bootstrap", 0);
  ex.estimate = estimate_dims(ex.series, pr.M, pr.d, dopt);
  ex.theory = solve_t(pr, pr.K);
  return ex;
}

struct QsExperiment {
  std::vector<QsScan> deep;     // one per tree at the full depth
  std::vector<QsScan> shallow;  // same trees truncated
  double c_deep = 0.0;
  double c_shallow = 0.0;
  double comparability_min = std::numeric_limits<double>::infinity();
  double comparability_max = 0.0;
  std::size_t violations = 0;   // r_out > C_emp max(r_in, r_in^{K+1})
};

inline QsExperiment qs_experiment(const Params& pr, std::size_t trees, int depth, int shallow_depth,
                                  std::size_t triples, std::uint64_t master,
                                  TripleSampling mode = TripleSampling::uniform, const SampleOptions& opt = {}) {
  QsExperiment ex;
  for (std::size_t i = 0; i < trees; ++i) {
    const PercTree t = sample_nonextinct(pr, depth, tree_seed(master, i), opt).tree;
    const FlaggedTree deep(t);
    ex.deep.push_back(qs_ratio_scan(deep, triples, depth, derive_seed(master, "triples", i), mode, opt.workers));
    const FlaggedTree shallow(t.truncated(shallow_depth));
    ex.shallow.push_back(
        qs_ratio_scan(shallow, triples, shallow_depth, derive_seed(master, "triples", i), mode, opt.workers));
  }
  for (const auto* scans : {&ex.deep, &ex.shallow})
    for (const auto& s : *scans) {
      ex.comparability_min = std::min(ex.comparability_min, s.comparability_min);
      ex.comparability_max = std::max(ex.comparability_max, s.comparability_max);
    }
  for (const auto& s : ex.deep) ex.c_deep = std::max(ex.c_deep, s.c_emp);
  for (const auto& s : ex.shallow) ex.c_shallow = std::max(ex.c_shallow, s.c_emp);
  for (const auto* scans : {&ex.deep, &ex.shallow}) {
    const double c = scans == &ex.deep ? ex.c_deep : ex.c_shallow;
    for (const auto& s : *scans)
      for (double r : s.control_ratios)
        if (r > c) ++ex.violations;
  }
  return ex;
}

/// Two distinct level-n tilde words coincide nowhere in the tree. Words are
/// bucketed by length and a pair of rolling hashes, and every hash collision
/// is settled by comparing the words themselves.
struct InjectivityResult {
  std::size_t words = 0;
  std::size_t hash_collisions = 0;
  std::size_t duplicates = 0;
};

inline InjectivityResult tilde_injectivity(const FlaggedTree& ft) {
  const PercTree& t = ft.tree();
  const Word& eta = ft.params().eta;
  constexpr std::uint64_t B1 = 0x100000001b3ULL, B2 = 0x9e3779b97f4a7c15ULL;
  InjectivityResult res;
  std::vector<std::uint64_t> h1(1, 0), h2(1, 0);
  for (int n = 1; n <= t.depth(); ++n) {
    const auto down = t.level(n);
    std::vector<std::uint64_t> n1(down.size()), n2(down.size());
    for (std::size_t j = 0; j < down.size(); ++j) {
      std::uint64_t a = h1[down[j].parent], b = h2[down[j].parent];
      if (*ft.flag(n - 1, down[j].parent))
        for (Label e : eta) {
          a = a * B1 + e;
          b = b * B2 + e;
        }
      n1[j] = a * B1 + down[j].label;
      n2[j] = b * B2 + down[j].label;
    }
    std::vector<std::tuple<std::uint32_t, std::uint64_t, std::uint64_t, std::size_t>> keys(down.size());
    for (std::size_t j = 0; j < down.size(); ++j) keys[j] = {ft.tilde_length(n, j), n1[j], n2[j], j};
    std::sort(keys.begin(), keys.end());
    for (std::size_t j = 1; j < keys.size(); ++j) {
      const auto& [la, a1, a2, ia] = keys[j - 1];
      const auto& [lb, b1, b2, ib] = keys[j];
      if (la == lb && a1 == b1 && a2 == b2) {
        ++res.hash_collisions;
        if (tilde_of_node(ft, n, ia).labels == tilde_of_node(ft, n, ib).labels) ++res.duplicates;
      }
    }
    res.words += down.size();
    h1 = std::move(n1);
    h2 = std::move(n2);
  }
  return res;
}

/// tilde(p.j) = tilde(p) ++ tilde_sub(j), with tilde_sub computed on the
/// subtree rooted at p, for every surviving p with 1 <= |p| <= max_prefix and
/// every descendant j. Returns (pairs checked, mismatches).
inline std::pair<std::size_t, std::size_t> conjugation_check(const FlaggedTree& ft, int max_prefix) {
  const PercTree& t = ft.tree();
  std::size_t checked = 0, bad = 0;
  for (int a = 1; a <= std::min(max_prefix, t.depth() - 1); ++a) {
    for (std::size_t pi = 0; pi < t.count(a); ++pi) {
      const Word p = t.word(a, pi);
      const FlaggedTree sub(subtree(t, p));
      const Word tp = tilde(ft, p).labels;
      for (int m = 1; m <= sub.depth(); ++m)
        for (std::size_t j = 0; j < sub.tree().count(m); ++j) {
          const Word jw = sub.tree().word(m, j);
          const Word whole = tilde(ft, concat(p, jw)).labels;
          const Word split = concat(tp, tilde(sub, jw).labels);
          ++checked;
          if (whole != split) ++bad;
        }
    }
  }
  return {checked, bad};
}

/// Shared-face approach pairs: adjacent surviving siblings a, b (b one step
/// above a along axis q) under k, followed by matched tails whose axis-q
/// digit is M-1 under a and 0 under b. Each realized pair with tail length N
/// must satisfy |f(k a i') - f(k b j')| <= M^{-(N-1)} M^{-|tilde k|+1}.
struct FaceCheck {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  Rational worst = 0;  // max of distance / bound
};

inline FaceCheck shared_face_check(const FlaggedTree& ft, std::size_t max_pairs = 20000) {
  const PercTree& t = ft.tree();
  const Lattice& lat = ft.lattice();
  const int M = lat.M();
  const auto d = static_cast<std::size_t>(lat.d());
  FaceCheck fc;

  // Extend matched pairs of surviving nodes (ia at level k on the low side,
  // ib on the high side) one letter at a time.
  struct Frame {
    int level;
    std::size_t ia, ib;
  };
  const auto child_with = [&](int k, std::size_t i, Label l) -> std::optional<std::size_t> {
    const auto [lo, hi] = t.children(k, i);
    for (std::size_t c = lo; c < hi; ++c)
      if (t.node(k + 1, c).label == l) return c;
    return std::nullopt;
  };

  for (int k = 0; k + 2 <= t.depth() && fc.pairs < max_pairs; ++k) {
    for (std::size_t ki = 0; ki < t.count(k) && fc.pairs < max_pairs; ++ki) {
      const Word kw = t.word(k, ki);
      const int kt = static_cast<int>(tilde(ft, kw).labels.size());
      const auto [lo, hi] = t.children(k, ki);
      for (std::size_t ca = lo; ca < hi; ++ca) {
        const Offset& oa = lat.offset(t.node(k + 1, ca).label);
        for (std::size_t q = 0; q < d; ++q) {
          if (oa[q] + 1 >= static_cast<std::uint32_t>(M)) continue;
          Offset ob = oa;
          ob[q] += 1;
          const auto cb = child_with(k, ki, lat.label(ob));
          if (!cb) continue;
          std::vector<Frame> stack{{k + 1, ca, *cb}};
          while (!stack.empty() && fc.pairs < max_pairs) {
            const Frame f = stack.back();
            stack.pop_back();
            const int N = f.level - (k + 1);
            if (N >= 1) {
              const Word wa = t.word(f.level, f.ia), wb = t.word(f.level, f.ib);
              const MAdic dist = dist_max(f_point(ft, wa), f_point(ft, wb));
              // bound = M^{-(N-1) - kt + 1} = M^{2 - N - kt}
              const int e = 2 - N - kt;
              const Rational bound = e >= 0 ? Rational(big_pow(M, e)) : Rational(BigInt(1), big_pow(M, -e));
              const Rational r = dist.to_rational() / bound;
              ++fc.pairs;
              if (r > 1) ++fc.violations;
              if (r > fc.worst) fc.worst = r;
            }
            if (f.level >= t.depth()) continue;
            const auto [alo, ahi] = t.children(f.level, f.ia);
            for (std::size_t c = alo; c < ahi; ++c) {
              Offset o = lat.offset(t.node(f.level + 1, c).label);
              if (o[q] != static_cast<std::uint32_t>(M - 1)) continue;
              o[q] = 0;
              if (const auto m = child_with(f.level, f.ib, lat.label(o))) stack.push_back({f.level + 1, c, *m});
            }
          }
        }
      }
    }
  }
  return fc;
}

struct GlobalChecks {
  std::size_t boundary_points = 0;
  double boundary_max_error = 0.0;     // f_global and g on the unit boundary
  double branch_max_gap = 0.0;         // inner vs shell branch on dI
  LipschitzBracket lipschitz;
  LipschitzBracket lipschitz_local;    // g_Q in a level-2 frame
  std::size_t corners = 0;
  double corner_max_error = 0.0;       // f_global vs f_point
};

/// Points of the unit boundary: `per_face` per (axis, side) pair.
inline std::vector<Point> boundary_points(std::size_t d, std::size_t per_face, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Point> pts;
  for (std::size_t q = 0; q < d; ++q)
    for (double side : {0.0, 1.0})
      for (std::size_t i = 0; i < per_face; ++i) {
        Point u(d);
        for (auto& c : u) c = unit(rng);
        // half the points on a regular grid to include M-adic corners
        if (i % 2 == 0)
          for (auto& c : u) c = std::floor(c * 81.0) / 81.0;
        u[q] = side;
        pts.push_back(std::move(u));
      }
  return pts;
}

inline GlobalChecks global_checks(const Params& pr, std::size_t trees, int depth, std::size_t boundary_count,
                                  std::size_t pairs, std::uint64_t master, const SampleOptions& opt = {}) {
  const Lattice lat(pr);
  const GeomConfig cfg(lat);
  const std::size_t d = static_cast<std::size_t>(pr.d);
  GlobalChecks gc;
  std::mt19937_64 rng(derive_seed(master, "global", 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t per_face = std::max<std::size_t>(1, boundary_count / (2 * d));
  const auto bpts = boundary_points(d, per_face, rng);
  for (const auto& u : bpts) gc.boundary_max_error = std::max(gc.boundary_max_error, sup_dist(g(cfg, u), u));

  // dI: points at sup-distance exactly the inner radius from the centre.
  for (std::size_t i = 0; i < boundary_count; ++i) {
    Point u(d);
    for (auto& c : u) c = 0.5 + cfg.inner_radius() * (2.0 * unit(rng) - 1.0);
    u[i % d] = 0.5 + (i % 2 ? cfg.inner_radius() : -cfg.inner_radius());
    gc.branch_max_gap =
        std::max(gc.branch_max_gap, sup_dist(g_inner_branch(cfg, u), g_shell_branch(cfg, u)));
  }

  const auto gmap = [&](const Point& u) { return g(cfg, u); };
  gc.lipschitz = lipschitz_bracket(d, pairs, derive_seed(master, "lipschitz", 0), gmap, FloatBox{Point(d, 0.0), 1.0});
  const FloatBox frame = float_box(lat, Word{lat.label(Offset(d, 1)), 1});
  const auto gloc = [&](const Point& u) { return g_localized(cfg, frame, u); };
  gc.lipschitz_local = lipschitz_bracket(d, pairs, derive_seed(master, "lipschitz", 0), gloc, frame);

  for (std::size_t i = 0; i < trees; ++i) {
    const FlaggedTree ft(sample_nonextinct(pr, depth, tree_seed(master, i), opt).tree);
    for (const auto& u : bpts) {
      gc.boundary_max_error = std::max(gc.boundary_max_error, sup_dist(f_global(ft, cfg, u, depth), u));
      ++gc.boundary_points;
    }
    for (int n = 1; n <= depth; ++n) {
      const std::size_t cnt = ft.tree().count(n);
      const std::size_t stride = std::max<std::size_t>(1, cnt / 200);
      for (std::size_t j = 0; j < cnt; j += stride) {
        const Word w = ft.tree().word(n, j);
        const Point u = lat.pi_double(w);
        const Point fu = f_global(ft, cfg, u, n, TieRule::upper);
        gc.corner_max_error = std::max(gc.corner_max_error, sup_dist(fu, f_point(ft, w).to_doubles()));
        ++gc.corners;
      }
    }
  }
  return gc;
}

}  // namespace percoqs
