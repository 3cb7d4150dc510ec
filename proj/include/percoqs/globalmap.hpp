#pragma once

// Extension of the substitution map to all of [0,1]^d. Off the limit set,
// points keep the geometry of their deepest surviving ancestor, and are
// pushed through a bi-Lipschitz map g that fixes the cube boundary and
// collapses the inner cube I = (1-2/M)[0,1]^d homothetically onto
// (1-2/M)Q_eta.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "percoqs/errors.hpp"
#include "percoqs/lattice.hpp"
#include "percoqs/parallel.hpp"
#include "percoqs/substitution.hpp"

namespace percoqs {

using Point = std::vector<double>;

inline constexpr double kContainmentTol = 1e-12;
inline constexpr double kAddressSnapTol = 1e-9;

/// Axis-aligned cube corner + [0, side]^d in floating point.
struct FloatBox {
  Point corner;
  double side = 1.0;
};

inline FloatBox float_box(const Lattice& lat, std::span<const Label> w) {
  return FloatBox{lat.pi_double(w), std::pow(static_cast<double>(lat.M()), -static_cast<double>(w.size()))};
}

struct GeomConfig {
  Params params;
  Point center;
  double inner_ratio = 0.0;  // 1 - 2/M
  FloatBox eta_box;

  explicit GeomConfig(const Lattice& lat)
      : params(lat.params()),
        center(static_cast<std::size_t>(lat.d()), 0.5),
        inner_ratio(1.0 - 2.0 / lat.M()),
        eta_box(float_box(lat, lat.params().eta)) {}

  int M() const { return params.M; }
  std::size_t dim() const { return center.size(); }
  double inner_radius() const { return 0.5 * inner_ratio; }
};

inline double sup_dist(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

namespace detail {

inline Point checked_unit_point(const GeomConfig& cfg, std::span<const double> u) {
  if (u.size() != cfg.dim()) throw DomainError("point dimension mismatch");
  Point v(u.begin(), u.end());
  for (double& c : v) {
    if (!(c >= -kContainmentTol && c <= 1.0 + kContainmentTol))
      throw DomainError("point outside [0,1]^d");
    c = std::clamp(c, 0.0, 1.0);
  }
  return v;
}

inline bool on_unit_boundary(std::span<const double> u) {
  return std::any_of(u.begin(), u.end(), [](double c) { return c == 0.0 || c == 1.0; });
}

}  // namespace detail

/// Homothety [0,1]^d -> Q_eta.
inline Point g_tilde(const GeomConfig& cfg, std::span<const double> u) {
  Point y(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) y[k] = cfg.eta_box.corner[k] + cfg.eta_box.side * u[k];
  return y;
}

/// Homothety [0,1]^d -> I, fixing the centre.
inline Point g_hat(const GeomConfig& cfg, std::span<const double> x) {
  Point y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) y[k] = cfg.center[k] + cfg.inner_ratio * (x[k] - cfg.center[k]);
  return y;
}

/// Inner branch of g (valid on I).
inline Point g_inner_branch(const GeomConfig& cfg, std::span<const double> u) { return g_tilde(cfg, u); }

/// Shell branch of g: u = (1-t) x + t g_hat(x) with x on the unit boundary
/// maps to (1-t) x + t g_tilde(g_hat(x)). Valid for u outside the interior of I.
inline Point g_shell_branch(const GeomConfig& cfg, std::span<const double> u) {
  const double r = sup_dist(u, cfg.center);
  if (r == 0.0) throw DomainError("shell branch undefined at the centre");
  const double t = 0.5 * cfg.M() * (1.0 - 2.0 * r);
  Point x(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) x[k] = cfg.center[k] + (u[k] - cfg.center[k]) / (2.0 * r);
  const Point far = g_tilde(cfg, g_hat(cfg, x));
  Point y(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) y[k] = (1.0 - t) * x[k] + t * far[k];
  return y;
}

inline Point g(const GeomConfig& cfg, std::span<const double> u) {
  const Point v = detail::checked_unit_point(cfg, u);
  const double r = sup_dist(v, cfg.center);
  if (r >= 0.5) return v;  // identity on the unit boundary
  if (r <= cfg.inner_radius()) return g_inner_branch(cfg, v);
  return g_shell_branch(cfg, v);
}

/// g conjugated into the cube Q: h_Q o g o h_Q^-1.
inline Point g_localized(const GeomConfig& cfg, const FloatBox& Q, std::span<const double> u) {
  if (u.size() != cfg.dim() || Q.corner.size() != cfg.dim()) throw DomainError("dimension mismatch");
  const double tol = kContainmentTol;
  bool on_face = false;
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double lo = Q.corner[k];
    const double hi = Q.corner[k] + Q.side;
    if (u[k] < lo - tol * Q.side || u[k] > hi + tol * Q.side) throw DomainError("point outside the cube");
    if (std::abs(u[k] - lo) <= tol * Q.side || std::abs(u[k] - hi) <= tol * Q.side) on_face = true;
  }
  if (on_face) return Point(u.begin(), u.end());
  Point v(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) v[k] = std::clamp((u[k] - Q.corner[k]) / Q.side, 0.0, 1.0);
  const Point w = g(cfg, v);
  Point y(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) y[k] = Q.corner[k] + Q.side * w[k];
  return y;
}

/// Which cube a point on a shared grid face is assigned to.
enum class TieRule { lower, upper };

/// First N letters of an M-adic address of u. Coordinates within
/// kAddressSnapTol (in units of the current cell) of a grid face are
/// treated as lying on it.
inline Word address(const Lattice& lat, std::span<const double> u, int N, TieRule tie = TieRule::lower) {
  const std::size_t d = static_cast<std::size_t>(lat.d());
  if (u.size() != d) throw DomainError("point dimension mismatch");
  const double M = lat.M();
  Point r(u.begin(), u.end());
  for (double& c : r) {
    if (!(c >= -kContainmentTol && c <= 1.0 + kContainmentTol)) throw DomainError("point outside [0,1]^d");
    c = std::clamp(c, 0.0, 1.0);
  }
  Word w;
  w.reserve(static_cast<std::size_t>(std::max(N, 0)));
  Offset o(d);
  const auto top = static_cast<std::uint32_t>(lat.M() - 1);
  for (int level = 0; level < N; ++level) {
    for (std::size_t k = 0; k < d; ++k) {
      const double v = r[k] * M;
      const double m = std::round(v);
      if (std::abs(v - m) <= kAddressSnapTol) {
        const auto mi = static_cast<std::int64_t>(m);
        if (mi <= 0) {
          o[k] = 0;
          r[k] = 0.0;
        } else if (mi >= lat.M()) {
          o[k] = top;
          r[k] = 1.0;
        } else if (tie == TieRule::lower) {
          o[k] = static_cast<std::uint32_t>(mi - 1);
          r[k] = 1.0;
        } else {
          o[k] = static_cast<std::uint32_t>(mi);
          r[k] = 0.0;
        }
      } else {
        const double fl = std::floor(v);
        o[k] = static_cast<std::uint32_t>(std::clamp(fl, 0.0, static_cast<double>(top)));
        r[k] = v - o[k];
      }
    }
    w.push_back(lat.label(o));
  }
  return w;
}

/// Global map at resolution N: locate the deepest surviving ancestor i|n of
/// the address (n <= N), transfer u from Q_{i|n} to Q_{tilde(i|n)}, and apply
/// the localized g there if i|n is flagged. With n = N the point is
/// unresolved from the limit set and only the transfer is applied.
inline Point f_global(const FlaggedTree& ft, const GeomConfig& cfg, std::span<const double> u, int N,
                      TieRule tie = TieRule::lower) {
  const PercTree& tree = ft.tree();
  if (N < 0 || N > tree.depth()) throw PreconditionError("resolution exceeds the sampled depth");
  const Lattice& lat = ft.lattice();
  const Point v = detail::checked_unit_point(cfg, u);
  if (detail::on_unit_boundary(v)) return v;
  const Word addr = address(lat, v, N, tie);

  std::size_t n = 0;
  std::size_t node = 0;
  while (n < static_cast<std::size_t>(N)) {
    const auto [lo, hi] = tree.children(static_cast<int>(n), node);
    std::size_t next = hi;
    for (std::size_t c = lo; c < hi; ++c)
      if (tree.node(static_cast<int>(n) + 1, c).label == addr[n]) {
        next = c;
        break;
      }
    if (next == hi) break;
    node = next;
    ++n;
  }
  const std::span<const Label> stem(addr.data(), n);
  const TildeWord tw = tilde(ft, stem);

  Point base;
  FloatBox image;
  if (tw.insertions.empty()) {
    base = v;
    image = float_box(lat, stem);
  } else {
    const FloatBox src = float_box(lat, stem);
    image = float_box(lat, tw.labels);
    base.resize(v.size());
    for (std::size_t k = 0; k < v.size(); ++k)
      base[k] = image.corner[k] + image.side * ((v[k] - src.corner[k]) / src.side);
  }
  if (n == static_cast<std::size_t>(N)) return base;
  if (!*ft.flag(static_cast<int>(n), node)) return base;
  return g_localized(cfg, image, base);
}

/// Empirical bi-Lipschitz bracket of a map over random pairs.
struct LipschitzBracket {
  double lower = 0.0;  // min ratio
  double upper = 0.0;  // max ratio
  std::size_t pairs = 0;
  double spread() const { return upper / lower; }
};

template <typename Map>
LipschitzBracket lipschitz_bracket(std::size_t dim, std::size_t pairs, std::uint64_t seed, Map&& map,
                                   const FloatBox& frame) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> scale(0, 8);
  LipschitzBracket b{std::numeric_limits<double>::infinity(), 0.0, 0};
  Point x(dim), y(dim);
  for (std::size_t s = 0; s < pairs; ++s) {
    // Mix scales so that both global and local stretching are probed.
    const double h = std::pow(2.0, -scale(rng));
    for (std::size_t k = 0; k < dim; ++k) {
      const double a = unit(rng);
      double c = a + h * (unit(rng) - 0.5);
      c = std::clamp(c, 0.0, 1.0);
      x[k] = frame.corner[k] + frame.side * a;
      y[k] = frame.corner[k] + frame.side * c;
    }
    const double din = sup_dist(x, y);
    if (din == 0.0) continue;
    const double dout = sup_dist(map(x), map(y));
    const double r = dout / din;
    b.lower = std::min(b.lower, r);
    b.upper = std::max(b.upper, r);
    ++b.pairs;
  }
  return b;
}

}  // namespace percoqs
