#pragma once

// M-adic cube lattice on [0,1]^d: child labels, words, the natural
// projection of finite words onto cube corners, and exact max-norm
// geometry over wide integers.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "percoqs/errors.hpp"

namespace percoqs {

using Label = std::uint32_t;
using Word = std::vector<Label>;
using Offset = std::vector<std::uint32_t>;
using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline constexpr std::uint64_t kMaxAlphabet = 1u << 20;

inline std::uint64_t checked_ipow(std::uint64_t base, int exp) {
  std::uint64_t r = 1;
  for (int i = 0; i < exp; ++i) {
    r *= base;
    if (r > kMaxAlphabet) throw DomainError("alphabet size M^d too large");
  }
  return r;
}

inline BigInt big_pow(int base, int exp) {
  return boost::multiprecision::pow(BigInt(base), static_cast<unsigned>(exp));
}

/// Process and substitution parameters (d, M, p, K, eta).
struct Params {
  int d = 2;
  int M = 3;
  double p = 0.5;
  int K = 1;
  Word eta;

  std::uint32_t alphabet_size() const { return static_cast<std::uint32_t>(checked_ipow(M, d)); }
  std::uint32_t interior_count() const { return static_cast<std::uint32_t>(checked_ipow(M - 2, d)); }
  std::uint32_t boundary_count() const { return alphabet_size() - interior_count(); }

  void validate() const {
    if (d < 1) throw DomainError("d must be >= 1");
    if (M < 3) throw DomainError("M must be >= 3");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("p must lie in (0,1)");
    if (K < 1) throw DomainError("K must be >= 1");
    if (eta.size() != static_cast<std::size_t>(K))
      throw DomainError("eta must have length K");
    const auto n = alphabet_size();
    for (Label l : eta)
      if (l < 1 || l > n) throw DomainError("eta label out of range");
    if (eta.front() <= boundary_count())
      throw DomainError("first letter of eta must be an interior label");
  }

  friend bool operator==(const Params&, const Params&) = default;
};

/// Offset of the child cube at the centre, (floor(M/2), ..., floor(M/2)).
inline Offset center_offset(int M, int d) {
  return Offset(static_cast<std::size_t>(d), static_cast<std::uint32_t>(M / 2));
}

inline bool offset_on_boundary(const Offset& o, int M) {
  return std::any_of(o.begin(), o.end(), [M](std::uint32_t c) {
    return c == 0 || c == static_cast<std::uint32_t>(M - 1);
  });
}

// Lexicographic rank of an offset (first coordinate most significant).
inline std::uint64_t lex_rank(const Offset& o, int M) {
  std::uint64_t r = 0;
  for (auto c : o) r = r * static_cast<std::uint64_t>(M) + c;
  return r;
}

inline Offset lex_unrank(std::uint64_t r, int M, int d) {
  Offset o(static_cast<std::size_t>(d));
  for (int k = d - 1; k >= 0; --k) {
    o[static_cast<std::size_t>(k)] = static_cast<std::uint32_t>(r % static_cast<std::uint64_t>(M));
    r /= static_cast<std::uint64_t>(M);
  }
  return o;
}

/// Non-negative M-adic rational num / M^level.
struct MAdic {
  BigInt num;
  int level = 0;
  int base = 3;

  MAdic lifted(int to_level) const {
    if (to_level < level) throw DomainError("cannot lower the level of an M-adic number");
    return MAdic{num * big_pow(base, to_level - level), to_level, base};
  }

  MAdic reduced() const {
    MAdic r = *this;
    if (r.num == 0) {
      r.level = 0;
      return r;
    }
    const BigInt b = base;
    while (r.level > 0 && r.num % b == 0) {
      r.num /= b;
      --r.level;
    }
    return r;
  }

  double to_double() const {
    return static_cast<double>(Rational(num, big_pow(base, level)));
  }

  Rational to_rational() const { return Rational(num, big_pow(base, level)); }

  friend std::strong_ordering operator<=>(const MAdic& a, const MAdic& b) {
    const int L = std::max(a.level, b.level);
    const BigInt x = a.num * big_pow(a.base, L - a.level);
    const BigInt y = b.num * big_pow(b.base, L - b.level);
    if (x < y) return std::strong_ordering::less;
    if (x > y) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }
  friend bool operator==(const MAdic& a, const MAdic& b) { return (a <=> b) == 0; }
};

/// Point of [0,1]^d with coordinates num_k / M^level (common level).
class ExactPoint {
 public:
  ExactPoint() = default;

  ExactPoint(int base, int level, std::vector<BigInt> num)
      : base_(base), level_(level), num_(std::move(num)) {
    if (level_ < 0) throw DomainError("negative level");
    const BigInt top = big_pow(base_, level_);
    for (const auto& c : num_)
      if (c < 0 || c > top) throw DomainError("coordinate outside [0,1]");
  }

  static ExactPoint origin(int base, int dim) {
    return ExactPoint(base, 0, std::vector<BigInt>(static_cast<std::size_t>(dim), BigInt(0)));
  }

  int base() const { return base_; }
  int level() const { return level_; }
  std::size_t dim() const { return num_.size(); }
  const BigInt& num(std::size_t k) const { return num_[k]; }
  const std::vector<BigInt>& nums() const { return num_; }

  ExactPoint at_level(int to_level) const {
    if (to_level < level_) throw DomainError("cannot lower the level of an exact point");
    const BigInt f = big_pow(base_, to_level - level_);
    std::vector<BigInt> n(num_);
    for (auto& c : n) c *= f;
    return ExactPoint(base_, to_level, std::move(n), Unchecked{});
  }

  /// Smallest level at which all coordinates are integral.
  ExactPoint reduced() const {
    ExactPoint r = *this;
    const BigInt b = base_;
    while (r.level_ > 0 &&
           std::all_of(r.num_.begin(), r.num_.end(), [&](const BigInt& c) { return c % b == 0; })) {
      for (auto& c : r.num_) c /= b;
      --r.level_;
    }
    return r;
  }

  MAdic coord(std::size_t k) const { return MAdic{num_[k], level_, base_}; }

  std::vector<double> to_doubles() const {
    std::vector<double> out;
    out.reserve(num_.size());
    for (std::size_t k = 0; k < num_.size(); ++k) out.push_back(coord(k).to_double());
    return out;
  }

  friend bool operator==(const ExactPoint& a, const ExactPoint& b) {
    if (a.base_ != b.base_ || a.dim() != b.dim()) return false;
    const int L = std::max(a.level_, b.level_);
    const ExactPoint x = a.at_level(L);
    const ExactPoint y = b.at_level(L);
    return x.num_ == y.num_;
  }

 private:
  struct Unchecked {};
  ExactPoint(int base, int level, std::vector<BigInt> num, Unchecked)
      : base_(base), level_(level), num_(std::move(num)) {}

  int base_ = 3;
  int level_ = 0;
  std::vector<BigInt> num_;
};

/// Closed M-adic cube corner + [0, M^-level]^d.
struct Box {
  ExactPoint corner;
  int level = 0;

  bool contains(const ExactPoint& x) const {
    const int L = std::max(level, x.level());
    const ExactPoint c = corner.at_level(L);
    const ExactPoint y = x.at_level(L);
    const BigInt side = big_pow(corner.base(), L - level);
    for (std::size_t k = 0; k < y.dim(); ++k)
      if (y.num(k) < c.num(k) || y.num(k) > c.num(k) + side) return false;
    return true;
  }

  std::vector<double> corner_doubles() const { return corner.to_doubles(); }
  double side() const { return MAdic{BigInt(1), level, corner.base()}.to_double(); }

  friend bool operator==(const Box& a, const Box& b) {
    return a.level == b.level && a.corner == b.corner;
  }
};

/// Label tables for a fixed (M, d): boundary offsets first in lexicographic
/// order, then interior offsets in lexicographic order.
class Lattice {
 public:
  explicit Lattice(Params params) : params_(std::move(params)) {
    params_.validate();
    const auto n = params_.alphabet_size();
    offsets_.reserve(n);
    label_by_rank_.assign(n, 0);
    for (int pass = 0; pass < 2; ++pass) {
      for (std::uint64_t r = 0; r < n; ++r) {
        Offset o = lex_unrank(r, params_.M, params_.d);
        if (offset_on_boundary(o, params_.M) == (pass == 0)) {
          offsets_.push_back(std::move(o));
          label_by_rank_[r] = static_cast<Label>(offsets_.size());
        }
      }
    }
  }

  const Params& params() const { return params_; }
  int M() const { return params_.M; }
  int d() const { return params_.d; }
  std::uint32_t alphabet_size() const { return static_cast<std::uint32_t>(offsets_.size()); }
  std::uint32_t boundary_count() const { return params_.boundary_count(); }

  void check_label(Label l) const {
    if (l < 1 || l > alphabet_size()) throw DomainError("label " + std::to_string(l) + " out of range");
  }

  const Offset& offset(Label l) const {
    check_label(l);
    return offsets_[l - 1];
  }

  Label label(const Offset& o) const {
    if (o.size() != static_cast<std::size_t>(params_.d)) throw DomainError("offset dimension mismatch");
    for (auto c : o)
      if (c >= static_cast<std::uint32_t>(params_.M)) throw DomainError("offset coordinate out of range");
    return label_by_rank_[lex_rank(o, params_.M)];
  }

  bool is_boundary(Label l) const {
    check_label(l);
    return l <= boundary_count();
  }

  void check_word(std::span<const Label> w) const {
    for (Label l : w) check_label(l);
  }

  /// Lower-left corner of Q_w, exactly at level |w|.
  ExactPoint pi(std::span<const Label> w) const {
    check_word(w);
    const BigInt base = params_.M;
    std::vector<BigInt> num(static_cast<std::size_t>(params_.d), BigInt(0));
    for (Label l : w) {
      const Offset& o = offsets_[l - 1];
      for (std::size_t k = 0; k < num.size(); ++k) {
        num[k] *= base;
        num[k] += o[k];
      }
    }
    return ExactPoint(params_.M, static_cast<int>(w.size()), std::move(num));
  }

  /// Floating corner of Q_w (Horner from the last letter).
  std::vector<double> pi_double(std::span<const Label> w) const {
    std::vector<double> x(static_cast<std::size_t>(params_.d), 0.0);
    const double inv = 1.0 / params_.M;
    for (auto it = w.rbegin(); it != w.rend(); ++it) {
      const Offset& o = offset(*it);
      for (std::size_t k = 0; k < x.size(); ++k) x[k] = (x[k] + o[k]) * inv;
    }
    return x;
  }

  Box box(std::span<const Label> w) const { return Box{pi(w), static_cast<int>(w.size())}; }

  Box unit_box() const { return Box{ExactPoint::origin(params_.M, params_.d), 0}; }

 private:
  Params params_;
  std::vector<Offset> offsets_;
  std::vector<Label> label_by_rank_;
};

/// Default substitution word: K copies of the centre label.
inline Word default_eta(int M, int d, int K) {
  const auto n = checked_ipow(M, d);
  const auto boundary = n - checked_ipow(M - 2, d);
  // The centre offset is interior, so its label is > boundary; find it by rank.
  const Offset c = center_offset(M, d);
  Label centre = 0;
  Label next = static_cast<Label>(boundary);
  for (std::uint64_t r = 0; r < n; ++r) {
    Offset o = lex_unrank(r, M, d);
    if (offset_on_boundary(o, M)) continue;
    ++next;
    if (o == c) {
      centre = next;
      break;
    }
  }
  return Word(static_cast<std::size_t>(K), centre);
}

inline Params make_params(int d, int M, double p, int K = 1, Word eta = {}) {
  Params pr{d, M, p, K, std::move(eta)};
  if (pr.eta.empty() && M >= 3 && d >= 1 && K >= 1) pr.eta = default_eta(M, d, K);
  pr.validate();
  return pr;
}

inline Offset label_to_offset(const Lattice& lat, Label l) { return lat.offset(l); }
inline Label offset_to_label(const Lattice& lat, const Offset& o) { return lat.label(o); }
inline bool is_boundary_label(const Lattice& lat, Label l) { return lat.is_boundary(l); }
inline ExactPoint pi_finite(const Lattice& lat, std::span<const Label> w) { return lat.pi(w); }
inline Box box_of_word(const Lattice& lat, std::span<const Label> w) { return lat.box(w); }

/// Longest common prefix.
inline Word word_meet(std::span<const Label> a, std::span<const Label> b) {
  const auto [ia, ib] = std::mismatch(a.begin(), a.end(), b.begin(), b.end());
  (void)ib;
  return Word(a.begin(), ia);
}

inline std::size_t meet_length(std::span<const Label> a, std::span<const Label> b) {
  return static_cast<std::size_t>(std::mismatch(a.begin(), a.end(), b.begin(), b.end()).first - a.begin());
}

inline Word concat(std::span<const Label> a, std::span<const Label> b) {
  Word w(a.begin(), a.end());
  w.insert(w.end(), b.begin(), b.end());
  return w;
}

inline bool is_prefix(std::span<const Label> p, std::span<const Label> w) {
  return p.size() <= w.size() && std::equal(p.begin(), p.end(), w.begin());
}

/// Max-norm distance, exact.
inline MAdic dist_max(const ExactPoint& x, const ExactPoint& y) {
  if (x.base() != y.base() || x.dim() != y.dim()) throw DomainError("incompatible points");
  const int L = std::max(x.level(), y.level());
  const ExactPoint a = x.at_level(L);
  const ExactPoint b = y.at_level(L);
  BigInt best = 0;
  for (std::size_t k = 0; k < a.dim(); ++k) {
    BigInt diff = a.num(k) - b.num(k);
    if (diff < 0) diff = -diff;
    if (diff > best) best = diff;
  }
  return MAdic{best, L, x.base()};
}

/// Homothety sending [0,1]^d onto b: x -> corner + M^-level x.
inline ExactPoint h_box(const Box& b, const ExactPoint& x) {
  const int lx = x.level();
  const ExactPoint c = b.corner.at_level(b.level);
  const BigInt f = big_pow(c.base(), lx);
  std::vector<BigInt> num(c.dim());
  for (std::size_t k = 0; k < num.size(); ++k) num[k] = c.num(k) * f + x.num(k);
  return ExactPoint(c.base(), b.level + lx, std::move(num));
}

/// Inverse of h_box; x must lie in b.
inline ExactPoint h_box_inverse(const Box& b, const ExactPoint& x) {
  if (!b.contains(x)) throw DomainError("point outside box");
  const int L = std::max(x.level(), b.level);
  const ExactPoint y = x.at_level(L);
  const ExactPoint c = b.corner.at_level(L);
  std::vector<BigInt> num(y.dim());
  for (std::size_t k = 0; k < num.size(); ++k) num[k] = y.num(k) - c.num(k);
  return ExactPoint(y.base(), L - b.level, std::move(num));
}

/// Dot-joined labels, e.g. "9.3.1"; empty word gives "".
inline std::string word_to_string(std::span<const Label> w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s.push_back('.');
    s += std::to_string(w[i]);
  }
  return s;
}

}  // namespace percoqs
