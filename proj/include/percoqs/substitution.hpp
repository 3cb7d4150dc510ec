#pragma once

// Boundary-death substitution: a surviving node is "flagged" when none of
// its boundary children survive, and every letter written under a flagged
// parent is preceded by the substitution word eta. The resulting map on
// corners, f(Pi(i)) = Pi(tilde(i)), pulls cubes away from their parents'
// faces and shrinks them by M^-K.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "percoqs/errors.hpp"
#include "percoqs/lattice.hpp"
#include "percoqs/percolation.hpp"

namespace percoqs {

/// Word after substitution, with the 1-based source positions at which eta
/// was inserted.
struct TildeWord {
  Word labels;
  std::vector<std::size_t> insertions;

  /// Remove each inserted eta block.
  Word source(std::size_t K) const {
    Word out;
    std::size_t i = 0;
    std::size_t ins = 0;
    while (i < labels.size()) {
      if (ins < insertions.size() && insertions[ins] == out.size() + 1) {
        i += K;
        ++ins;
      }
      out.push_back(labels.at(i++));
    }
    return out;
  }

  friend bool operator==(const TildeWord&, const TildeWord&) = default;
};

class FlaggedTree {
 public:
  explicit FlaggedTree(PercTree tree) : tree_(std::move(tree)) {
    const int n = tree_.depth();
    const Label boundary = tree_.lattice().boundary_count();
    const std::uint32_t K = static_cast<std::uint32_t>(tree_.params().K);
    flags_.resize(static_cast<std::size_t>(n));
    tilde_len_.resize(static_cast<std::size_t>(n) + 1);
    insertions_.resize(static_cast<std::size_t>(n) + 1);
    tilde_len_[0].assign(1, 0);
    insertions_[0].assign(1, 0);
    for (int k = 0; k < n; ++k) {
      const std::size_t cnt = tree_.count(k);
      auto& fl = flags_[static_cast<std::size_t>(k)];
      fl.resize(cnt);
      for (std::size_t i = 0; i < cnt; ++i) {
        const auto [lo, hi] = tree_.children(k, i);
        fl[i] = (lo == hi || tree_.node(k + 1, lo).label > boundary) ? 1 : 0;
      }
      const auto& up_len = tilde_len_[static_cast<std::size_t>(k)];
      const auto& up_ins = insertions_[static_cast<std::size_t>(k)];
      auto& len = tilde_len_[static_cast<std::size_t>(k) + 1];
      auto& ins = insertions_[static_cast<std::size_t>(k) + 1];
      const auto down = tree_.level(k + 1);
      len.resize(down.size());
      ins.resize(down.size());
      for (std::size_t j = 0; j < down.size(); ++j) {
        const std::uint32_t p = down[j].parent;
        len[j] = up_len[p] + 1 + (fl[p] ? K : 0);
        ins[j] = up_ins[p] + (fl[p] ? 1 : 0);
      }
    }
  }

  const PercTree& tree() const { return tree_; }
  const Lattice& lattice() const { return tree_.lattice(); }
  const Params& params() const { return tree_.params(); }
  int depth() const { return tree_.depth(); }

  /// Stretch flag of node i at level k; unknown at the deepest level.
  std::optional<bool> flag(int k, std::size_t i) const {
    if (k < 0 || k >= depth()) return std::nullopt;
    return flags_[static_cast<std::size_t>(k)][i] != 0;
  }

  /// Stretch flag of a word; unknown if it does not survive or sits at the deepest level.
  std::optional<bool> flag(std::span<const Label> w) const {
    const auto i = tree_.find(w);
    if (!i) return std::nullopt;
    return flag(static_cast<int>(w.size()), *i);
  }

  std::uint32_t tilde_length(int k, std::size_t i) const {
    return tilde_len_[static_cast<std::size_t>(k)][i];
  }
  std::span<const std::uint32_t> tilde_lengths(int k) const {
    return tilde_len_.at(static_cast<std::size_t>(k));
  }
  std::uint32_t insertion_count(int k, std::size_t i) const {
    return insertions_[static_cast<std::size_t>(k)][i];
  }

 private:
  PercTree tree_;
  std::vector<std::vector<std::uint8_t>> flags_;
  std::vector<std::vector<std::uint32_t>> tilde_len_;
  std::vector<std::vector<std::uint32_t>> insertions_;
};

inline FlaggedTree compute_flags(PercTree tree) {
  if (tree.depth() < 1) throw PreconditionError("flags need a tree of depth >= 1");
  return FlaggedTree(std::move(tree));
}

/// Single pass over the source letters: letter n is preceded by eta iff the
/// source prefix of length n-1 is flagged. Inserted letters are never
/// themselves examined.
inline TildeWord tilde(const FlaggedTree& ft, std::span<const Label> w) {
  ft.lattice().check_word(w);
  const PercTree& t = ft.tree();
  if (w.size() > static_cast<std::size_t>(t.depth()))
    throw PreconditionError("word longer than the sampled depth");
  const Word& eta = ft.params().eta;
  TildeWord out;
  out.labels.reserve(w.size() * (eta.size() + 1));
  std::size_t node = 0;
  for (std::size_t n = 1; n <= w.size(); ++n) {
    const int k = static_cast<int>(n) - 1;
    const auto fl = ft.flag(k, node);
    if (!fl) throw PreconditionError("flag undefined on prefix of length " + std::to_string(k));
    if (*fl) {
      out.labels.insert(out.labels.end(), eta.begin(), eta.end());
      out.insertions.push_back(n);
    }
    out.labels.push_back(w[n - 1]);
    if (n < w.size()) {
      const auto [lo, hi] = t.children(k, node);
      std::size_t next = hi;
      for (std::size_t c = lo; c < hi; ++c)
        if (t.node(k + 1, c).label == w[n - 1]) {
          next = c;
          break;
        }
      if (next == hi)
        throw PreconditionError("prefix " + word_to_string(w.subspan(0, n)) + " does not survive");
      node = next;
    }
  }
  return out;
}

/// Tilde word of the surviving node i at level k.
inline TildeWord tilde_of_node(const FlaggedTree& ft, int k, std::size_t i) {
  return tilde(ft, ft.tree().word(k, i));
}

/// Corner of the image cube Q_tilde(w), i.e. f(Pi(w)).
inline ExactPoint f_point(const FlaggedTree& ft, std::span<const Label> w) {
  return ft.lattice().pi(tilde(ft, w).labels);
}

/// Covering {Q_tilde(i) : i in T_n} of the image set.
inline std::vector<Box> image_cover(const FlaggedTree& ft, int n) {
  const PercTree& t = ft.tree();
  if (n < 0 || n > t.depth()) throw PreconditionError("cover level beyond the sampled depth");
  const Lattice& lat = ft.lattice();
  const std::size_t d = static_cast<std::size_t>(lat.d());
  const BigInt M = lat.M();
  const Word& eta = ft.params().eta;

  // Corner numerators at each node's own tilde level, built top-down.
  std::vector<std::vector<BigInt>> corners(1, std::vector<BigInt>(d, BigInt(0)));
  for (int k = 0; k < n; ++k) {
    const auto down = t.level(k + 1);
    std::vector<std::vector<BigInt>> next(down.size());
    for (std::size_t j = 0; j < down.size(); ++j) {
      const std::uint32_t p = down[j].parent;
      std::vector<BigInt> c = corners[p];
      if (*ft.flag(k, p)) {
        for (Label e : eta) {
          const Offset& o = lat.offset(e);
          for (std::size_t q = 0; q < d; ++q) c[q] = c[q] * M + o[q];
        }
      }
      const Offset& o = lat.offset(down[j].label);
      for (std::size_t q = 0; q < d; ++q) c[q] = c[q] * M + o[q];
      next[j] = std::move(c);
    }
    corners = std::move(next);
  }
  std::vector<Box> out;
  out.reserve(corners.size());
  for (std::size_t j = 0; j < corners.size(); ++j) {
    const int level = static_cast<int>(ft.tilde_length(n, j));
    out.push_back(Box{ExactPoint(lat.M(), level, std::move(corners[j])), level});
  }
  return out;
}

/// |f(x)-f(y)| M^{|tilde k|-|k|} / |x-y| for the corners x = Pi(i), y = Pi(j)
/// with k = i ^ j.
inline Rational comparability_ratio(const FlaggedTree& ft, std::span<const Label> i,
                                    std::span<const Label> j) {
  if (i.size() != j.size()) throw PreconditionError("comparability ratio needs equal-length words");
  const Lattice& lat = ft.lattice();
  const MAdic den = dist_max(lat.pi(i), lat.pi(j));
  if (den.num == 0) throw DomainError("coincident corners");
  const MAdic num = dist_max(f_point(ft, i), f_point(ft, j));
  const std::size_t k = meet_length(i, j);
  const std::size_t kt = tilde(ft, i.subspan(0, k)).labels.size();
  const int M = lat.M();
  // (a / M^la) * M^e / (b / M^lb) = a M^{lb+e} / (b M^la)
  const int e = static_cast<int>(kt) - static_cast<int>(k);
  return Rational(num.num * big_pow(M, den.level + e), den.num * big_pow(M, num.level));
}

}  // namespace percoqs
