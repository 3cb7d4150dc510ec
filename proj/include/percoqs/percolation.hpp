#pragma once

// Truncated fractal percolation trees T_0, ..., T_n with deterministic,
// traversal-independent sampling.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "percoqs/errors.hpp"
#include "percoqs/lattice.hpp"
#include "percoqs/parallel.hpp"
#include "percoqs/seeding.hpp"

namespace percoqs {

struct TreeNode {
  std::uint32_t parent = 0;  // index into the previous level
  Label label = 0;           // 0 for the root

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Realization of the survivors up to a fixed depth. Level k lists the
/// surviving k-words in lexicographic order; the children of a node form a
/// contiguous, label-sorted range of the next level. Immutable once built.
///
/// `prefix` is non-empty only for subtrees: node word v then stands for the
/// word prefix·v of the tree it was cut from.
class PercTree {
 public:
  PercTree(Params params, std::uint64_t seed, int depth, Word prefix,
           std::vector<std::vector<TreeNode>> levels)
      : lattice_(std::move(params)), seed_(seed), depth_(depth), prefix_(std::move(prefix)),
        levels_(std::move(levels)) {
    if (depth_ < 0) throw PreconditionError("depth must be >= 0");
    if (levels_.size() != static_cast<std::size_t>(depth_) + 1)
      throw DomainError("tree must list depth+1 levels");
    if (levels_[0].size() != 1 || levels_[0][0].label != 0)
      throw DomainError("level 0 must hold exactly the root");
    lattice_.check_word(prefix_);
    child_begin_.resize(static_cast<std::size_t>(depth_));
    for (int k = 0; k < depth_; ++k) {
      const auto& up = levels_[static_cast<std::size_t>(k)];
      const auto& down = levels_[static_cast<std::size_t>(k) + 1];
      auto& cb = child_begin_[static_cast<std::size_t>(k)];
      cb.assign(up.size() + 1, 0);
      std::size_t j = 0;
      for (std::size_t i = 0; i < up.size(); ++i) {
        cb[i] = static_cast<std::uint32_t>(j);
        Label last = 0;
        while (j < down.size() && down[j].parent == i) {
          lattice_.check_label(down[j].label);
          if (down[j].label <= last) throw DomainError("children must be strictly label-sorted");
          last = down[j].label;
          ++j;
        }
      }
      cb[up.size()] = static_cast<std::uint32_t>(j);
      if (j != down.size()) throw DomainError("level " + std::to_string(k + 1) + " is not prefix-closed or not sorted");
    }
  }

  /// Build from explicit survivor word lists (level 0 must be {empty}).
  static PercTree from_words(Params params, std::uint64_t seed, int depth,
                             const std::vector<std::vector<Word>>& words, Word prefix = {}) {
    if (words.size() != static_cast<std::size_t>(depth) + 1)
      throw DomainError("survivor lists must cover levels 0..depth");
    if (words[0].size() != 1 || !words[0][0].empty()) throw DomainError("level 0 must be {empty word}");
    std::vector<std::vector<TreeNode>> levels(words.size());
    levels[0].push_back(TreeNode{});
    for (std::size_t k = 1; k < words.size(); ++k) {
      std::vector<Word> sorted = words[k];
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw DomainError("duplicate survivor word");
      std::vector<Word> parents = words[k - 1];
      std::sort(parents.begin(), parents.end());
      for (const Word& w : sorted) {
        if (w.size() != k) throw DomainError("word length does not match its level");
        const Word up(w.begin(), w.end() - 1);
        auto it = std::lower_bound(parents.begin(), parents.end(), up);
        if (it == parents.end() || *it != up) throw DomainError("survivor set is not prefix-closed");
        levels[k].push_back(TreeNode{static_cast<std::uint32_t>(it - parents.begin()), w.back()});
      }
    }
    return PercTree(std::move(params), seed, depth, std::move(prefix), std::move(levels));
  }

  const Params& params() const { return lattice_.params(); }
  const Lattice& lattice() const { return lattice_; }
  std::uint64_t seed() const { return seed_; }
  int depth() const { return depth_; }
  const Word& prefix() const { return prefix_; }

  std::size_t count(int k) const { return levels_.at(static_cast<std::size_t>(k)).size(); }
  std::span<const TreeNode> level(int k) const { return levels_.at(static_cast<std::size_t>(k)); }
  const TreeNode& node(int k, std::size_t i) const { return levels_[static_cast<std::size_t>(k)][i]; }

  std::size_t total_nodes() const {
    std::size_t n = 0;
    for (const auto& l : levels_) n += l.size();
    return n;
  }

  /// Index range [first, last) of the children of node i at level k < depth.
  std::pair<std::size_t, std::size_t> children(int k, std::size_t i) const {
    if (k < 0 || k >= depth_) throw PreconditionError("children requested at the deepest level");
    const auto& cb = child_begin_[static_cast<std::size_t>(k)];
    return {cb[i], cb[i + 1]};
  }

  Word word(int k, std::size_t i) const {
    Word w(static_cast<std::size_t>(k));
    for (int lvl = k; lvl > 0; --lvl) {
      const TreeNode& n = node(lvl, i);
      w[static_cast<std::size_t>(lvl) - 1] = n.label;
      i = n.parent;
    }
    return w;
  }

  /// Index of w among the survivors of level |w|, if it survives.
  std::optional<std::size_t> find(std::span<const Label> w) const {
    if (w.size() > static_cast<std::size_t>(depth_)) return std::nullopt;
    std::size_t i = 0;
    for (std::size_t k = 0; k < w.size(); ++k) {
      const auto [lo, hi] = children(static_cast<int>(k), i);
      const auto& down = levels_[k + 1];
      auto first = down.begin() + static_cast<std::ptrdiff_t>(lo);
      auto last = down.begin() + static_cast<std::ptrdiff_t>(hi);
      auto it = std::lower_bound(first, last, w[k],
                                 [](const TreeNode& n, Label l) { return n.label < l; });
      if (it == last || it->label != w[k]) return std::nullopt;
      i = static_cast<std::size_t>(it - down.begin());
    }
    return i;
  }

  bool survives(std::span<const Label> w) const { return find(w).has_value(); }

  std::vector<Word> survivors(int k) const {
    std::vector<Word> out;
    out.reserve(count(k));
    for (std::size_t i = 0; i < count(k); ++i) out.push_back(word(k, i));
    return out;
  }

  PercTree truncated(int depth) const {
    if (depth < 0 || depth > depth_) throw PreconditionError("truncation depth out of range");
    std::vector<std::vector<TreeNode>> lv(levels_.begin(), levels_.begin() + depth + 1);
    return PercTree(params(), seed_, depth, prefix_, std::move(lv));
  }

  friend bool operator==(const PercTree& a, const PercTree& b) {
    return a.params() == b.params() && a.seed_ == b.seed_ && a.depth_ == b.depth_ &&
           a.prefix_ == b.prefix_ && a.levels_ == b.levels_;
  }

 private:
  Lattice lattice_;
  std::uint64_t seed_ = 0;
  int depth_ = 0;
  Word prefix_;
  std::vector<std::vector<TreeNode>> levels_;
  std::vector<std::vector<std::uint32_t>> child_begin_;
};

struct SampleOptions {
  unsigned workers = 1;
  std::uint64_t node_budget = 100'000'000;
};

namespace detail {

// Message prefix "<seed>:<w>" shared by all children of w.
inline std::string message_stem(std::uint64_t seed, std::span<const Label> w) {
  return verdict_message(seed, w);
}

inline void append_child(std::string& msg, bool parent_is_root, Label j) {
  if (!parent_is_root) msg.push_back('.');
  msg += std::to_string(j);
}

}  // namespace detail

/// Sample T_0..T_depth. Output is a pure function of (params, depth, seed).
inline PercTree sample_tree(const Params& params, int depth, std::uint64_t seed,
                            const SampleOptions& opt = {}) {
  params.validate();
  if (depth < 0) throw PreconditionError("depth must be >= 0");
  const Lattice lat(params);
  const std::uint64_t threshold = survival_threshold(params.p);
  const Label n_labels = lat.alphabet_size();

  std::vector<std::vector<TreeNode>> levels(static_cast<std::size_t>(depth) + 1);
  levels[0].push_back(TreeNode{});
  std::uint64_t total = 1;

  for (int k = 0; k < depth; ++k) {
    const auto& up = levels[static_cast<std::size_t>(k)];
    const std::size_t n_parents = up.size();
    const unsigned workers = std::max(1u, opt.workers);
    const std::size_t chunks = std::min<std::size_t>(workers, std::max<std::size_t>(n_parents, 1));
    std::vector<std::vector<TreeNode>> parts(chunks);
    parallel_chunks(n_parents, static_cast<unsigned>(chunks),
                    [&](std::size_t lo, std::size_t hi, std::size_t c) {
                      auto& out = parts[c];
                      std::string msg;
                      Word w(static_cast<std::size_t>(k));
                      for (std::size_t i = lo; i < hi; ++i) {
                        std::size_t idx = i;
                        for (int lvl = k; lvl > 0; --lvl) {
                          const TreeNode& nd = levels[static_cast<std::size_t>(lvl)][idx];
                          w[static_cast<std::size_t>(lvl) - 1] = nd.label;
                          idx = nd.parent;
                        }
                        const std::string stem = detail::message_stem(seed, w);
                        for (Label j = 1; j <= n_labels; ++j) {
                          msg = stem;
                          detail::append_child(msg, k == 0, j);
                          if (verdict(msg, threshold))
                            out.push_back(TreeNode{static_cast<std::uint32_t>(i), j});
                        }
                      }
                    });
    std::size_t n_next = 0;
    for (const auto& part : parts) n_next += part.size();
    total += n_next;
    if (total > opt.node_budget)
      throw CapacityError("node budget of " + std::to_string(opt.node_budget) +
                          " exceeded at level " + std::to_string(k + 1));
    auto& next = levels[static_cast<std::size_t>(k) + 1];
    next.reserve(n_next);
    for (auto& part : parts) next.insert(next.end(), part.begin(), part.end());
  }
  return PercTree(params, seed, depth, Word{}, std::move(levels));
}

struct NonExtinctSample {
  PercTree tree;
  std::uint64_t rejections = 0;
};

/// Rejection sampling on survival to `depth`: tries seed, seed+1, ...
inline NonExtinctSample sample_nonextinct(const Params& params, int depth, std::uint64_t seed,
                                          const SampleOptions& opt = {},
                                          std::uint64_t max_attempts = 1'000'000) {
  params.validate();
  const double critical = 1.0 / static_cast<double>(params.alphabet_size());
  for (std::uint64_t a = 0; a < max_attempts; ++a) {
    PercTree t = sample_tree(params, depth, seed + a, opt);
    if (t.count(depth) > 0) return NonExtinctSample{std::move(t), a};
  }
  std::string why = "rejection budget of " + std::to_string(max_attempts) +
                    " attempts exhausted without survival to depth " + std::to_string(depth);
  if (params.p <= critical)
    why += " (p <= M^-d: subcritical regime, the limit set is almost surely empty)";
  throw CapacityError(why);
}

/// Rooted subtree at a surviving word w; depth drops by |w|.
inline PercTree subtree(const PercTree& tree, std::span<const Label> w) {
  const auto root = tree.find(w);
  if (!root) throw DomainError("subtree root " + word_to_string(w) + " does not survive");
  const int base = static_cast<int>(w.size());
  const int depth = tree.depth() - base;
  std::vector<std::vector<TreeNode>> levels(static_cast<std::size_t>(depth) + 1);
  levels[0].push_back(TreeNode{});
  std::size_t lo = *root, hi = *root + 1;
  for (int j = 1; j <= depth && hi > lo; ++j) {
    const int k = base + j - 1;
    const std::size_t nlo = tree.children(k, lo).first;
    const std::size_t nhi = tree.children(k, hi - 1).second;
    auto& out = levels[static_cast<std::size_t>(j)];
    out.reserve(nhi - nlo);
    for (std::size_t i = nlo; i < nhi; ++i) {
      const TreeNode& n = tree.node(k + 1, i);
      out.push_back(TreeNode{static_cast<std::uint32_t>(n.parent - lo), n.label});
    }
    lo = nlo;
    hi = nhi;
  }
  return PercTree(tree.params(), tree.seed(), depth, concat(tree.prefix(), w), std::move(levels));
}

}  // namespace percoqs
