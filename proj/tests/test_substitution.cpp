#include <gtest/gtest.h>

#include <set>

#include "percoqs/analysis.hpp"
#include "percoqs/experiments.hpp"
#include "percoqs/substitution.hpp"
#include "test_util.hpp"

using namespace percoqs;
using percoqs::testing::point;

namespace {

const Params kP32 = make_params(2, 3, 0.5);

// root -> {3, 9}; [9] -> {9}
PercTree mixed_tree() { return PercTree::from_words(kP32, 0, 2, {{{}}, {{9}, {3}}, {{9, 9}}}); }

// root -> {9}; [9] -> {1, 3}
PercTree flagged_root_tree() { return PercTree::from_words(kP32, 0, 2, {{{}}, {{9}}, {{9, 1}, {9, 3}}}); }

}  // namespace

TEST(Flags, HandBuiltTree) {
  const FlaggedTree ft = compute_flags(mixed_tree());
  EXPECT_EQ(ft.flag(Word{}), false);
  EXPECT_EQ(ft.flag(Word{9}), true);
  EXPECT_EQ(ft.flag(Word{3}), true);   // no children at all
  EXPECT_EQ(ft.flag(Word{9, 9}), std::nullopt);  // deepest level
  EXPECT_EQ(ft.flag(Word{5}), std::nullopt);     // not surviving
}

TEST(Flags, InteriorOnlyRootIsFlagged) {
  const FlaggedTree ft = compute_flags(flagged_root_tree());
  EXPECT_EQ(ft.flag(Word{}), true);
  EXPECT_EQ(ft.flag(Word{9}), false);
}

TEST(Flags, FullTreeHasNoFlags) {
  const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 1.0 - 1e-12), 3, 1));
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < ft.tree().count(k); ++i) EXPECT_EQ(ft.flag(k, i), false);
}

TEST(Flags, DefinitionOnSampledTrees) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 0.3), 5, seed));
    const PercTree& t = ft.tree();
    for (int k = 0; k < 5; ++k)
      for (std::size_t i = 0; i < t.count(k); ++i) {
        const Word w = t.word(k, i);
        bool any_boundary = false;
        for (Label j = 1; j <= 8; ++j) any_boundary |= t.survives(concat(w, Word{j}));
        EXPECT_EQ(*ft.flag(k, i), !any_boundary);
        if (*ft.flag(k, i)) {
          const auto [lo, hi] = t.children(k, i);
          for (std::size_t c = lo; c < hi; ++c) EXPECT_GT(t.node(k + 1, c).label, 8u);
        }
      }
  }
  EXPECT_THROW(compute_flags(sample_tree(kP32, 0, 1)), PreconditionError);
}

TEST(Tilde, Examples) {
  const FlaggedTree ft = compute_flags(flagged_root_tree());
  const TildeWord tw = tilde(ft, Word{9, 3});
  EXPECT_EQ(tw.labels, (Word{9, 9, 3}));
  EXPECT_EQ(tw.insertions, (std::vector<std::size_t>{1}));
  EXPECT_EQ(tw.source(1), (Word{9, 3}));
  EXPECT_TRUE(tilde(ft, Word{}).labels.empty());

  const FlaggedTree none = compute_flags(sample_tree(make_params(2, 3, 1.0 - 1e-12), 3, 1));
  EXPECT_EQ(tilde(none, Word{4, 9, 1}).labels, (Word{4, 9, 1}));
}

TEST(Tilde, SinglePassNeverReexamined) {
  // eta = [9, 9] under a flagged root: the inserted letters are not
  // themselves substituted even though [9] is flagged below.
  const Params pr = make_params(2, 3, 0.5, 2);
  const PercTree t = PercTree::from_words(pr, 0, 2, {{{}}, {{9}}, {{9, 9}}});
  const FlaggedTree ft = compute_flags(t);
  EXPECT_EQ(tilde(ft, Word{9, 9}).labels, (Word{9, 9, 9, 9, 9, 9}));
  EXPECT_EQ(tilde(ft, Word{9}).labels, (Word{9, 9, 9}));
}

TEST(Tilde, Preconditions) {
  const FlaggedTree ft = compute_flags(mixed_tree());
  EXPECT_THROW(tilde(ft, Word{9, 9, 9}), PreconditionError);  // beyond depth
  EXPECT_THROW(tilde(ft, Word{5, 1}), PreconditionError);     // dead prefix
  EXPECT_THROW(tilde(ft, Word{10}), DomainError);
  // the last letter itself need not survive: only prefixes are read
  EXPECT_NO_THROW(tilde(ft, Word{9, 1}));
}

TEST(Tilde, LengthBookkeepingAndSource) {
  for (int K : {1, 2, 3}) {
    const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 0.35, K), 5, 21));
    const PercTree& t = ft.tree();
    for (int k = 0; k <= 5; ++k)
      for (std::size_t i = 0; i < t.count(k); ++i) {
        const Word w = t.word(k, i);
        const TildeWord tw = tilde(ft, w);
        EXPECT_EQ(tw.labels.size(), w.size() + K * tw.insertions.size());
        EXPECT_EQ(tw.labels.size(), ft.tilde_length(k, i));
        EXPECT_EQ(tw.insertions.size(), ft.insertion_count(k, i));
        EXPECT_GE(tw.labels.size(), w.size());
        EXPECT_LE(tw.labels.size(), (K + 1) * w.size());
        EXPECT_TRUE(std::is_sorted(tw.insertions.begin(), tw.insertions.end()));
        EXPECT_EQ(tw.source(K), w);
      }
  }
}

TEST(FPoint, Examples) {
  const FlaggedTree ft = compute_flags(flagged_root_tree());
  EXPECT_EQ(f_point(ft, Word{9, 3}), point(3, 3, {12, 14}));
  EXPECT_EQ(f_point(ft, Word{}), point(3, 0, {0, 0}));
  const FlaggedTree none = compute_flags(sample_tree(make_params(2, 3, 1.0 - 1e-12), 2, 1));
  EXPECT_EQ(f_point(none, Word{4, 7}), none.lattice().pi(Word{4, 7}));
}

TEST(ImageCover, FullGridNearOne) {
  const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 1.0 - 1e-12), 2, 1));
  const auto cover = image_cover(ft, 2);
  ASSERT_EQ(cover.size(), 81u);
  std::set<std::vector<BigInt>> corners;
  for (const Box& b : cover) {
    EXPECT_EQ(b.level, 2);
    corners.insert(b.corner.at_level(2).nums());
  }
  EXPECT_EQ(corners.size(), 81u);
}

TEST(ImageCover, MatchesTildeAndPartitionSum) {
  const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 0.3, 2), 6, 4));
  for (int n = 0; n <= 6; ++n) {
    const auto cover = image_cover(ft, n);
    ASSERT_EQ(cover.size(), ft.tree().count(n));
    Rational sum1 = 0;
    std::set<std::pair<int, std::vector<BigInt>>> distinct;
    for (std::size_t i = 0; i < cover.size(); ++i) {
      const Word w = ft.tree().word(n, i);
      EXPECT_EQ(cover[i], ft.lattice().box(tilde(ft, w).labels));
      EXPECT_GE(cover[i].level, n);
      EXPECT_LE(cover[i].level, 3 * n);
      sum1 += Rational(1, big_pow(3, cover[i].level));
      distinct.insert({cover[i].level, cover[i].corner.at_level(cover[i].level).nums()});
    }
    EXPECT_EQ(distinct.size(), cover.size());
    EXPECT_EQ(*partition_sum(ft, 1.0, n).exact, sum1);
  }
}

TEST(Comparability, IdentityAndSiblings) {
  const FlaggedTree none = compute_flags(sample_tree(make_params(2, 3, 1.0 - 1e-12), 2, 1));
  EXPECT_EQ(comparability_ratio(none, Word{1, 2}, Word{9, 5}), 1);
  const FlaggedTree ft = compute_flags(flagged_root_tree());
  EXPECT_EQ(comparability_ratio(ft, Word{9, 1}, Word{9, 3}), 1);
  EXPECT_THROW(comparability_ratio(ft, Word{9, 1}, Word{9, 1}), DomainError);
  EXPECT_THROW(comparability_ratio(ft, Word{9}, Word{9, 1}), PreconditionError);
}

TEST(Comparability, ExhaustiveBracketSmallDepth) {
  // All pairs of level-n survivors, n <= 4, on flag-rich trees.
  for (int K : {1, 2})
    for (double p : {0.3, 0.45})
      for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Params pr = make_params(2, 3, p, K);
        const auto s = sample_nonextinct(pr, 4, derive_seed(seed, "cmp", K));
        const FlaggedTree ft(s.tree);
        const Rational hi = big_pow(3, K + 3);
        const Rational lo = Rational(1, big_pow(3, K + 3));
        for (int n = 1; n <= 4; ++n) {
          const auto words = ft.tree().survivors(n);
          for (std::size_t a = 0; a < words.size(); ++a)
            for (std::size_t b = a + 1; b < words.size(); ++b) {
              const Rational r = comparability_ratio(ft, words[a], words[b]);
              EXPECT_GE(r, lo);
              EXPECT_LE(r, hi);
            }
        }
      }
}

TEST(Injectivity, HashedMatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 0.4, 1 + seed % 2), 5, seed));
    const InjectivityResult r = tilde_injectivity(ft);
    EXPECT_EQ(r.duplicates, 0u);
    std::size_t words = 0;
    for (int n = 1; n <= 5; ++n) {
      std::set<Word> seen;
      for (std::size_t i = 0; i < ft.tree().count(n); ++i) seen.insert(tilde_of_node(ft, n, i).labels);
      EXPECT_EQ(seen.size(), ft.tree().count(n));
      words += ft.tree().count(n);
    }
    EXPECT_EQ(r.words, words);
  }
}

TEST(Conjugation, SplittingIdentity) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 0.4, 2), 5, seed + 100));
    const auto [checked, bad] = conjugation_check(ft, 3);
    EXPECT_GT(checked, 0u);
    EXPECT_EQ(bad, 0u);
  }
}

TEST(Conjugation, SubtreeRootFlagIsPrefixFlag) {
  const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 0.3), 4, 8));
  for (std::size_t i = 0; i < ft.tree().count(2); ++i) {
    const Word w = ft.tree().word(2, i);
    EXPECT_EQ(compute_flags(subtree(ft.tree(), w)).flag(Word{}), ft.flag(w));
  }
}

TEST(SharedFace, ApproachPairsWithinBound) {
  std::size_t pairs = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const FlaggedTree ft = compute_flags(sample_tree(make_params(2, 3, 0.7), 5, seed));
    const FaceCheck fc = shared_face_check(ft, 5000);
    EXPECT_EQ(fc.violations, 0u);
    EXPECT_LE(fc.worst, 1);
    pairs += fc.pairs;
  }
  EXPECT_GT(pairs, 100u);
}

TEST(SharedFace, HandBuiltFlaggedAncestor) {
  // k = [9] sits under a flagged root. Its children 2 = (0,1) and 9 = (1,1)
  // are adjacent along axis 0, with tails 8 = (2,2) under 2 and 3 = (0,2)
  // under 9.
  const PercTree t = PercTree::from_words(kP32, 0, 3, {{{}}, {{9}}, {{9, 2}, {9, 9}}, {{9, 2, 8}, {9, 9, 3}}});
  const FlaggedTree ft = compute_flags(t);
  EXPECT_EQ(ft.flag(Word{}), true);
  const FaceCheck fc = shared_face_check(ft);
  EXPECT_GE(fc.pairs, 1u);
  EXPECT_EQ(fc.violations, 0u);
  // |f(9.2.8) - f(9.9.3)| is M^-(|tilde(9)| + 2) along axis 0
  EXPECT_EQ(dist_max(f_point(ft, Word{9, 2, 8}), f_point(ft, Word{9, 9, 3})), (MAdic{1, 4, 3}));
}
