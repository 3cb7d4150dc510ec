#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <map>

#include "percoqs/io.hpp"
#include "percoqs/percolation.hpp"
#include "percoqs/seeding.hpp"

using namespace percoqs;

namespace {

// Survival to generation n of a Galton-Watson process with
// Binomial(m, p) offspring: q_{k+1} = 1 - (1 - p q_k)^m, q_0 = 1.
double gw_survival(double p, int m, int n) {
  double q = 1.0;
  for (int k = 0; k < n; ++k) q = 1.0 - std::pow(1.0 - p * q, m);
  return q;
}

// Homogeneity chi-square p-value for two samples of small integers; bins
// are merged from the left until both expected counts reach 5.
double two_sample_chi2_pvalue(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, std::pair<double, double>> h;
  for (int x : a) h[x].first += 1;
  for (int x : b) h[x].second += 1;
  const double na = a.size(), nb = b.size();
  std::vector<std::pair<double, double>> bins;
  std::pair<double, double> cur{0, 0};
  for (const auto& [k, c] : h) {
    cur.first += c.first;
    cur.second += c.second;
    const double tot = cur.first + cur.second;
    if (tot * na / (na + nb) >= 5 && tot * nb / (na + nb) >= 5) {
      bins.push_back(cur);
      cur = {0, 0};
    }
  }
  if (cur.first + cur.second > 0) {
    if (bins.empty()) return 1.0;
    bins.back().first += cur.first;
    bins.back().second += cur.second;
  }
  double chi2 = 0.0;
  for (const auto& [x, y] : bins) {
    const double tot = x + y;
    const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
    chi2 += (x - ea) * (x - ea) / ea + (y - eb) * (y - eb) / eb;
  }
  if (bins.size() < 2) return 1.0;
  boost::math::chi_squared dist(static_cast<double>(bins.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, chi2));
}

const Params kP7 = make_params(2, 3, 0.7);
const double kAlmostOne = 1.0 - std::ldexp(1.0, -40);

}  // namespace

TEST(Seeding, DigestVectors) {
  // Reference digests computed with an independent SHA-256 tool.
  EXPECT_EQ(leading_u64(sha256("42:9")), 8787383835065114363ULL);
  EXPECT_EQ(leading_u64(sha256("7:9.3")), 4596291574121654244ULL);
  EXPECT_EQ(verdict_message(7, Word{9, 3}), "7:9.3");
  EXPECT_TRUE(node_survives(SeedPolicy{42}, 0.5, Word{9}));
  EXPECT_FALSE(node_survives(SeedPolicy{0}, 0.5, Word{1}));
  EXPECT_THROW(node_survives(SeedPolicy{0}, 0.5, Word{}), PreconditionError);
  EXPECT_EQ(derive_seed(42, "tree", 0), 10609228950376124163ULL);
}

TEST(Seeding, Thresholds) {
  EXPECT_EQ(survival_threshold(0.0), 0u);
  EXPECT_EQ(survival_threshold(0.5), std::uint64_t{1} << 63);
  EXPECT_EQ(survival_threshold(1.0), std::numeric_limits<std::uint64_t>::max());
  EXPECT_FALSE(verdict("anything", 0));
  for (std::uint64_t s = 0; s < 50; ++s) {
    EXPECT_TRUE(SeedPolicy{s}.survives(kAlmostOne, Word{1, 2}));
    EXPECT_FALSE(SeedPolicy{s}.survives(1e-300, Word{1, 2}));
  }
}

TEST(Sample, RootOnlyAtDepthZero) {
  const PercTree t = sample_tree(kP7, 0, 42);
  EXPECT_EQ(t.depth(), 0);
  EXPECT_EQ(t.count(0), 1u);
  EXPECT_TRUE(t.word(0, 0).empty());
  EXPECT_THROW(sample_tree(kP7, -1, 42), PreconditionError);
}

TEST(Sample, FullTreeNearOne) {
  const PercTree t = sample_tree(make_params(2, 3, kAlmostOne), 3, 5);
  for (int k = 0; k <= 3; ++k) EXPECT_EQ(t.count(k), static_cast<std::size_t>(std::pow(9, k)));
}

TEST(Sample, VerdictsMatchNodeRule) {
  const PercTree t = sample_tree(kP7, 3, 11);
  const SeedPolicy pol{11};
  for (int k = 1; k <= 3; ++k)
    for (std::size_t i = 0; i < t.count(k); ++i) EXPECT_TRUE(node_survives(pol, 0.7, t.word(k, i)));
  // every dead child of a survivor really fails its verdict
  for (int k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < t.count(k); ++i) {
      const Word w = t.word(k, i);
      for (Label j = 1; j <= 9; ++j) {
        Word c = w;
        c.push_back(j);
        EXPECT_EQ(t.survives(c), node_survives(pol, 0.7, c));
      }
    }
}

TEST(Sample, PrefixClosedAndSorted) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PercTree t = sample_tree(kP7, 4, seed);
    for (int k = 1; k <= 4; ++k) {
      const auto words = t.survivors(k);
      EXPECT_TRUE(std::is_sorted(words.begin(), words.end()));
      for (const Word& w : words) EXPECT_TRUE(t.survives(Word(w.begin(), w.end() - 1)));
    }
  }
}

TEST(Sample, WorkerCountNeverChangesBytes) {
  const std::string ref = dump_canonical(tree_to_json(sample_tree(kP7, 5, 42, {1, 100'000'000})));
  for (unsigned w : {2u, 4u, 16u})
    EXPECT_EQ(dump_canonical(tree_to_json(sample_tree(kP7, 5, 42, {w, 100'000'000}))), ref);
}

TEST(Sample, NodeBudgetIsExplicit) {
  EXPECT_THROW(sample_tree(make_params(2, 3, kAlmostOne), 4, 1, {1, 1000}), CapacityError);
  EXPECT_NO_THROW(sample_tree(make_params(2, 3, kAlmostOne), 3, 1, {1, 1000}));
}

TEST(Sample, MeanSurvivorsSmall) {
  // E|T_n| = (pM^d)^n; 3 standard errors over 400 seeds.
  const int n = 3, S = 400;
  double sum = 0, sq = 0;
  for (int s = 0; s < S; ++s) {
    const double c = static_cast<double>(sample_tree(kP7, n, derive_seed(9, "mean", s)).count(n));
    sum += c;
    sq += c * c;
  }
  const double mean = sum / S;
  const double se = std::sqrt((sq / S - mean * mean) / (S - 1));
  EXPECT_NEAR(mean, std::pow(6.3, n), 3 * se);
}

TEST(NonExtinct, FirstAttemptNearOne) {
  const auto s = sample_nonextinct(make_params(2, 3, kAlmostOne), 3, 7);
  EXPECT_EQ(s.rejections, 0u);
  EXPECT_EQ(s.tree.seed(), 7u);
}

TEST(NonExtinct, SubcriticalBudgetExhausted) {
  const Params sub = make_params(2, 3, 1.0 / 18.0);
  try {
    sample_nonextinct(sub, 20, 1, {}, 300);
    FAIL() << "expected capacity error";
  } catch (const CapacityError& e) {
    EXPECT_NE(std::string(e.what()).find("subcritical"), std::string::npos);
  }
}

TEST(NonExtinct, AcceptanceMatchesGaltonWatson) {
  const Params pr = make_params(2, 3, 0.2);
  const double q = gw_survival(0.2, 9, 6);
  EXPECT_NEAR(q, 0.7864339829981728, 1e-12);
  std::uint64_t accepted = 0, attempts = 0;
  for (std::uint64_t i = 0; i < 1500; ++i) {
    const auto s = sample_nonextinct(pr, 6, derive_seed(3, "gw", i) & 0xffffffffffULL);
    accepted += 1;
    attempts += s.rejections + 1;
  }
  const double qhat = static_cast<double>(accepted) / static_cast<double>(attempts);
  const double sigma = std::sqrt(q * (1 - q) / static_cast<double>(attempts));
  EXPECT_NEAR(qhat, q, 3 * sigma);
}

TEST(Subtree, EmptyWordIsIdentity) {
  const PercTree t = sample_tree(kP7, 4, 3);
  EXPECT_EQ(subtree(t, Word{}), t);
}

TEST(Subtree, SuffixesOfExtensions) {
  const PercTree t = sample_tree(kP7, 5, 3);
  const Word w = t.word(2, t.count(2) / 2);
  const PercTree s = subtree(t, w);
  EXPECT_EQ(s.depth(), 3);
  EXPECT_EQ(s.prefix(), w);
  for (int k = 0; k <= 3; ++k) {
    std::vector<Word> expect;
    for (const Word& x : t.survivors(2 + k))
      if (is_prefix(w, x)) expect.emplace_back(x.begin() + 2, x.end());
    EXPECT_EQ(s.survivors(k), expect);
  }
  // subtrees of subtrees compose
  const Word v = s.word(1, 0);
  EXPECT_EQ(subtree(s, v), subtree(t, concat(w, v)));
  EXPECT_THROW(subtree(t, Word{w[0], w[1], 10}), DomainError);
}

TEST(Subtree, DeadRootRejected) {
  const PercTree t = sample_tree(make_params(2, 3, 0.3), 3, 17);
  for (Label l = 1; l <= 9; ++l)
    if (!t.survives(Word{l})) {
      EXPECT_THROW(subtree(t, Word{l}), DomainError);
      return;
    }
}

TEST(Subtree, SelfSimilarInLaw) {
  const Word w{9};
  std::vector<int> sub, fresh;
  for (std::uint64_t i = 0; sub.size() < 5000; ++i) {
    const PercTree t = sample_tree(kP7, 3, derive_seed(5, "sub", i));
    if (t.survives(w)) sub.push_back(static_cast<int>(subtree(t, w).count(2)));
  }
  for (std::uint64_t i = 0; i < 5000; ++i)
    fresh.push_back(static_cast<int>(sample_tree(kP7, 2, derive_seed(5, "fresh", i)).count(2)));
  EXPECT_GT(two_sample_chi2_pvalue(sub, fresh), 0.01);
}

TEST(Tree, FromWordsValidates) {
  const Params pr = make_params(2, 3, 0.5);
  EXPECT_NO_THROW(PercTree::from_words(pr, 0, 2, {{{}}, {{9}, {3}}, {{9, 9}}}));
  EXPECT_THROW(PercTree::from_words(pr, 0, 2, {{{}}, {{3}}, {{9, 9}}}), DomainError);
  EXPECT_THROW(PercTree::from_words(pr, 0, 1, {{{}}, {{3}, {3}}}), DomainError);
  EXPECT_THROW(PercTree::from_words(pr, 0, 1, {{{}}, {{10}}}), DomainError);
  EXPECT_THROW(PercTree::from_words(pr, 0, 2, {{{}}, {{3}}}), DomainError);
  const PercTree t = PercTree::from_words(pr, 0, 2, {{{}}, {{9}, {3}}, {{9, 9}}});
  EXPECT_EQ(t.survivors(1), (std::vector<Word>{{3}, {9}}));
  EXPECT_EQ(t.truncated(1).depth(), 1);
}
