#include <gtest/gtest.h>

#include "gendermine/alignment.hpp"

#include <cmath>
#include <map>
#include <random>
#include <set>

using namespace gendermine::align;

namespace {

constexpr double kTol = 1e-9;
const std::string kNull(AlignmentModel::kNullWord);

Words words(const std::string& s) {
    Words out;
    std::size_t start = 0;
    while (start < s.size()) {
        auto end = s.find(' ', start);
        if (end == std::string::npos) end = s.size();
        if (end > start) out.push_back(s.substr(start, end - start));
        start = end + 1;
    }
    return out;
}

// Independent reference: the prior written straight from its definition with
// 1-based target positions, and EM by enumerating every alignment vector.
double ref_prior(std::size_t i1, std::size_t j, std::size_t m, std::size_t n, double lambda, double p0) {
    if (j == 0) return p0;
    double z = 0.0;
    for (std::size_t k = 1; k <= n; ++k)
        z += std::exp(-lambda * std::fabs(double(i1) / double(m) - double(k) / double(n)));
    return (1.0 - p0) * std::exp(-lambda * std::fabs(double(i1) / double(m) - double(j) / double(n))) / z;
}

struct Oracle {
    using Table = std::map<std::pair<std::string, std::string>, double>;
    double lambda, p0;
    std::size_t target_vocab;
    bool uniform = true;
    Table t;

    double prob(const std::string& e, const std::string& f) const {
        if (uniform) return 1.0 / double(target_vocab);
        auto it = t.find({e, f});
        return it == t.end() ? 0.0 : it->second;
    }

    // Expected counts and log-likelihood by summing over all (n+1)^m alignments.
    std::pair<Table, double> e_step(const std::vector<BitextPair>& bitext) const {
        Table counts;
        double ll = 0.0;
        for (const auto& p : bitext) {
            const auto m = p.target.size(), n = p.source.size();
            std::vector<std::size_t> a(m, 0);
            std::vector<std::pair<std::vector<std::size_t>, double>> joint;
            double total = 0.0;
            for (;;) {
                double pr = 1.0;
                for (std::size_t i = 0; i < m; ++i) {
                    const auto& e = a[i] == 0 ? kNull : p.source[a[i] - 1];
                    pr *= ref_prior(i + 1, a[i], m, n, lambda, p0) * prob(e, p.target[i]);
                }
                joint.emplace_back(a, pr);
                total += pr;
                std::size_t k = 0;
                while (k < m && ++a[k] > n) a[k++] = 0;
                if (k == m) break;
            }
            ll += std::log(total);
            for (const auto& [al, pr] : joint)
                for (std::size_t i = 0; i < m; ++i) {
                    const auto& e = al[i] == 0 ? kNull : p.source[al[i] - 1];
                    counts[{e, p.target[i]}] += pr / total;
                }
        }
        return {counts, ll};
    }

    void m_step(const Table& counts) {
        std::map<std::string, double> totals;
        for (const auto& [k, c] : counts) totals[k.first] += c;
        t.clear();
        for (const auto& [k, c] : counts) t[k] = c / totals[k.first];
        uniform = false;
    }
};

std::vector<BitextPair> random_corpus(std::mt19937_64& rng, std::size_t pairs, std::size_t max_len,
                                      std::size_t vocab) {
    std::vector<BitextPair> out;
    for (std::size_t k = 0; k < pairs; ++k) {
        BitextPair p;
        const auto n = 1 + rng() % max_len, m = 1 + rng() % max_len;
        for (std::size_t j = 0; j < n; ++j) p.source.push_back("e" + std::to_string(rng() % vocab));
        for (std::size_t i = 0; i < m; ++i) p.target.push_back("f" + std::to_string(rng() % vocab));
        out.push_back(std::move(p));
    }
    return out;
}

std::size_t target_vocab(const std::vector<BitextPair>& b) {
    std::set<std::string> v;
    for (const auto& p : b) v.insert(p.target.begin(), p.target.end());
    return v.size();
}

} // namespace

TEST(Prior, RowsSumToOne) {
    for (std::size_t m = 1; m <= 6; ++m)
        for (std::size_t n = 1; n <= 6; ++n)
            for (std::size_t i = 0; i < m; ++i) {
                double s = 0.0;
                for (auto v : prior_row(i, m, n, 4.0, 0.08)) s += v;
                EXPECT_NEAR(s, 1.0, kTol);
            }
}

TEST(Prior, MatchesDefinition) {
    for (std::size_t m = 1; m <= 5; ++m)
        for (std::size_t n = 1; n <= 5; ++n)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j <= n; ++j)
                    EXPECT_NEAR(diagonal_prior(i, j, m, n, 4.0, 0.08), ref_prior(i + 1, j, m, n, 4.0, 0.08), 1e-12);
}

TEST(Prior, ZeroTensionIsUniform) {
    for (std::size_t n = 1; n <= 7; ++n)
        for (std::size_t j = 1; j <= n; ++j)
            EXPECT_NEAR(diagonal_prior(1, j, 4, n, 1e-12, 0.08), 0.92 / double(n), kTol);
}

TEST(Prior, LargerTensionConcentratesOnTheDiagonal) {
    const std::size_t m = 5, n = 7;
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 1;
        double best_delta = 1e9;
        for (std::size_t j = 1; j <= n; ++j) {
            const double d = std::fabs(double(i + 1) / m - double(j) / n);
            if (d < best_delta - 1e-15) best_delta = d, best = j;
        }
        double prev = diagonal_prior(i, best, m, n, 0.5, 0.08);
        for (double lambda : {1.0, 2.0, 4.0, 8.0, 16.0}) {
            const double cur = diagonal_prior(i, best, m, n, lambda, 0.08);
            EXPECT_GT(cur, prev);
            prev = cur;
        }
    }
}

TEST(Em, SinglePairNullPosterior) {
    const std::vector<BitextPair> bitext{{{"a"}, {"x"}}};
    const AlignmentParams params{4.0, 0.08, 5};
    const auto model = initial_model(bitext, params);
    const auto post = link_posteriors(model, {"a"}, {"x"}, 0);
    ASSERT_EQ(post.size(), 2u);
    EXPECT_NEAR(post[1], 0.92, kTol);
    EXPECT_NEAR(post[0], 0.08, kTol);
    const auto counts = expected_counts(model, bitext);
    EXPECT_NEAR(counts.counts.at({"a", "x"}), 0.92, kTol);
}

TEST(Em, ExpectedCountsMatchExhaustiveOracle) {
    std::mt19937_64 rng(2024);
    const AlignmentParams params{4.0, 0.08, 1};
    for (int trial = 0; trial < 60; ++trial) {
        const auto bitext = random_corpus(rng, 1 + rng() % 4, 4, 1 + rng() % 5);
        Oracle oracle{params.tension, params.null_prob, target_vocab(bitext), true, {}};
        for (int iter = 0; iter <= 3; ++iter) {
            AlignmentParams p = params;
            AlignmentModel model;
            if (iter == 0) {
                model = initial_model(bitext, p);
            } else {
                p.iterations = iter;
                model = em_train(bitext, p, 2).model;
            }
            const auto got = expected_counts(model, bitext);
            const auto [want, ll] = oracle.e_step(bitext);
            EXPECT_NEAR(got.log_likelihood, ll, kTol) << "trial " << trial << " iter " << iter;
            for (const auto& [k, c] : want) {
                auto it = got.counts.find(k);
                ASSERT_NE(it, got.counts.end()) << k.first << "->" << k.second;
                EXPECT_NEAR(it->second, c, kTol) << k.first << "->" << k.second;
            }
            for (const auto& [k, c] : got.counts) {
                if (!want.contains(k)) {
                    EXPECT_NEAR(c, 0.0, kTol);
                }
            }
            oracle.m_step(want);
        }
    }
}

TEST(Em, LogLikelihoodNonDecreasingOnRandomCorpora) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const auto bitext = random_corpus(rng, 2 + rng() % 10, 7, 2 + rng() % 8);
        const auto result = em_train(bitext, AlignmentParams{4.0, 0.08, 8}, 3);
        ASSERT_EQ(result.log_likelihood.size(), 9u);
        for (std::size_t k = 1; k < result.log_likelihood.size(); ++k)
            EXPECT_GE(result.log_likelihood[k], result.log_likelihood[k - 1] - kTol) << "trial " << trial;
        EXPECT_NEAR(result.log_likelihood.back(), log_likelihood(result.model, bitext), kTol);
    }
}

TEST(Em, TablesAreRowNormalized) {
    std::mt19937_64 rng(5);
    const auto bitext = random_corpus(rng, 20, 6, 6);
    const auto model = em_train(bitext, AlignmentParams{}, 2).model;
    for (const auto& e : model.source_words()) EXPECT_NEAR(model.row_sum(e), 1.0, kTol) << e;
}

TEST(Em, ThreadCountDoesNotChangeTheModel) {
    std::mt19937_64 rng(17);
    const auto bitext = random_corpus(rng, 200, 8, 12);
    const auto a = em_train(bitext, AlignmentParams{}, 1);
    const auto b = em_train(bitext, AlignmentParams{}, 7);
    EXPECT_EQ(a.model.serialize(), b.model.serialize());
    EXPECT_EQ(a.log_likelihood, b.log_likelihood);
}

TEST(Em, EmptySidesAreSkippedAndCounted) {
    const std::vector<BitextPair> bitext{{{"a"}, {"x"}}, {{}, {"y"}}, {{"b"}, {}}};
    const auto result = em_train(bitext, AlignmentParams{}, 1);
    EXPECT_EQ(result.skipped_pairs, 2u);
}

TEST(Em, CopyCorpusLearnsIdentity) {
    const std::vector<BitextPair> bitext{{{"a"}, {"a"}}, {{"b"}, {"b"}}, {{"a", "b"}, {"a", "b"}}};
    const auto model = em_train(bitext, AlignmentParams{4.0, 0.08, 5}, 1).model;
    EXPECT_GT(model.translation_prob("a", "a"), 0.9);
    const auto links = viterbi_align(model, {"a", "b"}, {"a", "b"});
    ASSERT_EQ(links.size(), 2u);
    EXPECT_EQ(links[0], std::optional<std::size_t>(0));
    EXPECT_EQ(links[1], std::optional<std::size_t>(1));
    EXPECT_EQ(to_pharaoh(links), "0-0 1-1");
}

TEST(Viterbi, EmptyTarget) {
    const std::vector<BitextPair> bitext{{{"a"}, {"a"}}};
    const auto model = em_train(bitext, AlignmentParams{}, 1).model;
    EXPECT_TRUE(viterbi_align(model, {"a"}, {}).empty());
}

TEST(Viterbi, UnseenWordsFollowTheDiagonal) {
    const std::vector<BitextPair> bitext{{{"a", "b"}, {"x", "y"}}};
    const auto model = em_train(bitext, AlignmentParams{}, 3).model;
    const Words src{"p", "q", "r"}, tgt{"u", "v", "w"};
    const auto links = viterbi_align(model, src, tgt);
    for (std::size_t i = 0; i < 3; ++i) {
        // With a constant lexical floor the argmax is the prior's argmax.
        std::size_t best = 0;
        double best_p = diagonal_prior(i, 0, 3, 3, 4.0, 0.08);
        for (std::size_t j = 1; j <= 3; ++j)
            if (diagonal_prior(i, j, 3, 3, 4.0, 0.08) > best_p) best_p = diagonal_prior(i, j, 3, 3, 4.0, 0.08), best = j;
        ASSERT_TRUE(links[i].has_value());
        EXPECT_EQ(*links[i] + 1, best);
    }
}

TEST(Viterbi, TiesGoToTheSmallerSourcePosition) {
    // Identical source words; target position 2 of 4 sits midway between the
    // two source positions, so both links score exactly the same.
    const std::vector<BitextPair> bitext{{{"a", "a"}, {"x", "x", "x", "x"}}};
    const auto model = em_train(bitext, AlignmentParams{}, 1).model;
    const auto links = viterbi_align(model, {"a", "a"}, {"x", "x", "x", "x"});
    ASSERT_TRUE(links[2].has_value());
    EXPECT_EQ(*links[2], 0u);
}

TEST(Posteriors, SumToOne) {
    std::mt19937_64 rng(8);
    const auto bitext = random_corpus(rng, 30, 6, 6);
    const auto model = em_train(bitext, AlignmentParams{}, 2).model;
    for (const auto& p : bitext)
        for (std::size_t i = 0; i < p.target.size(); ++i) {
            double s = 0.0;
            for (auto v : link_posteriors(model, p.source, p.target, i)) s += v;
            EXPECT_NEAR(s, 1.0, kTol);
        }
}

TEST(Project, FindsTheTranslatedFocus) {
    const std::vector<BitextPair> bitext{
        {words("a nurse works"), words("une infirmière travaille")},
        {words("the nurse"), words("l' infirmière")},
        {words("a teacher works"), words("un enseignant travaille")},
        {words("the teacher"), words("l' enseignant")},
        {words("a nurse"), words("une infirmière")},
        {words("works"), words("travaille")},
    };
    const auto model = em_train(bitext, AlignmentParams{}, 1).model;
    const auto pf = project_focus(model, words("a nurse works"), 1, words("une infirmière travaille"));
    ASSERT_TRUE(pf.target_index.has_value());
    EXPECT_EQ(*pf.target_index, 1u);
    ASSERT_TRUE(pf.posterior.has_value());
    EXPECT_GT(*pf.posterior, 0.5);
    EXPECT_LE(*pf.posterior, 1.0);
}

TEST(Project, NothingLinkedGivesNone) {
    const std::vector<BitextPair> bitext{{words("a b"), words("x y")}, {words("a"), words("x")}, {words("b"), words("y")}};
    const auto model = em_train(bitext, AlignmentParams{}, 1).model;
    // "c" is unseen; both target words prefer their own source words.
    const auto pf = project_focus(model, words("a c b"), 1, words("x y"));
    EXPECT_FALSE(pf.target_index.has_value());
    EXPECT_FALSE(pf.posterior.has_value());
}

TEST(Project, TwoTargetsOnTheFocusPickHigherPosteriorThenSmallerIndex) {
    const std::vector<BitextPair> bitext{{words("a"), words("x x")}};
    const auto model = em_train(bitext, AlignmentParams{4.0, 0.08, 3}, 1).model;
    const auto links = viterbi_align(model, words("a"), words("x x"));
    ASSERT_TRUE(links[0] && links[1]);
    const auto p0 = link_posteriors(model, words("a"), words("x x"), 0)[1];
    const auto p1 = link_posteriors(model, words("a"), words("x x"), 1)[1];
    const auto pf = project_focus(model, words("a"), 0, words("x x"));
    ASSERT_TRUE(pf.target_index.has_value());
    if (std::fabs(p0 - p1) < 1e-15) {
        EXPECT_EQ(*pf.target_index, 0u);
    } else {
        EXPECT_EQ(*pf.target_index, p1 > p0 ? 1u : 0u);
    }
}

TEST(Model, SerializationRoundTrips) {
    std::mt19937_64 rng(12);
    const auto bitext = random_corpus(rng, 25, 5, 7);
    const auto model = em_train(bitext, AlignmentParams{3.0, 0.1, 4}, 2).model;
    const auto text = model.serialize();
    const auto back = AlignmentModel::deserialize(text);
    EXPECT_EQ(back.serialize(), text);
    EXPECT_EQ(back.params().tension, 3.0);
    EXPECT_EQ(back.params().null_prob, 0.1);
    EXPECT_EQ(back.params().iterations, 4);
    for (const auto& p : bitext)
        EXPECT_EQ(viterbi_align(back, p.source, p.target), viterbi_align(model, p.source, p.target));
}

TEST(Model, SmoothingFloorForUnseenEntries) {
    const std::vector<BitextPair> bitext{{{"a"}, {"x"}}, {{"b"}, {"y"}}};
    const auto model = em_train(bitext, AlignmentParams{}, 1).model;
    EXPECT_EQ(model.translation_prob("a", "zzz"), AlignmentModel::kSmoothingFloor);
    EXPECT_EQ(model.translation_prob("zzz", "x"), AlignmentModel::kSmoothingFloor);
}
