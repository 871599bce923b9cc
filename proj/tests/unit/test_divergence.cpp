#include <gtest/gtest.h>

#include "gendermine/divergence.hpp"
#include "gendermine/error.hpp"

#include <random>
#include <set>

using namespace gendermine;

namespace {

// A side state: projected with a known gender, projected but UNKNOWN, or
// not projected at all.
enum class State { M, F, N, Unknown, Unprojected };
constexpr State kStates[] = {State::M, State::F, State::N, State::Unknown, State::Unprojected};

TranslationOutcome outcome(State s, Language l, Side side, const std::string& pair = "p") {
    TranslationOutcome o;
    o.pair_id = pair;
    o.side = side;
    o.language = l;
    o.translation_tokens = {"w"};
    if (s == State::Unprojected) return o;
    o.projection = {0, 0.9};
    switch (s) {
    case State::M: o.gender = GenderTag{Gender::Masculine, Evidence::Lexicon}; break;
    case State::F: o.gender = GenderTag{Gender::Feminine, Evidence::Lexicon}; break;
    case State::N: o.gender = GenderTag{Gender::Neuter, Evidence::Lexicon}; break;
    default: o.gender = GenderTag{Gender::Unknown, Evidence::None}; break;
    }
    return o;
}

bool known(State s) { return s == State::M || s == State::F || s == State::N; }

// Expected label, written from the rule table.
std::pair<Risk, std::string> expected(State a, State b, Language l) {
    if (a == State::Unprojected || b == State::Unprojected) return {Risk::Indeterminate, "UNPROJECTED"};
    if (!known(a) || !known(b)) return {Risk::Indeterminate, "UNKNOWN_GENDER"};
    if (a == b) return {Risk::NotAtRisk, "SAME_GENDER"};
    const bool neuter = a == State::N || b == State::N;
    if (neuter && l != Language::De) return {Risk::Indeterminate, "NEUTER_MISMATCH"};
    return {Risk::AtRisk, "GENDER_DIVERGENCE"};
}

} // namespace

TEST(Classify, ExhaustiveMatrixPerLanguage) {
    for (auto l : kLanguages)
        for (auto a : kStates)
            for (auto b : kStates) {
                const auto got = classify(outcome(a, l, Side::Original), outcome(b, l, Side::Substituted));
                const auto [risk, reason] = expected(a, b, l);
                EXPECT_EQ(got.value, risk) << language_code(l) << " " << int(a) << "/" << int(b);
                EXPECT_EQ(got.reason, reason) << language_code(l) << " " << int(a) << "/" << int(b);
            }
}

TEST(Classify, Symmetric) {
    for (auto l : kLanguages)
        for (auto a : kStates)
            for (auto b : kStates) {
                const auto ab = classify(outcome(a, l, Side::Original), outcome(b, l, Side::Substituted));
                const auto ba = classify(outcome(b, l, Side::Original), outcome(a, l, Side::Substituted));
                EXPECT_EQ(ab.value, ba.value);
                EXPECT_EQ(ab.reason, ba.reason);
            }
}

TEST(Classify, KnownPairs) {
    const auto fr_m = outcome(State::M, Language::Fr, Side::Original);
    const auto fr_f = outcome(State::F, Language::Fr, Side::Substituted);
    EXPECT_EQ(classify(fr_m, fr_f).value, Risk::AtRisk); // conseiller / infirmière
    const auto es_f = outcome(State::F, Language::Es, Side::Original);
    const auto es_m = outcome(State::M, Language::Es, Side::Substituted);
    EXPECT_EQ(classify(es_f, es_m).value, Risk::AtRisk); // maestra / profesor
    const auto de_m = outcome(State::M, Language::De, Side::Original);
    const auto de_n = outcome(State::N, Language::De, Side::Substituted);
    EXPECT_EQ(classify(de_m, de_n).value, Risk::AtRisk);
}

TEST(Classify, MismatchedPairsOrLanguagesAreErrors) {
    EXPECT_THROW(classify(outcome(State::M, Language::Fr, Side::Original, "a"),
                          outcome(State::F, Language::Fr, Side::Substituted, "b")),
                 StageError);
    EXPECT_THROW(
        classify(outcome(State::M, Language::Fr, Side::Original), outcome(State::F, Language::De, Side::Substituted)),
        StageError);
}

TEST(Sample, UniformBelowStaysInRange) {
    std::mt19937_64 rng(1);
    for (std::uint64_t bound : {1ull, 2ull, 3ull, 7ull, 1000ull, (1ull << 63) + 5})
        for (int k = 0; k < 200; ++k) EXPECT_LT(uniform_below(rng, bound), bound);
}

TEST(Sample, DeterministicForSeedAndWithoutReplacement) {
    std::vector<std::string> pop;
    for (int i = 0; i < 300; ++i) pop.push_back("id" + std::to_string(i));
    SampleReport report;
    const auto a = sample_negatives(pop, 100, 13, &report);
    const auto b = sample_negatives(pop, 100, 13);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 100u);
    EXPECT_EQ(std::set<std::string>(a.begin(), a.end()).size(), 100u);
    EXPECT_EQ(report.population, 300u);
    EXPECT_EQ(report.drawn, 100u);
    EXPECT_FALSE(report.warning.has_value());
    EXPECT_NE(sample_negatives(pop, 100, 14), a);
}

TEST(Sample, InputOrderDoesNotMatter) {
    std::vector<std::string> pop;
    for (int i = 0; i < 50; ++i) pop.push_back("id" + std::to_string(i));
    auto shuffled = pop;
    std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(4));
    EXPECT_EQ(sample_negatives(pop, 20, 13), sample_negatives(shuffled, 20, 13));
}

TEST(Sample, ShortPopulationDrawsAllAndWarns) {
    const std::vector<std::string> pop{"c", "a", "b"};
    SampleReport report;
    const auto out = sample_negatives(pop, 10, 13, &report);
    EXPECT_EQ(std::set<std::string>(out.begin(), out.end()), (std::set<std::string>{"a", "b", "c"}));
    EXPECT_EQ(report.drawn, 3u);
    EXPECT_TRUE(report.warning.has_value());
}

TEST(Sample, MatchesPartialFisherYatesOverSortedPopulation) {
    std::vector<std::string> pop;
    for (int i = 0; i < 40; ++i) pop.push_back("x" + std::to_string(i));
    auto sorted = pop;
    std::sort(sorted.begin(), sorted.end());
    std::mt19937_64 rng(77);
    std::vector<std::string> want;
    for (std::size_t k = 0; k < 15; ++k) {
        const auto j = k + uniform_below(rng, sorted.size() - k);
        std::swap(sorted[k], sorted[j]);
        want.push_back(sorted[k]);
    }
    EXPECT_EQ(sample_negatives(pop, 15, 77), want);
}

TEST(Sample, EmptyPopulation) {
    SampleReport report;
    EXPECT_TRUE(sample_negatives({}, 5, 1, &report).empty());
    EXPECT_EQ(report.drawn, 0u);
}
