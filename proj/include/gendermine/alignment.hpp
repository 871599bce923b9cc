#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

// Reparameterized IBM Model 2 ("fast-align" model): target words are generated
// from source words (or NULL) under a prior that favours the sentence diagonal.
//
//   p(a_i = 0)         = p0
//   p(a_i = j | i,m,n) = (1 - p0) * exp(-lambda * |(i+1)/m - j/n|) / Z,  j = 1..n
//
// with i the 0-based target position, m the target length and n the source
// length. lambda (tension) and p0 stay fixed; EM only re-estimates t(f|e).
namespace gendermine::align {

struct AlignmentParams {
    double tension = 4.0;
    double null_prob = 0.08;
    int iterations = 5;
};

using Words = std::vector<std::string>;

struct BitextPair {
    Words source;
    Words target;
};

// j == 0 is the NULL link; j in 1..n are source positions.
double diagonal_prior(std::size_t i, std::size_t j, std::size_t m, std::size_t n, double tension, double null_prob);

// All n+1 prior values for target position i.
std::vector<double> prior_row(std::size_t i, std::size_t m, std::size_t n, double tension, double null_prob);

class Vocabulary {
  public:
    std::uint32_t add(std::string_view word);
    std::optional<std::uint32_t> find(std::string_view word) const;
    const std::string& word(std::uint32_t id) const { return words_.at(id); }
    std::size_t size() const noexcept { return words_.size(); }

  private:
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<std::string> words_;
};

class AlignmentModel {
  public:
    static constexpr double kSmoothingFloor = 1e-9;
    static constexpr std::string_view kNullWord = "<null>";

    AlignmentModel() = default;
    explicit AlignmentModel(AlignmentParams params);

    const AlignmentParams& params() const noexcept { return params_; }
    bool trained() const noexcept { return !uniform_; }

    // t(f|e); source == kNullWord addresses the NULL word. Entries never
    // observed in training (including unseen words) get kSmoothingFloor.
    double translation_prob(std::string_view source, std::string_view target) const;

    // Σ_f t(f|e) over stored entries; 0 for a word with no row.
    double row_sum(std::string_view source) const;
    std::vector<std::string> source_words() const;
    std::size_t target_vocab_size() const noexcept { return target_vocab_.size(); }

    // Header line with the fixed parameters, then sorted "e<TAB>f<TAB>log t(f|e)" rows.
    std::string serialize() const;
    static AlignmentModel deserialize(std::string_view text);

  private:
    friend struct ModelAccess;

    AlignmentParams params_{};
    Vocabulary source_vocab_; // id 0 is NULL
    Vocabulary target_vocab_;
    std::vector<std::unordered_map<std::uint32_t, double>> table_;
    bool uniform_ = true;
};

struct ExpectedCounts {
    // (source word, target word) -> expected link count; NULL appears as kNullWord.
    std::map<std::pair<std::string, std::string>, double> counts;
    double log_likelihood = 0.0;
};

// Builds vocabularies from the bitext; the result is the uniform initial model.
AlignmentModel initial_model(std::span<const BitextPair> bitext, const AlignmentParams& params);

// One E-step under `model`: posterior link counts and the data log-likelihood.
ExpectedCounts expected_counts(const AlignmentModel& model, std::span<const BitextPair> bitext);

double log_likelihood(const AlignmentModel& model, std::span<const BitextPair> bitext);

struct TrainResult {
    AlignmentModel model;
    // Log-likelihood under the parameters entering each iteration, then the
    // final model's value as the last element (iterations + 1 entries).
    std::vector<double> log_likelihood;
    std::size_t skipped_pairs = 0;
};

// Pairs with an empty side are skipped and counted. The E-step runs over fixed
// chunks on up to `threads` workers (0 = hardware concurrency) and merges in
// chunk order, so results do not depend on the thread count.
TrainResult em_train(std::span<const BitextPair> bitext, const AlignmentParams& params, unsigned threads = 0);

// Posterior p(a_i = j | e, f) for j = 0..n.
std::vector<double> link_posteriors(const AlignmentModel& model, const Words& source, const Words& target,
                                    std::size_t target_index);

// Per target position, the best source position (nullopt = NULL); ties go to the smaller j.
std::vector<std::optional<std::size_t>> viterbi_align(const AlignmentModel& model, const Words& source,
                                                      const Words& target);

struct ProjectedFocus {
    std::optional<std::size_t> target_index;
    std::optional<double> posterior;
};

// The target position Viterbi-linked to source[focus_index] with the largest
// link posterior (smaller target index on ties); empty when none links there.
ProjectedFocus project_focus(const AlignmentModel& model, const Words& source, std::size_t focus_index,
                             const Words& target);

// Pharaoh "source-target" pairs, NULL links omitted.
std::string to_pharaoh(const std::vector<std::optional<std::size_t>>& links);

} // namespace gendermine::align
