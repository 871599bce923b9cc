#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gendermine/alignment.hpp"
#include "gendermine/gender.hpp"
#include "gendermine/language.hpp"

namespace gendermine {

enum class Side { Original, Substituted };
std::string_view side_name(Side s); // "original", "substituted"
Side parse_side(std::string_view s);

// One side of a pair translated into one language. `gender` is set exactly
// when the focus was projected onto a target token.
struct TranslationOutcome {
    std::string pair_id;
    Side side = Side::Original;
    Language language = Language::Fr;
    std::vector<std::string> translation_tokens;
    align::ProjectedFocus projection;
    std::optional<GenderTag> gender;
};

enum class Risk { AtRisk, NotAtRisk, Indeterminate };
std::string_view risk_name(Risk r); // "AT_RISK", "NOT_AT_RISK", "INDETERMINATE"
Risk parse_risk(std::string_view s);

struct RiskLabel {
    Risk value = Risk::Indeterminate;
    std::string reason;
};

// AT_RISK when both foci carry known, different genders; NOT_AT_RISK when
// they agree; INDETERMINATE (UNPROJECTED, UNKNOWN_GENDER) otherwise. A
// neuter/gendered split is a divergence only for German; elsewhere it is
// INDETERMINATE with reason NEUTER_MISMATCH. Throws StageError when the two
// outcomes belong to different pairs or languages.
RiskLabel classify(const TranslationOutcome& original, const TranslationOutcome& substituted);

struct SampleReport {
    std::size_t population = 0;
    std::size_t requested = 0;
    std::size_t drawn = 0;
    std::optional<std::string> warning;
};

// Uniform integer in [0, bound) from a 64-bit engine by rejection, so draws
// are identical on every standard library.
template <typename Engine>
std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
    const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % bound + 1) % bound;
    for (;;) {
        const std::uint64_t x = engine();
        if (x <= limit) return x % bound;
    }
}

// Draws min(n, |population|) ids without replacement. The population is put
// in sorted order first; the result is in draw order.
std::vector<std::string> sample_negatives(std::vector<std::string> population, std::size_t n, std::uint64_t seed,
                                          SampleReport* report = nullptr);

} // namespace gendermine
