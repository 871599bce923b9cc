#include "gendermine/divergence.hpp"

#include "gendermine/error.hpp"

#include <algorithm>
#include <random>

namespace gendermine {

std::string_view side_name(Side s) { return s == Side::Original ? "original" : "substituted"; }

Side parse_side(std::string_view s) {
    if (s == "original") return Side::Original;
    if (s == "substituted") return Side::Substituted;
    throw std::invalid_argument("unknown side: " + std::string(s));
}

std::string_view risk_name(Risk r) {
    switch (r) {
    case Risk::AtRisk: return "AT_RISK";
    case Risk::NotAtRisk: return "NOT_AT_RISK";
    case Risk::Indeterminate: return "INDETERMINATE";
    }
    return "INDETERMINATE";
}

Risk parse_risk(std::string_view s) {
    for (auto r : {Risk::AtRisk, Risk::NotAtRisk, Risk::Indeterminate})
        if (risk_name(r) == s) return r;
    throw std::invalid_argument("unknown risk label: " + std::string(s));
}

RiskLabel classify(const TranslationOutcome& original, const TranslationOutcome& substituted) {
    if (original.pair_id != substituted.pair_id)
        throw StageError("detect", original.pair_id, "outcomes belong to different pairs: " + substituted.pair_id);
    if (original.language != substituted.language)
        throw StageError("detect", original.pair_id, "outcomes are in different languages");

    if (!original.projection.target_index || !substituted.projection.target_index || !original.gender ||
        !substituted.gender)
        return {Risk::Indeterminate, "UNPROJECTED"};
    const auto a = original.gender->value;
    const auto b = substituted.gender->value;
    if (a == Gender::Unknown || b == Gender::Unknown) return {Risk::Indeterminate, "UNKNOWN_GENDER"};
    if (a == b) return {Risk::NotAtRisk, "SAME_GENDER"};
    if (a == Gender::Neuter || b == Gender::Neuter) {
        if (original.language == Language::De) return {Risk::AtRisk, "GENDER_DIVERGENCE"};
        return {Risk::Indeterminate, "NEUTER_MISMATCH"};
    }
    return {Risk::AtRisk, "GENDER_DIVERGENCE"};
}

std::vector<std::string> sample_negatives(std::vector<std::string> population, std::size_t n, std::uint64_t seed,
                                          SampleReport* report) {
    std::sort(population.begin(), population.end());
    population.erase(std::unique(population.begin(), population.end()), population.end());
    const auto available = population.size();
    const auto take = std::min(n, available);
    std::mt19937_64 engine(seed);
    for (std::size_t k = 0; k < take; ++k) {
        const auto j = k + uniform_below(engine, population.size() - k);
        std::swap(population[k], population[j]);
    }
    population.resize(take);
    if (report) {
        report->population = available;
        report->requested = n;
        report->drawn = take;
        report->warning.reset();
        if (take < n)
            report->warning = "requested " + std::to_string(n) + " negatives but only " + std::to_string(take) +
                              " not-at-risk pairs are available";
    }
    return population;
}

} // namespace gendermine
