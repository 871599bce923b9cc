#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gendermine/divergence.hpp"
#include "gendermine/language.hpp"

namespace gendermine {

enum class AnnotationState { Pending, Accepted, RejectedFixedGender, RejectedOther };
std::string_view annotation_state_name(AnnotationState s); // "PENDING", "ACCEPTED", ...
AnnotationState parse_annotation_state(std::string_view s);

// Everything known about one pair in one target language.
struct LanguageView {
    TranslationOutcome original;
    TranslationOutcome substituted;
    std::string original_text;
    std::string substituted_text;
    RiskLabel label;
    AnnotationState annotation = AnnotationState::Pending;
    std::optional<std::int64_t> accepted_at_ms;
    std::optional<std::size_t> negative_draw;
};

struct ExampleRecord {
    std::string pair_id;
    std::string sentence_id;
    std::vector<std::string> source_original;
    std::vector<std::string> source_substituted;
    std::size_t focus_index = 0;
    std::string original_surface;
    std::string substitute_surface;
    int candidate_rank = 0;
    double mlm_score = 0.0;
    std::map<Language, LanguageView> languages;

    const LanguageView* view(Language l) const;
};

nlohmann::json to_json(const ExampleRecord& r);
ExampleRecord record_from_json(const nlohmann::json& j);

// A tagged pair side joined with its source focus word and the pair's label;
// the row format of the outcome files the ratio statistics are computed from.
struct OutcomeRow {
    std::string pair_id;
    Side side = Side::Original;
    Language language = Language::Fr;
    std::string focus_surface;
    std::optional<std::string> target_token;
    Gender gender = Gender::Unknown;
    Risk label = Risk::Indeterminate;
};

nlohmann::json to_json(const OutcomeRow& r);
OutcomeRow outcome_from_json(const nlohmann::json& j);

enum class RatioGroup { Positive, Negative };

struct FormRatio {
    std::string form;
    Language language = Language::Fr;
    std::size_t masculine = 0;
    std::size_t feminine = 0;

    std::string ratio_display() const { return std::to_string(masculine) + ":" + std::to_string(feminine); }
};

nlohmann::json to_json(const FormRatio& r);

// Positive selects AT_RISK rows, Negative NOT_AT_RISK rows. One entry per
// (focus form, language) seen in the group, tallying masculine and feminine
// tags, sorted by masculine+feminine descending, then form, then language.
std::vector<FormRatio> compute_ratios(std::span<const OutcomeRow> outcomes, RatioGroup group);

struct Quotas {
    std::size_t positives = 100;
    std::size_t negatives = 100;
};

struct ExportSelection {
    std::vector<const ExampleRecord*> positives; // sorted by pair_id
    std::vector<const ExampleRecord*> negatives; // sorted by pair_id
    std::vector<std::string> warnings;
};

// Positives: ACCEPTED records, the earliest `quota` by acceptance time (then
// pair_id). Negatives: the first `quota` sampled draws. Shortfalls warn.
ExportSelection select_for_export(std::span<const ExampleRecord> records, Language language, const Quotas& quotas);

struct ExportResult {
    Language language = Language::Fr;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::vector<std::string> warnings;
    std::vector<std::filesystem::path> files;

    nlohmann::json to_json() const;
};

// Writes `<lang>.positives.tsv`, `<lang>.negatives.tsv`, `<lang>.jsonl` and
// `<lang>.report.json` under out_dir.
ExportResult export_dataset(std::span<const ExampleRecord> records, Language language, const Quotas& quotas,
                            const std::filesystem::path& out_dir);

} // namespace gendermine
