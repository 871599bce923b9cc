#pragma once

#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gendermine/corpus.hpp"
#include "gendermine/gateway.hpp"

namespace gendermine {

// A gender-neutral sentence with exactly one person-denoting common noun.
struct SourceSentence {
    SentenceRecord sentence;
    std::size_t focus_index = 0;
    std::string focus_surface;
};

// Inherently gendered English words ("mother", "nephew"), lowercased.
struct GenderedWordList {
    std::set<std::string, std::less<>> entries;
    std::vector<std::string> provenance;

    bool contains(std::string_view lowercase_word) const { return entries.contains(lowercase_word); }
};

// Accepts JSON files holding (possibly nested) arrays of strings and plain
// text files with one word per line. Throws ConfigError for a missing or
// empty file or an empty path list.
GenderedWordList load_gendered_list(std::span<const std::filesystem::path> paths);

struct NameList {
    std::set<std::string, std::less<>> names;

    bool contains(std::string_view lowercase_word) const { return names.contains(lowercase_word); }
};

NameList load_name_list(const std::filesystem::path& path);

struct FilterLexicons {
    GenderedWordList gendered;
    NameList names;
};

// Listed in precedence order.
enum class RejectReason { MultiPerson, NoPerson, GenderedTerm, Name, NotNoun };
inline constexpr std::size_t kRejectReasonCount = 5;

std::string_view reject_reason_name(RejectReason r); // "MULTI_PERSON", ...
RejectReason parse_reject_reason(std::string_view name);

struct Rejection {
    RejectReason reason;
};

using FilterOutcome = std::variant<SourceSentence, Rejection>;

// A token is name-flagged when it is capitalized past position 0 or its
// lowercase form is in the name list.
bool is_name_flagged(const SentenceRecord& record, std::size_t index, const NameList& names);

// Throws StageError when the tag lists do not line up with the record.
FilterOutcome filter_sentence(const SentenceRecord& record, std::span<const NerSpan> ner, std::span<const Upos> pos,
                              const FilterLexicons& lexicons);

nlohmann::json to_json(const SourceSentence& s);
SourceSentence source_from_json(const nlohmann::json& j);

} // namespace gendermine
