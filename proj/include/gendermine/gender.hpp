#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gendermine/language.hpp"

namespace gendermine {

enum class Gender { Masculine, Feminine, Neuter, Unknown };
enum class Evidence { Lexicon, Determiner, Suffix, None };

std::string_view gender_name(Gender g);  // "MASCULINE", ...
std::string_view gender_letter(Gender g); // "M", "F", "N", "?"
Gender parse_gender(std::string_view s);  // accepts either form
std::string_view evidence_name(Evidence e);
Evidence parse_evidence(std::string_view s);

struct GenderTag {
    Gender value = Gender::Unknown;
    Evidence evidence = Evidence::None;

    bool operator==(const GenderTag&) const = default;
};

struct GenderLexicon {
    Language language = Language::Fr;
    std::map<std::string, Gender, std::less<>> entries;
    std::vector<std::string> sources;

    std::optional<Gender> lookup(std::string_view key) const;
};

// `surface<TAB>{M|F|N}` lines; '#' starts a comment. Later files override
// earlier ones. Throws ConfigError for an empty path list or unreadable file
// and std::runtime_error naming file:line for a malformed line.
GenderLexicon load_lexicon(Language language, std::span<const std::filesystem::path> paths);

struct SuffixRule {
    Language language = Language::Fr;
    std::string suffix;
    Gender gender = Gender::Unknown;
    int priority = 0;
};

// `suffix<TAB>{M|F|N}<TAB>priority` lines.
std::vector<SuffixRule> load_suffix_rules(Language language, const std::filesystem::path& path);

// Normalization used for the second lexicon lookup and the suffix layer:
// lowercase, with a French elided article ("l'", "d'", ...) removed.
std::string lemma_key(Language language, std::string_view surface);

struct TaggerOptions {
    bool use_lexicon = true;
    std::size_t determiner_window = 3;
};

// Lexicon (surface, then lemma key) -> determiner context -> suffix rules.
// Determiners that are ambiguous between genders (German "der", "ein") give
// way to a suffix reading they are compatible with.
class GenderTagger {
  public:
    GenderTagger(Language language, GenderLexicon lexicon, std::vector<SuffixRule> rules, TaggerOptions options = {});

    Language language() const noexcept { return language_; }
    const GenderLexicon& lexicon() const noexcept { return lexicon_; }

    // Total: never throws for unknown words. Throws PreconditionError when
    // index is outside the sentence.
    GenderTag tag(std::span<const std::string> tokens, std::size_t index) const;

    std::optional<Gender> suffix_gender(std::string_view key) const;

  private:
    Language language_;
    GenderLexicon lexicon_;
    std::vector<SuffixRule> rules_; // sorted by priority desc, then suffix length desc
    TaggerOptions options_;
};

// Loads `<dir>/<lang>.lexicon.tsv` and `<dir>/<lang>.rules.tsv`.
GenderTagger load_tagger(Language language, const std::filesystem::path& dir, TaggerOptions options = {});

} // namespace gendermine
