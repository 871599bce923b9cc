#include "gendermine/gender.hpp"

#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/text.hpp"

#include <algorithm>

namespace gendermine {

namespace {

constexpr auto M = Gender::Masculine;
constexpr auto F = Gender::Feminine;
constexpr auto N = Gender::Neuter;
constexpr auto U = Gender::Unknown;

// `alternate` != Unknown marks a form shared by two genders (German "der" is
// masculine nominative and feminine dative/genitive).
struct Determiner {
    std::string_view word;
    Gender primary;
    Gender alternate = U;
};

constexpr Determiner kFrench[] = {
    {"le", M},     {"la", F},    {"un", M},       {"une", F},     {"du", M},       {"au", M},
    {"ce", M},     {"cet", M},   {"cette", F},    {"ma", F},      {"ta", F},       {"sa", F},
    {"quel", M},   {"quelle", F}, {"aucun", M},   {"aucune", F},  {"certain", M},  {"certaine", F},
    {"nouveau", M}, {"nouvelle", F}, {"bon", M},  {"bonne", F},   {"tel", M},      {"telle", F},
};

constexpr Determiner kGerman[] = {
    {"der", M, F},    {"die", F},       {"das", N},       {"dem", M, N},    {"den", M},       {"des", M, N},
    {"ein", M, N},    {"eine", F},      {"einer", F},     {"einen", M},     {"einem", M, N},  {"eines", M, N},
    {"kein", M, N},   {"keine", F},     {"keinen", M},    {"mein", M, N},   {"meine", F},     {"meinen", M},
    {"dein", M, N},   {"deine", F},     {"deinen", M},    {"sein", M, N},   {"seine", F},     {"seinen", M},
    {"ihr", M, N},    {"ihre", F},      {"ihren", M},     {"unser", M, N},  {"unsere", F},    {"unseren", M},
    {"dieser", M, F}, {"diese", F},     {"dieses", N},    {"diesen", M},    {"jeder", M, F},  {"jede", F},
    {"jedes", N},     {"jeden", M},
};

constexpr Determiner kSpanish[] = {
    {"el", M},       {"la", F},        {"un", M},        {"una", F},       {"los", M},      {"las", F},
    {"unos", M},     {"unas", F},      {"del", M},       {"al", M},        {"este", M},     {"esta", F},
    {"estos", M},    {"estas", F},     {"ese", M},       {"esa", F},       {"esos", M},     {"esas", F},
    {"aquel", M},    {"aquella", F},   {"nuestro", M},   {"nuestra", F},   {"vuestro", M},  {"vuestra", F},
    {"otro", M},     {"otra", F},      {"ningún", M},    {"ninguna", F},   {"algún", M},    {"alguna", F},
    {"buen", M},     {"buena", F},     {"nuevo", M},     {"nueva", F},
};

constexpr Determiner kRussian[] = {
    {"этот", M},       {"эта", F},        {"эту", F},        {"этой", F},       {"этого", M, N},
    {"этому", M, N},   {"тот", M},        {"та", F},         {"ту", F},         {"мой", M},
    {"моя", F},        {"мою", F},        {"моей", F},       {"моего", M, N},   {"моему", M, N},
    {"твой", M},       {"твоя", F},       {"твою", F},       {"наш", M},        {"наша", F},
    {"нашу", F},       {"нашей", F},      {"нашего", M, N},  {"ваш", M},        {"ваша", F},
    {"вашу", F},       {"вашей", F},      {"вашего", M, N},  {"свой", M},       {"своя", F},
    {"свою", F},       {"своей", F},      {"своего", M, N},  {"один", M},       {"одна", F},
    {"одну", F},       {"одного", M, N},  {"новый", M},      {"новая", F},      {"новую", F},
    {"хороший", M},    {"хорошая", F},    {"хорошую", F},
};

std::span<const Determiner> determiners(Language l) {
    switch (l) {
    case Language::Fr: return kFrench;
    case Language::De: return kGerman;
    case Language::Es: return kSpanish;
    case Language::Ru: return kRussian;
    }
    return {};
}

const Determiner* find_determiner(Language l, std::string_view word) {
    for (const auto& d : determiners(l))
        if (d.word == word) return &d;
    return nullptr;
}

constexpr std::string_view kElisions[] = {"l'", "d'", "j'", "qu'", "n'", "s'", "c'", "m'", "t'",
                                          "l’", "d’", "j’", "qu’", "n’", "s’", "c’", "m’", "t’"};

} // namespace

std::string_view gender_name(Gender g) {
    switch (g) {
    case Gender::Masculine: return "MASCULINE";
    case Gender::Feminine: return "FEMININE";
    case Gender::Neuter: return "NEUTER";
    case Gender::Unknown: return "UNKNOWN";
    }
    return "UNKNOWN";
}

std::string_view gender_letter(Gender g) {
    switch (g) {
    case Gender::Masculine: return "M";
    case Gender::Feminine: return "F";
    case Gender::Neuter: return "N";
    case Gender::Unknown: return "?";
    }
    return "?";
}

Gender parse_gender(std::string_view s) {
    for (auto g : {M, F, N, U})
        if (s == gender_name(g) || s == gender_letter(g)) return g;
    throw std::invalid_argument("unknown gender: " + std::string(s));
}

std::string_view evidence_name(Evidence e) {
    switch (e) {
    case Evidence::Lexicon: return "LEXICON";
    case Evidence::Determiner: return "DETERMINER";
    case Evidence::Suffix: return "SUFFIX";
    case Evidence::None: return "NONE";
    }
    return "NONE";
}

Evidence parse_evidence(std::string_view s) {
    for (auto e : {Evidence::Lexicon, Evidence::Determiner, Evidence::Suffix, Evidence::None})
        if (s == evidence_name(e)) return e;
    throw std::invalid_argument("unknown evidence: " + std::string(s));
}

std::optional<Gender> GenderLexicon::lookup(std::string_view key) const {
    auto it = entries.find(key);
    if (it == entries.end()) return std::nullopt;
    return it->second;
}

GenderLexicon load_lexicon(Language language, std::span<const std::filesystem::path> paths) {
    if (paths.empty()) throw ConfigError("no lexicon files for " + std::string(language_code(language)));
    GenderLexicon lex{language, {}, {}};
    for (const auto& path : paths) {
        if (!std::filesystem::exists(path)) throw ConfigError("lexicon not found: " + path.string());
        io::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
            if (line.starts_with('#')) return;
            const auto parts = text::split(line, '\t');
            if (parts.size() != 2 || parts[0].empty() || (parts[1] != "M" && parts[1] != "F" && parts[1] != "N"))
                throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected surface<TAB>M|F|N");
            lex.entries[text::to_lower(parts[0])] = parse_gender(parts[1]);
        });
        lex.sources.push_back(path.filename().string());
    }
    if (lex.entries.empty()) throw ConfigError("lexicon is empty for " + std::string(language_code(language)));
    return lex;
}

std::vector<SuffixRule> load_suffix_rules(Language language, const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("suffix rules not found: " + path.string());
    std::vector<SuffixRule> rules;
    io::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        if (line.starts_with('#')) return;
        const auto parts = text::split(line, '\t');
        auto bad = [&] {
            return std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                                      ": expected suffix<TAB>M|F|N<TAB>priority");
        };
        if (parts.size() != 3 || parts[0].empty() || (parts[1] != "M" && parts[1] != "F" && parts[1] != "N"))
            throw bad();
        int priority = 0;
        try {
            std::size_t used = 0;
            priority = std::stoi(parts[2], &used);
            if (used != parts[2].size()) throw bad();
        } catch (const std::logic_error&) {
            throw bad();
        }
        rules.push_back({language, text::to_lower(parts[0]), parse_gender(parts[1]), priority});
    });
    return rules;
}

std::string lemma_key(Language language, std::string_view surface) {
    auto key = text::to_lower(surface);
    if (language == Language::Fr) {
        for (auto e : kElisions) {
            if (key.size() > e.size() && key.starts_with(e)) {
                key.erase(0, e.size());
                break;
            }
        }
    }
    return key;
}

GenderTagger::GenderTagger(Language language, GenderLexicon lexicon, std::vector<SuffixRule> rules,
                           TaggerOptions options)
    : language_(language), lexicon_(std::move(lexicon)), rules_(std::move(rules)), options_(options) {
    std::stable_sort(rules_.begin(), rules_.end(), [](const SuffixRule& a, const SuffixRule& b) {
        if (a.priority != b.priority) return a.priority > b.priority;
        return a.suffix.size() > b.suffix.size();
    });
}

std::optional<Gender> GenderTagger::suffix_gender(std::string_view key) const {
    for (const auto& r : rules_)
        if (key.size() > r.suffix.size() && key.ends_with(r.suffix)) return r.gender;
    return std::nullopt;
}

GenderTag GenderTagger::tag(std::span<const std::string> tokens, std::size_t index) const {
    if (index >= tokens.size()) throw PreconditionError("tag_gender: index outside sentence");
    const auto& surface = tokens[index];
    const auto key = lemma_key(language_, surface);

    if (options_.use_lexicon) {
        if (auto g = lexicon_.lookup(surface)) return {*g, Evidence::Lexicon};
        if (auto g = lexicon_.lookup(key)) return {*g, Evidence::Lexicon};
    }

    const auto suffix = suffix_gender(key);
    // An elided article on the focus ("l'expert") marks no gender, so the
    // search continues with the preceding tokens.
    const std::size_t first = index >= options_.determiner_window ? index - options_.determiner_window : 0;
    for (std::size_t k = index; k-- > first;) {
        const auto* det = find_determiner(language_, text::to_lower(tokens[k]));
        if (!det) continue;
        if (det->alternate != U && suffix && (*suffix == det->primary || *suffix == det->alternate))
            return {*suffix, Evidence::Suffix};
        return {det->primary, Evidence::Determiner};
    }

    if (suffix) return {*suffix, Evidence::Suffix};
    return {};
}

GenderTagger load_tagger(Language language, const std::filesystem::path& dir, TaggerOptions options) {
    const auto code = std::string(language_code(language));
    const std::filesystem::path lex = dir / (code + ".lexicon.tsv");
    auto local = dir / (code + ".local.tsv");
    std::vector<std::filesystem::path> paths{lex};
    if (std::filesystem::exists(local)) paths.push_back(std::move(local));
    return GenderTagger(language, load_lexicon(language, paths), load_suffix_rules(language, dir / (code + ".rules.tsv")),
                        options);
}

} // namespace gendermine
