#include "gendermine/filter.hpp"

#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/text.hpp"

#include <array>

namespace gendermine {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kRejectReasonCount> kReasonNames{"MULTI_PERSON", "NO_PERSON", "GENDERED_TERM",
                                                                       "NAME", "NOT_NOUN"};

void collect_strings(const json& j, std::set<std::string, std::less<>>& out) {
    if (j.is_string()) {
        auto w = text::to_lower(text::trim(j.get<std::string>()));
        if (!w.empty()) out.insert(std::move(w));
    } else if (j.is_array()) {
        for (const auto& e : j) collect_strings(e, out);
    }
}

std::set<std::string, std::less<>> read_word_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("word list not found: " + path.string());
    std::set<std::string, std::less<>> words;
    if (path.extension() == ".json") {
        try {
            collect_strings(json::parse(io::read_file(path)), words);
        } catch (const json::exception& e) {
            throw ConfigError("cannot parse word list " + path.string() + ": " + e.what());
        }
    } else {
        io::for_each_line(path, [&](std::string_view line, std::size_t) {
            auto w = text::to_lower(text::trim(line));
            if (!w.empty() && !w.starts_with('#')) words.insert(std::move(w));
        });
    }
    if (words.empty()) throw ConfigError("word list is empty: " + path.string());
    return words;
}

} // namespace

std::string_view reject_reason_name(RejectReason r) { return kReasonNames[static_cast<std::size_t>(r)]; }

RejectReason parse_reject_reason(std::string_view name) {
    for (std::size_t i = 0; i < kReasonNames.size(); ++i)
        if (kReasonNames[i] == name) return static_cast<RejectReason>(i);
    throw std::invalid_argument("unknown rejection reason: " + std::string(name));
}

GenderedWordList load_gendered_list(std::span<const std::filesystem::path> paths) {
    if (paths.empty()) throw ConfigError("no gendered word lists configured");
    GenderedWordList list;
    for (const auto& p : paths) {
        list.entries.merge(read_word_file(p));
        list.provenance.push_back(p.filename().string());
    }
    return list;
}

NameList load_name_list(const std::filesystem::path& path) { return {read_word_file(path)}; }

bool is_name_flagged(const SentenceRecord& record, std::size_t index, const NameList& names) {
    const auto& surface = record.tokens.at(index).surface;
    if (index > 0 && text::starts_uppercase(surface)) return true;
    return names.contains(text::to_lower(surface));
}

FilterOutcome filter_sentence(const SentenceRecord& record, std::span<const NerSpan> ner, std::span<const Upos> pos,
                              const FilterLexicons& lexicons) {
    const auto n = record.tokens.size();
    if (pos.size() != n)
        throw StageError("filter", record.sentence_id,
                         "POS tag count " + std::to_string(pos.size()) + " != token count " + std::to_string(n));
    std::size_t persons = 0;
    std::size_t focus = 0;
    for (const auto& span : ner) {
        if (span.token_index >= n) throw StageError("filter", record.sentence_id, "NER span outside sentence");
        if (span.label == NerLabel::Person) {
            ++persons;
            focus = span.token_index;
        }
    }
    if (persons > 1) return Rejection{RejectReason::MultiPerson};
    if (persons == 0) return Rejection{RejectReason::NoPerson};
    const auto& surface = record.tokens[focus].surface;
    if (lexicons.gendered.contains(text::to_lower(surface))) return Rejection{RejectReason::GenderedTerm};
    if (is_name_flagged(record, focus, lexicons.names)) return Rejection{RejectReason::Name};
    if (pos[focus] != Upos::NOUN) return Rejection{RejectReason::NotNoun};
    return SourceSentence{record, focus, surface};
}

json to_json(const SourceSentence& s) {
    return {{"sentence_id", s.sentence.sentence_id},
            {"doc_id", s.sentence.doc_id},
            {"focus_index", s.focus_index},
            {"focus_surface", s.focus_surface},
            {"tokens", s.sentence.surfaces()}};
}

SourceSentence source_from_json(const json& j) {
    auto record = sentence_from_json(j);
    const auto focus = j.at("focus_index").get<std::size_t>();
    if (focus >= record.tokens.size()) throw std::runtime_error("focus_index outside sentence " + record.sentence_id);
    return {std::move(record), focus, j.at("focus_surface").get<std::string>()};
}

} // namespace gendermine
