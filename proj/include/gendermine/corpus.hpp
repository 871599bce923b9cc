#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gendermine {

struct RawDocument {
    std::string doc_id;
    std::string text;
    std::string source_tag;
};

struct Token {
    std::string surface;
    std::size_t index = 0;

    bool operator==(const Token&) const = default;
};

struct SentenceRecord {
    std::string sentence_id;
    std::vector<Token> tokens;
    std::string doc_id;

    std::vector<std::string> surfaces() const;
};

// Lowercased abbreviations without their final period ("m.d", "e.g", "dr").
using AbbreviationList = std::set<std::string, std::less<>>;

AbbreviationList default_abbreviations();
AbbreviationList load_abbreviations(const std::filesystem::path& path);

struct IngestConfig {
    std::size_t max_len = 128;
    AbbreviationList abbreviations = default_abbreviations();
};

// Funnel counts for the ingest stage.
struct IngestReport {
    std::size_t documents = 0;
    std::size_t undecodable = 0;
    std::size_t empty_documents = 0;
    std::size_t duplicate_doc_ids = 0;
    std::size_t sentences_seen = 0;
    std::size_t too_long = 0;
    std::size_t duplicates = 0;
    std::size_t emitted = 0;

    nlohmann::json to_json() const;
};

std::vector<Token> tokenize(std::string_view text);

// Splits on '.', '!' or '?' (optionally followed by closing quotes/brackets)
// when followed by whitespace, unless the word is a guarded abbreviation.
std::vector<std::string> segment(std::string_view text, const AbbreviationList& abbreviations);

std::vector<Token> make_tokens(const std::vector<std::string>& surfaces);
std::string sentence_id_for(const std::vector<Token>& tokens);
SentenceRecord make_sentence(std::vector<Token> tokens, std::string doc_id);

// Documents whose text is not valid UTF-8 are skipped and counted, never
// emitted. Output order follows input order; the first occurrence of a
// duplicate sentence wins.
std::vector<SentenceRecord> ingest(const std::vector<RawDocument>& documents, const IngestConfig& config,
                                   IngestReport* report = nullptr);

enum class CorpusFormat { Txt, Jsonl };
CorpusFormat parse_corpus_format(std::string_view name);

// Reads documents from disk, one per non-empty line. Text lines are passed
// through as raw bytes (ingest validates UTF-8); JSON lines that fail to parse
// are dropped and counted in `undecodable`.
struct LoadedCorpus {
    std::vector<RawDocument> documents;
    std::size_t undecodable = 0;
};
LoadedCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format);

nlohmann::json to_json(const SentenceRecord& record);
SentenceRecord sentence_from_json(const nlohmann::json& j);

} // namespace gendermine
