#include "gendermine/corpus.hpp"

#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/text.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <unordered_set>

namespace gendermine {

using nlohmann::json;

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

struct CodePoint {
    std::size_t offset;
    std::size_t length;
    bool punct;
};

std::vector<CodePoint> code_points(std::string_view s) {
    std::vector<CodePoint> out;
    const auto* p = reinterpret_cast<const uint8_t*>(s.data());
    const auto len = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < len) {
        const int32_t start = i;
        UChar32 c;
        U8_NEXT(p, i, len, c);
        out.push_back({static_cast<std::size_t>(start), static_cast<std::size_t>(i - start), c >= 0 && u_ispunct(c)});
    }
    return out;
}

struct Chunk {
    std::size_t begin;
    std::size_t end;
};

std::vector<Chunk> whitespace_chunks(std::string_view text) {
    std::vector<Chunk> chunks;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        if (i >= text.size()) break;
        const std::size_t b = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        chunks.push_back({b, i});
    }
    return chunks;
}

bool is_closer(std::string_view cp) {
    return cp == ")" || cp == "]" || cp == "\"" || cp == "'" || cp == "”" || cp == "’" || cp == "»";
}

bool ends_sentence(std::string_view chunk, const AbbreviationList& abbreviations) {
    auto cps = code_points(chunk);
    std::size_t n = cps.size();
    while (n > 0 && is_closer(chunk.substr(cps[n - 1].offset, cps[n - 1].length))) --n;
    if (n == 0) return false;
    const char last = chunk[cps[n - 1].offset];
    if (last != '.' && last != '!' && last != '?') return false;
    if (last != '.') return true;
    std::size_t b = 0;
    while (b < n && cps[b].punct) ++b;
    std::size_t e = n;
    while (e > b && chunk[cps[e - 1].offset] == '.') --e;
    if (e <= b) return true;
    const auto core = text::to_lower(chunk.substr(cps[b].offset, cps[e - 1].offset + cps[e - 1].length - cps[b].offset));
    return !abbreviations.contains(core);
}

} // namespace

std::vector<std::string> SentenceRecord::surfaces() const {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.surface);
    return out;
}

AbbreviationList default_abbreviations() {
    return {"m.d", "ph.d", "e.g", "i.e", "dr", "mr", "mrs", "ms", "prof", "jr", "sr", "vs", "st", "u.s", "a.m", "p.m"};
}

AbbreviationList load_abbreviations(const std::filesystem::path& path) {
    AbbreviationList out;
    io::for_each_line(path, [&](std::string_view line, std::size_t) {
        auto word = text::to_lower(text::trim(line));
        if (word.starts_with('#')) return;
        while (word.ends_with('.')) word.pop_back();
        if (!word.empty()) out.insert(word);
    });
    if (out.empty()) throw ConfigError("abbreviation list is empty: " + path.string());
    return out;
}

json IngestReport::to_json() const {
    return {{"documents", documents},   {"undecodable", undecodable}, {"empty_documents", empty_documents},
            {"duplicate_doc_ids", duplicate_doc_ids}, {"sentences_seen", sentences_seen},
            {"too_long", too_long},     {"duplicates", duplicates},   {"emitted", emitted}};
}

std::vector<Token> tokenize(std::string_view text) {
    std::vector<std::string> surfaces;
    for (const auto& chunk : whitespace_chunks(text)) {
        const auto word = text.substr(chunk.begin, chunk.end - chunk.begin);
        const auto cps = code_points(word);
        std::size_t b = 0, e = cps.size();
        while (b < e && cps[b].punct) ++b;
        if (b == e) {
            for (const auto& cp : cps) surfaces.emplace_back(word.substr(cp.offset, cp.length));
            continue;
        }
        while (e > b && cps[e - 1].punct) --e;
        for (std::size_t k = 0; k < b; ++k) surfaces.emplace_back(word.substr(cps[k].offset, cps[k].length));
        surfaces.emplace_back(word.substr(cps[b].offset, cps[e - 1].offset + cps[e - 1].length - cps[b].offset));
        for (std::size_t k = e; k < cps.size(); ++k) surfaces.emplace_back(word.substr(cps[k].offset, cps[k].length));
    }
    return make_tokens(surfaces);
}

std::vector<std::string> segment(std::string_view text, const AbbreviationList& abbreviations) {
    std::vector<std::string> sentences;
    const auto chunks = whitespace_chunks(text);
    std::size_t start = std::string_view::npos;
    for (std::size_t k = 0; k < chunks.size(); ++k) {
        if (start == std::string_view::npos) start = chunks[k].begin;
        const auto word = text.substr(chunks[k].begin, chunks[k].end - chunks[k].begin);
        if (k + 1 == chunks.size() || ends_sentence(word, abbreviations)) {
            sentences.emplace_back(text.substr(start, chunks[k].end - start));
            start = std::string_view::npos;
        }
    }
    return sentences;
}

std::vector<Token> make_tokens(const std::vector<std::string>& surfaces) {
    std::vector<Token> tokens;
    tokens.reserve(surfaces.size());
    for (std::size_t i = 0; i < surfaces.size(); ++i) tokens.push_back({surfaces[i], i});
    return tokens;
}

std::string sentence_id_for(const std::vector<Token>& tokens) {
    std::string joined;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) joined.push_back(' ');
        joined += tokens[i].surface;
    }
    return text::short_digest(joined);
}

SentenceRecord make_sentence(std::vector<Token> tokens, std::string doc_id) {
    auto id = sentence_id_for(tokens);
    return {std::move(id), std::move(tokens), std::move(doc_id)};
}

std::vector<SentenceRecord> ingest(const std::vector<RawDocument>& documents, const IngestConfig& config,
                                   IngestReport* report) {
    IngestReport local;
    IngestReport& r = report ? *report : local;
    std::vector<SentenceRecord> out;
    std::unordered_set<std::string> seen_docs;
    std::unordered_set<std::string> seen_sentences;
    for (const auto& doc : documents) {
        ++r.documents;
        if (!text::is_valid_utf8(doc.text) || !text::is_valid_utf8(doc.doc_id)) {
            ++r.undecodable;
            continue;
        }
        if (text::trim(doc.text).empty()) {
            ++r.empty_documents;
            continue;
        }
        if (!seen_docs.insert(doc.doc_id).second) {
            ++r.duplicate_doc_ids;
            continue;
        }
        for (const auto& sentence : segment(doc.text, config.abbreviations)) {
            auto tokens = tokenize(sentence);
            if (tokens.empty()) continue;
            ++r.sentences_seen;
            if (tokens.size() > config.max_len) {
                ++r.too_long;
                continue;
            }
            auto record = make_sentence(std::move(tokens), doc.doc_id);
            if (!seen_sentences.insert(record.sentence_id).second) {
                ++r.duplicates;
                continue;
            }
            out.push_back(std::move(record));
        }
    }
    r.emitted = out.size();
    return out;
}

CorpusFormat parse_corpus_format(std::string_view name) {
    if (name == "txt") return CorpusFormat::Txt;
    if (name == "jsonl") return CorpusFormat::Jsonl;
    throw ConfigError("unknown corpus format: " + std::string(name));
}

LoadedCorpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    LoadedCorpus corpus;
    const auto tag = path.stem().string();
    io::for_each_line(path, [&](std::string_view line, std::size_t lineno) {
        if (format == CorpusFormat::Txt) {
            corpus.documents.push_back({tag + ":" + std::to_string(lineno), std::string(line), tag});
            return;
        }
        try {
            const auto j = json::parse(line);
            corpus.documents.push_back({j.at("doc_id").get<std::string>(), j.at("text").get<std::string>(),
                                        j.value("source_tag", tag)});
        } catch (const json::exception&) {
            ++corpus.undecodable;
        }
    });
    return corpus;
}

json to_json(const SentenceRecord& record) {
    return {{"sentence_id", record.sentence_id}, {"doc_id", record.doc_id}, {"tokens", record.surfaces()}};
}

SentenceRecord sentence_from_json(const json& j) {
    auto tokens = make_tokens(j.at("tokens").get<std::vector<std::string>>());
    return {j.at("sentence_id").get<std::string>(), std::move(tokens), j.value("doc_id", std::string())};
}

} // namespace gendermine
