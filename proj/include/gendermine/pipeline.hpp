#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gendermine/alignment.hpp"
#include "gendermine/corpus.hpp"
#include "gendermine/dataset.hpp"
#include "gendermine/filter.hpp"
#include "gendermine/gateway.hpp"
#include "gendermine/gender.hpp"
#include "gendermine/language.hpp"
#include "gendermine/perturb.hpp"

namespace gendermine::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// Run configuration. The file format is `key = value` lines with '#'
// comments; relative paths resolve against base_dir (the config file's
// directory), and list-valued keys are comma separated.
struct RunConfig {
    fs::path corpus;
    CorpusFormat corpus_format = CorpusFormat::Txt;
    std::size_t max_len = 128;
    std::vector<Language> languages{Language::Fr, Language::De, Language::Es, Language::Ru};

    PerturbConfig perturb;
    align::AlignmentParams alignment;

    std::uint64_t seed = 13;
    std::size_t negatives = 100;
    std::size_t positives_quota = 100;

    // Per-capability backend URL; `backend` is the fallback for all four.
    std::string backend;
    std::map<Capability, std::string> backends;
    int timeout_ms = 30000;
    int max_retries = 4;
    std::size_t in_flight = 8;
    unsigned threads = 0; // 0 = hardware concurrency, capped at 8

    fs::path data_dir = "data";
    std::vector<fs::path> gendered_lists{"wordlists/gender_specific_full.json", "wordlists/male_word_file.txt",
                                         "wordlists/female_word_file.txt"};
    fs::path names = "names/first_names.txt";
    fs::path abbreviations = "sentence_abbreviations.txt";
    fs::path gender_dir = "gender";

    std::string clock = "system"; // or "fixed:<epoch ms>"
    std::optional<std::string> effective_annotator;

    fs::path base_dir = ".";

    // Sets one key; throws ConfigError for unknown keys or bad values.
    void set(std::string_view key, std::string_view value);

    // Canonical key/value listing; parse(render()) round-trips.
    std::vector<std::pair<std::string, std::string>> entries() const;
    std::string render() const;
    json to_json() const;

    std::string backend_for(Capability c) const;
    fs::path resolve(const fs::path& p) const;  // against base_dir
    fs::path resolve_data(const fs::path& p) const; // against data_dir

    std::int64_t now_ms() const;
};

RunConfig parse_config(std::string_view text, fs::path base_dir = ".");
RunConfig load_config(const fs::path& path);
RunConfig config_from_json(const json& j, fs::path base_dir);

// Exclusive ownership of a run directory, held through `<dir>/.lock`.
class RunLock {
  public:
    explicit RunLock(const fs::path& run_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

  private:
    fs::path path_;
};

// Artifact locations inside a run directory.
struct RunLayout {
    fs::path dir;

    fs::path sentences() const { return dir / "sentences.jsonl"; }
    fs::path accepted() const { return dir / "accepted.jsonl"; }
    fs::path rejects() const { return dir / "rejects.jsonl"; }
    fs::path pairs() const { return dir / "pairs.jsonl"; }
    fs::path perturb_trace() const { return dir / "perturb_trace.jsonl"; }
    fs::path translations(Language l) const { return per_lang("translations", l, "jsonl"); }
    fs::path model(Language l) const { return per_lang("model", l, "tsv"); }
    fs::path alignments(Language l) const { return per_lang("alignments", l, "jsonl"); }
    fs::path tagged(Language l) const { return per_lang("tagged", l, "jsonl"); }
    fs::path detect(Language l) const { return per_lang("detect", l, "jsonl"); }
    fs::path outcomes(Language l) const { return per_lang("outcomes", l, "jsonl"); }
    fs::path negatives(Language l) const { return per_lang("negatives", l, "jsonl"); }
    fs::path stats() const { return dir / "stats.json"; }
    fs::path records() const { return dir / "records.jsonl"; }
    fs::path manifest() const { return dir / "manifest.json"; }
    fs::path report(std::string_view stage) const { return dir / "reports" / (std::string(stage) + ".json"); }
    fs::path marker(std::string_view stage) const { return dir / "stages" / (std::string(stage) + ".json"); }
    fs::path cache() const { return dir / "cache"; }
    fs::path decisions() const { return dir / "review" / "decisions.jsonl"; }
    fs::path export_dir() const { return dir / "export"; }

  private:
    fs::path per_lang(std::string_view stem, Language l, std::string_view ext) const {
        return dir / (std::string(stem) + "." + std::string(language_code(l)) + "." + std::string(ext));
    }
};

unsigned effective_threads(unsigned configured);

// Maps fn over [0, n) on up to `threads` workers; results keep index order.
// The exception from the lowest failing index is rethrown.
template <typename T>
std::vector<T> parallel_map(std::size_t n, unsigned threads, const std::function<T(std::size_t)>& fn);

// Configured gateway, lexicons and taggers for one run.
class Resources {
  public:
    // `overrides` replaces configured backends, for tests that inject doubles.
    explicit Resources(const RunConfig& config, std::optional<fs::path> cache_dir = {},
                       const std::map<Capability, std::shared_ptr<Backend>>& overrides = {});

    Gateway& gateway() { return *gateway_; }
    const FilterLexicons& lexicons();
    const GenderTagger& tagger(Language l);
    const IngestConfig& ingest_config();

    // Digest-stamped resource files, for the manifest.
    json resource_digests(const std::vector<Language>& languages);
    json backend_identities() const;

  private:
    const RunConfig& config_;
    std::unique_ptr<Gateway> gateway_;
    std::optional<FilterLexicons> lexicons_;
    std::optional<IngestConfig> ingest_;
    std::map<Language, GenderTagger> taggers_;
};

// File-to-file stage bodies. Each returns its report (also the run-report
// JSON). Backend failures surface as StageError naming the stage and record.
json stage_ingest(const RunConfig& config, Resources& res, const fs::path& input, CorpusFormat format,
                  const fs::path& out);
json stage_filter(const RunConfig& config, Resources& res, const fs::path& in, const fs::path& out,
                  const fs::path& rejects);
json stage_perturb(const RunConfig& config, Resources& res, const fs::path& in, const fs::path& out,
                   const fs::path& trace_out);
json stage_translate(const RunConfig& config, Resources& res, Language l, const fs::path& pairs,
                     const fs::path& out);
json stage_align_train(const RunConfig& config, Language l, const fs::path& translations, const fs::path& model_out);
json stage_align_decode(const RunConfig& config, Language l, const fs::path& model, const fs::path& translations,
                        const fs::path& out);
json stage_tag(const RunConfig& config, Resources& res, Language l, const fs::path& alignments, const fs::path& out);
json stage_detect(Language l, const fs::path& tagged, const fs::path& out, const fs::path& outcomes_out);
json stage_sample(const RunConfig& config, Language l, const fs::path& detect, const fs::path& out);
json stage_stats(const std::vector<Language>& languages, const RunLayout& layout, const fs::path& out);
json stage_records(const std::vector<Language>& languages, const RunLayout& layout, const fs::path& out);

std::vector<ExampleRecord> load_records(const fs::path& path);
std::vector<OutcomeRow> load_outcomes(const fs::path& path);

// The per-language stats object as written to stats.json.
json ratios_json(std::span<const OutcomeRow> rows);

struct RunOptions {
    bool resume = true;
    std::map<Capability, std::shared_ptr<Backend>> backends; // test doubles
    std::function<void(std::string_view)> log;
};

// ingest -> filter -> perturb -> translate -> align -> tag -> detect ->
// sample -> stats -> records, then the manifest. With `resume`, a stage whose
// marker matches the current inputs, outputs and settings is skipped.
json run_pipeline(const RunConfig& config, const fs::path& run_dir, const RunOptions& options = {});

// Exports one language using the run's records overlaid with the review log.
ExportResult export_run(const RunConfig& config, const fs::path& run_dir, Language l, const fs::path& out_dir);

// Files compared by the determinism checks: every regular file under the run
// directory except the response cache, the lock, review state and exports.
std::vector<fs::path> artifact_files(const fs::path& run_dir);

template <typename T>
std::vector<T> parallel_map(std::size_t n, unsigned threads, const std::function<T(std::size_t)>& fn) {
    std::vector<std::optional<T>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto workers = std::min<std::size_t>(std::max(threads, 1u), n);
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<T> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

} // namespace gendermine::pipeline
