#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gendermine/dataset.hpp"

// Human adjudication of the at-risk queue: an append-only decision log, a
// state that is a pure fold over that log, and an HTTP JSON API.
namespace gendermine::review {

namespace fs = std::filesystem;
using nlohmann::json;

class NotFoundError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class BadRequestError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ConflictError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Verdict { Accepted, RejectedFixedGender, RejectedOther };
std::string_view verdict_name(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view s);
AnnotationState state_for(Verdict v);

struct AnnotationDecision {
    std::string pair_id;
    Language language = Language::Fr;
    Verdict verdict = Verdict::Accepted;
    std::string annotator_id;
    std::int64_t timestamp_ms = 0;
};

json to_json(const AnnotationDecision& d);
AnnotationDecision decision_from_json(const json& j);

// JSON-lines, one decision per line, fsync after each append.
class DecisionLog {
  public:
    explicit DecisionLog(fs::path path);
    void append(const AnnotationDecision& d);
    // A torn final line (crash mid-append) is ignored.
    std::vector<AnnotationDecision> replay() const;
    const fs::path& path() const noexcept { return path_; }

  private:
    fs::path path_;
};

struct Progress {
    Language language = Language::Fr;
    std::size_t accepted = 0;
    std::size_t rejected_fixed = 0;
    std::size_t rejected_other = 0;
    std::size_t pending = 0;
    std::size_t at_risk_total = 0;
    std::size_t quota = 0;

    bool quota_met() const noexcept { return accepted >= quota; }
    std::size_t reviewed() const noexcept { return accepted + rejected_fixed + rejected_other; }
    // accepted / reviewed; empty before the first decision.
    std::optional<double> selection_rate() const;
    json to_json() const;

    bool operator==(const Progress&) const = default;
};

// Annotation state per (pair, language) for the AT_RISK records. When an
// effective annotator is configured only their decisions count; otherwise
// the latest decision wins. Either way a later decision supersedes.
class ReviewState {
  public:
    ReviewState(const std::vector<ExampleRecord>& records, std::optional<std::string> effective_annotator = {});

    bool has_language(Language l) const;
    bool is_at_risk(const std::string& pair_id, Language l) const;
    bool knows_pair(const std::string& pair_id) const;

    // Returns false when the decision does not affect state (other annotator).
    // Throws ConflictError when the pair is not at risk in that language.
    bool apply(const AnnotationDecision& d);

    AnnotationState state(const std::string& pair_id, Language l) const;
    std::optional<std::int64_t> accepted_at(const std::string& pair_id, Language l) const;
    Progress progress(Language l, std::size_t quota) const;
    std::vector<std::string> pending(Language l) const; // sorted by pair_id

  private:
    struct Entry {
        AnnotationState state = AnnotationState::Pending;
        std::optional<std::int64_t> accepted_at;
    };
    using Key = std::pair<std::string, Language>;

    std::optional<std::string> effective_;
    std::map<Key, Entry> entries_;
    std::map<Language, std::array<std::size_t, 4>> counts_;
    std::set<std::string> pairs_;
    std::set<Language> languages_;
};

Progress replay_progress(const std::vector<ExampleRecord>& records, const std::vector<AnnotationDecision>& log,
                         Language language, std::size_t quota, std::optional<std::string> effective_annotator = {});

struct ReviewOptions {
    std::size_t quota = 100;
    std::optional<std::string> effective_annotator;
    std::function<std::int64_t()> clock; // epoch milliseconds; system clock when empty
};

struct QueuePage {
    Language language = Language::Fr;
    std::size_t page = 1;
    std::size_t page_size = 20;
    std::size_t total = 0;
    std::vector<ExampleRecord> items;

    json to_json() const;
};

// Thread-safe service state. Writes are serialized through the log; reads see
// a consistent snapshot.
class ReviewStore {
  public:
    ReviewStore(std::vector<ExampleRecord> records, fs::path log_path, ReviewOptions options = {});

    // page is 1-based. Throws NotFoundError for a language outside the run and
    // BadRequestError for page or page_size of 0.
    QueuePage list_pending(Language l, std::size_t page, std::size_t page_size) const;
    Progress record_decision(AnnotationDecision d);
    Progress progress(Language l) const;

    // Records with the current annotation state and acceptance times overlaid.
    std::vector<ExampleRecord> annotated_records() const;
    std::vector<Language> languages() const;
    std::size_t replayed() const noexcept { return replayed_; }

  private:
    void require_language(Language l) const;

    std::vector<ExampleRecord> records_;
    std::map<std::string, std::size_t> by_id_;
    ReviewOptions options_;
    DecisionLog log_;
    ReviewState state_;
    std::size_t replayed_ = 0;
    mutable std::shared_mutex mutex_;
};

// Item shape served by GET /api/queue, with the focus token marked on both
// source sentences and both translations.
json queue_item_json(const ExampleRecord& r, Language l);

using Exporter = std::function<json(Language)>;

class ReviewServer {
  public:
    ReviewServer(ReviewStore& store, Exporter exporter = {}, std::optional<fs::path> ui_dir = {});
    ~ReviewServer();
    ReviewServer(const ReviewServer&) = delete;
    ReviewServer& operator=(const ReviewServer&) = delete;

    // Binds and serves on a background thread; port 0 picks a free port.
    int start(const std::string& host, int port);
    // Binds and serves on the calling thread until stop().
    bool listen(const std::string& host, int port);
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace gendermine::review
