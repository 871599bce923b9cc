#include "gendermine/pipeline.hpp"

#include "gendermine/divergence.hpp"
#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/review.hpp"
#include "gendermine/text.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstring>
#include <set>
#include <unordered_map>

namespace gendermine::pipeline {

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const auto* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) throw ConfigError("bad value for " + std::string(key) + ": " + std::string(value));
    return out;
}

double parse_real(std::string_view key, std::string_view value) {
    try {
        std::size_t used = 0;
        const std::string s(value);
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::logic_error&) {
        throw ConfigError("bad value for " + std::string(key) + ": " + std::string(value));
    }
}

std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    for (const auto& part : text::split(value, ',')) {
        auto t = text::trim(part);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string join_paths(const std::vector<fs::path>& paths) {
    std::string out;
    for (const auto& p : paths) {
        if (!out.empty()) out += ",";
        out += p.generic_string();
    }
    return out;
}

constexpr std::string_view kFixtureScheme = "fixture://";

// Stands in for a capability with no configured URL; stages that never use
// it run fine, and the first call explains what is missing.
class UnconfiguredBackend final : public Backend {
  public:
    std::string call(Capability c, const json&, const std::string&) override {
        throw ConfigError("no backend configured for " + std::string(capability_name(c)) + " (set backend." +
                          std::string(capability_name(c)) + " or GS_BACKEND_" + std::string(capability_env_name(c)) +
                          "_URL)");
    }
    std::string identity() const override { return "unconfigured"; }
};

std::string lower_copy(const std::string& s) { return text::to_lower(s); }

std::vector<std::string> lowered(const std::vector<std::string>& words) {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(lower_copy(w));
    return out;
}

std::vector<std::string> surfaces_of(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(t.surface);
    return out;
}

std::vector<std::string> tokenize_surfaces(std::string_view text) { return surfaces_of(tokenize(text)); }

json optional_json(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }
json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

} // namespace

// --- config -------------------------------------------------------------

void RunConfig::set(std::string_view key, std::string_view raw) {
    const auto value = text::trim(raw);
    if (key == "corpus") corpus = value;
    else if (key == "corpus_format") corpus_format = parse_corpus_format(value);
    else if (key == "max_len") max_len = parse_number<std::size_t>(key, value);
    else if (key == "languages") {
        languages.clear();
        for (const auto& code : split_list(value)) languages.push_back(parse_language(code));
    } else if (key == "scan_cap") perturb.scan_cap = parse_number<std::size_t>(key, value);
    else if (key == "accept_cap") perturb.accept_cap = parse_number<std::size_t>(key, value);
    else if (key == "subword_policy") perturb.subword = parse_subword_policy(value);
    else if (key == "lambda") alignment.tension = parse_real(key, value);
    else if (key == "p0") alignment.null_prob = parse_real(key, value);
    else if (key == "iterations") alignment.iterations = parse_number<int>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "negatives") negatives = parse_number<std::size_t>(key, value);
    else if (key == "positives_quota") positives_quota = parse_number<std::size_t>(key, value);
    else if (key == "backend") backend = value;
    else if (key.starts_with("backend.")) {
        const auto cap = parse_capability(key.substr(8));
        if (value.empty()) backends.erase(cap);
        else backends[cap] = value;
    } else if (key == "timeout_ms") timeout_ms = parse_number<int>(key, value);
    else if (key == "max_retries") max_retries = parse_number<int>(key, value);
    else if (key == "in_flight") in_flight = parse_number<std::size_t>(key, value);
    else if (key == "threads") threads = parse_number<unsigned>(key, value);
    else if (key == "data_dir") data_dir = value;
    else if (key == "gendered_lists") {
        gendered_lists.clear();
        for (const auto& p : split_list(value)) gendered_lists.emplace_back(p);
    } else if (key == "names") names = value;
    else if (key == "abbreviations") abbreviations = value;
    else if (key == "gender_dir") gender_dir = value;
    else if (key == "clock") {
        if (value != "system" && !value.starts_with("fixed:")) throw ConfigError("clock must be system or fixed:<ms>");
        if (value.starts_with("fixed:")) parse_number<std::int64_t>(key, std::string_view(value).substr(6));
        clock = value;
    } else if (key == "effective_annotator") {
        if (value.empty()) effective_annotator.reset();
        else effective_annotator = value;
    } else throw ConfigError("unknown config key: " + std::string(key));

    if (key == "max_len" && max_len < 1) throw ConfigError("max_len must be at least 1");
    if ((key == "scan_cap" || key == "accept_cap") && (perturb.scan_cap < 1 || perturb.accept_cap < 1))
        throw ConfigError("scan_cap and accept_cap must be at least 1");
    if (key == "lambda" && !(alignment.tension > 0)) throw ConfigError("lambda must be positive");
    if (key == "p0" && !(alignment.null_prob >= 0 && alignment.null_prob < 1)) throw ConfigError("p0 must be in [0,1)");
    if (key == "iterations" && alignment.iterations < 1) throw ConfigError("iterations must be at least 1");
    if (key == "timeout_ms" && timeout_ms <= 0) throw ConfigError("timeout_ms must be positive");
    if (key == "max_retries" && max_retries < 0) throw ConfigError("max_retries must be non-negative");
    if (key == "in_flight" && in_flight < 1) throw ConfigError("in_flight must be at least 1");
    if (key == "languages" && languages.empty()) throw ConfigError("languages must not be empty");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
    std::string langs;
    for (auto l : languages) {
        if (!langs.empty()) langs += ",";
        langs += language_code(l);
    }
    std::vector<std::pair<std::string, std::string>> out{
        {"corpus", corpus.generic_string()},
        {"corpus_format", corpus_format == CorpusFormat::Txt ? "txt" : "jsonl"},
        {"max_len", std::to_string(max_len)},
        {"languages", langs},
        {"scan_cap", std::to_string(perturb.scan_cap)},
        {"accept_cap", std::to_string(perturb.accept_cap)},
        {"subword_policy", std::string(subword_policy_name(perturb.subword))},
        {"lambda", format_real(alignment.tension)},
        {"p0", format_real(alignment.null_prob)},
        {"iterations", std::to_string(alignment.iterations)},
        {"seed", std::to_string(seed)},
        {"negatives", std::to_string(negatives)},
        {"positives_quota", std::to_string(positives_quota)},
        {"backend", backend},
    };
    for (auto c : kCapabilities) {
        auto it = backends.find(c);
        out.emplace_back("backend." + std::string(capability_name(c)), it == backends.end() ? "" : it->second);
    }
    out.insert(out.end(), {
                              {"timeout_ms", std::to_string(timeout_ms)},
                              {"max_retries", std::to_string(max_retries)},
                              {"in_flight", std::to_string(in_flight)},
                              {"threads", std::to_string(threads)},
                              {"data_dir", data_dir.generic_string()},
                              {"gendered_lists", join_paths(gendered_lists)},
                              {"names", names.generic_string()},
                              {"abbreviations", abbreviations.generic_string()},
                              {"gender_dir", gender_dir.generic_string()},
                              {"clock", clock},
                              {"effective_annotator", effective_annotator.value_or("")},
                          });
    return out;
}

std::string RunConfig::render() const {
    std::string out;
    for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
    return out;
}

json RunConfig::to_json() const {
    json j = json::object();
    for (const auto& [k, v] : entries()) j[k] = v;
    return j;
}

std::string RunConfig::backend_for(Capability c) const {
    auto it = backends.find(c);
    return it != backends.end() ? it->second : backend;
}

fs::path RunConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

fs::path RunConfig::resolve_data(const fs::path& p) const { return p.is_absolute() ? p : resolve(data_dir) / p; }

std::int64_t RunConfig::now_ms() const {
    if (clock.starts_with("fixed:")) return parse_number<std::int64_t>("clock", std::string_view(clock).substr(6));
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

RunConfig parse_config(std::string_view text, fs::path base_dir) {
    RunConfig cfg;
    cfg.base_dir = std::move(base_dir);
    std::size_t lineno = 0;
    for (const auto& raw : text::split(text, '\n')) {
        ++lineno;
        auto line = text::trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            cfg.set(text::trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    auto dir = path.parent_path();
    return parse_config(io::read_file(path), dir.empty() ? fs::path(".") : dir);
}

RunConfig config_from_json(const json& j, fs::path base_dir) {
    RunConfig cfg;
    cfg.base_dir = std::move(base_dir);
    for (const auto& [k, v] : j.items()) cfg.set(k, v.get<std::string>());
    return cfg;
}

// --- lock ---------------------------------------------------------------

RunLock::RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
    fs::create_directories(run_dir);
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw ConfigError("run directory is locked by another process (remove " + path_.string() +
                              " if it is stale)");
        throw ConfigError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
    const auto pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
}

unsigned effective_threads(unsigned configured) {
    if (configured > 0) return configured;
    return std::clamp(std::thread::hardware_concurrency(), 1u, 8u);
}

// --- resources ----------------------------------------------------------

Resources::Resources(const RunConfig& config, std::optional<fs::path> cache_dir,
                     const std::map<Capability, std::shared_ptr<Backend>>& overrides)
    : config_(config) {
    GatewayOptions opts;
    opts.in_flight = config.in_flight;
    opts.cache_dir = std::move(cache_dir);
    gateway_ = std::make_unique<Gateway>(opts);
    for (auto c : kCapabilities) {
        if (auto it = overrides.find(c); it != overrides.end()) {
            gateway_->set_backend(c, it->second, config.max_retries);
            continue;
        }
        const auto url = resolve_backend_url(c, config.backend_for(c));
        std::shared_ptr<Backend> backend;
        if (url.empty()) {
            backend = std::make_shared<UnconfiguredBackend>();
        } else if (url.starts_with(kFixtureScheme)) {
            backend = std::make_shared<FixtureBackend>(config.resolve(url.substr(kFixtureScheme.size())), url);
        } else {
            backend = make_backend(BackendEndpoint{c, url, std::chrono::milliseconds(config.timeout_ms),
                                                   config.max_retries});
        }
        gateway_->set_backend(c, std::move(backend), config.max_retries);
    }
}

const FilterLexicons& Resources::lexicons() {
    if (!lexicons_) {
        std::vector<fs::path> lists;
        for (const auto& p : config_.gendered_lists) lists.push_back(config_.resolve_data(p));
        lexicons_ = FilterLexicons{load_gendered_list(lists), load_name_list(config_.resolve_data(config_.names))};
    }
    return *lexicons_;
}

const GenderTagger& Resources::tagger(Language l) {
    auto it = taggers_.find(l);
    if (it == taggers_.end()) it = taggers_.emplace(l, load_tagger(l, config_.resolve_data(config_.gender_dir))).first;
    return it->second;
}

const IngestConfig& Resources::ingest_config() {
    if (!ingest_) {
        IngestConfig cfg;
        cfg.max_len = config_.max_len;
        const auto abbr = config_.resolve_data(config_.abbreviations);
        if (fs::exists(abbr)) cfg.abbreviations = load_abbreviations(abbr);
        ingest_ = std::move(cfg);
    }
    return *ingest_;
}

json Resources::resource_digests(const std::vector<Language>& languages) {
    auto stamp = [&](const fs::path& configured) {
        const auto p = config_.resolve_data(configured);
        return json{{"path", configured.generic_string()},
                    {"sha256", fs::exists(p) ? json(io::file_digest(p)) : json(nullptr)}};
    };
    json lists = json::array();
    for (const auto& p : config_.gendered_lists) lists.push_back(stamp(p));
    json gender = json::object();
    for (auto l : languages) {
        const auto code = std::string(language_code(l));
        json files = json::array();
        for (const auto* suffix : {".lexicon.tsv", ".local.tsv", ".rules.tsv"}) {
            const auto rel = config_.gender_dir / (code + suffix);
            if (fs::exists(config_.resolve_data(rel))) files.push_back(stamp(rel));
        }
        gender[code] = files;
    }
    return {{"gendered_lists", lists},
            {"names", stamp(config_.names)},
            {"abbreviations", stamp(config_.abbreviations)},
            {"gender", gender}};
}

json Resources::backend_identities() const {
    json j = json::object();
    for (auto c : kCapabilities) j[std::string(capability_name(c))] = gateway_->backend_identity(c);
    return j;
}

// --- stages -------------------------------------------------------------

json stage_ingest(const RunConfig&, Resources& res, const fs::path& input, CorpusFormat format, const fs::path& out) {
    if (!fs::exists(input)) throw ConfigError("corpus not found: " + input.string());
    auto loaded = load_corpus(input, format);
    IngestReport report;
    const auto records = ingest(loaded.documents, res.ingest_config(), &report);
    std::vector<json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(to_json(r));
    io::write_jsonl(out, rows);
    auto j = report.to_json();
    j["unparseable_lines"] = loaded.undecodable;
    return j;
}

json stage_filter(const RunConfig& config, Resources& res, const fs::path& in, const fs::path& out,
                  const fs::path& rejects) {
    std::vector<SentenceRecord> records;
    for (const auto& row : io::read_jsonl(in)) records.push_back(sentence_from_json(row));
    const auto& lex = res.lexicons();
    auto& gw = res.gateway();
    const auto outcomes = parallel_map<FilterOutcome>(records.size(), effective_threads(config.threads), [&](std::size_t i) {
        const auto& r = records[i];
        try {
            const auto ner = gw.ner_tag(r.tokens);
            const auto pos = gw.pos_tag(r.tokens);
            return filter_sentence(r, ner, pos, lex);
        } catch (const BackendError& e) {
            throw StageError("filter", r.sentence_id, e.what());
        } catch (const PreconditionError& e) {
            throw StageError("filter", r.sentence_id, e.what());
        }
    });

    std::vector<json> accepted, rejected;
    std::array<std::size_t, kRejectReasonCount> counts{};
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (const auto* s = std::get_if<SourceSentence>(&outcomes[i])) {
            accepted.push_back(to_json(*s));
        } else {
            const auto reason = std::get<Rejection>(outcomes[i]).reason;
            ++counts[static_cast<std::size_t>(reason)];
            rejected.push_back({{"sentence_id", records[i].sentence_id}, {"reason", reject_reason_name(reason)}});
        }
    }
    io::write_jsonl(out, accepted);
    io::write_jsonl(rejects, rejected);
    json by_reason = json::object();
    for (std::size_t k = 0; k < kRejectReasonCount; ++k)
        by_reason[std::string(reject_reason_name(static_cast<RejectReason>(k)))] = counts[k];
    return {{"input", records.size()}, {"accepted", accepted.size()}, {"rejected", rejected.size()},
            {"rejected_by_reason", by_reason}};
}

json stage_perturb(const RunConfig& config, Resources& res, const fs::path& in, const fs::path& out,
                   const fs::path& trace_out) {
    std::vector<SourceSentence> sources;
    for (const auto& row : io::read_jsonl(in)) sources.push_back(source_from_json(row));
    const auto& lex = res.lexicons();
    auto& gw = res.gateway();

    struct Attempt {
        PerturbResult result;
        std::optional<std::string> failure;
    };
    const auto attempts = parallel_map<Attempt>(sources.size(), effective_threads(config.threads), [&](std::size_t i) {
        try {
            return Attempt{perturb(sources[i], gw, lex, config.perturb), std::nullopt};
        } catch (const BackendError& e) {
            return Attempt{{}, std::string(e.what())};
        }
    });

    std::vector<json> pairs, traces;
    json failures = json::array();
    std::size_t max_scanned = 0, max_accepted = 0, max_returned = 0, with_pairs = 0;
    for (std::size_t i = 0; i < attempts.size(); ++i) {
        const auto& a = attempts[i];
        const auto& id = sources[i].sentence.sentence_id;
        if (a.failure) {
            failures.push_back({{"sentence_id", id}, {"message", *a.failure}});
            continue;
        }
        auto t = a.result.trace.to_json();
        t["sentence_id"] = id;
        traces.push_back(std::move(t));
        max_scanned = std::max(max_scanned, a.result.trace.scanned);
        max_accepted = std::max(max_accepted, a.result.trace.accepted);
        max_returned = std::max(max_returned, a.result.trace.candidates_returned);
        if (!a.result.pairs.empty()) ++with_pairs;
        for (const auto& p : a.result.pairs) pairs.push_back(to_json(p));
    }
    io::write_jsonl(out, pairs);
    io::write_jsonl(trace_out, traces);
    return {{"sentences", sources.size()},
            {"sentences_with_pairs", with_pairs},
            {"pairs", pairs.size()},
            {"failed", failures.size()},
            {"failures", failures},
            {"max_candidates_returned", max_returned},
            {"max_scanned", max_scanned},
            {"max_accepted", max_accepted},
            {"scan_cap", config.perturb.scan_cap},
            {"accept_cap", config.perturb.accept_cap},
            {"subword_policy", subword_policy_name(config.perturb.subword)}};
}

json stage_translate(const RunConfig& config, Resources& res, Language l, const fs::path& pairs_path,
                     const fs::path& out) {
    struct Side_ {
        std::string pair_id;
        Side side;
        std::vector<std::string> tokens;
        std::size_t focus_index;
        std::string text;
    };
    std::vector<Side_> sides;
    for (const auto& row : io::read_jsonl(pairs_path)) {
        const auto p = pair_from_json(row);
        const auto base = p.base.sentence.surfaces();
        const auto sub = surfaces_of(p.substituted_tokens);
        sides.push_back({p.pair_id, Side::Original, base, p.base.focus_index, text::detokenize(base)});
        sides.push_back({p.pair_id, Side::Substituted, sub, p.base.focus_index, text::detokenize(sub)});
    }

    std::vector<std::string> distinct;
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& s : sides)
        if (index.emplace(s.text, distinct.size()).second) distinct.push_back(s.text);

    auto& gw = res.gateway();
    const auto translations =
        parallel_map<std::string>(distinct.size(), effective_threads(config.threads), [&](std::size_t i) {
            try {
                return gw.translate(distinct[i], l).text;
            } catch (const BackendError& e) {
                throw StageError("translate", text::short_digest(distinct[i]), e.what());
            }
        });

    std::vector<json> rows;
    rows.reserve(sides.size());
    for (const auto& s : sides) {
        const auto& t = translations[index.at(s.text)];
        rows.push_back({{"pair_id", s.pair_id},
                        {"side", side_name(s.side)},
                        {"language", language_code(l)},
                        {"source_tokens", s.tokens},
                        {"focus_index", s.focus_index},
                        {"source_text", s.text},
                        {"text", t},
                        {"tokens", tokenize_surfaces(t)}});
    }
    io::write_jsonl(out, rows);
    return {{"language", language_code(l)}, {"rows", rows.size()}, {"requests", distinct.size()}};
}

json stage_align_train(const RunConfig& config, Language l, const fs::path& translations, const fs::path& model_out) {
    std::vector<align::BitextPair> bitext;
    std::set<std::pair<std::string, std::string>> seen;
    std::size_t rows = 0;
    io::for_each_line(translations, [&](std::string_view line, std::size_t) {
        const auto j = json::parse(line);
        ++rows;
        if (!seen.emplace(j.at("source_text").get<std::string>(), j.at("text").get<std::string>()).second) return;
        bitext.push_back({lowered(j.at("source_tokens").get<std::vector<std::string>>()),
                          lowered(j.at("tokens").get<std::vector<std::string>>())});
    });

    json report{{"language", language_code(l)}, {"rows", rows}, {"bitext_pairs", bitext.size()},
                {"tension", config.alignment.tension}, {"null_prob", config.alignment.null_prob},
                {"iterations", config.alignment.iterations}};
    if (bitext.empty()) {
        io::write_file_atomic(model_out, align::AlignmentModel(config.alignment).serialize());
        report["skipped_pairs"] = 0;
        report["log_likelihood"] = json::array();
        return report;
    }
    const auto trained = align::em_train(bitext, config.alignment, effective_threads(config.threads));
    io::write_file_atomic(model_out, trained.model.serialize());
    report["skipped_pairs"] = trained.skipped_pairs;
    report["log_likelihood"] = trained.log_likelihood;
    return report;
}

json stage_align_decode(const RunConfig& config, Language l, const fs::path& model_path, const fs::path& translations,
                        const fs::path& out) {
    const auto model = align::AlignmentModel::deserialize(io::read_file(model_path));
    auto rows = io::read_jsonl(translations);
    const auto decoded = parallel_map<json>(rows.size(), effective_threads(config.threads), [&](std::size_t i) {
        auto row = rows[i];
        const auto src = lowered(row.at("source_tokens").get<std::vector<std::string>>());
        const auto tgt = lowered(row.at("tokens").get<std::vector<std::string>>());
        const auto focus = row.at("focus_index").get<std::size_t>();
        if (focus >= src.size())
            throw StageError("align", row.at("pair_id").get<std::string>(), "focus index outside source sentence");
        const auto links = align::viterbi_align(model, src, tgt);
        const auto proj = align::project_focus(model, src, focus, tgt);
        row["alignment"] = align::to_pharaoh(links);
        row["target_index"] = optional_json(proj.target_index);
        row["posterior"] = optional_json(proj.posterior);
        return row;
    });
    std::size_t projected = 0;
    for (const auto& r : decoded)
        if (!r.at("target_index").is_null()) ++projected;
    io::write_jsonl(out, decoded);
    return {{"language", language_code(l)}, {"rows", decoded.size()}, {"projected", projected},
            {"unprojected", decoded.size() - projected}};
}

json stage_tag(const RunConfig& config, Resources& res, Language l, const fs::path& alignments, const fs::path& out) {
    const auto& tagger = res.tagger(l);
    auto rows = io::read_jsonl(alignments);
    const auto tagged = parallel_map<json>(rows.size(), effective_threads(config.threads), [&](std::size_t i) {
        auto row = rows[i];
        row["target_token"] = nullptr;
        row["gender"] = nullptr;
        row["evidence"] = nullptr;
        if (!row.at("target_index").is_null()) {
            const auto tokens = row.at("tokens").get<std::vector<std::string>>();
            const auto idx = row.at("target_index").get<std::size_t>();
            const auto tag = tagger.tag(tokens, idx);
            row["target_token"] = tokens.at(idx);
            row["gender"] = gender_name(tag.value);
            row["evidence"] = evidence_name(tag.evidence);
        }
        return row;
    });
    std::map<std::string, std::size_t> by_gender, by_evidence;
    for (const auto& r : tagged) {
        if (r.at("gender").is_null()) continue;
        ++by_gender[r.at("gender").get<std::string>()];
        ++by_evidence[r.at("evidence").get<std::string>()];
    }
    io::write_jsonl(out, tagged);
    return {{"language", language_code(l)}, {"rows", tagged.size()}, {"by_gender", by_gender},
            {"by_evidence", by_evidence}};
}

namespace {

TranslationOutcome outcome_of(const json& row) {
    TranslationOutcome o;
    o.pair_id = row.at("pair_id").get<std::string>();
    o.side = parse_side(row.at("side").get<std::string>());
    o.language = parse_language(row.at("language").get<std::string>());
    o.translation_tokens = row.at("tokens").get<std::vector<std::string>>();
    if (!row.at("target_index").is_null()) o.projection.target_index = row.at("target_index").get<std::size_t>();
    if (!row.at("posterior").is_null()) o.projection.posterior = row.at("posterior").get<double>();
    if (!row.at("gender").is_null())
        o.gender = GenderTag{parse_gender(row.at("gender").get<std::string>()),
                             parse_evidence(row.at("evidence").get<std::string>())};
    return o;
}

struct TaggedPair {
    std::optional<json> original;
    std::optional<json> substituted;
};

// Tagged rows grouped per pair, in first-seen order.
std::vector<std::pair<std::string, TaggedPair>> group_sides(const std::vector<json>& rows, std::string_view stage) {
    std::vector<std::pair<std::string, TaggedPair>> out;
    std::unordered_map<std::string, std::size_t> at;
    for (const auto& row : rows) {
        const auto id = row.at("pair_id").get<std::string>();
        auto [it, fresh] = at.emplace(id, out.size());
        if (fresh) out.emplace_back(id, TaggedPair{});
        auto& slot = parse_side(row.at("side").get<std::string>()) == Side::Original ? out[it->second].second.original
                                                                                     : out[it->second].second.substituted;
        if (slot) throw StageError(std::string(stage), id, "duplicate side row");
        slot = row;
    }
    for (const auto& [id, p] : out)
        if (!p.original || !p.substituted) throw StageError(std::string(stage), id, "pair is missing a side");
    return out;
}

json gender_or_null(const TranslationOutcome& o) { return o.gender ? json(gender_name(o.gender->value)) : json(nullptr); }

} // namespace

json stage_detect(Language l, const fs::path& tagged, const fs::path& out, const fs::path& outcomes_out) {
    const auto grouped = group_sides(io::read_jsonl(tagged), "detect");
    std::vector<json> labels, outcomes;
    std::map<std::string, std::size_t> by_label, by_reason;
    for (const auto& [id, p] : grouped) {
        const auto a = outcome_of(*p.original);
        const auto b = outcome_of(*p.substituted);
        if (a.language != l) throw StageError("detect", id, "row language differs from the stage language");
        const auto label = classify(a, b);
        ++by_label[std::string(risk_name(label.value))];
        if (label.value == Risk::Indeterminate) ++by_reason[label.reason];
        labels.push_back({{"pair_id", id},
                          {"language", language_code(l)},
                          {"label", risk_name(label.value)},
                          {"reason", label.reason},
                          {"genders", {{"original", gender_or_null(a)}, {"substituted", gender_or_null(b)}}}});
        for (const auto* row : {&*p.original, &*p.substituted}) {
            OutcomeRow o;
            o.pair_id = id;
            o.side = parse_side(row->at("side").get<std::string>());
            o.language = l;
            const auto src = row->at("source_tokens").get<std::vector<std::string>>();
            o.focus_surface = src.at(row->at("focus_index").get<std::size_t>());
            if (!row->at("target_token").is_null()) o.target_token = row->at("target_token").get<std::string>();
            o.gender = row->at("gender").is_null() ? Gender::Unknown : parse_gender(row->at("gender").get<std::string>());
            o.label = label.value;
            outcomes.push_back(to_json(o));
        }
    }
    io::write_jsonl(out, labels);
    io::write_jsonl(outcomes_out, outcomes);
    for (auto r : {Risk::AtRisk, Risk::NotAtRisk, Risk::Indeterminate}) by_label.try_emplace(std::string(risk_name(r)), 0);
    return {{"language", language_code(l)}, {"pairs", labels.size()}, {"by_label", by_label}, {"indeterminate_by_reason", by_reason}};
}

json stage_sample(const RunConfig& config, Language l, const fs::path& detect, const fs::path& out) {
    std::vector<std::string> population;
    io::for_each_line(detect, [&](std::string_view line, std::size_t) {
        const auto j = json::parse(line);
        if (j.at("label").get<std::string>() == risk_name(Risk::NotAtRisk))
            population.push_back(j.at("pair_id").get<std::string>());
    });
    SampleReport report;
    const auto drawn = sample_negatives(std::move(population), config.negatives, config.seed, &report);
    std::vector<json> rows;
    for (std::size_t k = 0; k < drawn.size(); ++k)
        rows.push_back({{"draw", k}, {"pair_id", drawn[k]}, {"language", language_code(l)}});
    io::write_jsonl(out, rows);
    return {{"language", language_code(l)},
            {"seed", config.seed},
            {"population", report.population},
            {"requested", report.requested},
            {"drawn", report.drawn},
            {"warning", report.warning ? json(*report.warning) : json(nullptr)}};
}

std::vector<OutcomeRow> load_outcomes(const fs::path& path) {
    std::vector<OutcomeRow> out;
    for (const auto& row : io::read_jsonl(path)) out.push_back(outcome_from_json(row));
    return out;
}

json ratios_json(std::span<const OutcomeRow> rows) {
    auto list = [&](RatioGroup g) {
        json arr = json::array();
        for (const auto& r : compute_ratios(rows, g)) arr.push_back(to_json(r));
        return arr;
    };
    return {{"positive", list(RatioGroup::Positive)}, {"negative", list(RatioGroup::Negative)}};
}

json stage_stats(const std::vector<Language>& languages, const RunLayout& layout, const fs::path& out) {
    json langs = json::object();
    for (auto l : languages) {
        const auto rows = load_outcomes(layout.outcomes(l));
        langs[std::string(language_code(l))] = ratios_json(rows);
    }
    json stats{{"languages", langs}};
    io::write_json(out, stats);
    json summary = json::object();
    for (auto& [code, v] : langs.items())
        summary[code] = {{"positive_forms", v["positive"].size()}, {"negative_forms", v["negative"].size()}};
    return summary;
}

std::vector<ExampleRecord> load_records(const fs::path& path) {
    std::vector<ExampleRecord> out;
    for (const auto& row : io::read_jsonl(path)) out.push_back(record_from_json(row));
    return out;
}

json stage_records(const std::vector<Language>& languages, const RunLayout& layout, const fs::path& out) {
    std::vector<ExampleRecord> records;
    std::unordered_map<std::string, std::size_t> at;
    for (const auto& row : io::read_jsonl(layout.pairs())) {
        const auto p = pair_from_json(row);
        ExampleRecord r;
        r.pair_id = p.pair_id;
        r.sentence_id = p.base.sentence.sentence_id;
        r.source_original = p.base.sentence.surfaces();
        r.source_substituted = surfaces_of(p.substituted_tokens);
        r.focus_index = p.base.focus_index;
        r.original_surface = p.base.focus_surface;
        r.substitute_surface = p.substitute_surface;
        r.candidate_rank = p.candidate_rank;
        r.mlm_score = p.mlm_score;
        at.emplace(r.pair_id, records.size());
        records.push_back(std::move(r));
    }
    auto find = [&](const std::string& id, std::string_view stage) -> ExampleRecord& {
        auto it = at.find(id);
        if (it == at.end()) throw StageError(std::string(stage), id, "pair not in pairs.jsonl");
        return records[it->second];
    };

    for (auto l : languages) {
        for (const auto& [id, p] : group_sides(io::read_jsonl(layout.tagged(l)), "records")) {
            auto& view = find(id, "records").languages[l];
            view.original = outcome_of(*p.original);
            view.substituted = outcome_of(*p.substituted);
            view.original_text = p.original->at("text").get<std::string>();
            view.substituted_text = p.substituted->at("text").get<std::string>();
        }
        for (const auto& row : io::read_jsonl(layout.detect(l))) {
            auto& view = find(row.at("pair_id").get<std::string>(), "records").languages[l];
            view.label = {parse_risk(row.at("label").get<std::string>()), row.at("reason").get<std::string>()};
        }
        for (const auto& row : io::read_jsonl(layout.negatives(l))) {
            auto& view = find(row.at("pair_id").get<std::string>(), "records").languages[l];
            view.negative_draw = row.at("draw").get<std::size_t>();
        }
    }

    std::vector<json> rows;
    rows.reserve(records.size());
    for (const auto& r : records) rows.push_back(to_json(r));
    io::write_jsonl(out, rows);
    return {{"records", rows.size()}};
}

// --- orchestration ------------------------------------------------------

namespace {

struct StageSpec {
    std::string name;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    json settings;
    std::function<json()> body;
};

std::string display_name(const fs::path& p, const fs::path& run_dir) {
    const auto rel = p.lexically_relative(run_dir);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.filename().generic_string();
}

json digest_map(const std::vector<fs::path>& files, const fs::path& run_dir) {
    json j = json::object();
    for (const auto& f : files) j[display_name(f, run_dir)] = fs::exists(f) ? json(io::file_digest(f)) : json(nullptr);
    return j;
}

class Orchestrator {
  public:
    Orchestrator(const fs::path& run_dir, const RunOptions& options) : layout_{run_dir}, options_(options) {}

    json run(const StageSpec& spec) {
        const auto marker = layout_.marker(spec.name);
        const auto inputs = digest_map(spec.inputs, layout_.dir);
        if (options_.resume && fs::exists(marker)) {
            try {
                const auto m = io::read_json(marker);
                if (m.at("settings") == spec.settings && m.at("inputs") == inputs &&
                    m.at("outputs") == digest_map(spec.outputs, layout_.dir)) {
                    log("skip " + spec.name + " (up to date)");
                    return m.at("report");
                }
            } catch (const std::exception&) {
                // An unreadable marker just means the stage runs again.
            }
        }
        log("run " + spec.name);
        auto report = spec.body();
        io::write_json(layout_.report(spec.name), report);
        io::write_json(marker, {{"stage", spec.name},
                                {"settings", spec.settings},
                                {"inputs", inputs},
                                {"outputs", digest_map(spec.outputs, layout_.dir)},
                                {"report", report}});
        return report;
    }

    const RunLayout& layout() const { return layout_; }

  private:
    void log(const std::string& msg) const {
        if (options_.log) options_.log(msg);
    }

    RunLayout layout_;
    const RunOptions& options_;
};

} // namespace

json run_pipeline(const RunConfig& config, const fs::path& run_dir, const RunOptions& options) {
    RunLock lock(run_dir);
    const auto started = config.now_ms();
    fs::create_directories(run_dir / "reports");
    fs::create_directories(run_dir / "stages");
    Orchestrator orch(run_dir, options);
    const auto& L = orch.layout();
    Resources res(config, L.cache(), options.backends);
    const auto cfg = config.to_json();
    auto pick = [&](std::initializer_list<const char*> keys) {
        json j = json::object();
        for (const auto* k : keys) j[k] = cfg.at(k);
        return j;
    };
    const auto backends = res.backend_identities();
    auto resource_settings = res.resource_digests(config.languages);

    const auto corpus = config.resolve(config.corpus);
    json reports = json::object();
    reports["ingest"] = orch.run({"ingest",
                                  {corpus},
                                  {L.sentences()},
                                  {{"config", pick({"corpus_format", "max_len"})},
                                   {"abbreviations", resource_settings["abbreviations"]}},
                                  [&] { return stage_ingest(config, res, corpus, config.corpus_format, L.sentences()); }});
    reports["filter"] = orch.run({"filter",
                                  {L.sentences()},
                                  {L.accepted(), L.rejects()},
                                  {{"gendered_lists", resource_settings["gendered_lists"]},
                                   {"names", resource_settings["names"]},
                                   {"ner", backends["ner"]},
                                   {"pos", backends["pos"]}},
                                  [&] { return stage_filter(config, res, L.sentences(), L.accepted(), L.rejects()); }});
    reports["perturb"] = orch.run({"perturb",
                                   {L.accepted()},
                                   {L.pairs(), L.perturb_trace()},
                                   {{"config", pick({"scan_cap", "accept_cap", "subword_policy"})},
                                    {"gendered_lists", resource_settings["gendered_lists"]},
                                    {"names", resource_settings["names"]},
                                    {"backends", backends}},
                                   [&] { return stage_perturb(config, res, L.accepted(), L.pairs(), L.perturb_trace()); }});
    if (reports["perturb"].value("failed", 0) > 0)
        throw StageError("perturb", reports["perturb"]["failures"][0].value("sentence_id", ""),
                         "fill_mask failed for " + std::to_string(reports["perturb"]["failed"].get<std::size_t>()) +
                             " sentence(s); see reports/perturb.json");

    json per_lang = json::object();
    for (auto l : config.languages) {
        const std::string code(language_code(l));
        json lr = json::object();
        lr["translate"] = orch.run({"translate." + code,
                                    {L.pairs()},
                                    {L.translations(l)},
                                    {{"translate", backends["translate"]}},
                                    [&] { return stage_translate(config, res, l, L.pairs(), L.translations(l)); }});
        lr["align_train"] = orch.run({"align_train." + code,
                                      {L.translations(l)},
                                      {L.model(l)},
                                      {{"config", pick({"lambda", "p0", "iterations"})}},
                                      [&] { return stage_align_train(config, l, L.translations(l), L.model(l)); }});
        lr["align_decode"] = orch.run(
            {"align_decode." + code,
             {L.model(l), L.translations(l)},
             {L.alignments(l)},
             json::object(),
             [&] { return stage_align_decode(config, l, L.model(l), L.translations(l), L.alignments(l)); }});
        lr["tag"] = orch.run({"tag." + code,
                              {L.alignments(l)},
                              {L.tagged(l)},
                              {{"gender", resource_settings["gender"][code]}},
                              [&] { return stage_tag(config, res, l, L.alignments(l), L.tagged(l)); }});
        lr["detect"] = orch.run({"detect." + code,
                                 {L.tagged(l)},
                                 {L.detect(l), L.outcomes(l)},
                                 json::object(),
                                 [&] { return stage_detect(l, L.tagged(l), L.detect(l), L.outcomes(l)); }});
        lr["sample"] = orch.run({"sample." + code,
                                 {L.detect(l)},
                                 {L.negatives(l)},
                                 {{"config", pick({"seed", "negatives"})}},
                                 [&] { return stage_sample(config, l, L.detect(l), L.negatives(l)); }});
        per_lang[code] = lr;
    }

    std::vector<fs::path> stats_inputs, record_inputs{L.pairs()};
    for (auto l : config.languages) {
        stats_inputs.push_back(L.outcomes(l));
        record_inputs.insert(record_inputs.end(), {L.tagged(l), L.detect(l), L.negatives(l)});
    }
    reports["stats"] = orch.run({"stats", stats_inputs, {L.stats()}, {{"config", pick({"languages"})}},
                                 [&] { return stage_stats(config.languages, L, L.stats()); }});
    reports["records"] = orch.run({"records", record_inputs, {L.records()}, {{"config", pick({"languages"})}},
                                   [&] { return stage_records(config.languages, L, L.records()); }});

    // Manifest.
    const auto& ing = reports["ingest"];
    const auto& fil = reports["filter"];
    json lang_counts = json::object();
    json warnings = json::array();
    for (auto& [code, lr] : per_lang.items()) {
        const auto& by = lr["detect"]["by_label"];
        lang_counts[code] = {{"translated_pairs", lr["detect"]["pairs"]},
                             {"translation_requests", lr["translate"]["requests"]},
                             {"projected_sides", lr["align_decode"]["projected"]},
                             {"at_risk", by["AT_RISK"]},
                             {"not_at_risk", by["NOT_AT_RISK"]},
                             {"indeterminate", by["INDETERMINATE"]},
                             {"indeterminate_by_reason", lr["detect"]["indeterminate_by_reason"]},
                             {"negatives_drawn", lr["sample"]["drawn"]},
                             {"alignment_log_likelihood", lr["align_train"]["log_likelihood"]}};
        if (!lr["sample"]["warning"].is_null()) warnings.push_back(code + ": " + lr["sample"]["warning"].get<std::string>());
    }

    std::vector<fs::path> artifacts{L.sentences(), L.accepted(), L.rejects(), L.pairs(), L.perturb_trace()};
    for (auto l : config.languages)
        artifacts.insert(artifacts.end(), {L.translations(l), L.model(l), L.alignments(l), L.tagged(l), L.detect(l),
                                           L.outcomes(l), L.negatives(l)});
    artifacts.insert(artifacts.end(), {L.stats(), L.records()});

    // Worker count does not affect any artifact, so it stays out of the
    // manifest and runs at different thread counts compare equal.
    auto recorded = cfg;
    recorded.erase("threads");
    json manifest{
        {"format", "gendermine-run/1"},
        {"config", recorded},
        {"seed", config.seed},
        {"perturbation",
         {{"scan_cap", config.perturb.scan_cap},
          {"accept_cap", config.perturb.accept_cap},
          {"subword_policy", subword_policy_name(config.perturb.subword)}}},
        {"alignment",
         {{"tension", config.alignment.tension},
          {"null_prob", config.alignment.null_prob},
          {"iterations", config.alignment.iterations},
          {"initialization", "uniform"},
          {"smoothing_floor", align::AlignmentModel::kSmoothingFloor},
          {"direction", "target_given_source"}}},
        {"backends", backends},
        {"resources", resource_settings},
        {"counts",
         {{"documents", ing["documents"]},
          {"undecodable_documents", ing["undecodable"]},
          {"sentences_seen", ing["sentences_seen"]},
          {"sentences_too_long", ing["too_long"]},
          {"sentences_duplicate", ing["duplicates"]},
          {"sentences_ingested", ing["emitted"]},
          {"sentences_accepted", fil["accepted"]},
          {"sentences_rejected", fil["rejected_by_reason"]},
          {"pairs", reports["perturb"]["pairs"]},
          {"languages", lang_counts}}},
        {"warnings", warnings},
        {"artifacts", digest_map(artifacts, run_dir)},
        {"started_at_ms", started},
        {"finished_at_ms", config.now_ms()},
    };
    io::write_json(L.manifest(), manifest);
    return manifest;
}

ExportResult export_run(const RunConfig& config, const fs::path& run_dir, Language l, const fs::path& out_dir) {
    const RunLayout layout{run_dir};
    if (!fs::exists(layout.records())) throw ConfigError("no records.jsonl in " + run_dir.string() + "; run the pipeline first");
    review::ReviewOptions opts;
    opts.quota = config.positives_quota;
    opts.effective_annotator = config.effective_annotator;
    review::ReviewStore store(load_records(layout.records()), layout.decisions(), opts);
    const auto records = store.annotated_records();
    return export_dataset(records, l, Quotas{config.positives_quota, config.negatives}, out_dir);
}

std::vector<fs::path> artifact_files(const fs::path& run_dir) {
    std::vector<fs::path> out;
    if (!fs::exists(run_dir)) return out;
    for (auto it = fs::recursive_directory_iterator(run_dir); it != fs::recursive_directory_iterator(); ++it) {
        const auto rel = it->path().lexically_relative(run_dir);
        const auto top = rel.begin()->string();
        if (it->is_directory() && (top == "cache" || top == "review" || top == "export")) {
            it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file() && top != ".lock") out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace gendermine::pipeline
