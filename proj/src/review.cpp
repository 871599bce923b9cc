#include "gendermine/review.hpp"

#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/text.hpp"

#include <httplib.h>

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <thread>

namespace gendermine::review {

namespace {

constexpr std::array<std::string_view, 3> kVerdicts{"ACCEPTED", "REJECTED_FIXED_GENDER", "REJECTED_OTHER"};

std::size_t slot(AnnotationState s) { return static_cast<std::size_t>(s); }

std::int64_t system_now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

} // namespace

std::string_view verdict_name(Verdict v) { return kVerdicts[static_cast<std::size_t>(v)]; }

std::optional<Verdict> parse_verdict(std::string_view s) {
    for (std::size_t i = 0; i < kVerdicts.size(); ++i)
        if (kVerdicts[i] == s) return static_cast<Verdict>(i);
    return std::nullopt;
}

AnnotationState state_for(Verdict v) {
    switch (v) {
    case Verdict::Accepted: return AnnotationState::Accepted;
    case Verdict::RejectedFixedGender: return AnnotationState::RejectedFixedGender;
    case Verdict::RejectedOther: return AnnotationState::RejectedOther;
    }
    return AnnotationState::Pending;
}

json to_json(const AnnotationDecision& d) {
    return {{"pair_id", d.pair_id},
            {"lang", language_code(d.language)},
            {"verdict", verdict_name(d.verdict)},
            {"annotator_id", d.annotator_id},
            {"timestamp_ms", d.timestamp_ms}};
}

AnnotationDecision decision_from_json(const json& j) {
    auto verdict = parse_verdict(j.at("verdict").get<std::string>());
    if (!verdict) throw BadRequestError("verdict outside ACCEPTED/REJECTED_FIXED_GENDER/REJECTED_OTHER");
    return {j.at("pair_id").get<std::string>(), parse_language(j.at("lang").get<std::string>()), *verdict,
            j.at("annotator_id").get<std::string>(), j.value("timestamp_ms", std::int64_t{0})};
}

// --- log ----------------------------------------------------------------

DecisionLog::DecisionLog(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
}

void DecisionLog::append(const AnnotationDecision& d) {
    const auto line = to_json(d).dump() + "\n";
    const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw std::runtime_error("cannot open decision log " + path_.string() + ": " + std::strerror(errno));
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(fd, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            throw std::runtime_error("decision log write failed: " + std::string(std::strerror(err)));
        }
        written += static_cast<std::size_t>(n);
    }
    const int rc = ::fsync(fd);
    ::close(fd);
    if (rc != 0) throw std::runtime_error("decision log fsync failed: " + std::string(std::strerror(errno)));
}

std::vector<AnnotationDecision> DecisionLog::replay() const {
    std::vector<AnnotationDecision> out;
    if (!fs::exists(path_)) return out;
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(decision_from_json(json::parse(line)));
        } catch (const std::exception&) {
            if (in.peek() == std::char_traits<char>::eof()) break;
            throw std::runtime_error("corrupt decision log line in " + path_.string());
        }
    }
    return out;
}

// --- state --------------------------------------------------------------

std::optional<double> Progress::selection_rate() const {
    if (reviewed() == 0) return std::nullopt;
    return static_cast<double>(accepted) / static_cast<double>(reviewed());
}

json Progress::to_json() const {
    const auto rate = selection_rate();
    return {{"language", language_code(language)},
            {"accepted", accepted},
            {"rejected_fixed", rejected_fixed},
            {"rejected_other", rejected_other},
            {"pending", pending},
            {"at_risk_total", at_risk_total},
            {"reviewed", reviewed()},
            {"quota", quota},
            {"quota_met", quota_met()},
            {"selection_rate", rate ? json(*rate) : json(nullptr)}};
}

ReviewState::ReviewState(const std::vector<ExampleRecord>& records, std::optional<std::string> effective_annotator)
    : effective_(std::move(effective_annotator)) {
    for (const auto& r : records) {
        pairs_.insert(r.pair_id);
        for (const auto& [l, v] : r.languages) {
            languages_.insert(l);
            counts_.try_emplace(l, std::array<std::size_t, 4>{});
            if (v.label.value != Risk::AtRisk) continue;
            if (entries_.try_emplace({r.pair_id, l}).second) ++counts_[l][slot(AnnotationState::Pending)];
        }
    }
}

bool ReviewState::has_language(Language l) const { return languages_.contains(l); }
bool ReviewState::knows_pair(const std::string& pair_id) const { return pairs_.contains(pair_id); }

bool ReviewState::is_at_risk(const std::string& pair_id, Language l) const {
    return entries_.contains({pair_id, l});
}

bool ReviewState::apply(const AnnotationDecision& d) {
    auto it = entries_.find({d.pair_id, d.language});
    if (it == entries_.end())
        throw ConflictError("pair " + d.pair_id + " is not at risk in " + std::string(language_code(d.language)));
    if (effective_ && d.annotator_id != *effective_) return false;
    auto& entry = it->second;
    auto& counts = counts_[d.language];
    --counts[slot(entry.state)];
    entry.state = state_for(d.verdict);
    entry.accepted_at = d.verdict == Verdict::Accepted ? std::optional<std::int64_t>(d.timestamp_ms) : std::nullopt;
    ++counts[slot(entry.state)];
    return true;
}

AnnotationState ReviewState::state(const std::string& pair_id, Language l) const {
    auto it = entries_.find({pair_id, l});
    return it == entries_.end() ? AnnotationState::Pending : it->second.state;
}

std::optional<std::int64_t> ReviewState::accepted_at(const std::string& pair_id, Language l) const {
    auto it = entries_.find({pair_id, l});
    return it == entries_.end() ? std::nullopt : it->second.accepted_at;
}

Progress ReviewState::progress(Language l, std::size_t quota) const {
    Progress p;
    p.language = l;
    p.quota = quota;
    if (auto it = counts_.find(l); it != counts_.end()) {
        const auto& c = it->second;
        p.pending = c[slot(AnnotationState::Pending)];
        p.accepted = c[slot(AnnotationState::Accepted)];
        p.rejected_fixed = c[slot(AnnotationState::RejectedFixedGender)];
        p.rejected_other = c[slot(AnnotationState::RejectedOther)];
    }
    p.at_risk_total = p.pending + p.accepted + p.rejected_fixed + p.rejected_other;
    return p;
}

std::vector<std::string> ReviewState::pending(Language l) const {
    std::vector<std::string> out;
    for (const auto& [key, entry] : entries_)
        if (key.second == l && entry.state == AnnotationState::Pending) out.push_back(key.first);
    return out; // map order is pair_id order
}

Progress replay_progress(const std::vector<ExampleRecord>& records, const std::vector<AnnotationDecision>& log,
                         Language language, std::size_t quota, std::optional<std::string> effective_annotator) {
    ReviewState state(records, std::move(effective_annotator));
    for (const auto& d : log) state.apply(d);
    return state.progress(language, quota);
}

// --- store --------------------------------------------------------------

json QueuePage::to_json() const {
    json items_json = json::array();
    for (const auto& r : items) items_json.push_back(queue_item_json(r, language));
    return {{"language", language_code(language)},
            {"page", page},
            {"page_size", page_size},
            {"total", total},
            {"items", items_json}};
}

json queue_item_json(const ExampleRecord& r, Language l) {
    const auto* v = r.view(l);
    auto side = [&](const std::vector<std::string>& source, const TranslationOutcome& o, const std::string& text) {
        json j{{"source_tokens", source},
               {"source_focus_index", r.focus_index},
               {"source_focus", source.at(r.focus_index)},
               {"translation", text},
               {"translation_tokens", o.translation_tokens},
               {"target_index", nullptr},
               {"target_focus", nullptr},
               {"gender", nullptr}};
        if (o.projection.target_index) {
            j["target_index"] = *o.projection.target_index;
            j["target_focus"] = o.translation_tokens.at(*o.projection.target_index);
        }
        if (o.gender) j["gender"] = gender_name(o.gender->value);
        return j;
    };
    return {{"pair_id", r.pair_id},
            {"language", language_code(l)},
            {"label", risk_name(v->label.value)},
            {"original", side(r.source_original, v->original, v->original_text)},
            {"substituted", side(r.source_substituted, v->substituted, v->substituted_text)}};
}

ReviewStore::ReviewStore(std::vector<ExampleRecord> records, fs::path log_path, ReviewOptions options)
    : records_(std::move(records)),
      options_(std::move(options)),
      log_(std::move(log_path)),
      state_(records_, options_.effective_annotator) {
    for (std::size_t i = 0; i < records_.size(); ++i) by_id_[records_[i].pair_id] = i;
    if (!options_.clock) options_.clock = system_now_ms;
    for (const auto& d : log_.replay()) {
        if (!state_.is_at_risk(d.pair_id, d.language)) continue;
        state_.apply(d);
        ++replayed_;
    }
}

void ReviewStore::require_language(Language l) const {
    if (!state_.has_language(l)) throw NotFoundError("language not in this run: " + std::string(language_code(l)));
}

QueuePage ReviewStore::list_pending(Language l, std::size_t page, std::size_t page_size) const {
    std::shared_lock lock(mutex_);
    require_language(l);
    if (page == 0 || page_size == 0) throw BadRequestError("page and page_size must be at least 1");
    const auto ids = state_.pending(l);
    QueuePage out{l, page, page_size, ids.size(), {}};
    const auto begin = (page - 1) * page_size;
    for (auto k = begin; k < ids.size() && k < begin + page_size; ++k) out.items.push_back(records_[by_id_.at(ids[k])]);
    return out;
}

Progress ReviewStore::record_decision(AnnotationDecision d) {
    std::unique_lock lock(mutex_);
    require_language(d.language);
    if (!state_.knows_pair(d.pair_id)) throw NotFoundError("unknown pair_id: " + d.pair_id);
    if (!state_.is_at_risk(d.pair_id, d.language))
        throw ConflictError("pair " + d.pair_id + " is not at risk in " + std::string(language_code(d.language)));
    if (d.annotator_id.empty()) throw BadRequestError("annotator_id is required");
    if (d.timestamp_ms == 0) d.timestamp_ms = options_.clock();
    log_.append(d);
    state_.apply(d);
    return state_.progress(d.language, options_.quota);
}

Progress ReviewStore::progress(Language l) const {
    std::shared_lock lock(mutex_);
    require_language(l);
    return state_.progress(l, options_.quota);
}

std::vector<ExampleRecord> ReviewStore::annotated_records() const {
    std::shared_lock lock(mutex_);
    auto out = records_;
    for (auto& r : out)
        for (auto& [l, v] : r.languages) {
            v.annotation = state_.state(r.pair_id, l);
            v.accepted_at_ms = state_.accepted_at(r.pair_id, l);
        }
    return out;
}

std::vector<Language> ReviewStore::languages() const {
    std::vector<Language> out;
    for (auto l : kLanguages)
        if (state_.has_language(l)) out.push_back(l);
    return out;
}

// --- HTTP ---------------------------------------------------------------

struct ReviewServer::Impl {
    ReviewStore& store;
    Exporter exporter;
    httplib::Server server;
    std::thread thread;

    Impl(ReviewStore& s, Exporter e) : store(s), exporter(std::move(e)) {}
};

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, status, {{"code", code}, {"message", message}});
}

Language language_param(const httplib::Request& req) {
    if (!req.has_param("lang")) throw BadRequestError("missing lang parameter");
    try {
        return parse_language(req.get_param_value("lang"));
    } catch (const ConfigError& e) {
        throw NotFoundError(e.what());
    }
}

std::size_t size_param(const httplib::Request& req, const char* name, std::size_t fallback) {
    if (!req.has_param(name)) return fallback;
    const auto raw = req.get_param_value(name);
    try {
        std::size_t used = 0;
        const auto v = std::stoull(raw, &used);
        if (used != raw.size()) throw std::invalid_argument(raw);
        return v;
    } catch (const std::logic_error&) {
        throw BadRequestError(std::string(name) + " must be a non-negative integer");
    }
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const NotFoundError& e) {
            send_error(res, 404, "not_found", e.what());
        } catch (const BadRequestError& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const ConflictError& e) {
            send_error(res, 409, "conflict", e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_request", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

constexpr std::string_view kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>review</title></head>"
    "<body><p>Review UI assets are not installed. The JSON API is served under /api/.</p></body></html>";

} // namespace

ReviewServer::ReviewServer(ReviewStore& store, Exporter exporter, std::optional<fs::path> ui_dir)
    : impl_(std::make_unique<Impl>(store, std::move(exporter))) {
    auto& srv = impl_->server;
    auto* impl = impl_.get();

    srv.Get("/api/queue", guarded([impl](const httplib::Request& req, httplib::Response& res) {
                const auto lang = language_param(req);
                const auto page = impl->store.list_pending(lang, size_param(req, "page", 1),
                                                           size_param(req, "page_size", 20));
                send_json(res, 200, page.to_json());
            }));
    srv.Post("/api/decision", guarded([impl](const httplib::Request& req, httplib::Response& res) {
                 const auto body = json::parse(req.body);
                 for (auto key : {"pair_id", "lang", "verdict", "annotator_id"})
                     if (!body.contains(key) || !body[key].is_string())
                         throw BadRequestError(std::string("missing string field ") + key);
                 AnnotationDecision d;
                 d.pair_id = body["pair_id"].get<std::string>();
                 try {
                     d.language = parse_language(body["lang"].get<std::string>());
                 } catch (const ConfigError& e) {
                     throw NotFoundError(e.what());
                 }
                 auto verdict = parse_verdict(body["verdict"].get<std::string>());
                 if (!verdict) throw BadRequestError("verdict outside ACCEPTED/REJECTED_FIXED_GENDER/REJECTED_OTHER");
                 d.verdict = *verdict;
                 d.annotator_id = body["annotator_id"].get<std::string>();
                 send_json(res, 200, impl->store.record_decision(std::move(d)).to_json());
             }));
    srv.Get("/api/progress", guarded([impl](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, impl->store.progress(language_param(req)).to_json());
            }));
    srv.Get("/api/export", guarded([impl](const httplib::Request& req, httplib::Response& res) {
                const auto lang = language_param(req);
                impl->store.progress(lang);
                if (!impl->exporter) {
                    send_error(res, 501, "not_configured", "export is not configured for this server");
                    return;
                }
                send_json(res, 200, impl->exporter(lang));
            }));

    if (ui_dir && fs::is_directory(*ui_dir)) {
        srv.set_mount_point("/", ui_dir->string());
    } else {
        srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(std::string(kPlaceholderPage), "text/html");
        });
    }
}

ReviewServer::~ReviewServer() { stop(); }

int ReviewServer::start(const std::string& host, int port) {
    auto& srv = impl_->server;
    int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw std::runtime_error("cannot bind review server to " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([&srv] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    return bound;
}

bool ReviewServer::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

void ReviewServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace gendermine::review
