#include "gendermine/gateway.hpp"

#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/text.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <thread>

namespace gendermine {

std::string_view language_code(Language l) {
    switch (l) {
    case Language::Fr: return "fr";
    case Language::De: return "de";
    case Language::Es: return "es";
    case Language::Ru: return "ru";
    }
    return "?";
}

Language parse_language(std::string_view code) {
    for (auto l : kLanguages)
        if (language_code(l) == code) return l;
    throw ConfigError("unsupported language: " + std::string(code));
}

std::string_view capability_name(Capability c) {
    switch (c) {
    case Capability::Ner: return "ner";
    case Capability::Pos: return "pos";
    case Capability::FillMask: return "fill_mask";
    case Capability::Translate: return "translate";
    }
    return "?";
}

std::string_view capability_env_name(Capability c) {
    switch (c) {
    case Capability::Ner: return "NER";
    case Capability::Pos: return "POS";
    case Capability::FillMask: return "FILL_MASK";
    case Capability::Translate: return "TRANSLATE";
    }
    return "?";
}

Capability parse_capability(std::string_view name) {
    for (auto c : kCapabilities)
        if (capability_name(c) == name) return c;
    throw ConfigError("unknown capability: " + std::string(name));
}

namespace {

constexpr std::array<std::string_view, 17> kUposNames{"ADJ",  "ADP", "ADV",  "AUX",   "CCONJ", "DET",
                                                      "INTJ", "NOUN", "NUM", "PART", "PRON",  "PROPN",
                                                      "PUNCT", "SCONJ", "SYM", "VERB", "X"};

std::size_t index_of(Capability c) { return static_cast<std::size_t>(c); }

struct Malformed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

[[noreturn]] void malformed(const std::string& what) { throw Malformed(what); }

} // namespace

std::string_view upos_name(Upos tag) { return kUposNames[static_cast<std::size_t>(tag)]; }

std::optional<Upos> parse_upos(std::string_view name) {
    for (std::size_t i = 0; i < kUposNames.size(); ++i)
        if (kUposNames[i] == name) return static_cast<Upos>(i);
    return std::nullopt;
}

std::string request_digest(Capability capability, const json& request) {
    std::string material(capability_name(capability));
    material.push_back('\n');
    material += request.dump();
    return text::sha256_hex(material);
}

json tokens_json(std::span<const Token> tokens) {
    json arr = json::array();
    for (const auto& t : tokens) arr.push_back(t.surface);
    return arr;
}

// --- HTTP ---------------------------------------------------------------

HttpBackend::HttpBackend(BackendEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    if (endpoint_.timeout.count() <= 0) throw ConfigError("backend timeout must be positive");
    if (endpoint_.max_retries < 0) throw ConfigError("max_retries must be non-negative");
    const auto& url = endpoint_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("backend URL needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    host_ = url.substr(0, path_start);
    if (path_start != std::string::npos) path_prefix_ = url.substr(path_start);
    while (path_prefix_.ends_with('/')) path_prefix_.pop_back();
}

std::string HttpBackend::call(Capability capability, const json& request, const std::string& request_id) {
    httplib::Client client(host_);
    const auto secs = endpoint_.timeout.count() / 1000;
    const auto usecs = (endpoint_.timeout.count() % 1000) * 1000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);
    const auto path = path_prefix_ + "/" + std::string(capability_name(capability));
    auto res = client.Post(path, request.dump(), "application/json");
    if (!res) throw BackendError(request_id, "transport failure: " + httplib::to_string(res.error()), true);
    if (res->status == 200) return res->body;
    std::string message = "HTTP " + std::to_string(res->status);
    try {
        const auto err = json::parse(res->body);
        message += " " + err.value("code", std::string()) + ": " + err.value("message", std::string());
    } catch (const json::exception&) {
    }
    throw BackendError(request_id, message, res->status >= 500 || res->status == 429);
}

// --- fixtures -----------------------------------------------------------

FixtureBackend::FixtureBackend(fs::path dir, std::string identity)
    : dir_(std::move(dir)), identity_(identity.empty() ? "fixture://" + dir_.string() : std::move(identity)) {
    if (!fs::is_directory(dir_)) throw ConfigError("fixture directory not found: " + dir_.string());
}

std::string FixtureBackend::call(Capability capability, const json&, const std::string& request_id) {
    const auto path = dir_ / (request_id + ".json");
    if (!fs::exists(path)) {
        ++missing_;
        throw BackendError(request_id, "no fixture for " + std::string(capability_name(capability)) + " request");
    }
    ++served_;
    return io::read_file(path);
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, fs::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
    fs::create_directories(dir_);
}

std::string RecordingBackend::call(Capability capability, const json& request, const std::string& request_id) {
    auto body = inner_->call(capability, request, request_id);
    io::write_file_atomic(dir_ / (request_id + ".json"), body);
    return body;
}

std::shared_ptr<Backend> make_backend(const BackendEndpoint& endpoint) {
    constexpr std::string_view kFixture = "fixture://";
    if (endpoint.base_url.starts_with(kFixture))
        return std::make_shared<FixtureBackend>(endpoint.base_url.substr(kFixture.size()), endpoint.base_url);
    return std::make_shared<HttpBackend>(endpoint);
}

std::string resolve_backend_url(Capability capability, std::string configured) {
    const auto var = "GS_BACKEND_" + std::string(capability_env_name(capability)) + "_URL";
    if (const char* v = std::getenv(var.c_str()); v && *v) return v;
    return configured;
}

std::chrono::milliseconds RetryPolicy::delay_before_retry(int retry) const {
    const double ms = static_cast<double>(initial_delay.count()) * std::pow(factor, retry - 1);
    return std::chrono::milliseconds(static_cast<long long>(ms));
}

// --- cache --------------------------------------------------------------

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

fs::path ResponseCache::entry_path(Capability capability, const std::string& digest) const {
    return dir_ / std::string(capability_name(capability)) / (digest + ".json");
}

std::optional<std::string> ResponseCache::get(Capability capability, const std::string& digest) const {
    const auto path = entry_path(capability, digest);
    if (!fs::exists(path)) return std::nullopt;
    auto content = io::read_file(path);
    const auto nl = content.find('\n');
    constexpr std::string_view kPrefix = "sha256:";
    if (nl == std::string::npos || !content.starts_with(kPrefix)) return std::nullopt;
    auto body = content.substr(nl + 1);
    if (content.substr(kPrefix.size(), nl - kPrefix.size()) != text::sha256_hex(body)) return std::nullopt;
    return body;
}

void ResponseCache::put(Capability capability, const std::string& digest, std::string_view body) const {
    std::string content = "sha256:" + text::sha256_hex(body) + "\n";
    content += body;
    io::write_file_atomic(entry_path(capability, digest), content);
}

// --- gateway ------------------------------------------------------------

Gateway::Gateway(GatewayOptions options) : options_(std::move(options)) {
    if (options_.in_flight == 0) throw ConfigError("in-flight bound must be at least 1");
    if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
    for (auto& r : routes_)
        r.slots = std::make_unique<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(options_.in_flight));
}

void Gateway::set_backend(Capability capability, std::shared_ptr<Backend> backend, int max_retries) {
    if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
    auto& route = routes_[index_of(capability)];
    route.backend = std::move(backend);
    route.retry.max_retries = max_retries;
    route.retry.sleep = options_.sleep;
}

std::string Gateway::backend_identity(Capability capability) const {
    const auto& b = routes_[index_of(capability)].backend;
    return b ? b->identity() : std::string();
}

GatewayStats Gateway::stats() const {
    return {requests_.load(), backend_calls_.load(), cache_hits_.load(), retries_.load(), failures_.load()};
}

json Gateway::request(Capability capability, const json& body, const std::function<void(const json&)>& validate) {
    auto& route = routes_[index_of(capability)];
    const auto id = request_digest(capability, body);
    if (!route.backend) throw ConfigError("no backend configured for " + std::string(capability_name(capability)));
    ++requests_;

    auto parse = [&](const std::string& raw) {
        json parsed;
        try {
            parsed = json::parse(raw);
            validate(parsed);
        } catch (const json::exception& e) {
            throw BackendError(id, "malformed " + std::string(capability_name(capability)) + " response: " + e.what());
        } catch (const Malformed& e) {
            throw BackendError(id, "malformed " + std::string(capability_name(capability)) + " response: " + e.what());
        }
        return parsed;
    };

    if (cache_) {
        if (auto hit = cache_->get(capability, id)) {
            ++cache_hits_;
            return parse(*hit);
        }
    }

    std::string raw;
    {
        route.slots->acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{*route.slots};
        for (int attempt = 0;; ++attempt) {
            try {
                ++backend_calls_;
                raw = route.backend->call(capability, body, id);
                break;
            } catch (const BackendError& e) {
                if (!e.retryable() || attempt >= route.retry.max_retries) {
                    ++failures_;
                    throw BackendError(id, std::string(capability_name(capability)) + " failed after " +
                                               std::to_string(attempt + 1) + " attempt(s): " + e.what());
                }
                ++retries_;
                const auto delay = route.retry.delay_before_retry(attempt + 1);
                if (route.retry.sleep)
                    route.retry.sleep(delay);
                else
                    std::this_thread::sleep_for(delay);
            }
        }
    }

    auto parsed = parse(raw);
    if (cache_) cache_->put(capability, id, raw);
    return parsed;
}


std::vector<NerSpan> Gateway::ner_tag(std::span<const Token> tokens) {
    if (tokens.empty()) throw PreconditionError("ner_tag: empty request");
    std::vector<NerSpan> spans;
    request(Capability::Ner, {{"tokens", tokens_json(tokens)}}, [&](const json& r) {
        std::vector<bool> seen(tokens.size(), false);
        for (const auto& s : r.at("spans")) {
            const auto idx = s.at("token_index").get<std::size_t>();
            const auto label = s.at("label").get<std::string>();
            if (idx >= tokens.size()) malformed("span index out of range");
            if (seen[idx]) malformed("more than one span for a token");
            seen[idx] = true;
            if (label != "PERSON" && label != "OTHER") malformed("unknown NER label " + label);
            spans.push_back({idx, label == "PERSON" ? NerLabel::Person : NerLabel::Other});
        }
    });
    return spans;
}

std::vector<Upos> Gateway::pos_tag(std::span<const Token> tokens) {
    if (tokens.empty()) throw PreconditionError("pos_tag: empty request");
    std::vector<Upos> tags;
    request(Capability::Pos, {{"tokens", tokens_json(tokens)}}, [&](const json& r) {
        const auto& arr = r.at("tags");
        if (arr.size() != tokens.size()) malformed("tag count differs from token count");
        for (const auto& t : arr) {
            auto tag = parse_upos(t.get<std::string>());
            if (!tag) malformed("unknown POS tag " + t.get<std::string>());
            tags.push_back(*tag);
        }
    });
    return tags;
}

std::vector<MaskCandidate> Gateway::fill_mask(std::span<const Token> tokens, std::size_t mask_index,
                                              std::size_t top_k) {
    if (top_k < 1) throw PreconditionError("fill_mask: top_k must be at least 1");
    if (mask_index >= tokens.size()) throw PreconditionError("fill_mask: mask_index out of range");
    std::vector<MaskCandidate> out;
    json body{{"tokens", tokens_json(tokens)}, {"mask_index", mask_index}, {"top_k", top_k}};
    request(Capability::FillMask, body, [&](const json& r) {
        const auto& arr = r.at("candidates");
        if (arr.size() > top_k) malformed("more than top_k candidates");
        for (const auto& c : arr) {
            MaskCandidate m{c.at("token").get<std::string>(), c.at("score").get<double>(), c.at("rank").get<int>()};
            if (m.token.empty()) malformed("empty candidate token");
            if (!(m.score > 0.0 && m.score <= 1.0)) malformed("candidate score outside (0,1]");
            if (!out.empty() && (m.rank <= out.back().rank || m.score > out.back().score))
                malformed("candidates not in rank order");
            if (m.rank < 1) malformed("rank must be 1-based");
            out.push_back(std::move(m));
        }
    });
    return out;
}

TranslationText Gateway::translate(std::string_view source, Language target) {
    if (text::trim(source).empty()) throw PreconditionError("translate: empty text");
    TranslationText out{target, {}};
    json body{{"text", std::string(source)}, {"target_language", std::string(language_code(target))}};
    request(Capability::Translate, body, [&](const json& r) {
        if (r.at("target_language").get<std::string>() != language_code(target)) malformed("wrong target language");
        out.text = r.at("text").get<std::string>();
        if (text::trim(out.text).empty()) malformed("empty translation");
    });
    return out;
}

} // namespace gendermine
