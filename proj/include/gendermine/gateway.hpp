#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gendermine/corpus.hpp"
#include "gendermine/language.hpp"

// Client side of the model wire protocol: person NER, POS tagging, masked-LM
// fill and translation. Requests are JSON bodies POSTed to /ner, /pos,
// /fill_mask and /translate; errors come back as {code, message}.
namespace gendermine {

namespace fs = std::filesystem;
using nlohmann::json;

enum class Capability { Ner, Pos, FillMask, Translate };
inline constexpr std::array<Capability, 4> kCapabilities{Capability::Ner, Capability::Pos, Capability::FillMask,
                                                         Capability::Translate};

std::string_view capability_name(Capability c);     // "ner", "pos", "fill_mask", "translate"
std::string_view capability_env_name(Capability c); // "NER", "POS", "FILL_MASK", "TRANSLATE"
Capability parse_capability(std::string_view name);

enum class NerLabel { Person, Other };

struct NerSpan {
    std::size_t token_index = 0;
    NerLabel label = NerLabel::Other;

    bool operator==(const NerSpan&) const = default;
};

// Universal POS tag set.
enum class Upos { ADJ, ADP, ADV, AUX, CCONJ, DET, INTJ, NOUN, NUM, PART, PRON, PROPN, PUNCT, SCONJ, SYM, VERB, X };
std::string_view upos_name(Upos tag);
std::optional<Upos> parse_upos(std::string_view name);

struct MaskCandidate {
    std::string token;
    double score = 0.0;
    int rank = 0;
};

struct TranslationText {
    Language target_language = Language::Fr;
    std::string text;
};

struct BackendEndpoint {
    Capability capability = Capability::Ner;
    std::string base_url;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 4;
};

// Digest of (capability, canonical request body); the fixture file name and cache key.
std::string request_digest(Capability capability, const json& request);

// A transport that turns a request body into a raw response body. Transport
// failures throw BackendError with retryable() set; protocol errors throw a
// non-retryable BackendError.
class Backend {
  public:
    virtual ~Backend() = default;
    virtual std::string call(Capability capability, const json& request, const std::string& request_id) = 0;
    virtual std::string identity() const = 0;
};

class HttpBackend final : public Backend {
  public:
    explicit HttpBackend(BackendEndpoint endpoint);
    std::string call(Capability capability, const json& request, const std::string& request_id) override;
    std::string identity() const override { return endpoint_.base_url; }

  private:
    BackendEndpoint endpoint_;
    std::string host_;
    std::string path_prefix_;
};

// Replays `<dir>/<request digest>.json`. A missing file is a hard error, which
// is how a fixture run proves it issued no non-fixture requests.
class FixtureBackend final : public Backend {
  public:
    explicit FixtureBackend(fs::path dir, std::string identity = {});
    std::string call(Capability capability, const json& request, const std::string& request_id) override;
    std::string identity() const override { return identity_; }
    std::size_t served() const noexcept { return served_.load(); }
    std::size_t missing() const noexcept { return missing_.load(); }

  private:
    fs::path dir_;
    std::string identity_;
    std::atomic<std::size_t> served_{0};
    std::atomic<std::size_t> missing_{0};
};

// Forwards to `inner` and writes each response as a fixture file.
class RecordingBackend final : public Backend {
  public:
    RecordingBackend(std::shared_ptr<Backend> inner, fs::path dir);
    std::string call(Capability capability, const json& request, const std::string& request_id) override;
    std::string identity() const override { return inner_->identity(); }

  private:
    std::shared_ptr<Backend> inner_;
    fs::path dir_;
};

// `fixture://<dir>` selects the replay backend; anything else is an HTTP base URL.
std::shared_ptr<Backend> make_backend(const BackendEndpoint& endpoint);

// Endpoint URL after applying GS_BACKEND_<CAPABILITY>_URL, if set.
std::string resolve_backend_url(Capability capability, std::string configured);

struct RetryPolicy {
    int max_retries = 4;
    std::chrono::milliseconds initial_delay{250};
    double factor = 2.0;
    std::function<void(std::chrono::milliseconds)> sleep;

    std::chrono::milliseconds delay_before_retry(int retry) const; // retry is 1-based
};

// On-disk response cache, one file per (capability, request digest). Each
// entry stores the body's own digest and is dropped on mismatch.
class ResponseCache {
  public:
    explicit ResponseCache(fs::path dir);
    std::optional<std::string> get(Capability capability, const std::string& digest) const;
    void put(Capability capability, const std::string& digest, std::string_view body) const;
    fs::path entry_path(Capability capability, const std::string& digest) const;

  private:
    fs::path dir_;
};

struct GatewayOptions {
    std::size_t in_flight = 8;
    std::optional<fs::path> cache_dir;
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct GatewayStats {
    std::size_t requests = 0;
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t retries = 0;
    std::size_t failures = 0;
};

class Gateway {
  public:
    explicit Gateway(GatewayOptions options = {});
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    void set_backend(Capability capability, std::shared_ptr<Backend> backend, int max_retries = 4);
    std::string backend_identity(Capability capability) const;

    std::vector<NerSpan> ner_tag(std::span<const Token> tokens);
    std::vector<Upos> pos_tag(std::span<const Token> tokens);
    std::vector<MaskCandidate> fill_mask(std::span<const Token> tokens, std::size_t mask_index, std::size_t top_k);
    TranslationText translate(std::string_view text, Language target);

    GatewayStats stats() const;

  private:
    struct Route {
        std::shared_ptr<Backend> backend;
        RetryPolicy retry;
        std::unique_ptr<std::counting_semaphore<>> slots;
    };

    json request(Capability capability, const json& body, const std::function<void(const json&)>& validate);

    GatewayOptions options_;
    std::optional<ResponseCache> cache_;
    std::array<Route, 4> routes_;
    std::atomic<std::size_t> requests_{0}, backend_calls_{0}, cache_hits_{0}, retries_{0}, failures_{0};
};

json tokens_json(std::span<const Token> tokens);

} // namespace gendermine
