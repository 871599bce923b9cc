#pragma once

#include <stdexcept>
#include <string>

namespace gendermine {

// Bad or missing configuration: unreadable lists, unknown languages, bad flags.
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// A caller violated an operation's precondition.
class PreconditionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// A model backend failed after retries or returned a malformed/protocol-error response.
class BackendError : public std::runtime_error {
  public:
    BackendError(std::string request_id, const std::string& message, bool retryable = false)
        : std::runtime_error(message + " [request " + request_id + "]"),
          request_id_(std::move(request_id)),
          retryable_(retryable) {}

    const std::string& request_id() const noexcept { return request_id_; }
    bool retryable() const noexcept { return retryable_; }

  private:
    std::string request_id_;
    bool retryable_;
};

// Halts a pipeline stage; carries the stage name and the offending record.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, std::string record_id, const std::string& message)
        : std::runtime_error(stage + ": " + message + (record_id.empty() ? "" : " (record " + record_id + ")")),
          stage_(std::move(stage)),
          record_id_(std::move(record_id)) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& record_id() const noexcept { return record_id_; }

  private:
    std::string stage_;
    std::string record_id_;
};

} // namespace gendermine
