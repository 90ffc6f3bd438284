// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/common.hpp"
#include "mtrl/tools.hpp"

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mtrl
{

// --- logging ---------------------------------------------------------------

enum class LogLevel
{
    debug,
    info,
    warn,
    error,
};

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (default: warnings and errors to stderr).
/// Returns the previous sink.
LogSink set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);

// --- wire types ------------------------------------------------------------

struct ChatMessage
{
    std::string role; // system | user | assistant | tool
    std::optional<std::string> content;
    std::vector<ToolCall> tool_calls;
    std::string tool_call_id;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest
{
    std::string model;
    std::vector<ChatMessage> messages;
    std::vector<ToolSpec> tools;
    double temperature = 1.0;
    int max_tokens = 1024;
};

struct Usage
{
    int prompt_tokens = 0;
    int completion_tokens = 0;
};

struct ChatResponse
{
    std::optional<std::string> content;
    std::vector<ToolCall> tool_calls;
    Usage usage;
    std::optional<std::vector<double>> logprobs;
    /// Transport bookkeeping, not part of the wire body.
    int attempts = 1;
};

Json to_json(const ChatMessage& message);
ChatMessage chat_message_from_json(const Json& doc);

/// Body for POST <base_url>/chat/completions.
Json to_json(const ChatRequest& request);
ChatRequest chat_request_from_json(const Json& body);

/// Parses `choices[0].message.{content,tool_calls}` and `usage`.
/// Throws MalformedResponse.
ChatResponse parse_chat_response(const Json& body);
Json to_json(const ChatResponse& response);

/// Checks every returned call against the declared tool schemas; returns one
/// message per offending call.
std::vector<std::string> validate_tool_calls(const ChatResponse& response, const std::vector<ToolSpec>& tools);

// --- errors ----------------------------------------------------------------

class TransportError : public Error
{
public:
    using Error::Error;
};

class AuthError : public TransportError
{
public:
    using TransportError::TransportError;
};

class MalformedResponse : public TransportError
{
public:
    using TransportError::TransportError;
};

class RetriesExhausted : public TransportError
{
public:
    RetriesExhausted(const std::string& what, int attempts): TransportError(what), _attempts(attempts) {}
    [[nodiscard]] int attempts() const noexcept { return _attempts; }

private:
    int _attempts;
};

// --- client ----------------------------------------------------------------

struct ClientConfig
{
    std::string base_url = "http://127.0.0.1:8000/v1";
    /// Name of the environment variable holding the API key; empty = no auth.
    std::string api_key_env;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    /// Delay before retry k is backoff[min(k, size-1)]; empty = no delay.
    std::vector<std::chrono::milliseconds> backoff{std::chrono::milliseconds(500), std::chrono::milliseconds(1000), std::chrono::milliseconds(2000)};
};

Json to_json(const ClientConfig& cfg);
ClientConfig client_config_from_json(const Json& doc);

/// Splits "http://host:port/prefix" into ("http://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

/// HTTP chat-completions client. Stateless apart from configuration; safe to
/// share across threads (each call opens its own connection).
class ChatClient
{
public:
    explicit ChatClient(ClientConfig cfg);

    /// Retries timeouts, connection failures, 429 and 5xx up to
    /// cfg.max_retries times. Throws AuthError (401/403, missing key),
    /// MalformedResponse, TransportError (other 4xx) or RetriesExhausted.
    [[nodiscard]] ChatResponse chat(const ChatRequest& request) const;

    /// POSTs an arbitrary JSON body to base_url + path with the same retry
    /// and auth policy. Returns the parsed response body.
    [[nodiscard]] Json post_json(const std::string& path, const Json& body, int* attempts_out = nullptr) const;

    [[nodiscard]] const ClientConfig& config() const noexcept { return _cfg; }

private:
    ClientConfig _cfg;
};

} // namespace mtrl
