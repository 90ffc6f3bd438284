// SPDX-License-Identifier: Apache-2.0
#include "mtrl/client.hpp"

#include "httplib.h"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

namespace mtrl
{

namespace
{

std::mutex g_log_mutex;

LogSink& log_sink()
{
    static LogSink sink = [](LogLevel level, const std::string& message) {
        if (level >= LogLevel::warn)
            std::cerr << "[mtrl] " << message << "\n";
    };
    return sink;
}

} // namespace

LogSink set_log_sink(LogSink sink)
{
    std::lock_guard lock(g_log_mutex);
    auto previous = std::move(log_sink());
    log_sink() = std::move(sink);
    return previous;
}

void log(LogLevel level, const std::string& message)
{
    std::lock_guard lock(g_log_mutex);
    if (log_sink())
        log_sink()(level, message);
}

// --- wire types ------------------------------------------------------------

namespace
{

Json tool_call_to_wire(const ToolCall& call)
{
    return Json{
        {"id", call.id},
        {"type", "function"},
        {"function", {{"name", call.name}, {"arguments", call.arguments.dump()}}},
    };
}

ToolCall tool_call_from_wire(const Json& doc)
{
    const Json& fn = doc.at("function");
    ToolCall call;
    call.name = fn.at("name").get<std::string>();
    call.id = doc.value("id", "");
    const Json& args = fn.contains("arguments") ? fn["arguments"] : Json("{}");
    if (args.is_string())
    {
        const auto text = args.get<std::string>();
        call.arguments = text.empty() ? Json::object() : Json::parse(text);
    }
    else
        call.arguments = args;
    return call;
}

} // namespace

Json to_json(const ChatMessage& message)
{
    Json j{{"role", message.role}};
    j["content"] = message.content ? Json(*message.content) : Json(nullptr);
    if (!message.tool_calls.empty())
    {
        j["tool_calls"] = Json::array();
        for (const auto& c: message.tool_calls)
            j["tool_calls"].push_back(tool_call_to_wire(c));
    }
    if (!message.tool_call_id.empty())
        j["tool_call_id"] = message.tool_call_id;
    return j;
}

ChatMessage chat_message_from_json(const Json& doc)
{
    ChatMessage m;
    m.role = doc.at("role").get<std::string>();
    if (doc.contains("content") && doc["content"].is_string())
        m.content = doc["content"].get<std::string>();
    for (const auto& c: doc.value("tool_calls", Json::array()))
        m.tool_calls.push_back(tool_call_from_wire(c));
    m.tool_call_id = doc.value("tool_call_id", "");
    return m;
}

Json to_json(const ChatRequest& request)
{
    Json j{{"model", request.model}, {"temperature", request.temperature}, {"max_tokens", request.max_tokens}};
    j["messages"] = Json::array();
    for (const auto& m: request.messages)
        j["messages"].push_back(to_json(m));
    if (!request.tools.empty())
    {
        j["tools"] = Json::array();
        for (const auto& t: request.tools)
            j["tools"].push_back(function_declaration(t));
    }
    return j;
}

ChatRequest chat_request_from_json(const Json& body)
{
    ChatRequest r;
    r.model = body.value("model", "");
    r.temperature = body.value("temperature", 1.0);
    r.max_tokens = body.value("max_tokens", 1024);
    for (const auto& m: body.value("messages", Json::array()))
        r.messages.push_back(chat_message_from_json(m));
    for (const auto& t: body.value("tools", Json::array()))
    {
        const Json& fn = t.at("function");
        ToolSpec spec;
        spec.name = fn.at("name").get<std::string>();
        spec.description = fn.value("description", "");
        spec.parameters = fn.value("parameters", spec.parameters);
        r.tools.push_back(std::move(spec));
    }
    return r;
}

ChatResponse parse_chat_response(const Json& body)
{
    try
    {
        const Json& choices = body.at("choices");
        if (!choices.is_array() || choices.empty())
            throw MalformedResponse("response has no choices");
        const Json& message = choices[0].at("message");
        ChatResponse r;
        if (message.contains("content") && message["content"].is_string())
            r.content = message["content"].get<std::string>();
        for (const auto& c: message.value("tool_calls", Json::array()))
            r.tool_calls.push_back(tool_call_from_wire(c));
        if (!r.content && r.tool_calls.empty())
            throw MalformedResponse("response message has neither content nor tool_calls");
        if (body.contains("usage") && body["usage"].is_object())
        {
            r.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
            r.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
        }
        if (auto lp = choices[0].find("logprobs"); lp != choices[0].end() && lp->is_object() && lp->contains("content"))
        {
            std::vector<double> values;
            for (const auto& tok: (*lp)["content"])
                values.push_back(tok.at("logprob").get<double>());
            r.logprobs = std::move(values);
        }
        return r;
    }
    catch (const MalformedResponse&)
    {
        throw;
    }
    catch (const std::exception& e)
    {
        throw MalformedResponse(std::string("malformed chat response: ") + e.what());
    }
}

Json to_json(const ChatResponse& response)
{
    Json message{{"role", "assistant"}};
    message["content"] = response.content ? Json(*response.content) : Json(nullptr);
    if (!response.tool_calls.empty())
    {
        message["tool_calls"] = Json::array();
        for (const auto& c: response.tool_calls)
            message["tool_calls"].push_back(tool_call_to_wire(c));
    }
    Json choice{{"index", 0}, {"message", std::move(message)}};
    if (response.logprobs)
    {
        Json content = Json::array();
        for (double v: *response.logprobs)
            content.push_back(Json{{"logprob", v}});
        choice["logprobs"] = Json{{"content", std::move(content)}};
    }
    return Json{
        {"choices", Json::array({std::move(choice)})},
        {"usage", {{"prompt_tokens", response.usage.prompt_tokens}, {"completion_tokens", response.usage.completion_tokens}}},
    };
}

std::vector<std::string> validate_tool_calls(const ChatResponse& response, const std::vector<ToolSpec>& tools)
{
    std::vector<std::string> problems;
    for (const auto& call: response.tool_calls)
    {
        const ToolSpec* spec = nullptr;
        for (const auto& t: tools)
            if (t.name == call.name)
                spec = &t;
        if (spec == nullptr)
            problems.push_back("undeclared tool " + call.name);
        else if (auto err = validate_arguments(spec->parameters, call.arguments))
            problems.push_back(call.name + ": " + *err);
    }
    return problems;
}

// --- config ----------------------------------------------------------------

Json to_json(const ClientConfig& cfg)
{
    Json backoff = Json::array();
    for (auto b: cfg.backoff)
        backoff.push_back(b.count());
    return Json{
        {"base_url", cfg.base_url},
        {"api_key_env", cfg.api_key_env},
        {"timeout_ms", cfg.timeout.count()},
        {"max_retries", cfg.max_retries},
        {"backoff_ms", std::move(backoff)},
    };
}

ClientConfig client_config_from_json(const Json& doc)
{
    ClientConfig cfg;
    cfg.base_url = doc.value("base_url", cfg.base_url);
    cfg.api_key_env = doc.value("api_key_env", cfg.api_key_env);
    cfg.timeout = std::chrono::milliseconds(doc.value("timeout_ms", static_cast<long long>(cfg.timeout.count())));
    cfg.max_retries = doc.value("max_retries", cfg.max_retries);
    if (cfg.max_retries < 0)
        throw Error("client: max_retries must be >= 0");
    if (doc.contains("backoff_ms"))
    {
        cfg.backoff.clear();
        for (const auto& b: doc["backoff_ms"])
            cfg.backoff.emplace_back(b.get<long long>());
    }
    return cfg;
}

std::pair<std::string, std::string> split_base_url(const std::string& base_url)
{
    const auto scheme = base_url.find("://");
    if (scheme == std::string::npos)
        throw Error("base_url needs a scheme: " + base_url);
    const auto path = base_url.find('/', scheme + 3);
    if (path == std::string::npos)
        return {base_url, ""};
    std::string prefix = base_url.substr(path);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();
    return {base_url.substr(0, path), prefix};
}

// --- client ----------------------------------------------------------------

ChatClient::ChatClient(ClientConfig cfg): _cfg(std::move(cfg))
{
    if (_cfg.max_retries < 0)
        throw Error("client: max_retries must be >= 0");
    split_base_url(_cfg.base_url);
}

Json ChatClient::post_json(const std::string& path, const Json& body, int* attempts_out) const
{
    const auto [host, prefix] = split_base_url(_cfg.base_url);
    httplib::Headers headers;
    if (!_cfg.api_key_env.empty())
    {
        const char* key = std::getenv(_cfg.api_key_env.c_str());
        if (key == nullptr || *key == '\0')
            throw AuthError("API key variable " + _cfg.api_key_env + " is not set");
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }

    httplib::Client http(host);
    const auto secs = _cfg.timeout.count() / 1000;
    const auto usecs = (_cfg.timeout.count() % 1000) * 1000;
    http.set_connection_timeout(secs, usecs);
    http.set_read_timeout(secs, usecs);
    http.set_write_timeout(secs, usecs);

    const std::string url = prefix + path;
    const std::string payload = body.dump();
    std::string last_error;
    const int max_attempts = 1 + _cfg.max_retries;
    for (int attempt = 1; attempt <= max_attempts; ++attempt)
    {
        if (attempts_out)
            *attempts_out = attempt;
        if (attempt > 1 && !_cfg.backoff.empty())
        {
            const auto idx = std::min<std::size_t>(attempt - 2, _cfg.backoff.size() - 1);
            std::this_thread::sleep_for(_cfg.backoff[idx]);
        }
        auto res = http.Post(url, headers, payload, "application/json");
        if (!res)
        {
            last_error = "transport error: " + httplib::to_string(res.error());
            log(LogLevel::warn, "POST " + host + url + " attempt " + std::to_string(attempt) + ": " + last_error);
            continue;
        }
        const int status = res->status;
        log(LogLevel::debug, "POST " + host + url + " attempt " + std::to_string(attempt) + " -> " + std::to_string(status));
        if (status == 200)
        {
            try
            {
                return Json::parse(res->body);
            }
            catch (const Json::parse_error& e)
            {
                throw MalformedResponse(std::string("response body is not JSON: ") + e.what());
            }
        }
        if (status == 401 || status == 403)
            throw AuthError("authentication rejected with HTTP " + std::to_string(status));
        if (status == 429 || status >= 500)
        {
            last_error = "HTTP " + std::to_string(status);
            log(LogLevel::warn, "POST " + host + url + " attempt " + std::to_string(attempt) + ": " + last_error);
            continue;
        }
        throw TransportError("HTTP " + std::to_string(status) + ": " + res->body.substr(0, 200));
    }
    throw RetriesExhausted("retries exhausted after " + std::to_string(max_attempts) + " attempts (" + last_error + ")", max_attempts);
}

ChatResponse ChatClient::chat(const ChatRequest& request) const
{
    int attempts = 0;
    Json body = post_json("/chat/completions", to_json(request), &attempts);
    ChatResponse response = parse_chat_response(body);
    response.attempts = attempts;
    return response;
}

} // namespace mtrl
