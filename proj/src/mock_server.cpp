// SPDX-License-Identifier: Apache-2.0
#include "mtrl/mock_server.hpp"

#include "httplib.h"

#include <fstream>

namespace mtrl
{

namespace
{

int bind_loopback(httplib::Server& server, std::thread& thread)
{
    const int port = server.bind_to_any_port("127.0.0.1");
    if (port <= 0)
        throw Error("mock server: cannot bind a loopback port");
    thread = std::thread([&server] { server.listen_after_bind(); });
    server.wait_until_ready();
    return port;
}

void shutdown(std::unique_ptr<httplib::Server>& server, std::thread& thread)
{
    if (server)
        server->stop();
    if (thread.joinable())
        thread.join();
}

} // namespace

// --- chat ------------------------------------------------------------------

MockChatServer::MockChatServer(): _server(std::make_unique<httplib::Server>())
{
    _server->Post(R"(/v1/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
        ++_hits;
        Json body;
        try
        {
            body = Json::parse(req.body);
        }
        catch (const Json::parse_error&)
        {
            res.status = 400;
            res.set_content(R"({"error":"request body is not JSON"})", "application/json");
            return;
        }
        {
            std::lock_guard lock(_mutex);
            _requests.push_back(body);
            _auth.push_back(req.get_header_value("Authorization"));
        }
        MockReply reply = respond(body);
        res.status = reply.status;
        res.set_content(reply.body.is_string() ? reply.body.get<std::string>() : reply.body.dump(), "application/json");
    });
}

MockChatServer::~MockChatServer()
{
    stop();
}

void MockChatServer::start()
{
    if (_thread.joinable())
        return;
    _port = bind_loopback(*_server, _thread);
}

void MockChatServer::stop()
{
    shutdown(_server, _thread);
}

std::string MockChatServer::base_url() const
{
    return "http://127.0.0.1:" + std::to_string(_port) + "/v1";
}

void MockChatServer::enqueue(MockReply reply)
{
    std::lock_guard lock(_mutex);
    _queue.push_back(std::move(reply));
}

void MockChatServer::set_handler(Handler handler)
{
    std::lock_guard lock(_mutex);
    _handler = std::move(handler);
}

void MockChatServer::set_recording(bool on)
{
    std::lock_guard lock(_mutex);
    _recording = on;
}

MockReply MockChatServer::respond(const Json& request)
{
    Handler handler;
    MockReply reply{400, Json{{"error", "no canned reply"}}};
    bool found = false;
    {
        std::lock_guard lock(_mutex);
        handler = _handler;
        if (!handler)
        {
            if (auto it = _replay.find(canonical_dump(request)); it != _replay.end())
            {
                reply = it->second;
                found = true;
            }
            else if (!_queue.empty())
            {
                reply = std::move(_queue.front());
                _queue.pop_front();
                found = true;
            }
        }
    }
    if (handler)
    {
        try
        {
            reply = handler(request);
        }
        catch (const std::exception& e)
        {
            reply = MockReply{500, Json{{"error", e.what()}}};
        }
        found = true;
    }
    std::lock_guard lock(_mutex);
    if (_recording && found)
        _recorded.emplace_back(request, reply);
    return reply;
}

void MockChatServer::save_recording(const std::filesystem::path& path) const
{
    std::string text;
    {
        std::lock_guard lock(_mutex);
        for (const auto& [req, reply]: _recorded)
            text += Json{{"request", req}, {"status", reply.status}, {"response", reply.body}}.dump() + "\n";
    }
    write_text_file(path, text);
}

void MockChatServer::load_replay(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read " + path.string());
    std::lock_guard lock(_mutex);
    std::string line;
    while (std::getline(in, line))
    {
        if (line.empty())
            continue;
        Json entry = Json::parse(line);
        _replay[canonical_dump(entry.at("request"))] = MockReply{entry.value("status", 200), entry.at("response")};
    }
}

std::vector<Json> MockChatServer::requests() const
{
    std::lock_guard lock(_mutex);
    return _requests;
}

std::vector<std::string> MockChatServer::auth_headers() const
{
    std::lock_guard lock(_mutex);
    return _auth;
}

// --- tools -----------------------------------------------------------------

MockToolServer::MockToolServer(std::shared_ptr<const ToolRegistry> registry, Database db)
    : _registry(std::move(registry)), _db(std::move(db)), _server(std::make_unique<httplib::Server>())
{
    auto specs = _registry->specs();
    _tools.assign(specs.begin(), specs.end());
    install_routes();
}

MockToolServer::MockToolServer(std::vector<ToolSpec> tools, std::vector<std::pair<ToolCall, ToolResult>> canned)
    : _tools(std::move(tools)), _canned(std::move(canned)), _server(std::make_unique<httplib::Server>())
{
    install_routes();
}

void MockToolServer::install_routes()
{
    _server->Post("/mcp", [this](const httplib::Request& req, httplib::Response& res) {
        ++_hits;
        Json reply;
        try
        {
            reply = handle(Json::parse(req.body));
        }
        catch (const std::exception& e)
        {
            reply = Json{{"jsonrpc", "2.0"}, {"id", nullptr}, {"error", {{"code", -32700}, {"message", e.what()}}}};
        }
        res.set_content(reply.dump(), "application/json");
    });
}

MockToolServer::~MockToolServer()
{
    stop();
}

void MockToolServer::start()
{
    if (_thread.joinable())
        return;
    _port = bind_loopback(*_server, _thread);
}

void MockToolServer::stop()
{
    shutdown(_server, _thread);
}

std::string MockToolServer::base_url() const
{
    return "http://127.0.0.1:" + std::to_string(_port);
}

Database MockToolServer::database() const
{
    std::lock_guard lock(_mutex);
    return _db;
}

Json MockToolServer::handle(const Json& rpc)
{
    Json reply{{"jsonrpc", "2.0"}, {"id", rpc.value("id", Json())}};
    const std::string method = rpc.value("method", "");
    if (method == "tools/list")
    {
        Json tools = Json::array();
        for (const auto& spec: _tools)
            tools.push_back(Json{{"name", spec.name}, {"description", spec.description}, {"inputSchema", spec.parameters}});
        reply["result"] = Json{{"tools", std::move(tools)}};
        return reply;
    }
    if (method == "tools/call")
    {
        const Json& params = rpc.at("params");
        ToolCall call{params.at("name").get<std::string>(), params.value("arguments", Json::object()), {}};
        ToolResult result = ToolResult::failure("Error: no canned result for " + call.name);
        if (_registry)
        {
            std::lock_guard lock(_mutex);
            result = execute_tool(_db, call, *_registry);
        }
        else
        {
            for (const auto& [c, r]: _canned)
                if (c == call)
                {
                    result = r;
                    break;
                }
        }
        reply["result"] = Json{
            {"content", Json::array({Json{{"type", "text"}, {"text", result.render()}}})},
            {"isError", !result.ok},
        };
        return reply;
    }
    reply["error"] = Json{{"code", -32601}, {"message", "method not found: " + method}};
    return reply;
}

} // namespace mtrl
