// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/client.hpp"
#include "mtrl/database.hpp"
#include "mtrl/tools.hpp"

#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib
{
class Server;
}

namespace mtrl
{

/// A canned HTTP reply.
struct MockReply
{
    int status = 200;
    Json body;
};

/// Loopback chat-completions server for tests and offline runs.
///
/// Replies come from (in order of precedence) a handler callback, a replay
/// table keyed by canonical request body, or a FIFO queue of canned replies.
/// When nothing applies the server answers 400.
class MockChatServer
{
public:
    using Handler = std::function<MockReply(const Json& request)>;

    MockChatServer();
    ~MockChatServer();
    MockChatServer(const MockChatServer&) = delete;
    MockChatServer& operator=(const MockChatServer&) = delete;

    /// Binds 127.0.0.1 on a free port and serves in a background thread.
    void start();
    void stop();

    [[nodiscard]] int port() const noexcept { return _port; }
    /// "http://127.0.0.1:<port>/v1"
    [[nodiscard]] std::string base_url() const;

    void enqueue(MockReply reply);
    void enqueue_message(const ChatResponse& response) { enqueue(MockReply{200, to_json(response)}); }
    void set_handler(Handler handler);

    /// Record mode stores every (request, reply) pair; save/load persist them
    /// as JSONL so a later server can replay them without a handler.
    void set_recording(bool on);
    void save_recording(const std::filesystem::path& path) const;
    void load_replay(const std::filesystem::path& path);

    [[nodiscard]] int hits() const noexcept { return _hits.load(); }
    [[nodiscard]] std::vector<Json> requests() const;
    [[nodiscard]] std::vector<std::string> auth_headers() const;

private:
    MockReply respond(const Json& request);

    std::unique_ptr<httplib::Server> _server;
    std::thread _thread;
    int _port = 0;
    std::atomic<int> _hits{0};

    mutable std::mutex _mutex;
    std::deque<MockReply> _queue;
    Handler _handler;
    bool _recording = false;
    std::vector<std::pair<Json, MockReply>> _recorded;
    std::map<std::string, MockReply> _replay;
    std::vector<Json> _requests;
    std::vector<std::string> _auth;
};

/// Loopback JSON-RPC 2.0 tool server on POST /mcp with methods tools/list
/// and tools/call. Backed either by a tool registry plus database (calls
/// execute for real) or by canned call/result pairs.
class MockToolServer
{
public:
    MockToolServer(std::shared_ptr<const ToolRegistry> registry, Database db);
    /// Canned mode: each call is answered with the first entry whose call
    /// matches (name and arguments); unmatched calls get isError.
    MockToolServer(std::vector<ToolSpec> tools, std::vector<std::pair<ToolCall, ToolResult>> canned);
    ~MockToolServer();
    MockToolServer(const MockToolServer&) = delete;
    MockToolServer& operator=(const MockToolServer&) = delete;

    void start();
    void stop();

    [[nodiscard]] int port() const noexcept { return _port; }
    [[nodiscard]] std::string base_url() const;
    [[nodiscard]] int hits() const noexcept { return _hits.load(); }
    [[nodiscard]] Database database() const;

private:
    Json handle(const Json& rpc);

    void install_routes();

    std::shared_ptr<const ToolRegistry> _registry;
    std::vector<ToolSpec> _tools;
    std::vector<std::pair<ToolCall, ToolResult>> _canned;
    mutable std::mutex _mutex;
    Database _db;
    std::unique_ptr<httplib::Server> _server;
    std::thread _thread;
    int _port = 0;
    std::atomic<int> _hits{0};
};

} // namespace mtrl
