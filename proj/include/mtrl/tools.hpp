// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/common.hpp"
#include "mtrl/database.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mtrl
{

enum class SideChannel
{
    database,
    calculate,
    think,
    transfer,
};

std::string_view to_string(SideChannel channel);
SideChannel side_channel_from_string(std::string_view text);

/// Function-calling tool declaration.
///
/// `parameters` is a JSON-Schema-style object (type/properties/required).
/// `impl` selects the behavior bound at load time: either
/// `{"kind":"builtin","name":"retail.get_order_details"}` or one of the
/// generic table kinds understood by make_handler(). Side-channel tools need
/// no impl.
struct ToolSpec
{
    std::string name;
    std::string description;
    Json parameters = Json{{"type", "object"}, {"properties", Json::object()}, {"required", Json::array()}};
    bool mutating = false;
    SideChannel side_channel = SideChannel::database;
    Json impl = Json::object();
};

Json to_json(const ToolSpec& spec);
ToolSpec tool_spec_from_json(const Json& doc);

/// Chat-completions `tools[]` entry for a spec.
Json function_declaration(const ToolSpec& spec);

struct ToolCall
{
    std::string name;
    Json arguments = Json::object();
    /// Wire-level call id; not part of call identity.
    std::string id;

    friend bool operator==(const ToolCall& a, const ToolCall& b)
    {
        return a.name == b.name && a.arguments == b.arguments;
    }
};

/// Exactly one of payload / error_text is meaningful, selected by `ok`.
struct ToolResult
{
    bool ok = true;
    Json payload;
    std::string error_text;

    static ToolResult success(Json payload) { return ToolResult{true, std::move(payload), {}}; }
    static ToolResult failure(std::string text) { return ToolResult{false, nullptr, std::move(text)}; }

    /// What the agent sees: string payloads verbatim, other payloads as JSON,
    /// failures as their error text.
    [[nodiscard]] std::string render() const;

    friend bool operator==(const ToolResult& a, const ToolResult& b)
    {
        return a.ok == b.ok && a.payload == b.payload && a.error_text == b.error_text;
    }
};

/// Returns a human-readable reason when `args` does not satisfy `schema`.
/// Supports type, properties, required, items, enum and
/// additionalProperties=false.
std::optional<std::string> validate_arguments(const Json& schema, const Json& args);

/// The database view handed to a tool handler. Reads see the pre-call state;
/// write() yields a private working copy that execute_tool() commits only on
/// success. Non-mutating tools cannot obtain a writable view.
class ToolContext
{
public:
    [[nodiscard]] const Json& read() const { return _working ? *_working : _db->_tables; }
    Json& write();
    [[nodiscard]] bool mutating() const noexcept { return _mutating; }

private:
    friend ToolResult execute_tool(Database&, const ToolCall&, const class ToolRegistry&);
    ToolContext(const Database& db, bool mutating): _db(&db), _mutating(mutating) {}

    const Database* _db;
    bool _mutating;
    std::optional<Json> _working;
};

using ToolHandler = std::function<ToolResult(const Json& args, ToolContext& ctx)>;

/// Binds a spec to its behavior (side channel, builtin or generic kind).
/// Throws Error for unknown builtins or malformed impl descriptors.
ToolHandler make_handler(const ToolSpec& spec);

/// Builtin handlers by qualified name ("retail.cancel_pending_order", ...):
/// the union of the retail and toy tables.
const std::map<std::string, ToolHandler, std::less<>>& builtin_handlers();
const std::map<std::string, ToolHandler, std::less<>>& retail_handlers();
const std::map<std::string, ToolHandler, std::less<>>& toy_handlers();

/// Immutable after construction; safe for concurrent readers.
class ToolRegistry
{
public:
    ToolRegistry() = default;

    /// Throws Error on a duplicate name.
    void add(ToolSpec spec, ToolHandler handler);
    void add(ToolSpec spec) { auto h = make_handler(spec); add(std::move(spec), std::move(h)); }

    [[nodiscard]] const ToolSpec* find(std::string_view name) const;
    [[nodiscard]] std::span<const ToolSpec> specs() const { return _specs; }
    [[nodiscard]] std::size_t size() const { return _specs.size(); }
    [[nodiscard]] bool contains(std::string_view name) const { return find(name) != nullptr; }

private:
    friend ToolResult execute_tool(Database&, const ToolCall&, const ToolRegistry&);

    std::vector<ToolSpec> _specs;
    std::vector<ToolHandler> _handlers;
    std::map<std::string, std::size_t, std::less<>> _index;
};

/// Executes `call` against `db`. Never throws for agent mistakes: unknown
/// tools, schema-invalid arguments and domain-rule violations come back as
/// ok=false results. Mutating tools commit atomically and bump db.version()
/// on success; everything else leaves db untouched.
ToolResult execute_tool(Database& db, const ToolCall& call, const ToolRegistry& registry);

/// Arithmetic over + - * / and parentheses, rounded to 2 decimals.
std::optional<double> evaluate_expression(std::string_view expression);

} // namespace mtrl
