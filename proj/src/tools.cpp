// SPDX-License-Identifier: Apache-2.0
#include "mtrl/tools.hpp"

#include <cctype>
#include <cmath>

namespace mtrl
{

std::string_view to_string(SideChannel channel)
{
    switch (channel)
    {
        case SideChannel::database: return "database";
        case SideChannel::calculate: return "calculate";
        case SideChannel::think: return "think";
        case SideChannel::transfer: return "transfer";
    }
    return "database";
}

SideChannel side_channel_from_string(std::string_view text)
{
    if (text == "database")
        return SideChannel::database;
    if (text == "calculate")
        return SideChannel::calculate;
    if (text == "think")
        return SideChannel::think;
    if (text == "transfer")
        return SideChannel::transfer;
    throw Error("unknown side_channel '" + std::string(text) + "'");
}

Json to_json(const ToolSpec& spec)
{
    Json j{
        {"name", spec.name},
        {"description", spec.description},
        {"parameters", spec.parameters},
        {"mutating", spec.mutating},
        {"side_channel", std::string(to_string(spec.side_channel))},
    };
    if (!spec.impl.empty())
        j["impl"] = spec.impl;
    return j;
}

ToolSpec tool_spec_from_json(const Json& doc)
{
    if (!doc.is_object() || !doc.contains("name") || !doc["name"].is_string())
        throw Error("tool spec needs a string 'name'");
    ToolSpec spec;
    spec.name = doc["name"].get<std::string>();
    if (spec.name.empty())
        throw Error("tool spec name must not be empty");
    spec.description = doc.value("description", "");
    if (doc.contains("parameters"))
    {
        spec.parameters = doc["parameters"];
        if (!spec.parameters.is_object() || spec.parameters.value("type", "object") != "object")
            throw Error("tool '" + spec.name + "': parameters must be an object schema");
    }
    spec.mutating = doc.value("mutating", false);
    spec.side_channel = side_channel_from_string(doc.value("side_channel", "database"));
    spec.impl = doc.value("impl", Json::object());
    return spec;
}

Json function_declaration(const ToolSpec& spec)
{
    return Json{
        {"type", "function"},
        {"function", {{"name", spec.name}, {"description", spec.description}, {"parameters", spec.parameters}}},
    };
}

std::string ToolResult::render() const
{
    if (!ok)
        return error_text;
    if (payload.is_string())
        return payload.get<std::string>();
    if (payload.is_null())
        return "";
    return payload.dump();
}

Json& ToolContext::write()
{
    if (!_mutating)
        throw Error("non-mutating tool attempted a database write");
    if (!_working)
        _working = _db->_tables;
    return *_working;
}

// ---------------------------------------------------------------------------
// calculate

namespace
{

class ExpressionParser
{
public:
    explicit ExpressionParser(std::string_view text): _text(text) {}

    std::optional<double> parse()
    {
        auto v = expr();
        skip();
        if (!v || _pos != _text.size())
            return std::nullopt;
        return v;
    }

private:
    void skip()
    {
        while (_pos < _text.size() && std::isspace(static_cast<unsigned char>(_text[_pos])))
            ++_pos;
    }

    bool eat(char c)
    {
        skip();
        if (_pos < _text.size() && _text[_pos] == c)
        {
            ++_pos;
            return true;
        }
        return false;
    }

    std::optional<double> expr()
    {
        auto lhs = term();
        while (lhs)
        {
            if (eat('+'))
            {
                auto rhs = term();
                if (!rhs)
                    return std::nullopt;
                *lhs += *rhs;
            }
            else if (eat('-'))
            {
                auto rhs = term();
                if (!rhs)
                    return std::nullopt;
                *lhs -= *rhs;
            }
            else
                break;
        }
        return lhs;
    }

    std::optional<double> term()
    {
        auto lhs = factor();
        while (lhs)
        {
            if (eat('*'))
            {
                auto rhs = factor();
                if (!rhs)
                    return std::nullopt;
                *lhs *= *rhs;
            }
            else if (eat('/'))
            {
                auto rhs = factor();
                if (!rhs || *rhs == 0.0)
                    return std::nullopt;
                *lhs /= *rhs;
            }
            else
                break;
        }
        return lhs;
    }

    std::optional<double> factor()
    {
        if (eat('-'))
        {
            auto v = factor();
            return v ? std::optional<double>(-*v) : std::nullopt;
        }
        if (eat('+'))
            return factor();
        if (eat('('))
        {
            auto v = expr();
            if (!v || !eat(')'))
                return std::nullopt;
            return v;
        }
        skip();
        const std::size_t start = _pos;
        while (_pos < _text.size() && (std::isdigit(static_cast<unsigned char>(_text[_pos])) || _text[_pos] == '.'))
            ++_pos;
        if (start == _pos)
            return std::nullopt;
        try
        {
            std::size_t used = 0;
            const std::string token(_text.substr(start, _pos - start));
            double v = std::stod(token, &used);
            if (used != token.size())
                return std::nullopt;
            return v;
        }
        catch (const std::exception&)
        {
            return std::nullopt;
        }
    }

    std::string_view _text;
    std::size_t _pos = 0;
};

std::string arg_string(const Json& args, const std::string& key)
{
    auto it = args.find(key);
    if (it == args.end() || it->is_null())
        return {};
    return it->is_string() ? it->get<std::string>() : it->dump();
}

// ---------------------------------------------------------------------------
// generic table-backed behaviors used by scenario fixtures

const Json& table_of(const ToolContext& ctx, const std::string& table)
{
    static const Json empty = Json::object();
    auto it = ctx.read().find(table);
    return it == ctx.read().end() ? empty : *it;
}

bool field_matches(const Json& record, const std::string& field_path, const Json& expected)
{
    const Json* v = resolve_json_path(record, split(field_path, '.'));
    if (v == nullptr)
        return false;
    if (v->is_string() && expected.is_string())
        return v->get<std::string>() == expected.get<std::string>();
    return json_equivalent(*v, expected);
}

ToolHandler generic_handler(const ToolSpec& spec)
{
    const Json& impl = spec.impl;
    const std::string kind = impl.value("kind", "");
    const std::string table = impl.value("table", "");
    const std::string key_arg = impl.value("key_arg", "");
    const std::string not_found = impl.value("not_found", "Error: " + table + " record not found");

    if (kind == "static")
    {
        Json payload = impl.value("payload", Json(""));
        return [payload](const Json&, ToolContext&) { return ToolResult::success(payload); };
    }
    if (table.empty())
        throw Error("tool '" + spec.name + "': impl kind '" + kind + "' needs a table");

    if (kind == "lookup")
    {
        return [table, key_arg, not_found](const Json& args, ToolContext& ctx) {
            const Json& t = table_of(ctx, table);
            auto it = t.find(arg_string(args, key_arg));
            if (it == t.end())
                return ToolResult::failure(not_found);
            return ToolResult::success(*it);
        };
    }
    if (kind == "find")
    {
        Json match = impl.value("match", Json::object());
        std::string returns = impl.value("returns", "");
        return [table, match, returns, not_found](const Json& args, ToolContext& ctx) {
            for (auto& [id, rec]: table_of(ctx, table).items())
            {
                bool all = true;
                for (auto& [arg, field]: match.items())
                    all = all && args.contains(arg) && field_matches(rec, field.get<std::string>(), args[arg]);
                if (all)
                {
                    if (returns.empty())
                        return ToolResult::success(id);
                    const Json* v = resolve_json_path(rec, split(returns, '.'));
                    return ToolResult::success(v ? *v : Json(nullptr));
                }
            }
            return ToolResult::failure(not_found);
        };
    }
    if (kind == "list")
    {
        Json fields = impl.value("fields", Json::array());
        Json filter = impl.value("filter", Json::object());
        return [table, fields, filter](const Json& args, ToolContext& ctx) {
            Json out = Json::array();
            for (auto& [id, rec]: table_of(ctx, table).items())
            {
                bool keep = true;
                for (auto& [arg, field]: filter.items())
                    if (args.contains(arg))
                        keep = keep && field_matches(rec, field.get<std::string>(), args[arg]);
                if (!keep)
                    continue;
                if (fields.empty())
                    out.push_back(rec);
                else
                {
                    Json row = Json::object();
                    for (const auto& f: fields)
                        if (rec.contains(f.get<std::string>()))
                            row[f.get<std::string>()] = rec[f.get<std::string>()];
                    out.push_back(std::move(row));
                }
            }
            return ToolResult::success(out);
        };
    }
    if (kind == "verify")
    {
        Json match = impl.value("match", Json::object());
        Json success = impl.value("success", Json{{"verified", true}});
        Json echo = impl.value("echo", Json::array());
        std::string failure = impl.value("failure", std::string("Error: verification failed"));
        return [table, key_arg, not_found, match, success, echo, failure](const Json& args, ToolContext& ctx) {
            const Json& t = table_of(ctx, table);
            auto it = t.find(arg_string(args, key_arg));
            if (it == t.end())
                return ToolResult::failure(not_found);
            for (auto& [arg, field]: match.items())
                if (!args.contains(arg) || !field_matches(*it, field.get<std::string>(), args[arg]))
                    return ToolResult::failure(failure);
            Json out = success;
            for (const auto& name: echo)
                if (args.contains(name.get<std::string>()))
                    out[name.get<std::string>()] = args[name.get<std::string>()];
            return ToolResult::success(out);
        };
    }
    if (kind == "update")
    {
        if (!spec.mutating)
            throw Error("tool '" + spec.name + "': update impl requires mutating=true");
        // "set" maps argument name -> record field; a list means same names.
        Json set = impl.value("set", Json::object());
        if (set.is_array())
        {
            Json mapped = Json::object();
            for (const auto& a: set)
                mapped[a.get<std::string>()] = a;
            set = mapped;
        }
        const bool skip_empty = impl.value("skip_empty", false);
        Json response = impl.value("response", Json::object());
        const bool echo_args = impl.value("echo_args", false);
        return [table, key_arg, not_found, set, skip_empty, response, echo_args](const Json& args, ToolContext& ctx) {
            const std::string key = arg_string(args, key_arg);
            if (table_of(ctx, table).find(key) == table_of(ctx, table).end())
                return ToolResult::failure(not_found);
            Json& rec = ctx.write()[table][key];
            for (auto& [arg, field]: set.items())
            {
                if (!args.contains(arg))
                    continue;
                const Json& v = args[arg];
                if (skip_empty && v.is_string() && v.get<std::string>().empty())
                    continue;
                rec[field.get<std::string>()] = v;
            }
            if (response.empty() && !echo_args)
                return ToolResult::success(rec);
            Json out = response;
            if (echo_args)
                for (auto it = args.begin(); it != args.end(); ++it)
                    if (!out.contains(it.key()))
                        out[it.key()] = *it;
            return ToolResult::success(out);
        };
    }
    throw Error("tool '" + spec.name + "': unknown impl kind '" + kind + "'");
}

} // namespace

std::optional<double> evaluate_expression(std::string_view expression)
{
    for (char c: expression)
        if (!(std::isdigit(static_cast<unsigned char>(c)) || std::isspace(static_cast<unsigned char>(c)) || c == '+' || c == '-' || c == '*'
              || c == '/' || c == '(' || c == ')' || c == '.'))
            return std::nullopt;
    auto v = ExpressionParser(expression).parse();
    if (!v || !std::isfinite(*v))
        return std::nullopt;
    return std::round(*v * 100.0) / 100.0;
}

ToolHandler make_handler(const ToolSpec& spec)
{
    switch (spec.side_channel)
    {
        case SideChannel::think:
            return [](const Json&, ToolContext&) { return ToolResult::success(""); };
        case SideChannel::transfer:
            return [](const Json&, ToolContext&) { return ToolResult::success("Transfer successful"); };
        case SideChannel::calculate:
            return [](const Json& args, ToolContext&) {
                auto v = evaluate_expression(arg_string(args, "expression"));
                if (!v)
                    return ToolResult::failure("Error: invalid expression");
                return ToolResult::success(*v);
            };
        case SideChannel::database: break;
    }
    const std::string kind = spec.impl.value("kind", "");
    if (kind == "builtin")
    {
        const std::string name = spec.impl.value("name", "");
        const auto& builtins = builtin_handlers();
        auto it = builtins.find(name);
        if (it == builtins.end())
            throw Error("tool '" + spec.name + "': unknown builtin '" + name + "'");
        return it->second;
    }
    if (kind.empty())
        throw Error("tool '" + spec.name + "': database tool needs an impl descriptor");
    return generic_handler(spec);
}

const std::map<std::string, ToolHandler, std::less<>>& builtin_handlers()
{
    static const auto all = [] {
        auto merged = retail_handlers();
        for (const auto& [name, handler]: toy_handlers())
            merged.emplace(name, handler);
        return merged;
    }();
    return all;
}

void ToolRegistry::add(ToolSpec spec, ToolHandler handler)
{
    if (_index.contains(spec.name))
        throw Error("duplicate tool name '" + spec.name + "'");
    if (spec.side_channel != SideChannel::database && spec.mutating)
        throw Error("side-channel tool '" + spec.name + "' cannot be mutating");
    _index.emplace(spec.name, _specs.size());
    _specs.push_back(std::move(spec));
    _handlers.push_back(std::move(handler));
}

const ToolSpec* ToolRegistry::find(std::string_view name) const
{
    auto it = _index.find(name);
    return it == _index.end() ? nullptr : &_specs[it->second];
}

ToolResult execute_tool(Database& db, const ToolCall& call, const ToolRegistry& registry)
{
    auto it = registry._index.find(call.name);
    if (it == registry._index.end())
        return ToolResult::failure("Error: unknown tool " + call.name);
    const ToolSpec& spec = registry._specs[it->second];
    if (auto err = validate_arguments(spec.parameters, call.arguments))
        return ToolResult::failure("Error: invalid arguments for " + spec.name + ": " + *err);

    ToolContext ctx(db, spec.mutating);
    ToolResult result;
    try
    {
        result = registry._handlers[it->second](call.arguments, ctx);
    }
    catch (const std::exception& e)
    {
        return ToolResult::failure(std::string("Error: ") + e.what());
    }
    if (result.ok && spec.mutating)
    {
        if (ctx._working)
            db._tables = std::move(*ctx._working);
        ++db._version;
    }
    return result;
}

} // namespace mtrl
