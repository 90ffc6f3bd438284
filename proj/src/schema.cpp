// SPDX-License-Identifier: Apache-2.0
#include "mtrl/tools.hpp"

namespace mtrl
{
namespace
{

bool matches_type(const std::string& type, const Json& value)
{
    if (type == "string")
        return value.is_string();
    if (type == "integer")
        return value.is_number_integer() || (value.is_number_float() && value.get<double>() == static_cast<double>(static_cast<long long>(value.get<double>())));
    if (type == "number")
        return value.is_number();
    if (type == "boolean")
        return value.is_boolean();
    if (type == "array")
        return value.is_array();
    if (type == "object")
        return value.is_object();
    if (type == "null")
        return value.is_null();
    return false;
}

std::optional<std::string> validate_at(const Json& schema, const Json& value, const std::string& where)
{
    if (!schema.is_object())
        return std::nullopt;

    if (auto t = schema.find("type"); t != schema.end())
    {
        bool ok = false;
        if (t->is_string())
            ok = matches_type(t->get<std::string>(), value);
        else if (t->is_array())
            for (const auto& alt: *t)
                ok = ok || (alt.is_string() && matches_type(alt.get<std::string>(), value));
        if (!ok)
            return where + ": expected " + t->dump();
    }

    if (auto e = schema.find("enum"); e != schema.end() && e->is_array())
    {
        bool found = false;
        for (const auto& option: *e)
            found = found || option == value;
        if (!found)
            return where + ": value not in enum " + e->dump();
    }

    if (value.is_object())
    {
        const Json empty = Json::object();
        const auto props_it = schema.find("properties");
        const Json& props = props_it != schema.end() && props_it->is_object() ? *props_it : empty;
        if (auto req = schema.find("required"); req != schema.end() && req->is_array())
            for (const auto& name: *req)
                if (name.is_string() && !value.contains(name.get<std::string>()))
                    return where + ": missing required '" + name.get<std::string>() + "'";
        const bool closed = schema.value("additionalProperties", true) == false;
        for (auto it = value.begin(); it != value.end(); ++it)
        {
            auto p = props.find(it.key());
            if (p == props.end())
            {
                if (closed)
                    return where + ": unexpected property '" + it.key() + "'";
                continue;
            }
            if (auto err = validate_at(*p, *it, where + "." + it.key()))
                return err;
        }
    }

    if (value.is_array())
        if (auto items = schema.find("items"); items != schema.end())
            for (std::size_t i = 0; i < value.size(); ++i)
                if (auto err = validate_at(*items, value[i], where + "[" + std::to_string(i) + "]"))
                    return err;

    return std::nullopt;
}

} // namespace

std::optional<std::string> validate_arguments(const Json& schema, const Json& args)
{
    if (!args.is_object())
        return std::string("arguments must be an object");
    return validate_at(schema, args, "arguments");
}

} // namespace mtrl
