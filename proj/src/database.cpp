// SPDX-License-Identifier: Apache-2.0
#include "mtrl/database.hpp"

#include <charconv>

namespace mtrl
{

Database::Database(): _tables(Json::object())
{
}

Database::Database(Json tables): _tables(std::move(tables))
{
    if (!_tables.is_object())
        throw Error("database: tables must be an object");
    for (auto& [name, table]: _tables.items())
    {
        if (!table.is_object())
            throw Error("database: table '" + name + "' must be an object of records");
        for (auto& [id, rec]: table.items())
            if (!rec.is_object())
                throw Error("database: record '" + name + "." + id + "' must be an object");
    }
}

bool Database::has_table(std::string_view table) const
{
    return _tables.contains(std::string(table));
}

const Json* Database::record(std::string_view table, std::string_view id) const
{
    auto t = _tables.find(std::string(table));
    if (t == _tables.end())
        return nullptr;
    auto r = t->find(std::string(id));
    return r == t->end() ? nullptr : &*r;
}

const Json* resolve_json_path(const Json& root, const std::vector<std::string>& segments, std::size_t first)
{
    const Json* cur = &root;
    for (std::size_t i = first; i < segments.size(); ++i)
    {
        const auto& seg = segments[i];
        if (cur->is_object())
        {
            auto it = cur->find(seg);
            if (it == cur->end())
                return nullptr;
            cur = &*it;
        }
        else if (cur->is_array())
        {
            std::size_t idx = 0;
            auto [ptr, ec] = std::from_chars(seg.data(), seg.data() + seg.size(), idx);
            if (ec != std::errc{} || ptr != seg.data() + seg.size() || idx >= cur->size())
                return nullptr;
            cur = &(*cur)[idx];
        }
        else
            return nullptr;
    }
    return cur;
}

const Json* Database::resolve(std::string_view dotted_path) const
{
    auto segments = split(dotted_path, '.');
    if (segments.size() < 2)
        return nullptr;
    const Json* rec = record(segments[0], segments[1]);
    if (rec == nullptr)
        return nullptr;
    return resolve_json_path(*rec, segments, 2);
}

SnapshotToken SnapshotStore::snapshot(const Database& db)
{
    std::lock_guard lock(_mutex);
    const auto id = _next++;
    _snapshots.emplace(id, db);
    return SnapshotToken{id};
}

Database SnapshotStore::restore(SnapshotToken token) const
{
    std::lock_guard lock(_mutex);
    auto it = _snapshots.find(token.id);
    if (it == _snapshots.end())
        throw StaleSnapshot("snapshot token " + std::to_string(token.id) + " is stale");
    return it->second;
}

void SnapshotStore::release(SnapshotToken token)
{
    std::lock_guard lock(_mutex);
    _snapshots.erase(token.id);
}

void SnapshotStore::clear()
{
    std::lock_guard lock(_mutex);
    _snapshots.clear();
}

std::size_t SnapshotStore::size() const
{
    std::lock_guard lock(_mutex);
    return _snapshots.size();
}

} // namespace mtrl
