// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mtrl/common.hpp"

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>

namespace mtrl
{

class ToolContext;
class ToolRegistry;
struct ToolCall;
struct ToolResult;

/// In-memory relational store: table name -> record id -> record.
///
/// The public surface is read-only. Mutations happen only inside
/// execute_tool(), which hands a ToolContext to the tool handler and commits
/// the working copy (bumping version()) when a mutating tool succeeds.
class Database
{
public:
    Database();

    /// Throws Error unless `tables` is an object of objects of objects.
    explicit Database(Json tables);

    [[nodiscard]] const Json& tables() const noexcept { return _tables; }
    [[nodiscard]] std::uint64_t version() const noexcept { return _version; }

    [[nodiscard]] bool has_table(std::string_view table) const;
    [[nodiscard]] const Json* record(std::string_view table, std::string_view id) const;

    /// Resolves `table.record_id.field[.subfield...]`. Numeric segments index
    /// arrays. Returns nullptr when any segment is missing.
    [[nodiscard]] const Json* resolve(std::string_view dotted_path) const;

    [[nodiscard]] std::string serialize() const { return canonical_dump(_tables); }
    [[nodiscard]] std::uint64_t hash() const { return fnv1a64(serialize()); }

    friend bool operator==(const Database& a, const Database& b)
    {
        return a._version == b._version && a._tables == b._tables;
    }

private:
    friend class ToolContext;
    friend ToolResult execute_tool(Database&, const ToolCall&, const ToolRegistry&);

    Json _tables;
    std::uint64_t _version = 0;
};

/// Resolves a dotted path inside an arbitrary JSON value (no table/record split).
const Json* resolve_json_path(const Json& root, const std::vector<std::string>& segments, std::size_t first = 0);

struct SnapshotToken
{
    std::uint64_t id = 0;
};

class StaleSnapshot : public Error
{
public:
    using Error::Error;
};

/// Holds frozen copies of databases for per-rollout isolation.
/// Thread-safe; tokens become stale after release() or clear().
class SnapshotStore
{
public:
    SnapshotToken snapshot(const Database& db);
    [[nodiscard]] Database restore(SnapshotToken token) const;
    void release(SnapshotToken token);
    void clear();
    [[nodiscard]] std::size_t size() const;

private:
    mutable std::mutex _mutex;
    std::map<std::uint64_t, Database> _snapshots;
    std::uint64_t _next = 1;
};

} // namespace mtrl
