// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mtrl
{

// nlohmann::json keeps object keys in a std::map, so dump() is already
// canonical (lexicographic keys, shortest round-trip doubles).
using Json = nlohmann::json;

/// Malformed input or a violated precondition on caller-supplied data.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::string_view kStopSentinel = "###STOP###";
inline constexpr std::string_view kTransferSentinel = "###TRANSFER###";

std::string canonical_dump(const Json& value);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// splitmix64 finalizer over (a, b); used to derive per-rollout seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Structural equality where numbers compare with a relative tolerance.
bool json_equivalent(const Json& a, const Json& b, double rel_tol = 1e-9);

std::vector<std::string> split(std::string_view text, char sep);

/// Whitespace-separated word count. Stand-in tokenizer for text produced
/// outside a trainable policy (user, tool, system).
std::size_t count_words(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

} // namespace mtrl
