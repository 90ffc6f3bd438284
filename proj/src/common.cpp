// SPDX-License-Identifier: Apache-2.0
#include "mtrl/common.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mtrl
{

std::string canonical_dump(const Json& value)
{
    return value.dump();
}

std::uint64_t fnv1a64(std::string_view bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

bool json_equivalent(const Json& a, const Json& b, double rel_tol)
{
    if (a.is_number() && b.is_number())
    {
        const double x = a.get<double>();
        const double y = b.get<double>();
        const double scale = std::max({1.0, std::fabs(x), std::fabs(y)});
        return std::fabs(x - y) <= rel_tol * scale;
    }
    if (a.type() != b.type())
        return false;
    if (a.is_object())
    {
        if (a.size() != b.size())
            return false;
        for (auto it = a.begin(); it != a.end(); ++it)
        {
            auto other = b.find(it.key());
            if (other == b.end() || !json_equivalent(*it, *other, rel_tol))
                return false;
        }
        return true;
    }
    if (a.is_array())
    {
        if (a.size() != b.size())
            return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!json_equivalent(a[i], b[i], rel_tol))
                return false;
        return true;
    }
    return a == b;
}

std::vector<std::string> split(std::string_view text, char sep)
{
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true)
    {
        auto pos = text.find(sep, start);
        if (pos == std::string_view::npos)
        {
            parts.emplace_back(text.substr(start));
            return parts;
        }
        parts.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::size_t count_words(std::string_view text)
{
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : text)
    {
        if (std::isspace(c))
            in_word = false;
        else if (!in_word)
        {
            in_word = true;
            ++n;
        }
    }
    return n;
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json_file(const std::filesystem::path& path)
{
    try
    {
        return Json::parse(read_text_file(path));
    }
    catch (const Json::parse_error& e)
    {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out << text;
    if (!out)
        throw Error("write failed for " + path.string());
}

} // namespace mtrl
