#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "vlearn/error.hpp"

namespace vlearn::text {

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw FormatError("cannot format number");
    return std::string(buf, end);
}

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

inline double parse_double(std::string_view s) {
    s = trim(s);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("not a number: '" + std::string(s) + "'");
    return value;
}

template <typename Int>
Int parse_int(std::string_view s) {
    s = trim(s);
    Int value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw FormatError("not an integer: '" + std::string(s) + "'");
    return value;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::vector<double> parse_doubles(std::string_view s, char sep = ',') {
    std::vector<double> out;
    for (auto part : split(s, sep)) out.push_back(parse_double(part));
    return out;
}

inline std::string join_doubles(const double* values, std::size_t n, char sep = ',') {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out += sep;
        out += format_double(values[i]);
    }
    return out;
}

/// Ordered `key = value` map; `#` starts a comment.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues read_key_values(std::istream& in) {
    KeyValues kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = trim(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos)
            throw FormatError("line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key(trim(view.substr(0, eq)));
        if (key.empty()) throw FormatError("line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key)) throw FormatError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        kv.emplace(std::move(key), std::string(trim(view.substr(eq + 1))));
    }
    return kv;
}

inline void write_key_values(std::ostream& out, const KeyValues& kv) {
    for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
}

/// 64-bit FNV-1a; used to fingerprint artifacts in reports.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace vlearn::text
