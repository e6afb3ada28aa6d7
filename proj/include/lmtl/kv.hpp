#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lmtl/error.hpp"

namespace lmtl {

inline std::string_view kv_trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

// Flat "key = value" lines; '#' starts a comment, blank lines are skipped.
// Later keys may repeat (last one wins at lookup sites that want that).
inline std::vector<std::pair<std::string, std::string>> parse_kv(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t begin = 0;
    int line_no = 0;
    for (;;) {
        std::size_t end = text.find('\n', begin);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(begin, end - begin);
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = kv_trim(line);
        if (!line.empty()) {
            auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw DataError("config line " + std::to_string(line_no) + " has no '='");
            }
            auto key = kv_trim(line.substr(0, eq));
            auto val = kv_trim(line.substr(eq + 1));
            if (key.empty()) {
                throw DataError("config line " + std::to_string(line_no) + " has an empty key");
            }
            out.emplace_back(std::string(key), std::string(val));
        }
        if (end == text.size()) break;
        begin = end + 1;
    }
    return out;
}

inline uint64_t parse_u64(const std::string& s) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw DataError("bad integer value '" + s + "'");
    }
    return v;
}

inline double parse_double(const std::string& s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
        throw DataError("bad real value '" + s + "'");
    }
    return v;
}

inline bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw DataError("bad boolean value '" + s + "'");
}

// Shortest representation that round-trips.
inline std::string format_double(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

}  // namespace lmtl
