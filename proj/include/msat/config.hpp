#pragma once

// Flat `key = value` configuration text. Blank lines and lines starting
// with '#' are ignored; keys are snake_case.

#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "msat/error.hpp"

namespace msat {

using KeyValues = std::map<std::string, std::string>;

namespace detail {
inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}
}  // namespace detail

inline KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) fail(Errc::Config, "line " + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(t.substr(0, eq));
        if (key.empty()) fail(Errc::Config, "line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key)) fail(Errc::Config, "duplicate key '" + key + "'");
        kv[key] = detail::trim(t.substr(eq + 1));
    }
    return kv;
}

inline std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

/// Rejects any key not present in `known`.
inline void check_known_keys(const KeyValues& kv, const KeyValues& known) {
    for (const auto& [k, v] : kv)
        if (!known.count(k)) fail(Errc::Config, "unknown config key '" + k + "'");
}

inline long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) fail(Errc::Config, key + ": not an integer: '" + v + "'");
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    fail(Errc::Config, key + ": not a number: '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(Errc::Config, key + ": not a boolean: '" + v + "'");
}

/// Comma-separated integers.
inline std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        item = detail::trim(item);
        if (!item.empty()) out.push_back(static_cast<int>(parse_int(key, item)));
    }
    return out;
}

}  // namespace msat
