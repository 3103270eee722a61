#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

#include "verlab/error.hpp"

namespace verlab::detail {

using json = nlohmann::json;

// nlohmann::json objects are std::map backed, so keys come out sorted.
inline std::string canonical_dump(const json& doc) { return doc.dump(2) + "\n"; }
inline std::string compact_dump(const json& doc) { return doc.dump(); }

inline json parse_json(std::string_view text, std::string_view what) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw FormatError(std::string(what) + ": invalid JSON: " + e.what());
    }
}

inline std::string field_path(std::string_view parent, std::string_view key) {
    return std::string(parent) + "." + std::string(key);
}

inline const json& require(const json& obj, std::string_view parent, std::string_view key) {
    if (!obj.is_object()) {
        throw FormatError(std::string(parent) + ": expected object");
    }
    auto it = obj.find(std::string(key));
    if (it == obj.end()) {
        throw FormatError(field_path(parent, key) + ": missing field");
    }
    return *it;
}

inline std::int64_t require_int(const json& obj, std::string_view parent, std::string_view key) {
    const json& v = require(obj, parent, key);
    if (!v.is_number_integer()) {
        throw FormatError(field_path(parent, key) + ": expected integer");
    }
    return v.get<std::int64_t>();
}

inline std::int64_t require_int_at_least(const json& obj, std::string_view parent, std::string_view key,
                                         std::int64_t min) {
    const std::int64_t v = require_int(obj, parent, key);
    if (v < min) {
        throw FormatError(field_path(parent, key) + ": must be >= " + std::to_string(min));
    }
    return v;
}

inline double require_number(const json& obj, std::string_view parent, std::string_view key) {
    const json& v = require(obj, parent, key);
    if (!v.is_number()) {
        throw FormatError(field_path(parent, key) + ": expected number");
    }
    return v.get<double>();
}

inline std::string require_string(const json& obj, std::string_view parent, std::string_view key) {
    const json& v = require(obj, parent, key);
    if (!v.is_string()) {
        throw FormatError(field_path(parent, key) + ": expected string");
    }
    return v.get<std::string>();
}

}  // namespace verlab::detail
