#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "agentsynth/core/text.hpp"

namespace agentsynth {

using json = nlohmann::json;

namespace detail {

/// Recursive-descent reader for JSON plus the Python-literal dialect tool
/// payloads are often written in ('single quotes', True/False/None).
class RelaxedJsonReader {
public:
    explicit RelaxedJsonReader(std::string_view s) : s_(s) {}

    std::optional<json> read_document() {
        auto v = value(0);
        if (!v) return std::nullopt;
        ws();
        if (pos_ != s_.size()) return std::nullopt;
        return v;
    }

private:
    static constexpr int kMaxDepth = 128;

    void ws() {
        while (pos_ < s_.size() && text::is_space(s_[pos_])) ++pos_;
    }

    bool eat(char c) {
        ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    bool keyword(std::string_view kw) {
        if (s_.substr(pos_, kw.size()) == kw) {
            pos_ += kw.size();
            return true;
        }
        return false;
    }

    std::optional<json> value(int depth) {
        if (depth > kMaxDepth) return std::nullopt;
        ws();
        if (pos_ >= s_.size()) return std::nullopt;
        const char c = s_[pos_];
        if (c == '{') return object(depth);
        if (c == '[') return array(depth);
        if (c == '"' || c == '\'') {
            auto str = string();
            if (!str) return std::nullopt;
            return json(*str);
        }
        if (keyword("true") || keyword("True")) return json(true);
        if (keyword("false") || keyword("False")) return json(false);
        if (keyword("null") || keyword("None")) return json(nullptr);
        return number();
    }

    std::optional<json> object(int depth) {
        ++pos_;
        json obj = json::object();
        if (eat('}')) return obj;
        while (true) {
            ws();
            if (pos_ >= s_.size() || (s_[pos_] != '"' && s_[pos_] != '\'')) return std::nullopt;
            auto key = string();
            if (!key || !eat(':')) return std::nullopt;
            auto v = value(depth + 1);
            if (!v) return std::nullopt;
            obj[*key] = std::move(*v);
            if (eat(',')) continue;
            if (eat('}')) return obj;
            return std::nullopt;
        }
    }

    std::optional<json> array(int depth) {
        ++pos_;
        json arr = json::array();
        if (eat(']')) return arr;
        while (true) {
            auto v = value(depth + 1);
            if (!v) return std::nullopt;
            arr.push_back(std::move(*v));
            if (eat(',')) continue;
            if (eat(']')) return arr;
            return std::nullopt;
        }
    }

    static void append_utf8(std::string& out, unsigned cp) {
        if (cp < 0x80) {
            out.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else if (cp < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }

    std::optional<std::string> string() {
        const char quote = s_[pos_++];
        std::string out;
        while (pos_ < s_.size()) {
            const char c = s_[pos_++];
            if (c == quote) return out;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (pos_ >= s_.size()) return std::nullopt;
            const char e = s_[pos_++];
            switch (e) {
                case 'n': out.push_back('\n'); break;
                case 't': out.push_back('\t'); break;
                case 'r': out.push_back('\r'); break;
                case 'b': out.push_back('\b'); break;
                case 'f': out.push_back('\f'); break;
                case 'u': {
                    if (pos_ + 4 > s_.size()) return std::nullopt;
                    unsigned cp = 0;
                    for (int k = 0; k < 4; ++k) {
                        const char h = s_[pos_++];
                        cp <<= 4;
                        if (h >= '0' && h <= '9') cp |= static_cast<unsigned>(h - '0');
                        else if (h >= 'a' && h <= 'f') cp |= static_cast<unsigned>(h - 'a' + 10);
                        else if (h >= 'A' && h <= 'F') cp |= static_cast<unsigned>(h - 'A' + 10);
                        else return std::nullopt;
                    }
                    append_utf8(out, cp);
                    break;
                }
                default: out.push_back(e); break;
            }
        }
        return std::nullopt;
    }

    std::optional<json> number() {
        const std::size_t start = pos_;
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) ++pos_;
        bool digits = false, real = false;
        while (pos_ < s_.size()) {
            const char c = s_[pos_];
            if (c >= '0' && c <= '9') {
                digits = true;
            } else if (c == '.' || c == 'e' || c == 'E' || ((c == '-' || c == '+') && real)) {
                real = true;
            } else {
                break;
            }
            ++pos_;
        }
        if (!digits) return std::nullopt;
        const std::string tok(s_.substr(start, pos_ - start));
        try {
            if (!real) return json(std::stoll(tok));
            return json(std::stod(tok));
        } catch (...) {
            return std::nullopt;
        }
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Strict JSON when possible, Python-literal dialect otherwise.
inline std::optional<json> parse_relaxed_json(std::string_view s) {
    auto strict = json::parse(s.begin(), s.end(), nullptr, false);
    if (!strict.is_discarded()) return strict;
    return detail::RelaxedJsonReader(s).read_document();
}

inline std::optional<json> parse_strict_json(std::string_view s) {
    auto v = json::parse(s.begin(), s.end(), nullptr, false);
    if (v.is_discarded()) return std::nullopt;
    return v;
}

/// Argument normalization used before equality checks: null members are
/// pruned, strings trimmed, integral doubles folded to integers so that
/// numbers compare numerically. Object keys are already sorted.
inline json normalize_arguments(const json& v) {
    if (v.is_object()) {
        json out = json::object();
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (it.value().is_null()) continue;
            out[it.key()] = normalize_arguments(it.value());
        }
        return out;
    }
    if (v.is_array()) {
        json out = json::array();
        for (const auto& e : v) out.push_back(normalize_arguments(e));
        return out;
    }
    if (v.is_string()) return json(text::trim(v.get<std::string>()));
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 9.0e15) {
            return json(static_cast<long long>(d));
        }
        return v;
    }
    if (v.is_number_unsigned()) return json(static_cast<long long>(v.get<unsigned long long>()));
    return v;
}

inline std::string dump_compact(const json& v) { return v.dump(-1, ' ', false, json::error_handler_t::replace); }

/// Python-literal rendering: single-quoted strings, True/False/None.
inline std::string to_python_literal(const json& v) {
    switch (v.type()) {
        case json::value_t::null: return "None";
        case json::value_t::boolean: return v.get<bool>() ? "True" : "False";
        case json::value_t::string: {
            std::string out = "'";
            for (char c : v.get_ref<const std::string&>()) {
                if (c == '\\' || c == '\'') out += '\\';
                if (c == '\n') {
                    out += "\\n";
                    continue;
                }
                out += c;
            }
            return out + "'";
        }
        case json::value_t::array: {
            std::string out = "[";
            for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + to_python_literal(v[i]);
            return out + "]";
        }
        case json::value_t::object: {
            std::string out = "{";
            bool first = true;
            for (auto it = v.begin(); it != v.end(); ++it) {
                if (!first) out += ", ";
                first = false;
                out += to_python_literal(json(it.key())) + ": " + to_python_literal(*it);
            }
            return out + "}";
        }
        default: return v.dump();
    }
}

}  // namespace agentsynth
