#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/text.hpp"

namespace agentsynth {

enum class TaskKind { decomposition, tool_planning, scheduling, workflow, long_horizon };

constexpr std::string_view to_string(TaskKind k) {
    switch (k) {
        case TaskKind::decomposition: return "decomposition";
        case TaskKind::tool_planning: return "tool_planning";
        case TaskKind::scheduling: return "scheduling";
        case TaskKind::workflow: return "workflow";
        case TaskKind::long_horizon: return "long_horizon";
    }
    return "decomposition";
}

inline TaskKind task_kind_from_string(std::string_view s) {
    for (auto k : {TaskKind::decomposition, TaskKind::tool_planning, TaskKind::scheduling, TaskKind::workflow,
                   TaskKind::long_horizon})
        if (to_string(k) == s) return k;
    fail(ErrorKind::InvalidArgument, "unknown task kind " + std::string(s));
}

struct ToolCall {
    std::string name;
    json arguments = json::object();

    friend bool operator==(const ToolCall& a, const ToolCall& b) {
        return a.name == b.name && a.arguments == b.arguments;
    }
};

inline json to_json(const ToolCall& c) { return {{"name", c.name}, {"arguments", c.arguments}}; }

/// A {name, arguments} object; arguments may be absent or null.
inline std::optional<ToolCall> tool_call_from_json(const json& v) {
    if (!v.is_object() || !v.contains("name") || !v["name"].is_string()) return std::nullopt;
    ToolCall c;
    c.name = v["name"].get<std::string>();
    if (c.name.empty()) return std::nullopt;
    if (v.contains("arguments") && !v["arguments"].is_null()) {
        if (!v["arguments"].is_object()) return std::nullopt;
        c.arguments = v["arguments"];
    }
    return c;
}

namespace grammar {

/// Cursor over an output string; every failure is a ParseFailure naming the
/// byte offset and what was expected there.
class Cursor {
public:
    explicit Cursor(std::string_view s) : s_(s) {}

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ >= s_.size(); }
    std::string_view rest() const { return s_.substr(pos_); }

    void skip_ws() {
        while (pos_ < s_.size() && text::is_space(s_[pos_])) ++pos_;
    }

    bool at(std::string_view lit) const { return s_.substr(pos_, lit.size()) == lit; }

    void expect(std::string_view lit) {
        if (!at(lit)) throw ParseFailure(pos_, std::string(lit));
        pos_ += lit.size();
    }

    /// Text up to (not including) `close`, then consumes `close`. Rejects a
    /// nested `open` tag inside the body.
    std::string_view until(std::string_view close, std::string_view open = {}) {
        const std::size_t end = s_.find(close, pos_);
        if (end == std::string_view::npos) throw ParseFailure(s_.size(), std::string(close));
        if (!open.empty()) {
            const std::size_t nested = s_.find(open, pos_);
            if (nested != std::string_view::npos && nested < end) throw ParseFailure(nested, std::string(close));
        }
        std::string_view body = s_.substr(pos_, end - pos_);
        pos_ = end + close.size();
        return body;
    }

    void expect_end() {
        skip_ws();
        if (!done()) throw ParseFailure(pos_, "end of input");
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
};

struct DecompositionOptions {
    bool allow_query = true;
    bool require_query = false;
    bool require_reply = true;
    bool strict_newlines = false;  // exactly "\n" between tags
};

struct Decomposition {
    std::optional<std::string> query;
    std::vector<std::string> steps;
    std::optional<std::string> reply;
};

/// Splits a <Plan> body into "Step1. ..." "Step2. ..." items. Markers must
/// be numbered contiguously from 1; a marker counts only at the body start
/// or after whitespace.
inline std::vector<std::string> parse_steps(std::string_view body, std::size_t base) {
    struct Marker {
        std::size_t at, after;
        long number;
    };
    std::vector<Marker> markers;
    std::size_t p = 0;
    while ((p = body.find("Step", p)) != std::string_view::npos) {
        const bool left_ok = p == 0 || text::is_space(body[p - 1]);
        std::size_t q = p + 4;
        long n = 0;
        std::size_t digits = 0;
        while (q < body.size() && body[q] >= '0' && body[q] <= '9' && digits < 6) {
            n = n * 10 + (body[q] - '0');
            ++q;
            ++digits;
        }
        if (left_ok && digits > 0 && q < body.size() && body[q] == '.') markers.push_back({p, q + 1, n});
        p += 4;
    }
    std::size_t lead = 0;
    while (lead < body.size() && text::is_space(body[lead])) ++lead;
    if (markers.empty() || markers.front().at != lead) throw ParseFailure(base + lead, "Step1.");
    std::vector<std::string> steps;
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const long expected = static_cast<long>(i) + 1;
        if (markers[i].number != expected) {
            throw ParseFailure(base + markers[i].at, "Step" + std::to_string(expected) + " expected");
        }
        const std::size_t end = i + 1 < markers.size() ? markers[i + 1].at : body.size();
        std::string step = text::trim(body.substr(markers[i].after, end - markers[i].after));
        if (step.empty()) throw ParseFailure(base + markers[i].after, "text for Step" + std::to_string(expected));
        steps.push_back(std::move(step));
    }
    return steps;
}

inline Decomposition parse_decomposition(std::string_view s, const DecompositionOptions& opt = {}) {
    Cursor c(s);
    Decomposition d;
    auto separator = [&] {
        if (opt.strict_newlines) {
            c.expect("\n");
        } else {
            c.skip_ws();
        }
    };
    if (!opt.strict_newlines) c.skip_ws();
    if (c.at("<Query>")) {
        if (!opt.allow_query) throw ParseFailure(c.pos(), "<Plan>");
        c.expect("<Query>");
        std::string q = text::trim(c.until("</Query>", "<Query>"));
        if (q.empty()) throw ParseFailure(c.pos(), "nonempty query");
        d.query = std::move(q);
        separator();
    } else if (opt.require_query) {
        throw ParseFailure(c.pos(), "<Query>");
    }
    c.expect("<Plan>");
    const std::size_t body_at = c.pos();
    std::string_view body = c.until("</Plan>", "<Plan>");
    d.steps = parse_steps(body, body_at);
    const std::size_t after_plan = c.pos();
    if (opt.strict_newlines && c.done()) {
        if (opt.require_reply) throw ParseFailure(c.pos(), "\n<Reply>");
        return d;
    }
    Cursor probe = c;
    probe.skip_ws();
    if (probe.done()) {
        if (opt.require_reply) throw ParseFailure(probe.pos(), "<Reply>");
        return d;
    }
    separator();
    if (!c.at("<Reply>")) throw ParseFailure(c.pos() == after_plan ? after_plan : c.pos(), "<Reply>");
    c.expect("<Reply>");
    std::string reply = text::trim(c.until("</Reply>", "<Reply>"));
    if (reply.empty()) throw ParseFailure(c.pos(), "nonempty reply");
    d.reply = std::move(reply);
    if (opt.strict_newlines) {
        if (!c.done()) throw ParseFailure(c.pos(), "end of input");
    } else {
        c.expect_end();
    }
    return d;
}

/// `<think>...</think>` followed by `<tag>body</tag>`; returns (think, body).
inline std::pair<std::string, std::string> parse_think_block(std::string_view s, std::string_view tag) {
    Cursor c(s);
    c.skip_ws();
    c.expect("<think>");
    std::string think(c.until("</think>", "<think>"));
    c.skip_ws();
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    c.expect(open);
    std::string body(c.until(close, open));
    c.expect_end();
    return {text::trim(think), text::trim(body)};
}

inline bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    for (char ch : s)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) return false;
    return true;
}

/// "ToolList:[...]" or a bare list / single call. Elements are
/// {name, arguments} objects (JSON or Python-literal) or bare tool names.
inline std::vector<ToolCall> parse_tool_list(std::string_view body, std::size_t base) {
    std::string_view content = text::trim_view(body);
    if (text::starts_with(content, "ToolList")) {
        content.remove_prefix(8);
        content = text::trim_view(content);
        if (content.empty() || content.front() != ':') throw ParseFailure(base, "':' after ToolList");
        content.remove_prefix(1);
        content = text::trim_view(content);
    }
    std::vector<ToolCall> out;
    if (auto v = parse_relaxed_json(content)) {
        if (v->is_object()) {
            auto c = tool_call_from_json(*v);
            if (!c) throw ParseFailure(base, "tool call object with a name");
            out.push_back(std::move(*c));
            return out;
        }
        if (v->is_array()) {
            for (const auto& e : *v) {
                if (e.is_string() && !e.get<std::string>().empty()) {
                    out.push_back({e.get<std::string>(), json::object()});
                    continue;
                }
                auto c = tool_call_from_json(e);
                if (!c) throw ParseFailure(base, "tool call object with a name");
                out.push_back(std::move(*c));
            }
            return out;
        }
        throw ParseFailure(base, "tool list");
    }
    if (content.size() >= 2 && content.front() == '[' && content.back() == ']') {
        for (const auto& raw : text::split(content.substr(1, content.size() - 2), ',')) {
            std::string name = text::trim(raw);
            if (!is_identifier(name)) throw ParseFailure(base, "tool name");
            out.push_back({std::move(name), json::object()});
        }
        if (!out.empty()) return out;
    }
    throw ParseFailure(base, "tool list");
}

/// Strict JSON {name, arguments}.
inline ToolCall parse_strict_tool_call(std::string_view body, std::size_t base) {
    auto v = parse_strict_json(text::trim_view(body));
    if (!v) throw ParseFailure(base, "strict JSON tool call");
    auto c = tool_call_from_json(*v);
    if (!c) throw ParseFailure(base, "tool call object with a name");
    return *c;
}

}  // namespace grammar
}  // namespace agentsynth
