#pragma once

#include <algorithm>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "agentsynth/backends.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"

namespace agentsynth {

namespace templates {

inline std::string hex_suffix(Rng& rng, int digits = 6) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%0*llx", digits,
                  static_cast<unsigned long long>(rng.next() & ((std::uint64_t{1} << (4 * digits)) - 1)));
    return buf;
}

/// "Book a hotel." -> "book a hotel".
inline std::string clause(std::string s) {
    s = text::trim(s);
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
    if (!s.empty() && s[0] >= 'A' && s[0] <= 'Z' && !(s.size() > 1 && s[1] >= 'A' && s[1] <= 'Z'))
        s[0] = static_cast<char>(s[0] - 'A' + 'a');
    return s;
}

inline json sample_value(const std::string& param, const std::string& type, Rng& rng) {
    if (type == "integer") return rng.between(1, 9);
    if (type == "number") return static_cast<double>(rng.between(10, 500));
    if (type == "boolean") return true;
    std::string stem = param;
    for (const char* suffix : {"_slot", "_id", "_name"})
        if (stem.size() > std::string(suffix).size() && stem.ends_with(suffix)) stem.resize(stem.size() - std::string(suffix).size());
    return text::replace_all(stem, "_", "-") + "-" + hex_suffix(rng);
}

inline std::string render_args(const json& args) {
    std::vector<std::string> parts;
    for (auto it = args.begin(); it != args.end(); ++it) {
        if (it.value().is_string() && text::starts_with(it.value().get<std::string>(), "{step")) continue;
        parts.push_back(it.key() + ": " + (it.value().is_string() ? it.value().get<std::string>() : it.value().dump()));
    }
    return parts.empty() ? std::string() : " (" + text::join(parts, ", ") + ")";
}

/// Query and plan for an atomic selection. Required parameters get fresh
/// values; a serial consumer takes its bound parameter from step 1.
inline std::string atomic_plan(const GenerationRequest& req) {
    Rng rng(req.seed);
    const json& p = req.payload;
    const std::string kind = p.value("kind", "isolated");
    json steps = json::array();
    json mentions = json::array();
    std::vector<std::string> clauses;
    for (std::size_t i = 0; i < p["tools"].size(); ++i) {
        const json& tool = p["tools"][i];
        const json& props = tool["parameters"]["properties"];
        json args = json::object();
        for (const auto& r : tool["parameters"]["required"]) {
            const std::string name = r.get<std::string>();
            args[name] = sample_value(name, props[name].value("type", "string"), rng);
        }
        std::string tail;
        if (kind == "serial" && i == 1) {
            for (const auto& b : p["bindings"]) {
                args[b["parameter"].get<std::string>()] = "{step1." + b["output_field"].get<std::string>() + "}";
                if (tail.empty()) tail = " using the " + b["output_field"].get<std::string>() + " from the previous step";
            }
        }
        const std::string intent = clause(tool["description"].get<std::string>()) + render_args(args) + tail;
        steps.push_back({{"tool", tool["name"]}, {"intent", intent}, {"args", args}});
        mentions.push_back(tool["name"]);
        clauses.push_back(intent);
    }
    std::string query;
    if (clauses.size() == 1) {
        query = "Please " + clauses[0] + ".";
    } else if (kind == "serial") {
        query = "First " + clauses[0] + ", then " + clauses[1] + ".";
    } else {
        query = "Please " + clauses[0] + ", and also " + clauses[1] + ".";
    }
    return dump_compact(json{{"query", query}, {"steps", steps}, {"mentions", mentions}});
}

/// Reasoning that names the golden tool and restates the step.
inline std::string reasoning(const GenerationRequest& req) {
    const json& call = req.payload["call"];
    return "The user asked to " + clause(req.payload.value("intent", "")) + ". The " +
           call["name"].get<std::string>() + " tool covers this step, so I call it with " +
           dump_compact(call["arguments"]) + ".";
}

inline std::string task_init(const GenerationRequest& req) {
    const json& reqs = req.payload["requests"];
    std::vector<std::string> known;
    for (const auto& r : reqs) known.push_back(r.get<std::string>());
    const std::string requirement = "I have " + std::to_string(reqs.size()) +
                                    " things to take care of and will explain each one as we go. The first: " +
                                    (known.empty() ? std::string("nothing yet") : known.front());
    return dump_compact(json{{"requirement", requirement},
                             {"known_info", text::join(known, " | ")},
                             {"rules", "Use only the listed tools. Ask the user for details that are missing."}});
}

/// Follows the outstanding call when there is one, otherwise replies.
inline std::string agent_step(const GenerationRequest& req) {
    const json& pending = req.payload["pending_calls"];
    if (pending.is_array() && !pending.empty()) {
        const std::string name = pending[0]["name"].get<std::string>();
        return dump_compact(json{{"think", "The next outstanding step needs " + name + "."}, {"calls", json::array({pending[0]})}});
    }
    return dump_compact(json{{"think", "Everything requested so far is handled."},
                             {"reply", "That request is done. What else can I help with?"}});
}

inline std::string next_query(const GenerationRequest& req) {
    const json& pending = req.payload["pending"];
    if (pending.is_array() && !pending.empty()) return "Next, " + pending[0].get<std::string>();
    return "Thanks, that is all.";
}

/// A variant of the seed conversation with every string argument value
/// renamed consistently across turns.
inline std::string trajectory(const GenerationRequest& req) {
    Rng rng(req.seed);
    const std::string suffix = hex_suffix(rng, 4);
    json rec = req.payload["seed"];
    std::vector<std::string> values;
    for (const auto& m : rec["conversations"]) {
        const std::string v = m.value("value", "");
        const auto open = v.find("<tool_call>");
        const auto close = v.find("</tool_call>");
        if (open == std::string::npos || close == std::string::npos || close < open) continue;
        auto call = parse_strict_json(text::trim(v.substr(open + 11, close - open - 11)));
        if (!call || !call->is_object() || !call->contains("arguments") || !(*call)["arguments"].is_object()) continue;
        for (const auto& a : (*call)["arguments"]) {
            if (!a.is_string()) continue;
            const std::string s = a.get<std::string>();
            if (s.size() < 2 || s.find_first_of("\"\\") != std::string::npos) continue;
            if (std::find(values.begin(), values.end(), s) == values.end()) values.push_back(s);
        }
    }
    std::sort(values.begin(), values.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    for (auto& m : rec["conversations"]) {
        std::string v = m.value("value", "");
        for (std::size_t i = 0; i < values.size(); ++i) v = text::replace_all(v, values[i], "\x01" + std::to_string(i) + "\x01");
        for (std::size_t i = 0; i < values.size(); ++i)
            v = text::replace_all(v, "\x01" + std::to_string(i) + "\x01", values[i] + "-" + suffix);
        m["value"] = v;
    }
    return dump_compact(rec);
}

inline std::string free_text(const GenerationRequest& req) {
    const auto lines = text::split(req.prompt, '\n');
    return "Acknowledged: " + (lines.empty() ? std::string("request") : text::trim(lines.front()));
}

}  // namespace templates

/// Deterministic generator covering every structured grammar.
inline std::unique_ptr<TemplateGenerator> make_template_generator() {
    auto gen = std::make_unique<TemplateGenerator>();
    gen->add("atomic_plan", templates::atomic_plan);
    gen->add("reasoning", templates::reasoning);
    gen->add("task_init", templates::task_init);
    gen->add("agent_step", templates::agent_step);
    gen->add("next_query", templates::next_query);
    gen->add("trajectory", templates::trajectory);
    gen->add("free_text", templates::free_text);
    return gen;
}

}  // namespace agentsynth
