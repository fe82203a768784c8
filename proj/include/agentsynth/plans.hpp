#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "agentsynth/backends.hpp"
#include "agentsynth/catalog.hpp"
#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"
#include "agentsynth/grammar.hpp"

namespace agentsynth {

/// One tool invocation inside a plan. `bound_args` maps parameter names to
/// literal values or to "{stepK.field}" placeholders; values of masked
/// parameters move to `held_out` so a later clarification can supply them.
struct SubTask {
    std::string tool;
    std::string intent;
    json bound_args = json::object();
    std::set<std::string> masked_params;
    json held_out = json::object();

    friend bool operator==(const SubTask& a, const SubTask& b) {
        return a.tool == b.tool && a.intent == b.intent && a.bound_args == b.bound_args &&
               a.masked_params == b.masked_params && a.held_out == b.held_out;
    }
};

struct AtomicPlan {
    AtomicKind kind = AtomicKind::isolated;
    std::string query;
    std::vector<SubTask> steps;
    Relation relation = Relation::none;
    std::string reply = "Plan完成";
    std::uint64_t seed = 0;
};

inline json to_json(const SubTask& t) {
    json masked = json::array();
    for (const auto& m : t.masked_params) masked.push_back(m);
    return {{"tool", t.tool},         {"intent", t.intent},     {"bound_args", t.bound_args},
            {"masked_params", masked}, {"held_out", t.held_out}};
}

inline SubTask subtask_from_json(const json& v) {
    SubTask t;
    t.tool = v.at("tool").get<std::string>();
    t.intent = v.at("intent").get<std::string>();
    if (v.contains("bound_args")) t.bound_args = v["bound_args"];
    if (v.contains("masked_params"))
        for (const auto& m : v["masked_params"]) t.masked_params.insert(m.get<std::string>());
    if (v.contains("held_out")) t.held_out = v["held_out"];
    return t;
}

inline json to_json(const AtomicPlan& p) {
    json steps = json::array();
    for (const auto& s : p.steps) steps.push_back(to_json(s));
    return {{"kind", std::string(to_string(p.kind))},
            {"query", p.query},
            {"steps", steps},
            {"relation", std::string(to_string(p.relation))},
            {"reply", p.reply},
            {"seed", p.seed}};
}

inline std::string plan_id(const AtomicPlan& p) { return "a" + text::hex64(fnv1a64(to_json(p).dump())); }

/// Checks the AtomicPlan invariants; raises MalformedGeneration.
inline void check_atomic(const AtomicPlan& p, const Catalog& catalog) {
    const std::size_t want = p.kind == AtomicKind::isolated ? 1 : 2;
    const Relation rel = p.kind == AtomicKind::isolated ? Relation::none
                         : p.kind == AtomicKind::serial ? Relation::causal
                                                        : Relation::independent;
    require(p.steps.size() == want, ErrorKind::MalformedGeneration,
            std::string(to_string(p.kind)) + " plan needs " + std::to_string(want) + " steps");
    require(p.relation == rel, ErrorKind::MalformedGeneration, "relation does not match plan kind");
    require(!text::trim(p.query).empty(), ErrorKind::MalformedGeneration, "empty query");
    for (const auto& s : p.steps) {
        require(!text::trim(s.intent).empty(), ErrorKind::MalformedGeneration, "empty intent for " + s.tool);
        const Tool* tool = catalog.find(s.tool);
        require(tool != nullptr, ErrorKind::MalformedGeneration, "unknown tool " + s.tool);
        for (auto it = s.bound_args.begin(); it != s.bound_args.end(); ++it)
            require(tool->parameter(it.key()) != nullptr, ErrorKind::MalformedGeneration,
                    "tool " + s.tool + " has no parameter " + it.key());
        for (const auto& m : s.masked_params) {
            const Parameter* prm = tool->parameter(m);
            require(prm != nullptr && prm->required, ErrorKind::MalformedGeneration, "masked parameter not required: " + m);
        }
    }
}

inline std::string atomic_prompt(const ToolSelection& sel, const Catalog& catalog) {
    std::string p = "Write a user query and its plan for a " + std::string(to_string(sel.kind)) + " task.\n";
    if (sel.kind == AtomicKind::serial) p += "The first tool's result is a prerequisite for the second.\n";
    if (sel.kind == AtomicKind::parallel) p += "Both goals are related but can run independently.\n";
    for (const auto& name : sel.tools) p += "Tool: " + to_json(catalog.at(name)).dump() + "\n";
    p += "Answer as JSON {\"query\", \"steps\": [{\"tool\", \"intent\", \"args\"}], \"reply\", \"mentions\"}.";
    return p;
}

/// Structured context handed to the generator alongside the prompt.
inline json atomic_payload(const ToolSelection& sel, const Catalog& catalog) {
    json tools = json::array();
    for (const auto& name : sel.tools) tools.push_back(to_json(catalog.at(name)));
    json bindings = json::array();
    for (const auto& b : sel.bindings) bindings.push_back({{"output_field", b.output_field}, {"parameter", b.parameter}});
    return {{"kind", std::string(to_string(sel.kind))}, {"tools", tools}, {"bindings", bindings}};
}

/// Asks the generator for a query and plan covering `sel`. The step tools
/// must match the selection in order and `mentions` must list every tool.
inline AtomicPlan synthesize_atomic(const ToolSelection& sel, const Catalog& catalog, TextGenerator& gen,
                                    std::uint64_t seed) {
    GenerationRequest req;
    req.prompt = atomic_prompt(sel, catalog);
    req.grammar = "atomic_plan";
    req.seed = seed;
    req.payload = atomic_payload(sel, catalog);
    const std::string raw = generate_checked(gen, req);
    const json v = *parse_strict_json(raw);
    auto bad = [&](const std::string& why) { fail(ErrorKind::MalformedGeneration, "prompt " + req.id() + ": " + why); };
    if (!v["query"].is_string()) bad("query must be a string");
    if (!v["steps"].is_array()) bad("steps must be an array");
    if (!v["mentions"].is_array()) bad("mentions must be an array");

    AtomicPlan plan;
    plan.kind = sel.kind;
    plan.relation = sel.relation;
    plan.seed = seed;
    plan.query = text::trim(v["query"].get<std::string>());
    if (v.contains("reply") && v["reply"].is_string() && !text::trim(v["reply"].get<std::string>()).empty())
        plan.reply = text::trim(v["reply"].get<std::string>());
    for (const auto& s : v["steps"]) {
        if (!s.is_object() || !s.contains("tool") || !s["tool"].is_string() || !s.contains("intent") ||
            !s["intent"].is_string())
            bad("each step needs tool and intent strings");
        SubTask t;
        t.tool = text::to_lower_snake(s["tool"].get<std::string>());
        t.intent = text::trim(s["intent"].get<std::string>());
        if (s.contains("args") && !s["args"].is_null()) {
            if (!s["args"].is_object()) bad("args must be an object");
            t.bound_args = normalize_arguments(s["args"]);
        }
        plan.steps.push_back(std::move(t));
    }
    if (plan.steps.size() != sel.tools.size()) bad("expected " + std::to_string(sel.tools.size()) + " steps");
    for (std::size_t i = 0; i < sel.tools.size(); ++i)
        if (plan.steps[i].tool != sel.tools[i]) bad("step " + std::to_string(i + 1) + " must use " + sel.tools[i]);
    std::set<std::string> mentioned;
    for (const auto& m : v["mentions"])
        if (m.is_string()) mentioned.insert(text::to_lower_snake(m.get<std::string>()));
    for (const auto& t : sel.tools)
        if (!mentioned.count(t)) bad("query does not cover " + t);
    try {
        check_atomic(plan, catalog);
    } catch (const Error& e) {
        bad(e.detail());
    }
    return plan;
}

enum class Operator { Concatenate, Add, Group, Mask, Transform, Split };

constexpr std::string_view to_string(Operator op) {
    switch (op) {
        case Operator::Concatenate: return "Concatenate";
        case Operator::Add: return "Add";
        case Operator::Group: return "Group";
        case Operator::Mask: return "Mask";
        case Operator::Transform: return "Transform";
        case Operator::Split: return "Split";
    }
    return "Concatenate";
}

inline Operator operator_from_string(std::string_view s) {
    for (auto op : {Operator::Concatenate, Operator::Add, Operator::Group, Operator::Mask, Operator::Transform,
                    Operator::Split})
        if (to_string(op) == s) return op;
    fail(ErrorKind::InvalidArgument, "unknown operator " + std::string(s));
}

constexpr std::size_t arity(Operator op) {
    return op == Operator::Concatenate || op == Operator::Add || op == Operator::Group ? 2 : 1;
}

struct PlanEdge {
    std::size_t from = 0;
    std::size_t to = 0;
    bool conditional = false;
    std::string condition;  // nonempty iff conditional
    std::string condition_field;

    friend bool operator==(const PlanEdge&, const PlanEdge&) = default;
};

struct ProvenanceStep {
    std::string op;  // "atomic" for leaves
    std::vector<std::string> inputs;
    std::uint64_t seed = 0;
    std::string output;

    friend bool operator==(const ProvenanceStep&, const ProvenanceStep&) = default;
};

struct Clarification {
    std::size_t node = 0;
    std::string parameter;
    friend bool operator==(const Clarification&, const Clarification&) = default;
};

struct Consolidation {
    std::string parameter;
    std::string value;
    std::vector<std::string> replaced;
    friend bool operator==(const Consolidation&, const Consolidation&) = default;
};

struct ComposedPlan {
    std::string id;
    std::vector<std::string> turns;
    std::vector<std::size_t> turn_of;  // node -> turn index
    std::vector<SubTask> nodes;
    std::vector<PlanEdge> edges;
    std::vector<ProvenanceStep> provenance;
    std::vector<Clarification> clarifications;
    std::vector<Consolidation> consolidations;
    std::string reply = "Plan完成";
    std::uint64_t seed = 0;

    std::string query() const { return text::join(turns, "\n"); }
};

inline json to_json(const ComposedPlan& p) {
    json nodes = json::array(), edges = json::array(), prov = json::array(), clar = json::array(),
         cons = json::array();
    for (const auto& n : p.nodes) nodes.push_back(to_json(n));
    for (const auto& e : p.edges) {
        json j = {{"from", e.from}, {"to", e.to}, {"kind", e.conditional ? "conditional" : "sequence"}};
        if (e.conditional) {
            j["condition"] = e.condition;
            j["condition_field"] = e.condition_field;
        }
        edges.push_back(j);
    }
    for (const auto& s : p.provenance)
        prov.push_back({{"op", s.op}, {"inputs", s.inputs}, {"seed", s.seed}, {"output", s.output}});
    for (const auto& c : p.clarifications) clar.push_back({{"node", c.node}, {"parameter", c.parameter}});
    for (const auto& c : p.consolidations)
        cons.push_back({{"parameter", c.parameter}, {"value", c.value}, {"replaced", c.replaced}});
    return {{"id", p.id},        {"turns", p.turns},           {"turn_of", p.turn_of},
            {"nodes", nodes},    {"edges", edges},             {"provenance", prov},
            {"clarifications", clar}, {"consolidations", cons}, {"reply", p.reply},
            {"seed", p.seed}};
}

/// Kahn's algorithm, smallest index first. Raises CycleDetected.
inline std::vector<std::size_t> plan_order(const ComposedPlan& p) {
    const std::size_t n = p.nodes.size();
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> out(n);
    for (const auto& e : p.edges) {
        require(e.from < n && e.to < n, ErrorKind::InvalidArgument, "edge endpoint out of range");
        out[e.from].push_back(e.to);
        ++indegree[e.to];
    }
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i)
        if (indegree[i] == 0) ready.insert(i);
    std::vector<std::size_t> order;
    while (!ready.empty()) {
        const std::size_t u = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(u);
        for (std::size_t v : out[u])
            if (--indegree[v] == 0) ready.insert(v);
    }
    if (order.size() != n) fail(ErrorKind::CycleDetected, "plan graph is cyclic");
    return order;
}

/// Structural check of a composed plan; raises on the first violation.
inline void check_plan(const ComposedPlan& p, const Catalog& catalog) {
    require(!p.nodes.empty(), ErrorKind::InvalidArgument, "plan has no nodes");
    require(!p.turns.empty(), ErrorKind::InvalidArgument, "plan has no turns");
    require(p.turn_of.size() == p.nodes.size(), ErrorKind::InvalidArgument, "turn map size mismatch");
    for (std::size_t t : p.turn_of) require(t < p.turns.size(), ErrorKind::InvalidArgument, "turn index out of range");
    for (const auto& e : p.edges)
        if (e.conditional) require(!e.condition.empty(), ErrorKind::InvalidArgument, "conditional edge without condition");
    for (const auto& n : p.nodes) {
        require(!n.intent.empty(), ErrorKind::InvalidArgument, "empty intent");
        const Tool& tool = catalog.at(n.tool);
        for (const auto& m : n.masked_params) {
            const Parameter* prm = tool.parameter(m);
            require(prm && prm->required, ErrorKind::InvalidArgument, "masked parameter not required: " + m);
        }
    }
    plan_order(p);
}

namespace detail {

inline std::string value_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

inline bool is_placeholder(const json& v) { return v.is_string() && text::starts_with(v.get<std::string>(), "{step"); }

inline std::string shift_placeholders(const std::string& s, std::size_t offset) {
    if (offset == 0 || !text::contains(s, "{step")) return s;
    static const std::regex re(R"(\{step(\d+)\.)");
    std::string out;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        out.append(s, last, static_cast<std::size_t>(m.position(0)) - last);
        out += "{step" + std::to_string(std::stoul(m[1].str()) + offset) + ".";
        last = static_cast<std::size_t>(m.position(0) + m.length(0));
    }
    out.append(s, last, std::string::npos);
    return out;
}

inline void shift_node(SubTask& t, std::size_t offset) {
    for (auto it = t.bound_args.begin(); it != t.bound_args.end(); ++it)
        if (it->is_string()) *it = shift_placeholders(it->get<std::string>(), offset);
}

/// Removes a literal from a user turn and tidies the leftover spacing.
inline std::string scrub(std::string turn, const std::string& value) {
    if (value.empty()) return turn;
    turn = text::replace_all(std::move(turn), value, "");
    while (text::contains(turn, "  ")) turn = text::replace_all(std::move(turn), "  ", " ");
    for (const char* p : {" ,", " .", " ;", " ?", " !"}) turn = text::replace_all(std::move(turn), p, std::string(p + 1));
    return text::trim(turn);
}

/// Drops a "param: value" mention whole, then any bare occurrence.
inline std::string scrub(std::string turn, const std::string& param, const std::string& value) {
    if (value.empty()) return turn;
    const std::string pair = param + ": " + value;
    for (const std::string& form : {", " + pair, pair + ", ", " (" + pair + ")", pair})
        turn = text::replace_all(std::move(turn), form, "");
    return scrub(std::move(turn), value);
}

inline std::string join_turn(const std::string& a, const std::string& b, std::string_view glue) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    std::string tail = b;
    if (tail[0] >= 'A' && tail[0] <= 'Z' && !(tail.size() > 1 && tail[1] >= 'A' && tail[1] <= 'Z'))
        tail[0] = static_cast<char>(tail[0] - 'A' + 'a');
    return a + std::string(glue) + tail;
}

inline std::string composed_id(Operator op, const std::vector<std::string>& inputs, std::uint64_t seed) {
    std::string key(to_string(op));
    for (const auto& i : inputs) key += "|" + i;
    key += "|" + std::to_string(seed);
    return "c" + text::hex64(fnv1a64(key));
}

/// Provenance of the inputs, earliest first, without duplicates.
inline std::vector<ProvenanceStep> merge_provenance(const std::vector<const ComposedPlan*>& inputs) {
    std::vector<ProvenanceStep> out;
    std::set<std::string> seen;
    for (const auto* p : inputs)
        for (const auto& s : p->provenance)
            if (seen.insert(s.output).second) out.push_back(s);
    return out;
}

inline std::vector<std::size_t> sinks(const ComposedPlan& p) {
    std::vector<bool> has_out(p.nodes.size(), false);
    for (const auto& e : p.edges) has_out[e.from] = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < p.nodes.size(); ++i)
        if (!has_out[i]) out.push_back(i);
    return out;
}

inline std::vector<std::size_t> sources(const ComposedPlan& p) {
    std::vector<bool> has_in(p.nodes.size(), false);
    for (const auto& e : p.edges) has_in[e.to] = true;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < p.nodes.size(); ++i)
        if (!has_in[i]) out.push_back(i);
    return out;
}

/// Joins two plans side by side: B's nodes, edges and turns follow A's. The
/// last turn of A and the first of B fuse with `glue`.
inline ComposedPlan juxtapose(const ComposedPlan& a, const ComposedPlan& b, std::string_view glue) {
    ComposedPlan out;
    const std::size_t off = a.nodes.size();
    out.nodes = a.nodes;
    for (auto n : b.nodes) {
        shift_node(n, off);
        out.nodes.push_back(std::move(n));
    }
    out.edges = a.edges;
    for (auto e : b.edges) {
        e.from += off;
        e.to += off;
        out.edges.push_back(e);
    }
    out.turns = a.turns;
    const std::size_t fused = a.turns.size() - 1;
    out.turns.back() = join_turn(out.turns.back(), b.turns.front(), glue);
    for (std::size_t i = 1; i < b.turns.size(); ++i) out.turns.push_back(b.turns[i]);
    out.turn_of = a.turn_of;
    for (std::size_t t : b.turn_of) out.turn_of.push_back(t + fused);
    out.clarifications = a.clarifications;
    for (auto c : b.clarifications) {
        c.node += off;
        out.clarifications.push_back(c);
    }
    out.consolidations = a.consolidations;
    out.consolidations.insert(out.consolidations.end(), b.consolidations.begin(), b.consolidations.end());
    out.reply = a.reply;
    return out;
}

inline std::string words(std::string_view identifier) { return text::replace_all(std::string(identifier), "_", " "); }

}  // namespace detail

/// Applies the six composition operators. All randomness comes from the
/// seed passed to each call.
class PlanComposer {
public:
    PlanComposer(const Catalog& catalog, const ToolGraphs& graphs) : catalog_(catalog), graphs_(graphs) {}

    const Catalog& catalog() const { return catalog_; }

    ComposedPlan lift(const AtomicPlan& a) const {
        ComposedPlan p;
        p.id = plan_id(a);
        p.turns = {a.query};
        p.nodes = a.steps;
        p.turn_of.assign(a.steps.size(), 0);
        if (a.kind == AtomicKind::serial) p.edges.push_back({0, 1, false, "", ""});
        p.reply = a.reply;
        p.seed = a.seed;
        p.provenance.push_back({"atomic", {}, a.seed, p.id});
        return p;
    }

    ComposedPlan compose(Operator op, std::span<const ComposedPlan> inputs, std::uint64_t seed) const {
        require(inputs.size() == arity(op), ErrorKind::InvalidArgument,
                std::string(to_string(op)) + " takes " + std::to_string(arity(op)) + " plan(s)");
        ComposedPlan out;
        switch (op) {
            case Operator::Concatenate: out = concatenate(inputs[0], inputs[1], seed); break;
            case Operator::Add: out = add(inputs[0], inputs[1]); break;
            case Operator::Group: out = group(inputs[0], inputs[1]); break;
            case Operator::Mask: out = mask(inputs[0], seed); break;
            case Operator::Transform: out = transform(inputs[0], seed); break;
            case Operator::Split: out = split(inputs[0], seed); break;
        }
        std::vector<std::string> ids;
        std::vector<const ComposedPlan*> ptrs;
        for (const auto& p : inputs) {
            ids.push_back(p.id);
            ptrs.push_back(&p);
        }
        out.id = detail::composed_id(op, ids, seed);
        out.seed = seed;
        out.provenance = detail::merge_provenance(ptrs);
        out.provenance.push_back({std::string(to_string(op)), ids, seed, out.id});
        check_plan(out, catalog_);
        return out;
    }

    ComposedPlan compose(Operator op, const ComposedPlan& a, std::uint64_t seed) const {
        return compose(op, std::span<const ComposedPlan>(&a, 1), seed);
    }

    ComposedPlan compose(Operator op, const ComposedPlan& a, const ComposedPlan& b, std::uint64_t seed) const {
        const std::array<ComposedPlan, 2> both{a, b};
        return compose(op, std::span<const ComposedPlan>(both), seed);
    }

private:
    static void incompatible(Operator op, const std::string& why) {
        fail(ErrorKind::IncompatibleInputs, std::string(to_string(op)) + ", \"" + why + "\"");
    }

    ComposedPlan concatenate(const ComposedPlan& a, const ComposedPlan& b, std::uint64_t seed) const {
        struct Pair {
            std::size_t tail, head;
            Binding binding;
        };
        std::vector<Pair> pairs;
        for (std::size_t t : detail::sinks(a)) {
            for (std::size_t h : detail::sources(b)) {
                const auto* e = graphs_.depend.edge(a.nodes[t].tool, b.nodes[h].tool);
                if (!e) continue;
                for (const auto& bind : e->bindings)
                    if (!b.nodes[h].masked_params.count(bind.parameter)) pairs.push_back({t, h, bind});
            }
        }
        if (pairs.empty()) incompatible(Operator::Concatenate, "no dependency-compatible head/tail pair");
        Rng rng(seed);
        const Pair chosen = rng.pick(pairs);
        ComposedPlan out = detail::juxtapose(a, b, " Then, ");
        const std::size_t head = chosen.head + a.nodes.size();
        auto& consumer = out.nodes[head];
        const std::string placeholder = "{step" + std::to_string(chosen.tail + 1) + "." + chosen.binding.output_field + "}";
        if (consumer.bound_args.contains(chosen.binding.parameter)) {
            const json old = consumer.bound_args[chosen.binding.parameter];
            if (!detail::is_placeholder(old)) {
                const std::string lit = detail::value_text(old);
                const std::string ref = "the " + detail::words(chosen.binding.output_field) + " from the previous step";
                for (std::size_t t = a.turns.size() - 1; t < out.turns.size(); ++t)
                    out.turns[t] = text::replace_all(out.turns[t], lit, ref);
                consumer.intent = text::replace_all(consumer.intent, lit, ref);
            }
        }
        consumer.bound_args[chosen.binding.parameter] = placeholder;
        out.edges.push_back({chosen.tail, head, false, "", ""});
        return out;
    }

    bool related(const std::string& x, const std::string& y) const {
        return graphs_.share.edge(x, y) || graphs_.depend.edge(x, y) || graphs_.depend.edge(y, x);
    }

    ComposedPlan add(const ComposedPlan& a, const ComposedPlan& b) const {
        for (const auto& x : a.nodes)
            for (const auto& y : b.nodes)
                if (x.tool == y.tool) incompatible(Operator::Add, "tool overlap");
        for (const auto& x : a.nodes)
            for (const auto& y : b.nodes)
                if (related(x.tool, y.tool)) incompatible(Operator::Add, "inputs share parameters or data flow");
        return detail::juxtapose(a, b, " Also, ");
    }

    ComposedPlan group(const ComposedPlan& a, const ComposedPlan& b) const {
        std::map<std::string, std::string> a_values;
        for (const auto& n : a.nodes)
            for (auto it = n.bound_args.begin(); it != n.bound_args.end(); ++it)
                if (!detail::is_placeholder(*it) && !a_values.count(it.key())) a_values[it.key()] = detail::value_text(*it);
        std::set<std::string> shared;
        for (const auto& n : b.nodes)
            for (auto it = n.bound_args.begin(); it != n.bound_args.end(); ++it)
                if (a_values.count(it.key()) && !detail::is_placeholder(*it)) shared.insert(it.key());
        if (shared.empty()) incompatible(Operator::Group, "no shared parameter");
        ComposedPlan out = detail::juxtapose(a, b, " And ");
        const std::size_t off = a.nodes.size();
        const std::size_t first_b_turn = a.turns.size() - 1;
        for (const auto& param : shared) {
            Consolidation c{param, a_values[param], {}};
            for (std::size_t i = off; i < out.nodes.size(); ++i) {
                auto& n = out.nodes[i];
                if (!n.bound_args.contains(param) || detail::is_placeholder(n.bound_args[param])) continue;
                const std::string old = detail::value_text(n.bound_args[param]);
                if (old != c.value) {
                    c.replaced.push_back(old);
                    n.intent = text::replace_all(n.intent, old, c.value);
                    for (std::size_t t = first_b_turn; t < out.turns.size(); ++t)
                        out.turns[t] = text::replace_all(out.turns[t], old, c.value);
                }
                n.bound_args[param] = c.value;
            }
            out.consolidations.push_back(std::move(c));
        }
        return out;
    }

    ComposedPlan mask(const ComposedPlan& a, std::uint64_t seed) const {
        struct Candidate {
            std::size_t node;
            std::string param;
        };
        std::vector<Candidate> candidates;
        for (std::size_t i = 0; i < a.nodes.size(); ++i) {
            const auto& n = a.nodes[i];
            for (const auto& p : catalog_.at(n.tool).parameters) {
                if (!p.required || n.masked_params.count(p.name)) continue;
                if (n.bound_args.contains(p.name) && detail::is_placeholder(n.bound_args[p.name])) continue;
                candidates.push_back({i, p.name});
            }
        }
        if (candidates.empty()) fail(ErrorKind::NothingToMask, "no unmasked required parameter");
        Rng rng(seed);
        const Candidate c = rng.pick(candidates);
        ComposedPlan out = a;
        auto& n = out.nodes[c.node];
        n.masked_params.insert(c.param);
        if (n.bound_args.contains(c.param)) {
            const std::string value = detail::value_text(n.bound_args[c.param]);
            n.held_out[c.param] = n.bound_args[c.param];
            n.bound_args.erase(c.param);
            n.intent = text::replace_all(n.intent, value, "[" + c.param + "]");
            for (auto& t : out.turns) t = detail::scrub(t, c.param, value);
            for (auto& other : out.nodes) other.intent = text::replace_all(other.intent, value, "[" + c.param + "]");
        }
        out.clarifications.push_back({c.node, c.param});
        return out;
    }

    /// Success-like output fields become "indicates success" conditions,
    /// anything else "is non-empty".
    static std::optional<std::pair<std::string, std::string>> condition_for(const Tool& upstream) {
        if (upstream.output_schema.empty()) return std::nullopt;
        for (const auto& f : upstream.output_schema)
            if (text::contains(f.name, "status") || text::contains(f.name, "success") || f.type == "boolean")
                return std::make_pair(f.name, "if " + f.name + " indicates success");
        const auto& f = upstream.output_schema.front();
        return std::make_pair(f.name, "if " + f.name + " is non-empty");
    }

    ComposedPlan transform(const ComposedPlan& a, std::uint64_t seed) const {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < a.edges.size(); ++i)
            if (!a.edges[i].conditional && condition_for(catalog_.at(a.nodes[a.edges[i].from].tool))) candidates.push_back(i);
        if (candidates.empty()) incompatible(Operator::Transform, "no sequence edge with an upstream output schema");
        Rng rng(seed);
        const std::size_t k = rng.pick(candidates);
        ComposedPlan out = a;
        auto& e = out.edges[k];
        const auto cond = *condition_for(catalog_.at(a.nodes[e.from].tool));
        e.conditional = true;
        e.condition_field = cond.first;
        e.condition = cond.second;
        auto& turn = out.turns[out.turn_of[e.to]];
        turn += " Only continue " + cond.second + ".";
        return out;
    }

    ComposedPlan split(const ComposedPlan& a, std::uint64_t seed) const {
        std::vector<std::size_t> splittable;
        for (std::size_t t = 0; t < a.turns.size(); ++t)
            if (std::count(a.turn_of.begin(), a.turn_of.end(), t) >= 2) splittable.push_back(t);
        if (splittable.empty()) incompatible(Operator::Split, "no turn spans two sub-tasks");
        Rng rng(seed);
        const std::size_t turn = rng.pick(splittable);
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < a.nodes.size(); ++i)
            if (a.turn_of[i] == turn) members.push_back(i);
        const std::size_t cut = 1 + rng.index(members.size() - 1);
        std::vector<std::size_t> first(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(cut));
        std::vector<std::size_t> second(members.begin() + static_cast<std::ptrdiff_t>(cut), members.end());

        auto rebuild = [&](const std::vector<std::size_t>& group) {
            std::vector<std::string> parts;
            for (std::size_t i : group) {
                const auto& n = a.nodes[i];
                std::string part = n.intent;
                for (auto it = n.bound_args.begin(); it != n.bound_args.end(); ++it) {
                    if (detail::is_placeholder(*it)) continue;
                    const std::string v = detail::value_text(*it);
                    if (!text::contains(part, v)) part += " (" + it.key() + ": " + v + ")";
                }
                for (const auto& e : a.edges)
                    if (e.to == i && e.conditional) part += ", only " + e.condition;
                parts.push_back(part);
            }
            return text::join(parts, ". ") + ".";
        };

        ComposedPlan out = a;
        out.turns.clear();
        for (std::size_t t = 0; t < a.turns.size(); ++t) {
            if (t == turn) {
                out.turns.push_back(rebuild(first));
                out.turns.push_back(rebuild(second));
            } else {
                out.turns.push_back(a.turns[t]);
            }
        }
        for (std::size_t i = 0; i < a.nodes.size(); ++i) {
            const std::size_t t = a.turn_of[i];
            if (t < turn) {
                out.turn_of[i] = t;
            } else if (t > turn) {
                out.turn_of[i] = t + 1;
            } else {
                out.turn_of[i] = std::find(second.begin(), second.end(), i) != second.end() ? t + 1 : t;
            }
        }
        return out;
    }

    const Catalog& catalog_;
    const ToolGraphs& graphs_;
};

/// Re-applies a provenance log to the atomic plans it started from.
/// Returns the plan produced by the last entry.
inline ComposedPlan replay_provenance(const PlanComposer& composer, const std::vector<AtomicPlan>& atoms,
                                      const std::vector<ProvenanceStep>& log) {
    std::map<std::string, ComposedPlan> plans;
    for (const auto& a : atoms) {
        auto lifted = composer.lift(a);
        plans.emplace(lifted.id, std::move(lifted));
    }
    require(!log.empty(), ErrorKind::InvalidArgument, "empty provenance");
    std::string last;
    for (const auto& step : log) {
        last = step.output;
        if (step.op == "atomic") {
            require(plans.count(step.output) > 0, ErrorKind::InvalidArgument, "unknown atomic plan " + step.output);
            continue;
        }
        std::vector<ComposedPlan> inputs;
        for (const auto& id : step.inputs) {
            auto it = plans.find(id);
            require(it != plans.end(), ErrorKind::InvalidArgument, "provenance input " + id + " not yet built");
            inputs.push_back(it->second);
        }
        auto out = composer.compose(operator_from_string(step.op), std::span<const ComposedPlan>(inputs), step.seed);
        require(out.id == step.output, ErrorKind::ConsistencyFailure, "replay produced " + out.id + " for " + step.output);
        plans.insert_or_assign(out.id, std::move(out));
    }
    return plans.at(last);
}

struct CompositionConfig {
    std::size_t max_depth = 4;
    std::array<double, 6> weights{1, 1, 1, 1, 1, 1};  // Operator order
    std::size_t attempts_per_level = 6;
};

/// Draws a composition of depth 1..max_depth over `pool`. Operators whose
/// preconditions fail are redrawn; a level with no applicable operator ends
/// the composition early.
inline ComposedPlan compose_random(const PlanComposer& composer, const std::vector<AtomicPlan>& pool,
                                   const CompositionConfig& cfg, std::uint64_t seed) {
    require(!pool.empty(), ErrorKind::InvalidArgument, "empty atomic pool");
    require(cfg.max_depth >= 1, ErrorKind::ConfigError, "max_depth must be at least 1");
    double total = 0;
    for (double w : cfg.weights) {
        require(w >= 0, ErrorKind::ConfigError, "operator weights must be nonnegative");
        total += w;
    }
    require(total > 0, ErrorKind::ConfigError, "operator weights sum to zero");
    Rng rng(seed);
    ComposedPlan current = composer.lift(pool[rng.index(pool.size())]);
    const std::size_t depth = static_cast<std::size_t>(rng.between(1, static_cast<std::int64_t>(cfg.max_depth)));
    for (std::size_t level = 0; level < depth; ++level) {
        for (std::size_t attempt = 0; attempt < cfg.attempts_per_level; ++attempt) {
            double r = rng.unit() * total;
            std::size_t k = 0;
            while (k + 1 < cfg.weights.size() && r >= cfg.weights[k]) r -= cfg.weights[k++];
            const auto op = static_cast<Operator>(k);
            const std::uint64_t op_seed = derive_seed(seed, "compose", level * 64 + attempt);
            try {
                if (arity(op) == 2) {
                    const ComposedPlan partner = composer.lift(pool[rng.index(pool.size())]);
                    current = composer.compose(op, current, partner, op_seed);
                } else {
                    current = composer.compose(op, current, op_seed);
                }
                break;
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::IncompatibleInputs && e.kind() != ErrorKind::NothingToMask) throw;
            }
        }
    }
    return current;
}

/// Step texts in execution order, with a clarification step before every
/// node that has masked parameters.
inline std::vector<std::string> plan_steps(const ComposedPlan& p, const std::vector<std::size_t>* only = nullptr) {
    std::vector<std::size_t> step_of(p.nodes.size(), 0);
    std::vector<std::string> steps;
    for (std::size_t i : plan_order(p)) {
        if (only && std::find(only->begin(), only->end(), i) == only->end()) continue;
        std::vector<std::string> asked;
        for (const auto& c : p.clarifications)
            if (c.node == i) asked.push_back(c.parameter);
        if (!asked.empty()) steps.push_back("Ask the user for the missing " + text::join(asked, ", "));
        std::string s = p.nodes[i].intent;
        for (const auto& e : p.edges)
            if (e.to == i && e.conditional && step_of[e.from] > 0)
                s += ", " + e.condition + " in Step" + std::to_string(step_of[e.from]);
        steps.push_back(std::move(s));
        step_of[i] = steps.size();
    }
    return steps;
}

inline std::string render_plan_body(const std::vector<std::string>& steps) {
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) out += "\n";
        out += "Step" + std::to_string(i + 1) + ". " + steps[i];
    }
    return out;
}

/// `<Query>q</Query>\n<Plan>Step1. ...</Plan>\n<Reply>r</Reply>`; turns of a
/// multi-turn query are joined by newlines.
inline std::string render_sample(const ComposedPlan& p) {
    return "<Query>" + p.query() + "</Query>\n<Plan>" + render_plan_body(plan_steps(p)) + "</Plan>\n<Reply>" + p.reply +
           "</Reply>";
}

inline std::string render_sample(const AtomicPlan& a) {
    ComposedPlan p;
    p.turns = {a.query};
    p.nodes = a.steps;
    p.turn_of.assign(a.steps.size(), 0);
    if (a.kind == AtomicKind::serial) p.edges.push_back({0, 1, false, "", ""});
    p.reply = a.reply;
    return render_sample(p);
}

/// Chat form: one user message per turn, each answered by the plan so far.
inline json render_chat(const ComposedPlan& p) {
    json messages = json::array();
    std::vector<std::size_t> upto;
    for (std::size_t t = 0; t < p.turns.size(); ++t) {
        for (std::size_t i = 0; i < p.nodes.size(); ++i)
            if (p.turn_of[i] == t) upto.push_back(i);
        messages.push_back({{"role", "user"}, {"content", p.turns[t]}});
        messages.push_back({{"role", "assistant"},
                            {"content", "<Plan>" + render_plan_body(plan_steps(p, &upto)) + "</Plan>\n<Reply>" +
                                            p.reply + "</Reply>"}});
    }
    return {{"messages", messages}};
}

/// JSONL record {query, plan_text, provenance, seed}.
inline json sample_record(const ComposedPlan& p) {
    json prov = json::array();
    for (const auto& s : p.provenance)
        prov.push_back({{"op", s.op}, {"inputs", s.inputs}, {"seed", s.seed}, {"output", s.output}});
    return {{"id", p.id}, {"query", p.query()}, {"plan_text", render_sample(p)}, {"provenance", prov}, {"seed", p.seed}};
}

}  // namespace agentsynth
