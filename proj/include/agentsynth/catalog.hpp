#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"

namespace agentsynth {

struct Parameter {
    std::string name;
    std::string type = "string";
    bool required = false;
    std::string description;
};

struct OutputField {
    std::string name;
    std::string type = "string";
    std::string description;
};

/// A normalized tool definition. Names are lower_snake; `flags` lists
/// descriptions that were missing on optional parameters (never invented).
struct Tool {
    std::string name;
    std::string description;
    std::vector<Parameter> parameters;
    std::vector<OutputField> output_schema;
    std::string domain_tag;
    std::vector<std::string> flags;

    const Parameter* parameter(std::string_view n) const {
        for (const auto& p : parameters)
            if (p.name == n) return &p;
        return nullptr;
    }

    std::vector<std::string> required_parameters() const {
        std::vector<std::string> out;
        for (const auto& p : parameters)
            if (p.required) out.push_back(p.name);
        return out;
    }

    const OutputField* output(std::string_view n) const {
        for (const auto& f : output_schema)
            if (f.name == n) return &f;
        return nullptr;
    }
};

namespace detail {

inline std::string schema_type(const json& node) {
    if (!node.is_object() || !node.contains("type")) return "string";
    const json& t = node["type"];
    if (t.is_string()) return text::to_lower_ascii(text::trim(t.get<std::string>()));
    if (t.is_array() && !t.empty() && t[0].is_string()) return text::to_lower_ascii(t[0].get<std::string>());
    return "string";
}

inline std::string string_field(const json& node, std::string_view key) {
    if (!node.is_object()) return {};
    auto it = node.find(std::string(key));
    if (it == node.end() || !it->is_string()) return {};
    return text::trim(it->get<std::string>());
}

struct RawField {
    std::string name;
    json schema;
    std::optional<bool> required;
};

/// Flattens the three parameter layouts we accept: a list of
/// {name,type,required,description}, an object schema with `properties`
/// and `required`, or a bare {name: schema} map.
inline std::vector<RawField> raw_fields(const json& node, std::string_view where) {
    std::vector<RawField> out;
    if (node.is_null()) return out;
    if (node.is_array()) {
        for (std::size_t i = 0; i < node.size(); ++i) {
            const json& item = node[i];
            if (item.is_string()) {
                out.push_back({item.get<std::string>(), json::object(), std::nullopt});
                continue;
            }
            if (!item.is_object() || !item.contains("name") || !item["name"].is_string()) {
                fail(ErrorKind::MalformedSchema, std::string(where) + "[" + std::to_string(i) + "]");
            }
            std::optional<bool> req;
            if (item.contains("required") && item["required"].is_boolean()) req = item["required"].get<bool>();
            out.push_back({item["name"].get<std::string>(), item, req});
        }
        return out;
    }
    if (!node.is_object()) fail(ErrorKind::MalformedSchema, std::string(where));
    if (node.contains("properties")) {
        const json& props = node["properties"];
        if (!props.is_object()) fail(ErrorKind::MalformedSchema, std::string(where) + ".properties");
        std::set<std::string> required;
        if (node.contains("required")) {
            if (!node["required"].is_array()) fail(ErrorKind::MalformedSchema, std::string(where) + ".required");
            for (const auto& r : node["required"]) {
                if (!r.is_string()) fail(ErrorKind::MalformedSchema, std::string(where) + ".required");
                required.insert(r.get<std::string>());
            }
        }
        for (auto it = props.begin(); it != props.end(); ++it) {
            out.push_back({it.key(), it.value(), required.count(it.key()) > 0});
        }
        for (const auto& r : required) {
            if (!props.contains(r)) fail(ErrorKind::MalformedSchema, std::string(where) + ".required." + r);
        }
        return out;
    }
    if (node.contains("type") && node["type"].is_string() && node.size() <= 2) return out;
    for (auto it = node.begin(); it != node.end(); ++it) {
        if (!it.value().is_object()) fail(ErrorKind::MalformedSchema, std::string(where) + "." + it.key());
        std::optional<bool> req;
        if (it.value().contains("required") && it.value()["required"].is_boolean())
            req = it.value()["required"].get<bool>();
        out.push_back({it.key(), it.value(), req});
    }
    return out;
}

}  // namespace detail

/// Normalizes a loosely structured tool record (OpenAI function schema,
/// optionally wrapped in {"type":"function","function":...}).
inline Tool normalize_tool(const json& raw_in) {
    if (!raw_in.is_object()) fail(ErrorKind::MalformedSchema, "record");
    const json& raw = raw_in.contains("function") && raw_in["function"].is_object() ? raw_in["function"] : raw_in;

    Tool tool;
    tool.name = text::to_lower_snake(detail::string_field(raw, "name"));
    if (tool.name.empty()) fail(ErrorKind::MissingName, "name");
    tool.description = detail::string_field(raw, "description");
    if (tool.description.empty()) fail(ErrorKind::MalformedSchema, "description");
    for (const char* key : {"domain_tag", "domain", "category"}) {
        if (tool.domain_tag.empty()) tool.domain_tag = detail::string_field(raw, key);
    }

    std::set<std::string> seen;
    const json params = raw.contains("parameters") ? raw["parameters"] : json();
    for (const auto& f : detail::raw_fields(params, "parameters")) {
        Parameter p;
        p.name = text::to_lower_snake(f.name);
        if (p.name.empty()) fail(ErrorKind::MalformedSchema, "parameters.<unnamed>");
        if (!seen.insert(p.name).second) fail(ErrorKind::DuplicateParameter, p.name);
        p.type = detail::schema_type(f.schema);
        p.required = f.required.value_or(false);
        p.description = detail::string_field(f.schema, "description");
        if (p.description.empty()) {
            if (p.required) fail(ErrorKind::MalformedSchema, "parameters." + p.name + ".description");
            tool.flags.push_back("parameters." + p.name + ".description missing");
        }
        tool.parameters.push_back(std::move(p));
    }

    std::set<std::string> seen_out;
    json outputs;
    for (const char* key : {"returns", "output_schema", "outputs"}) {
        if (raw.contains(key)) {
            outputs = raw[key];
            break;
        }
    }
    for (const auto& f : detail::raw_fields(outputs, "returns")) {
        OutputField o;
        o.name = text::to_lower_snake(f.name);
        if (o.name.empty()) fail(ErrorKind::MalformedSchema, "returns.<unnamed>");
        if (!seen_out.insert(o.name).second) fail(ErrorKind::MalformedSchema, "returns." + o.name + " duplicated");
        o.type = detail::schema_type(f.schema);
        o.description = detail::string_field(f.schema, "description");
        tool.output_schema.push_back(std::move(o));
    }
    return tool;
}

inline json to_json(const Tool& tool) {
    json props = json::object();
    json required = json::array();
    for (const auto& p : tool.parameters) {
        props[p.name] = {{"type", p.type}, {"description", p.description}};
        if (p.required) required.push_back(p.name);
    }
    json returns = json::array();
    for (const auto& f : tool.output_schema) {
        returns.push_back({{"name", f.name}, {"type", f.type}, {"description", f.description}});
    }
    json out = {{"name", tool.name},
                {"description", tool.description},
                {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}},
                {"returns", returns}};
    if (!tool.domain_tag.empty()) out["domain"] = tool.domain_tag;
    return out;
}

/// A set of tools with unique names, stored and iterated in name order.
class Catalog {
public:
    Catalog() = default;

    explicit Catalog(std::vector<Tool> tools) : tools_(std::move(tools)) {
        std::sort(tools_.begin(), tools_.end(), [](const Tool& a, const Tool& b) { return a.name < b.name; });
        for (std::size_t i = 0; i < tools_.size(); ++i) {
            if (!index_.emplace(tools_[i].name, i).second) fail(ErrorKind::DuplicateTool, tools_[i].name);
        }
    }

    const std::vector<Tool>& tools() const { return tools_; }
    std::size_t size() const { return tools_.size(); }
    bool empty() const { return tools_.empty(); }

    const Tool* find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        return it == index_.end() ? nullptr : &tools_[it->second];
    }

    const Tool& at(std::string_view name) const {
        const Tool* t = find(name);
        if (!t) fail(ErrorKind::InvalidArgument, "unknown tool " + std::string(name));
        return *t;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(tools_.size());
        for (const auto& t : tools_) out.push_back(t.name);
        return out;
    }

private:
    std::vector<Tool> tools_;
    std::map<std::string, std::size_t> index_;
};

/// One tool record per line; blank lines are skipped. Errors name the line.
inline Catalog load_catalog_jsonl(std::istream& in) {
    std::vector<Tool> tools;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim_view(line).empty()) continue;
        auto record = parse_strict_json(line);
        if (!record) fail(ErrorKind::MalformedSchema, "line " + std::to_string(lineno) + ": invalid JSON");
        try {
            tools.push_back(normalize_tool(*record));
        } catch (const Error& e) {
            throw Error(e.kind(), "line " + std::to_string(lineno) + ": " + e.detail());
        }
    }
    return Catalog(std::move(tools));
}

struct Binding {
    std::string output_field;
    std::string parameter;
    friend bool operator==(const Binding&, const Binding&) = default;
};

struct DependencyEdge {
    std::string producer;
    std::string consumer;
    std::vector<Binding> bindings;
    friend bool operator==(const DependencyEdge&, const DependencyEdge&) = default;
};

struct SharingEdge {
    std::string a;  // a < b
    std::string b;
    std::vector<std::string> shared;
    friend bool operator==(const SharingEdge&, const SharingEdge&) = default;
};

/// Directed producer -> consumer graph. Edges are kept sorted by
/// (producer, consumer); adjacency is keyed by tool id.
class DependencyGraph {
public:
    DependencyGraph() = default;
    DependencyGraph(std::vector<std::string> nodes, std::vector<DependencyEdge> edges)
        : nodes_(std::move(nodes)), edges_(std::move(edges)) {
        std::sort(nodes_.begin(), nodes_.end());
        std::sort(edges_.begin(), edges_.end(), [](const DependencyEdge& x, const DependencyEdge& y) {
            return std::tie(x.producer, x.consumer) < std::tie(y.producer, y.consumer);
        });
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            out_[edges_[i].producer].push_back(i);
            in_[edges_[i].consumer].push_back(i);
        }
    }

    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::vector<DependencyEdge>& edges() const { return edges_; }

    const DependencyEdge* edge(std::string_view producer, std::string_view consumer) const {
        auto it = out_.find(std::string(producer));
        if (it == out_.end()) return nullptr;
        for (std::size_t i : it->second)
            if (edges_[i].consumer == consumer) return &edges_[i];
        return nullptr;
    }

    bool connected(std::string_view a, std::string_view b) const { return edge(a, b) || edge(b, a); }

    std::vector<std::string> successors(std::string_view producer) const {
        std::vector<std::string> out;
        auto it = out_.find(std::string(producer));
        if (it != out_.end())
            for (std::size_t i : it->second) out.push_back(edges_[i].consumer);
        return out;
    }

    std::vector<std::string> predecessors(std::string_view consumer) const {
        std::vector<std::string> out;
        auto it = in_.find(std::string(consumer));
        if (it != in_.end())
            for (std::size_t i : it->second) out.push_back(edges_[i].producer);
        return out;
    }

    friend bool operator==(const DependencyGraph& x, const DependencyGraph& y) {
        return x.nodes_ == y.nodes_ && x.edges_ == y.edges_;
    }

private:
    std::vector<std::string> nodes_;
    std::vector<DependencyEdge> edges_;
    std::map<std::string, std::vector<std::size_t>> out_;
    std::map<std::string, std::vector<std::size_t>> in_;
};

class SharingGraph {
public:
    SharingGraph() = default;
    SharingGraph(std::vector<std::string> nodes, std::vector<SharingEdge> edges)
        : nodes_(std::move(nodes)), edges_(std::move(edges)) {
        std::sort(nodes_.begin(), nodes_.end());
        std::sort(edges_.begin(), edges_.end(),
                  [](const SharingEdge& x, const SharingEdge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
    }

    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::vector<SharingEdge>& edges() const { return edges_; }

    const SharingEdge* edge(std::string_view x, std::string_view y) const {
        const std::string a(std::min(x, y)), b(std::max(x, y));
        for (const auto& e : edges_)
            if (e.a == a && e.b == b) return &e;
        return nullptr;
    }

    friend bool operator==(const SharingGraph& x, const SharingGraph& y) {
        return x.nodes_ == y.nodes_ && x.edges_ == y.edges_;
    }

private:
    std::vector<std::string> nodes_;
    std::vector<SharingEdge> edges_;
};

struct ToolGraphs {
    DependencyGraph depend;
    SharingGraph share;
};

namespace detail {

inline std::vector<Binding> compatible_bindings(const Tool& producer, const Tool& consumer) {
    std::vector<Binding> out;
    for (const auto& f : producer.output_schema) {
        for (const auto& p : consumer.parameters) {
            if (p.required && p.name == f.name && p.type == f.type) out.push_back({f.name, p.name});
        }
    }
    return out;
}

/// Manual overrides: {"add": [{producer, consumer, output_field, parameter}],
/// "remove": [{producer, consumer}]}.
inline void apply_overrides(const Catalog& catalog, const json& overrides, std::vector<DependencyEdge>& edges) {
    if (overrides.is_null()) return;
    if (!overrides.is_object()) fail(ErrorKind::MalformedSchema, "overrides");
    for (auto it = overrides.begin(); it != overrides.end(); ++it) {
        if (it.key() != "add" && it.key() != "remove") fail(ErrorKind::MalformedSchema, "overrides." + it.key());
    }
    auto endpoint = [&](const json& e, const char* key, std::size_t i, const char* list) -> const Tool& {
        const std::string name = text::to_lower_snake(string_field(e, key));
        const Tool* t = catalog.find(name);
        if (!t) fail(ErrorKind::MalformedSchema, std::string("overrides.") + list + "[" + std::to_string(i) + "]." + key);
        return *t;
    };
    if (overrides.contains("remove")) {
        const json& rm = overrides["remove"];
        for (std::size_t i = 0; i < rm.size(); ++i) {
            const Tool& p = endpoint(rm[i], "producer", i, "remove");
            const Tool& c = endpoint(rm[i], "consumer", i, "remove");
            std::erase_if(edges, [&](const DependencyEdge& e) { return e.producer == p.name && e.consumer == c.name; });
        }
    }
    if (overrides.contains("add")) {
        const json& add = overrides["add"];
        for (std::size_t i = 0; i < add.size(); ++i) {
            const std::string where = "overrides.add[" + std::to_string(i) + "]";
            const Tool& p = endpoint(add[i], "producer", i, "add");
            const Tool& c = endpoint(add[i], "consumer", i, "add");
            if (p.name == c.name) fail(ErrorKind::MalformedSchema, where + " self-edge");
            Binding b{text::to_lower_snake(string_field(add[i], "output_field")),
                      text::to_lower_snake(string_field(add[i], "parameter"))};
            if (!p.output(b.output_field)) fail(ErrorKind::MalformedSchema, where + ".output_field");
            if (!c.parameter(b.parameter)) fail(ErrorKind::MalformedSchema, where + ".parameter");
            auto existing = std::find_if(edges.begin(), edges.end(), [&](const DependencyEdge& e) {
                return e.producer == p.name && e.consumer == c.name;
            });
            if (existing == edges.end()) {
                edges.push_back({p.name, c.name, {b}});
            } else if (std::find(existing->bindings.begin(), existing->bindings.end(), b) == existing->bindings.end()) {
                existing->bindings.push_back(b);
            }
        }
    }
}

}  // namespace detail

/// Dependency edge (a, b) iff an output field of a matches a required
/// parameter of b by name and semantic type. Sharing edge {a, b} iff they
/// have an identically named parameter and no dependency edge either way.
inline ToolGraphs build_graphs(const Catalog& catalog, const json& overrides = json()) {
    const auto nodes = catalog.names();
    std::vector<DependencyEdge> dep_edges;
    for (const auto& a : catalog.tools()) {
        for (const auto& b : catalog.tools()) {
            if (a.name == b.name) continue;
            auto bindings = detail::compatible_bindings(a, b);
            if (!bindings.empty()) dep_edges.push_back({a.name, b.name, std::move(bindings)});
        }
    }
    detail::apply_overrides(catalog, overrides, dep_edges);
    DependencyGraph depend(nodes, std::move(dep_edges));

    std::vector<SharingEdge> share_edges;
    const auto& tools = catalog.tools();
    for (std::size_t i = 0; i < tools.size(); ++i) {
        for (std::size_t j = i + 1; j < tools.size(); ++j) {
            if (depend.connected(tools[i].name, tools[j].name)) continue;
            std::vector<std::string> shared;
            for (const auto& p : tools[i].parameters)
                if (tools[j].parameter(p.name)) shared.push_back(p.name);
            std::sort(shared.begin(), shared.end());
            if (!shared.empty()) share_edges.push_back({tools[i].name, tools[j].name, std::move(shared)});
        }
    }
    return {std::move(depend), SharingGraph(nodes, std::move(share_edges))};
}

inline json graphs_to_json(const ToolGraphs& g) {
    json dep = json::array();
    for (const auto& e : g.depend.edges()) {
        json bindings = json::array();
        for (const auto& b : e.bindings) bindings.push_back({{"output_field", b.output_field}, {"parameter", b.parameter}});
        dep.push_back({{"producer", e.producer}, {"consumer", e.consumer}, {"bindings", bindings}});
    }
    json share = json::array();
    for (const auto& e : g.share.edges()) share.push_back({{"a", e.a}, {"b", e.b}, {"shared", e.shared}});
    return {{"nodes", g.depend.nodes()}, {"dependency", dep}, {"sharing", share}};
}

enum class AtomicKind { isolated, serial, parallel };
enum class Relation { none, causal, independent };

constexpr std::string_view to_string(AtomicKind k) {
    switch (k) {
        case AtomicKind::isolated: return "isolated";
        case AtomicKind::serial: return "serial";
        case AtomicKind::parallel: return "parallel";
    }
    return "isolated";
}

constexpr std::string_view to_string(Relation r) {
    switch (r) {
        case Relation::none: return "none";
        case Relation::causal: return "causal";
        case Relation::independent: return "independent";
    }
    return "none";
}

inline AtomicKind atomic_kind_from_string(std::string_view s) {
    if (s == "isolated") return AtomicKind::isolated;
    if (s == "serial") return AtomicKind::serial;
    if (s == "parallel") return AtomicKind::parallel;
    fail(ErrorKind::InvalidArgument, "unknown atomic kind " + std::string(s));
}

struct ToolSelection {
    AtomicKind kind = AtomicKind::isolated;
    std::vector<std::string> tools;  // serial: producer then consumer; parallel: a < b
    Relation relation = Relation::none;
    std::vector<Binding> bindings;   // serial only
};

inline ToolSelection sample_selection(const ToolGraphs& graphs, AtomicKind kind, std::uint64_t seed) {
    Rng rng(seed);
    ToolSelection sel;
    sel.kind = kind;
    switch (kind) {
        case AtomicKind::isolated: {
            const auto& nodes = graphs.depend.nodes();
            if (nodes.empty()) fail(ErrorKind::EmptyGraph, "isolated");
            sel.tools = {rng.pick(nodes)};
            sel.relation = Relation::none;
            break;
        }
        case AtomicKind::serial: {
            const auto& edges = graphs.depend.edges();
            if (edges.empty()) fail(ErrorKind::EmptyGraph, "serial");
            const auto& e = rng.pick(edges);
            sel.tools = {e.producer, e.consumer};
            sel.relation = Relation::causal;
            sel.bindings = e.bindings;
            break;
        }
        case AtomicKind::parallel: {
            const auto& edges = graphs.share.edges();
            if (edges.empty()) fail(ErrorKind::EmptyGraph, "parallel");
            const auto& e = rng.pick(edges);
            sel.tools = {e.a, e.b};
            sel.relation = Relation::independent;
            break;
        }
    }
    return sel;
}

}  // namespace agentsynth
