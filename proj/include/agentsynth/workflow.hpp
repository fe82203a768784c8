#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"

namespace agentsynth {

inline constexpr int kStart = 0;
inline constexpr int kEnd = -1;

using WorkflowEdge = std::pair<int, int>;

/// Nodes are 1-based in edges; `nodes[k - 1]` is node k. `candidates` is the
/// api list shown to the model and may include distractors that never
/// appear among the nodes.
struct WorkflowDAG {
    std::vector<std::string> nodes;
    std::vector<WorkflowEdge> edges;
    std::vector<bool> gold_mask;
    std::vector<std::string> candidates;

    int size() const { return static_cast<int>(nodes.size()); }
    const std::string& node(int k) const { return nodes.at(static_cast<std::size_t>(k - 1)); }
};

/// A gold plan: ordered step texts plus dependencies between 1-based step
/// indices. Steps without predecessors hang off START, those without
/// successors feed END.
struct GoldWorkflow {
    std::string task;
    std::vector<std::string> steps;
    std::vector<WorkflowEdge> dependencies;
};

namespace detail {

inline int edge_rank(int v, int n) {
    if (v == kStart) return 0;
    if (v == kEnd) return n + 1;
    return v;
}

}  // namespace detail

inline void canonicalize_edges(WorkflowDAG& dag) {
    const int n = dag.size();
    auto key = [n](const WorkflowEdge& e) {
        return std::pair(detail::edge_rank(e.first, n), detail::edge_rank(e.second, n));
    };
    std::sort(dag.edges.begin(), dag.edges.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
    dag.edges.erase(std::unique(dag.edges.begin(), dag.edges.end()), dag.edges.end());
}

inline std::string node_label(int v) {
    if (v == kStart) return "START";
    if (v == kEnd) return "END";
    return std::to_string(v);
}

/// A cycle among the non-sentinel nodes, as a closed walk (first == last).
inline std::optional<std::vector<int>> find_cycle(const WorkflowDAG& dag) {
    const int n = dag.size();
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n + 1));
    for (const auto& [a, b] : dag.edges)
        if (a >= 1 && a <= n && b >= 1 && b <= n) adj[static_cast<std::size_t>(a)].push_back(b);
    for (auto& a : adj) std::sort(a.begin(), a.end());
    std::vector<int> color(static_cast<std::size_t>(n + 1), 0), parent(static_cast<std::size_t>(n + 1), 0);
    for (int root = 1; root <= n; ++root) {
        if (color[static_cast<std::size_t>(root)] != 0) continue;
        std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
        color[static_cast<std::size_t>(root)] = 1;
        while (!stack.empty()) {
            auto& [v, next] = stack.back();
            const auto& out = adj[static_cast<std::size_t>(v)];
            if (next == out.size()) {
                color[static_cast<std::size_t>(v)] = 2;
                stack.pop_back();
                continue;
            }
            const int w = out[next++];
            if (color[static_cast<std::size_t>(w)] == 1) {
                std::vector<int> cycle{w};
                for (int u = v; u != w; u = parent[static_cast<std::size_t>(u)]) cycle.push_back(u);
                cycle.push_back(w);
                std::reverse(cycle.begin(), cycle.end());
                return cycle;
            }
            if (color[static_cast<std::size_t>(w)] == 0) {
                color[static_cast<std::size_t>(w)] = 1;
                parent[static_cast<std::size_t>(w)] = v;
                stack.push_back({w, 0});
            }
        }
    }
    return std::nullopt;
}

inline std::string cycle_text(const std::vector<int>& cycle) {
    std::vector<std::string> parts;
    for (int v : cycle) parts.push_back(std::to_string(v));
    return text::join(parts, " -> ");
}

/// Kahn's algorithm over the non-sentinel nodes, smallest ready index first.
inline std::vector<int> topological_order(const WorkflowDAG& dag) {
    const int n = dag.size();
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n + 1));
    std::vector<int> indegree(static_cast<std::size_t>(n + 1), 0);
    for (const auto& [a, b] : dag.edges) {
        if (a >= 1 && a <= n && b >= 1 && b <= n) {
            adj[static_cast<std::size_t>(a)].push_back(b);
            ++indegree[static_cast<std::size_t>(b)];
        }
    }
    std::priority_queue<int, std::vector<int>, std::greater<>> ready;
    for (int v = 1; v <= n; ++v)
        if (indegree[static_cast<std::size_t>(v)] == 0) ready.push(v);
    std::vector<int> order;
    while (!ready.empty()) {
        const int v = ready.top();
        ready.pop();
        order.push_back(v);
        for (int w : adj[static_cast<std::size_t>(v)])
            if (--indegree[static_cast<std::size_t>(w)] == 0) ready.push(w);
    }
    if (static_cast<int>(order.size()) != n) {
        auto cycle = find_cycle(dag);
        fail(ErrorKind::CycleDetected, cycle ? cycle_text(*cycle) : "unordered nodes remain");
    }
    return order;
}

/// Structural problems: bad endpoints, sentinel misuse, cycles, nodes cut
/// off from START or END. Empty when the DAG is well formed.
inline std::vector<std::string> structural_problems(const WorkflowDAG& dag) {
    std::vector<std::string> reasons;
    const int n = dag.size();
    auto valid = [n](int v) { return v == kStart || v == kEnd || (v >= 1 && v <= n); };
    bool start_out = false, end_in = false;
    std::vector<std::vector<int>> fwd(static_cast<std::size_t>(n + 2)), back(static_cast<std::size_t>(n + 2));
    auto slot = [n](int v) { return static_cast<std::size_t>(v == kEnd ? n + 1 : v); };
    for (const auto& [a, b] : dag.edges) {
        const std::string e = "(" + node_label(a) + "," + node_label(b) + ")";
        if (!valid(a) || !valid(b)) {
            reasons.push_back("unknown endpoint in " + e);
            continue;
        }
        if (a == b) reasons.push_back("self-loop " + e);
        if (b == kStart) reasons.push_back("sentinel: START has an in-edge " + e);
        if (a == kEnd) reasons.push_back("sentinel: END has an out-edge " + e);
        if (a == kStart && b == kEnd) reasons.push_back("sentinel: edge from START straight to END");
        start_out = start_out || a == kStart;
        end_in = end_in || b == kEnd;
        fwd[slot(a)].push_back(b);
        back[slot(b)].push_back(a);
    }
    if (n > 0 && !start_out) reasons.push_back("sentinel: no START edge");
    if (n > 0 && !end_in) reasons.push_back("sentinel: no END edge");
    if (auto cycle = find_cycle(dag)) reasons.push_back("cycle: " + cycle_text(*cycle));
    auto reach = [&](int from, const std::vector<std::vector<int>>& adj) {
        std::vector<bool> seen(static_cast<std::size_t>(n + 2), false);
        std::vector<int> stack{from};
        seen[slot(from)] = true;
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : adj[slot(v)]) {
                if (w == kStart && from == kStart) continue;
                if (!seen[slot(w)]) {
                    seen[slot(w)] = true;
                    stack.push_back(w);
                }
            }
        }
        return seen;
    };
    const auto from_start = reach(kStart, fwd);
    const auto to_end = reach(kEnd, back);
    for (int v = 1; v <= n; ++v) {
        if (!from_start[slot(v)]) reasons.push_back("disconnected: node " + std::to_string(v) + " unreachable from START");
        if (!to_end[slot(v)]) reasons.push_back("disconnected: node " + std::to_string(v) + " does not reach END");
    }
    return reasons;
}

/// Empty when the DAG includes every gold step, orders them as the gold
/// plan does, and is structurally sound.
inline std::vector<std::string> validate_workflow(const WorkflowDAG& dag, const GoldWorkflow& gold) {
    std::vector<std::string> reasons = structural_problems(dag);
    std::map<std::string, int> position;
    for (int k = 1; k <= dag.size(); ++k) position.emplace(text::trim(dag.node(k)), k);
    std::map<int, int> gold_index;
    for (std::size_t i = 0; i < gold.steps.size(); ++i) {
        auto it = position.find(text::trim(gold.steps[i]));
        if (it == position.end()) {
            reasons.push_back("missing gold node: " + gold.steps[i]);
        } else {
            gold_index[it->second] = static_cast<int>(i);
        }
    }
    const bool cyclic = std::any_of(reasons.begin(), reasons.end(), [](const std::string& r) {
        return text::starts_with(r, "cycle");
    });
    if (!cyclic) {
        std::vector<int> seen;
        for (int v : topological_order(dag)) {
            auto it = gold_index.find(v);
            if (it != gold_index.end()) seen.push_back(it->second);
        }
        if (!std::is_sorted(seen.begin(), seen.end())) reasons.push_back("order deviation");
    }
    return reasons;
}

/// Wires the gold plan into a DAG and draws `n_distractors` extra api
/// entries from `pool` for the candidate list only.
inline WorkflowDAG build_workflow(const GoldWorkflow& gold, const std::vector<std::string>& pool,
                                  std::size_t n_distractors, std::uint64_t seed) {
    require(!gold.steps.empty(), ErrorKind::InvalidArgument, "gold plan has no steps");
    const int n = static_cast<int>(gold.steps.size());
    WorkflowDAG dag;
    dag.nodes = gold.steps;
    dag.gold_mask.assign(gold.steps.size(), true);
    std::vector<bool> has_pred(static_cast<std::size_t>(n + 1), false), has_succ(static_cast<std::size_t>(n + 1), false);
    for (const auto& [a, b] : gold.dependencies) {
        require(a >= 1 && a <= n && b >= 1 && b <= n && a != b, ErrorKind::InvalidArgument,
                "bad dependency (" + std::to_string(a) + "," + std::to_string(b) + ")");
        dag.edges.emplace_back(a, b);
        has_succ[static_cast<std::size_t>(a)] = true;
        has_pred[static_cast<std::size_t>(b)] = true;
    }
    for (int v = 1; v <= n; ++v) {
        if (!has_pred[static_cast<std::size_t>(v)]) dag.edges.emplace_back(kStart, v);
        if (!has_succ[static_cast<std::size_t>(v)]) dag.edges.emplace_back(v, kEnd);
    }
    canonicalize_edges(dag);
    if (auto cycle = find_cycle(dag)) fail(ErrorKind::CycleDetected, cycle_text(*cycle));

    const std::set<std::string> gold_set(gold.steps.begin(), gold.steps.end());
    std::vector<std::string> eligible;
    std::set<std::string> seen;
    for (const auto& p : pool)
        if (!gold_set.count(p) && seen.insert(p).second) eligible.push_back(p);
    if (eligible.size() < n_distractors) {
        fail(ErrorKind::PoolTooSmall, "need " + std::to_string(n_distractors) + " distractors, pool has " +
                                          std::to_string(eligible.size()));
    }
    Rng rng(seed);
    dag.candidates = gold.steps;
    for (std::size_t i : rng.sample_indices(eligible.size(), n_distractors)) dag.candidates.push_back(eligible[i]);
    if (n_distractors > 0) rng.shuffle(dag.candidates);
    return dag;
}

/// "Node:\n1: a\n2: b\nEdge: (START,1) (1,2) (2,END)".
inline std::string serialize_workflow(const WorkflowDAG& dag) {
    std::string out = "Node:\n";
    for (int k = 1; k <= dag.size(); ++k) out += std::to_string(k) + ": " + dag.node(k) + "\n";
    out += "Edge:";
    for (const auto& [a, b] : dag.edges) out += " (" + node_label(a) + "," + node_label(b) + ")";
    return out;
}

namespace detail {

class WorkflowParser {
public:
    explicit WorkflowParser(std::string_view s) : s_(s) {}

    WorkflowDAG parse() {
        skip_ws();
        expect_word("Node");
        if (peek('s')) ++pos_;
        skip_inline_ws();
        if (peek(':')) {
            ++pos_;
            skip_inline_ws();
        }
        const std::size_t edge_at = find_edge_header();
        if (edge_at == std::string_view::npos) throw ParseFailure(s_.size(), "Edge: header");
        std::string_view body = s_.substr(pos_, edge_at - pos_);
        const std::size_t body_start = pos_;
        WorkflowDAG dag;
        if (!body.empty() && (body.front() == '\n' || body.front() == '\r')) {
            parse_lines(body, body_start, dag);
        } else {
            parse_inline(body, body_start, dag);
        }
        pos_ = edge_at;
        expect_word("Edge");
        if (peek('s')) ++pos_;
        skip_inline_ws();
        if (!peek(':')) throw ParseFailure(pos_, "':' after Edge");
        ++pos_;
        parse_edges(dag);
        return dag;
    }

private:
    bool peek(char c) const { return pos_ < s_.size() && s_[pos_] == c; }

    void skip_ws() {
        while (pos_ < s_.size() && text::is_space(s_[pos_])) ++pos_;
    }

    void skip_inline_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    void expect_word(std::string_view w) {
        if (s_.substr(pos_, w.size()) != w) throw ParseFailure(pos_, std::string(w));
        pos_ += w.size();
    }

    /// "Edge:" / "Edges:" at a line start or after whitespace or '.'.
    std::size_t find_edge_header() const {
        std::size_t p = pos_;
        while ((p = s_.find("Edge", p)) != std::string_view::npos) {
            const bool left_ok = p == 0 || text::is_space(s_[p - 1]) || s_[p - 1] == '.';
            std::size_t q = p + 4;
            if (q < s_.size() && s_[q] == 's') ++q;
            while (q < s_.size() && (s_[q] == ' ' || s_[q] == '\t')) ++q;
            if (left_ok && q < s_.size() && s_[q] == ':') return p;
            ++p;
        }
        return std::string_view::npos;
    }

    static std::size_t number_prefix(std::string_view s, int& value) {
        std::size_t i = 0;
        value = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9' && i < 9) value = value * 10 + (s[i++] - '0');
        return i;
    }

    void parse_lines(std::string_view body, std::size_t base, WorkflowDAG& dag) {
        std::size_t offset = 0;
        for (const auto& raw : text::split(body, '\n')) {
            const std::size_t line_at = base + offset;
            offset += raw.size() + 1;
            std::string_view line = text::trim_view(raw);
            if (line.empty()) continue;
            int k = 0;
            const std::size_t digits = number_prefix(line, k);
            const int expected = dag.size() + 1;
            if (digits == 0 || k != expected || digits >= line.size() || (line[digits] != ':' && line[digits] != '.')) {
                throw ParseFailure(line_at, "node " + std::to_string(expected) + " as 'k: text'");
            }
            std::string node = text::trim(line.substr(digits + 1));
            if (node.empty()) throw ParseFailure(line_at, "text for node " + std::to_string(k));
            dag.nodes.push_back(std::move(node));
        }
        if (dag.nodes.empty()) throw ParseFailure(base, "at least one node");
    }

    void parse_inline(std::string_view body, std::size_t base, WorkflowDAG& dag) {
        std::size_t at = 0;
        int k = 1;
        auto marker_at = [&](std::size_t from, int num, std::size_t& after) -> std::size_t {
            const std::string m = std::to_string(num);
            std::size_t p = from;
            while ((p = body.find(m, p)) != std::string_view::npos) {
                const bool left_ok = p == 0 || text::is_space(body[p - 1]);
                const std::size_t q = p + m.size();
                if (left_ok && q < body.size() && (body[q] == ':' || body[q] == '.')) {
                    after = q + 1;
                    return p;
                }
                ++p;
            }
            return std::string_view::npos;
        };
        std::size_t after = 0;
        std::size_t first = marker_at(0, 1, after);
        if (first == std::string_view::npos || !text::trim_view(body.substr(0, first)).empty()) {
            throw ParseFailure(base, "node 1 as 'k:text'");
        }
        at = after;
        while (true) {
            std::size_t next_after = 0;
            const std::size_t next = marker_at(at, k + 1, next_after);
            std::string_view chunk = body.substr(at, next == std::string_view::npos ? std::string_view::npos : next - at);
            std::string node = text::trim(chunk);
            if (next == std::string_view::npos && !node.empty() && node.back() == '.') node.pop_back();
            node = text::trim(node);
            if (node.empty()) throw ParseFailure(base + at, "text for node " + std::to_string(k));
            dag.nodes.push_back(std::move(node));
            if (next == std::string_view::npos) break;
            at = next_after;
            ++k;
        }
    }

    int endpoint(const WorkflowDAG& dag) {
        skip_ws();
        const std::size_t at = pos_;
        if (s_.substr(pos_, 5) == "START") {
            pos_ += 5;
            return kStart;
        }
        if (s_.substr(pos_, 3) == "END") {
            pos_ += 3;
            return kEnd;
        }
        int v = 0;
        const std::size_t digits = number_prefix(s_.substr(pos_), v);
        if (digits == 0) throw ParseFailure(at, "START, END or a node number");
        pos_ += digits;
        if (v < 1 || v > dag.size()) throw ParseFailure(at, "known node (got " + std::to_string(v) + ")");
        return v;
    }

    void parse_edges(WorkflowDAG& dag) {
        bool any = false;
        while (true) {
            while (pos_ < s_.size() && (text::is_space(s_[pos_]) || s_[pos_] == ',')) ++pos_;
            if (pos_ >= s_.size()) break;
            if (s_[pos_] == '.' && text::trim_view(s_.substr(pos_ + 1)).empty()) {
                pos_ = s_.size();
                break;
            }
            if (s_[pos_] != '(') throw ParseFailure(pos_, "'(' opening an edge");
            ++pos_;
            const int a = endpoint(dag);
            skip_ws();
            if (!peek(',')) throw ParseFailure(pos_, "',' inside an edge");
            ++pos_;
            const int b = endpoint(dag);
            skip_ws();
            if (!peek(')')) throw ParseFailure(pos_, "')' closing an edge");
            ++pos_;
            dag.edges.emplace_back(a, b);
            any = true;
        }
        if (!any) throw ParseFailure(s_.size(), "at least one edge");
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Accepts "Node:" with one "k: text" or "k.text" per line, or the inline
/// "Node 1:a 2:b." form, followed by "Edge:"/"Edges:" and pairs separated
/// by whitespace or commas. Node numbers must run 1..n.
inline WorkflowDAG parse_workflow(std::string_view s) {
    WorkflowDAG dag = detail::WorkflowParser(s).parse();
    dag.gold_mask.assign(dag.nodes.size(), true);
    return dag;
}

/// Chat-format prompt pieces for workflow samples.
struct WorkflowPromptConfig {
    std::string system_prompt;
    std::string examples_preamble;
    std::string task_preamble;
    struct Example {
        std::string task;
        std::vector<std::string> apis;
        std::string answer;
    };
    std::vector<Example> examples;
};

inline std::string render_api_list(const std::vector<std::string>& apis) {
    std::vector<std::string> quoted;
    for (const auto& a : apis) quoted.push_back("'" + a + "'");
    return "[" + text::join(quoted, ", ") + "]";
}

inline std::string workflow_user_turn(const std::string& task, const std::vector<std::string>& apis) {
    return "Task: " + task + "\nThe api list you can use: " + render_api_list(apis);
}

inline json workflow_chat_sample(const WorkflowPromptConfig& cfg, const std::string& task, const WorkflowDAG& answer) {
    json messages = json::array();
    messages.push_back({{"role", "system"}, {"content", cfg.system_prompt}});
    for (std::size_t i = 0; i < cfg.examples.size(); ++i) {
        const auto& ex = cfg.examples[i];
        std::string user = workflow_user_turn(ex.task, ex.apis);
        if (i == 0 && !cfg.examples_preamble.empty()) user = cfg.examples_preamble + "\n" + user;
        messages.push_back({{"role", "user"}, {"content", user}});
        messages.push_back({{"role", "assistant"}, {"content", ex.answer}});
    }
    std::string turn = workflow_user_turn(task, answer.candidates);
    if (!cfg.task_preamble.empty()) turn = cfg.task_preamble + "\n" + turn;
    messages.push_back({{"role", "user"}, {"content", turn}});
    messages.push_back({{"role", "assistant"}, {"content", serialize_workflow(answer)}});
    return {{"messages", messages}};
}

inline json to_json(const WorkflowDAG& dag) {
    json edges = json::array();
    for (const auto& [a, b] : dag.edges) edges.push_back({node_label(a), node_label(b)});
    return {{"nodes", dag.nodes}, {"edges", edges}, {"candidates", dag.candidates}};
}

}  // namespace agentsynth
