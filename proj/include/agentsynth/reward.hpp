#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "agentsynth/backends.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/grammar.hpp"
#include "agentsynth/schedule.hpp"
#include "agentsynth/workflow.hpp"

namespace agentsynth {

struct FormatError {
    std::size_t position = 0;
    std::string expectation;
};

struct ParsedOutput {
    TaskKind kind = TaskKind::decomposition;
    std::string think;
    std::vector<std::string> steps;  // decomposition
    std::string reply;
    std::vector<ToolCall> tools;     // tool_planning
    std::string schedule;            // scheduling
    WorkflowDAG graph;               // workflow
    ToolCall call;                   // long_horizon
};

struct ParseResult {
    std::optional<ParsedOutput> value;
    FormatError error;

    bool ok() const { return value.has_value(); }
};

/// Total: malformed input of any shape yields a FormatError, never a throw.
inline ParseResult parse_output(TaskKind kind, std::string_view s) {
    ParseResult r;
    try {
        ParsedOutput out;
        out.kind = kind;
        switch (kind) {
            case TaskKind::decomposition: {
                grammar::DecompositionOptions opt;
                opt.allow_query = false;
                auto d = grammar::parse_decomposition(s, opt);
                out.steps = std::move(d.steps);
                out.reply = d.reply.value_or("");
                break;
            }
            case TaskKind::tool_planning: {
                auto [think, body] = grammar::parse_think_block(s, "action");
                out.think = std::move(think);
                out.tools = grammar::parse_tool_list(body, s.find("<action>") + 8);
                break;
            }
            case TaskKind::scheduling: {
                auto [think, body] = grammar::parse_think_block(s, "answer");
                if (body.empty()) throw ParseFailure(s.find("<answer>") + 8, "nonempty schedule");
                out.think = std::move(think);
                out.schedule = std::move(body);
                break;
            }
            case TaskKind::workflow: out.graph = parse_workflow(s); break;
            case TaskKind::long_horizon: {
                auto [think, body] = grammar::parse_think_block(s, "tool_call");
                out.think = std::move(think);
                out.call = grammar::parse_strict_tool_call(body, s.find("<tool_call>") + 11);
                break;
            }
        }
        r.value = std::move(out);
    } catch (const ParseFailure& e) {
        r.error = {e.position(), e.expectation()};
    } catch (const std::exception& e) {
        r.error = {0, e.what()};
    }
    return r;
}

/// Weights are indexed format, plan, tool, workflow, schedule.
struct RewardConfig {
    std::array<double, 5> alpha{1.0, 1.0, 1.0, 1.0, 1.0};
    double tau = 0.85;
    double match_threshold = 0.85;
    std::set<std::string> reply_tools{"reply"};

    void validate() const {
        for (double a : alpha) require(a >= 0.0 && a <= 1.0, ErrorKind::InvalidArgument, "reward weight outside [0,1]");
        require(tau > 0.0 && tau <= 1.0, ErrorKind::InvalidArgument, "tau outside (0,1]");
        require(match_threshold > 0.0 && match_threshold <= 1.0, ErrorKind::InvalidArgument, "match threshold outside (0,1]");
    }

    double task_weight(TaskKind k) const {
        switch (k) {
            case TaskKind::decomposition: return alpha[1];
            case TaskKind::tool_planning:
            case TaskKind::long_horizon: return alpha[2];
            case TaskKind::workflow: return alpha[3];
            case TaskKind::scheduling: return alpha[4];
        }
        return 0.0;
    }
};

struct RewardBreakdown {
    double format = 0.0;
    double component = 0.0;
    double total = 0.0;
    json diagnostics = json::object();
};

// ----------------------------------------------------------- components

inline double reward_plan(const ParsedOutput& pred, const ParsedOutput& gold, Embedder& embedder, double tau,
                          json* diag = nullptr) {
    if (pred.steps.size() != gold.steps.size()) {
        if (diag) (*diag)["reason"] = "step count " + std::to_string(pred.steps.size()) + " vs " + std::to_string(gold.steps.size());
        return 0.0;
    }
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < pred.steps.size(); ++i) {
        texts.push_back(pred.steps[i]);
        texts.push_back(gold.steps[i]);
    }
    texts.push_back(pred.reply);
    texts.push_back(gold.reply);
    const auto v = embedder.embed(texts);
    json sims = json::array();
    bool ok = true;
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) {
        const double sim = cosine(v[i], v[i + 1]);
        sims.push_back(sim);
        ok = ok && sim >= tau;
    }
    if (diag) (*diag)["similarities"] = sims;
    return ok ? 1.0 : 0.0;
}

inline bool tool_call_matches(const ToolCall& pred, const ToolCall& gold) {
    if (pred.name != gold.name) return false;
    if (gold.arguments.empty()) return true;
    return normalize_arguments(pred.arguments) == normalize_arguments(gold.arguments);
}

inline double reward_tool_list(const std::vector<ToolCall>& pred, const std::vector<ToolCall>& gold) {
    if (pred.size() != gold.size()) return 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (!tool_call_matches(pred[i], gold[i])) return 0.0;
    return 1.0;
}

inline double reward_schedule(std::string_view schedule, const ScheduleProblem& problem, json* diag = nullptr) {
    try {
        const auto it = parse_itinerary(problem, schedule);
        const auto violations = verify(problem, it);
        if (diag && !violations.empty()) (*diag)["violations"] = violations;
        return violations.empty() ? 1.0 : 0.0;
    } catch (const ParseFailure& e) {
        if (diag) (*diag)["itinerary_parse_error"] = e.what();
        return 0.0;
    }
}

struct NodeMatch {
    int pred = 0;  // 0-based indices into the node lists
    int gold = 0;
    double similarity = 0.0;
};

struct NodeMatching {
    std::vector<NodeMatch> pairs;
    std::vector<int> unmatched_pred;
    std::vector<int> unmatched_gold;

    std::optional<int> gold_of(int pred) const {
        for (const auto& m : pairs)
            if (m.pred == pred) return m.gold;
        return std::nullopt;
    }
};

/// Greedy one-to-one matching on descending similarity, ties by (gold
/// index, pred index); pairs below `threshold` are never kept.
inline NodeMatching match_nodes_with(const std::vector<std::vector<double>>& sim, std::size_t n_pred, std::size_t n_gold,
                                     double threshold) {
    std::vector<std::tuple<double, int, int>> cand;
    for (std::size_t i = 0; i < n_pred; ++i)
        for (std::size_t j = 0; j < n_gold; ++j)
            if (sim[i][j] >= threshold) cand.emplace_back(sim[i][j], static_cast<int>(j), static_cast<int>(i));
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
        return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
    });
    NodeMatching m;
    std::vector<bool> pred_used(n_pred, false), gold_used(n_gold, false);
    for (const auto& [s, g, p] : cand) {
        if (pred_used[static_cast<std::size_t>(p)] || gold_used[static_cast<std::size_t>(g)]) continue;
        pred_used[static_cast<std::size_t>(p)] = gold_used[static_cast<std::size_t>(g)] = true;
        m.pairs.push_back({p, g, s});
    }
    for (std::size_t i = 0; i < n_pred; ++i)
        if (!pred_used[i]) m.unmatched_pred.push_back(static_cast<int>(i));
    for (std::size_t j = 0; j < n_gold; ++j)
        if (!gold_used[j]) m.unmatched_gold.push_back(static_cast<int>(j));
    return m;
}

inline NodeMatching match_nodes(const std::vector<std::string>& pred, const std::vector<std::string>& gold,
                                Embedder& embedder, double threshold) {
    std::vector<std::vector<double>> sim(pred.size(), std::vector<double>(gold.size(), 0.0));
    if (!pred.empty() && !gold.empty()) {
        std::vector<std::string> texts(pred);
        texts.insert(texts.end(), gold.begin(), gold.end());
        const auto v = embedder.embed(texts);
        for (std::size_t i = 0; i < pred.size(); ++i)
            for (std::size_t j = 0; j < gold.size(); ++j) sim[i][j] = cosine(v[i], v[pred.size() + j]);
    }
    return match_nodes_with(sim, pred.size(), gold.size(), threshold);
}

inline double harmonic_f1(double precision, double recall) {
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

/// Length of the longest strictly increasing subsequence (patience sort).
inline std::size_t lis_length(const std::vector<int>& seq) {
    std::vector<int> tails;
    for (int x : seq) {
        auto it = std::lower_bound(tails.begin(), tails.end(), x);
        if (it == tails.end()) {
            tails.push_back(x);
        } else {
            *it = x;
        }
    }
    return tails.size();
}

/// Sequences hold 0-based node indices in execution order.
inline double f1_chain(const std::vector<int>& pred_seq, const std::vector<int>& gold_seq, const NodeMatching& matching) {
    if (pred_seq.empty() || gold_seq.empty()) return 0.0;
    std::vector<int> position_of;
    for (std::size_t k = 0; k < gold_seq.size(); ++k) {
        const auto g = static_cast<std::size_t>(gold_seq[k]);
        if (g >= position_of.size()) position_of.resize(g + 1, -1);
        position_of[g] = static_cast<int>(k);
    }
    std::vector<int> mapped;
    for (int p : pred_seq) {
        auto g = matching.gold_of(p);
        if (!g || static_cast<std::size_t>(*g) >= position_of.size() || position_of[static_cast<std::size_t>(*g)] < 0) continue;
        mapped.push_back(position_of[static_cast<std::size_t>(*g)]);
    }
    const double L = static_cast<double>(lis_length(mapped));
    if (L == 0.0) return 0.0;
    return harmonic_f1(L / static_cast<double>(pred_seq.size()), L / static_cast<double>(gold_seq.size()));
}

namespace detail {

inline std::vector<std::pair<int, int>> inner_edges(const WorkflowDAG& dag) {
    std::vector<std::pair<int, int>> out;
    for (const auto& [a, b] : dag.edges)
        if (a >= 1 && b >= 1) out.emplace_back(a - 1, b - 1);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

/// Largest weakly connected component of the graph whose vertices are
/// matched pairs and whose edges exist in both DAGs, scored as vertices plus
/// edges against each DAG's non-sentinel vertices plus edges.
inline double f1_graph(const WorkflowDAG& pred, const WorkflowDAG& gold, const NodeMatching& matching) {
    const auto pe = detail::inner_edges(pred), ge = detail::inner_edges(gold);
    const double pred_size = static_cast<double>(pred.nodes.size() + pe.size());
    const double gold_size = static_cast<double>(gold.nodes.size() + ge.size());
    if (matching.pairs.empty() || pred_size == 0 || gold_size == 0) return 0.0;
    const std::set<std::pair<int, int>> gold_edges(ge.begin(), ge.end());
    const std::size_t m = matching.pairs.size();
    std::vector<int> pair_of_pred(pred.nodes.size(), -1);
    for (std::size_t k = 0; k < m; ++k) pair_of_pred[static_cast<std::size_t>(matching.pairs[k].pred)] = static_cast<int>(k);
    std::vector<std::pair<int, int>> shared;  // pair indices
    for (const auto& [a, b] : pe) {
        const int ka = pair_of_pred[static_cast<std::size_t>(a)], kb = pair_of_pred[static_cast<std::size_t>(b)];
        if (ka < 0 || kb < 0) continue;
        if (gold_edges.count({matching.pairs[static_cast<std::size_t>(ka)].gold, matching.pairs[static_cast<std::size_t>(kb)].gold}))
            shared.emplace_back(ka, kb);
    }
    std::vector<int> parent(m);
    for (std::size_t k = 0; k < m; ++k) parent[k] = static_cast<int>(k);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        return x;
    };
    for (const auto& [a, b] : shared) parent[static_cast<std::size_t>(find(a))] = find(b);
    std::vector<double> score(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) score[static_cast<std::size_t>(find(static_cast<int>(k)))] += 1.0;
    for (const auto& [a, b] : shared) score[static_cast<std::size_t>(find(a))] += 1.0;
    const double best = *std::max_element(score.begin(), score.end());
    return harmonic_f1(best / pred_size, best / gold_size);
}

inline double reward_workflow(const WorkflowDAG& pred, const WorkflowDAG& gold, Embedder& embedder,
                              double match_threshold, json* diag = nullptr) {
    if (pred.nodes.empty() || gold.nodes.empty()) return 0.0;
    std::vector<int> pred_order, gold_order;
    try {
        pred_order = topological_order(pred);
    } catch (const Error& e) {
        if (diag) (*diag)["cycle"] = e.detail();
        return 0.0;
    }
    gold_order = topological_order(gold);
    for (auto& v : pred_order) --v;
    for (auto& v : gold_order) --v;
    const auto matching = match_nodes(pred.nodes, gold.nodes, embedder, match_threshold);
    const double chain = f1_chain(pred_order, gold_order, matching);
    const double graph = f1_graph(pred, gold, matching);
    if (diag) {
        (*diag)["f1_chain"] = chain;
        (*diag)["f1_graph"] = graph;
        (*diag)["matched"] = matching.pairs.size();
    }
    return (chain + graph) / 2.0;
}

inline double reward_longhorizon(const ToolCall& pred, const ToolCall& gold, Embedder& embedder, double tau,
                                 const std::set<std::string>& reply_tools = {"reply"}) {
    if (pred.name != gold.name) return 0.0;
    if (reply_tools.count(gold.name)) {
        auto content = [](const ToolCall& c) {
            return c.arguments.contains("content") && c.arguments["content"].is_string() ? c.arguments["content"].get<std::string>()
                                                                                         : dump_compact(c.arguments);
        };
        return embedder.similarity(content(pred), content(gold)) >= tau ? 1.0 : 0.0;
    }
    return normalize_arguments(pred.arguments) == normalize_arguments(gold.arguments) ? 1.0 : 0.0;
}

/// Reference answer for scoring; scheduling also needs the problem.
struct RewardGold {
    ParsedOutput parsed;
    std::optional<ScheduleProblem> problem;
};

inline RewardGold gold_from_text(TaskKind kind, std::string_view gold_text, std::optional<ScheduleProblem> problem = {}) {
    auto r = parse_output(kind, gold_text);
    if (!r.ok()) {
        fail(ErrorKind::ParseError, "gold for " + std::string(to_string(kind)) + " at " + std::to_string(r.error.position) +
                                        ": " + r.error.expectation);
    }
    return {std::move(*r.value), std::move(problem)};
}

inline RewardBreakdown reward_total(TaskKind kind, std::string_view text, const RewardGold& gold, const RewardConfig& cfg,
                                    Embedder& embedder) {
    RewardBreakdown b;
    const auto parsed = parse_output(kind, text);
    if (!parsed.ok()) {
        b.diagnostics["format_error"] = {{"position", parsed.error.position}, {"expected", parsed.error.expectation}};
        return b;
    }
    b.format = 1.0;
    const ParsedOutput& p = *parsed.value;
    json diag = json::object();
    switch (kind) {
        case TaskKind::decomposition: b.component = reward_plan(p, gold.parsed, embedder, cfg.tau, &diag); break;
        case TaskKind::tool_planning: b.component = reward_tool_list(p.tools, gold.parsed.tools); break;
        case TaskKind::scheduling:
            require(gold.problem.has_value(), ErrorKind::InvalidArgument, "scheduling gold needs a problem");
            b.component = reward_schedule(p.schedule, *gold.problem, &diag);
            break;
        case TaskKind::workflow:
            b.component = reward_workflow(p.graph, gold.parsed.graph, embedder, cfg.match_threshold, &diag);
            break;
        case TaskKind::long_horizon:
            b.component = reward_longhorizon(p.call, gold.parsed.call, embedder, cfg.tau, cfg.reply_tools);
            break;
    }
    b.total = cfg.alpha[0] * b.format + cfg.task_weight(kind) * b.component;
    b.diagnostics = std::move(diag);
    return b;
}

inline json to_json(const RewardBreakdown& b) {
    return {{"format", b.format}, {"component", b.component}, {"total", b.total}, {"diagnostics", b.diagnostics}};
}

}  // namespace agentsynth
