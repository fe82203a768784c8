#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
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
#include "agentsynth/plans.hpp"
#include "agentsynth/reward.hpp"

namespace agentsynth {

/// One agent step. `user` is the human message that preceded it (empty when
/// the agent continues on an observation). Exactly one of `calls` / `reply`
/// is set; `observations` aligns with `calls`.
struct Turn {
    std::string user;
    std::string think;
    std::vector<ToolCall> calls;
    std::optional<std::string> reply;
    std::vector<json> observations;
};

enum class TrajectoryLabel { successful, unsuccessful };

constexpr std::string_view to_string(TrajectoryLabel l) {
    return l == TrajectoryLabel::successful ? "successful" : "unsuccessful";
}

struct Trajectory {
    std::vector<Turn> turns;
    TrajectoryLabel label = TrajectoryLabel::unsuccessful;
    std::string domain_tag;
    std::string task_id;
    std::uint64_t seed = 0;

    std::vector<std::string> used_tools() const {
        std::vector<std::string> out;
        for (const auto& t : turns)
            for (const auto& c : t.calls)
                if (std::find(out.begin(), out.end(), c.name) == out.end()) out.push_back(c.name);
        return out;
    }
};

/// Produces tool observations. Implementations must be deterministic in
/// (tool, call, seed).
class ObservationSimulator {
public:
    virtual ~ObservationSimulator() = default;
    virtual json observe(const Tool& tool, const ToolCall& call, std::uint64_t seed) = 0;
    virtual std::string id() const = 0;
};

/// Templated observations keyed by the tool's output schema:
/// {status, message, tool_result{field: synthetic value}}. Fixed responses
/// can be registered per tool.
class StubSimulator : public ObservationSimulator {
public:
    void set_response(const std::string& tool, json response) { fixed_[tool] = std::move(response); }

    json observe(const Tool& tool, const ToolCall& call, std::uint64_t seed) override {
        if (auto it = fixed_.find(tool.name); it != fixed_.end()) return it->second;
        const std::uint64_t h = splitmix64(fnv1a64(tool.name + "|" + dump_compact(call.arguments)) ^ seed);
        json result = json::object();
        for (std::size_t i = 0; i < tool.output_schema.size(); ++i) {
            const auto& f = tool.output_schema[i];
            const std::uint64_t v = splitmix64(h + i);
            if (f.type == "integer") {
                result[f.name] = static_cast<long long>(v % 1000);
            } else if (f.type == "number") {
                result[f.name] = static_cast<double>(v % 100000) / 100.0;
            } else if (f.type == "boolean") {
                result[f.name] = true;
            } else if (f.type == "array") {
                result[f.name] = json::array({f.name + "-" + text::hex64(v).substr(0, 6)});
            } else if (f.type == "object") {
                result[f.name] = json::object();
            } else if (text::contains(f.name, "status")) {
                result[f.name] = "success";
            } else if (f.name == "id" || text::contains(f.name, "_id")) {
                std::string prefix;
                for (char c : tool.name.substr(0, 2)) prefix += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
                result[f.name] = prefix + std::to_string(10000000 + v % 90000000);
            } else {
                result[f.name] = f.name + "-" + text::hex64(v).substr(0, 6);
            }
        }
        return {{"status", "success"}, {"message", tool.name + " completed"}, {"tool_result", result}};
    }

    std::string id() const override { return "stub-simulator-v1"; }

private:
    std::map<std::string, json> fixed_;
};

/// A field looked up in tool_result first, then at the top level.
inline const json* observation_field(const json& obs, const std::string& field) {
    if (obs.is_object()) {
        if (obs.contains("tool_result") && obs["tool_result"].is_object() && obs["tool_result"].contains(field))
            return &obs["tool_result"][field];
        if (obs.contains(field)) return &obs[field];
    }
    return nullptr;
}

inline bool observation_ok(const json& obs) {
    if (!obs.is_object() || !obs.contains("status")) return true;
    const auto& s = obs["status"];
    if (s.is_boolean()) return s.get<bool>();
    if (!s.is_string()) return true;
    const std::string v = text::to_lower_ascii(s.get<std::string>());
    return v != "error" && v != "failed" && v != "failure";
}

struct Condition {
    enum class Op { success, nonempty, equals };
    std::string field;
    Op op = Op::success;
    json value;
};

/// Reads "if F indicates success", "if F is non-empty" or "F == V".
inline Condition parse_condition(std::string_view s) {
    std::string t = text::trim(s);
    if (text::starts_with(t, "if ")) t = t.substr(3);
    Condition c;
    if (auto p = t.find("=="); p != std::string::npos) {
        c.field = text::trim(t.substr(0, p));
        std::string v = text::trim(t.substr(p + 2));
        if (v.size() >= 2 && (v.front() == '\'' || v.front() == '"') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
        c.op = Condition::Op::equals;
        c.value = parse_strict_json(v).value_or(json(v));
        if (!c.value.is_string() && !c.value.is_number() && !c.value.is_boolean()) c.value = v;
    } else if (auto q = t.find(" indicates success"); q != std::string::npos) {
        c.field = text::trim(t.substr(0, q));
        c.op = Condition::Op::success;
    } else if (auto r = t.find(" is non-empty"); r != std::string::npos) {
        c.field = text::trim(t.substr(0, r));
        c.op = Condition::Op::nonempty;
    } else {
        fail(ErrorKind::InvalidArgument, "unrecognized condition: " + std::string(s));
    }
    require(!c.field.empty(), ErrorKind::InvalidArgument, "condition without a field");
    return c;
}

inline bool success_value(const json& v) {
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_number()) return v.get<double>() != 0.0;
    if (!v.is_string()) return !v.empty();
    const std::string s = text::to_lower_ascii(v.get<std::string>());
    for (const char* w : {"success", "succeeded", "ok", "true", "confirmed", "completed", "done", "booked"})
        if (s == w) return true;
    return text::contains(s, "成功");
}

/// Raises UnresolvableCondition when the field is absent.
inline bool evaluate_condition(const Condition& c, const json& obs) {
    const json* v = observation_field(obs, c.field);
    if (!v) fail(ErrorKind::UnresolvableCondition, "field " + c.field + " absent from observation");
    switch (c.op) {
        case Condition::Op::success: return success_value(*v);
        case Condition::Op::nonempty:
            if (v->is_null()) return false;
            if (v->is_string()) return !v->get<std::string>().empty();
            if (v->is_array() || v->is_object()) return !v->empty();
            return true;
        case Condition::Op::equals:
            if (v->is_string() && c.value.is_string()) return text::trim(v->get<std::string>()) == text::trim(c.value.get<std::string>());
            if (v->is_number() && c.value.is_number()) return v->get<double>() == c.value.get<double>();
            return *v == c.value;
    }
    return false;
}

/// Reasoning is inconsistent with an action when it names another candidate
/// tool and never names the action's tool.
inline std::optional<std::string> reasoning_conflict(std::string_view think, const std::string& tool,
                                                     const std::vector<std::string>& candidates) {
    if (text::contains_identifier(think, tool)) return std::nullopt;
    for (const auto& c : candidates)
        if (c != tool && text::contains_identifier(think, c)) return "reasoning names " + c + " but the action calls " + tool;
    return std::nullopt;
}

/// Episode state for plan-driven synthesis.
struct EpisodeState {
    const ComposedPlan* plan = nullptr;
    std::vector<std::size_t> order;
    std::size_t position = 0;  // index into order of the current node
    std::vector<std::optional<json>> observations;
    std::set<std::size_t> pruned;
    std::map<std::size_t, std::set<std::string>> clarified;
    std::vector<std::string> candidate_tools;

    static EpisodeState start(const ComposedPlan& p) {
        EpisodeState s;
        s.plan = &p;
        s.order = plan_order(p);
        s.observations.assign(p.nodes.size(), std::nullopt);
        for (const auto& n : p.nodes)
            if (std::find(s.candidate_tools.begin(), s.candidate_tools.end(), n.tool) == s.candidate_tools.end())
                s.candidate_tools.push_back(n.tool);
        return s;
    }

    std::size_t node() const { return order.at(position); }

    std::vector<std::string> pending_masks(std::size_t n) const {
        std::vector<std::string> out;
        auto it = clarified.find(n);
        for (const auto& m : plan->nodes[n].masked_params)
            if (it == clarified.end() || !it->second.count(m)) out.push_back(m);
        return out;
    }
};

/// Resolves "{stepK.field}" placeholders against earlier observations and
/// fills clarified masked parameters from the held-out values.
inline ToolCall golden_call(const EpisodeState& s, std::size_t n) {
    const auto& node = s.plan->nodes[n];
    ToolCall c{node.tool, json::object()};
    static const std::regex ref(R"(^\{step(\d+)\.([A-Za-z0-9_]+)\}$)");
    for (auto it = node.bound_args.begin(); it != node.bound_args.end(); ++it) {
        json v = *it;
        std::smatch m;
        const std::string sv = v.is_string() ? v.get<std::string>() : std::string();
        if (v.is_string() && std::regex_match(sv, m, ref)) {
            const std::size_t src = std::stoul(m[1].str()) - 1;
            if (src < s.observations.size() && s.observations[src]) {
                if (const json* f = observation_field(*s.observations[src], m[2].str())) v = *f;
            }
        }
        c.arguments[it.key()] = v;
    }
    if (auto it = s.clarified.find(n); it != s.clarified.end())
        for (const auto& p : it->second)
            if (node.held_out.contains(p)) c.arguments[p] = node.held_out[p];
    return c;
}

inline std::string reasoning_prompt(const ComposedPlan& p, const SubTask& node, const ToolCall& call) {
    return "User request: " + p.query() + "\nCurrent step: " + node.intent + "\nExplain how the request maps to the call " +
           dump_compact(to_json(call)) + ".";
}

/// The golden step at the current plan position: reasoning from the
/// generator, the plan's call, and the simulator's observation.
inline Turn synthesize_turn(const EpisodeState& s, const Catalog& catalog, TextGenerator& gen, ObservationSimulator& sim,
                            std::uint64_t seed) {
    const std::size_t n = s.node();
    const auto& node = s.plan->nodes[n];
    Turn t;
    const ToolCall call = golden_call(s, n);
    GenerationRequest req;
    req.prompt = reasoning_prompt(*s.plan, node, call);
    req.grammar = "reasoning";
    req.seed = seed;
    req.payload = {{"query", s.plan->query()}, {"intent", node.intent}, {"call", to_json(call)}};
    t.think = text::trim(generate_checked(gen, req));
    if (auto why = reasoning_conflict(t.think, call.name, s.candidate_tools)) fail(ErrorKind::ConsistencyFailure, *why);
    t.calls.push_back(call);
    t.observations.push_back(sim.observe(catalog.at(call.name), call, seed));
    return t;
}

enum class TransitionKind { Standard, ConditionalBranch, UserClarification, Termination };

constexpr std::string_view to_string(TransitionKind k) {
    switch (k) {
        case TransitionKind::Standard: return "Standard";
        case TransitionKind::ConditionalBranch: return "ConditionalBranch";
        case TransitionKind::UserClarification: return "UserClarification";
        case TransitionKind::Termination: return "Termination";
    }
    return "Standard";
}

struct Transition {
    TransitionKind kind = TransitionKind::Standard;
    std::optional<std::size_t> target;  // next node to run
    std::vector<std::string> params;   // UserClarification
    bool satisfied = true;             // ConditionalBranch outcome
    std::set<std::size_t> pruned;      // nodes cut by failed conditions
};

/// Decides what follows the current node given its observation.
inline Transition transition(const EpisodeState& s, const json& observation) {
    const std::size_t cur = s.node();
    const auto& plan = *s.plan;
    Transition t;
    t.pruned = s.pruned;
    std::optional<std::size_t> branch_target;
    bool branch = false, any_ok = false;
    for (const auto& e : plan.edges) {
        if (e.from != cur || !e.conditional) continue;
        branch = true;
        const bool ok = evaluate_condition(parse_condition(e.condition), observation);
        if (ok) {
            any_ok = true;
            if (!branch_target || e.to < *branch_target) branch_target = e.to;
        } else {
            t.pruned.insert(e.to);
        }
    }
    // Anything depending on a pruned node is pruned too.
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& e : plan.edges)
            if (t.pruned.count(e.from) && !t.pruned.count(e.to)) grew = t.pruned.insert(e.to).second || grew;
    }
    std::optional<std::size_t> next;
    for (std::size_t k = s.position + 1; k < s.order.size(); ++k)
        if (!t.pruned.count(s.order[k])) {
            next = s.order[k];
            break;
        }
    if (branch) {
        t.kind = TransitionKind::ConditionalBranch;
        t.satisfied = any_ok;
        t.target = any_ok ? branch_target : next;
        return t;
    }
    if (!next) {
        t.kind = TransitionKind::Termination;
        return t;
    }
    t.target = next;
    t.params = s.pending_masks(*next);
    t.kind = t.params.empty() ? TransitionKind::Standard : TransitionKind::UserClarification;
    return t;
}

struct EpisodeLimits {
    std::size_t max_steps = 32;
};

inline std::string clarification_question(const std::vector<std::string>& params) {
    std::vector<std::string> w;
    for (const auto& p : params) w.push_back(text::replace_all(p, "_", " "));
    return "Could you tell me the " + text::join(w, ", ") + "?";
}

inline std::string clarification_answer(const SubTask& node, const std::vector<std::string>& params) {
    std::vector<std::string> parts;
    for (const auto& p : params)
        parts.push_back(text::replace_all(p, "_", " ") + " is " +
                        (node.held_out.contains(p) ? detail::value_text(node.held_out[p]) : std::string("up to you")));
    return "The " + text::join(parts, ", the ") + ".";
}

/// Runs a composed plan end to end: clarification exchanges for masked
/// parameters, one user message per query turn, conditional pruning, and a
/// closing summary.
inline Trajectory run_golden(const ComposedPlan& plan, const Catalog& catalog, TextGenerator& gen,
                             ObservationSimulator& sim, std::uint64_t seed, const EpisodeLimits& limits = {}) {
    require(limits.max_steps >= 1, ErrorKind::InvalidArgument, "max_steps must be at least 1");
    Trajectory traj;
    traj.task_id = plan.id;
    traj.seed = seed;
    traj.domain_tag = catalog.at(plan.nodes.front().tool).domain_tag;
    EpisodeState s = EpisodeState::start(plan);
    std::size_t delivered = 1;
    std::string pending_user = plan.turns.front();
    std::size_t steps = 0;
    auto push = [&](Turn t) {
        t.user = std::move(pending_user);
        pending_user.clear();
        traj.turns.push_back(std::move(t));
        ++steps;
    };
    bool finished = true;
    for (s.position = 0; s.position < s.order.size(); ++s.position) {
        const std::size_t n = s.node();
        if (s.pruned.count(n)) continue;
        if (steps >= limits.max_steps) {
            finished = false;
            break;
        }
        while (plan.turn_of[n] >= delivered) {
            Turn t;
            t.think = "The current request is handled; waiting for the next one.";
            t.reply = "Done. What would you like next?";
            push(std::move(t));
            pending_user = plan.turns[delivered++];
        }
        if (auto masks = s.pending_masks(n); !masks.empty()) {
            Turn t;
            t.think = "The next call needs " + text::join(masks, ", ") + ", which the user has not given.";
            t.reply = clarification_question(masks);
            push(std::move(t));
            pending_user = clarification_answer(plan.nodes[n], masks);
            s.clarified[n].insert(masks.begin(), masks.end());
        }
        if (steps >= limits.max_steps) {
            finished = false;
            break;
        }
        Turn t = synthesize_turn(s, catalog, gen, sim, derive_seed(seed, "turn", n));
        const json obs = t.observations.front();
        s.observations[n] = obs;
        push(std::move(t));
        s.pruned = transition(s, obs).pruned;
    }
    if (finished) {
        Turn done;
        done.think = "All required sub-tasks are complete.";
        done.reply = plan.reply;
        traj.turns.push_back(std::move(done));
        traj.label = TrajectoryLabel::successful;
    }
    return traj;
}

// ---- long-horizon tasks ----

struct TaskInit {
    std::string requirement;
    std::string known_info;
    std::string rules;
};

struct Requirement {
    std::string description;
    std::string atomic_id;
    std::vector<SubTask> steps;
};

struct LongHorizonTask {
    std::string id;
    TaskInit init;
    std::vector<std::string> candidate_tools;
    std::vector<Requirement> requirements;
    std::size_t min_tools = 0;
    double termination_ratio = 0.8;
    std::string difficulty;
    std::string domain_tag;
    bool approved = false;  // set by manual review
};

struct DifficultyTier {
    std::string name;
    std::size_t tools = 0;
};

struct TaskConfig {
    std::size_t min_tools_threshold = 5;
    double termination_ratio = 0.8;
    std::size_t distractor_tools = 2;  // unrelated catalog tools added to the candidates
    std::vector<DifficultyTier> tiers{{"easy", 3}, {"medium", 6}, {"hard", 10}};

    const DifficultyTier& tier(std::string_view name) const {
        for (const auto& t : tiers)
            if (t.name == name) return t;
        fail(ErrorKind::ConfigError, "unknown difficulty tier " + std::string(name));
    }
};

/// (all requirements met) or (tools used >= ratio * candidates).
inline bool termination_reached(const LongHorizonTask& task, std::size_t tools_used, std::size_t requirements_met) {
    if (requirements_met >= task.requirements.size()) return true;
    const double need = task.termination_ratio * static_cast<double>(task.candidate_tools.size());
    return static_cast<double>(tools_used) >= need - 1e-9;
}

inline json to_json(const LongHorizonTask& t) {
    json reqs = json::array();
    for (const auto& r : t.requirements) {
        json steps = json::array();
        for (const auto& s : r.steps) steps.push_back(to_json(s));
        reqs.push_back({{"description", r.description}, {"atomic_id", r.atomic_id}, {"steps", steps}});
    }
    return {{"id", t.id},
            {"init", {{"requirement", t.init.requirement}, {"known_info", t.init.known_info}, {"rules", t.init.rules}}},
            {"candidate_tools", t.candidate_tools},
            {"requirements", reqs},
            {"min_tools", t.min_tools},
            {"termination", {{"all_requirements", true}, {"tool_ratio", t.termination_ratio}}},
            {"difficulty", t.difficulty},
            {"domain", t.domain_tag},
            {"approved", t.approved}};
}

/// Samples atomic tasks until the tier's tool count (and the configured
/// minimum) is reached, then asks the generator for the Init triple.
inline LongHorizonTask construct_task(const std::vector<AtomicPlan>& pool, const Catalog& catalog, std::string_view difficulty,
                                      TextGenerator& gen, std::uint64_t seed, const TaskConfig& cfg = {}) {
    const auto& tier = cfg.tier(difficulty);
    const std::size_t need = std::max(tier.tools, cfg.min_tools_threshold + 1);
    std::set<std::string> all_tools;
    for (const auto& a : pool)
        for (const auto& s : a.steps) all_tools.insert(s.tool);
    if (all_tools.size() < need)
        fail(ErrorKind::PoolTooSmall, "tier " + tier.name + " needs " + std::to_string(need) + " tools, pool offers " +
                                          std::to_string(all_tools.size()));
    Rng rng(seed);
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    LongHorizonTask task;
    task.difficulty = tier.name;
    task.termination_ratio = cfg.termination_ratio;
    task.min_tools = need;
    for (std::size_t i : idx) {
        if (task.candidate_tools.size() >= need) break;
        const auto& a = pool[i];
        Requirement r{a.query, plan_id(a), a.steps};
        for (auto& st : r.steps)
            for (const auto& m : st.masked_params)
                if (st.held_out.contains(m)) st.bound_args[m] = st.held_out[m];
        for (const auto& st : a.steps)
            if (std::find(task.candidate_tools.begin(), task.candidate_tools.end(), st.tool) == task.candidate_tools.end())
                task.candidate_tools.push_back(st.tool);
        task.requirements.push_back(std::move(r));
    }
    task.domain_tag = catalog.at(task.candidate_tools.front()).domain_tag;
    std::vector<std::string> spare;
    for (const auto& name : catalog.names())
        if (std::find(task.candidate_tools.begin(), task.candidate_tools.end(), name) == task.candidate_tools.end())
            spare.push_back(name);
    for (std::size_t i : rng.sample_indices(spare.size(), std::min(cfg.distractor_tools, spare.size())))
        task.candidate_tools.push_back(spare[i]);

    json reqs = json::array();
    for (const auto& r : task.requirements) reqs.push_back(r.description);
    GenerationRequest req;
    req.grammar = "task_init";
    req.seed = seed;
    req.prompt = "Write Init(requirement, known_info, rules) for a task covering these requests. The requirement must be "
                 "more general and vague than the requests.\n" + reqs.dump();
    req.payload = {{"requests", reqs}, {"tools", task.candidate_tools}};
    const json v = *parse_strict_json(generate_checked(gen, req));
    auto field = [&](const char* k) {
        if (!v[k].is_string()) fail(ErrorKind::MalformedGeneration, "prompt " + req.id() + ": " + k + " must be a string");
        return v[k].get<std::string>();
    };
    task.init = {field("requirement"), field("known_info"), field("rules")};
    task.id = "t" + text::hex64(fnv1a64(to_json(task).dump()));
    return task;
}

namespace detail {

struct OpenEpisode {
    const LongHorizonTask* task = nullptr;
    std::size_t revealed = 1;
    std::vector<std::vector<std::optional<json>>> obs;  // per requirement, per step

    bool met(std::size_t r) const {
        for (const auto& o : obs[r])
            if (!o || !observation_ok(*o)) return false;
        return true;
    }

    std::size_t met_count() const {
        std::size_t n = 0;
        for (std::size_t r = 0; r < obs.size(); ++r) n += met(r);
        return n;
    }

    /// Next outstanding call among revealed requirements, with placeholders
    /// resolved inside its requirement.
    std::optional<std::pair<std::size_t, std::size_t>> next_step() const {
        for (std::size_t r = 0; r < revealed && r < obs.size(); ++r)
            for (std::size_t k = 0; k < obs[r].size(); ++k)
                if (!obs[r][k]) return std::make_pair(r, k);
        return std::nullopt;
    }

    ToolCall call_for(std::size_t r, std::size_t k) const {
        ComposedPlan p;
        p.nodes = task->requirements[r].steps;
        EpisodeState s;
        s.plan = &p;
        s.observations = obs[r];
        return golden_call(s, k);
    }
};

}  // namespace detail

/// Open-ended synthesis: the agent proposes steps through the "agent_step"
/// grammar, each requirement is revealed by a user query, and the run ends
/// at the termination predicate or the step limit. The label is recomputed
/// from the observations, not taken from the generator.
inline Trajectory synthesize_trajectory(const LongHorizonTask& task, const Catalog& catalog, TextGenerator& gen,
                                        ObservationSimulator& sim, std::uint64_t seed, const EpisodeLimits& limits = {}) {
    require(limits.max_steps >= 1, ErrorKind::InvalidArgument, "max_steps must be at least 1");
    require(!task.requirements.empty(), ErrorKind::InvalidArgument, "task without requirements");
    Trajectory traj;
    traj.task_id = task.id;
    traj.seed = seed;
    traj.domain_tag = task.domain_tag;
    detail::OpenEpisode ep;
    ep.task = &task;
    for (const auto& r : task.requirements) ep.obs.emplace_back(r.steps.size());
    std::string pending_user = task.init.requirement;
    std::vector<std::string> queries{pending_user};
    std::set<std::string> used;
    std::size_t steps = 0;
    bool terminated = false;
    while (steps < limits.max_steps) {
        json pending = json::array();
        std::optional<std::pair<std::size_t, std::size_t>> next = ep.next_step();
        if (next) pending.push_back(to_json(ep.call_for(next->first, next->second)));
        GenerationRequest req;
        req.grammar = "agent_step";
        req.seed = derive_seed(seed, "agent_step", steps);
        req.prompt = "Init: " + task.init.requirement + "\nKnown: " + task.init.known_info + "\nRules: " + task.init.rules +
                     "\nTools: " + json(task.candidate_tools).dump() + "\nLatest user message: " + queries.back() +
                     "\nGive the next step as JSON {think, calls} or {think, reply}.";
        req.payload = {{"candidates", task.candidate_tools}, {"pending_calls", pending}, {"history_len", traj.turns.size()}};
        const json v = *parse_strict_json(generate_checked(gen, req));
        Turn t;
        t.user = std::move(pending_user);
        pending_user.clear();
        t.think = v["think"].is_string() ? v["think"].get<std::string>() : std::string();
        if (v.contains("calls") && v["calls"].is_array() && !v["calls"].empty()) {
            for (const auto& c : v["calls"]) {
                auto call = tool_call_from_json(c);
                if (!call) fail(ErrorKind::MalformedGeneration, "prompt " + req.id() + ": call without a name");
                json obs;
                const bool listed = std::find(task.candidate_tools.begin(), task.candidate_tools.end(), call->name) !=
                                    task.candidate_tools.end();
                if (!listed || !catalog.find(call->name)) {
                    obs = {{"status", "error"}, {"message", "unknown tool " + call->name}};
                } else {
                    obs = sim.observe(catalog.at(call->name), *call, req.seed);
                    used.insert(call->name);
                    // Credit the first outstanding step this call satisfies.
                    for (std::size_t r = 0; r < ep.revealed && r < ep.obs.size(); ++r) {
                        bool credited = false;
                        for (std::size_t k = 0; k < ep.obs[r].size(); ++k) {
                            if (ep.obs[r][k] || task.requirements[r].steps[k].tool != call->name) continue;
                            ep.obs[r][k] = obs;
                            credited = true;
                            break;
                        }
                        if (credited) break;
                    }
                }
                t.calls.push_back(*call);
                t.observations.push_back(obs);
            }
        } else {
            t.reply = v.contains("reply") && v["reply"].is_string() ? v["reply"].get<std::string>() : std::string("OK.");
        }
        const bool was_reply = t.reply.has_value();
        traj.turns.push_back(std::move(t));
        ++steps;
        if (termination_reached(task, used.size(), ep.met_count())) {
            terminated = true;
            break;
        }
        if (was_reply) {
            if (ep.revealed < task.requirements.size()) {
                json history = queries;
                json left = json::array();
                for (std::size_t r = ep.revealed; r < task.requirements.size(); ++r)
                    left.push_back(task.requirements[r].description);
                GenerationRequest q;
                q.grammar = "next_query";
                q.seed = derive_seed(seed, "next_query", ep.revealed);
                q.prompt = "Init: " + task.init.requirement + "\nEarlier queries: " + history.dump() +
                           "\nWrite the user's next message.";
                q.payload = {{"history", history}, {"pending", left}};
                pending_user = text::trim(generate_checked(gen, q));
                queries.push_back(pending_user);
                ++ep.revealed;
            } else {
                pending_user = "Is everything done?";
                queries.push_back(pending_user);
            }
        }
    }
    const bool success = terminated && ep.met_count() == task.requirements.size();
    // Every episode closes on an agent reply.
    if (!traj.turns.back().reply) {
        Turn done;
        done.think = success ? "Every request in the task has been handled." : "Some requests are still open.";
        done.reply = success ? "All of your requests are complete." : "I could not complete every request.";
        traj.turns.push_back(std::move(done));
    }
    traj.label = success ? TrajectoryLabel::successful : TrajectoryLabel::unsuccessful;
    return traj;
}

/// Recomputes the label from the trajectory itself.
inline bool label_consistent(const LongHorizonTask& task, const Trajectory& traj) {
    std::set<std::string> used;
    std::vector<std::vector<bool>> done;
    for (const auto& r : task.requirements) done.emplace_back(r.steps.size(), false);
    for (const auto& t : traj.turns) {
        for (std::size_t i = 0; i < t.calls.size(); ++i) {
            const auto& c = t.calls[i];
            if (std::find(task.candidate_tools.begin(), task.candidate_tools.end(), c.name) == task.candidate_tools.end())
                continue;
            used.insert(c.name);
            const bool ok = i < t.observations.size() && observation_ok(t.observations[i]);
            for (std::size_t r = 0; r < done.size(); ++r) {
                bool credited = false;
                for (std::size_t k = 0; k < done[r].size(); ++k)
                    if (!done[r][k] && task.requirements[r].steps[k].tool == c.name) {
                        done[r][k] = ok;
                        credited = true;
                        break;
                    }
                if (credited) break;
            }
        }
    }
    std::size_t met = 0;
    for (const auto& d : done) met += std::all_of(d.begin(), d.end(), [](bool b) { return b; });
    const bool success = met == task.requirements.size();
    return (traj.label == TrajectoryLabel::successful) == success;
}

// ---- serialization ----

inline std::string tool_call_message(const std::string& think, const ToolCall& c) {
    return "<think>\n" + think + "\n</think>\n<tool_call>\n" + dump_compact(to_json(c)) + "\n</tool_call>\n";
}

/// ShareGPT form {"conversations": [{"from", "value"}], "domain"}.
inline json to_sharegpt(const Trajectory& t) {
    json conv = json::array();
    auto add = [&](const char* from, std::string value) { conv.push_back({{"from", from}, {"value", std::move(value)}}); };
    for (const auto& turn : t.turns) {
        if (!turn.user.empty()) add("human", turn.user);
        if (turn.reply) {
            add("gpt", *turn.reply);
            continue;
        }
        for (std::size_t i = 0; i < turn.calls.size(); ++i) {
            add("gpt", tool_call_message(turn.think, turn.calls[i]));
            add("human", "<observation>" + dump_compact(turn.observations.at(i)) + "</observation>");
        }
    }
    return {{"conversations", conv}, {"domain", t.domain_tag}};
}

/// Chat form with `<action>` payloads in Python-literal syntax; the closing
/// reply becomes a `finish` action.
inline json to_action_chat(const Trajectory& t) {
    json msgs = json::array();
    auto add = [&](const char* role, std::string content) { msgs.push_back({{"role", role}, {"content", std::move(content)}}); };
    for (const auto& turn : t.turns) {
        if (!turn.user.empty()) add("user", turn.user);
        auto action = [&](const ToolCall& c) {
            return "<think>\n" + turn.think + "\n</think>\n<action>" +
                   to_python_literal({{"name", c.name}, {"arguments", c.arguments}}) + "</action>";
        };
        if (turn.reply) {
            add("assistant", action({"finish", {{"content", *turn.reply}}}));
            continue;
        }
        for (std::size_t i = 0; i < turn.calls.size(); ++i) {
            add("assistant", action(turn.calls[i]));
            add("user", "<observation>" + to_python_literal(turn.observations.at(i)) + "</observation>");
        }
    }
    return {{"messages", msgs}};
}

inline bool is_observation(std::string_view v) {
    const auto t = text::trim_view(v);
    return text::starts_with(t, "<observation>") && t.size() >= 27 && t.substr(t.size() - 14) == "</observation>";
}

/// Round-structure check of a ShareGPT record; empty when valid.
inline std::vector<std::string> sharegpt_problems(const json& rec) {
    std::vector<std::string> out;
    if (!rec.is_object() || !rec.contains("conversations") || !rec["conversations"].is_array()) {
        out.push_back("missing conversations array");
        return out;
    }
    const auto& conv = rec["conversations"];
    if (conv.empty()) {
        out.push_back("empty conversation");
        return out;
    }
    bool expect_obs = false;
    std::string prev;
    for (std::size_t i = 0; i < conv.size(); ++i) {
        const auto& m = conv[i];
        if (!m.is_object() || !m.contains("from") || !m.contains("value") || !m["value"].is_string()) {
            out.push_back("message " + std::to_string(i) + " malformed");
            continue;
        }
        const std::string from = m["from"].get<std::string>();
        const std::string value = m["value"].get<std::string>();
        if (from != "human" && from != "gpt") out.push_back("message " + std::to_string(i) + " has role " + from);
        if (i == 0 && from != "human") out.push_back("conversation must open with a human message");
        if (from == prev) out.push_back("message " + std::to_string(i) + " repeats role " + from);
        if (from == "human") {
            if (expect_obs && !is_observation(value)) out.push_back("message " + std::to_string(i) + " should be an observation");
            if (!expect_obs && is_observation(value)) out.push_back("message " + std::to_string(i) + " is an unrequested observation");
            expect_obs = false;
        } else if (from == "gpt") {
            if (text::contains(value, "<tool_call>")) {
                auto r = parse_output(TaskKind::long_horizon, value);
                if (!r.ok())
                    out.push_back("message " + std::to_string(i) + " tool call at " + std::to_string(r.error.position) +
                                  ": expected " + r.error.expectation);
                expect_obs = true;
            } else if (text::trim(value).empty()) {
                out.push_back("message " + std::to_string(i) + " is empty");
            }
        }
        prev = from;
    }
    if (expect_obs) out.push_back("final tool call has no observation");
    if (prev != "gpt" || text::contains(conv.back()["value"].get<std::string>(), "<tool_call>"))
        out.push_back("conversation must end with an agent reply");
    return out;
}

/// Inverse of to_sharegpt; raises ParseError on structure problems.
inline Trajectory trajectory_from_sharegpt(const json& rec) {
    if (auto p = sharegpt_problems(rec); !p.empty()) fail(ErrorKind::ParseError, text::join(p, "; "));
    Trajectory t;
    t.domain_tag = rec.value("domain", "");
    std::string user;
    Turn* open = nullptr;
    for (const auto& m : rec["conversations"]) {
        const std::string from = m["from"].get<std::string>();
        const std::string value = m["value"].get<std::string>();
        if (from == "human") {
            if (is_observation(value)) {
                std::string body = text::trim(value);
                body = body.substr(13, body.size() - 27);
                open->observations.push_back(parse_relaxed_json(body).value_or(json(body)));
            } else {
                user = value;
            }
            continue;
        }
        if (text::contains(value, "<tool_call>")) {
            auto r = parse_output(TaskKind::long_horizon, value);
            // consecutive tool calls without a user message extend one turn
            if (open && user.empty() && open->think == r.value->think && !open->reply) {
                open->calls.push_back(r.value->call);
                continue;
            }
            Turn turn;
            turn.user = std::exchange(user, std::string());
            turn.think = r.value->think;
            turn.calls.push_back(r.value->call);
            t.turns.push_back(std::move(turn));
            open = &t.turns.back();
        } else {
            Turn turn;
            turn.user = std::exchange(user, std::string());
            turn.reply = value;
            t.turns.push_back(std::move(turn));
            open = &t.turns.back();
        }
    }
    return t;
}

// ---- seeds and scaling ----

struct SeedSample {
    Trajectory trajectory;
    std::vector<std::string> tools;  // used tools, then augmented ones
};

/// Keeps successful, format-valid trajectories and augments each tool list
/// with up to top_k related tools, nearest first by description cosine to
/// the used tools, at most one per atomic task. `tool_task` maps tools to
/// the atomic task they came from; tools without an entry are not
/// candidates.
inline std::vector<SeedSample> filter_seeds(const std::vector<Trajectory>& trajectories, const Catalog& catalog,
                                            Embedder& embedder, std::size_t top_k,
                                            const std::map<std::string, std::string>& tool_task) {
    std::vector<SeedSample> seeds;
    std::map<std::string, EmbeddingVector> cache;
    auto vec = [&](const std::string& tool) -> const EmbeddingVector& {
        auto it = cache.find(tool);
        if (it == cache.end()) it = cache.emplace(tool, embedder.embed_one(catalog.at(tool).description)).first;
        return it->second;
    };
    for (const auto& t : trajectories) {
        if (t.label != TrajectoryLabel::successful) continue;
        if (!sharegpt_problems(to_sharegpt(t)).empty()) continue;
        SeedSample s{t, t.used_tools()};
        if (top_k > 0 && !s.tools.empty()) {
            std::vector<std::pair<double, std::string>> scored;
            for (const auto& [tool, task] : tool_task) {
                if (std::find(s.tools.begin(), s.tools.end(), tool) != s.tools.end() || !catalog.find(tool)) continue;
                double best = -2.0;
                for (const auto& u : s.tools)
                    if (catalog.find(u)) best = std::max(best, cosine(vec(tool), vec(u)));
                scored.emplace_back(best, tool);
            }
            std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
                return a.first != b.first ? a.first > b.first : a.second < b.second;
            });
            std::set<std::string> tasks;
            std::size_t added = 0;
            for (const auto& [score, tool] : scored) {
                if (added == top_k) break;
                if (!tasks.insert(tool_task.at(tool)).second) continue;
                s.tools.push_back(tool);
                ++added;
            }
        }
        seeds.push_back(std::move(s));
    }
    return seeds;
}

/// Problems with a generated trajectory relative to its tool list.
inline std::vector<std::string> scaled_problems(const json& rec, const std::vector<std::string>& tools, const Catalog& catalog) {
    std::vector<std::string> out = sharegpt_problems(rec);
    if (!out.empty()) return out;
    const Trajectory t = trajectory_from_sharegpt(rec);
    for (const auto& turn : t.turns) {
        for (const auto& c : turn.calls) {
            const bool listed = std::find(tools.begin(), tools.end(), c.name) != tools.end();
            if (!listed || !catalog.find(c.name)) {
                out.push_back("unknown tool " + c.name);
                continue;
            }
            for (const auto& p : catalog.at(c.name).required_parameters())
                if (!c.arguments.contains(p)) out.push_back("argument schema: " + c.name + " missing " + p);
            for (auto it = c.arguments.begin(); it != c.arguments.end(); ++it)
                if (!catalog.at(c.name).parameter(it.key())) out.push_back("argument schema: " + c.name + " has no " + it.key());
            if (auto why = reasoning_conflict(turn.think, c.name, tools)) out.push_back(*why);
        }
    }
    return out;
}

/// Asks the generator for a new trajectory modeled on `seed`; rejects it
/// with the list of problems when it fails validation.
inline Trajectory scale_from_seed(const SeedSample& seed, const Catalog& catalog, TextGenerator& gen, std::uint64_t rng_seed) {
    const json example = to_sharegpt(seed.trajectory);
    GenerationRequest req;
    req.grammar = "trajectory";
    req.seed = rng_seed;
    req.prompt = "Here is an example conversation:\n" + example.dump() + "\nAvailable tools: " + json(seed.tools).dump() +
                 "\nWrite a new conversation in the same format with a different user and goal. Random seed: " +
                 std::to_string(rng_seed);
    req.payload = {{"seed", example}, {"tools", seed.tools}};
    const json v = *parse_strict_json(generate_checked(gen, req));
    if (auto problems = scaled_problems(v, seed.tools, catalog); !problems.empty())
        fail(ErrorKind::GenerationRejected, text::join(problems, "; "));
    Trajectory t = trajectory_from_sharegpt(v);
    t.label = TrajectoryLabel::successful;
    t.seed = rng_seed;
    if (t.domain_tag.empty()) t.domain_tag = seed.trajectory.domain_tag;
    return t;
}

}  // namespace agentsynth
