#pragma once

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "agentsynth/backends.hpp"
#include "agentsynth/builtin_data.hpp"
#include "agentsynth/catalog.hpp"
#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/parallel.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/objectives.hpp"
#include "agentsynth/plans.hpp"
#include "agentsynth/quality.hpp"
#include "agentsynth/remote_backend.hpp"
#include "agentsynth/reward.hpp"
#include "agentsynth/schedule.hpp"
#include "agentsynth/select.hpp"
#include "agentsynth/templates.hpp"
#include "agentsynth/trajectory.hpp"
#include "agentsynth/workflow.hpp"

namespace agentsynth::pipeline {

// ---------------------------------------------------------------- manifest

struct StageCounts {
    std::string name;
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::map<std::string, std::size_t> drops;

    void drop(const std::string& reason, std::size_t n = 1) { drops[reason] += n; }

    std::size_t dropped() const {
        std::size_t n = 0;
        for (const auto& [_, c] : drops) n += c;
        return n;
    }

    bool conserves() const { return inputs == outputs + dropped(); }
};

inline json to_json(const StageCounts& s) {
    return {{"name", s.name}, {"inputs", s.inputs}, {"outputs", s.outputs}, {"drops", s.drops}};
}

struct RunManifest {
    std::string command;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::vector<StageCounts> stages;
    std::string backend_id;
    CacheStats cache;
    std::string error;  // stage-level failure, empty on success

    bool conserves() const {
        for (const auto& s : stages)
            if (!s.conserves()) return false;
        return true;
    }
};

inline json to_json(const RunManifest& m) {
    json stages = json::array();
    for (const auto& s : m.stages) stages.push_back(to_json(s));
    json out = {{"command", m.command},
                {"config_hash", m.config_hash},
                {"seed", m.seed},
                {"stages", stages},
                {"backend", {{"id", m.backend_id}, {"cache", to_json(m.cache)}}},
                {"conserved", m.conserves()}};
    if (!m.error.empty()) out["error"] = m.error;
    return out;
}

/// A dropped sample and the reason, written next to the output.
struct Drop {
    std::string stage;
    std::string id;
    std::string reason;
};

// ------------------------------------------------------------------ config

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"backend", {"kind", "endpoint", "model", "embed_model", "cache_dir", "timeout_seconds", "max_in_flight", "offline",
                     "embedder", "embedding_dim"}},
        {"catalog", {"path", "overrides"}},
        {"plans", {"count", "atoms", "max_depth", "weights", "format", "dedup_threshold"}},
        {"trajectories", {"count", "atoms", "max_depth", "mode", "format", "seeds_top_k", "max_steps"}},
        {"schedules", {"count", "domain", "min_cities", "max_cities", "min_friends", "max_friends", "earliest_preference"}},
        {"workflows", {"count", "distractors"}},
        {"longhorizon", {"count", "atoms", "difficulty", "format", "max_steps", "distractor_tools", "min_tools_threshold"}},
        {"dedup", {"threshold", "field"}},
        {"select", {"budget", "kappa1", "kappa2", "K", "field"}},
        {"score", {"task", "alpha", "tau", "match_threshold"}},
        {"eval", {"match_threshold"}},
    };
    return schema;
}

}  // namespace detail

/// One JSON document with a root seed and per-stage sections. Unknown keys
/// and ill-typed values are ConfigErrors naming the key path.
class Config {
public:
    Config() : doc_(json::object()) {}

    static Config parse(std::string_view text) {
        auto v = parse_strict_json(text);
        if (!v || !v->is_object()) fail(ErrorKind::ConfigError, "config is not a JSON object");
        Config c;
        c.doc_ = *v;
        c.validate();
        return c;
    }

    static Config load(const std::string& path) {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::ConfigError, "cannot read config " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    const json& doc() const { return doc_; }
    std::string hash() const { return text::hex64(fnv1a64(doc_.dump())); }

    bool has(const std::string& section, const std::string& key) const {
        return doc_.contains(section) && doc_[section].contains(key);
    }

    template <typename T>
    T get(const std::string& section, const std::string& key, T fallback) const {
        if (!has(section, key)) return fallback;
        return convert<T>(doc_[section][key], section + "." + key);
    }

    template <typename T>
    T required(const std::string& section, const std::string& key) const {
        if (!has(section, key)) fail(ErrorKind::ConfigError, "missing config key " + section + "." + key);
        return convert<T>(doc_[section][key], section + "." + key);
    }

    std::optional<std::uint64_t> seed() const {
        if (!doc_.contains("seed")) return std::nullopt;
        return convert<std::uint64_t>(doc_["seed"], "seed");
    }

    std::optional<unsigned> jobs() const {
        if (!doc_.contains("jobs")) return std::nullopt;
        return convert<unsigned>(doc_["jobs"], "jobs");
    }

    json raw(const std::string& section, const std::string& key) const {
        return has(section, key) ? doc_[section][key] : json();
    }

private:
    void validate() const {
        const auto& schema = detail::config_schema();
        for (auto it = doc_.begin(); it != doc_.end(); ++it) {
            if (it.key() == "seed" || it.key() == "jobs") continue;
            auto s = schema.find(it.key());
            if (s == schema.end()) fail(ErrorKind::ConfigError, "unknown config key " + it.key());
            if (!it.value().is_object()) fail(ErrorKind::ConfigError, "config key " + it.key() + " must be an object");
            for (auto k = it.value().begin(); k != it.value().end(); ++k)
                if (!s->second.count(k.key())) fail(ErrorKind::ConfigError, "unknown config key " + it.key() + "." + k.key());
        }
        if (doc_.contains("seed")) (void)seed();
        if (doc_.contains("jobs")) (void)jobs();
    }

    template <typename T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(ErrorKind::ConfigError, "config key " + path + " must be a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
                fail(ErrorKind::ConfigError, "config key " + path + " must be a nonnegative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(ErrorKind::ConfigError, "config key " + path + " must be a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(ErrorKind::ConfigError, "config key " + path + " must be a string");
        } else {
            try {
                return v.get<T>();
            } catch (const json::exception&) {
                fail(ErrorKind::ConfigError, "config key " + path + " has the wrong type");
            }
        }
        return v.get<T>();
    }

    json doc_;
};

// ------------------------------------------------------------------ context

/// Flags override config values.
struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::string out;
    std::string cache_dir;
    std::optional<std::size_t> count;
    std::string in;
    std::string task;
    std::optional<std::size_t> budget;
    std::string domain;
    std::string difficulty;
};

struct Context {
    Config config;
    Options options;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::unique_ptr<TextGenerator> generator;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<Judge> judge;
    Catalog catalog;
    ToolGraphs graphs;

    std::string backend_id() const { return generator ? generator->id() : "none"; }

    CacheStats cache_stats() const {
        if (auto* r = dynamic_cast<const RemoteGenerator*>(generator.get())) return r->cache_stats();
        return {};
    }

    std::size_t count(const std::string& section, std::size_t fallback) const {
        if (options.count) return *options.count;
        return config.get<std::size_t>(section, "count", fallback);
    }
};

inline Catalog load_catalog(const Config& cfg) {
    const std::string path = cfg.get<std::string>("catalog", "path", "");
    if (path.empty()) return builtin::demo_catalog();
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigError, "cannot read catalog " + path);
    return load_catalog_jsonl(in);
}

inline json load_overrides(const Config& cfg) {
    if (!cfg.has("catalog", "overrides")) return cfg.has("catalog", "path") ? json() : builtin::demo_overrides();
    const json v = cfg.raw("catalog", "overrides");
    if (v.is_object()) return v;
    if (!v.is_string()) fail(ErrorKind::ConfigError, "config key catalog.overrides must be an object or a path");
    std::ifstream in(v.get<std::string>());
    if (!in) fail(ErrorKind::ConfigError, "cannot read overrides " + v.get<std::string>());
    json o = json::parse(in, nullptr, false);
    if (o.is_discarded()) fail(ErrorKind::ConfigError, "overrides file is not JSON");
    return o;
}

inline Context make_context(const Options& opts) {
    Context ctx;
    ctx.options = opts;
    if (!opts.config_path.empty()) ctx.config = Config::load(opts.config_path);
    ctx.seed = opts.seed ? *opts.seed : ctx.config.seed().value_or(0);
    ctx.jobs = opts.jobs ? *opts.jobs : ctx.config.jobs().value_or(1);
    const std::string kind = ctx.config.get<std::string>("backend", "kind", "template");
    const std::string cache_dir =
        !opts.cache_dir.empty() ? opts.cache_dir : ctx.config.get<std::string>("backend", "cache_dir", "");
    RemoteConfig rc;
    rc.endpoint = ctx.config.get<std::string>("backend", "endpoint", "");
    rc.model = ctx.config.get<std::string>("backend", "model", "");
    rc.cache_dir = cache_dir;
    rc.timeout_seconds = ctx.config.get<int>("backend", "timeout_seconds", 60);
    rc.max_in_flight = ctx.config.get<unsigned>("backend", "max_in_flight", 4);
    rc.offline = ctx.config.get<bool>("backend", "offline", false);
    if (kind == "template") {
        ctx.generator = make_template_generator();
        ctx.judge = std::make_unique<StubJudge>();
    } else if (kind == "remote") {
        if (rc.model.empty()) fail(ErrorKind::ConfigError, "missing config key backend.model");
        ctx.generator = std::make_unique<RemoteGenerator>(rc);
        ctx.judge = std::make_unique<RemoteJudge>(rc);
    } else {
        fail(ErrorKind::ConfigError, "config key backend.kind must be template or remote");
    }
    const std::string emb = ctx.config.get<std::string>("backend", "embedder", "hashed");
    if (emb == "hashed") {
        ctx.embedder = std::make_unique<HashedBowEmbedder>(ctx.config.get<std::size_t>("backend", "embedding_dim", 256));
    } else if (emb == "remote") {
        RemoteConfig ec = rc;
        ec.model = ctx.config.get<std::string>("backend", "embed_model", rc.model);
        ctx.embedder = std::make_unique<RemoteEmbedder>(ec);
    } else {
        fail(ErrorKind::ConfigError, "config key backend.embedder must be hashed or remote");
    }
    try {
        ctx.catalog = load_catalog(ctx.config);
        ctx.graphs = build_graphs(ctx.catalog, load_overrides(ctx.config));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        fail(ErrorKind::ConfigError, "catalog: " + e.detail());
    }
    return ctx;
}

// ------------------------------------------------------------------- stages

struct StageOutput {
    std::vector<json> records;
    std::vector<StageCounts> stages;
    std::vector<Drop> drops;

    void drop(StageCounts& s, const std::string& id, const std::string& reason, const std::string& detail) {
        s.drop(reason);
        drops.push_back({s.name, id, detail.empty() ? reason : reason + ": " + detail});
    }
};

namespace detail {

inline std::string reason_of(const Error& e) { return std::string(to_string(e.kind())); }

/// Runs fn(i) -> optional<T> over [0, n) in parallel, keeping index order.
template <typename T, typename Fn>
std::vector<std::pair<std::optional<T>, std::pair<std::string, std::string>>> map_indexed(std::size_t n, unsigned jobs, Fn&& fn) {
    std::vector<std::pair<std::optional<T>, std::pair<std::string, std::string>>> out(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        try {
            out[i].first = fn(i);
        } catch (const BackendError& e) {
            out[i].second = {"BackendFailure", e.detail()};
        } catch (const Error& e) {
            out[i].second = {reason_of(e), e.detail()};
        }
    });
    return out;
}

}  // namespace detail

/// Atomic plans over a cycle of isolated / serial / parallel selections.
inline std::vector<AtomicPlan> atomic_pool(Context& ctx, std::size_t n, StageOutput& out) {
    StageCounts st{"atomic", n, 0, {}};
    static constexpr AtomicKind kinds[] = {AtomicKind::isolated, AtomicKind::serial, AtomicKind::parallel};
    auto results = detail::map_indexed<AtomicPlan>(n, ctx.jobs, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(ctx.seed, "atomic", i);
        const ToolSelection sel = sample_selection(ctx.graphs, kinds[i % 3], s);
        return synthesize_atomic(sel, ctx.catalog, *ctx.generator, s);
    });
    std::vector<AtomicPlan> pool;
    for (std::size_t i = 0; i < n; ++i) {
        if (results[i].first) {
            pool.push_back(std::move(*results[i].first));
            ++st.outputs;
        } else {
            out.drop(st, "atomic-" + std::to_string(i), results[i].second.first, results[i].second.second);
        }
    }
    out.stages.push_back(st);
    if (pool.empty()) fail(ErrorKind::StageError, "atomic: no atomic plan could be synthesized");
    return pool;
}

inline CompositionConfig composition_config(const Config& cfg, const std::string& section) {
    CompositionConfig c;
    c.max_depth = cfg.get<std::size_t>(section, "max_depth", c.max_depth);
    if (cfg.has(section, "weights")) {
        const auto w = cfg.get<std::vector<double>>(section, "weights", {});
        if (w.size() != 6) fail(ErrorKind::ConfigError, "config key " + section + ".weights needs 6 entries");
        std::copy(w.begin(), w.end(), c.weights.begin());
    }
    return c;
}

/// Composed plans that pass dedup and schema validation.
inline std::vector<ComposedPlan> composed_plans(Context& ctx, const std::string& section, std::size_t count, StageOutput& out) {
    const auto pool = atomic_pool(ctx, ctx.config.get<std::size_t>(section, "atoms", 24), out);
    const CompositionConfig ccfg = composition_config(ctx.config, section);
    PlanComposer composer(ctx.catalog, ctx.graphs);
    StageCounts st{"compose", count, 0, {}};
    auto results = detail::map_indexed<ComposedPlan>(
        count, ctx.jobs, [&](std::size_t i) { return compose_random(composer, pool, ccfg, derive_seed(ctx.seed, "plan", i)); });
    std::vector<ComposedPlan> plans;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < count; ++i) {
        auto& [plan, why] = results[i];
        if (!plan) {
            out.drop(st, "plan-" + std::to_string(i), why.first, why.second);
        } else if (!ids.insert(plan->id).second) {
            out.drop(st, plan->id, "duplicate_id", "");
        } else {
            plans.push_back(std::move(*plan));
            ++st.outputs;
        }
    }
    out.stages.push_back(st);

    StageCounts qf{"quality", plans.size(), 0, {}};
    std::vector<TextSample> samples;
    for (const auto& p : plans) samples.push_back({p.id, render_sample(p)});
    const auto report = run_quality_filter(samples, TaskKind::decomposition, ctx.judge.get(),
                                           ctx.config.get<int>(section, "dedup_threshold", 3));
    for (const auto& d : report.dropped) out.drop(qf, d.sample_id, d.stage, d.reason);
    for (const auto& d : report.quarantined) out.drop(qf, d.sample_id, "quarantine", d.reason);
    const std::set<std::string> keep(report.retained.begin(), report.retained.end());
    std::vector<ComposedPlan> kept;
    for (auto& p : plans)
        if (keep.count(p.id)) kept.push_back(std::move(p));
    qf.outputs = kept.size();
    out.stages.push_back(qf);
    return kept;
}

inline StageOutput synth_plans(Context& ctx) {
    StageOutput out;
    const std::string format = ctx.config.get<std::string>("plans", "format", "record");
    if (format != "record" && format != "chat") fail(ErrorKind::ConfigError, "config key plans.format must be record or chat");
    for (const auto& p : composed_plans(ctx, "plans", ctx.count("plans", 20), out)) {
        if (format == "record") {
            out.records.push_back(sample_record(p));
        } else {
            json r = render_chat(p);
            r["id"] = p.id;
            out.records.push_back(std::move(r));
        }
    }
    return out;
}

inline json trajectory_record(const Trajectory& t, const std::string& id, const std::string& format) {
    json r = format == "action_chat" ? to_action_chat(t) : to_sharegpt(t);
    r["id"] = id;
    r["label"] = std::string(to_string(t.label));
    return r;
}

inline std::vector<std::string> trajectory_problems(const Trajectory& t) {
    std::vector<std::string> out = sharegpt_problems(to_sharegpt(t));
    for (const auto& turn : t.turns)
        for (const auto& c : turn.calls)
            if (auto err = validate_schema(tool_call_message(turn.think, c), TaskKind::long_horizon))
                out.push_back("tool call at " + std::to_string(err->position) + ": expected " + err->expectation);
    return out;
}

inline StageOutput synth_trajectories(Context& ctx) {
    StageOutput out;
    const std::string mode = ctx.config.get<std::string>("trajectories", "mode", "golden");
    const std::string format = ctx.config.get<std::string>("trajectories", "format", "sharegpt");
    if (mode != "golden" && mode != "scaled") fail(ErrorKind::ConfigError, "config key trajectories.mode must be golden or scaled");
    if (format != "sharegpt" && format != "action_chat")
        fail(ErrorKind::ConfigError, "config key trajectories.format must be sharegpt or action_chat");
    EpisodeLimits limits;
    limits.max_steps = ctx.config.get<std::size_t>("trajectories", "max_steps", limits.max_steps);
    const std::size_t count = ctx.count("trajectories", 20);
    const auto plans = composed_plans(ctx, "trajectories", count, out);
    StubSimulator sim;

    StageCounts st{"golden", plans.size(), 0, {}};
    auto results = detail::map_indexed<Trajectory>(plans.size(), ctx.jobs, [&](std::size_t i) {
        Trajectory t = run_golden(plans[i], ctx.catalog, *ctx.generator, sim, derive_seed(ctx.seed, "golden", i), limits);
        if (auto problems = trajectory_problems(t); !problems.empty())
            fail(ErrorKind::GenerationRejected, text::join(problems, "; "));
        return t;
    });
    std::vector<Trajectory> golden;
    std::vector<std::string> golden_ids;
    for (std::size_t i = 0; i < plans.size(); ++i) {
        if (results[i].first) {
            golden.push_back(std::move(*results[i].first));
            golden_ids.push_back("g" + plans[i].id.substr(1));
            ++st.outputs;
        } else {
            out.drop(st, plans[i].id, results[i].second.first, results[i].second.second);
        }
    }
    out.stages.push_back(st);
    if (mode == "golden") {
        for (std::size_t i = 0; i < golden.size(); ++i) out.records.push_back(trajectory_record(golden[i], golden_ids[i], format));
        return out;
    }

    std::map<std::string, std::string> tool_task;
    for (std::size_t i = 0; i < plans.size(); ++i)
        for (const auto& step : plans[i].provenance)
            if (step.op == "atomic")
                for (const auto& n : plans[i].nodes) tool_task.emplace(n.tool, step.output);
    for (const auto& t : ctx.catalog.tools()) tool_task.emplace(t.name, "catalog:" + t.name);
    StageCounts sf{"seeds", golden.size(), 0, {}};
    const auto seeds = filter_seeds(golden, ctx.catalog, *ctx.embedder,
                                    ctx.config.get<std::size_t>("trajectories", "seeds_top_k", 3), tool_task);
    sf.outputs = seeds.size();
    if (seeds.size() < golden.size()) sf.drop("not_seed", golden.size() - seeds.size());
    out.stages.push_back(sf);
    if (seeds.empty()) fail(ErrorKind::StageError, "seeds: no successful seed trajectory");

    StageCounts sc{"scale", count, 0, {}};
    auto scaled = detail::map_indexed<Trajectory>(count, ctx.jobs, [&](std::size_t i) {
        return scale_from_seed(seeds[i % seeds.size()], ctx.catalog, *ctx.generator, derive_seed(ctx.seed, "scale", i));
    });
    for (std::size_t i = 0; i < count; ++i) {
        const std::string id = "x" + text::hex64(derive_seed(ctx.seed, "scale", i));
        if (scaled[i].first) {
            out.records.push_back(trajectory_record(*scaled[i].first, id, format));
            ++sc.outputs;
        } else {
            out.drop(sc, id, scaled[i].second.first, scaled[i].second.second);
        }
    }
    out.stages.push_back(sc);
    return out;
}

inline std::string schedule_completion(const std::string& answer) {
    return "<think>\n</think>\n<answer>" + answer + "</answer>";
}

/// Problems that keep a generated schedule sample out of the output.
inline std::vector<std::string> schedule_problems(const ScheduleProblem& problem, const RenderedSchedule& r) {
    std::vector<std::string> out = audit_prompt(problem, r);
    if (auto err = validate_schema(schedule_completion(r.answer), TaskKind::scheduling))
        out.push_back("schema at " + std::to_string(err->position) + ": expected " + err->expectation);
    try {
        for (auto& v : verify(problem, parse_itinerary(problem, r.answer))) out.push_back("verify: " + v);
    } catch (const Error& e) {
        out.push_back("answer does not parse: " + e.detail());
    }
    return out;
}

inline StageOutput synth_schedules(Context& ctx) {
    StageOutput out;
    const std::string domain = !ctx.options.domain.empty() ? ctx.options.domain
                                                            : ctx.config.get<std::string>("schedules", "domain", "mixed");
    if (domain != "trip" && domain != "meeting" && domain != "calendar" && domain != "mixed")
        fail(ErrorKind::ConfigError, "config key schedules.domain must be trip, meeting, calendar or mixed");
    TripParams tp;
    tp.min_cities = ctx.config.get<int>("schedules", "min_cities", tp.min_cities);
    tp.max_cities = ctx.config.get<int>("schedules", "max_cities", tp.max_cities);
    MeetingParams mp;
    mp.min_friends = ctx.config.get<int>("schedules", "min_friends", mp.min_friends);
    mp.max_friends = ctx.config.get<int>("schedules", "max_friends", mp.max_friends);
    CalendarParams cp;
    cp.earliest_preference = ctx.config.get<bool>("schedules", "earliest_preference", cp.earliest_preference);
    const std::size_t count = ctx.count("schedules", 20);
    StageCounts st{"schedule", count, 0, {}};
    auto results = detail::map_indexed<json>(count, ctx.jobs, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(ctx.seed, "schedule", i);
        const std::string d = domain == "mixed" ? std::string(i % 3 == 0 ? "trip" : i % 3 == 1 ? "meeting" : "calendar") : domain;
        const ScheduleInstance inst = d == "trip" ? generate_instance(tp, s) : d == "meeting" ? generate_instance(mp, s)
                                                                                             : generate_instance(cp, s);
        const RenderedSchedule r = render_nl(inst.problem, inst.solution, s);
        if (auto problems = schedule_problems(inst.problem, r); !problems.empty())
            fail(ErrorKind::GenerationRejected, text::join(problems, "; "));
        json messages = json::array({json{{"role", "user"}, {"content", r.prompt}}, json{{"role", "assistant"}, {"content", r.answer}}});
        return json{{"id", "s" + text::hex64(s)},
                    {"domain", domain_name(inst.problem)},
                    {"messages", messages},
                    {"problem", to_json(inst.problem)},
                    {"solution", to_json(inst.solution)}};
    });
    for (std::size_t i = 0; i < count; ++i) {
        if (results[i].first) {
            out.records.push_back(std::move(*results[i].first));
            ++st.outputs;
        } else {
            out.drop(st, "s" + text::hex64(derive_seed(ctx.seed, "schedule", i)), results[i].second.first,
                     results[i].second.second);
        }
    }
    out.stages.push_back(st);
    return out;
}

inline StageOutput synth_workflows(Context& ctx) {
    StageOutput out;
    const auto tasks = builtin::workflow_tasks();
    const auto pool = builtin::workflow_distractor_pool();
    const auto prompt = builtin::workflow_prompt();
    const std::size_t distractors = ctx.config.get<std::size_t>("workflows", "distractors", 3);
    const std::size_t count = ctx.count("workflows", 20);
    StageCounts st{"workflow", count, 0, {}};
    auto results = detail::map_indexed<json>(count, ctx.jobs, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(ctx.seed, "workflow", i);
        Rng rng(s);
        const GoldWorkflow& gold = tasks[rng.index(tasks.size())];
        const WorkflowDAG dag = build_workflow(gold, pool, distractors, s);
        if (auto problems = validate_workflow(dag, gold); !problems.empty())
            fail(ErrorKind::GenerationRejected, text::join(problems, "; "));
        const WorkflowDAG back = parse_workflow(serialize_workflow(dag));
        if (back.nodes != dag.nodes || back.edges != dag.edges) fail(ErrorKind::GenerationRejected, "serialization round trip");
        json r = workflow_chat_sample(prompt, gold.task, dag);
        r["id"] = "w" + text::hex64(s);
        return r;
    });
    for (std::size_t i = 0; i < count; ++i) {
        if (results[i].first) {
            out.records.push_back(std::move(*results[i].first));
            ++st.outputs;
        } else {
            out.drop(st, "w" + text::hex64(derive_seed(ctx.seed, "workflow", i)), results[i].second.first,
                     results[i].second.second);
        }
    }
    out.stages.push_back(st);
    return out;
}

inline StageOutput synth_longhorizon(Context& ctx) {
    StageOutput out;
    const std::string difficulty = !ctx.options.difficulty.empty()
                                       ? ctx.options.difficulty
                                       : ctx.config.get<std::string>("longhorizon", "difficulty", "easy");
    const std::string format = ctx.config.get<std::string>("longhorizon", "format", "sharegpt");
    if (format != "sharegpt" && format != "action_chat")
        fail(ErrorKind::ConfigError, "config key longhorizon.format must be sharegpt or action_chat");
    TaskConfig tcfg;
    tcfg.distractor_tools = ctx.config.get<std::size_t>("longhorizon", "distractor_tools", tcfg.distractor_tools);
    tcfg.min_tools_threshold = ctx.config.get<std::size_t>("longhorizon", "min_tools_threshold", tcfg.min_tools_threshold);
    try {
        (void)tcfg.tier(difficulty);
    } catch (const Error& e) {
        fail(ErrorKind::ConfigError, "longhorizon.difficulty: " + e.detail());
    }
    EpisodeLimits limits;
    limits.max_steps = ctx.config.get<std::size_t>("longhorizon", "max_steps", limits.max_steps);
    const auto pool = atomic_pool(ctx, ctx.config.get<std::size_t>("longhorizon", "atoms", 36), out);
    const std::size_t count = ctx.count("longhorizon", 10);
    StubSimulator sim;
    StageCounts st{"longhorizon", count, 0, {}};
    auto results = detail::map_indexed<json>(count, ctx.jobs, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(ctx.seed, "longhorizon", i);
        const LongHorizonTask task = construct_task(pool, ctx.catalog, difficulty, *ctx.generator, s, tcfg);
        const Trajectory t = synthesize_trajectory(task, ctx.catalog, *ctx.generator, sim, s, limits);
        if (!label_consistent(task, t)) fail(ErrorKind::GenerationRejected, "label does not match the observations");
        if (auto problems = trajectory_problems(t); !problems.empty())
            fail(ErrorKind::GenerationRejected, text::join(problems, "; "));
        json r = trajectory_record(t, "l" + text::hex64(s), format);
        r["task"] = to_json(task);
        return r;
    });
    for (std::size_t i = 0; i < count; ++i) {
        if (results[i].first) {
            out.records.push_back(std::move(*results[i].first));
            ++st.outputs;
        } else {
            out.drop(st, "l" + text::hex64(derive_seed(ctx.seed, "longhorizon", i)), results[i].second.first,
                     results[i].second.second);
        }
    }
    out.stages.push_back(st);
    return out;
}

// ---------------------------------------------------------- file stages

inline std::vector<json> read_jsonl(const std::string& path) {
    if (path.empty()) fail(ErrorKind::ConfigError, "missing --in");
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ConfigError, "cannot read " + path);
    std::vector<json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim_view(line).empty()) continue;
        auto v = parse_strict_json(line);
        if (!v) fail(ErrorKind::StageError, "read: " + path + ":" + std::to_string(n) + " is not JSON");
        out.push_back(std::move(*v));
    }
    return out;
}

inline std::string record_id(const json& r, std::size_t line) {
    if (r.is_object() && r.contains("id") && r["id"].is_string()) return r["id"].get<std::string>();
    return "line-" + std::to_string(line + 1);
}

/// The record's text field, else plan_text, else the joined chat turns.
inline std::optional<std::string> record_text(const json& r, const std::string& field) {
    if (!r.is_object()) return std::nullopt;
    if (r.contains(field) && r[field].is_string()) return r[field].get<std::string>();
    if (r.contains("plan_text") && r["plan_text"].is_string()) return r["plan_text"].get<std::string>();
    for (const auto& [list, key] : {std::pair{"messages", "content"}, std::pair{"conversations", "value"}}) {
        if (!r.contains(list) || !r[list].is_array()) continue;
        std::string s;
        for (const auto& m : r[list])
            if (m.contains(key) && m[key].is_string()) s += m[key].get<std::string>() + "\n";
        return s;
    }
    return std::nullopt;
}

inline StageOutput run_dedup(Context& ctx) {
    StageOutput out;
    const auto rows = read_jsonl(ctx.options.in);
    const std::string field = ctx.config.get<std::string>("dedup", "field", "text");
    const int threshold = ctx.config.get<int>("dedup", "threshold", 3);
    StageCounts st{"dedup", rows.size(), 0, {}};
    std::vector<TextSample> samples;
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string id = record_id(rows[i], i);
        auto t = record_text(rows[i], field);
        if (!t || text::trim_view(*t).empty()) {
            out.drop(st, id, "missing_text", field);
            continue;
        }
        if (!row_of.emplace(id, i).second) {
            out.drop(st, id, "duplicate_id", "");
            continue;
        }
        samples.push_back({id, *t});
    }
    const auto r = dedup(samples, threshold);
    for (const auto& d : r.dropped)
        out.drop(st, d.dropped, "near_duplicate", "of " + d.kept + " at distance " + std::to_string(d.distance));
    for (const auto& id : r.retained) out.records.push_back(rows[row_of.at(id)]);
    st.outputs = r.retained.size();
    out.stages.push_back(st);
    return out;
}

inline StageOutput run_select(Context& ctx) {
    StageOutput out;
    SelectionConfig cfg;
    cfg.budget = ctx.options.budget ? *ctx.options.budget : ctx.config.required<std::size_t>("select", "budget");
    cfg.kappa1 = ctx.config.get<double>("select", "kappa1", cfg.kappa1);
    cfg.kappa2 = ctx.config.get<double>("select", "kappa2", cfg.kappa2);
    cfg.K = ctx.config.get<std::size_t>("select", "K", cfg.K);
    cfg.jobs = ctx.jobs;
    std::vector<std::string> ids;
    std::vector<std::vector<double>> rows;
    const std::string& in = ctx.options.in;
    if (in.size() > 4 && in.ends_with(".bin")) {
        auto m = read_embedding_matrix(in, in + ".json");
        ids = std::move(m.ids);
        rows = std::move(m.rows);
    } else {
        const auto recs = read_jsonl(in);
        const std::string field = ctx.config.get<std::string>("select", "field", "text");
        std::vector<std::string> texts;
        for (std::size_t i = 0; i < recs.size(); ++i) {
            auto t = record_text(recs[i], field);
            if (!t) fail(ErrorKind::StageError, "select: record " + record_id(recs[i], i) + " has no " + field);
            ids.push_back(record_id(recs[i], i));
            texts.push_back(*t);
        }
        if (!texts.empty())
            for (auto& v : ctx.embedder->embed(texts)) rows.push_back(std::move(v.values));
    }
    StageCounts st{"select", rows.size(), 0, {}};
    try {
        cfg.validate(rows.size());
    } catch (const Error& e) {
        fail(ErrorKind::ConfigError, "select.budget: " + e.detail());
    }
    const auto picked = novelsum_select(rows, cfg);
    for (std::size_t r = 0; r < picked.size(); ++r) out.records.push_back({{"id", ids[picked[r]]}, {"rank", r + 1}});
    st.outputs = picked.size();
    if (rows.size() > picked.size()) st.drop("not_selected", rows.size() - picked.size());
    out.stages.push_back(st);
    return out;
}

inline RewardConfig reward_config(const Config& cfg) {
    RewardConfig rc;
    if (cfg.has("score", "alpha")) {
        const auto a = cfg.get<std::vector<double>>("score", "alpha", {});
        if (a.size() != 5) fail(ErrorKind::ConfigError, "config key score.alpha needs 5 entries");
        std::copy(a.begin(), a.end(), rc.alpha.begin());
    }
    rc.tau = cfg.get<double>("score", "tau", rc.tau);
    rc.match_threshold = cfg.get<double>("score", "match_threshold", rc.match_threshold);
    try {
        rc.validate();
    } catch (const Error& e) {
        fail(ErrorKind::ConfigError, "score: " + e.detail());
    }
    return rc;
}

/// Lines {id, pred, gold[, problem]}; emits the reward breakdown per line.
inline StageOutput run_score(Context& ctx) {
    StageOutput out;
    const std::string task = !ctx.options.task.empty() ? ctx.options.task : ctx.config.required<std::string>("score", "task");
    TaskKind kind;
    try {
        kind = task_kind_from_string(task);
    } catch (const Error& e) {
        fail(ErrorKind::ConfigError, "score.task: " + e.detail());
    }
    const RewardConfig rc = reward_config(ctx.config);
    const auto rows = read_jsonl(ctx.options.in);
    StageCounts st{"score", rows.size(), 0, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const json& r = rows[i];
        const std::string id = record_id(r, i);
        if (!r.is_object() || !r.contains("pred") || !r["pred"].is_string() || !r.contains("gold") || !r["gold"].is_string()) {
            out.drop(st, id, "missing_fields", "need pred and gold strings");
            continue;
        }
        try {
            std::optional<ScheduleProblem> problem;
            if (r.contains("problem")) problem = schedule_problem_from_json(r["problem"]);
            const RewardGold gold = gold_from_text(kind, r["gold"].get<std::string>(), problem);
            const RewardBreakdown b = reward_total(kind, r["pred"].get<std::string>(), gold, rc, *ctx.embedder);
            json rec = to_json(b);
            rec["id"] = id;
            out.records.push_back(std::move(rec));
            ++st.outputs;
        } catch (const Error& e) {
            out.drop(st, id, detail::reason_of(e), e.detail());
        }
    }
    out.stages.push_back(st);
    return out;
}

/// Lines {id, pred, gold} holding serialized workflows.
inline StageOutput run_eval_f1(Context& ctx) {
    StageOutput out;
    const double threshold = ctx.config.get<double>("eval", "match_threshold", 0.85);
    const auto rows = read_jsonl(ctx.options.in);
    StageCounts st{"eval-f1", rows.size(), 0, {}};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const json& r = rows[i];
        const std::string id = record_id(r, i);
        if (!r.is_object() || !r.contains("pred") || !r["pred"].is_string() || !r.contains("gold") || !r["gold"].is_string()) {
            out.drop(st, id, "missing_fields", "need pred and gold strings");
            continue;
        }
        const auto pred = parse_output(TaskKind::workflow, r["pred"].get<std::string>());
        const auto gold = parse_output(TaskKind::workflow, r["gold"].get<std::string>());
        if (!gold.ok()) {
            out.drop(st, id, "ParseError", "gold: " + gold.error.expectation);
            continue;
        }
        json diag = json::object();
        double reward = 0.0;
        if (pred.ok()) {
            reward = reward_workflow(pred.value->graph, gold.value->graph, *ctx.embedder, threshold, &diag);
        } else {
            diag["format_error"] = pred.error.expectation;
        }
        out.records.push_back({{"id", id},
                               {"f1_chain", diag.value("f1_chain", 0.0)},
                               {"f1_graph", diag.value("f1_graph", 0.0)},
                               {"reward", reward}});
        ++st.outputs;
    }
    out.stages.push_back(st);
    return out;
}

struct SpotCheck {
    std::string name;
    double value = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;

    bool pass() const { return std::abs(value - expected) <= tolerance; }
};

/// Objective-math spot values with their tolerances.
inline std::vector<SpotCheck> math_spot_checks() {
    const double ln2 = std::log(2.0);
    SmoothingConfig sc;
    return {
        {"kl_estimate(ln 2)", kl_estimate({ln2}), 1.0 - ln2, 1e-4},
        {"z_loss([[0,0]])", z_loss({{0.0, 0.0}}), ln2 * ln2, 1e-9},
        {"lbl_global(uniform)", lbl_global({0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}), 1.0, 1e-9},
        {"max_vio([4,0,2,2])", max_vio({4, 0, 2, 2}), 1.0, 0.0},
        {"smoothing_penalty(out of band)", smoothing_penalty({10.0, Segment::think}, sc), -0.2, 0.0},
    };
}

inline StageOutput run_math_check(Context&) {
    StageOutput out;
    const auto checks = math_spot_checks();
    StageCounts st{"math-check", checks.size(), 0, {}};
    for (const auto& c : checks) {
        out.records.push_back(
            {{"name", c.name}, {"value", c.value}, {"expected", c.expected}, {"tolerance", c.tolerance}, {"pass", c.pass()}});
        if (c.pass()) {
            ++st.outputs;
        } else {
            out.drop(st, c.name, "out_of_tolerance", "");
        }
    }
    out.stages.push_back(st);
    if (st.outputs != checks.size()) fail(ErrorKind::StageError, "math-check: spot value out of tolerance");
    return out;
}

// ------------------------------------------------------------------ driver

inline const std::map<std::string, StageOutput (*)(Context&)>& commands() {
    static const std::map<std::string, StageOutput (*)(Context&)> table{
        {"synth-plans", synth_plans},         {"synth-trajectories", synth_trajectories},
        {"synth-schedules", synth_schedules}, {"synth-workflows", synth_workflows},
        {"synth-longhorizon", synth_longhorizon}, {"dedup", run_dedup},
        {"select", run_select},               {"score", run_score},
        {"eval-f1", run_eval_f1},             {"math-check", run_math_check},
    };
    return table;
}

inline void write_jsonl(const std::string& path, const std::vector<json>& records) {
    std::ofstream f(path);
    if (!f) fail(ErrorKind::StageError, "write: cannot open " + path);
    for (const auto& r : records) f << dump_compact(r) << "\n";
    if (!f) fail(ErrorKind::StageError, "write: failed writing " + path);
}

/// Runs one subcommand. Exit 0 on success, 1 on a stage error, 2 on a
/// config error. Records go to `out` (stdout when empty); the manifest and
/// drop log go next to it.
inline int run(const std::string& command, const Options& opts, std::ostream& err = std::cerr) {
    RunManifest manifest;
    manifest.command = command;
    const std::string out_path = opts.out;
    auto write_manifest = [&](const StageOutput* so) {
        if (out_path.empty()) return;
        if (so) {
            std::ofstream d(out_path + ".drops.jsonl");
            for (const auto& x : so->drops) d << dump_compact({{"stage", x.stage}, {"id", x.id}, {"reason", x.reason}}) << "\n";
        }
        std::ofstream m(out_path + ".manifest.json");
        m << to_json(manifest).dump(2) << "\n";
    };
    auto it = commands().find(command);
    if (it == commands().end()) {
        err << "error: unknown command " << command << "\n";
        return 2;
    }
    Context ctx;
    try {
        ctx = make_context(opts);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        manifest.error = e.what();
        write_manifest(nullptr);
        return e.kind() == ErrorKind::ConfigError ? 2 : 1;
    }
    manifest.config_hash = ctx.config.hash();
    manifest.seed = ctx.seed;
    manifest.backend_id = ctx.backend_id();
    StageOutput so;
    try {
        so = it->second(ctx);
    } catch (const Error& e) {
        manifest.cache = ctx.cache_stats();
        manifest.error = e.what();
        err << "error: " << e.what() << "\n";
        write_manifest(nullptr);
        return e.kind() == ErrorKind::ConfigError ? 2 : 1;
    } catch (const std::exception& e) {
        manifest.error = std::string("StageError: ") + command + ": " + e.what();
        err << "error: " << manifest.error << "\n";
        write_manifest(nullptr);
        return 1;
    }
    manifest.stages = so.stages;
    manifest.cache = ctx.cache_stats();
    try {
        if (out_path.empty()) {
            for (const auto& r : so.records) std::cout << dump_compact(r) << "\n";
        } else {
            write_jsonl(out_path, so.records);
        }
    } catch (const Error& e) {
        manifest.error = e.what();
        err << "error: " << e.what() << "\n";
        write_manifest(&so);
        return 1;
    }
    write_manifest(&so);
    if (!manifest.conserves()) {
        err << "error: StageError: sample counts do not conserve\n";
        return 1;
    }
    return 0;
}

}  // namespace agentsynth::pipeline
