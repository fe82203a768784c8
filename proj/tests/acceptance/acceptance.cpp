// Acceptance runner: one PASS/FAIL line per criterion.
// Usage: acceptance <path-to-agentsynth-cli> [work-dir]

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "agentsynth/agentsynth.hpp"
#include "agentsynth/pipeline.hpp"

using namespace agentsynth;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& name) { return json::parse(read_file(fs::path(AGENTSYNTH_FIXTURES) / name)); }

std::string last_content(const json& messages, const std::string& role) {
    std::string out;
    for (const auto& m : messages)
        if (m["role"] == role) out = m["content"].get<std::string>();
    return out;
}

// ---------------------------------------------------------------- 1

Outcome fixtures_score() {
    HashedBowEmbedder emb;
    RewardConfig cfg;
    const double expected = cfg.alpha[0] + 1.0;
    const double tol = 1e-12;
    std::size_t checked = 0;
    std::vector<std::string> bad;
    auto score = [&](const std::string& label, TaskKind kind, const std::string& text,
                     std::optional<ScheduleProblem> problem = {}) {
        ++checked;
        if (auto err = validate_schema(text, kind)) {
            bad.push_back(label + ": schema at " + std::to_string(err->position) + " expected " + err->expectation);
            return;
        }
        try {
            const auto gold = gold_from_text(kind, text, problem);
            const auto b = reward_total(kind, text, gold, cfg, emb);
            if (std::abs(b.total - expected) > tol) bad.push_back(label + ": total " + std::to_string(b.total));
        } catch (const std::exception& e) {
            bad.push_back(label + ": " + e.what());
        }
    };
    for (const char* f : {"decomposition_raw_1.txt", "decomposition_raw_2.txt"}) {
        ++checked;
        if (auto err = validate_schema(read_file(fs::path(AGENTSYNTH_FIXTURES) / f), TaskKind::decomposition))
            bad.push_back(std::string(f) + ": schema at " + std::to_string(err->position));
    }
    for (const char* f : {"decomposition_chat_1.json", "decomposition_chat_2.json"}) {
        const auto d = read_json(f);
        const std::string a = last_content(d["messages"], "assistant");
        ++checked;
        const auto gold = gold_from_text(TaskKind::decomposition, a);
        const auto b = reward_total(TaskKind::decomposition, a, gold, cfg, emb);
        if (std::abs(b.total - expected) > tol) bad.push_back(std::string(f) + ": total " + std::to_string(b.total));
    }
    {
        const auto d = read_json("tool_planning_chat.json");
        int k = 0;
        for (const auto& m : d["messages"])
            if (m["role"] == "assistant") score("tool_planning#" + std::to_string(k++), TaskKind::tool_planning, m["content"]);
    }
    {
        const auto d = read_json("scheduling_chat.json");
        const auto problem = schedule_problem_from_json(read_json("scheduling_problem.json"));
        score("scheduling", TaskKind::scheduling, pipeline::schedule_completion(last_content(d["messages"], "assistant")),
              problem);
    }
    {
        const auto d = read_json("workflow_chat.json");
        int k = 0;
        for (const auto& m : d["messages"])
            if (m["role"] == "assistant") score("workflow#" + std::to_string(k++), TaskKind::workflow, m["content"]);
    }
    {
        const auto d = read_json("longhorizon_sharegpt.json");
        int k = 0;
        for (const auto& m : d["conversations"]) {
            const std::string v = m["value"];
            if (m["from"] == "gpt" && text::contains(v, "<tool_call>")) score("long_horizon#" + std::to_string(k++), TaskKind::long_horizon, v);
        }
    }
    std::string detail = std::to_string(checked) + " fixture texts, expected total " + std::to_string(expected);
    for (const auto& b : bad) detail += "; " + b;
    return {bad.empty(), detail};
}

// ---------------------------------------------------------------- 2

Outcome schedule_round_trip() {
    TripParams prm;
    prm.max_cities = 6;
    std::size_t ok = 0, n = 500;
    std::string first_bad;
    for (std::size_t i = 0; i < n; ++i) {
        const auto inst = generate_instance(prm, derive_seed(2024, "acceptance-trip", i));
        const auto& p = std::get<TripProblem>(inst.problem);
        const auto sols = solve(p);
        const auto v = verify(inst.problem, inst.solution);
        if (p.stays.size() <= 6 && sols.size() == 1 && sols[0] == inst.solution && v.empty()) {
            ++ok;
        } else if (first_bad.empty()) {
            first_bad = "instance " + std::to_string(i) + ": " + std::to_string(sols.size()) + " solutions" +
                        (v.empty() ? std::string() : ", " + v.front());
        }
    }
    const auto problem = schedule_problem_from_json(read_json("scheduling_problem.json"));
    const auto answer = last_content(read_json("scheduling_chat.json")["messages"], "assistant");
    std::vector<std::string> fixture_problems;
    try {
        fixture_problems = verify(problem, parse_itinerary(problem, answer));
    } catch (const std::exception& e) {
        fixture_problems.push_back(e.what());
    }
    std::string detail = std::to_string(ok) + "/" + std::to_string(n) + " unique and verified; fixture itinerary " +
                         (fixture_problems.empty() ? "verifies" : "fails: " + fixture_problems.front());
    if (!first_bad.empty()) detail += "; " + first_bad;
    return {ok == n && fixture_problems.empty(), detail};
}

// ---------------------------------------------------------------- 3

double oracle_f1(double l, double np, double ng) {
    if (l == 0) return 0.0;
    const double p = l / np, r = l / ng;
    return 2 * p * r / (p + r);
}

// Longest strictly increasing subsequence over all 2^k subsequences.
std::size_t brute_lis(const std::vector<int>& s) {
    std::size_t best = 0;
    for (std::uint32_t mask = 0; mask < (1U << s.size()); ++mask) {
        int last = -1;
        std::size_t len = 0;
        bool inc = true;
        for (std::size_t i = 0; i < s.size() && inc; ++i) {
            if (!(mask >> i & 1U)) continue;
            if (len > 0 && s[i] <= last) inc = false;
            last = s[i];
            ++len;
        }
        if (inc) best = std::max(best, len);
    }
    return best;
}

double brute_chain(const std::vector<int>& pred_seq, const std::vector<int>& gold_seq, const std::vector<int>& match) {
    if (pred_seq.empty() || gold_seq.empty()) return 0.0;
    std::vector<int> mapped;
    for (int p : pred_seq) {
        const int g = match[static_cast<std::size_t>(p)];
        if (g < 0) continue;
        for (std::size_t k = 0; k < gold_seq.size(); ++k)
            if (gold_seq[k] == g) mapped.push_back(static_cast<int>(k));
    }
    return oracle_f1(static_cast<double>(brute_lis(mapped)), static_cast<double>(pred_seq.size()),
                     static_cast<double>(gold_seq.size()));
}

// Best vertices+edges over every weakly connected subset of matched pairs.
double brute_graph(const WorkflowDAG& pred, const WorkflowDAG& gold, const std::vector<int>& match) {
    std::set<std::pair<int, int>> pe, ge;
    for (const auto& [a, b] : pred.edges)
        if (a >= 1 && b >= 1) pe.insert({a - 1, b - 1});
    for (const auto& [a, b] : gold.edges)
        if (a >= 1 && b >= 1) ge.insert({a - 1, b - 1});
    std::vector<int> vs;
    for (std::size_t i = 0; i < match.size(); ++i)
        if (match[i] >= 0) vs.push_back(static_cast<int>(i));
    if (vs.empty()) return 0.0;
    auto shared = [&](int a, int b) { return pe.count({a, b}) && ge.count({match[static_cast<std::size_t>(a)], match[static_cast<std::size_t>(b)]}); };
    double best = 0;
    for (std::uint32_t mask = 1; mask < (1U << vs.size()); ++mask) {
        std::vector<int> sub;
        for (std::size_t i = 0; i < vs.size(); ++i)
            if (mask >> i & 1U) sub.push_back(vs[i]);
        std::set<int> seen{sub[0]};
        std::vector<int> stack{sub[0]};
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            for (int w : sub)
                if (!seen.count(w) && (shared(v, w) || shared(w, v))) {
                    seen.insert(w);
                    stack.push_back(w);
                }
        }
        if (seen.size() != sub.size()) continue;
        double e = 0;
        for (int a : sub)
            for (int b : sub)
                if (shared(a, b)) e += 1;
        best = std::max(best, static_cast<double>(sub.size()) + e);
    }
    return oracle_f1(best, static_cast<double>(pred.nodes.size() + pe.size()), static_cast<double>(gold.nodes.size() + ge.size()));
}

WorkflowDAG random_dag(Rng& rng, int n) {
    WorkflowDAG d;
    for (int i = 1; i <= n; ++i) d.nodes.push_back("n" + std::to_string(i));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i + 1;
    rng.shuffle(perm);
    const double p = rng.unit();
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (rng.chance(p)) d.edges.emplace_back(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    for (int v = 1; v <= n; ++v) {
        d.edges.emplace_back(kStart, v);
        d.edges.emplace_back(v, kEnd);
    }
    return d;
}

Outcome f1_oracle() {
    Rng rng(3);
    std::size_t n = 1000, ok = 0;
    double worst = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const int np = static_cast<int>(rng.between(1, 6)), ng = static_cast<int>(rng.between(1, 6));
        const WorkflowDAG pred = random_dag(rng, np), gold = random_dag(rng, ng);
        std::vector<int> match(static_cast<std::size_t>(np), -1);
        std::vector<int> gold_ids(static_cast<std::size_t>(ng));
        for (int i = 0; i < ng; ++i) gold_ids[static_cast<std::size_t>(i)] = i;
        rng.shuffle(gold_ids);
        NodeMatching m;
        const std::size_t k = rng.index(static_cast<std::size_t>(std::min(np, ng)) + 1);
        auto pred_ids = rng.sample_indices(static_cast<std::size_t>(np), k);
        for (std::size_t i = 0; i < k; ++i) {
            match[pred_ids[i]] = gold_ids[i];
            m.pairs.push_back({static_cast<int>(pred_ids[i]), gold_ids[i], 1.0});
        }
        std::vector<int> ps(static_cast<std::size_t>(np)), gs(static_cast<std::size_t>(ng));
        for (int i = 0; i < np; ++i) ps[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < ng; ++i) gs[static_cast<std::size_t>(i)] = i;
        rng.shuffle(ps);
        rng.shuffle(gs);
        const double dc = std::abs(f1_chain(ps, gs, m) - brute_chain(ps, gs, match));
        const double dg = std::abs(f1_graph(pred, gold, m) - brute_graph(pred, gold, match));
        worst = std::max({worst, dc, dg});
        if (dc <= 1e-12 && dg <= 1e-12) ++ok;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", worst);
    return {ok == n, std::to_string(ok) + "/" + std::to_string(n) + " DAG pairs agree, max abs diff " + buf};
}

// ---------------------------------------------------------------- 4

std::vector<std::size_t> brute_novelsum(const std::vector<std::vector<double>>& rows, const SelectionConfig& cfg) {
    const std::size_t n = rows.size();
    std::vector<std::vector<double>> u = rows;
    for (auto& r : u) {
        double s = 0;
        for (double x : r) s += x * x;
        for (double& x : r) x /= std::sqrt(s);
    }
    auto dist = [&](std::size_t a, std::size_t b) {
        if (a == b) return 0.0;
        const std::size_t i = std::min(a, b), j = std::max(a, b);
        double dot = 0;
        for (std::size_t k = 0; k < u[i].size(); ++k) dot += u[i][k] * u[j][k];
        return std::max(0.0, 1.0 - dot);
    };
    const std::size_t k_eff = std::min(cfg.K, n - 1);
    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> d;
        for (std::size_t i = 0; i < n; ++i)
            if (i != j) d.push_back(dist(i, j));
        std::sort(d.begin(), d.end());
        double s = 0;
        for (std::size_t k = 0; k < k_eff; ++k) s += d[k];
        sigma[j] = 1.0 / (s + 1e-12);
    }
    std::vector<double> c(u[0].size(), 0.0);
    for (const auto& r : u)
        for (std::size_t k = 0; k < r.size(); ++k) c[k] += r[k] / static_cast<double>(n);
    double cn = 0;
    for (double x : c) cn += x * x;
    cn = std::sqrt(cn);
    std::vector<std::size_t> sel;
    std::size_t first = 0;
    double far = -1;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0;
        for (std::size_t k = 0; k < c.size(); ++k) dot += u[i][k] * c[k];
        const double d = cn > 0 ? 1.0 - dot / cn : 1.0;
        if (d > far) {
            far = d;
            first = i;
        }
    }
    if (cfg.budget == 0) return sel;
    sel.push_back(first);
    while (sel.size() < cfg.budget) {
        std::size_t best = n;
        double best_v = 0;
        for (std::size_t x = 0; x < n; ++x) {
            if (std::find(sel.begin(), sel.end(), x) != sel.end()) continue;
            std::vector<std::pair<double, std::size_t>> ranked;
            for (std::size_t j : sel) ranked.push_back({dist(x, j), j});
            std::sort(ranked.begin(), ranked.end());
            double v = 0;
            for (std::size_t r = 0; r < ranked.size(); ++r)
                v += std::pow(1.0 / static_cast<double>(r + 1), cfg.kappa1) * std::pow(sigma[ranked[r].second], cfg.kappa2) *
                     ranked[r].first;
            if (best == n || v > best_v) {
                best = x;
                best_v = v;
            }
        }
        sel.push_back(best);
    }
    return sel;
}

Outcome novelsum_oracle() {
    Rng rng(4);
    std::size_t ok = 0, n = 50;
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t size = static_cast<std::size_t>(rng.between(2, 200));
        const std::size_t dim = static_cast<std::size_t>(rng.between(2, 12));
        std::vector<std::vector<double>> rows(size, std::vector<double>(dim));
        for (auto& r : rows)
            for (auto& x : r) x = rng.unit() * 2.0 - 1.0;
        SelectionConfig cfg;
        const double kappas[] = {0.0, 0.5, 1.0, 2.0};
        cfg.kappa1 = kappas[rng.index(4)];
        cfg.kappa2 = kappas[rng.index(4)];
        cfg.K = static_cast<std::size_t>(rng.between(1, 10));
        cfg.budget = std::min<std::size_t>(size, static_cast<std::size_t>(rng.between(1, 30)));
        if (novelsum_select(rows, cfg) == brute_novelsum(rows, cfg)) ++ok;
    }
    return {ok == n, std::to_string(ok) + "/" + std::to_string(n) + " corpora select identically"};
}

// ---------------------------------------------------------------- 5

Outcome spot_values() {
    bool all = true;
    std::string detail;
    for (const auto& c : pipeline::math_spot_checks()) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s=%.10g (want %.10g +- %g)", c.name.c_str(), c.value, c.expected, c.tolerance);
        if (!detail.empty()) detail += "; ";
        detail += buf;
        all = all && c.pass();
    }
    return {all, detail};
}

// ---------------------------------------------------------------- 6

Outcome chipo_invariants() {
    Rng rng(6);
    const std::size_t n = 10000;
    std::size_t violations = 0;
    std::string first;
    auto flag = [&](const std::string& what) {
        if (violations++ == 0) first = what;
    };
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t g = static_cast<std::size_t>(rng.between(2, 16));
        std::vector<double> r(g);
        for (auto& x : r) x = rng.unit() * 4.0 - 2.0;
        r[0] = r[1] + 0.5;  // nondegenerate
        const auto a = group_advantage(r);
        double mean = 0, var = 0;
        for (double x : a) mean += x / static_cast<double>(g);
        for (double x : a) var += (x - mean) * (x - mean) / static_cast<double>(g);
        if (std::abs(mean) > 1e-9 || std::abs(std::sqrt(var) - 1.0) > 1e-9) flag("advantage moments case " + std::to_string(t));

        const std::vector<double> same(g, rng.unit());
        for (double x : group_advantage(same))
            if (x != 0.0) flag("equal group case " + std::to_string(t));

        SmoothingConfig sc;
        sc.mean_think = 0.1 + rng.unit() * 3.0;
        sc.mean_action = 0.1 + rng.unit() * 3.0;
        TokenEntropySeries s(static_cast<std::size_t>(rng.between(1, 3)));
        for (auto& b : s) {
            b.resize(static_cast<std::size_t>(rng.between(1, 3)));
            for (auto& h : b)
                for (int i = 0, len = static_cast<int>(rng.between(1, 6)); i < len; ++i) {
                    const bool think = rng.chance(0.5);
                    const double lo = think ? sc.alpha_low_think * sc.mean_think : sc.alpha_low_action * sc.mean_action;
                    const double hi = think ? sc.alpha_high_think * sc.mean_think : sc.alpha_high_action * sc.mean_action;
                    h.push_back({lo + rng.unit() * (hi - lo), think ? Segment::think : Segment::action});
                }
        }
        if (smoothing_objective(s, sc) != 0.0) flag("in-band smoothing case " + std::to_string(t));

        const double h = rng.unit() * 10.0;
        if (ib_objective(h, h, 1.0) != 0.0) flag("ib case " + std::to_string(t));
    }
    return {violations == 0, std::to_string(n) + " random cases, " + std::to_string(violations) + " violations" +
                                 (first.empty() ? std::string() : " (first: " + first + ")")};
}

// ---------------------------------------------------------------- 7

std::vector<json> read_lines(const fs::path& p) {
    std::vector<json> out;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

std::vector<std::string> sample_problems(const std::string& cmd, const json& r) {
    std::vector<std::string> out;
    auto schema = [&](const std::string& s, TaskKind k) {
        if (auto e = validate_schema(s, k)) out.push_back("schema at " + std::to_string(e->position) + ": " + e->expectation);
    };
    if (cmd == "synth-plans") {
        schema(r["plan_text"], TaskKind::decomposition);
    } else if (cmd == "synth-schedules") {
        const std::string answer = last_content(r["messages"], "assistant");
        const auto problem = schedule_problem_from_json(r["problem"]);
        schema(pipeline::schedule_completion(answer), TaskKind::scheduling);
        for (const auto& v : verify(problem, parse_itinerary(problem, answer))) out.push_back("verify: " + v);
    } else if (cmd == "synth-workflows") {
        const std::string answer = last_content(r["messages"], "assistant");
        const std::string user = last_content(r["messages"], "user");
        schema(answer, TaskKind::workflow);
        const GoldWorkflow* gold = nullptr;
        static const auto tasks = builtin::workflow_tasks();
        for (const auto& t : tasks)
            if (text::contains(user, "Task: " + t.task + "\n")) gold = &t;
        if (!gold) {
            out.push_back("task not in the builtin set");
        } else {
            for (const auto& v : validate_workflow(parse_workflow(answer), *gold)) out.push_back("workflow: " + v);
        }
    } else if (cmd == "synth-longhorizon") {
        for (const auto& p : sharegpt_problems(r)) out.push_back(p);
        for (const auto& m : r["conversations"]) {
            const std::string v = m["value"];
            if (m["from"] == "gpt" && text::contains(v, "<tool_call>")) schema(v, TaskKind::long_horizon);
        }
    }
    return out;
}

Outcome pipeline_determinism(const std::string& cli, const fs::path& work) {
    const std::vector<std::pair<std::string, std::string>> runs = {
        {"synth-plans", "--count 12"},
        {"synth-schedules", "--count 12"},
        {"synth-workflows", "--count 12"},
        {"synth-longhorizon", "--count 4"},
    };
    fs::remove_all(work);
    std::vector<std::string> bad;
    std::string counts;
    for (const auto& [cmd, extra] : runs) {
        std::string outputs[2];
        fs::path files[2];
        for (int k = 0; k < 2; ++k) {
            const fs::path dir = work / ("run" + std::to_string(k));
            fs::create_directories(dir);
            files[k] = dir / (cmd + ".jsonl");
            const std::string line = "\"" + cli + "\" " + cmd + " --seed 17 " + extra + " --out \"" + files[k].string() +
                                     "\" 2> \"" + (dir / (cmd + ".err")).string() + "\"";
            if (std::system(line.c_str()) != 0) bad.push_back(cmd + " run " + std::to_string(k) + " exited nonzero");
            outputs[k] = read_file(files[k]) + read_file(files[k].string() + ".manifest.json") +
                         read_file(files[k].string() + ".drops.jsonl");
        }
        if (outputs[0] != outputs[1]) bad.push_back(cmd + " outputs differ");
        std::size_t n = 0;
        for (const auto& r : read_lines(files[0])) {
            ++n;
            std::vector<std::string> p;
            try {
                p = sample_problems(cmd, r);
            } catch (const std::exception& e) {
                p.push_back(e.what());
            }
            if (!p.empty()) bad.push_back(cmd + " record " + r.value("id", "?") + ": " + p.front());
        }
        if (n == 0) bad.push_back(cmd + " emitted no samples");
        counts += (counts.empty() ? "" : ", ") + cmd + "=" + std::to_string(n);
    }
    std::string detail = "samples " + counts;
    for (std::size_t i = 0; i < std::min<std::size_t>(bad.size(), 5); ++i) detail += "; " + bad[i];
    return {bad.empty(), detail};
}

// ---------------------------------------------------------------- 8

Outcome dedup_oracle() {
    Rng rng(8);
    const std::vector<std::string> vocab = {"book", "a",     "hotel", "in",   "paris",  "for",     "two",   "nights",
                                            "then", "find",  "a",     "cafe", "near",   "the",     "river", "please",
                                            "cancel", "my",  "order", "and",  "refund", "payment", "check", "weather"};
    std::vector<TextSample> samples;
    std::vector<std::string> bases;
    for (std::size_t i = 0; i < 1000; ++i) {
        std::string t;
        if (!bases.empty() && rng.chance(0.4)) {
            auto words = text::split(bases[rng.index(bases.size())], ' ');
            const std::size_t edits = rng.index(3);
            for (std::size_t e = 0; e < edits; ++e) words[rng.index(words.size())] = vocab[rng.index(vocab.size())];
            t = text::join(words, " ");
        } else {
            std::vector<std::string> words;
            for (int w = 0, len = static_cast<int>(rng.between(4, 30)); w < len; ++w) words.push_back(vocab[rng.index(vocab.size())]);
            t = text::join(words, " ");
            bases.push_back(t);
        }
        samples.push_back({"d" + std::to_string(i), t});
    }
    const auto got = dedup(samples, 3);
    std::vector<std::string> want;
    std::vector<std::uint64_t> kept;
    for (const auto& s : samples) {
        const std::uint64_t f = simhash(s.text).bits;
        bool dup = false;
        for (std::uint64_t k : kept) dup = dup || std::popcount(f ^ k) <= 3;
        if (!dup) {
            kept.push_back(f);
            want.push_back(s.id);
        }
    }
    std::vector<TextSample> again;
    for (const auto& s : samples)
        if (std::find(got.retained.begin(), got.retained.end(), s.id) != got.retained.end()) again.push_back(s);
    const auto second = dedup(again, 3);
    const bool match = got.retained == want;
    const bool idem = second.retained.size() == again.size() && second.dropped.empty();
    return {match && idem, std::to_string(samples.size()) + " samples, retained " + std::to_string(got.retained.size()) +
                               " (oracle " + std::to_string(want.size()) + "), rerun drops " +
                               std::to_string(second.dropped.size())};
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: acceptance <agentsynth-cli> [work-dir]\n";
        return 2;
    }
    const std::string cli = argv[1];
    const fs::path work = argc > 2 ? fs::path(argv[2]) : fs::current_path() / "acceptance_work";
    struct Criterion {
        int id;
        std::string name;
        double budget_ms;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "golden fixtures parse and score 2.0", 1000, fixtures_score},
        {2, "schedule round trip", 30000, schedule_round_trip},
        {3, "F1 oracle equivalence", 10000, f1_oracle},
        {4, "NovelSum oracle equivalence", 60000, novelsum_oracle},
        {5, "objective spot values", 1000, spot_values},
        {6, "chiPO invariant suite", 60000, chipo_invariants},
        {7, "pipeline determinism", 120000, [&] { return pipeline_determinism(cli, work); }},
        {8, "dedup matches pairwise oracle", 60000, dedup_oracle},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = ms <= c.budget_ms;
        const bool pass = o.pass && in_time;
        if (!pass) ++failures;
        char timing[96];
        std::snprintf(timing, sizeof timing, "%.0f ms of %.0f ms", ms, c.budget_ms);
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " [" << timing << "] "
                  << o.detail << "\n";
    }
    return failures == 0 ? 0 : 1;
}
