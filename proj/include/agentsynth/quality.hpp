#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "agentsynth/backends.hpp"
#include "agentsynth/catalog.hpp"
#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"
#include "agentsynth/grammar.hpp"
#include "agentsynth/reward.hpp"

namespace agentsynth {

struct Fingerprint {
    std::uint64_t bits = 0;
    std::string source_id;
};

/// Code-point 3-gram shingles of the lowercased, whitespace-normalized
/// text. Texts shorter than three code points form a single shingle.
inline std::vector<std::string> shingles(std::string_view s, std::size_t width = 3) {
    const std::string norm = text::normalize_whitespace(s);
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < norm.size();) {
        starts.push_back(i);
        text::next_codepoint(norm, i);
    }
    starts.push_back(norm.size());
    const std::size_t n = starts.size() - 1;
    std::vector<std::string> out;
    if (n <= width) {
        out.push_back(norm);
        return out;
    }
    for (std::size_t i = 0; i + width <= n; ++i) out.push_back(norm.substr(starts[i], starts[i + width] - starts[i]));
    return out;
}

inline Fingerprint simhash(std::string_view s, std::string source_id = {}) {
    if (text::trim_view(s).empty()) fail(ErrorKind::EmptyText, "simhash of empty text");
    int counts[64] = {};
    for (const auto& sh : shingles(s)) {
        const std::uint64_t h = splitmix64(fnv1a64(sh));
        for (int b = 0; b < 64; ++b) counts[b] += (h >> b) & 1U ? 1 : -1;
    }
    Fingerprint f;
    f.source_id = std::move(source_id);
    for (int b = 0; b < 64; ++b)
        if (counts[b] > 0) f.bits |= std::uint64_t{1} << b;
    return f;
}

inline int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }
inline int hamming(const Fingerprint& a, const Fingerprint& b) { return hamming(a.bits, b.bits); }

struct TextSample {
    std::string id;
    std::string text;
};

struct DroppedPair {
    std::string dropped;
    std::string kept;
    int distance = 0;
};

struct DedupResult {
    std::vector<std::string> retained;
    std::vector<DroppedPair> dropped;
};

/// Greedy near-duplicate removal in ingestion order: a sample is dropped
/// when a retained one lies within `threshold` bits. Candidates come from
/// a block index (threshold + 1 disjoint bit blocks; two fingerprints within
/// the threshold agree on at least one block).
inline DedupResult dedup(const std::vector<TextSample>& samples, int threshold = 3) {
    require(threshold >= 0 && threshold <= 64, ErrorKind::InvalidArgument, "hamming threshold must be in [0, 64]");
    DedupResult r;
    std::vector<Fingerprint> kept;
    const bool indexed = threshold < 16;
    const int blocks = threshold + 1;
    auto block_of = [&](std::uint64_t bits, int b) {
        const int lo = b * 64 / blocks, hi = (b + 1) * 64 / blocks;
        const std::uint64_t mask = hi - lo == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << (hi - lo)) - 1);
        return (bits >> lo) & mask;
    };
    std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> index(indexed ? blocks : 0);
    for (const auto& s : samples) {
        const Fingerprint f = simhash(s.text, s.id);
        std::optional<std::size_t> match;
        int best = 65;
        auto consider = [&](std::size_t k) {
            const int d = hamming(f, kept[k]);
            if (d <= threshold && (d < best || (d == best && k < *match))) {
                best = d;
                match = k;
            }
        };
        if (indexed) {
            std::set<std::size_t> cands;
            for (int b = 0; b < blocks; ++b) {
                auto it = index[b].find(block_of(f.bits, b));
                if (it != index[b].end()) cands.insert(it->second.begin(), it->second.end());
            }
            for (std::size_t k : cands) consider(k);
        } else {
            for (std::size_t k = 0; k < kept.size(); ++k) consider(k);
        }
        if (match) {
            r.dropped.push_back({s.id, kept[*match].source_id, best});
            continue;
        }
        if (indexed)
            for (int b = 0; b < blocks; ++b) index[b][block_of(f.bits, b)].push_back(kept.size());
        kept.push_back(f);
        r.retained.push_back(s.id);
    }
    return r;
}

struct SchemaError {
    std::size_t position = 0;
    std::string expectation;
};

/// nullopt when `s` matches the task grammar. Raw decomposition samples
/// must carry `<Query>` and use single newlines between tags; `<Reply>` is
/// optional at this stage.
inline std::optional<SchemaError> validate_schema(std::string_view s, TaskKind kind) {
    if (kind == TaskKind::decomposition) {
        grammar::DecompositionOptions opt;
        opt.allow_query = true;
        opt.require_query = true;
        opt.require_reply = false;
        opt.strict_newlines = true;
        try {
            grammar::parse_decomposition(s, opt);
        } catch (const ParseFailure& e) {
            return SchemaError{e.position(), e.expectation()};
        }
        return std::nullopt;
    }
    auto r = parse_output(kind, s);
    if (r.ok()) return std::nullopt;
    return SchemaError{r.error.position, r.error.expectation};
}

struct LogEntry {
    std::string sample_id;
    std::string stage;
    std::string reason;
};

inline json to_json(const LogEntry& e) {
    return {{"sample_id", e.sample_id}, {"stage", e.stage}, {"reason", e.reason}};
}

struct AuditRecord {
    std::string sample_id;
    std::optional<AuditVerdict> verdict;  // empty when the judge failed
    std::string error;
};

/// Runs every rubric; the verdict fails if any rubric fails. Backend
/// failures are returned, not thrown, so the caller can park the sample.
inline AuditRecord audit_semantics(const std::string& sample_id, const std::string& sample, Judge& judge,
                                   const std::vector<std::string>& rubrics = {"semantic_drift"}) {
    AuditRecord rec;
    rec.sample_id = sample_id;
    AuditVerdict merged;
    merged.judge_id = judge.id();
    std::string hashes;
    try {
        for (const auto& rubric : rubrics) {
            AuditVerdict v = judge.judge(sample, rubric);
            if (!v.pass) {
                merged.pass = false;
                if (v.reasons.empty()) v.reasons.push_back(rubric + " failed");
                merged.reasons.insert(merged.reasons.end(), v.reasons.begin(), v.reasons.end());
            }
            hashes += v.prompt_hash;
        }
    } catch (const BackendError& e) {
        rec.error = e.what();
        return rec;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::BackendFailure) throw;
        rec.error = e.what();
        return rec;
    }
    merged.prompt_hash = rubrics.size() == 1 ? hashes : text::hex64(fnv1a64(hashes));
    rec.verdict = std::move(merged);
    return rec;
}

struct FilterReport {
    std::vector<std::string> retained;
    std::vector<LogEntry> dropped;
    std::vector<LogEntry> quarantined;
};

/// Dedup, then schema validation, then the semantic audit. Judge failures
/// and failing verdicts go to the quarantine log.
inline FilterReport run_quality_filter(const std::vector<TextSample>& samples, TaskKind kind, Judge* judge,
                                       int threshold = 3, const std::vector<std::string>& rubrics = {"semantic_drift"}) {
    FilterReport report;
    const auto d = dedup(samples, threshold);
    for (const auto& p : d.dropped)
        report.dropped.push_back({p.dropped, "dedup", "near duplicate of " + p.kept + " (distance " +
                                                          std::to_string(p.distance) + ")"});
    std::map<std::string, const TextSample*> by_id;
    for (const auto& s : samples) by_id.emplace(s.id, &s);
    for (const auto& id : d.retained) {
        const auto& s = *by_id.at(id);
        if (auto err = validate_schema(s.text, kind)) {
            report.dropped.push_back(
                {id, "schema", "at " + std::to_string(err->position) + ": expected " + err->expectation});
            continue;
        }
        if (judge) {
            const auto rec = audit_semantics(id, s.text, *judge, rubrics);
            if (!rec.verdict) {
                report.quarantined.push_back({id, "audit", "judge unavailable: " + rec.error});
                continue;
            }
            if (!rec.verdict->pass) {
                report.quarantined.push_back({id, "audit", text::join(rec.verdict->reasons, "; ")});
                continue;
            }
        }
        report.retained.push_back(id);
    }
    return report;
}

struct DistractorResult {
    std::vector<std::string> tools;     // gold plus injected, shuffled
    std::vector<std::string> injected;  // nearest first
    std::vector<double> similarity;     // aligned with injected
};

/// Adds the k tools whose descriptions are nearest (max cosine over the
/// gold tools) among those outside the gold set and with no dependency edge
/// to it.
inline DistractorResult inject_distractors(const std::vector<std::string>& gold, const Catalog& catalog,
                                           const ToolGraphs& graphs, std::size_t k, Embedder& embedder,
                                           std::uint64_t seed) {
    require(k >= 1, ErrorKind::InvalidArgument, "k must be at least 1");
    require(!gold.empty(), ErrorKind::InvalidArgument, "empty gold tool set");
    const std::set<std::string> gold_set(gold.begin(), gold.end());
    for (const auto& g : gold) catalog.at(g);
    std::vector<std::string> candidates;
    for (const auto& t : catalog.tools()) {
        if (gold_set.count(t.name)) continue;
        bool linked = false;
        for (const auto& g : gold)
            if (graphs.depend.edge(g, t.name) || graphs.depend.edge(t.name, g)) linked = true;
        if (!linked) candidates.push_back(t.name);
    }
    if (candidates.size() < k)
        fail(ErrorKind::InsufficientCandidates,
             "need " + std::to_string(k) + " distractors, have " + std::to_string(candidates.size()));
    std::vector<std::string> texts;
    for (const auto& g : gold) texts.push_back(catalog.at(g).description);
    for (const auto& c : candidates) texts.push_back(catalog.at(c).description);
    const auto vecs = embedder.embed(texts);
    std::vector<std::pair<double, std::string>> scored;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double best = -2.0;
        for (std::size_t g = 0; g < gold.size(); ++g) best = std::max(best, cosine(vecs[gold.size() + i], vecs[g]));
        scored.emplace_back(best, candidates[i]);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    DistractorResult r;
    r.tools = gold;
    for (std::size_t i = 0; i < k; ++i) {
        r.injected.push_back(scored[i].second);
        r.similarity.push_back(scored[i].first);
        r.tools.push_back(scored[i].second);
    }
    Rng rng(seed);
    rng.shuffle(r.tools);
    return r;
}

}  // namespace agentsynth
