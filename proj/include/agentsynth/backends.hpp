#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/core/rng.hpp"
#include "agentsynth/core/text.hpp"

namespace agentsynth {

/// A request to a text-generation backend. `payload` carries the structured
/// context the prompt was rendered from; deterministic backends work from it
/// directly, remote ones only see `prompt`.
struct GenerationRequest {
    std::string prompt;
    std::string grammar = "free_text";
    std::uint64_t seed = 0;
    std::size_t max_length = 4096;
    json payload;

    /// Stable identifier used in error messages and cache keys.
    std::string id() const {
        return text::hex64(fnv1a64(grammar) ^ splitmix64(fnv1a64(prompt) + seed));
    }
};

/// Validators for the structured output contracts generators must meet.
class GrammarRegistry {
public:
    using Validator = std::function<std::optional<std::string>(std::string_view)>;

    static GrammarRegistry& instance() {
        static GrammarRegistry registry;
        return registry;
    }

    bool known(std::string_view id) const {
        std::lock_guard lock(mutex_);
        return validators_.count(std::string(id)) > 0;
    }

    void add(std::string id, Validator v) {
        std::lock_guard lock(mutex_);
        validators_[std::move(id)] = std::move(v);
    }

    /// nullopt when `output` satisfies the grammar, otherwise the reason.
    std::optional<std::string> validate(std::string_view id, std::string_view output) const {
        Validator v;
        {
            std::lock_guard lock(mutex_);
            auto it = validators_.find(std::string(id));
            if (it == validators_.end()) return "unknown grammar " + std::string(id);
            v = it->second;
        }
        return v(output);
    }

private:
    static std::optional<std::string> json_object_with(std::string_view s, std::initializer_list<const char*> keys) {
        auto v = parse_strict_json(s);
        if (!v || !v->is_object()) return "expected a JSON object";
        for (const char* k : keys)
            if (!v->contains(k)) return std::string("missing key ") + k;
        return std::nullopt;
    }

    GrammarRegistry() {
        validators_["free_text"] = [](std::string_view s) -> std::optional<std::string> {
            if (text::trim_view(s).empty()) return "empty output";
            return std::nullopt;
        };
        validators_["reasoning"] = validators_["free_text"];
        validators_["next_query"] = validators_["free_text"];
        validators_["atomic_plan"] = [](std::string_view s) { return json_object_with(s, {"query", "steps", "mentions"}); };
        validators_["task_init"] = [](std::string_view s) {
            return json_object_with(s, {"requirement", "known_info", "rules"});
        };
        validators_["agent_step"] = [](std::string_view s) -> std::optional<std::string> {
            auto err = json_object_with(s, {"think"});
            if (err) return err;
            auto v = parse_strict_json(s);
            if (!v->contains("calls") && !v->contains("reply")) return "agent step needs calls or reply";
            return std::nullopt;
        };
        validators_["trajectory"] = [](std::string_view s) { return json_object_with(s, {"conversations"}); };
        validators_["judge_verdict"] = [](std::string_view s) { return json_object_with(s, {"pass", "reasons"}); };
    }

    mutable std::mutex mutex_;
    std::map<std::string, Validator> validators_;
};

class TextGenerator {
public:
    virtual ~TextGenerator() = default;
    virtual std::string generate(const GenerationRequest& request) = 0;
    virtual std::string id() const = 0;
};

/// Calls the backend, then enforces the request's grammar. Unknown grammar
/// ids are a caller bug; grammar violations raise MalformedGeneration with
/// the prompt id.
inline std::string generate_checked(TextGenerator& gen, const GenerationRequest& request) {
    auto& registry = GrammarRegistry::instance();
    require(registry.known(request.grammar), ErrorKind::InvalidArgument, "unknown grammar " + request.grammar);
    std::string out;
    try {
        out = gen.generate(request);
    } catch (const BackendError& e) {
        throw BackendError(e.status(), e.retriable(), "prompt " + request.id() + ": " + e.detail());
    }
    if (auto err = registry.validate(request.grammar, out)) {
        fail(ErrorKind::MalformedGeneration, "prompt " + request.id() + ": " + *err);
    }
    return out;
}

/// Deterministic generator dispatching on grammar id to pure handlers of the
/// request. The output depends only on (prompt, payload, seed).
class TemplateGenerator : public TextGenerator {
public:
    using Handler = std::function<std::string(const GenerationRequest&)>;

    void add(std::string grammar, Handler handler) { handlers_[std::move(grammar)] = std::move(handler); }

    std::string generate(const GenerationRequest& request) override {
        auto it = handlers_.find(request.grammar);
        if (it == handlers_.end()) throw BackendError(0, false, "no template for grammar " + request.grammar);
        return it->second(request);
    }

    std::string id() const override { return "template-v1"; }

private:
    std::map<std::string, Handler> handlers_;
};

/// Serves queued responses per grammar, in order. For scripted tests.
class ScriptedGenerator : public TextGenerator {
public:
    void push(const std::string& grammar, std::string response) {
        std::lock_guard lock(mutex_);
        queues_[grammar].push_back(std::move(response));
    }

    std::string generate(const GenerationRequest& request) override {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        auto& q = queues_[request.grammar];
        if (q.empty()) throw BackendError(0, false, "script exhausted for grammar " + request.grammar);
        std::string out = std::move(q.front());
        q.pop_front();
        return out;
    }

    std::string id() const override { return "scripted"; }

    std::vector<GenerationRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::deque<std::string>> queues_;
    std::vector<GenerationRequest> requests_;
};

struct EmbeddingVector {
    std::vector<double> values;
    std::string model_id;
};

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    require(a.values.size() == b.values.size(), ErrorKind::ShapeMismatch, "embedding dimensions differ");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0 || nb == 0) return 0.0;
    return dot / std::sqrt(na * nb);
}

inline void normalize_in_place(std::vector<double>& v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n == 0) fail(ErrorKind::BackendFailure, "zero-norm embedding");
    for (double& x : v) x /= n;
}

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string model_id() const = 0;

    EmbeddingVector embed_one(const std::string& t) { return embed(std::vector<std::string>{t}).front(); }

    double similarity(const std::string& a, const std::string& b) {
        auto v = embed({a, b});
        return cosine(v[0], v[1]);
    }
};

/// Hashed bag-of-words projection: each token adds 1 to bucket
/// fnv1a64(token) mod dim. Vectors are nonnegative, so texts with disjoint
/// buckets have cosine exactly 0.
class HashedBowEmbedder : public Embedder {
public:
    explicit HashedBowEmbedder(std::size_t dim = 256) : dim_(dim) {
        require(dim > 0, ErrorKind::InvalidArgument, "embedding dimension must be positive");
    }

    std::size_t bucket(std::string_view token) const { return static_cast<std::size_t>(fnv1a64(token) % dim_); }

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        require(!texts.empty(), ErrorKind::InvalidArgument, "empty embedding batch");
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            std::vector<double> v(dim_, 0.0);
            auto tokens = text::tokenize(t);
            if (tokens.empty()) tokens.emplace_back();
            for (const auto& tok : tokens) v[bucket(tok)] += 1.0;
            normalize_in_place(v);
            out.push_back({std::move(v), model_id()});
        }
        return out;
    }

    std::string model_id() const override { return "hashed-bow-" + std::to_string(dim_); }

private:
    std::size_t dim_;
};

struct AuditVerdict {
    bool pass = true;
    std::vector<std::string> reasons;
    std::string prompt_hash;
    std::string judge_id;
};

class Judge {
public:
    virtual ~Judge() = default;
    virtual AuditVerdict judge(const std::string& sample, const std::string& rubric) = 0;
    virtual std::string id() const = 0;
};

inline std::string judge_prompt(const std::string& sample, const std::string& rubric) {
    return "Rubric: " + rubric +
           "\nDecide whether the sample below drifts semantically from its query or is causally inconsistent. "
           "Answer as JSON {\"pass\": bool, \"reasons\": [string]}.\nSample:\n" + sample;
}

/// Rule-table judge: fails a sample for every marker it contains.
class StubJudge : public Judge {
public:
    struct Rule {
        std::string marker;
        std::string reason;
    };

    explicit StubJudge(std::vector<Rule> rules = {}, std::set<std::string> rubrics = {"semantic_drift", "causal_consistency"})
        : rules_(std::move(rules)), rubrics_(std::move(rubrics)) {}

    AuditVerdict judge(const std::string& sample, const std::string& rubric) override {
        require(rubrics_.count(rubric) > 0, ErrorKind::InvalidArgument, "unregistered rubric " + rubric);
        AuditVerdict v;
        v.judge_id = id();
        v.prompt_hash = text::hex64(fnv1a64(judge_prompt(sample, rubric)));
        for (const auto& r : rules_) {
            if (text::contains(sample, r.marker)) {
                v.pass = false;
                v.reasons.push_back(r.reason);
            }
        }
        return v;
    }

    std::string id() const override { return "stub-judge-v1/" + std::to_string(rules_.size()); }

private:
    std::vector<Rule> rules_;
    std::set<std::string> rubrics_;
};

}  // namespace agentsynth
