#pragma once

// Needs OpenSSL at link time (libssl, libcrypto).

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include <openssl/evp.h>

#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "agentsynth/backends.hpp"
#include "agentsynth/core/error.hpp"
#include "agentsynth/core/json.hpp"
#include "httplib.h"

namespace agentsynth {

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    require(ctx != nullptr, ErrorKind::BackendFailure, "EVP_MD_CTX_new failed");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, data.data(), data.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", digest[i]);
        out += buf;
    }
    return out;
}

struct CacheStats {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t writes = 0;
};

inline json to_json(const CacheStats& s) { return {{"hits", s.hits}, {"misses", s.misses}, {"writes", s.writes}}; }

/// Content-addressed response store: one file per request, named by the
/// SHA-256 of the canonical request document.
class ReplayCache {
public:
    explicit ReplayCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        if (!dir_.empty()) std::filesystem::create_directories(dir_);
    }

    static std::string key(const json& request) { return sha256_hex(request.dump()); }

    std::optional<json> get(const json& request) {
        if (dir_.empty()) {
            count(&CacheStats::misses);
            return std::nullopt;
        }
        std::ifstream in(dir_ / (key(request) + ".json"));
        if (!in) {
            count(&CacheStats::misses);
            return std::nullopt;
        }
        json v = json::parse(in, nullptr, false);
        if (v.is_discarded() || !v.contains("response")) {
            count(&CacheStats::misses);
            return std::nullopt;
        }
        count(&CacheStats::hits);
        return v["response"];
    }

    void put(const json& request, const json& response) {
        if (dir_.empty()) return;
        const auto final_path = dir_ / (key(request) + ".json");
        const auto tmp = final_path.string() + ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
        {
            std::ofstream out(tmp);
            out << json{{"request", request}, {"response", response}}.dump() << "\n";
        }
        std::filesystem::rename(tmp, final_path);
        count(&CacheStats::writes);
    }

    CacheStats stats() const {
        std::lock_guard lock(mutex_);
        return stats_;
    }

private:
    void count(std::size_t CacheStats::*field) {
        std::lock_guard lock(mutex_);
        ++(stats_.*field);
    }

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    CacheStats stats_;
};

struct RemoteConfig {
    std::string endpoint;  // scheme://host[:port], empty reads endpoint_env
    std::string chat_path = "/v1/chat/completions";
    std::string embed_path = "/v1/embeddings";
    std::string model;
    std::string api_key_env = "AGENTSYNTH_API_KEY";
    std::string endpoint_env = "AGENTSYNTH_ENDPOINT";
    std::string cache_dir;
    int timeout_seconds = 60;
    unsigned max_in_flight = 4;
    bool offline = false;  // serve from cache only
};

/// Chat-completions style client with a replay cache and an in-flight cap.
class RemoteClient {
public:
    explicit RemoteClient(RemoteConfig cfg) : cfg_(std::move(cfg)), cache_(cfg_.cache_dir) {
        if (cfg_.endpoint.empty())
            if (const char* e = std::getenv(cfg_.endpoint_env.c_str())) cfg_.endpoint = e;
        require(cfg_.max_in_flight >= 1, ErrorKind::ConfigError, "max_in_flight must be at least 1");
    }

    /// POSTs `body` to `path`, or replays the cached response.
    json post(const std::string& path, const json& body) {
        const json key_doc = {{"path", path}, {"body", body}};
        if (auto hit = cache_.get(key_doc)) return *hit;
        if (cfg_.offline) throw BackendError(0, false, "cache miss in offline mode for " + ReplayCache::key(key_doc));
        if (cfg_.endpoint.empty()) throw BackendError(0, false, "no endpoint configured");
        std::string auth;
        if (const char* k = std::getenv(cfg_.api_key_env.c_str())) auth = std::string("Bearer ") + k;

        Slot slot(*this);
        httplib::Client client(cfg_.endpoint);
        client.set_connection_timeout(cfg_.timeout_seconds, 0);
        client.set_read_timeout(cfg_.timeout_seconds, 0);
        client.set_write_timeout(cfg_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!auth.empty()) headers.emplace("Authorization", auth);
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) throw BackendError(0, true, "transport error: " + httplib::to_string(res.error()));
        if (res->status >= 500 || res->status == 429)
            throw BackendError(res->status, true, "server returned " + std::to_string(res->status));
        if (res->status >= 400) throw BackendError(res->status, false, "server returned " + std::to_string(res->status));
        json v = json::parse(res->body, nullptr, false);
        if (v.is_discarded()) throw BackendError(res->status, false, "response is not JSON");
        cache_.put(key_doc, v);
        return v;
    }

    const RemoteConfig& config() const { return cfg_; }
    CacheStats cache_stats() const { return cache_.stats(); }

private:
    struct Slot {
        explicit Slot(RemoteClient& c) : c_(c) {
            std::unique_lock lock(c_.mutex_);
            c_.cv_.wait(lock, [&] { return c_.in_flight_ < c_.cfg_.max_in_flight; });
            ++c_.in_flight_;
        }
        ~Slot() {
            {
                std::lock_guard lock(c_.mutex_);
                --c_.in_flight_;
            }
            c_.cv_.notify_one();
        }
        RemoteClient& c_;
    };

    RemoteConfig cfg_;
    ReplayCache cache_;
    std::mutex mutex_;
    std::condition_variable cv_;
    unsigned in_flight_ = 0;
};

class RemoteGenerator : public TextGenerator {
public:
    explicit RemoteGenerator(RemoteConfig cfg) : client_(std::move(cfg)) {}

    std::string generate(const GenerationRequest& request) override {
        const json body = {{"model", client_.config().model},
                           {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
                           {"seed", request.seed},
                           {"max_tokens", request.max_length}};
        const json v = client_.post(client_.config().chat_path, body);
        try {
            return v.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw BackendError(200, false, "response has no choices[0].message.content");
        }
    }

    std::string id() const override { return "remote/" + client_.config().model; }
    CacheStats cache_stats() const { return client_.cache_stats(); }

private:
    RemoteClient client_;
};

/// Accepts any dimension and normalizes.
class RemoteEmbedder : public Embedder {
public:
    explicit RemoteEmbedder(RemoteConfig cfg) : client_(std::move(cfg)) {}

    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override {
        require(!texts.empty(), ErrorKind::InvalidArgument, "empty embedding batch");
        const json v = client_.post(client_.config().embed_path, {{"model", client_.config().model}, {"input", texts}});
        std::vector<EmbeddingVector> out;
        try {
            for (const auto& d : v.at("data")) {
                auto values = d.at("embedding").get<std::vector<double>>();
                normalize_in_place(values);
                out.push_back({std::move(values), model_id()});
            }
        } catch (const json::exception&) {
            throw BackendError(200, false, "response has no data[].embedding");
        }
        if (out.size() != texts.size()) throw BackendError(200, false, "embedding count does not match batch");
        return out;
    }

    std::string model_id() const override { return "remote/" + client_.config().model; }

private:
    RemoteClient client_;
};

class RemoteJudge : public Judge {
public:
    explicit RemoteJudge(RemoteConfig cfg) : gen_(std::move(cfg)) {}

    AuditVerdict judge(const std::string& sample, const std::string& rubric) override {
        GenerationRequest req;
        req.prompt = judge_prompt(sample, rubric);
        req.grammar = "judge_verdict";
        const json v = *parse_strict_json(generate_checked(gen_, req));
        AuditVerdict out;
        out.judge_id = id();
        out.prompt_hash = text::hex64(fnv1a64(req.prompt));
        out.pass = v["pass"].is_boolean() && v["pass"].get<bool>();
        if (v["reasons"].is_array())
            for (const auto& r : v["reasons"])
                if (r.is_string()) out.reasons.push_back(r.get<std::string>());
        return out;
    }

    std::string id() const override { return gen_.id(); }

private:
    RemoteGenerator gen_;
};

}  // namespace agentsynth
