#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <set>
#include <thread>

#include "agentsynth/agentsynth.hpp"
#include "agentsynth/remote_backend.hpp"

using namespace agentsynth;

namespace {

template <typename Fn>
ErrorKind kind_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::InvalidArgument;
}

Tool tool_from(const std::string& s) { return normalize_tool(json::parse(s)); }

Catalog catalog_of(const std::vector<std::string>& records) {
    std::vector<Tool> tools;
    for (const auto& r : records) tools.push_back(tool_from(r));
    return Catalog(std::move(tools));
}

}  // namespace

// ---------------------------------------------------------------- core

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
}

TEST(Rng, DerivedSeedsDifferByStageAndIndex) {
    std::set<std::uint64_t> seen;
    for (const char* stage : {"atomic", "plan", "schedule"})
        for (std::uint64_t i = 0; i < 50; ++i) seen.insert(derive_seed(1, stage, i));
    EXPECT_EQ(seen.size(), 150u);
    EXPECT_EQ(derive_seed(9, "x", 3), derive_seed(9, "x", 3));
}

TEST(Rng, BetweenIsInclusiveAndSampleIndicesDistinct) {
    Rng rng(5);
    std::set<long long> values;
    for (int i = 0; i < 2000; ++i) values.insert(rng.between(1, 4));
    EXPECT_EQ(values, (std::set<long long>{1, 2, 3, 4}));
    const auto idx = rng.sample_indices(10, 10);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 10u);
    EXPECT_EQ(kind_of([&] { rng.sample_indices(3, 4); }), ErrorKind::InvalidArgument);
}

TEST(Text, LowerSnake) {
    EXPECT_EQ(text::to_lower_snake("cityName"), "city_name");
    EXPECT_EQ(text::to_lower_snake("City Slot"), "city_slot");
    EXPECT_EQ(text::to_lower_snake("check-in-date"), "check_in_date");
}

TEST(Text, TokenizeSplitsIdeographs) {
    const auto t = text::tokenize("订两个 rooms");
    EXPECT_EQ(t.size(), 4u);
    EXPECT_EQ(t.back(), "rooms");
}

TEST(Json, RelaxedReaderAcceptsPythonLiterals) {
    const auto v = parse_relaxed_json("{'name': 'clear_cart', 'arguments': {'app': '京东', 'ok': True, 'n': None}}");
    ASSERT_TRUE(v.has_value());
    EXPECT_EQ((*v)["arguments"]["app"], "京东");
    EXPECT_EQ((*v)["arguments"]["ok"], true);
    EXPECT_TRUE((*v)["arguments"]["n"].is_null());
    EXPECT_FALSE(parse_strict_json("{'a': 1}").has_value());
}

TEST(Json, PythonLiteralRoundTrip) {
    const json v = {{"name", "book_hotel"}, {"arguments", {{"number_slot", "2"}, {"flag", false}}}};
    EXPECT_EQ(*parse_relaxed_json(to_python_literal(v)), v);
}

// ------------------------------------------------------------- catalog

TEST(ToolCatalog, BookHotelHasEightParameters) {
    const Catalog cat = builtin::demo_catalog();
    const Tool& t = cat.at("book_hotel");
    EXPECT_EQ(t.parameters.size(), 8u);
    EXPECT_TRUE(t.parameter("app") && t.parameter("app")->required);
    EXPECT_TRUE(t.parameter("city_slot") && t.parameter("city_slot")->required);
    EXPECT_FALSE(t.parameter("payment_method_slot")->required);
}

TEST(ToolCatalog, EmptyNameIsMissingName) {
    EXPECT_EQ(kind_of([] { tool_from(R"({"name": "", "description": "d"})"); }), ErrorKind::MissingName);
}

TEST(ToolCatalog, DuplicateParameterNamed) {
    try {
        tool_from(R"({"name": "t", "description": "d", "parameters": [
            {"name": "x", "description": "a"}, {"name": "x", "description": "b"}]})");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DuplicateParameter);
        EXPECT_EQ(e.detail(), "x");
    }
}

TEST(ToolCatalog, RequiredParameterNeedsDescription) {
    EXPECT_EQ(kind_of([] {
                  tool_from(R"({"name": "t", "description": "d", "parameters": {"type": "object",
                      "properties": {"x": {"type": "string"}}, "required": ["x"]}})");
              }),
              ErrorKind::MalformedSchema);
    const Tool t = tool_from(R"({"name": "t", "description": "d", "parameters": {"type": "object",
        "properties": {"x": {"type": "string"}}}})");
    ASSERT_EQ(t.flags.size(), 1u);
}

TEST(ToolCatalog, UnwrapsFunctionRecordAndSnakeCases) {
    const Tool t = tool_from(R"({"type": "function", "function": {"name": "GetWeather", "description": "w",
        "parameters": {"type": "object", "properties": {"cityName": {"type": "string", "description": "c"}}, "required": ["cityName"]}}})");
    EXPECT_EQ(t.name, "get_weather");
    ASSERT_TRUE(t.parameter("city_name"));
    EXPECT_TRUE(t.parameter("city_name")->required);
}

TEST(ToolCatalog, DuplicateToolRejected) {
    EXPECT_EQ(kind_of([] {
                  catalog_of({R"({"name": "a", "description": "d"})", R"({"name": "a", "description": "e"})"});
              }),
              ErrorKind::DuplicateTool);
}

TEST(ToolGraphs, OutputFeedsRequiredParameter) {
    const Catalog cat = catalog_of({
        R"({"name": "search_flight", "description": "s", "returns": {"flight_id": {"type": "string"}}})",
        R"({"name": "book_flight", "description": "b", "parameters": {"type": "object",
            "properties": {"flight_id": {"type": "string", "description": "f"}}, "required": ["flight_id"]}})",
    });
    const auto g = build_graphs(cat);
    ASSERT_EQ(g.depend.edges().size(), 1u);
    const auto* e = g.depend.edge("search_flight", "book_flight");
    ASSERT_TRUE(e);
    EXPECT_EQ(e->bindings, (std::vector<Binding>{{"flight_id", "flight_id"}}));
    EXPECT_TRUE(g.share.edges().empty());
}

TEST(ToolGraphs, SharedParameterWithoutIoOverlap) {
    const Catalog cat = catalog_of({
        R"({"name": "get_weather", "description": "w", "parameters": [{"name": "city", "description": "c", "required": true}]})",
        R"({"name": "find_hotel", "description": "h", "parameters": [{"name": "city", "description": "c", "required": true}]})",
    });
    const auto g = build_graphs(cat);
    EXPECT_TRUE(g.depend.edges().empty());
    ASSERT_EQ(g.share.edges().size(), 1u);
    EXPECT_EQ(g.share.edges()[0].shared, (std::vector<std::string>{"city"}));
}

TEST(ToolGraphs, SingleToolIsEdgeless) {
    const auto g = build_graphs(catalog_of({R"({"name": "a", "description": "d"})"}));
    EXPECT_TRUE(g.depend.edges().empty());
    EXPECT_TRUE(g.share.edges().empty());
}

TEST(ToolGraphs, OverridesAddAndRemove) {
    const Catalog cat = builtin::demo_catalog();
    const auto g = build_graphs(cat, builtin::demo_overrides());
    ASSERT_TRUE(g.depend.edge("book_hotel", "search_location"));
    const auto removed = build_graphs(cat, json::parse(R"({"remove": [{"producer": "search_flight", "consumer": "book_flight"}]})"));
    EXPECT_FALSE(removed.depend.edge("search_flight", "book_flight"));
    EXPECT_EQ(kind_of([&] { build_graphs(cat, json::parse(R"({"add": [{"producer": "nope", "consumer": "clear_cart",
        "output_field": "x", "parameter": "app"}]})")); }),
              ErrorKind::MalformedSchema);
}

TEST(Selection, IsolatedIsDeterministic) {
    const auto g = build_graphs(catalog_of({R"({"name": "a", "description": "d"})", R"({"name": "b", "description": "d"})",
                                            R"({"name": "c", "description": "d"})"}));
    const auto s1 = sample_selection(g, AtomicKind::isolated, 7);
    const auto s2 = sample_selection(g, AtomicKind::isolated, 7);
    ASSERT_EQ(s1.tools.size(), 1u);
    EXPECT_EQ(s1.tools, s2.tools);
    EXPECT_EQ(s1.relation, Relation::none);
}

TEST(Selection, SerialOnEdgelessGraph) {
    const auto g = build_graphs(catalog_of({R"({"name": "a", "description": "d"})"}));
    try {
        sample_selection(g, AtomicKind::serial, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyGraph);
        EXPECT_EQ(e.detail(), "serial");
    }
}

TEST(Selection, ParallelSeedSweepHitsEverySharingEdge) {
    const auto g = build_graphs(catalog_of({
        R"({"name": "a", "description": "d", "parameters": [{"name": "city", "description": "c", "required": true}]})",
        R"({"name": "b", "description": "d", "parameters": [{"name": "city", "description": "c", "required": true}]})",
        R"({"name": "c", "description": "d", "parameters": [{"name": "date", "description": "c", "required": true}]})",
        R"({"name": "e", "description": "d", "parameters": [{"name": "date", "description": "c", "required": true}]})",
    }));
    ASSERT_EQ(g.share.edges().size(), 2u);
    std::set<std::pair<std::string, std::string>> seen;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto sel = sample_selection(g, AtomicKind::parallel, s);
        EXPECT_EQ(sel.relation, Relation::independent);
        seen.insert({sel.tools[0], sel.tools[1]});
    }
    EXPECT_EQ(seen.size(), 2u);
}

// ------------------------------------------------------------ backends

TEST(Backends, TemplateGeneratorIsDeterministic) {
    auto gen = make_template_generator();
    const Catalog cat = builtin::demo_catalog();
    const auto g = build_graphs(cat, builtin::demo_overrides());
    const auto sel = sample_selection(g, AtomicKind::serial, 3);
    GenerationRequest req;
    req.grammar = "atomic_plan";
    req.seed = 11;
    req.prompt = atomic_prompt(sel, cat);
    req.payload = atomic_payload(sel, cat);
    EXPECT_EQ(generate_checked(*gen, req), generate_checked(*gen, req));
}

TEST(Backends, GrammarViolationIsMalformedGeneration) {
    ScriptedGenerator gen;
    gen.push("atomic_plan", "not json");
    GenerationRequest req;
    req.grammar = "atomic_plan";
    EXPECT_EQ(kind_of([&] { generate_checked(gen, req); }), ErrorKind::MalformedGeneration);
    req.grammar = "no_such_grammar";
    EXPECT_EQ(kind_of([&] { generate_checked(gen, req); }), ErrorKind::InvalidArgument);
}

TEST(Backends, HashedEmbedderIdentityAndDisjointness) {
    HashedBowEmbedder emb;
    EXPECT_NEAR(emb.similarity("book a hotel", "book a hotel"), 1.0, 1e-12);
    const std::vector<std::string> left = {"alpha", "beta"}, right = {"gamma", "delta"};
    for (const auto& a : left)
        for (const auto& b : right) ASSERT_NE(emb.bucket(a), emb.bucket(b));
    EXPECT_EQ(emb.similarity("alpha beta", "gamma delta"), 0.0);
}

TEST(Backends, EmbeddingBatchOrderIsPreserved) {
    HashedBowEmbedder emb;
    const auto ab = emb.embed({"first text", "second words"});
    const auto ba = emb.embed({"second words", "first text"});
    EXPECT_EQ(ab[0].values, ba[1].values);
    EXPECT_EQ(ab[1].values, ba[0].values);
}

TEST(Backends, StubJudgeContract) {
    StubJudge pass_all;
    EXPECT_TRUE(pass_all.judge("anything", "semantic_drift").pass);
    StubJudge marker(std::vector<StubJudge::Rule>{{"DRIFT", "query and plan disagree"}});
    const auto v1 = marker.judge("a DRIFT sample", "semantic_drift");
    EXPECT_FALSE(v1.pass);
    EXPECT_EQ(v1.reasons, (std::vector<std::string>{"query and plan disagree"}));
    const auto v2 = marker.judge("a DRIFT sample", "semantic_drift");
    EXPECT_EQ(v1.prompt_hash, v2.prompt_hash);
    EXPECT_EQ(v1.pass, v2.pass);
    EXPECT_EQ(kind_of([&] { marker.judge("x", "unknown_rubric"); }), ErrorKind::InvalidArgument);
}

// -------------------------------------------------------------- remote

namespace {

struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::atomic<int> chat_calls{0};
    std::atomic<int> failures_left{0};

    LocalServer() {
        server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++chat_calls;
            if (failures_left > 0) {
                --failures_left;
                res.status = 503;
                return;
            }
            if (req.get_header_value("Authorization") == "Bearer bad") {
                res.status = 401;
                return;
            }
            const json body = json::parse(req.body);
            const std::string prompt = body["messages"][0]["content"];
            res.set_content(json{{"choices", json::array({{{"message", {{"content", "echo: " + prompt}}}}})}}.dump(),
                            "application/json");
        });
        server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            json data = json::array();
            for (std::size_t i = 0; i < body["input"].size(); ++i) data.push_back({{"embedding", {3.0, 4.0 + static_cast<double>(i)}}});
            res.set_content(json{{"data", data}}.dump(), "application/json");
        });
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~LocalServer() {
        server.stop();
        thread.join();
    }
};

std::filesystem::path fresh_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("agentsynth_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

RemoteConfig config_for(const LocalServer& s, const std::filesystem::path& cache) {
    RemoteConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(s.port);
    c.model = "test-model";
    c.cache_dir = cache.string();
    c.timeout_seconds = 5;
    c.api_key_env = "AGENTSYNTH_TEST_KEY_UNSET";
    return c;
}

}  // namespace

TEST(Remote, Sha256KnownDigest) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Remote, ServerErrorIsRetriable) {
    LocalServer s;
    s.failures_left = 1;
    RemoteGenerator gen(config_for(s, fresh_dir("retriable")));
    GenerationRequest req;
    req.prompt = "hello";
    try {
        gen.generate(req);
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::BackendFailure);
        EXPECT_EQ(e.status(), 503);
        EXPECT_TRUE(e.retriable());
    }
    EXPECT_EQ(gen.generate(req), "echo: hello");
}

TEST(Remote, ClientErrorIsNotRetriable) {
    LocalServer s;
    setenv("AGENTSYNTH_TEST_KEY_BAD", "bad", 1);
    auto cfg = config_for(s, fresh_dir("client_error"));
    cfg.api_key_env = "AGENTSYNTH_TEST_KEY_BAD";
    RemoteGenerator gen(cfg);
    try {
        gen.generate(GenerationRequest{});
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_EQ(e.status(), 401);
        EXPECT_FALSE(e.retriable());
    }
}

TEST(Remote, CacheHitSkipsNetwork) {
    LocalServer s;
    const auto cache = fresh_dir("cache_hit");
    GenerationRequest req;
    req.prompt = "cached";
    {
        RemoteGenerator gen(config_for(s, cache));
        EXPECT_EQ(gen.generate(req), "echo: cached");
        EXPECT_EQ(gen.cache_stats().writes, 1u);
    }
    RemoteGenerator again(config_for(s, cache));
    EXPECT_EQ(again.generate(req), "echo: cached");
    EXPECT_EQ(s.chat_calls.load(), 1);
    EXPECT_EQ(again.cache_stats().hits, 1u);
}

TEST(Remote, OfflineServesCacheOnly) {
    LocalServer s;
    const auto cache = fresh_dir("offline");
    GenerationRequest req;
    req.prompt = "stored";
    RemoteGenerator(config_for(s, cache)).generate(req);
    auto cfg = config_for(s, cache);
    cfg.offline = true;
    cfg.endpoint.clear();
    cfg.endpoint_env = "AGENTSYNTH_TEST_ENDPOINT_UNSET";
    RemoteGenerator offline(cfg);
    EXPECT_EQ(offline.generate(req), "echo: stored");
    req.prompt = "never seen";
    try {
        offline.generate(req);
        FAIL();
    } catch (const BackendError& e) {
        EXPECT_FALSE(e.retriable());
    }
}

TEST(Remote, EmbeddingsAreNormalized) {
    LocalServer s;
    RemoteEmbedder emb(config_for(s, fresh_dir("embed")));
    const auto v = emb.embed({"a", "b"});
    ASSERT_EQ(v.size(), 2u);
    EXPECT_NEAR(v[0].values[0], 0.6, 1e-12);
    EXPECT_NEAR(v[0].values[1], 0.8, 1e-12);
}
