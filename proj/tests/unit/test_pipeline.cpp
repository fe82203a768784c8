#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "agentsynth/pipeline.hpp"

using namespace agentsynth;
namespace fs = std::filesystem;

namespace {

class PipelineTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("agentsynth_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    std::string write(const std::string& name, const std::string& body) const {
        std::ofstream(path(name)) << body;
        return path(name);
    }

    int run(const std::string& cmd, pipeline::Options o) {
        err_.str("");
        return pipeline::run(cmd, o, err_);
    }

    static std::string slurp(const std::string& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    static std::vector<json> lines(const std::string& p) {
        std::vector<json> out;
        std::ifstream in(p);
        for (std::string l; std::getline(in, l);)
            if (!l.empty()) out.push_back(json::parse(l));
        return out;
    }

    static json manifest(const std::string& out) { return json::parse(slurp(out + ".manifest.json")); }

    static void expect_conserved(const json& m) {
        EXPECT_TRUE(m["conserved"].get<bool>());
        for (const auto& s : m["stages"]) {
            std::size_t dropped = 0;
            for (const auto& [_, n] : s["drops"].items()) dropped += n.get<std::size_t>();
            EXPECT_EQ(s["inputs"].get<std::size_t>(), s["outputs"].get<std::size_t>() + dropped) << s.dump();
        }
    }

    pipeline::Options synth(const std::string& out, std::size_t count, std::uint64_t seed = 1) const {
        pipeline::Options o;
        o.out = path(out);
        o.count = count;
        o.seed = seed;
        return o;
    }

    fs::path dir_;
    std::ostringstream err_;
};

std::string decomposition_text() { return "<Plan>Step1. book hotel\nStep2. search food</Plan><Reply>ok</Reply>"; }

}  // namespace

TEST_F(PipelineTest, UnknownConfigKeyExitsTwoNamingPath) {
    pipeline::Options o = synth("o.jsonl", 2);
    o.config_path = write("c.json", R"({"plans": {"count": 2, "bogus": 1}})");
    EXPECT_EQ(run("synth-plans", o), 2);
    EXPECT_NE(err_.str().find("plans.bogus"), std::string::npos) << err_.str();
    EXPECT_NE(slurp(o.out + ".manifest.json").find("plans.bogus"), std::string::npos);
}

TEST_F(PipelineTest, IllTypedAndMissingKeys) {
    pipeline::Options o = synth("o.jsonl", 2);
    o.config_path = write("c.json", R"({"schedules": {"min_cities": "three"}})");
    EXPECT_EQ(run("synth-schedules", o), 2);
    EXPECT_NE(err_.str().find("schedules.min_cities"), std::string::npos) << err_.str();

    pipeline::Options s;
    s.in = write("in.jsonl", "");
    s.out = path("s.jsonl");
    EXPECT_EQ(run("score", s), 2);
    EXPECT_NE(err_.str().find("score.task"), std::string::npos) << err_.str();

    s.task = "juggling";
    EXPECT_EQ(run("score", s), 2);
    EXPECT_EQ(run("no-such-command", s), 2);

    o.config_path = write("bad.json", "{\"seed\": 1,}");
    EXPECT_EQ(run("synth-plans", o), 2);
}

TEST_F(PipelineTest, ScoreIdentityGivesFullTotals) {
    std::string body;
    for (int i = 0; i < 3; ++i) body += dump_compact({{"id", "r" + std::to_string(i)}, {"pred", decomposition_text()}, {"gold", decomposition_text()}}) + "\n";
    pipeline::Options o;
    o.in = write("in.jsonl", body);
    o.out = path("scores.jsonl");
    o.task = "decomposition";
    ASSERT_EQ(run("score", o), 0) << err_.str();
    const auto recs = lines(o.out);
    ASSERT_EQ(recs.size(), 3u);
    for (const auto& r : recs) EXPECT_DOUBLE_EQ(r["total"].get<double>(), 2.0);
    expect_conserved(manifest(o.out));
}

TEST_F(PipelineTest, ScoreDropsMalformedRowsAndConserves) {
    const std::string body = dump_compact({{"id", "good"}, {"pred", decomposition_text()}, {"gold", decomposition_text()}}) + "\n" +
                             dump_compact({{"id", "nopred"}, {"gold", decomposition_text()}}) + "\n" +
                             dump_compact({{"id", "badgold"}, {"pred", decomposition_text()}, {"gold", "prose"}}) + "\n";
    pipeline::Options o;
    o.in = write("in.jsonl", body);
    o.out = path("scores.jsonl");
    o.task = "decomposition";
    ASSERT_EQ(run("score", o), 0) << err_.str();
    EXPECT_EQ(lines(o.out).size(), 1u);
    const auto drops = lines(o.out + ".drops.jsonl");
    ASSERT_EQ(drops.size(), 2u);
    EXPECT_EQ(drops[0]["id"], "nopred");
    EXPECT_EQ(drops[1]["id"], "badgold");
    expect_conserved(manifest(o.out));
}

TEST_F(PipelineTest, SynthCommandsConserveWithUniqueIds) {
    for (const std::string cmd : {"synth-plans", "synth-schedules", "synth-workflows", "synth-longhorizon", "synth-trajectories"}) {
        const auto o = synth(cmd + ".jsonl", 4);
        ASSERT_EQ(run(cmd, o), 0) << cmd << ": " << err_.str();
        const auto recs = lines(o.out);
        EXPECT_FALSE(recs.empty()) << cmd;
        std::set<std::string> ids;
        for (const auto& r : recs) EXPECT_TRUE(ids.insert(r["id"].get<std::string>()).second) << cmd;
        const json m = manifest(o.out);
        expect_conserved(m);
        EXPECT_EQ(m["stages"].back()["outputs"].get<std::size_t>(), recs.size()) << cmd;
    }
}

TEST_F(PipelineTest, MaskedParametersLeaveNoDanglingLabels) {
    const auto o = synth("plans.jsonl", 40, 11);
    ASSERT_EQ(run("synth-plans", o), 0) << err_.str();
    const std::regex dangling(R"([a-z_]+:\s*[,)])");
    for (const auto& r : lines(o.out)) EXPECT_FALSE(std::regex_search(r["query"].get<std::string>(), dangling)) << r["query"];
}

TEST_F(PipelineTest, SameSeedSameBytesAcrossJobCounts) {
    for (const std::string cmd : {"synth-plans", "synth-schedules", "synth-workflows", "synth-longhorizon"}) {
        auto a = synth("a.jsonl", 6, 5);
        auto b = synth("b.jsonl", 6, 5);
        a.jobs = 1;
        b.jobs = 3;
        ASSERT_EQ(run(cmd, a), 0) << err_.str();
        ASSERT_EQ(run(cmd, b), 0) << err_.str();
        EXPECT_EQ(slurp(a.out), slurp(b.out)) << cmd;
        EXPECT_EQ(slurp(a.out + ".drops.jsonl"), slurp(b.out + ".drops.jsonl")) << cmd;
        auto c = synth("c.jsonl", 6, 6);
        ASSERT_EQ(run(cmd, c), 0) << err_.str();
        EXPECT_NE(slurp(a.out), slurp(c.out)) << cmd;
    }
}

TEST_F(PipelineTest, DedupAndSelectChain) {
    const auto plans = synth("plans.jsonl", 10);
    ASSERT_EQ(run("synth-plans", plans), 0) << err_.str();
    const auto records = lines(plans.out);

    // duplicate every record, then dedup must restore the original count
    std::string doubled;
    for (const auto& r : records) {
        doubled += dump_compact(r) + "\n";
        json twin = r;
        twin["id"] = r["id"].get<std::string>() + "-twin";
        doubled += dump_compact(twin) + "\n";
    }
    pipeline::Options d;
    d.in = write("doubled.jsonl", doubled);
    d.out = path("dedup.jsonl");
    ASSERT_EQ(run("dedup", d), 0) << err_.str();
    EXPECT_LE(lines(d.out).size(), records.size());
    expect_conserved(manifest(d.out));

    pipeline::Options s;
    s.in = d.out;
    s.out = path("sel.jsonl");
    s.budget = 3;
    ASSERT_EQ(run("select", s), 0) << err_.str();
    const auto sel = lines(s.out);
    ASSERT_EQ(sel.size(), 3u);
    for (std::size_t i = 0; i < sel.size(); ++i) EXPECT_EQ(sel[i]["rank"].get<std::size_t>(), i + 1);
    expect_conserved(manifest(s.out));

    s.budget = 10000;
    EXPECT_EQ(run("select", s), 2);
}

TEST_F(PipelineTest, MathCheckPasses) {
    pipeline::Options o;
    o.out = path("math.jsonl");
    ASSERT_EQ(run("math-check", o), 0) << err_.str();
    for (const auto& r : lines(o.out)) EXPECT_TRUE(r["pass"].get<bool>()) << r.dump();
}

TEST_F(PipelineTest, MissingInputIsConfigError) {
    pipeline::Options o;
    o.in = path("absent.jsonl");
    o.out = path("x.jsonl");
    o.task = "decomposition";
    EXPECT_EQ(run("score", o), 2);
    EXPECT_NE(manifest(o.out)["error"].get<std::string>().find("absent.jsonl"), std::string::npos);
}
