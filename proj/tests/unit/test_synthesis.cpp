#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include "agentsynth/agentsynth.hpp"

using namespace agentsynth;
using namespace agentsynth::builtin;

namespace {

template <typename Fn>
const Error* caught(Fn&& fn) {
    static thread_local std::optional<Error> last;
    try {
        fn();
    } catch (const Error& e) {
        last.emplace(e);
        return &*last;
    }
    ADD_FAILURE() << "no error raised";
    return nullptr;
}

struct World {
    Catalog catalog = demo_catalog();
    ToolGraphs graphs = build_graphs(catalog, demo_overrides());
    std::unique_ptr<TemplateGenerator> gen = make_template_generator();
    PlanComposer composer{catalog, graphs};

    ToolSelection isolated(const std::string& tool) const { return {AtomicKind::isolated, {tool}, Relation::none, {}}; }

    ToolSelection serial(const std::string& a, const std::string& b) const {
        const auto* e = graphs.depend.edge(a, b);
        EXPECT_NE(e, nullptr) << a << " -> " << b;
        return {AtomicKind::serial, {a, b}, Relation::causal, e ? e->bindings : std::vector<Binding>{}};
    }

    AtomicPlan atom(const ToolSelection& sel, std::uint64_t seed) { return synthesize_atomic(sel, catalog, *gen, seed); }
    ComposedPlan lifted(const ToolSelection& sel, std::uint64_t seed) { return composer.lift(atom(sel, seed)); }
};

json read_json(const std::string& name) {
    std::ifstream in(std::string(AGENTSYNTH_FIXTURES) + "/" + name);
    return json::parse(in);
}

TripProblem fixture_trip() { return std::get<TripProblem>(schedule_problem_from_json(read_json("scheduling_problem.json"))); }

Itinerary fixture_itinerary() {
    Itinerary it;
    it.segments = {{"Nairobi", 1, 6}, {"Miami", 6, 11}, {"Vienna", 11, 15}, {"Dubrovnik", 15, 19}, {"Hamburg", 19, 25}};
    return it;
}

TripProblem two_cities(bool flight) {
    TripProblem p;
    p.total_days = 5;
    p.stays = {{"Athens", 3}, {"Lisbon", 3}};
    if (flight) p.flights = {{"Athens", "Lisbon"}};
    return p;
}

}  // namespace

// ------------------------------------------------------------ atomic plans

TEST(Atomic, IsolatedClearCartIsOneStep) {
    World w;
    const auto plan = w.atom(w.isolated("clear_cart"), 7);
    ASSERT_EQ(plan.steps.size(), 1u);
    EXPECT_EQ(plan.steps[0].tool, "clear_cart");
    EXPECT_NE(plan.query.find("shopping cart"), std::string::npos);
    const auto text = render_sample(plan);
    EXPECT_NE(text.find("Step1."), std::string::npos);
    EXPECT_EQ(text.find("Step2."), std::string::npos);
}

TEST(Atomic, SerialHotelThenRestaurantsReferencesStepOne) {
    World w;
    const auto plan = w.atom(w.serial("book_hotel", "search_location"), 11);
    ASSERT_EQ(plan.steps.size(), 2u);
    EXPECT_EQ(plan.steps[1].bound_args["search_info_slot"], "{step1.hotel_name}");
    const auto text = render_sample(plan);
    const auto s1 = text.find("Step1."), s2 = text.find("\nStep2.");
    ASSERT_NE(s1, std::string::npos);
    ASSERT_NE(s2, std::string::npos);
    EXPECT_LT(s1, s2);
}

TEST(Atomic, TemplateBackendIsDeterministic) {
    World w;
    const auto sel = w.serial("search_flight", "book_flight");
    const auto a = w.atom(sel, 99), b = w.atom(sel, 99);
    EXPECT_EQ(render_sample(a), render_sample(b));
    EXPECT_EQ(plan_id(a), plan_id(b));
}

TEST(Atomic, WrongToolFromBackendIsMalformed) {
    World w;
    ScriptedGenerator gen;
    gen.push("atomic_plan", R"({"query": "q", "steps": [{"tool": "send_email", "intent": "x"}], "mentions": ["clear_cart"]})");
    const auto* e = caught([&] { synthesize_atomic(w.isolated("clear_cart"), w.catalog, gen, 1); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::MalformedGeneration);
}

// ----------------------------------------------------------- composition

TEST(Compose, ConcatenateBuildsChain) {
    World w;
    const auto ab = w.lifted(w.serial("search_flight", "book_flight"), 1);
    const auto c = w.lifted(w.isolated("cancel_reservation"), 2);
    const auto out = w.composer.compose(Operator::Concatenate, ab, c, 5);
    ASSERT_EQ(out.nodes.size(), 3u);
    EXPECT_EQ(plan_order(out), (std::vector<std::size_t>{0, 1, 2}));
    ASSERT_EQ(out.edges.size(), 2u);
    EXPECT_EQ(out.edges[1].from, 1u);
    EXPECT_EQ(out.edges[1].to, 2u);
    EXPECT_EQ(out.nodes[2].bound_args["reservation_id"], "{step2.reservation_id}");
}

TEST(Compose, ConcatenateWithoutDependencyIsIncompatible) {
    World w;
    const auto a = w.lifted(w.isolated("get_weather"), 1);
    const auto b = w.lifted(w.isolated("clear_cart"), 2);
    const auto* e = caught([&] { w.composer.compose(Operator::Concatenate, a, b, 1); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::IncompatibleInputs);
}

TEST(Compose, MaskMatchesSeedReplay) {
    World w;
    const auto plan = w.lifted(w.isolated("book_hotel"), 4);
    std::vector<std::string> required;
    for (const auto& p : w.catalog.at("book_hotel").parameters)
        if (p.required) required.push_back(p.name);
    Rng rng(3);
    const std::string expected = rng.pick(required);

    const auto out = w.composer.compose(Operator::Mask, plan, 3);
    EXPECT_EQ(out.nodes[0].masked_params, (std::set<std::string>{expected}));
    ASSERT_EQ(out.clarifications.size(), 1u);
    EXPECT_EQ(out.clarifications[0].parameter, expected);
    const std::string value = plan.nodes[0].bound_args[expected].get<std::string>();
    EXPECT_EQ(out.nodes[0].held_out[expected], value);
    EXPECT_EQ(out.query().find(value), std::string::npos);
    EXPECT_NE(render_sample(out).find("Ask the user for the missing " + expected), std::string::npos);
}

TEST(Compose, MaskGrowsUntilNothingLeft) {
    World w;
    auto plan = w.lifted(w.isolated("clear_cart"), 4);
    plan = w.composer.compose(Operator::Mask, plan, 1);
    EXPECT_EQ(plan.nodes[0].masked_params.size(), 1u);
    const auto* e = caught([&] { w.composer.compose(Operator::Mask, plan, 2); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::NothingToMask);
}

TEST(Compose, AddRejectsToolOverlap) {
    World w;
    const auto a = w.lifted(w.isolated("search_location"), 1);
    const auto b = w.lifted(w.serial("book_hotel", "search_location"), 2);
    const auto* e = caught([&] { w.composer.compose(Operator::Add, a, b, 1); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::IncompatibleInputs);
    EXPECT_NE(std::string(e->detail()).find("tool overlap"), std::string::npos);
}

TEST(Compose, AddDisjointHasNoCrossEdges) {
    World w;
    const auto a = w.lifted(w.isolated("get_weather"), 1);
    const auto b = w.lifted(w.isolated("clear_cart"), 2);
    const auto out = w.composer.compose(Operator::Add, a, b, 1);
    EXPECT_EQ(out.nodes.size(), 2u);
    EXPECT_TRUE(out.edges.empty());
}

TEST(Compose, GroupConsolidatesSharedParameter) {
    World w;
    const auto a = w.lifted(w.isolated("search_product"), 1);
    const auto b = w.lifted(w.isolated("clear_cart"), 2);
    const auto out = w.composer.compose(Operator::Group, a, b, 1);
    ASSERT_EQ(out.consolidations.size(), 1u);
    EXPECT_EQ(out.consolidations[0].parameter, "app");
    EXPECT_EQ(out.nodes[0].bound_args["app"], out.nodes[1].bound_args["app"]);
    EXPECT_EQ(out.query().find(out.consolidations[0].replaced.at(0)), std::string::npos);
}

TEST(Compose, TransformMakesEdgeConditional) {
    World w;
    const auto plan = w.lifted(w.serial("search_flight", "book_flight"), 1);
    const auto out = w.composer.compose(Operator::Transform, plan, 1);
    ASSERT_EQ(out.edges.size(), 1u);
    EXPECT_TRUE(out.edges[0].conditional);
    EXPECT_EQ(out.edges[0].condition_field, "flight_id");
    EXPECT_EQ(out.edges[0].condition, "if flight_id is non-empty");
}

TEST(Compose, SplitPreservesIntents) {
    World w;
    const auto plan = w.lifted(w.serial("search_flight", "book_flight"), 1);
    const auto out = w.composer.compose(Operator::Split, plan, 1);
    EXPECT_EQ(out.turns.size(), 2u);
    std::multiset<std::string> before, after;
    for (const auto& n : plan.nodes) before.insert(n.intent);
    for (const auto& n : out.nodes) after.insert(n.intent);
    EXPECT_EQ(before, after);
    EXPECT_EQ(out.turn_of, (std::vector<std::size_t>{0, 1}));
}

TEST(Compose, RandomCompositionsStayAcyclicAndValid) {
    World w;
    std::vector<AtomicPlan> pool;
    static constexpr AtomicKind kinds[] = {AtomicKind::isolated, AtomicKind::serial, AtomicKind::parallel};
    for (std::uint64_t i = 0; i < 18; ++i) {
        const auto s = derive_seed(8, "atomic", i);
        pool.push_back(w.atom(sample_selection(w.graphs, kinds[i % 3], s), s));
    }
    for (std::uint64_t i = 0; i < 200; ++i) {
        const auto p = compose_random(w.composer, pool, {}, derive_seed(8, "plan", i));
        EXPECT_EQ(plan_order(p).size(), p.nodes.size());
        EXPECT_FALSE(validate_schema(render_sample(p), TaskKind::decomposition).has_value()) << render_sample(p);
        for (const auto& n : p.nodes)
            for (const auto& m : n.masked_params)
                if (n.held_out.contains(m)) EXPECT_EQ(p.query().find(n.held_out[m].dump()), std::string::npos);
        EXPECT_EQ(replay_provenance(w.composer, pool, p.provenance).id, p.id);
    }
}

TEST(Render, RoundTripsThroughParser) {
    World w;
    const auto ab = w.lifted(w.serial("search_flight", "book_flight"), 1);
    const auto c = w.lifted(w.isolated("cancel_reservation"), 2);
    const auto plan = w.composer.compose(Operator::Concatenate, ab, c, 5);
    const auto text = render_sample(plan);
    EXPECT_NE(text.find(" Then, please cancel"), std::string::npos);
    const auto d = grammar::parse_decomposition(text, {});
    EXPECT_EQ(d.query, plan.query());
    EXPECT_EQ(d.steps, plan_steps(plan));
    EXPECT_EQ(d.reply, plan.reply);
    const std::string body = text.substr(text.find("<Plan>"));
    const auto r = parse_output(TaskKind::decomposition, body);
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.value->steps, plan_steps(plan));
}

TEST(Render, ChatFormHasOneUserMessagePerTurn) {
    World w;
    const auto out = w.composer.compose(Operator::Split, w.lifted(w.serial("search_flight", "book_flight"), 1), 1);
    const auto chat = render_chat(out);
    ASSERT_EQ(chat["messages"].size(), 4u);
    EXPECT_EQ(chat["messages"][0]["role"], "user");
    EXPECT_EQ(chat["messages"][3]["role"], "assistant");
    EXPECT_NE(chat["messages"][3]["content"].get<std::string>().find("Step2."), std::string::npos);
}

// --------------------------------------------------------------- quality

namespace {

std::uint64_t reference_simhash(const std::string& s) {
    int counts[64] = {};
    for (const auto& sh : shingles(s)) {
        const std::uint64_t h = splitmix64(fnv1a64(sh));
        for (int b = 0; b < 64; ++b) counts[b] += ((h >> b) & 1U) ? 1 : -1;
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 64; ++b)
        if (counts[b] > 0) bits |= std::uint64_t{1} << b;
    return bits;
}

std::string random_sentence(Rng& rng, std::size_t words) {
    static const std::vector<std::string> vocab{
        "book", "hotel", "flight", "city", "search", "cart", "clear", "weather", "tomorrow", "price", "room",
        "station", "metro", "restaurant", "near", "cheap", "order", "email", "send", "calendar", "meeting",
        "reserve", "cancel", "refund", "passenger", "date", "nights", "product", "keyword", "app"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < words; ++i) out.push_back(vocab[rng.index(vocab.size())]);
    return text::join(out, " ");
}

std::vector<std::string> greedy_oracle(const std::vector<TextSample>& samples, int threshold) {
    std::vector<std::uint64_t> kept;
    std::vector<std::string> ids;
    for (const auto& s : samples) {
        const auto f = reference_simhash(s.text);
        bool dup = false;
        for (auto k : kept) dup = dup || std::popcount(f ^ k) <= threshold;
        if (!dup) {
            kept.push_back(f);
            ids.push_back(s.id);
        }
    }
    return ids;
}

}  // namespace

TEST(SimHash, MatchesReference) {
    for (const char* s : {"book a hotel in hangzhou", "clear the cart", "a b c d e f g"})
        EXPECT_EQ(simhash(s).bits, reference_simhash(s));
    EXPECT_EQ(hamming(simhash("same text here"), simhash("same text here")), 0);
}

TEST(SimHash, UnrelatedTextIsFar) {
    EXPECT_GT(hamming(simhash("book a hotel in hangzhou"),
                      simhash("the weather in oslo tomorrow looks rainy and cold all day")),
              3);
}

TEST(SimHash, SingleCharacterEditIsNear) {
    const std::string base =
        "Please book a hotel room in Hangzhou near the West Lake for two nights starting on the fifth of May, then "
        "search for well rated restaurants close to the hotel and sort them by distance from the lobby entrance.";
    ASSERT_GE(base.size(), 200u);
    std::string edited = base;
    edited[30] = 'X';
    EXPECT_LE(hamming(simhash(base), simhash(edited)), 3);
}

TEST(SimHash, SingleEditsUsuallyStayWithinThreshold) {
    // the bound is statistical: count random one-character edits of 200-char texts
    Rng rng(12);
    int near = 0, trials = 500;
    for (int i = 0; i < trials; ++i) {
        std::string s = random_sentence(rng, 40).substr(0, 200);
        std::string e = s;
        std::size_t pos = rng.index(e.size());
        while (e[pos] == ' ') pos = rng.index(e.size());
        e[pos] = e[pos] == 'z' ? 'y' : static_cast<char>(e[pos] + 1);
        near += hamming(simhash(s), simhash(e)) <= 3;
    }
    EXPECT_GE(near, trials * 7 / 10);
}

TEST(SimHash, ShinglesAreCodePoints) {
    EXPECT_EQ(shingles("Ab  cd"), (std::vector<std::string>{"ab ", "b c", " cd"}));
    EXPECT_EQ(shingles("京东购物车"), (std::vector<std::string>{"京东购", "东购物", "购物车"}));
    EXPECT_EQ(shingles("hi"), (std::vector<std::string>{"hi"}));
}

TEST(SimHash, EmptyTextIsAnError) {
    const auto* e = caught([] { simhash("   "); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::EmptyText);
}

TEST(Dedup, IdenticalSamplesCollapse) {
    const auto r = dedup({{"a", "book a hotel in hangzhou"}, {"b", "book a hotel in hangzhou"}});
    EXPECT_EQ(r.retained, (std::vector<std::string>{"a"}));
    ASSERT_EQ(r.dropped.size(), 1u);
    EXPECT_EQ(r.dropped[0].dropped, "b");
    EXPECT_EQ(r.dropped[0].kept, "a");
    EXPECT_EQ(r.dropped[0].distance, 0);
}

TEST(Dedup, ThresholdZeroKeepsDistinct) {
    std::vector<TextSample> s;
    Rng rng(4);
    std::set<std::uint64_t> bits;
    for (int i = 0; s.size() < 40; ++i) {
        TextSample t{"s" + std::to_string(i), random_sentence(rng, 12)};
        if (bits.insert(reference_simhash(t.text)).second) s.push_back(t);
    }
    EXPECT_EQ(dedup(s, 0).retained.size(), s.size());
}

TEST(Dedup, MatchesPairwiseOracleAndIsIdempotent) {
    Rng rng(21);
    std::vector<TextSample> s;
    for (int i = 0; i < 100; ++i) {
        std::string t = random_sentence(rng, 8 + rng.index(20));
        if (i > 0 && rng.unit() < 0.3) t = s[rng.index(s.size())].text + (rng.unit() < 0.5 ? "" : " app");
        s.push_back({"s" + std::to_string(i), t});
    }
    const auto r = dedup(s, 3);
    EXPECT_EQ(r.retained, greedy_oracle(s, 3));
    EXPECT_FALSE(r.dropped.empty());
    std::vector<TextSample> kept;
    for (const auto& t : s)
        if (std::find(r.retained.begin(), r.retained.end(), t.id) != r.retained.end()) kept.push_back(t);
    EXPECT_EQ(dedup(kept, 3).retained, r.retained);
    const auto* e = caught([&] { dedup(s, 65); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::InvalidArgument);
}

TEST(Schema, DecompositionExamples) {
    EXPECT_FALSE(validate_schema("<Query>q</Query>\n<Plan>Step1. a</Plan>", TaskKind::decomposition).has_value());
    const std::string open = "<Query>q</Query>\n<Plan>Step1. a";
    const auto missing = validate_schema(open, TaskKind::decomposition);
    ASSERT_TRUE(missing.has_value());
    EXPECT_EQ(missing->position, open.size());
    const auto gap = validate_schema("<Query>q</Query>\n<Plan>Step1. a Step3. b</Plan>", TaskKind::decomposition);
    ASSERT_TRUE(gap.has_value());
    EXPECT_EQ(gap->expectation, "Step2 expected");
    EXPECT_TRUE(validate_schema("<Plan>Step1. a</Plan>", TaskKind::decomposition).has_value());
}

namespace {

class FailingJudge : public Judge {
public:
    AuditVerdict judge(const std::string&, const std::string&) override { throw BackendError(503, true, "down"); }
    std::string id() const override { return "failing"; }
};

}  // namespace

TEST(Audit, StubJudgeVerdicts) {
    StubJudge pass_all;
    const auto ok = audit_semantics("s1", "<Query>q</Query>", pass_all);
    ASSERT_TRUE(ok.verdict.has_value());
    EXPECT_TRUE(ok.verdict->pass);

    StubJudge marker(std::vector<StubJudge::Rule>{{"DRIFT", "query drifted"}});
    const auto bad = audit_semantics("s2", "text with DRIFT inside", marker);
    ASSERT_TRUE(bad.verdict.has_value());
    EXPECT_FALSE(bad.verdict->pass);
    EXPECT_EQ(bad.verdict->reasons, (std::vector<std::string>{"query drifted"}));

    const auto again = audit_semantics("s2", "text with DRIFT inside", marker);
    EXPECT_EQ(again.verdict->pass, bad.verdict->pass);
    EXPECT_EQ(again.verdict->prompt_hash, bad.verdict->prompt_hash);
}

TEST(Audit, BackendFailureParksSample) {
    FailingJudge judge;
    const auto rec = audit_semantics("s1", "anything", judge);
    EXPECT_FALSE(rec.verdict.has_value());
    EXPECT_NE(rec.error.find("down"), std::string::npos);
    const auto report = run_quality_filter({{"s1", "<Query>q</Query>\n<Plan>Step1. a</Plan>"}}, TaskKind::decomposition, &judge);
    EXPECT_TRUE(report.retained.empty());
    ASSERT_EQ(report.quarantined.size(), 1u);
    EXPECT_TRUE(report.dropped.empty());
}

TEST(Distractors, NearestUnlinkedToolsByScan) {
    World w;
    HashedBowEmbedder emb;
    EXPECT_EQ(caught([&] { inject_distractors({"book_hotel"}, w.catalog, w.graphs, 0, emb, 1); })->kind(),
              ErrorKind::InvalidArgument);

    const auto r = inject_distractors({"book_hotel"}, w.catalog, w.graphs, 3, emb, 1);
    std::vector<std::pair<double, std::string>> scan;
    const auto gold = emb.embed_one(w.catalog.at("book_hotel").description);
    for (const auto& t : w.catalog.tools()) {
        if (t.name == "book_hotel" || w.graphs.depend.connected("book_hotel", t.name)) continue;
        scan.emplace_back(-cosine(emb.embed_one(t.description), gold), t.name);
    }
    std::sort(scan.begin(), scan.end());
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < 3; ++i) expected.push_back(scan[i].second);
    EXPECT_EQ(r.injected, expected);
    EXPECT_NE(std::find(r.injected.begin(), r.injected.end(), "book_flight"), r.injected.end());
    EXPECT_EQ(std::count(r.tools.begin(), r.tools.end(), "book_hotel"), 1);
    EXPECT_EQ(r.tools.size(), 4u);
    for (const auto& t : r.injected) EXPECT_NE(t, "book_hotel");
    EXPECT_EQ(caught([&] { inject_distractors({"book_hotel"}, w.catalog, w.graphs, 50, emb, 1); })->kind(),
              ErrorKind::InsufficientCandidates);
}

// -------------------------------------------------------------- schedules

TEST(Schedule, TripDayAccounting) {
    TripParams prm;
    prm.cities = 5;
    prm.total_days = 25;
    const auto inst = generate_instance(prm, 77);
    const auto& p = std::get<TripProblem>(inst.problem);
    int sum = 0;
    for (const auto& s : p.stays) sum += s.second;
    EXPECT_EQ(p.stays.size(), 5u);
    EXPECT_EQ(sum, 29);
    EXPECT_TRUE(verify(inst.problem, inst.solution).empty());
    EXPECT_TRUE(accept(inst.problem));
}

TEST(Schedule, SameSeedSameInstance) {
    const auto a = generate_instance(TripParams{}, 5), b = generate_instance(TripParams{}, 5);
    EXPECT_TRUE(a.problem == b.problem);
    EXPECT_TRUE(a.solution == b.solution);
    const auto m1 = generate_instance(MeetingParams{}, 5), m2 = generate_instance(MeetingParams{}, 5);
    EXPECT_TRUE(m1.problem == m2.problem);
}

TEST(Schedule, CalendarGoldSlotStaysFree) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        CalendarParams prm;
        prm.min_days = prm.max_days = 2;
        prm.gold = CalendarSlot{1, 13 * 60};
        const auto inst = generate_instance(prm, seed);
        const auto& p = std::get<CalendarProblem>(inst.problem);
        for (const auto& b : p.busy)
            if (b.day == 1) EXPECT_FALSE(b.lo < 13 * 60 + p.meeting_len && 13 * 60 < b.hi) << seed;
        EXPECT_EQ(inst.solution.slot, (CalendarSlot{1, 13 * 60}));
        EXPECT_TRUE(verify(inst.problem, inst.solution).empty());
    }
}

TEST(Schedule, FixtureSolutionIsFound) {
    const auto p = fixture_trip();
    const auto sols = solve(p);
    ASSERT_EQ(sols.size(), 1u);
    EXPECT_TRUE(sols[0] == fixture_itinerary());
    EXPECT_TRUE(verify(p, fixture_itinerary()).empty());
}

TEST(Schedule, SwappedEndpointsBreakFlights) {
    const auto p = fixture_trip();
    Itinerary it;
    it.segments = {{"Hamburg", 1, 7}, {"Miami", 7, 12}, {"Vienna", 12, 16}, {"Dubrovnik", 16, 20}, {"Nairobi", 20, 25}};
    const auto v = verify(p, it);
    EXPECT_NE(std::find(v.begin(), v.end(), "no direct flight(Hamburg,Miami)"), v.end());
    EXPECT_NE(std::find(v.begin(), v.end(), "window(Dubrovnik,15,19)"), v.end());
}

TEST(Schedule, CoverageViolation) {
    const auto p = fixture_trip();
    auto it = fixture_itinerary();
    it.segments.pop_back();
    const auto v = verify(p, it);
    EXPECT_NE(std::find(v.begin(), v.end(), "coverage(1,25)"), v.end());
}

TEST(Schedule, TwoCityCases) {
    EXPECT_EQ(solve(two_cities(true)).size(), 2u);
    EXPECT_FALSE(accept(two_cities(true)));
    EXPECT_TRUE(solve(two_cities(false)).empty());
    EXPECT_FALSE(accept(two_cities(false)));
    auto pinned = two_cities(true);
    pinned.windows.push_back({"Lisbon", 1, 3});
    EXPECT_TRUE(accept(pinned));
    EXPECT_EQ(solve(pinned)[0].segments.front().city, "Lisbon");
}

TEST(Schedule, TooLargeForExhaustive) {
    TripProblem p;
    for (int i = 0; i < 9; ++i) p.stays.push_back({"C" + std::to_string(i), 2});
    EXPECT_EQ(caught([&] { solve(p); })->kind(), ErrorKind::TooLargeForExhaustive);
}

TEST(Schedule, WindowMetamorphic) {
    auto p = fixture_trip();
    const auto before = solve(p);
    auto satisfied = p;
    satisfied.windows.push_back({"Nairobi", 2, 5});
    auto a = solve(satisfied);
    ASSERT_EQ(a.size(), before.size());
    EXPECT_TRUE(a[0] == before[0]);
    auto violated = p;
    violated.windows.push_back({"Hamburg", 1, 3});
    EXPECT_TRUE(solve(violated).empty());
}

TEST(Schedule, RenderNamesEveryConstraint) {
    const ScheduleProblem p = fixture_trip();
    const auto r = render_nl(p, fixture_itinerary());
    EXPECT_NE(r.prompt.find("You only take direct flights"), std::string::npos);
    EXPECT_NE(r.answer.find("**Day 1-6:**"), std::string::npos);
    EXPECT_TRUE(audit_prompt(p, r).empty());
    EXPECT_EQ(render_nl(p, fixture_itinerary()).prompt, r.prompt);
    EXPECT_TRUE(parse_itinerary(p, r.answer) == fixture_itinerary());
    for (std::uint64_t variant = 1; variant < 6; ++variant) EXPECT_TRUE(audit_prompt(p, render_nl(p, fixture_itinerary(), variant)).empty());
}

TEST(Schedule, RoundTripAcrossDomains) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (const auto& inst : {generate_instance(MeetingParams{}, seed), generate_instance(CalendarParams{}, seed)}) {
            EXPECT_TRUE(accept(inst.problem));
            EXPECT_TRUE(verify(inst.problem, inst.solution).empty());
            const auto r = render_nl(inst.problem, inst.solution);
            EXPECT_TRUE(audit_prompt(inst.problem, r).empty());
            EXPECT_TRUE(parse_itinerary(inst.problem, r.answer) == inst.solution) << r.answer;
            EXPECT_TRUE(schedule_problem_from_json(to_json(inst.problem)) == inst.problem);
        }
    }
}

// -------------------------------------------------------------- workflows

namespace {

GoldWorkflow metro_gold() {
    return {"Which metro station is closest to the centre of Salt Lake City?",
            {"Search for the latest information on operational metro stations in Kolkata, especially in and around the "
             "Salt Lake City area.",
             "Identify which metro line covers Salt Lake City.",
             "Determine the station(s) closest to the central part of Salt Lake City."},
            {{1, 2}, {1, 3}}};
}

}  // namespace

TEST(Workflow, BuildWithDistractors) {
    const auto gold = metro_gold();
    const auto dag = build_workflow(gold, workflow_distractor_pool(), 1, 9);
    EXPECT_EQ(dag.size(), 3);
    EXPECT_EQ(dag.candidates.size(), 4u);
    EXPECT_EQ(build_workflow(gold, workflow_distractor_pool(), 2, 9).candidates.size(), 5u);
    EXPECT_TRUE(validate_workflow(dag, gold).empty());
    EXPECT_EQ(build_workflow(gold, workflow_distractor_pool(), 1, 9).candidates, dag.candidates);
    EXPECT_EQ(build_workflow(gold, workflow_distractor_pool(), 0, 9).candidates, gold.steps);
    EXPECT_EQ(caught([&] { build_workflow(gold, {"x"}, 2, 1); })->kind(), ErrorKind::PoolTooSmall);
}

TEST(Workflow, TopologicalOrders) {
    WorkflowDAG chain{{"a", "b"}, {{kStart, 1}, {1, 2}, {2, kEnd}}, {}, {}};
    EXPECT_EQ(topological_order(chain), (std::vector<int>{1, 2}));
    WorkflowDAG fan{{"a", "b", "c"}, {{kStart, 1}, {1, 2}, {1, 3}, {2, kEnd}, {3, kEnd}}, {}, {}};
    EXPECT_EQ(topological_order(fan), (std::vector<int>{1, 2, 3}));
    chain.edges.push_back({2, 1});
    EXPECT_EQ(caught([&] { topological_order(chain); })->kind(), ErrorKind::CycleDetected);
}

TEST(Workflow, ValidationReasons) {
    const auto gold = metro_gold();
    const auto dag = parse_workflow("Node:\n1: " + gold.steps[0] + "\n2: " + gold.steps[1] + "\n3: " + gold.steps[2] +
                                    "\nEdge: (START,1) (1,3) (1,2) (2,END) (3,END)");
    EXPECT_TRUE(validate_workflow(dag, gold).empty());

    WorkflowDAG missing{{gold.steps[0], gold.steps[2]}, {{kStart, 1}, {1, 2}, {2, kEnd}}, {}, {}};
    const auto m = validate_workflow(missing, gold);
    ASSERT_EQ(m.size(), 1u);
    EXPECT_EQ(m[0].rfind("missing gold node", 0), 0u);

    const GoldWorkflow strict{"t", {"first", "second"}, {{1, 2}}};
    WorkflowDAG swapped{{"second", "first"}, {{kStart, 1}, {1, 2}, {2, kEnd}}, {}, {}};
    EXPECT_EQ(validate_workflow(swapped, strict), (std::vector<std::string>{"order deviation"}));

    WorkflowDAG no_end{{"first", "second"}, {{kStart, 1}, {1, 2}}, {}, {}};
    const auto s = validate_workflow(no_end, strict);
    EXPECT_NE(std::find(s.begin(), s.end(), "sentinel: no END edge"), s.end());
}

TEST(Workflow, SerializeAndParse) {
    WorkflowDAG one{{"Search for the Battle of Antietam to determine the exact date it occurred."}, {{kStart, 1}, {1, kEnd}}, {}, {}};
    EXPECT_EQ(serialize_workflow(one),
              "Node:\n1: Search for the Battle of Antietam to determine the exact date it occurred.\nEdge: (START,1) (1,END)");
    for (const auto& g : workflow_tasks()) {
        const auto dag = build_workflow(g, workflow_distractor_pool(), 2, 3);
        EXPECT_TRUE(validate_workflow(dag, g).empty()) << g.task;
        const auto back = parse_workflow(serialize_workflow(dag));
        EXPECT_EQ(back.nodes, dag.nodes);
        EXPECT_EQ(back.edges, dag.edges);
    }
    EXPECT_EQ(caught([] { parse_workflow("Node:\n1: a\nEdge: (START,5) (1,END)"); })->kind(), ErrorKind::ParseError);
}

// ----------------------------------------------------------- trajectories

namespace {

ComposedPlan hotel_plan() {
    ComposedPlan p;
    p.id = "hotel";
    p.turns = {"帮我在杭州订一间酒店，然后找附近的餐厅"};
    SubTask hotel{"book_hotel", "Book a hotel in 杭州", {}, {}, {}};
    hotel.bound_args = {{"app", "携程"},        {"city_slot", "杭州"},        {"hotel_slot", "西湖酒店"},
                        {"check_in_date_slot", "明天"}, {"departure_date_slot", "后天"}, {"number_slot", "1"}};
    SubTask food{"search_location", "Search restaurants near the hotel", {}, {}, {}};
    food.bound_args = {{"app", "大众点评"}, {"search_info_slot", "{step1.hotel_name}"}};
    p.nodes = {hotel, food};
    p.turn_of = {0, 0};
    p.edges = {{0, 1, false, "", ""}};
    return p;
}

std::vector<AtomicPlan> isolated_pool(World& w) {
    std::vector<AtomicPlan> pool;
    std::uint64_t s = 1;
    for (const auto& name : w.catalog.names()) pool.push_back(w.atom(w.isolated(name), s++));
    return pool;
}

json sharegpt(const std::string& call) {
    return {{"conversations",
             {{{"from", "human"}, {"value", "Cancel my trip please."}},
              {{"from", "gpt"}, {"value", "<think>\nI call cancel_reservation.\n</think>\n<tool_call>\n" + call + "\n</tool_call>\n"}},
              {{"from", "human"}, {"value", R"(<observation>{"status": "success"}</observation>)"}},
              {{"from", "gpt"}, {"value", "Done."}}}},
            {"domain", "airline"}};
}

}  // namespace

TEST(Trajectory, TurnFollowsGoldenCall) {
    World w;
    StubSimulator sim;
    const auto plan = hotel_plan();
    const auto state = EpisodeState::start(plan);
    const auto turn = synthesize_turn(state, w.catalog, *w.gen, sim, 1);
    ASSERT_EQ(turn.calls.size(), 1u);
    EXPECT_EQ(turn.calls[0].name, "book_hotel");
    EXPECT_EQ(turn.calls[0].arguments["city_slot"], "杭州");
    EXPECT_FALSE(turn.think.empty());
    const auto& obs = turn.observations.at(0);
    EXPECT_EQ(obs["status"], "success");
    EXPECT_TRUE(obs["tool_result"].contains("booking_id"));
}

TEST(Trajectory, ReasoningNamingAnotherToolFails) {
    World w;
    StubSimulator sim;
    ScriptedGenerator gen;
    gen.push("reasoning", "I should call search_location to find restaurants.");
    const auto plan = hotel_plan();
    const auto* e = caught([&] { synthesize_turn(EpisodeState::start(plan), w.catalog, gen, sim, 1); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::ConsistencyFailure);
}

TEST(Trajectory, TransitionKinds) {
    auto plan = hotel_plan();
    auto s = EpisodeState::start(plan);
    const json ok = {{"status", "success"}, {"tool_result", {{"hotel_name", "西湖酒店"}, {"reservation_status", "预定成功"}}}};
    auto t = transition(s, ok);
    EXPECT_EQ(t.kind, TransitionKind::Standard);
    EXPECT_EQ(t.target, std::optional<std::size_t>(1));

    auto masked_plan = plan;
    masked_plan.nodes[1].masked_params = {"app"};
    auto ms = EpisodeState::start(masked_plan);
    t = transition(ms, ok);
    EXPECT_EQ(t.kind, TransitionKind::UserClarification);
    EXPECT_EQ(t.params, (std::vector<std::string>{"app"}));

    auto branch_plan = plan;
    branch_plan.edges[0] = {0, 1, true, "reservation_status == 预定成功", "reservation_status"};
    auto bs = EpisodeState::start(branch_plan);
    t = transition(bs, ok);
    EXPECT_EQ(t.kind, TransitionKind::ConditionalBranch);
    EXPECT_TRUE(t.satisfied);
    EXPECT_EQ(t.target, std::optional<std::size_t>(1));
    const json failed = {{"status", "success"}, {"tool_result", {{"reservation_status", "预定失败"}}}};
    t = transition(bs, failed);
    EXPECT_FALSE(t.satisfied);
    EXPECT_TRUE(t.pruned.count(1));
    EXPECT_EQ(caught([&] { transition(bs, json{{"status", "success"}}); })->kind(), ErrorKind::UnresolvableCondition);

    s.position = 1;
    EXPECT_EQ(transition(s, ok).kind, TransitionKind::Termination);
}

TEST(Trajectory, GoldenRunResolvesPlaceholders) {
    World w;
    StubSimulator sim;
    const auto plan = hotel_plan();
    const auto traj = run_golden(plan, w.catalog, *w.gen, sim, 4);
    EXPECT_EQ(traj.label, TrajectoryLabel::successful);
    const auto used = traj.used_tools();
    EXPECT_EQ(used, (std::vector<std::string>{"book_hotel", "search_location"}));
    const auto& hotel_obs = traj.turns[0].observations.at(0);
    for (const auto& t : traj.turns)
        for (const auto& c : t.calls)
            if (c.name == "search_location") EXPECT_EQ(c.arguments["search_info_slot"], hotel_obs["tool_result"]["hotel_name"]);
    EXPECT_TRUE(sharegpt_problems(to_sharegpt(traj)).empty());
}

TEST(Trajectory, ConstructTaskRules) {
    World w;
    std::vector<AtomicPlan> small;
    for (const char* t : {"clear_cart", "get_weather", "send_email", "search_flight"}) small.push_back(w.atom(w.isolated(t), 1));
    EXPECT_EQ(caught([&] { construct_task(small, w.catalog, "medium", *w.gen, 1); })->kind(), ErrorKind::PoolTooSmall);

    const auto pool = isolated_pool(w);
    const auto task = construct_task(pool, w.catalog, "easy", *w.gen, 3);
    for (const auto& r : task.requirements)
        for (const auto& s : r.steps)
            EXPECT_NE(std::find(task.candidate_tools.begin(), task.candidate_tools.end(), s.tool), task.candidate_tools.end());
    EXPECT_FALSE(task.init.requirement.empty());
    EXPECT_EQ(caught([&] { construct_task(pool, w.catalog, "legendary", *w.gen, 1); })->kind(), ErrorKind::ConfigError);
}

TEST(Trajectory, TerminationThreshold) {
    LongHorizonTask task;
    for (int i = 0; i < 10; ++i) task.candidate_tools.push_back("t" + std::to_string(i));
    task.requirements.resize(2);
    EXPECT_TRUE(termination_reached(task, 8, 0));
    EXPECT_FALSE(termination_reached(task, 7, 1));
    EXPECT_TRUE(termination_reached(task, 0, 2));
}

TEST(Trajectory, Labels) {
    World w;
    StubSimulator sim;
    const auto pool = isolated_pool(w);
    const auto task = construct_task(pool, w.catalog, "easy", *w.gen, 3);
    const auto good = synthesize_trajectory(task, w.catalog, *w.gen, sim, 3);
    EXPECT_EQ(good.label, TrajectoryLabel::successful);
    EXPECT_TRUE(label_consistent(task, good));
    EXPECT_TRUE(good.turns.back().reply.has_value());
    EXPECT_TRUE(sharegpt_problems(to_sharegpt(good)).empty());

    const auto short_run = synthesize_trajectory(task, w.catalog, *w.gen, sim, 3, EpisodeLimits{1});
    EXPECT_EQ(short_run.label, TrajectoryLabel::unsuccessful);
    EXPECT_TRUE(label_consistent(task, short_run));

    StubSimulator broken;
    broken.set_response(task.requirements.front().steps.front().tool, {{"status", "failure"}, {"message", "error"}});
    const auto failed = synthesize_trajectory(task, w.catalog, *w.gen, broken, 3);
    EXPECT_EQ(failed.label, TrajectoryLabel::unsuccessful);
    EXPECT_TRUE(label_consistent(task, failed));
}

TEST(Trajectory, SeedFilterAndAugmentation) {
    World w;
    StubSimulator sim;
    HashedBowEmbedder emb;
    const auto pool = isolated_pool(w);
    const auto task = construct_task(pool, w.catalog, "easy", *w.gen, 3);
    const auto good = synthesize_trajectory(task, w.catalog, *w.gen, sim, 3);
    const auto bad = synthesize_trajectory(task, w.catalog, *w.gen, sim, 3, EpisodeLimits{1});
    std::map<std::string, std::string> tool_task;
    for (const auto& name : w.catalog.names()) tool_task[name] = "task-" + name;

    auto seeds = filter_seeds({good, bad}, w.catalog, emb, 0, tool_task);
    ASSERT_EQ(seeds.size(), 1u);
    EXPECT_EQ(seeds[0].tools, good.used_tools());

    // rank the unused tools, then put the two nearest in one atomic task
    const auto used = good.used_tools();
    std::vector<std::pair<double, std::string>> scan;
    for (const auto& name : w.catalog.names()) {
        if (std::find(used.begin(), used.end(), name) != used.end()) continue;
        double best = -2;
        for (const auto& u : used)
            best = std::max(best, cosine(emb.embed_one(w.catalog.at(name).description), emb.embed_one(w.catalog.at(u).description)));
        scan.emplace_back(-best, name);
    }
    std::sort(scan.begin(), scan.end());
    ASSERT_GE(scan.size(), 3u);
    tool_task[scan[1].second] = tool_task[scan[0].second];
    seeds = filter_seeds({good}, w.catalog, emb, 2, tool_task);
    ASSERT_EQ(seeds.size(), 1u);
    auto expected = used;
    expected.push_back(scan[0].second);
    expected.push_back(scan[2].second);
    EXPECT_EQ(seeds[0].tools, expected);
}

TEST(Trajectory, ScalingAcceptsAndRejects) {
    World w;
    StubSimulator sim;
    const auto pool = isolated_pool(w);
    const auto task = construct_task(pool, w.catalog, "easy", *w.gen, 3);
    const auto good = synthesize_trajectory(task, w.catalog, *w.gen, sim, 3);
    const SeedSample seed{good, good.used_tools()};
    const auto scaled = scale_from_seed(seed, w.catalog, *w.gen, 8);
    ASSERT_EQ(scaled.turns.size(), good.turns.size());
    for (std::size_t i = 0; i < good.turns.size(); ++i) {
        ASSERT_EQ(scaled.turns[i].calls.size(), good.turns[i].calls.size());
        for (std::size_t k = 0; k < good.turns[i].calls.size(); ++k)
            EXPECT_EQ(scaled.turns[i].calls[k].name, good.turns[i].calls[k].name);
    }

    const SeedSample airline{good, {"cancel_reservation"}};
    ScriptedGenerator gen;
    gen.push("trajectory", dump_compact(sharegpt(R"({"name": "launch_rocket", "arguments": {}})")));
    auto* e = caught([&] { scale_from_seed(airline, w.catalog, gen, 1); });
    ASSERT_NE(e, nullptr);
    EXPECT_EQ(e->kind(), ErrorKind::GenerationRejected);
    EXPECT_NE(std::string(e->detail()).find("unknown tool"), std::string::npos);

    gen.push("trajectory", dump_compact(sharegpt(R"({"name": "cancel_reservation", "arguments": {}})")));
    e = caught([&] { scale_from_seed(airline, w.catalog, gen, 1); });
    ASSERT_NE(e, nullptr);
    EXPECT_NE(std::string(e->detail()).find("argument schema"), std::string::npos);

    gen.push("trajectory", dump_compact(sharegpt(R"({"name": "cancel_reservation", "arguments": {"reservation_id": "QK3M7P"}})")));
    EXPECT_EQ(scale_from_seed(airline, w.catalog, gen, 1).turns.size(), 2u);
}
