// Walks one sample through each stage with the offline backends.
#include <iostream>

#include "agentsynth/agentsynth.hpp"

using namespace agentsynth;

namespace {

void section(const std::string& title) { std::cout << "\n== " << title << " ==\n"; }

}  // namespace

int main() {
    const Catalog catalog = builtin::demo_catalog();
    const ToolGraphs graphs = build_graphs(catalog, builtin::demo_overrides());
    auto gen = make_template_generator();
    PlanComposer composer{catalog, graphs};
    HashedBowEmbedder emb;
    RewardConfig rc;

    section("composed plan");
    const auto* edge = graphs.depend.edge("search_flight", "book_flight");
    const ToolSelection serial{AtomicKind::serial, {"search_flight", "book_flight"}, Relation::causal, edge->bindings};
    const ToolSelection single{AtomicKind::isolated, {"cancel_reservation"}, Relation::none, {}};
    const auto chain = composer.compose(Operator::Concatenate, composer.lift(synthesize_atomic(serial, catalog, *gen, 1)),
                                        composer.lift(synthesize_atomic(single, catalog, *gen, 2)), 5);
    const auto masked = composer.compose(Operator::Mask, chain, 3);
    const std::string sample = render_sample(masked);
    std::cout << sample << "\n";
    const std::string completion = sample.substr(sample.find("<Plan>"));
    const auto gold = gold_from_text(TaskKind::decomposition, completion);
    std::cout << "reward against itself: " << reward_total(TaskKind::decomposition, completion, gold, rc, emb).total << "\n";

    section("trip schedule");
    TripProblem trip;
    trip.total_days = 7;
    trip.stays = {{"Athens", 3}, {"Lisbon", 3}, {"Vienna", 3}};
    trip.flights = {{"Athens", "Lisbon"}, {"Lisbon", "Vienna"}};
    const auto solutions = solve(trip);
    std::cout << solutions.size() << " feasible itineraries\n";
    const auto rendered = render_nl(ScheduleProblem{trip}, solutions.front());
    std::cout << rendered.prompt << "\n\n" << rendered.answer << "\n";
    std::cout << "reward: " << reward_schedule(rendered.answer, trip) << "\n";

    section("workflow");
    const GoldWorkflow task = builtin::workflow_tasks().front();
    const auto dag = build_workflow(task, builtin::workflow_distractor_pool(), 2, 7);
    std::cout << task.task << "\n" << serialize_workflow(dag) << "\n";
    json diag;
    std::cout << "reward against itself: " << reward_workflow(dag, dag, emb, rc.match_threshold, &diag) << " " << diag.dump()
              << "\n";

    section("selection");
    const std::vector<std::string> pool{"book a hotel in Hangzhou", "book a hotel room in Hangzhou", "cancel my flight",
                                        "search restaurants near the lake", "clear the shopping cart"};
    std::vector<std::vector<double>> rows;
    for (auto& v : emb.embed(pool)) rows.push_back(std::move(v.values));
    for (std::size_t i : novelsum_select(rows, {1.0, 1.0, 2, 3, 1})) std::cout << "picked: " << pool[i] << "\n";

    section("objectives");
    const auto adv = group_advantage({1.0, 0.0, 0.5, 0.5});
    std::cout << "advantages:";
    for (double a : adv) std::cout << " " << a;
    std::cout << "\ngrpo: " << grpo_objective({{1.1, 0.9}, {1.3}, {1.0}, {1.0}}, adv, 0.2, 0.04, 0.01) << "\n";
    std::cout << "max_vio: " << max_vio({4, 0, 2, 2}) << "\n";
    return 0;
}
