#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "agentsynth/pipeline.hpp"

namespace ap = agentsynth::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"Synthesize, filter, select and score agent training data."};
    app.require_subcommand(1);
    ap::Options opts;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::optional<std::size_t> count;
    std::optional<std::size_t> budget;

    for (const auto& [name, _] : ap::commands()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", opts.config_path, "JSON config file");
        sub->add_option("--seed", seed, "root seed, overrides the config");
        sub->add_option("--jobs", jobs, "worker threads");
        sub->add_option("--out", opts.out, "output JSON Lines file (stdout when omitted)");
        sub->add_option("--cache-dir", opts.cache_dir, "replay cache directory for remote backends");
        if (name.rfind("synth-", 0) == 0) sub->add_option("--count", count, "number of samples");
        if (name == "synth-schedules") sub->add_option("--domain", opts.domain, "trip, meeting, calendar or mixed");
        if (name == "synth-longhorizon") sub->add_option("--difficulty", opts.difficulty, "easy, medium or hard");
        if (name == "dedup" || name == "select" || name == "score" || name == "eval-f1")
            sub->add_option("--in", opts.in, "input JSON Lines file (select also takes a .bin matrix)")->required();
        if (name == "score") sub->add_option("--task", opts.task, "task kind");
        if (name == "select") sub->add_option("--budget", budget, "number of samples to keep");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    opts.seed = seed;
    opts.jobs = jobs;
    opts.count = count;
    opts.budget = budget;
    return ap::run(app.get_subcommands().front()->get_name(), opts, std::cerr);
}
