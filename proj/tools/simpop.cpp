#include "simpop/fixture.hpp"
#include "simpop/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct RunFlags {
    std::string config;
    std::string out;
    int workers = 0;
    std::optional<std::uint64_t> seed;
    bool retain = false;
    bool no_cache = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config, "run config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", f.out, "output directory (overrides config)");
    cmd->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
    cmd->add_option("--seed-override", f.seed, "replace both master seeds");
    cmd->add_flag("--retain-neighbor-lists", f.retain, "write ranked donor pools");
    cmd->add_flag("--no-cache", f.no_cache, "rerun stages even when their key is unchanged");
}

simpop::Pipeline make_pipeline(const RunFlags& f) {
    auto cfg = simpop::RunConfig::load(f.config);
    if (!f.out.empty()) cfg.output = f.out;
    if (f.workers > 0) cfg.workers = f.workers;
    if (f.seed) cfg.set_seed(*f.seed);
    if (f.retain) cfg.set_retain_neighbor_lists(true);
    simpop::Pipeline p(std::move(cfg));
    p.use_cache = !f.no_cache;
    return p;
}

void report(const simpop::Pipeline& p) {
    for (const auto& s : p.stages()) {
        std::cerr << s.name << (s.cached ? " (cached)" : "") << " " << s.seconds << "s\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Artificial population synthesis and design-based simulation"};
    app.require_subcommand(1);

    RunFlags flags;
    std::map<std::string, CLI::App*> stages;
    for (const char* name : {"generate", "sample", "estimate", "evaluate", "diagnose", "pipeline", "sweep"}) {
        stages[name] = app.add_subcommand(name);
        add_run_flags(stages[name], flags);
    }
    stages["generate"]->description("impute the artificial population");
    stages["sample"]->description("draw one-unit-per-cluster replicate samples");
    stages["estimate"]->description("HT, GREG, FH and BHF estimates per replicate");
    stages["evaluate"]->description("relative bias, MSE ratio and coverage per domain");
    stages["diagnose"]->description("marginal, domain SD and donor diagnostics");
    stages["pipeline"]->description("all stages, then summary.json");
    stages["sweep"]->description("domain SD correlation across methods and k");

    auto* fixture = app.add_subcommand("fixture", "write a synthetic auxiliary/survey pair and config");
    std::string fixture_out, fixture_spec;
    int replicates = 2500;
    std::optional<std::uint64_t> fixture_seed;
    std::optional<std::int64_t> units, clusters;
    std::optional<int> domains, strata;
    std::optional<double> zero_max;
    fixture->add_option("--out", fixture_out, "output directory")->required();
    fixture->add_option("--spec", fixture_spec, "fixture spec (JSON)")->check(CLI::ExistingFile);
    fixture->add_option("--seed-override", fixture_seed, "fixture seed");
    fixture->add_option("--replicates", replicates, "replicates in the written config")->check(CLI::PositiveNumber);
    fixture->add_option("--units", units, "population size");
    fixture->add_option("--clusters", clusters, "cluster count");
    fixture->add_option("--domains", domains, "domain count");
    fixture->add_option("--strata", strata, "strata count");
    fixture->add_option("--zero-max", zero_max, "largest domain zero share");

    auto* bench = app.add_subcommand("bench-knn", "time exact kNN queries on random data");
    int donors = 4000, dims = 8, queries = 200000, k = 10;
    std::uint64_t bench_seed = 1;
    bench->add_option("--donors", donors)->check(CLI::PositiveNumber);
    bench->add_option("--dims", dims)->check(CLI::PositiveNumber);
    bench->add_option("--queries", queries)->check(CLI::PositiveNumber);
    bench->add_option("--k", k)->check(CLI::PositiveNumber);
    bench->add_option("--seed-override", bench_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (fixture->parsed()) {
            simpop::FixtureSpec spec;
            if (!fixture_spec.empty()) spec = simpop::FixtureSpec::from_json(nlohmann::json::parse(simpop::csv::read_file(fixture_spec)));
            if (units) spec.units = *units;
            if (clusters) spec.clusters = *clusters;
            if (domains) spec.domains = *domains;
            if (strata) spec.strata = *strata;
            if (zero_max) spec.zero_max = *zero_max;
            if (fixture_seed) spec.seed = *fixture_seed;
            const auto f = simpop::make_fixture(spec);
            simpop::write_fixture(f, spec, fixture_out, replicates);
            std::cout << "wrote fixture to " << fixture_out << "\n";
            return 0;
        }
        if (bench->parsed()) {
            const auto b = simpop::bench_knn(donors, dims, queries, k, bench_seed);
            std::cout << "donors=" << b.donors << " dims=" << b.dims << " k=" << b.k << " queries=" << b.queries
                      << " build_s=" << b.build_seconds << " query_s=" << b.query_seconds
                      << " queries_per_s=" << b.queries_per_second << "\n";
            return 0;
        }

        auto p = make_pipeline(flags);
        if (stages["generate"]->parsed()) p.generate();
        if (stages["sample"]->parsed()) p.sample();
        if (stages["estimate"]->parsed()) p.estimate();
        if (stages["evaluate"]->parsed()) p.evaluate();
        if (stages["diagnose"]->parsed()) p.diagnose();
        if (stages["pipeline"]->parsed()) p.run();
        if (stages["sweep"]->parsed()) p.sweep();
        report(p);
        std::cout << "outputs in " << p.out().string() << "\n";
        return 0;
    } catch (const simpop::ValidationError& e) {
        std::cerr << "validation failed: " << e.what() << "\n";
        return 2;
    } catch (const simpop::StageError& e) {
        std::cerr << "stage failed: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failed: " << e.what() << "\n";
        return 3;
    }
}
