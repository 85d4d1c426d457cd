#include "simpop/fixture.hpp"
#include "simpop/pipeline.hpp"
#include "support/tempdir.hpp"

#include <doctest.h>

#include <map>

using namespace simpop;
namespace fs = std::filesystem;

namespace {

FixtureSpec small_spec() {
    FixtureSpec spec;
    spec.units = 3000;
    spec.clusters = 120;
    spec.domains = 6;
    return spec;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "timings.json") continue;
        files[fs::relative(e.path(), dir).string()] = csv::read_file(e.path());
    }
    return files;
}

nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(csv::read_file(p)); }

void save_json(const fs::path& p, const nlohmann::json& j) { csv::write_file(p, j.dump(2) + "\n"); }

}  // namespace

TEST_CASE("pipeline runs end to end, caches stages and reproduces bytes") {
    TempDir dir("pipeline");
    const auto spec = small_spec();
    write_fixture(make_fixture(spec), spec, dir.path, 20);
    auto cfg = RunConfig::load(dir.path / "config.json");
    cfg.set_retain_neighbor_lists(true);

    Pipeline first(cfg);
    first.run();
    for (const char* f : {"population.csv", "neighbors.csv", "scaling.json", "truth.csv", "replicates.csv", "estimates.csv",
                          "metrics.csv", "evaluation.json", "summary.json", "timings.json", "diagnostics/summary.json"}) {
        CHECK_MESSAGE(fs::exists(cfg.output / f), f);
    }
    CHECK_FALSE(fs::exists(cfg.output / "FAILED"));
    for (const auto& s : first.stages()) CHECK_FALSE(s.cached);
    CHECK(csv::read_file(cfg.output / "estimates.csv").rfind("# config_hash=", 0) == 0);
    CHECK(load_json(cfg.output / "scaling.json").begin().key() == "config_hash");
    const auto before = snapshot(cfg.output);

    Pipeline again(cfg);
    again.run();
    for (const auto& s : again.stages()) CHECK(s.cached);
    CHECK(snapshot(cfg.output) == before);

    Pipeline fresh(cfg);
    fresh.use_cache = false;
    fresh.run();
    for (const auto& s : fresh.stages()) CHECK_FALSE(s.cached);
    CHECK(snapshot(cfg.output) == before);

    // Only stages downstream of the design section rerun.
    auto reseeded = cfg;
    reseeded.design.replicates = 10;
    reseeded.source["design"]["replicates"] = 10;
    Pipeline partial(reseeded);
    partial.run();
    std::map<std::string, bool> cached;
    for (const auto& s : partial.stages()) cached[s.name] = s.cached;
    CHECK(cached["generate"]);
    CHECK(cached["diagnose"]);
    CHECK_FALSE(cached["sample"]);
    CHECK_FALSE(cached["estimate"]);

    // emit and load are inverse on canonical files.
    const auto pop_text = csv::read_file(cfg.output / "population.csv");
    CHECK(emit(parse_population(csv::parse(pop_text))) == pop_text);
}

TEST_CASE("an absent column fails validation before any compute") {
    TempDir dir("absent");
    const auto spec = small_spec();
    write_fixture(make_fixture(spec), spec, dir.path, 5);
    auto j = load_json(dir.path / "config.json");
    j["matching"]["variables"].push_back("slope");
    save_json(dir.path / "config.json", j);
    Pipeline p(RunConfig::load(dir.path / "config.json"));
    CHECK_THROWS_AS(p.run(), ValidationError);
    CHECK_FALSE(fs::exists(p.out() / "population.csv"));
}

TEST_CASE("a failing stage leaves a FAILED marker") {
    TempDir dir("failed");
    const auto spec = small_spec();
    write_fixture(make_fixture(spec), spec, dir.path, 5);
    auto j = load_json(dir.path / "config.json");
    j["matching"]["transforms"][0]["offset"] = -1000.0;
    save_json(dir.path / "config.json", j);
    Pipeline p(RunConfig::load(dir.path / "config.json"));
    CHECK_THROWS_AS(p.run(), StageError);
    REQUIRE(fs::exists(p.out() / "FAILED"));
    CHECK(csv::read_file(p.out() / "FAILED").rfind("generate:", 0) == 0);
    CHECK_FALSE(fs::exists(p.out() / "population.csv"));
}

TEST_CASE("sweep with uniform k=1 reproduces single nearest neighbour") {
    TempDir dir("sweep");
    const auto spec = small_spec();
    const auto fx = make_fixture(spec);
    write_fixture(fx, spec, dir.path, 5);
    auto cfg = RunConfig::load(dir.path / "config.json");
    cfg.sweep_k = {1, 5};
    const auto rows = run_sweep(fx.aux, fx.survey, cfg);
    std::map<std::pair<std::string, int>, std::map<std::string, double>> by;
    for (const auto& r : rows) by[{to_string(r.method), r.k}][r.variable] = r.sd_correlation;
    const auto& single = by.at({"single_nn", 1});
    const auto& uniform1 = by.at({"uniform_knn", 1});
    REQUIRE(single.size() == 2);
    for (const auto& [v, c] : single) CHECK(uniform1.at(v) == c);
    CHECK(by.count({"uniform_knn", 5}) == 1);
    CHECK(by.count({"kbaabb", 10}) == 1);
    CHECK(emit_sweep(rows).rfind("method,k,variable,sd_correlation", 0) == 0);
}
