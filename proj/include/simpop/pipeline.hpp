#pragma once

#include "simpop/config.hpp"
#include "simpop/evaluation.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace simpop {

// A stage failed after validation passed; CLI exit code 3.
class StageError : public Error {
  public:
    StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what)
      , stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

// Runs the stages of one config against its output directory. Every stage
// reads only its inputs and the files of earlier stages, and is skipped when
// its key (hash of the config sections and upstream keys it depends on)
// matches the one recorded by the previous run.
class Pipeline {
  public:
    explicit Pipeline(RunConfig config);

    const RunConfig& config() const { return cfg_; }
    const std::filesystem::path& out() const { return cfg_.output; }

    void generate();
    void sample();
    void estimate();
    void evaluate();
    void diagnose();
    // All five stages, then summary.json and timings.json.
    void run();
    // uniform-kNN over the sweep k list plus single-NN and the configured
    // method; writes sweep.csv.
    void sweep();

    struct StageRecord {
        std::string name;
        std::string key;
        bool cached = false;
        double seconds = 0.0;
    };
    const std::vector<StageRecord>& stages() const { return stages_; }

    bool use_cache = true;

  private:
    template <typename F>
    void stage(const std::string& name, const std::string& key, const std::vector<std::string>& outputs, F&& body);
    std::string generate_key() const;
    std::string sample_key() const;
    std::string estimate_key() const;
    std::string evaluate_key() const;
    std::string diagnose_key() const;
    std::string header(const std::string& key) const;

    RunConfig cfg_;
    std::vector<StageRecord> stages_;
};

struct SweepRow {
    ImputationMethod method;
    int k;
    std::string variable;
    double sd_correlation;
};

std::vector<SweepRow> run_sweep(const AuxiliaryFrame& aux, const SurveyFrame& survey, const RunConfig& cfg);
std::string emit_sweep(const std::vector<SweepRow>& rows, const std::string& comment = {});

// Ranked donor pools as `unit_id,rank,donor_id`.
std::string emit_pools(const ArtificialPopulation& pop);
void attach_pools(ArtificialPopulation& pop, const csv::Table& table);

struct KnnBenchmark {
    int donors;
    int dims;
    int queries;
    int k;
    double build_seconds;
    double query_seconds;
    double queries_per_second;
};

KnnBenchmark bench_knn(int donors, int dims, int queries, int k, std::uint64_t seed);

}  // namespace simpop
