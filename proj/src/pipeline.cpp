#include "simpop/pipeline.hpp"

#include "simpop/knn.hpp"
#include "simpop/parallel.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

namespace simpop {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string file_hash(const fs::path& path) {
    if (!fs::exists(path)) throw ValidationError("input file not found: " + path.string());
    return fnv1a_hex(csv::read_file(path));
}

struct Inputs {
    AuxiliaryFrame aux;
    SurveyFrame survey;
};

Inputs load_inputs(const RunConfig& cfg, int k) {
    for (const auto* in : {&cfg.auxiliary, &cfg.survey}) {
        if (!fs::exists(in->path)) throw ValidationError("input file not found: " + in->path.string());
    }
    Inputs in{load_auxiliary_frame(cfg.auxiliary.path, cfg.auxiliary.schema), load_survey_frame(cfg.survey.path, cfg.survey.schema)};
    cfg.check_columns(in.aux, in.survey);
    const auto report = validate_cross_frames(in.aux, in.survey, k);
    if (!report.accepted()) throw SchemaRejected(report);
    return in;
}

double json_number(double v) { return std::isfinite(v) ? v : 0.0; }

ordered_json finite_or_null(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json read_json(const fs::path& path) { return ordered_json::parse(csv::read_file(path)); }

// JSON outputs carry the stage key as their first field.
std::string stamped(const std::string& key, const ordered_json& body) {
    ordered_json j;
    j["config_hash"] = key;
    for (const auto& [name, value] : body.items()) j[name] = value;
    return j.dump(2) + "\n";
}

std::vector<std::string> diagnostic_variables(const RunConfig& cfg, const ArtificialPopulation& pop) {
    return cfg.diagnostic_variables.empty() ? pop.y_names : cfg.diagnostic_variables;
}

}  // namespace

Pipeline::Pipeline(RunConfig config)
  : cfg_(std::move(config)) {}

std::string Pipeline::header(const std::string& key) const { return "config_hash=" + key; }

std::string Pipeline::generate_key() const {
    return fnv1a_hex("generate" + cfg_.section_hash("auxiliary") + cfg_.section_hash("survey") + cfg_.section_hash("matching") +
                     cfg_.section_hash("imputation") + file_hash(cfg_.auxiliary.path) + file_hash(cfg_.survey.path));
}

std::string Pipeline::sample_key() const { return fnv1a_hex("sample" + generate_key() + cfg_.section_hash("design")); }

std::string Pipeline::estimate_key() const { return fnv1a_hex("estimate" + sample_key() + cfg_.section_hash("estimation")); }

std::string Pipeline::evaluate_key() const { return fnv1a_hex("evaluate" + estimate_key()); }

std::string Pipeline::diagnose_key() const {
    return fnv1a_hex("diagnose" + generate_key() + cfg_.section_hash("diagnostics"));
}

template <typename F>
void Pipeline::stage(const std::string& name, const std::string& key, const std::vector<std::string>& outputs, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path key_file = out() / ".cache" / (name + ".hash");
    bool cached = use_cache && fs::exists(key_file) && csv::read_file(key_file) == key + "\n";
    for (const auto& o : outputs) cached = cached && fs::exists(out() / o);

    if (!cached) {
        fs::remove(key_file);
        auto fail = [&](const std::string& what) {
            csv::write_file(out() / "FAILED", name + ": " + what + "\n");
        };
        try {
            body();
        } catch (const ValidationError& e) {
            fail(e.what());
            throw;
        } catch (const std::exception& e) {
            fail(e.what());
            throw StageError(name, e.what());
        }
        csv::write_file(key_file, key + "\n");
    }
    const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
    stages_.push_back({name, key, cached, took.count()});
}

void Pipeline::generate() {
    const auto key = generate_key();
    std::vector<std::string> outputs{"population.csv", "scaling.json", "truth.csv"};
    if (cfg_.retain_neighbor_lists) outputs.push_back("neighbors.csv");
    stage("generate", key, outputs, [&] {
        const auto in = load_inputs(cfg_, cfg_.imputation.k);
        const auto scaling = fit_matching_scaling(in.aux, cfg_.matching);
        auto pop = generate_population(in.aux, in.survey, cfg_.imputation, scaling, cfg_.matching,
                                       {cfg_.workers, cfg_.retain_neighbor_lists});
        pop.provenance.config_hash = key;
        csv::write_file(out() / "scaling.json", stamped(key, ordered_json::parse(scaling.to_json())));
        csv::write_file(out() / "population.csv", emit(pop));
        csv::write_file(out() / "truth.csv", "# " + header(key) + "\n" + emit(domain_truth(pop)));
        if (cfg_.retain_neighbor_lists) csv::write_file(out() / "neighbors.csv", "# " + header(key) + "\n" + emit_pools(pop));
    });
}

void Pipeline::sample() {
    const auto key = sample_key();
    stage("sample", key, {"replicates.csv"}, [&] {
        const auto pop = load_population(out() / "population.csv");
        const ClusterPlan plan(pop, cfg_.design);
        const auto reps = draw_replicates(plan, cfg_.design, cfg_.workers);
        csv::write_file(out() / "replicates.csv", emit_replicates(reps, header(key)));
    });
}

void Pipeline::estimate() {
    const auto key = estimate_key();
    stage("estimate", key, {"estimates.csv"}, [&] {
        const auto pop = load_population(out() / "population.csv");
        const auto reps = parse_replicates(csv::read(out() / "replicates.csv"), pop);
        const auto& est = cfg_.estimation;
        if (!pop.y_index(est.response)) throw ValidationError("response \"" + est.response + "\" is not in the population");

        std::map<EstimatorKind, PopulationMoments> moments;
        for (auto kind : est.estimators) moments.emplace(kind, population_moments(pop, est.variables_for(kind)));
        const int D = static_cast<int>(pop.aux.domain.levels.size());

        std::vector<std::vector<EstimateRecord>> per_rep(reps.size());
        parallel_for(reps.size(), cfg_.workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t r = begin; r < end; ++r) {
                const auto& rep = reps[r];
                const auto direct = ht_estimate(replicate_sample(pop, rep, {}, est.response), rep.rep_index);
                auto& out_records = per_rep[r];
                for (auto kind : est.estimators) {
                    try {
                        std::vector<EstimateRecord> recs;
                        const auto& m = moments.at(kind);
                        const auto& vars = est.variables_for(kind);
                        switch (kind) {
                        case EstimatorKind::ht: recs = direct; break;
                        case EstimatorKind::greg:
                            recs = greg_estimate(replicate_sample(pop, rep, vars, est.response), m, rep.rep_index);
                            break;
                        case EstimatorKind::fh: recs = fh_estimate(direct, m, rep.rep_index).records; break;
                        case EstimatorKind::bhf:
                            recs = bhf_estimate(replicate_sample(pop, rep, vars, est.response), m, rep.rep_index).records;
                            break;
                        }
                        out_records.insert(out_records.end(), recs.begin(), recs.end());
                    } catch (const Error&) {
                        const double nan = std::numeric_limits<double>::quiet_NaN();
                        for (int d = 0; d < D; ++d) {
                            out_records.push_back(make_record(kind, d, rep.rep_index, rep.domain_size[static_cast<std::size_t>(d)],
                                                              nan, nan, flags::fit_failed));
                        }
                    }
                }
            }
        });
        std::vector<EstimateRecord> all;
        for (auto& v : per_rep) all.insert(all.end(), v.begin(), v.end());
        csv::write_file(out() / "estimates.csv", emit_estimates(all, pop.aux.domain.levels, header(key)));
    });
}

void Pipeline::evaluate() {
    const auto key = evaluate_key();
    stage("evaluate", key, {"metrics.csv", "evaluation.json"}, [&] {
        const auto truth_table = csv::read(out() / "truth.csv");
        const auto c_domain = truth_table.require("domain_id");
        const auto c_truth = truth_table.require(cfg_.estimation.response);
        const auto c_zero = truth_table.require("zero_share_" + cfg_.estimation.response);
        std::vector<std::string> domains;
        Eigen::VectorXd truth(static_cast<Eigen::Index>(truth_table.rows.size()));
        Eigen::VectorXd zero(truth.size());
        for (std::size_t r = 0; r < truth_table.rows.size(); ++r) {
            const auto& row = truth_table.rows[r];
            const auto line = static_cast<std::int64_t>(r + 1);
            domains.push_back(row[c_domain]);
            truth(static_cast<Eigen::Index>(r)) =
                csv::parse_double(row[c_truth], line, "truth").value_or(std::numeric_limits<double>::quiet_NaN());
            zero(static_cast<Eigen::Index>(r)) =
                csv::parse_double(row[c_zero], line, "zero_share").value_or(std::numeric_limits<double>::quiet_NaN());
        }
        const auto records = parse_estimates(csv::read(out() / "estimates.csv"), domains);
        const auto rows = summarize_metrics(records, truth, zero);
        csv::write_file(out() / "metrics.csv", emit_metrics(rows, domains, header(key)));

        ordered_json ev;
        ev["response"] = cfg_.estimation.response;
        for (auto kind : cfg_.estimation.estimators) {
            double rb = 0.0, ratio = 0.0, cover = 0.0;
            int n = 0;
            for (const auto& m : rows) {
                if (m.estimator != kind || !std::isfinite(m.relative_bias) || !std::isfinite(m.mse_ratio) ||
                    !std::isfinite(m.coverage_95)) {
                    continue;
                }
                rb += std::abs(m.relative_bias);
                ratio += m.mse_ratio;
                cover += m.coverage_95;
                ++n;
            }
            ordered_json e;
            e["domains"] = n;
            e["mean_abs_relative_bias"] = n ? finite_or_null(rb / n) : ordered_json(nullptr);
            e["mean_mse_ratio"] = n ? finite_or_null(ratio / n) : ordered_json(nullptr);
            e["mean_coverage_95"] = n ? finite_or_null(cover / n) : ordered_json(nullptr);
            e["mse_ratio_zero_slope"] = finite_or_null(mse_ratio_zero_slope(rows, kind));
            ev["estimators"][to_string(kind)] = e;
        }
        csv::write_file(out() / "evaluation.json", stamped(key, ev));
    });
}

void Pipeline::diagnose() {
    const auto key = diagnose_key();
    stage("diagnose", key, {"diagnostics/summary.json"}, [&] {
        const auto survey = load_survey_frame(cfg_.survey.path, cfg_.survey.schema);
        auto pop = load_population(out() / "population.csv");
        if (fs::exists(out() / "neighbors.csv")) attach_pools(pop, csv::read(out() / "neighbors.csv"));
        const fs::path dir = out() / "diagnostics";
        const std::string comment = "# " + header(key) + "\n";

        ordered_json summary;
        for (const auto& v : diagnostic_variables(cfg_, pop)) {
            const auto m = diag_marginals(survey, pop, v);
            csv::write_file(dir / ("marginal_" + v + ".csv"), comment + emit(m));
            const auto sd = diag_domain_sd(survey, pop, v);
            csv::write_file(dir / ("domain_sd_" + v + ".csv"), comment + emit(sd));
            summary["variables"][v] = {{"ks_distance", json_number(ks_distance(m.original, m.imputed))},
                                       {"sd_correlation", finite_or_null(sd.correlation)}};
        }
        const auto usage = diag_donor_usage(pop, survey);
        csv::write_file(dir / "donor_usage.csv", comment + emit(usage));
        const auto cross = diag_donor_crosstab(pop, survey);
        csv::write_file(dir / "donor_crosstab.csv", comment + emit(cross));

        std::int64_t used = 0;
        for (auto c : usage.used_count) used += c > 0;
        summary["donors"] = usage.plot_id.size();
        summary["donors_used"] = used;
        if (usage.pools_available) {
            summary["never_in_pool"] = usage.never_in_pool.size();
            summary["pooled_never_used"] = usage.pooled_never_used.size();
        }
        summary["same_domain_share"] = finite_or_null(cross.same_domain_share);
        csv::write_file(dir / "summary.json", stamped(key, summary));
    });
}

void Pipeline::run() {
    stages_.clear();
    // Validate config against the inputs before any compute.
    load_inputs(cfg_, cfg_.imputation.k);
    fs::remove(out() / "FAILED");
    generate();
    sample();
    estimate();
    evaluate();
    diagnose();

    ordered_json summary;
    summary["config_hash"] = cfg_.hash();
    summary["seeds"] = {{"imputation", cfg_.imputation.master_seed}, {"design", cfg_.design.master_seed}};
    summary["imputation"] = {{"method", to_string(cfg_.imputation.method)}, {"k", cfg_.imputation.k}};
    summary["replicates"] = cfg_.design.replicates;
    for (const auto& s : stages_) summary["stage_keys"][s.name] = s.key;
    summary["evaluation"] = read_json(out() / "evaluation.json");
    summary["diagnostics"] = read_json(out() / "diagnostics" / "summary.json");
    csv::write_file(out() / "summary.json", summary.dump(2) + "\n");

    ordered_json timings = ordered_json::array();
    for (const auto& s : stages_) timings.push_back({{"stage", s.name}, {"cached", s.cached}, {"seconds", s.seconds}});
    csv::write_file(out() / "timings.json", timings.dump(2) + "\n");
}

void Pipeline::sweep() {
    int k_max = 1;
    for (int k : cfg_.sweep_k) k_max = std::max(k_max, k);
    const auto in = load_inputs(cfg_, std::max(k_max, cfg_.imputation.k));
    fs::remove(out() / "FAILED");
    const auto key = fnv1a_hex("sweep" + generate_key() + cfg_.section_hash("sweep") + cfg_.section_hash("diagnostics"));
    stage("sweep", key, {"sweep.csv"}, [&] {
        csv::write_file(out() / "sweep.csv", emit_sweep(run_sweep(in.aux, in.survey, cfg_), header(key)));
    });
}

std::vector<SweepRow> run_sweep(const AuxiliaryFrame& aux, const SurveyFrame& survey, const RunConfig& cfg) {
    std::vector<std::pair<ImputationMethod, int>> runs{{ImputationMethod::single_nn, 1}};
    if (cfg.imputation.method != ImputationMethod::single_nn) runs.emplace_back(cfg.imputation.method, cfg.imputation.k);
    for (int k : cfg.sweep_k) runs.emplace_back(ImputationMethod::uniform_knn, k);

    const auto scaling = fit_matching_scaling(aux, cfg.matching);
    std::vector<SweepRow> rows;
    for (const auto& [method, k] : runs) {
        ImputationConfig ic{method, k, cfg.imputation.master_seed};
        ic.check();
        const auto pop = generate_population(aux, survey, ic, scaling, cfg.matching, {cfg.workers, false});
        const auto vars = cfg.diagnostic_variables.empty() ? pop.y_names : cfg.diagnostic_variables;
        for (const auto& v : vars) rows.push_back({method, k, v, diag_domain_sd(survey, pop, v).correlation});
    }
    return rows;
}

std::string emit_sweep(const std::vector<SweepRow>& rows, const std::string& comment) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "method,k,variable,sd_correlation\n";
    for (const auto& r : rows) {
        out += to_string(r.method) + "," + std::to_string(r.k) + "," + r.variable + "," + csv::format(r.sd_correlation) + "\n";
    }
    return out;
}

std::string emit_pools(const ArtificialPopulation& pop) {
    std::string out = "unit_id,rank,donor_id\n";
    const auto k = static_cast<std::size_t>(pop.pool_width);
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            const auto d = pop.pools[i * k + j];
            if (d < 0) continue;
            out += csv::format(pop.aux.unit_id[i]) + "," + std::to_string(j + 1) + "," + csv::format(d) + "\n";
        }
    }
    return out;
}

void attach_pools(ArtificialPopulation& pop, const csv::Table& table) {
    const auto c_unit = table.require("unit_id");
    const auto c_rank = table.require("rank");
    const auto c_donor = table.require("donor_id");
    std::unordered_map<UnitId, std::size_t> row_of;
    for (std::size_t i = 0; i < pop.rows(); ++i) row_of.emplace(pop.aux.unit_id[i], i);
    int width = 0;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        width = std::max<int>(width, static_cast<int>(csv::parse_int(table.rows[r][c_rank], static_cast<std::int64_t>(r + 1), "rank")));
    }
    pop.pool_width = width;
    pop.pools.assign(pop.rows() * static_cast<std::size_t>(width), -1);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto line = static_cast<std::int64_t>(r + 1);
        const auto unit = csv::parse_int(table.rows[r][c_unit], line, "unit_id");
        const auto it = row_of.find(unit);
        if (it == row_of.end()) throw ParseFailure(line, "unit_id");
        const auto rank = csv::parse_int(table.rows[r][c_rank], line, "rank");
        if (rank < 1) throw ParseFailure(line, "rank");
        pop.pools[it->second * static_cast<std::size_t>(width) + static_cast<std::size_t>(rank - 1)] =
            csv::parse_int(table.rows[r][c_donor], line, "donor_id");
    }
}

KnnBenchmark bench_knn(int donors, int dims, int queries, int k, std::uint64_t seed) {
    Stream rng(seed, StreamTag::test, 0xbe7c);
    RowMatrixXd points(donors, dims);
    for (Eigen::Index i = 0; i < points.size(); ++i) points.data()[i] = rng.normal();
    RowMatrixXd probes(queries, dims);
    for (Eigen::Index i = 0; i < probes.size(); ++i) probes.data()[i] = rng.normal();
    std::vector<UnitId> ids(static_cast<std::size_t>(donors));
    for (int i = 0; i < donors; ++i) ids[static_cast<std::size_t>(i)] = i + 1;

    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    DonorIndex<double> index("bench", points, ids, k);
    const auto t1 = clock::now();
    std::vector<Neighbor<double>> out;
    std::int64_t checksum = 0;
    for (int q = 0; q < queries; ++q) {
        index.query(std::span<const double>(probes.row(q).data(), static_cast<std::size_t>(dims)), k, out);
        checksum += out.front().donor_id;
    }
    const auto t2 = clock::now();
    if (checksum < 0) throw Error("unreachable");
    const double build = std::chrono::duration<double>(t1 - t0).count();
    const double query = std::chrono::duration<double>(t2 - t1).count();
    return {donors, dims, queries, k, build, query, query > 0 ? queries / query : 0.0};
}

}  // namespace simpop
