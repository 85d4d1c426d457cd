#pragma once

#include "simpop/datamodel.hpp"
#include "simpop/estimators.hpp"
#include "simpop/imputer.hpp"

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

namespace simpop {

// Replicate-level metrics for one (estimator, domain) cell.
double relative_bias(std::span<const double> estimates, double truth, const std::string& domain = {});
double empirical_mse(std::span<const double> estimates, double truth);
double mse_ratio(std::span<const double> estimates, std::span<const double> mse_hats, double truth);
double ci_coverage(std::span<const double> lows, std::span<const double> highs, double truth);

struct MetricRow {
    EstimatorKind estimator = EstimatorKind::ht;
    int domain = 0;
    int K = 0;
    int excluded = 0;
    double truth = 0.0;
    double mean_estimate = 0.0;
    double bias_se = 0.0;  // standard error of mean_estimate over replicates
    double relative_bias = 0.0;
    double empirical_mse = 0.0;
    double mean_mse_hat = 0.0;
    double mse_ratio = 0.0;
    double coverage_95 = 0.0;
    double zero_proportion = 0.0;
};

// Aggregates records across replicates. A record counts toward K when it
// has both an estimate and an MSE estimate; the rest are reported as
// exclusions. Metrics that are undefined for a cell are NaN.
std::vector<MetricRow> summarize_metrics(const std::vector<EstimateRecord>& records, const Eigen::VectorXd& truth,
                                         const Eigen::VectorXd& zero_share);

// Least-squares slope of mse_ratio on zero_proportion over the domains of
// one estimator; NaN when fewer than two usable domains.
double mse_ratio_zero_slope(const std::vector<MetricRow>& rows, EstimatorKind estimator);

std::string emit_metrics(const std::vector<MetricRow>& rows, const std::vector<std::string>& domains,
                         const std::string& comment = {});

// Sorted distinct values with cumulative proportions.
struct Ecdf {
    std::vector<double> value;
    std::vector<double> cumulative;

    static Ecdf from_values(std::vector<double> values);
    double at(double x) const;
};

// Supremum distance between two step eCDFs.
double ks_distance(const Ecdf& a, const Ecdf& b);

struct MarginalPair {
    std::string variable;
    Ecdf original;
    Ecdf imputed;
};

MarginalPair diag_marginals(const SurveyFrame& survey, const ArtificialPopulation& pop, const std::string& variable);

struct DomainSdTable {
    std::string variable;
    std::vector<std::string> domains;
    std::vector<std::int64_t> n_original;
    std::vector<double> sd_original;
    std::vector<double> sd_imputed;
    double correlation = 0.0;  // NaN when fewer than two usable domains
};

DomainSdTable diag_domain_sd(const SurveyFrame& survey, const ArtificialPopulation& pop, const std::string& variable);

struct DonorUsage {
    std::vector<UnitId> plot_id;
    std::vector<std::string> stratum;
    std::vector<std::int64_t> pool_count;  // -1 when pools were not retained
    std::vector<std::int64_t> used_count;
    std::vector<UnitId> never_in_pool;
    std::vector<UnitId> pooled_never_used;
    bool pools_available = false;
};

DonorUsage diag_donor_usage(const ArtificialPopulation& pop, const SurveyFrame& survey);

struct DonorCrosstab {
    std::vector<std::string> donor_domains;
    std::vector<std::string> recipient_domains;
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;  // donor x recipient
    std::int64_t total = 0;
    double same_domain_share = 0.0;
};

DonorCrosstab diag_donor_crosstab(const ArtificialPopulation& pop, const SurveyFrame& survey);

std::string emit(const MarginalPair& m);
std::string emit(const DomainSdTable& t);
std::string emit(const DonorUsage& u);
std::string emit(const DonorCrosstab& c);

}  // namespace simpop
