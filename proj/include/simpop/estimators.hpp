#pragma once

#include "simpop/datamodel.hpp"
#include "simpop/sampler.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace simpop {

enum class EstimatorKind { ht, greg, fh, bhf };

std::string to_string(EstimatorKind kind);
EstimatorKind parse_estimator(const std::string& name);

namespace flags {
inline constexpr unsigned domain_too_small = 1u << 0;
inline constexpr unsigned out_of_sample = 1u << 1;
inline constexpr unsigned non_convergence = 1u << 2;
inline constexpr unsigned no_sample = 1u << 3;
inline constexpr unsigned fit_failed = 1u << 4;
}  // namespace flags

std::string format_flags(unsigned f);
unsigned parse_flags(const std::string& text);

inline constexpr double kNormalQuantile975 = 1.96;

struct EstimateRecord {
    EstimatorKind estimator = EstimatorKind::ht;
    int domain = 0;  // population domain code
    int rep_index = 0;
    std::int64_t n_d = 0;
    double estimate = 0.0;
    double mse_hat = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    unsigned flags = 0;

    bool has_estimate() const;
    bool has_mse() const;
};

// Builds a record with CI = estimate +/- 1.96 sqrt(mse_hat); a NaN mse
// leaves the interval missing.
EstimateRecord make_record(EstimatorKind kind, int domain, int rep_index, std::int64_t n_d, double estimate,
                           double mse_hat, unsigned f = 0);

// Domain population size and mean auxiliary vector (without intercept).
struct PopulationMoments {
    std::vector<std::string> domains;
    std::vector<std::string> variables;
    Eigen::VectorXd count;
    Eigen::MatrixXd xbar;

    int domain_count() const { return static_cast<int>(domains.size()); }
};

PopulationMoments population_moments(const ArtificialPopulation& pop, const std::vector<std::string>& variables);

// The units of one replicate: domain codes, auxiliary values (no intercept
// column) and the response.
struct DomainSample {
    int domains = 0;
    Eigen::VectorXi domain;
    Eigen::MatrixXd x;
    Eigen::VectorXd y;

    Eigen::Index size() const { return y.size(); }
};

DomainSample replicate_sample(const ArtificialPopulation& pop, const SampleReplicate& rep,
                              const std::vector<std::string>& variables, const std::string& response);

struct MixedModelFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd beta_cov;      // (X' V^-1 X)^-1
    double sigma2_v = 0.0;
    double sigma2_e = 0.0;         // nested-error model only
    Eigen::MatrixXd variance_cov;  // asymptotic covariance of the variance estimates
    int iterations = 0;
    bool converged = false;
    bool fallback = false;         // moment estimator used after REML failed
};

struct RemlOptions {
    double tolerance = 1e-8;
    int max_iterations = 200;
};

// Area-level model direct = X beta + v + e with known sampling variances
// psi; X includes the intercept column. REML by Fisher scoring, truncated
// at zero, with the Prasad-Rao moment estimator as fallback.
MixedModelFit fit_fay_herriot(const Eigen::VectorXd& direct, const Eigen::VectorXd& psi, const Eigen::MatrixXd& X,
                              const RemlOptions& options = {});

// Per-domain sufficient statistics of a nested-error sample. X includes the
// intercept column.
struct NestedErrorStats {
    int p = 0;
    std::vector<double> n;
    std::vector<Eigen::MatrixXd> xtx;
    std::vector<Eigen::VectorXd> xsum;
    std::vector<Eigen::VectorXd> xty;
    std::vector<double> ysum;
    std::vector<double> yty;

    static NestedErrorStats from_sample(const DomainSample& sample);
    double total() const;
};

// Unit-level model y = X beta + v_d + e. REML for (sigma2_v, sigma2_e) by
// Fisher scoring on per-domain sufficient statistics; Henderson method III
// provides starting values and the fallback.
MixedModelFit fit_nested_error(const NestedErrorStats& stats, const RemlOptions& options = {});

std::vector<EstimateRecord> ht_estimate(const DomainSample& sample, int rep_index = 0);
std::vector<EstimateRecord> greg_estimate(const DomainSample& sample, const PopulationMoments& moments, int rep_index = 0);

struct ModelEstimates {
    std::vector<EstimateRecord> records;
    MixedModelFit fit;
    std::vector<double> gamma;  // NaN for out-of-sample domains
};

// Fay-Herriot EBLUP from direct estimates; domains whose direct record has
// no positive sampling variance get the synthetic prediction.
ModelEstimates fh_estimate(const std::vector<EstimateRecord>& direct, const PopulationMoments& moments, int rep_index = 0,
                           const RemlOptions& options = {});

ModelEstimates bhf_estimate(const DomainSample& sample, const PopulationMoments& moments, int rep_index = 0,
                            const RemlOptions& options = {});

std::string estimates_header();
std::string emit_record(const EstimateRecord& r, const std::vector<std::string>& domains);
std::string emit_estimates(const std::vector<EstimateRecord>& records, const std::vector<std::string>& domains,
                           const std::string& comment = {});
std::vector<EstimateRecord> parse_estimates(const csv::Table& table, const std::vector<std::string>& domains);

}  // namespace simpop
