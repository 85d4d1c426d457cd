#pragma once

#include "simpop/datamodel.hpp"
#include "simpop/knn.hpp"
#include "simpop/preprocess.hpp"
#include "simpop/rng.hpp"

#include <span>
#include <vector>

namespace simpop {

// Probabilities over neighbour ranks 1..k.
struct SelectionWeights {
    int k = 0;
    std::vector<double> w;
};

// Bootstrap-derived geometric weights: rank j is chosen with probability
// (1 - 1/e) * e^-(j-1) for j < k, and rank k takes the remainder so the
// weights sum to one.
SelectionWeights selection_weights(int k);
SelectionWeights uniform_weights(int k);
SelectionWeights weights_for(ImputationMethod method, int k);

struct ImputationConfig {
    ImputationMethod method = ImputationMethod::kbaabb;
    int k = 10;
    std::uint64_t master_seed = 0;

    // Throws ValidationError when single_nn is paired with k != 1 or k < 1.
    void check() const;
};

struct MatchingSpec {
    std::vector<std::string> variables;
    std::vector<TransformSpec> transforms;
};

// Transforms the matching variables of both frames and fits per-stratum
// scaling constants on the in-scope population.
ScalingConstants fit_matching_scaling(const AuxiliaryFrame& aux, const MatchingSpec& matching);

struct DonorChoice {
    UnitId donor_id;
    int rank;  // 1-based
};

DonorChoice select_donor(std::span<const Neighbor<double>> neighbors, const SelectionWeights& weights, Stream& rng);

struct GenerateOptions {
    int workers = 1;
    bool retain_pools = false;
};

// Imputes every in-scope unit of `aux` with the full response vector of one
// donor drawn from its k nearest same-stratum survey units.
ArtificialPopulation generate_population(const AuxiliaryFrame& aux, const SurveyFrame& survey, const ImputationConfig& cfg,
                                         const ScalingConstants& scaling, const MatchingSpec& matching,
                                         const GenerateOptions& options = {});

struct DomainTruth {
    std::vector<std::string> domains;
    std::vector<std::string> y_names;
    std::vector<std::int64_t> count;
    Eigen::MatrixXd mean;       // domains x responses
    Eigen::MatrixXd zero_share; // share of units with response exactly 0

    std::optional<std::size_t> y_index(const std::string& name) const;
};

// Per-domain means of each imputed response over in-scope units.
DomainTruth domain_truth(const ArtificialPopulation& pop);

std::string emit(const DomainTruth& truth);

}  // namespace simpop
