#include "simpop/imputer.hpp"

#include "simpop/parallel.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

namespace simpop {

namespace {

// Stores the remainder on the last rank so that summing w left to right
// gives exactly 1.
SelectionWeights close_with_remainder(std::vector<double> head) {
    SelectionWeights sw;
    double sum = 0.0;
    for (double v : head) sum += v;
    head.push_back(1.0 - sum);
    sw.k = static_cast<int>(head.size());
    sw.w = std::move(head);
    return sw;
}

Features prepared(const Features& raw, const MatchingSpec& matching, const ScalingConstants& scaling) {
    return apply_scaling(apply_transforms(raw, matching.transforms), scaling);
}

}  // namespace

SelectionWeights selection_weights(int k) {
    if (k < 1) throw ValidationError("k must be at least 1");
    const double p_boot = -std::expm1(-1.0);
    std::vector<double> head;
    for (int j = 1; j < k; ++j) head.push_back(p_boot * std::exp(-static_cast<double>(j - 1)));
    return close_with_remainder(std::move(head));
}

SelectionWeights uniform_weights(int k) {
    if (k < 1) throw ValidationError("k must be at least 1");
    return close_with_remainder(std::vector<double>(static_cast<std::size_t>(k - 1), 1.0 / k));
}

SelectionWeights weights_for(ImputationMethod method, int k) {
    switch (method) {
        case ImputationMethod::kbaabb: return selection_weights(k);
        case ImputationMethod::uniform_knn: return uniform_weights(k);
        case ImputationMethod::single_nn: return uniform_weights(1);
    }
    return selection_weights(k);
}

void ImputationConfig::check() const {
    if (k < 1) throw ValidationError("imputation k must be at least 1");
    if (method == ImputationMethod::single_nn && k != 1) throw ValidationError("single_nn requires k = 1");
}

ScalingConstants fit_matching_scaling(const AuxiliaryFrame& aux, const MatchingSpec& matching) {
    return fit_scaling(apply_transforms(matching_features(aux, matching.variables), matching.transforms));
}

DonorChoice select_donor(std::span<const Neighbor<double>> neighbors, const SelectionWeights& weights, Stream& rng) {
    if (static_cast<int>(neighbors.size()) != weights.k) {
        throw LengthMismatch("neighbour list has " + std::to_string(neighbors.size()) + " entries, weights cover " +
                             std::to_string(weights.k));
    }
    const double u = rng.uniform();
    double acc = 0.0;
    for (int j = 0; j + 1 < weights.k; ++j) {
        acc += weights.w[static_cast<std::size_t>(j)];
        if (u < acc) return {neighbors[static_cast<std::size_t>(j)].donor_id, j + 1};
    }
    return {neighbors.back().donor_id, weights.k};
}

ArtificialPopulation generate_population(const AuxiliaryFrame& aux, const SurveyFrame& survey, const ImputationConfig& cfg,
                                         const ScalingConstants& scaling, const MatchingSpec& matching,
                                         const GenerateOptions& options) {
    cfg.check();
    const int k = cfg.method == ImputationMethod::single_nn ? 1 : cfg.k;
    const SelectionWeights weights = weights_for(cfg.method, k);

    const Features recipients = prepared(matching_features(aux, matching.variables), matching, scaling);
    const Features donors = prepared(matching_features(survey, matching.variables), matching, scaling);

    ArtificialPopulation pop;
    pop.aux = aux;
    pop.y_names = survey.y_names;
    const auto n = static_cast<Eigen::Index>(aux.rows());
    pop.y = RowMatrixXd::Constant(n, survey.y.cols(), std::numeric_limits<double>::quiet_NaN());
    pop.donor_id.assign(aux.rows(), -1);
    pop.donor_rank.assign(aux.rows(), 0);
    pop.provenance = {cfg.method, k, cfg.master_seed, weights.w, {}};
    if (options.retain_pools) {
        pop.pool_width = k;
        pop.pools.assign(aux.rows() * static_cast<std::size_t>(k), -1);
    }

    std::unordered_map<UnitId, Eigen::Index> survey_row;
    survey_row.reserve(survey.rows());
    for (std::size_t i = 0; i < survey.rows(); ++i) survey_row.emplace(survey.plot_id[i], static_cast<Eigen::Index>(i));

    for (std::size_t s = 0; s < aux.stratum.levels.size(); ++s) {
        const auto& level = aux.stratum.levels[s];
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < aux.rows(); ++i) {
            if (aux.in_scope[i] && static_cast<std::size_t>(aux.stratum.codes[i]) == s) members.push_back(i);
        }
        if (members.empty()) continue;

        const auto code = survey.stratum.code_of(level);
        std::vector<Eigen::Index> donor_rows;
        for (std::size_t i = 0; i < survey.rows(); ++i) {
            if (survey.stratum.codes[i] == code) donor_rows.push_back(static_cast<Eigen::Index>(i));
        }
        RowMatrixXd points(static_cast<Eigen::Index>(donor_rows.size()), donors.values.cols());
        std::vector<UnitId> ids(donor_rows.size());
        for (std::size_t i = 0; i < donor_rows.size(); ++i) {
            points.row(static_cast<Eigen::Index>(i)) = donors.values.row(donor_rows[i]);
            ids[i] = survey.plot_id[static_cast<std::size_t>(donor_rows[i])];
        }
        const DonorIndex<double> index(level, std::move(points), std::move(ids), k);

        parallel_for(members.size(), options.workers, [&](std::size_t begin, std::size_t end) {
            std::vector<Neighbor<double>> neighbors;
            std::vector<double> q(static_cast<std::size_t>(recipients.values.cols()));
            for (std::size_t m = begin; m < end; ++m) {
                const std::size_t i = members[m];
                const auto row = static_cast<Eigen::Index>(i);
                for (std::size_t j = 0; j < q.size(); ++j) q[j] = recipients.values(row, static_cast<Eigen::Index>(j));
                index.query(q, k, neighbors);
                Stream rng(cfg.master_seed, StreamTag::impute, static_cast<std::uint64_t>(aux.unit_id[i]));
                const DonorChoice choice = select_donor(neighbors, weights, rng);
                pop.donor_id[i] = choice.donor_id;
                pop.donor_rank[i] = choice.rank;
                pop.y.row(row) = survey.y.row(survey_row.at(choice.donor_id));
                if (options.retain_pools) {
                    for (int j = 0; j < k; ++j) {
                        pop.pools[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(j)] =
                            neighbors[static_cast<std::size_t>(j)].donor_id;
                    }
                }
            }
        });
    }
    return pop;
}

std::optional<std::size_t> DomainTruth::y_index(const std::string& name) const {
    auto it = std::find(y_names.begin(), y_names.end(), name);
    if (it == y_names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - y_names.begin());
}

DomainTruth domain_truth(const ArtificialPopulation& pop) {
    DomainTruth t;
    t.domains = pop.aux.domain.levels;
    t.y_names = pop.y_names;
    const auto d = static_cast<Eigen::Index>(t.domains.size());
    const auto q = pop.y.cols();
    t.count.assign(t.domains.size(), 0);
    t.mean = Eigen::MatrixXd::Zero(d, q);
    t.zero_share = Eigen::MatrixXd::Zero(d, q);
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        if (!pop.aux.in_scope[i]) continue;
        const auto code = pop.aux.domain.codes[i];
        ++t.count[static_cast<std::size_t>(code)];
        for (Eigen::Index j = 0; j < q; ++j) {
            const double v = pop.y(static_cast<Eigen::Index>(i), j);
            t.mean(code, j) += v;
            if (v == 0.0) t.zero_share(code, j) += 1.0;
        }
    }
    for (Eigen::Index r = 0; r < d; ++r) {
        const double c = static_cast<double>(t.count[static_cast<std::size_t>(r)]);
        if (c > 0) {
            t.mean.row(r) /= c;
            t.zero_share.row(r) /= c;
        } else {
            t.mean.row(r).setConstant(std::numeric_limits<double>::quiet_NaN());
            t.zero_share.row(r).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return t;
}

std::string emit(const DomainTruth& truth) {
    std::string out = "domain_id,N";
    for (const auto& y : truth.y_names) out += "," + y;
    for (const auto& y : truth.y_names) out += ",zero_share_" + y;
    out += '\n';
    for (std::size_t r = 0; r < truth.domains.size(); ++r) {
        const auto row = static_cast<Eigen::Index>(r);
        out += truth.domains[r] + "," + std::to_string(truth.count[r]);
        for (Eigen::Index j = 0; j < truth.mean.cols(); ++j) out += "," + csv::format(truth.mean(row, j));
        for (Eigen::Index j = 0; j < truth.zero_share.cols(); ++j) out += "," + csv::format(truth.zero_share(row, j));
        out += '\n';
    }
    return out;
}

}  // namespace simpop
