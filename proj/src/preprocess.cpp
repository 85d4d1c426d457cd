#include "simpop/preprocess.hpp"

#include <json.hpp>

#include <cmath>

namespace simpop {

namespace {

template <typename Frame>
Features select(const Frame& frame, const std::vector<std::string>& variables) {
    Features f;
    f.names = variables;
    f.stratum = frame.stratum;
    f.values.resize(frame.x.rows(), static_cast<Eigen::Index>(variables.size()));
    for (std::size_t j = 0; j < variables.size(); ++j) {
        auto idx = frame.x_index(variables[j]);
        if (!idx) throw MissingVariable(variables[j]);
        f.values.col(static_cast<Eigen::Index>(j)) = frame.x.col(static_cast<Eigen::Index>(*idx));
    }
    return f;
}

// Row indices of active units, grouped by stratum code.
std::vector<std::vector<Eigen::Index>> group_active(const Features& f) {
    std::vector<std::vector<Eigen::Index>> groups(f.stratum.levels.size());
    for (std::size_t i = 0; i < f.rows(); ++i) {
        if (f.active[i]) groups[static_cast<std::size_t>(f.stratum.codes[i])].push_back(static_cast<Eigen::Index>(i));
    }
    return groups;
}

}  // namespace

std::string to_string(Skew s) {
    switch (s) {
        case Skew::none: return "none";
        case Skew::right: return "right";
        case Skew::left: return "left";
    }
    return "none";
}

Skew parse_skew(const std::string& name) {
    if (name == "right") return Skew::right;
    if (name == "left") return Skew::left;
    if (name == "none") return Skew::none;
    throw ValidationError("unknown transform direction \"" + name + "\"");
}

Features matching_features(const AuxiliaryFrame& frame, const std::vector<std::string>& variables) {
    Features f = select(frame, variables);
    f.active = frame.in_scope;
    return f;
}

Features matching_features(const SurveyFrame& frame, const std::vector<std::string>& variables) {
    Features f = select(frame, variables);
    f.active.assign(frame.rows(), 1);
    return f;
}

Features apply_transforms(Features features, const std::vector<TransformSpec>& specs) {
    for (const auto& spec : specs) {
        if (spec.direction == Skew::none) continue;
        auto it = std::find(features.names.begin(), features.names.end(), spec.variable);
        if (it == features.names.end()) throw MissingVariable(spec.variable);
        auto col = features.values.col(it - features.names.begin());
        const double sign = spec.direction == Skew::right ? 1.0 : -1.0;
        for (Eigen::Index i = 0; i < col.size(); ++i) {
            const double arg = spec.offset + sign * col(i);
            if (!(arg > 0.0)) throw NonPositiveLogArgument(spec.variable, i + 1);
            col(i) = std::log(arg);
        }
    }
    return features;
}

double suggest_offset(const Eigen::Ref<const Eigen::VectorXd>& values, Skew direction) {
    switch (direction) {
        case Skew::right: return 1.0 - values.minCoeff();
        case Skew::left: return 1.0 + values.maxCoeff();
        case Skew::none: return 0.0;
    }
    return 0.0;
}

Eigen::VectorXd skewness(const Features& features) {
    Eigen::VectorXd out(features.values.cols());
    for (Eigen::Index j = 0; j < features.values.cols(); ++j) {
        double n = 0.0, sum = 0.0;
        for (std::size_t i = 0; i < features.rows(); ++i) {
            if (!features.active[i]) continue;
            n += 1.0;
            sum += features.values(static_cast<Eigen::Index>(i), j);
        }
        const double mean = sum / n;
        double m2 = 0.0, m3 = 0.0;
        for (std::size_t i = 0; i < features.rows(); ++i) {
            if (!features.active[i]) continue;
            const double d = features.values(static_cast<Eigen::Index>(i), j) - mean;
            m2 += d * d;
            m3 += d * d * d;
        }
        m2 /= n;
        m3 /= n;
        out(j) = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
    }
    return out;
}

ScalingConstants fit_scaling(const Features& population) {
    ScalingConstants sc;
    sc.variables = population.names;
    const auto groups = group_active(population);
    for (std::size_t s = 0; s < groups.size(); ++s) {
        const auto& rows = groups[s];
        if (rows.empty()) continue;
        const auto& level = population.stratum.levels[s];
        std::vector<ScalingConstants::Cell> cells(population.names.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const auto col = static_cast<Eigen::Index>(j);
            double sum = 0.0;
            for (auto r : rows) sum += population.values(r, col);
            const double mean = sum / static_cast<double>(rows.size());
            double ss = 0.0;
            for (auto r : rows) {
                const double d = population.values(r, col) - mean;
                ss += d * d;
            }
            const double sd = std::sqrt(ss / static_cast<double>(rows.size()));
            if (!(sd > 0.0)) throw ZeroVariance(level, population.names[j]);
            cells[j] = {mean, sd};
        }
        sc.strata.emplace(level, std::move(cells));
    }
    return sc;
}

Features apply_scaling(Features features, const ScalingConstants& constants) {
    std::vector<std::size_t> var_index(features.names.size());
    for (std::size_t j = 0; j < features.names.size(); ++j) {
        auto it = std::find(constants.variables.begin(), constants.variables.end(), features.names[j]);
        if (it == constants.variables.end()) {
            throw MissingConstants(features.stratum.levels.empty() ? "" : features.stratum.levels.front(), features.names[j]);
        }
        var_index[j] = static_cast<std::size_t>(it - constants.variables.begin());
    }
    std::vector<const std::vector<ScalingConstants::Cell>*> by_code(features.stratum.levels.size(), nullptr);
    std::vector<std::uint8_t> used(features.stratum.levels.size(), 0);
    for (auto c : features.stratum.codes) used[static_cast<std::size_t>(c)] = 1;
    for (std::size_t s = 0; s < by_code.size(); ++s) {
        if (!used[s]) continue;
        auto it = constants.strata.find(features.stratum.levels[s]);
        if (it == constants.strata.end()) throw MissingConstants(features.stratum.levels[s], features.names.front());
        by_code[s] = &it->second;
    }
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto& cells = *by_code[static_cast<std::size_t>(features.stratum.codes[i])];
        for (std::size_t j = 0; j < var_index.size(); ++j) {
            const auto& c = cells[var_index[j]];
            auto& v = features.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            v = (v - c.mean) / c.sd;
        }
    }
    return features;
}

std::string ScalingConstants::to_json() const {
    nlohmann::ordered_json j;
    j["variables"] = variables;
    nlohmann::ordered_json strata_json = nlohmann::ordered_json::object();
    for (const auto& [level, cells] : strata) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& c : cells) arr.push_back({{"mean", c.mean}, {"sd", c.sd}});
        strata_json[level] = arr;
    }
    j["strata"] = strata_json;
    return j.dump(2) + "\n";
}

ScalingConstants ScalingConstants::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ScalingConstants sc;
    sc.variables = j.at("variables").get<std::vector<std::string>>();
    for (const auto& [level, arr] : j.at("strata").items()) {
        std::vector<Cell> cells;
        for (const auto& c : arr) cells.push_back({c.at("mean").get<double>(), c.at("sd").get<double>()});
        sc.strata.emplace(level, std::move(cells));
    }
    return sc;
}

CorrelationReport correlation_audit(const Features& features, double threshold) {
    CorrelationReport report;
    report.variables = features.names;
    const auto groups = group_active(features);
    const auto p = features.values.cols();
    for (std::size_t s = 0; s < groups.size(); ++s) {
        const auto& rows = groups[s];
        if (rows.size() < 2) continue;
        Eigen::MatrixXd block(static_cast<Eigen::Index>(rows.size()), p);
        for (std::size_t r = 0; r < rows.size(); ++r) block.row(static_cast<Eigen::Index>(r)) = features.values.row(rows[r]);
        const Eigen::RowVectorXd mean = block.colwise().mean();
        block.rowwise() -= mean;
        const Eigen::MatrixXd cov = block.transpose() * block;
        const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
        Eigen::MatrixXd corr = cov.array() / (sd * sd.transpose()).array();
        const auto& level = features.stratum.levels[s];
        for (Eigen::Index a = 0; a < p; ++a) {
            corr(a, a) = 1.0;
            for (Eigen::Index b = a + 1; b < p; ++b) {
                if (std::abs(corr(a, b)) > threshold) {
                    report.flagged.push_back({level, features.names[static_cast<std::size_t>(a)],
                                              features.names[static_cast<std::size_t>(b)], corr(a, b)});
                }
            }
        }
        report.by_stratum.emplace(level, std::move(corr));
    }
    return report;
}

}  // namespace simpop
