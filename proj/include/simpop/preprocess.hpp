#pragma once

#include "simpop/datamodel.hpp"

#include <map>
#include <string>
#include <vector>

namespace simpop {

enum class Skew { none, right, left };

std::string to_string(Skew s);
Skew parse_skew(const std::string& name);

// log(offset + x) for right skew, log(offset - x) for left skew.
struct TransformSpec {
    std::string variable;
    Skew direction = Skew::none;
    double offset = 0.0;
};

// The matching variables of one frame, in matching order. Rows stay aligned
// with the source frame; `active` marks rows that take part in fitting
// (in-scope population units, every survey unit).
struct Features {
    std::vector<std::string> names;
    RowMatrixXd values;
    CategoryColumn stratum;
    std::vector<std::uint8_t> active;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
};

Features matching_features(const AuxiliaryFrame& frame, const std::vector<std::string>& variables);
Features matching_features(const SurveyFrame& frame, const std::vector<std::string>& variables);

Features apply_transforms(Features features, const std::vector<TransformSpec>& specs);

// Offset making the log argument at least 1 over the given values.
double suggest_offset(const Eigen::Ref<const Eigen::VectorXd>& values, Skew direction);

// Sample skewness (standardized third moment) of each variable over active rows.
Eigen::VectorXd skewness(const Features& features);

struct ScalingConstants {
    struct Cell {
        double mean = 0.0;
        double sd = 1.0;
    };
    std::vector<std::string> variables;
    std::map<std::string, std::vector<Cell>, decltype(&level_less)> strata{&level_less};

    std::string to_json() const;
    static ScalingConstants from_json(const std::string& text);
};

// Per-stratum mean and population standard deviation (divisor n) over active rows.
ScalingConstants fit_scaling(const Features& population);
Features apply_scaling(Features features, const ScalingConstants& constants);

struct CorrelationReport {
    struct Flag {
        std::string stratum;
        std::string a;
        std::string b;
        double r;
    };
    std::vector<std::string> variables;
    std::map<std::string, Eigen::MatrixXd, decltype(&level_less)> by_stratum{&level_less};
    std::vector<Flag> flagged;
};

CorrelationReport correlation_audit(const Features& features, double threshold);

}  // namespace simpop
