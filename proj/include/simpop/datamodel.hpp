#pragma once

#include "simpop/csv.hpp"
#include "simpop/error.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace simpop {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXd = RowMatrix<double>;

using UnitId = std::int64_t;

// Categorical column stored as codes into a sorted level list. Levels that
// all parse as integers sort numerically, otherwise lexicographically.
struct CategoryColumn {
    std::vector<std::string> levels;
    std::vector<std::int32_t> codes;

    static CategoryColumn from_labels(const std::vector<std::string>& labels);

    std::size_t size() const { return codes.size(); }
    const std::string& label(std::size_t row) const { return levels[static_cast<std::size_t>(codes[row])]; }
    // Code of a level, or -1 if absent.
    std::int32_t code_of(const std::string& level) const;
};

// Orders level names the same way CategoryColumn does.
bool level_less(const std::string& a, const std::string& b);

// Maps the logical fields of a frame to header names in a file.
struct SchemaMapping {
    std::string unit_id = "unit_id";
    std::string plot_id = "plot_id";
    std::string cluster_id = "cluster_id";
    std::string domain_id = "domain_id";
    std::string stratum = "stratum";
    std::string in_scope = "in_scope";
    // Empty x means "every column not claimed by another field".
    std::vector<std::string> x;
    std::vector<std::string> y;
};

struct SchemaReport {
    struct Issue {
        std::int64_t row;  // 1-based data row, 0 for frame-level issues
        std::string column;
        std::string violation;
    };
    struct ColumnSummary {
        std::string column;
        std::int64_t count = 0;
        std::int64_t missing = 0;
        double min = 0.0;
        double max = 0.0;
    };

    std::vector<Issue> errors;
    std::vector<Issue> warnings;
    std::vector<ColumnSummary> column_summary;

    bool accepted() const { return errors.empty(); }
    std::string describe() const;
};

class SchemaRejected : public ValidationError {
  public:
    explicit SchemaRejected(SchemaReport report)
      : ValidationError("frame rejected: " + report.describe())
      , report_(std::move(report)) {}
    const SchemaReport& report() const { return report_; }

  private:
    SchemaReport report_;
};

struct AuxiliaryFrame {
    std::vector<UnitId> unit_id;
    std::vector<std::int64_t> cluster_id;
    CategoryColumn domain;
    CategoryColumn stratum;
    std::vector<std::uint8_t> in_scope;
    std::vector<std::string> x_names;
    RowMatrixXd x;

    // Formatting details needed to emit the file back unchanged.
    std::vector<std::string> comments;
    bool has_in_scope_column = false;

    std::size_t rows() const { return unit_id.size(); }
    std::size_t in_scope_count() const;
    std::optional<std::size_t> x_index(const std::string& name) const;
};

struct SurveyFrame {
    std::vector<UnitId> plot_id;
    CategoryColumn domain;
    CategoryColumn stratum;
    std::vector<std::string> x_names;
    RowMatrixXd x;
    std::vector<std::string> y_names;
    RowMatrixXd y;

    std::vector<std::string> comments;

    std::size_t rows() const { return plot_id.size(); }
    std::optional<std::size_t> x_index(const std::string& name) const;
    std::optional<std::size_t> y_index(const std::string& name) const;
};

enum class ImputationMethod { kbaabb, uniform_knn, single_nn };

std::string to_string(ImputationMethod method);
ImputationMethod parse_method(const std::string& name);

struct Provenance {
    ImputationMethod method = ImputationMethod::kbaabb;
    int k = 10;
    std::uint64_t seed = 0;
    std::vector<double> weights;
    std::string config_hash;
};

// The auxiliary frame joined with imputed responses. Out-of-scope rows
// carry NaN responses, donor_id = -1 and donor_rank = 0.
struct ArtificialPopulation {
    AuxiliaryFrame aux;
    std::vector<std::string> y_names;
    RowMatrixXd y;
    std::vector<UnitId> donor_id;
    std::vector<std::int32_t> donor_rank;
    Provenance provenance;

    // Ranked donor pools, rows() x k, present only when retained.
    std::vector<UnitId> pools;
    int pool_width = 0;

    std::size_t rows() const { return aux.rows(); }
    std::optional<std::size_t> y_index(const std::string& name) const;
};

AuxiliaryFrame load_auxiliary_frame(const std::filesystem::path& path, const SchemaMapping& schema = {});
AuxiliaryFrame parse_auxiliary_frame(const csv::Table& table, const SchemaMapping& schema = {});
SurveyFrame load_survey_frame(const std::filesystem::path& path, const SchemaMapping& schema);
SurveyFrame parse_survey_frame(const csv::Table& table, const SchemaMapping& schema);

// Checks rows of an already-parsed frame; loaders call these and throw
// SchemaRejected when errors are present.
SchemaReport validate(const AuxiliaryFrame& frame);
SchemaReport validate(const SurveyFrame& frame);

// Equal x column sets, survey strata present in aux, at least k donors per
// recipient stratum.
SchemaReport validate_cross_frames(const AuxiliaryFrame& aux, const SurveyFrame& survey, int k = 10);

std::string emit(const AuxiliaryFrame& frame);
std::string emit(const SurveyFrame& frame);
std::string emit(const ArtificialPopulation& pop);

ArtificialPopulation load_population(const std::filesystem::path& path);
ArtificialPopulation parse_population(const csv::Table& table);

std::string provenance_json(const Provenance& p);

}  // namespace simpop
