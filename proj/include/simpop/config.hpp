#pragma once

#include "simpop/datamodel.hpp"
#include "simpop/estimators.hpp"
#include "simpop/imputer.hpp"
#include "simpop/sampler.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace simpop {

// Stable 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

struct FrameInput {
    std::filesystem::path path;
    SchemaMapping schema;
};

struct EstimationSpec {
    std::string response;
    std::vector<EstimatorKind> estimators{EstimatorKind::ht, EstimatorKind::greg, EstimatorKind::fh, EstimatorKind::bhf};
    // Auxiliary variables per estimator; HT uses none.
    std::map<EstimatorKind, std::vector<std::string>> auxiliary;

    const std::vector<std::string>& variables_for(EstimatorKind kind) const;
};

// Everything a run needs, read from one JSON file. Relative paths resolve
// against the config file's directory.
struct RunConfig {
    FrameInput auxiliary;
    FrameInput survey;
    MatchingSpec matching;
    ImputationConfig imputation;
    bool retain_neighbor_lists = false;
    DesignSpec design;
    EstimationSpec estimation;
    std::vector<std::string> diagnostic_variables;  // empty: every response
    std::vector<int> sweep_k{1, 5, 10, 20, 50, 100};
    std::filesystem::path output{"out"};
    int workers = 1;

    nlohmann::json source;  // normalized config, keys sorted

    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);

    // Reflects overrides back into `source` so hashes track them.
    void set_seed(std::uint64_t seed);
    void set_retain_neighbor_lists(bool retain);

    std::string hash() const;
    std::string section_hash(const std::string& section) const;

    // Column references against loaded frames; throws ValidationError.
    void check_columns(const AuxiliaryFrame& aux, const SurveyFrame& survey) const;
};

}  // namespace simpop
