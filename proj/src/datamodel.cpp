#include "simpop/datamodel.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace simpop {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::optional<std::int64_t> as_integer(const std::string& s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::optional<std::size_t> index_of(const std::vector<std::string>& names, const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
}

std::uint8_t parse_flag(const std::string& field, std::int64_t row, const std::string& column) {
    if (field == "1" || field == "true" || field == "TRUE" || field == "T") return 1;
    if (field == "0" || field == "false" || field == "FALSE" || field == "F") return 0;
    throw ParseFailure(row, column);
}

std::vector<std::string> remaining_columns(const csv::Table& table, const std::set<std::string>& claimed) {
    std::vector<std::string> out;
    for (const auto& h : table.header) {
        if (!claimed.count(h)) out.push_back(h);
    }
    return out;
}

void fill_matrix(const csv::Table& table, const std::vector<std::string>& columns, RowMatrixXd& out) {
    std::vector<std::size_t> idx;
    idx.reserve(columns.size());
    for (const auto& c : columns) idx.push_back(table.require(c));
    out.resize(static_cast<Eigen::Index>(table.rows.size()), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto row = static_cast<std::int64_t>(r + 1);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            auto v = csv::parse_double(table.rows[r][idx[j]], row, columns[j]);
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = v.value_or(kNaN);
        }
    }
}

void summarize(const RowMatrixXd& m, const std::vector<std::string>& names, SchemaReport& report) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        SchemaReport::ColumnSummary s;
        s.column = names[static_cast<std::size_t>(j)];
        s.min = std::numeric_limits<double>::infinity();
        s.max = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const double v = m(i, j);
            if (std::isnan(v)) {
                ++s.missing;
                continue;
            }
            ++s.count;
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
        }
        if (s.count == 0) s.min = s.max = kNaN;
        report.column_summary.push_back(s);
    }
}

void check_missing(const RowMatrixXd& m, const std::vector<std::string>& names, SchemaReport& report) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (std::isnan(m(i, j))) {
                report.errors.push_back({i + 1, names[static_cast<std::size_t>(j)], "missing value"});
            }
        }
    }
}

void check_labels(const CategoryColumn& col, const std::string& name, SchemaReport& report) {
    for (std::size_t i = 0; i < col.size(); ++i) {
        if (col.label(i).empty()) {
            report.errors.push_back({static_cast<std::int64_t>(i + 1), name, "missing value"});
        }
    }
}

template <typename Ids>
void check_unique(const Ids& ids) {
    std::unordered_set<std::int64_t> seen;
    seen.reserve(ids.size());
    for (auto id : ids) {
        if (!seen.insert(id).second) throw DuplicateId(id);
    }
}

void append_row(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += fields[i];
    }
    out += '\n';
}

void append_comments(std::string& out, const std::vector<std::string>& comments) {
    for (const auto& c : comments) {
        out += c;
        out += '\n';
    }
}

}  // namespace

bool level_less(const std::string& a, const std::string& b) {
    const auto ia = as_integer(a);
    const auto ib = as_integer(b);
    if (ia && ib) return *ia < *ib;
    if (ia != ib && (ia || ib)) return static_cast<bool>(ia);
    return a < b;
}

CategoryColumn CategoryColumn::from_labels(const std::vector<std::string>& labels) {
    CategoryColumn col;
    std::unordered_map<std::string, std::int32_t> seen;
    for (const auto& l : labels) seen.emplace(l, 0);
    col.levels.reserve(seen.size());
    for (const auto& [k, v] : seen) col.levels.push_back(k);
    std::sort(col.levels.begin(), col.levels.end(), level_less);
    for (std::size_t i = 0; i < col.levels.size(); ++i) seen[col.levels[i]] = static_cast<std::int32_t>(i);
    col.codes.reserve(labels.size());
    for (const auto& l : labels) col.codes.push_back(seen[l]);
    return col;
}

std::int32_t CategoryColumn::code_of(const std::string& level) const {
    auto it = std::lower_bound(levels.begin(), levels.end(), level, level_less);
    if (it == levels.end() || *it != level) return -1;
    return static_cast<std::int32_t>(it - levels.begin());
}

std::string SchemaReport::describe() const {
    std::ostringstream os;
    os << errors.size() << " error(s)";
    const std::size_t shown = std::min<std::size_t>(errors.size(), 5);
    for (std::size_t i = 0; i < shown; ++i) {
        os << "; row " << errors[i].row << " column \"" << errors[i].column << "\": " << errors[i].violation;
    }
    if (errors.size() > shown) os << "; ...";
    return os.str();
}

std::size_t AuxiliaryFrame::in_scope_count() const {
    return static_cast<std::size_t>(std::count(in_scope.begin(), in_scope.end(), std::uint8_t{1}));
}

std::optional<std::size_t> AuxiliaryFrame::x_index(const std::string& name) const { return index_of(x_names, name); }
std::optional<std::size_t> SurveyFrame::x_index(const std::string& name) const { return index_of(x_names, name); }
std::optional<std::size_t> SurveyFrame::y_index(const std::string& name) const { return index_of(y_names, name); }
std::optional<std::size_t> ArtificialPopulation::y_index(const std::string& name) const {
    return index_of(y_names, name);
}

std::string to_string(ImputationMethod method) {
    switch (method) {
        case ImputationMethod::kbaabb: return "kbaabb";
        case ImputationMethod::uniform_knn: return "uniform_knn";
        case ImputationMethod::single_nn: return "single_nn";
    }
    return "unknown";
}

ImputationMethod parse_method(const std::string& name) {
    if (name == "kbaabb") return ImputationMethod::kbaabb;
    if (name == "uniform_knn" || name == "uniform") return ImputationMethod::uniform_knn;
    if (name == "single_nn") return ImputationMethod::single_nn;
    throw ValidationError("unknown imputation method \"" + name + "\"");
}

AuxiliaryFrame parse_auxiliary_frame(const csv::Table& table, const SchemaMapping& schema) {
    AuxiliaryFrame f;
    f.comments = table.comments;
    const auto c_unit = table.require(schema.unit_id);
    const auto c_cluster = table.require(schema.cluster_id);
    const auto c_domain = table.require(schema.domain_id);
    const auto c_stratum = table.require(schema.stratum);
    const auto c_scope = table.find(schema.in_scope);
    f.has_in_scope_column = c_scope.has_value();

    std::set<std::string> claimed{schema.unit_id, schema.cluster_id, schema.domain_id, schema.stratum};
    if (c_scope) claimed.insert(schema.in_scope);
    f.x_names = schema.x.empty() ? remaining_columns(table, claimed) : schema.x;

    const std::size_t n = table.rows.size();
    f.unit_id.resize(n);
    f.cluster_id.resize(n);
    f.in_scope.assign(n, 1);
    std::vector<std::string> domains(n), strata(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = table.rows[r];
        const auto line = static_cast<std::int64_t>(r + 1);
        f.unit_id[r] = csv::parse_int(row[c_unit], line, schema.unit_id);
        f.cluster_id[r] = csv::parse_int(row[c_cluster], line, schema.cluster_id);
        domains[r] = row[c_domain];
        strata[r] = row[c_stratum];
        if (c_scope) f.in_scope[r] = parse_flag(row[*c_scope], line, schema.in_scope);
    }
    check_unique(f.unit_id);
    f.domain = CategoryColumn::from_labels(domains);
    f.stratum = CategoryColumn::from_labels(strata);
    fill_matrix(table, f.x_names, f.x);

    auto report = validate(f);
    if (!report.accepted()) throw SchemaRejected(std::move(report));
    return f;
}

AuxiliaryFrame load_auxiliary_frame(const std::filesystem::path& path, const SchemaMapping& schema) {
    return parse_auxiliary_frame(csv::read(path), schema);
}

SurveyFrame parse_survey_frame(const csv::Table& table, const SchemaMapping& schema) {
    if (schema.y.empty()) throw ValidationError("survey schema declares no response columns");
    SurveyFrame f;
    f.comments = table.comments;
    const auto c_plot = table.require(schema.plot_id);
    const auto c_domain = table.require(schema.domain_id);
    const auto c_stratum = table.require(schema.stratum);
    for (const auto& y : schema.y) table.require(y);

    std::set<std::string> claimed{schema.plot_id, schema.domain_id, schema.stratum};
    claimed.insert(schema.y.begin(), schema.y.end());
    f.x_names = schema.x.empty() ? remaining_columns(table, claimed) : schema.x;
    f.y_names = schema.y;

    const std::size_t n = table.rows.size();
    f.plot_id.resize(n);
    std::vector<std::string> domains(n), strata(n);
    for (std::size_t r = 0; r < n; ++r) {
        const auto& row = table.rows[r];
        const auto line = static_cast<std::int64_t>(r + 1);
        f.plot_id[r] = csv::parse_int(row[c_plot], line, schema.plot_id);
        domains[r] = row[c_domain];
        strata[r] = row[c_stratum];
    }
    check_unique(f.plot_id);
    f.domain = CategoryColumn::from_labels(domains);
    f.stratum = CategoryColumn::from_labels(strata);
    fill_matrix(table, f.x_names, f.x);
    fill_matrix(table, f.y_names, f.y);

    auto report = validate(f);
    if (!report.accepted()) throw SchemaRejected(std::move(report));
    return f;
}

SurveyFrame load_survey_frame(const std::filesystem::path& path, const SchemaMapping& schema) {
    return parse_survey_frame(csv::read(path), schema);
}

SchemaReport validate(const AuxiliaryFrame& frame) {
    SchemaReport report;
    check_labels(frame.domain, "domain_id", report);
    check_labels(frame.stratum, "stratum", report);
    check_missing(frame.x, frame.x_names, report);
    summarize(frame.x, frame.x_names, report);
    return report;
}

SchemaReport validate(const SurveyFrame& frame) {
    SchemaReport report;
    check_labels(frame.domain, "domain_id", report);
    check_labels(frame.stratum, "stratum", report);
    check_missing(frame.x, frame.x_names, report);
    check_missing(frame.y, frame.y_names, report);
    for (Eigen::Index i = 0; i < frame.y.rows(); ++i) {
        for (Eigen::Index j = 0; j < frame.y.cols(); ++j) {
            if (frame.y(i, j) < 0.0) {
                report.errors.push_back({i + 1, frame.y_names[static_cast<std::size_t>(j)], "negative response"});
            }
        }
    }
    summarize(frame.x, frame.x_names, report);
    summarize(frame.y, frame.y_names, report);
    return report;
}

SchemaReport validate_cross_frames(const AuxiliaryFrame& aux, const SurveyFrame& survey, int k) {
    SchemaReport report;
    const std::set<std::string> ax(aux.x_names.begin(), aux.x_names.end());
    const std::set<std::string> sx(survey.x_names.begin(), survey.x_names.end());
    for (const auto& c : ax) {
        if (!sx.count(c)) report.errors.push_back({0, c, "auxiliary column absent from survey"});
    }
    for (const auto& c : sx) {
        if (!ax.count(c)) report.errors.push_back({0, c, "survey column absent from auxiliary frame"});
    }

    for (const auto& level : survey.stratum.levels) {
        if (aux.stratum.code_of(level) < 0) {
            report.warnings.push_back({0, "stratum", "survey stratum \"" + level + "\" absent from auxiliary frame"});
        }
    }

    std::vector<std::int64_t> donors(survey.stratum.levels.size(), 0);
    for (auto c : survey.stratum.codes) ++donors[static_cast<std::size_t>(c)];
    std::vector<std::int64_t> recipients(aux.stratum.levels.size(), 0);
    for (std::size_t i = 0; i < aux.rows(); ++i) {
        if (aux.in_scope[i]) ++recipients[static_cast<std::size_t>(aux.stratum.codes[i])];
    }
    for (std::size_t s = 0; s < aux.stratum.levels.size(); ++s) {
        if (recipients[s] == 0) continue;
        const auto& level = aux.stratum.levels[s];
        const auto code = survey.stratum.code_of(level);
        const std::int64_t have = code < 0 ? 0 : donors[static_cast<std::size_t>(code)];
        if (have < k) {
            report.errors.push_back({0, "stratum",
                                     "insufficient donors in stratum \"" + level + "\": " + std::to_string(have) +
                                         " < k = " + std::to_string(k)});
        }
    }
    return report;
}

std::string emit(const AuxiliaryFrame& frame) {
    std::string out;
    append_comments(out, frame.comments);
    std::vector<std::string> fields{"unit_id", "cluster_id", "domain_id", "stratum"};
    if (frame.has_in_scope_column) fields.push_back("in_scope");
    fields.insert(fields.end(), frame.x_names.begin(), frame.x_names.end());
    append_row(out, fields);
    for (std::size_t i = 0; i < frame.rows(); ++i) {
        fields.clear();
        fields.push_back(csv::format(frame.unit_id[i]));
        fields.push_back(csv::format(frame.cluster_id[i]));
        fields.push_back(frame.domain.label(i));
        fields.push_back(frame.stratum.label(i));
        if (frame.has_in_scope_column) fields.push_back(frame.in_scope[i] ? "1" : "0");
        for (Eigen::Index j = 0; j < frame.x.cols(); ++j) fields.push_back(csv::format(frame.x(static_cast<Eigen::Index>(i), j)));
        append_row(out, fields);
    }
    return out;
}

std::string emit(const SurveyFrame& frame) {
    std::string out;
    append_comments(out, frame.comments);
    std::vector<std::string> fields{"plot_id", "domain_id", "stratum"};
    fields.insert(fields.end(), frame.x_names.begin(), frame.x_names.end());
    fields.insert(fields.end(), frame.y_names.begin(), frame.y_names.end());
    append_row(out, fields);
    for (std::size_t i = 0; i < frame.rows(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        fields.clear();
        fields.push_back(csv::format(frame.plot_id[i]));
        fields.push_back(frame.domain.label(i));
        fields.push_back(frame.stratum.label(i));
        for (Eigen::Index j = 0; j < frame.x.cols(); ++j) fields.push_back(csv::format(frame.x(r, j)));
        for (Eigen::Index j = 0; j < frame.y.cols(); ++j) fields.push_back(csv::format(frame.y(r, j)));
        append_row(out, fields);
    }
    return out;
}

std::string provenance_json(const Provenance& p) {
    nlohmann::json j;
    j["method"] = to_string(p.method);
    j["k"] = p.k;
    j["seed"] = p.seed;
    j["weights"] = p.weights;
    j["config_hash"] = p.config_hash;
    return j.dump();
}

std::string emit(const ArtificialPopulation& pop) {
    std::string out;
    out += "# ";
    out += provenance_json(pop.provenance);
    out += '\n';
    const auto& a = pop.aux;
    std::vector<std::string> fields{"unit_id", "cluster_id", "domain_id", "stratum", "in_scope"};
    fields.insert(fields.end(), a.x_names.begin(), a.x_names.end());
    fields.push_back("donor_id");
    fields.push_back("donor_rank");
    fields.insert(fields.end(), pop.y_names.begin(), pop.y_names.end());
    append_row(out, fields);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        fields.clear();
        fields.push_back(csv::format(a.unit_id[i]));
        fields.push_back(csv::format(a.cluster_id[i]));
        fields.push_back(a.domain.label(i));
        fields.push_back(a.stratum.label(i));
        fields.push_back(a.in_scope[i] ? "1" : "0");
        for (Eigen::Index j = 0; j < a.x.cols(); ++j) fields.push_back(csv::format(a.x(r, j)));
        const bool imputed = pop.donor_rank[i] > 0;
        fields.push_back(imputed ? csv::format(pop.donor_id[i]) : std::string());
        fields.push_back(imputed ? std::to_string(pop.donor_rank[i]) : std::string());
        for (Eigen::Index j = 0; j < pop.y.cols(); ++j) fields.push_back(csv::format(pop.y(r, j)));
        append_row(out, fields);
    }
    return out;
}

ArtificialPopulation parse_population(const csv::Table& table) {
    ArtificialPopulation pop;
    for (const auto& c : table.comments) {
        const auto brace = c.find('{');
        if (brace == std::string::npos) continue;
        auto j = nlohmann::json::parse(c.substr(brace), nullptr, false);
        if (j.is_discarded()) continue;
        pop.provenance.method = parse_method(j.value("method", "kbaabb"));
        pop.provenance.k = j.value("k", 10);
        pop.provenance.seed = j.value("seed", std::uint64_t{0});
        pop.provenance.weights = j.value("weights", std::vector<double>{});
        pop.provenance.config_hash = j.value("config_hash", std::string{});
    }

    const auto c_donor = table.require("donor_id");
    const auto c_rank = table.require("donor_rank");
    const auto c_scope = table.require("in_scope");
    SchemaMapping schema;
    for (std::size_t i = c_scope + 1; i < c_donor; ++i) schema.x.push_back(table.header[i]);
    for (std::size_t i = c_rank + 1; i < table.header.size(); ++i) pop.y_names.push_back(table.header[i]);

    // Out-of-scope rows have empty y fields, so parse the auxiliary part
    // without the response columns' missing-value check.
    pop.aux = parse_auxiliary_frame(table, schema);
    pop.aux.comments.clear();
    pop.aux.has_in_scope_column = true;

    const std::size_t n = table.rows.size();
    pop.donor_id.assign(n, -1);
    pop.donor_rank.assign(n, 0);
    fill_matrix(table, pop.y_names, pop.y);
    for (std::size_t r = 0; r < n; ++r) {
        const auto line = static_cast<std::int64_t>(r + 1);
        const auto& d = table.rows[r][c_donor];
        const auto& k = table.rows[r][c_rank];
        if (!d.empty()) pop.donor_id[r] = csv::parse_int(d, line, "donor_id");
        if (!k.empty()) pop.donor_rank[r] = static_cast<std::int32_t>(csv::parse_int(k, line, "donor_rank"));
    }
    return pop;
}

ArtificialPopulation load_population(const std::filesystem::path& path) { return parse_population(csv::read(path)); }

}  // namespace simpop
