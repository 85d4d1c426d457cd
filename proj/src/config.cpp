#include "simpop/config.hpp"

#include "simpop/csv.hpp"

#include <cstdio>
#include <set>

namespace simpop {

namespace {

using nlohmann::json;

SchemaMapping parse_schema(const json& j) {
    SchemaMapping s;
    if (j.is_null()) return s;
    s.unit_id = j.value("unit_id", s.unit_id);
    s.plot_id = j.value("plot_id", s.plot_id);
    s.cluster_id = j.value("cluster_id", s.cluster_id);
    s.domain_id = j.value("domain_id", s.domain_id);
    s.stratum = j.value("stratum", s.stratum);
    s.in_scope = j.value("in_scope", s.in_scope);
    s.x = j.value("x", std::vector<std::string>{});
    s.y = j.value("y", std::vector<std::string>{});
    return s;
}

FrameInput parse_input(const json& j, const std::filesystem::path& base, const char* what) {
    if (!j.is_object() || !j.contains("path")) throw ValidationError(std::string("config lacks ") + what + ".path");
    FrameInput in;
    in.path = j.at("path").get<std::string>();
    if (in.path.is_relative()) in.path = base / in.path;
    in.schema = parse_schema(j.value("schema", json()));
    return in;
}

std::uint64_t require_seed(const json& section, const char* what) {
    if (!section.is_object() || !section.contains("seed")) throw ValidationError(std::string("config lacks ") + what + ".seed");
    return section.at("seed").get<std::uint64_t>();
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

}  // namespace

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const std::vector<std::string>& EstimationSpec::variables_for(EstimatorKind kind) const {
    static const std::vector<std::string> none;
    auto it = auxiliary.find(kind);
    return it == auxiliary.end() ? none : it->second;
}

RunConfig RunConfig::from_json(const json& j, const std::filesystem::path& base_dir) {
    try {
        RunConfig c;
        c.source = j;
        c.source.erase("workers");
        c.source.erase("output");

        c.auxiliary = parse_input(j.value("auxiliary", json()), base_dir, "auxiliary");
        c.survey = parse_input(j.value("survey", json()), base_dir, "survey");

        const json m = j.value("matching", json::object());
        c.matching.variables = get_or(m, "variables", std::vector<std::string>{});
        if (c.matching.variables.empty()) throw ValidationError("config lists no matching variables");
        if (m.contains("transforms")) {
            for (const auto& t : m.at("transforms")) {
                c.matching.transforms.push_back(
                    {t.at("variable").get<std::string>(), parse_skew(t.value("direction", "none")), t.value("offset", 0.0)});
            }
        }

        const json imp = j.value("imputation", json());
        c.imputation.master_seed = require_seed(imp, "imputation");
        c.imputation.method = parse_method(get_or<std::string>(imp, "method", "kbaabb"));
        c.imputation.k = get_or(imp, "k", c.imputation.method == ImputationMethod::single_nn ? 1 : 10);
        c.imputation.check();
        c.retain_neighbor_lists = get_or(imp, "retain_neighbor_lists", false);

        const json des = j.value("design", json());
        c.design.master_seed = require_seed(des, "design");
        c.design.replicates = get_or(des, "replicates", 2500);
        if (des.contains("out_of_scope_slots")) {
            for (const auto& [cluster, slots] : des.at("out_of_scope_slots").items()) {
                c.design.out_of_scope_slots[csv::parse_int(cluster, 0, "out_of_scope_slots")] = slots.get<std::int64_t>();
            }
        }
        c.design.check();

        const json est = j.value("estimation", json::object());
        c.estimation.response = get_or<std::string>(est, "response", "");
        if (est.contains("estimators")) {
            c.estimation.estimators.clear();
            for (const auto& e : est.at("estimators")) c.estimation.estimators.push_back(parse_estimator(e.get<std::string>()));
        }
        if (est.contains("auxiliary")) {
            const json& a = est.at("auxiliary");
            if (a.is_array()) {
                const auto vars = a.get<std::vector<std::string>>();
                for (auto kind : {EstimatorKind::greg, EstimatorKind::fh, EstimatorKind::bhf}) c.estimation.auxiliary[kind] = vars;
            } else {
                for (const auto& [name, vars] : a.items()) {
                    c.estimation.auxiliary[parse_estimator(name)] = vars.get<std::vector<std::string>>();
                }
            }
        }

        c.diagnostic_variables = get_or(j.value("diagnostics", json::object()), "variables", std::vector<std::string>{});
        c.sweep_k = get_or(j.value("sweep", json::object()), "k", c.sweep_k);
        for (int k : c.sweep_k) {
            if (k < 1) throw ValidationError("sweep k values must be positive");
        }

        c.output = j.value("output", std::string("out"));
        if (c.output.is_relative()) c.output = base_dir / c.output;
        c.workers = j.value("workers", 1);
        return c;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed config: ") + e.what());
    }
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(csv::read_file(path));
    } catch (const json::exception& e) {
        throw ValidationError("cannot parse " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

void RunConfig::set_seed(std::uint64_t seed) {
    imputation.master_seed = seed;
    design.master_seed = seed;
    source["imputation"]["seed"] = seed;
    source["design"]["seed"] = seed;
}

void RunConfig::set_retain_neighbor_lists(bool retain) {
    retain_neighbor_lists = retain;
    source["imputation"]["retain_neighbor_lists"] = retain;
}

std::string RunConfig::hash() const { return fnv1a_hex(source.dump()); }

std::string RunConfig::section_hash(const std::string& section) const {
    return fnv1a_hex(source.contains(section) ? source.at(section).dump() : std::string("null"));
}

void RunConfig::check_columns(const AuxiliaryFrame& aux, const SurveyFrame& survey) const {
    auto need_x = [&](const std::string& name, const char* what) {
        if (!aux.x_index(name)) throw ValidationError(std::string(what) + " variable \"" + name + "\" is not an auxiliary column");
        if (!survey.x_index(name)) throw ValidationError(std::string(what) + " variable \"" + name + "\" is not a survey column");
    };
    for (const auto& v : matching.variables) need_x(v, "matching");
    for (const auto& t : matching.transforms) {
        if (std::find(matching.variables.begin(), matching.variables.end(), t.variable) == matching.variables.end()) {
            throw ValidationError("transform names non-matching variable \"" + t.variable + "\"");
        }
    }
    for (const auto& [kind, vars] : estimation.auxiliary) {
        for (const auto& v : vars) {
            if (!aux.x_index(v)) throw ValidationError("estimator variable \"" + v + "\" is not an auxiliary column");
        }
    }
    if (estimation.response.empty()) throw ValidationError("config lacks estimation.response");
    if (!survey.y_index(estimation.response)) {
        throw ValidationError("response \"" + estimation.response + "\" is not a survey response column");
    }
    for (const auto& v : diagnostic_variables) {
        if (!survey.y_index(v)) throw ValidationError("diagnostic variable \"" + v + "\" is not a survey response column");
    }
}

}  // namespace simpop
