#include "simpop/fixture.hpp"

#include "simpop/imputer.hpp"
#include "simpop/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace simpop {

namespace {

double round_to(double v, double scale) { return std::round(v * scale) / scale; }

// Index of the equal-probability bin of a standard normal value.
int normal_bin(double z, int bins) {
    const double u = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return std::min(bins - 1, static_cast<int>(u * bins));
}

// Sum of absolute autocorrelations at lags 1..3 of a sequence.
double short_lag_autocorrelation(const std::vector<int>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0, var = 0.0;
    for (int x : v) mean += x / n;
    for (int x : v) var += (x - mean) * (x - mean);
    double total = 0.0;
    for (std::size_t lag = 1; lag <= 3 && lag < v.size(); ++lag) {
        double c = 0.0;
        for (std::size_t i = 0; i + lag < v.size(); ++i) c += (v[i] - mean) * (v[i + lag] - mean);
        total += std::abs(c / var);
    }
    return total;
}

// Rank of each domain's level along the gradient: the seeded shuffle, out
// of 64 candidates, whose ranks are least autocorrelated between nearby
// domains.
std::vector<int> level_order(int n, Stream& rng) {
    std::vector<int> best;
    double best_score = 0.0;
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<int> v(static_cast<std::size_t>(n));
        std::iota(v.begin(), v.end(), 0);
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
        const double score = short_lag_autocorrelation(v);
        if (best.empty() || score < best_score) {
            best = std::move(v);
            best_score = score;
        }
    }
    return best;
}

double level(double lo, double hi, int rank, int n) { return n == 1 ? lo : lo + (hi - lo) * rank / (n - 1); }

}  // namespace

void FixtureSpec::check() const {
    if (units < 1 || clusters < 1 || domains < 1 || strata < 1) throw ValidationError("fixture sizes must be at least 1");
    if (clusters > units) throw ValidationError("fixture has more clusters than units");
    if (domains > clusters) throw ValidationError("fixture has more domains than clusters");
    for (double p : {zero_min, zero_max, out_of_scope}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("fixture probabilities must lie in [0, 1]");
    }
    if (zero_min > zero_max) throw ValidationError("fixture zero_min exceeds zero_max");
    if (separation < 0) throw ValidationError("fixture separation must be non-negative");
    if (sigma_v < 0 || sigma_e < 0 || noise_min < 0 || noise_max < noise_min) {
        throw ValidationError("fixture variance parameters must be non-negative");
    }
}

nlohmann::json FixtureSpec::to_json() const {
    return {{"units", units},       {"clusters", clusters},   {"domains", domains},     {"strata", strata},
            {"seed", seed},         {"beta0", beta0},         {"beta_tcc", beta_tcc},   {"beta_tri", beta_tri},
            {"beta_elev", beta_elev}, {"sigma_v", sigma_v},   {"sigma_e", sigma_e},
            {"noise_min", noise_min}, {"noise_max", noise_max}, {"zero_min", zero_min}, {"zero_max", zero_max},
            {"separation", separation}, {"out_of_scope", out_of_scope}};
}

FixtureSpec FixtureSpec::from_json(const nlohmann::json& j) {
    FixtureSpec s;
    try {
        s.units = j.value("units", s.units);
        s.clusters = j.value("clusters", s.clusters);
        s.domains = j.value("domains", s.domains);
        s.strata = j.value("strata", s.strata);
        s.seed = j.value("seed", s.seed);
        s.beta0 = j.value("beta0", s.beta0);
        s.beta_tcc = j.value("beta_tcc", s.beta_tcc);
        s.beta_tri = j.value("beta_tri", s.beta_tri);
        s.beta_elev = j.value("beta_elev", s.beta_elev);
        s.sigma_v = j.value("sigma_v", s.sigma_v);
        s.sigma_e = j.value("sigma_e", s.sigma_e);
        s.noise_min = j.value("noise_min", s.noise_min);
        s.noise_max = j.value("noise_max", s.noise_max);
        s.zero_min = j.value("zero_min", s.zero_min);
        s.zero_max = j.value("zero_max", s.zero_max);
        s.separation = j.value("separation", s.separation);
        s.out_of_scope = j.value("out_of_scope", s.out_of_scope);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed fixture spec: ") + e.what());
    }
    s.check();
    return s;
}

Fixture make_fixture(const FixtureSpec& spec) {
    spec.check();
    const auto n = static_cast<std::size_t>(spec.units);
    const int D = spec.domains;

    Stream domain_rng(spec.seed, StreamTag::fixture, 0, 1);
    std::vector<double> effect(static_cast<std::size_t>(D));
    for (auto& v : effect) v = spec.sigma_v * domain_rng.normal();
    std::vector<double> loc(static_cast<std::size_t>(D));
    for (int d = 0; d < D; ++d) loc[static_cast<std::size_t>(d)] = spec.separation * (d - 0.5 * (D - 1));
    const auto order = level_order(D, domain_rng);
    std::vector<double> noise, zero;
    for (int rank : order) {
        noise.push_back(level(spec.noise_min, spec.noise_max, rank, D));
        zero.push_back(level(spec.zero_min, spec.zero_max, rank, D));
    }
    double spread_sq = 0.0;
    for (double l : loc) spread_sq += l * l / D;
    const double tcc_scale = std::sqrt(1.0 + spread_sq);

    Fixture f;
    f.zero_share = zero;
    f.y_names = {"BA", "DRYBIO"};
    auto& a = f.aux;
    a.x_names = {"tcc", "elev", "tri", "ndvi"};
    a.has_in_scope_column = true;
    a.unit_id.resize(n);
    a.cluster_id.resize(n);
    a.in_scope.resize(n);
    a.x.resize(static_cast<Eigen::Index>(n), 4);
    f.y.resize(static_cast<Eigen::Index>(n), 2);
    std::vector<std::string> domain_labels(n), stratum_labels(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto cluster = static_cast<std::int64_t>(i * static_cast<std::size_t>(spec.clusters) / n);
        const int d = static_cast<int>(cluster * D / spec.clusters);
        Stream rng(spec.seed, StreamTag::fixture, i + 1, 0);

        const double l = loc[static_cast<std::size_t>(d)];
        const double z = l + rng.normal();
        const double tcc = round_to(100.0 / (1.0 + std::exp(-0.25 * z)), 1e3);
        const double elev = round_to(2500.0 + 200.0 * (l + rng.normal()), 1e3);
        const double tri = round_to(5.0 * std::exp(0.4 * rng.normal()), 1e3);
        const double ndvi = round_to(0.9 - std::exp(-2.0 + 0.3 * rng.normal()), 1e4);
        const bool scope = rng.uniform() >= spec.out_of_scope;

        double ba = spec.beta0 + spec.beta_tcc * tcc + spec.beta_tri * tri + spec.beta_elev * elev / 100.0 +
                    effect[static_cast<std::size_t>(d)] + noise[static_cast<std::size_t>(d)] * spec.sigma_e * rng.normal();
        ba = std::max(ba, 0.5);
        const double ratio = 2.2 + 0.2 * rng.normal();
        if (rng.uniform() < zero[static_cast<std::size_t>(d)]) ba = 0.0;
        ba = round_to(ba, 1e3);
        const double bio = round_to(std::max(ba * ratio, 0.0), 1e3);

        a.unit_id[i] = static_cast<UnitId>(i + 1);
        a.cluster_id[i] = cluster + 1;
        a.in_scope[i] = scope ? 1 : 0;
        a.x.row(r) << tcc, elev, tri, ndvi;
        domain_labels[i] = std::to_string(d + 1);
        stratum_labels[i] = std::to_string(normal_bin(z / tcc_scale, spec.strata) + 1);
        if (scope) {
            f.y.row(r) << ba, bio;
        } else {
            f.y.row(r).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    }
    a.domain = CategoryColumn::from_labels(domain_labels);
    a.stratum = CategoryColumn::from_labels(stratum_labels);

    // One in-scope unit per cluster, uniformly.
    std::vector<std::size_t> picks;
    std::size_t begin = 0;
    for (std::int64_t c = 0; c < spec.clusters; ++c) {
        std::size_t end = begin;
        std::vector<std::size_t> members;
        while (end < n && a.cluster_id[end] == c + 1) {
            if (a.in_scope[end]) members.push_back(end);
            ++end;
        }
        if (!members.empty()) {
            Stream rng(spec.seed, StreamTag::fixture, static_cast<std::uint64_t>(c + 1), 2);
            picks.push_back(members[rng.below(members.size())]);
        }
        begin = end;
    }

    auto& s = f.survey;
    s.x_names = a.x_names;
    s.y_names = f.y_names;
    s.x.resize(static_cast<Eigen::Index>(picks.size()), 4);
    s.y.resize(static_cast<Eigen::Index>(picks.size()), 2);
    std::vector<std::string> sd(picks.size()), ss(picks.size());
    for (std::size_t i = 0; i < picks.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(picks[i]);
        s.plot_id.push_back(a.unit_id[picks[i]]);
        sd[i] = a.domain.label(picks[i]);
        ss[i] = a.stratum.label(picks[i]);
        s.x.row(static_cast<Eigen::Index>(i)) = a.x.row(src);
        s.y.row(static_cast<Eigen::Index>(i)) = f.y.row(src);
    }
    s.domain = CategoryColumn::from_labels(sd);
    s.stratum = CategoryColumn::from_labels(ss);
    return f;
}

ArtificialPopulation generative_population(const Fixture& fixture) {
    ArtificialPopulation pop;
    pop.aux = fixture.aux;
    pop.aux.comments.clear();
    pop.y_names = fixture.y_names;
    pop.y = fixture.y;
    pop.donor_id.assign(pop.rows(), -1);
    pop.donor_rank.assign(pop.rows(), 0);
    return pop;
}

void write_fixture(const Fixture& fixture, const FixtureSpec& spec, const std::filesystem::path& dir, int replicates) {
    csv::write_file(dir / "auxiliary.csv", emit(fixture.aux));
    csv::write_file(dir / "survey.csv", emit(fixture.survey));
    const auto pop = generative_population(fixture);
    csv::write_file(dir / "generative.csv", emit(pop));
    csv::write_file(dir / "truth.csv", emit(domain_truth(pop)));

    nlohmann::ordered_json config;
    config["auxiliary"] = {{"path", "auxiliary.csv"}};
    config["survey"] = {{"path", "survey.csv"}, {"schema", {{"y", fixture.y_names}}}};
    config["matching"] = {{"variables", fixture.aux.x_names},
                          {"transforms",
                           {{{"variable", "tri"}, {"direction", "right"}, {"offset", 0}},
                            {{"variable", "ndvi"}, {"direction", "left"}, {"offset", 1}}}}};
    config["imputation"] = {{"method", "kbaabb"}, {"k", 10}, {"seed", spec.seed}};
    config["design"] = {{"replicates", replicates}, {"seed", spec.seed + 1}};
    config["estimation"] = {{"response", "BA"},
                            {"estimators", {"ht", "greg", "fh", "bhf"}},
                            {"auxiliary", {"tcc", "tri", "elev"}}};
    config["diagnostics"] = {{"variables", fixture.y_names}};
    config["sweep"] = {{"k", {1, 5, 10, 20, 50, 100}}};
    config["output"] = "out";
    config["fixture"] = spec.to_json();
    csv::write_file(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace simpop
