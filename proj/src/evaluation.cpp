#include "simpop/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

namespace simpop {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) return kNaN;
    double s = 0.0;
    for (double x : v) s += x;
    const double m = s / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2) return kNaN;
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0.0) || !(sbb > 0.0)) return kNaN;
    return sab / std::sqrt(saa * sbb);
}

void require_provenance(const ArtificialPopulation& pop) {
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        if (pop.aux.in_scope[i] && pop.donor_rank[i] < 1) {
            throw ProvenanceMissing("unit " + std::to_string(pop.aux.unit_id[i]) + " has no recorded donor");
        }
    }
}

}  // namespace

double relative_bias(std::span<const double> estimates, double truth, const std::string& domain) {
    if (truth == 0.0) throw ZeroTruth(domain);
    if (estimates.empty()) throw ValidationError("relative bias needs at least one replicate");
    return (mean_of(estimates) - truth) / truth;
}

double empirical_mse(std::span<const double> estimates, double truth) {
    if (estimates.empty()) throw ValidationError("MSE needs at least one replicate");
    double s = 0.0;
    for (double e : estimates) s += (e - truth) * (e - truth);
    return s / static_cast<double>(estimates.size());
}

double mse_ratio(std::span<const double> estimates, std::span<const double> mse_hats, double truth) {
    const double mse = empirical_mse(estimates, truth);
    if (!(mse > 0.0)) throw DegenerateMSE("empirical MSE is zero");
    return mean_of(mse_hats) / mse;
}

double ci_coverage(std::span<const double> lows, std::span<const double> highs, double truth) {
    if (lows.empty()) throw ValidationError("coverage needs at least one replicate");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < lows.size(); ++i) {
        if (lows[i] <= truth && truth <= highs[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(lows.size());
}

std::vector<MetricRow> summarize_metrics(const std::vector<EstimateRecord>& records, const Eigen::VectorXd& truth,
                                         const Eigen::VectorXd& zero_share) {
    struct Cell {
        std::vector<double> est, mse, lo, hi;
        int seen = 0;
    };
    std::map<std::pair<int, int>, Cell> cells;
    for (const auto& r : records) {
        auto& c = cells[{static_cast<int>(r.estimator), r.domain}];
        ++c.seen;
        if (!r.has_estimate() || !r.has_mse()) continue;
        c.est.push_back(r.estimate);
        c.mse.push_back(r.mse_hat);
        c.lo.push_back(r.ci_low);
        c.hi.push_back(r.ci_high);
    }
    std::vector<MetricRow> rows;
    rows.reserve(cells.size());
    for (const auto& [key, c] : cells) {
        MetricRow m;
        m.estimator = static_cast<EstimatorKind>(key.first);
        m.domain = key.second;
        m.K = static_cast<int>(c.est.size());
        m.excluded = c.seen - m.K;
        m.truth = truth(m.domain);
        m.zero_proportion = zero_share(m.domain);
        if (m.K == 0) {
            m.mean_estimate = m.bias_se = m.relative_bias = m.empirical_mse = m.mean_mse_hat = m.mse_ratio = m.coverage_95 = kNaN;
            rows.push_back(m);
            continue;
        }
        m.mean_estimate = mean_of(c.est);
        m.bias_se = sample_sd(c.est) / std::sqrt(static_cast<double>(m.K));
        m.relative_bias = m.truth != 0.0 ? relative_bias(c.est, m.truth) : kNaN;
        m.empirical_mse = empirical_mse(c.est, m.truth);
        m.mean_mse_hat = mean_of(c.mse);
        m.mse_ratio = m.empirical_mse > 0.0 ? m.mean_mse_hat / m.empirical_mse : kNaN;
        m.coverage_95 = ci_coverage(c.lo, c.hi, m.truth);
        rows.push_back(m);
    }
    return rows;
}

double mse_ratio_zero_slope(const std::vector<MetricRow>& rows, EstimatorKind estimator) {
    std::vector<double> x, y;
    for (const auto& r : rows) {
        if (r.estimator != estimator || !std::isfinite(r.mse_ratio) || !std::isfinite(r.zero_proportion)) continue;
        x.push_back(r.zero_proportion);
        y.push_back(r.mse_ratio);
    }
    if (x.size() < 2) return kNaN;
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : kNaN;
}

std::string emit_metrics(const std::vector<MetricRow>& rows, const std::vector<std::string>& domains,
                         const std::string& comment) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "estimator,domain_id,K,excluded,truth,mean_estimate,bias_se,relative_bias,empirical_mse,mean_mse_hat,"
           "mse_ratio,coverage_95,zero_proportion\n";
    for (const auto& r : rows) {
        out += to_string(r.estimator) + "," + domains[static_cast<std::size_t>(r.domain)] + "," + std::to_string(r.K) + "," +
               std::to_string(r.excluded);
        for (double v : {r.truth, r.mean_estimate, r.bias_se, r.relative_bias, r.empirical_mse, r.mean_mse_hat, r.mse_ratio,
                         r.coverage_95, r.zero_proportion}) {
            out += "," + csv::format(v);
        }
        out += '\n';
    }
    return out;
}

Ecdf Ecdf::from_values(std::vector<double> values) {
    Ecdf e;
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
        e.value.push_back(values[i]);
        e.cumulative.push_back(static_cast<double>(i + 1) / n);
    }
    return e;
}

double Ecdf::at(double x) const {
    auto it = std::upper_bound(value.begin(), value.end(), x);
    if (it == value.begin()) return 0.0;
    return cumulative[static_cast<std::size_t>(it - value.begin() - 1)];
}

double ks_distance(const Ecdf& a, const Ecdf& b) {
    double d = 0.0;
    for (double v : a.value) d = std::max(d, std::abs(a.at(v) - b.at(v)));
    for (double v : b.value) d = std::max(d, std::abs(a.at(v) - b.at(v)));
    return d;
}

MarginalPair diag_marginals(const SurveyFrame& survey, const ArtificialPopulation& pop, const std::string& variable) {
    const auto si = survey.y_index(variable);
    const auto pi = pop.y_index(variable);
    if (!si || !pi) throw MissingVariable(variable);
    MarginalPair m;
    m.variable = variable;
    std::vector<double> orig(static_cast<std::size_t>(survey.y.rows()));
    for (Eigen::Index i = 0; i < survey.y.rows(); ++i) orig[static_cast<std::size_t>(i)] = survey.y(i, static_cast<Eigen::Index>(*si));
    std::vector<double> imp;
    imp.reserve(pop.rows());
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        if (pop.aux.in_scope[i]) imp.push_back(pop.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*pi)));
    }
    m.original = Ecdf::from_values(std::move(orig));
    m.imputed = Ecdf::from_values(std::move(imp));
    return m;
}

DomainSdTable diag_domain_sd(const SurveyFrame& survey, const ArtificialPopulation& pop, const std::string& variable) {
    const auto si = survey.y_index(variable);
    const auto pi = pop.y_index(variable);
    if (!si || !pi) throw MissingVariable(variable);
    DomainSdTable t;
    t.variable = variable;
    std::set<std::string, decltype(&level_less)> names(&level_less);
    names.insert(survey.domain.levels.begin(), survey.domain.levels.end());
    names.insert(pop.aux.domain.levels.begin(), pop.aux.domain.levels.end());
    t.domains.assign(names.begin(), names.end());
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < t.domains.size(); ++i) slot.emplace(t.domains[i], i);

    std::vector<std::vector<double>> orig(t.domains.size()), imp(t.domains.size());
    for (std::size_t i = 0; i < survey.rows(); ++i) {
        orig[slot.at(survey.domain.label(i))].push_back(survey.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*si)));
    }
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        if (!pop.aux.in_scope[i]) continue;
        imp[slot.at(pop.aux.domain.label(i))].push_back(pop.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(*pi)));
    }
    std::vector<double> a, b;
    for (std::size_t d = 0; d < t.domains.size(); ++d) {
        t.n_original.push_back(static_cast<std::int64_t>(orig[d].size()));
        t.sd_original.push_back(sample_sd(orig[d]));
        t.sd_imputed.push_back(sample_sd(imp[d]));
        if (std::isfinite(t.sd_original.back()) && std::isfinite(t.sd_imputed.back())) {
            a.push_back(t.sd_original.back());
            b.push_back(t.sd_imputed.back());
        }
    }
    t.correlation = pearson(a, b);
    return t;
}

DonorUsage diag_donor_usage(const ArtificialPopulation& pop, const SurveyFrame& survey) {
    require_provenance(pop);
    DonorUsage u;
    u.plot_id = survey.plot_id;
    u.pools_available = pop.pool_width > 0 && pop.pools.size() == pop.rows() * static_cast<std::size_t>(pop.pool_width);
    for (std::size_t i = 0; i < survey.rows(); ++i) u.stratum.push_back(survey.stratum.label(i));
    u.used_count.assign(survey.rows(), 0);
    u.pool_count.assign(survey.rows(), u.pools_available ? 0 : -1);
    std::unordered_map<UnitId, std::size_t> row_of;
    for (std::size_t i = 0; i < survey.rows(); ++i) row_of.emplace(survey.plot_id[i], i);

    for (std::size_t i = 0; i < pop.rows(); ++i) {
        if (!pop.aux.in_scope[i]) continue;
        auto it = row_of.find(pop.donor_id[i]);
        if (it == row_of.end()) throw ProvenanceMissing("donor " + std::to_string(pop.donor_id[i]) + " not in survey");
        ++u.used_count[it->second];
        if (u.pools_available) {
            for (int j = 0; j < pop.pool_width; ++j) {
                const UnitId id = pop.pools[i * static_cast<std::size_t>(pop.pool_width) + static_cast<std::size_t>(j)];
                ++u.pool_count[row_of.at(id)];
            }
        }
    }
    if (u.pools_available) {
        for (std::size_t i = 0; i < survey.rows(); ++i) {
            if (u.pool_count[i] == 0) u.never_in_pool.push_back(survey.plot_id[i]);
            else if (u.used_count[i] == 0) u.pooled_never_used.push_back(survey.plot_id[i]);
        }
    }
    return u;
}

DonorCrosstab diag_donor_crosstab(const ArtificialPopulation& pop, const SurveyFrame& survey) {
    require_provenance(pop);
    DonorCrosstab c;
    c.donor_domains = survey.domain.levels;
    c.recipient_domains = pop.aux.domain.levels;
    c.counts = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
        static_cast<Eigen::Index>(c.donor_domains.size()), static_cast<Eigen::Index>(c.recipient_domains.size()));
    std::unordered_map<UnitId, std::int32_t> donor_domain;
    for (std::size_t i = 0; i < survey.rows(); ++i) donor_domain.emplace(survey.plot_id[i], survey.domain.codes[i]);
    std::int64_t same = 0;
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        if (!pop.aux.in_scope[i]) continue;
        auto it = donor_domain.find(pop.donor_id[i]);
        if (it == donor_domain.end()) throw ProvenanceMissing("donor " + std::to_string(pop.donor_id[i]) + " not in survey");
        const auto rd = pop.aux.domain.codes[i];
        ++c.counts(it->second, rd);
        ++c.total;
        if (c.donor_domains[static_cast<std::size_t>(it->second)] == c.recipient_domains[static_cast<std::size_t>(rd)]) ++same;
    }
    c.same_domain_share = c.total > 0 ? static_cast<double>(same) / static_cast<double>(c.total) : kNaN;
    return c;
}

std::string emit(const MarginalPair& m) {
    std::string out = "source,value,cumulative\n";
    for (std::size_t i = 0; i < m.original.value.size(); ++i) {
        out += "original," + csv::format(m.original.value[i]) + "," + csv::format(m.original.cumulative[i]) + "\n";
    }
    for (std::size_t i = 0; i < m.imputed.value.size(); ++i) {
        out += "imputed," + csv::format(m.imputed.value[i]) + "," + csv::format(m.imputed.cumulative[i]) + "\n";
    }
    return out;
}

std::string emit(const DomainSdTable& t) {
    std::string out = "# correlation=" + csv::format(t.correlation) + "\n";
    out += "domain_id,n_original,sd_original,sd_imputed\n";
    for (std::size_t d = 0; d < t.domains.size(); ++d) {
        out += t.domains[d] + "," + std::to_string(t.n_original[d]) + "," + csv::format(t.sd_original[d]) + "," +
               csv::format(t.sd_imputed[d]) + "\n";
    }
    return out;
}

std::string emit(const DonorUsage& u) {
    std::string out = "plot_id,stratum,pool_count,used_count\n";
    for (std::size_t i = 0; i < u.plot_id.size(); ++i) {
        out += std::to_string(u.plot_id[i]) + "," + u.stratum[i] + "," +
               (u.pools_available ? std::to_string(u.pool_count[i]) : std::string()) + "," + std::to_string(u.used_count[i]) +
               "\n";
    }
    return out;
}

std::string emit(const DonorCrosstab& c) {
    std::string out = "# same_domain_share=" + csv::format(c.same_domain_share) + "\n";
    out += "donor_domain,recipient_domain,count\n";
    for (Eigen::Index a = 0; a < c.counts.rows(); ++a) {
        for (Eigen::Index b = 0; b < c.counts.cols(); ++b) {
            out += c.donor_domains[static_cast<std::size_t>(a)] + "," + c.recipient_domains[static_cast<std::size_t>(b)] + "," +
                   std::to_string(c.counts(a, b)) + "\n";
        }
    }
    return out;
}

}  // namespace simpop
