#include "simpop/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace simpop {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(x.cols()) = x;
    return out;
}

Eigen::VectorXd with_intercept(const Eigen::VectorXd& x) {
    Eigen::VectorXd out(x.size() + 1);
    out(0) = 1.0;
    out.tail(x.size()) = x;
    return out;
}

// Inverse of a symmetric positive-definite matrix; throws when singular.
Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any()) {
        throw RankDeficientDesign(std::string(what) + " is singular");
    }
    Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    if (!inv.allFinite()) throw RankDeficientDesign(std::string(what) + " is singular");
    return inv;
}

void require_full_rank(const Eigen::MatrixXd& X) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
        throw RankDeficientDesign("design matrix has rank " + std::to_string(qr.rank()) + " < " + std::to_string(X.cols()));
    }
}

// Matrices of the form alpha I + beta J (J the all-ones matrix) for one
// domain block of size n. They are closed under multiplication, so every
// block-diagonal quantity of the nested-error model reduces to two numbers.
struct Block {
    double alpha;
    double beta;
};

Block mul(Block x, Block y, double n) { return {x.alpha * y.alpha, x.alpha * y.beta + x.beta * y.alpha + n * x.beta * y.beta}; }
double trace(Block x, double n) { return n * (x.alpha + x.beta); }

// X_d' (alpha I + beta J) X_d
Eigen::MatrixXd sandwich(Block x, const Eigen::MatrixXd& xtx, const Eigen::VectorXd& xsum) {
    return x.alpha * xtx + x.beta * xsum * xsum.transpose();
}

struct NestedErrorState {
    Eigen::MatrixXd q_inv;
    Eigen::VectorXd beta;
    Eigen::Vector2d score;  // (sigma2_v, sigma2_e)
    Eigen::Matrix2d info;     // REML: tr(P V_a P V_b) / 2
    Eigen::Matrix2d info_ml;  // tr(V^-1 V_a V^-1 V_b) / 2
};

NestedErrorState evaluate_nested(const NestedErrorStats& st, double sv, double se) {
    const int p = st.p;
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xvy = Eigen::VectorXd::Zero(p);
    const Block unit{1.0, 0.0}, ones{0.0, 1.0};
    std::vector<Block> s_blocks(st.n.size());
    for (std::size_t d = 0; d < st.n.size(); ++d) {
        const double n = st.n[d];
        if (n <= 0) continue;
        const Block s{1.0 / se, -sv / (se * (se + n * sv))};
        s_blocks[d] = s;
        q += sandwich(s, st.xtx[d], st.xsum[d]);
        xvy += s.alpha * st.xty[d] + s.beta * st.xsum[d] * st.ysum[d];
    }

    NestedErrorState out;
    out.q_inv = spd_inverse(q, "X' V^-1 X");
    out.beta = out.q_inv * xvy;

    // Index 0 is the area-effect component (J blocks), 1 the unit error (I).
    const std::array<Block, 2> comp{ones, unit};
    std::array<double, 2> tr_sa{0, 0}, quad{0, 0};
    std::array<Eigen::MatrixXd, 2> m_a{Eigen::MatrixXd::Zero(p, p), Eigen::MatrixXd::Zero(p, p)};
    double tr_sasb[2][2] = {{0, 0}, {0, 0}};
    Eigen::MatrixXd n_ab[2][2];
    for (auto& row : n_ab)
        for (auto& m : row) m = Eigen::MatrixXd::Zero(p, p);

    for (std::size_t d = 0; d < st.n.size(); ++d) {
        const double n = st.n[d];
        if (n <= 0) continue;
        const Block s = s_blocks[d];
        const double ee = st.yty[d] - 2.0 * out.beta.dot(st.xty[d]) + out.beta.dot(st.xtx[d] * out.beta);
        const double esum = st.ysum[d] - st.xsum[d].dot(out.beta);
        // r = S e; r'r and (1'r)^2
        const Block s2 = mul(s, s, n);
        quad[1] += s2.alpha * ee + s2.beta * esum * esum;
        const double one_s = s.alpha + n * s.beta;
        quad[0] += one_s * one_s * esum * esum;

        std::array<Block, 2> sa{mul(s, comp[0], n), mul(s, comp[1], n)};
        for (int a = 0; a < 2; ++a) {
            tr_sa[a] += trace(sa[a], n);
            m_a[a] += sandwich(mul(sa[a], s, n), st.xtx[d], st.xsum[d]);
            for (int b = 0; b < 2; ++b) {
                const Block sasb = mul(sa[a], sa[b], n);
                tr_sasb[a][b] += trace(sasb, n);
                n_ab[a][b] += sandwich(mul(sasb, s, n), st.xtx[d], st.xsum[d]);
            }
        }
    }

    const Eigen::MatrixXd& c = out.q_inv;
    std::array<Eigen::MatrixXd, 2> cm{c * m_a[0], c * m_a[1]};
    for (int a = 0; a < 2; ++a) {
        const double tr_pa = tr_sa[a] - cm[a].trace();
        out.score(a) = -0.5 * tr_pa + 0.5 * quad[a];
        for (int b = 0; b < 2; ++b) {
            const double tr_papb = tr_sasb[a][b] - 2.0 * (c * n_ab[a][b]).trace() + (cm[a] * cm[b]).trace();
            out.info(a, b) = 0.5 * tr_papb;
            out.info_ml(a, b) = 0.5 * tr_sasb[a][b];
        }
    }
    return out;
}

struct MomentStart {
    double sv;
    double se;
};

// Henderson method III (fitting of constants) for the nested-error model.
MomentStart henderson(const NestedErrorStats& st) {
    const int p = st.p;
    const double n_total = st.total();
    Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd xty = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd between = Eigen::MatrixXd::Zero(p, p);
    double yty = 0.0;
    int domains = 0;
    for (std::size_t d = 0; d < st.n.size(); ++d) {
        if (st.n[d] <= 0) continue;
        ++domains;
        xtx += st.xtx[d];
        xty += st.xty[d];
        yty += st.yty[d];
        between += st.xsum[d] * st.xsum[d].transpose();
    }
    const Eigen::MatrixXd xtx_inv = spd_inverse(xtx, "X'X");
    const Eigen::VectorXd beta = xtx_inv * xty;
    const double sse = std::max(0.0, yty - beta.dot(xty));
    const double ols_var = sse / (n_total - p);

    // Within-domain regression on the slope columns.
    const int q = p - 1;
    Eigen::MatrixXd wxx = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd wxy = Eigen::VectorXd::Zero(q);
    double wyy = 0.0;
    for (std::size_t d = 0; d < st.n.size(); ++d) {
        const double n = st.n[d];
        if (n <= 0) continue;
        const Eigen::VectorXd xs = st.xsum[d].tail(q);
        wxx += st.xtx[d].bottomRightCorner(q, q) - xs * xs.transpose() / n;
        wxy += st.xty[d].tail(q) - xs * st.ysum[d] / n;
        wyy += st.yty[d] - st.ysum[d] * st.ysum[d] / n;
    }
    const double df = n_total - domains - q;
    double sse_within = wyy;
    bool ok = df > 0;
    if (ok && q > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(wxx);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 1e-12 * wxx.diagonal().maxCoeff()).any()) {
            ok = false;
        } else {
            sse_within = wyy - wxy.dot(ldlt.solve(wxy));
        }
    }
    if (!ok || !(sse_within > 0.0)) return {0.0, ols_var > 0 ? ols_var : 1.0};
    const double se = sse_within / df;
    const double n_star = n_total - (xtx_inv * between).trace();
    const double sv = n_star > 0 ? std::max(0.0, (sse - (n_total - p) * se) / n_star) : 0.0;
    return {sv, se};
}

bool close_enough(double next, double prev, double tol) {
    return std::abs(next - prev) <= tol * std::max(std::abs(next), std::abs(prev));
}

}  // namespace

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::ht: return "ht";
        case EstimatorKind::greg: return "greg";
        case EstimatorKind::fh: return "fh";
        case EstimatorKind::bhf: return "bhf";
    }
    return "ht";
}

EstimatorKind parse_estimator(const std::string& name) {
    if (name == "ht") return EstimatorKind::ht;
    if (name == "greg") return EstimatorKind::greg;
    if (name == "fh") return EstimatorKind::fh;
    if (name == "bhf") return EstimatorKind::bhf;
    throw ValidationError("unknown estimator \"" + name + "\"");
}

namespace {
constexpr std::array<std::pair<unsigned, const char*>, 5> kFlagNames{{
    {flags::domain_too_small, "domain_too_small"},
    {flags::out_of_sample, "out_of_sample"},
    {flags::non_convergence, "non_convergence"},
    {flags::no_sample, "no_sample"},
    {flags::fit_failed, "fit_failed"},
}};
}  // namespace

std::string format_flags(unsigned f) {
    std::string out;
    for (const auto& [bit, name] : kFlagNames) {
        if (!(f & bit)) continue;
        if (!out.empty()) out += '|';
        out += name;
    }
    return out;
}

unsigned parse_flags(const std::string& text) {
    unsigned f = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t bar = text.find('|', start);
        if (bar == std::string::npos) bar = text.size();
        const std::string token = text.substr(start, bar - start);
        bool known = false;
        for (const auto& [bit, name] : kFlagNames) {
            if (token == name) {
                f |= bit;
                known = true;
            }
        }
        if (!known) throw ValidationError("unknown flag \"" + token + "\"");
        start = bar + 1;
    }
    return f;
}

bool EstimateRecord::has_estimate() const { return std::isfinite(estimate); }
bool EstimateRecord::has_mse() const { return std::isfinite(mse_hat); }

EstimateRecord make_record(EstimatorKind kind, int domain, int rep_index, std::int64_t n_d, double estimate,
                           double mse_hat, unsigned f) {
    EstimateRecord r;
    r.estimator = kind;
    r.domain = domain;
    r.rep_index = rep_index;
    r.n_d = n_d;
    r.estimate = estimate;
    r.mse_hat = mse_hat;
    r.flags = f;
    if (std::isfinite(estimate) && std::isfinite(mse_hat)) {
        const double half = kNormalQuantile975 * std::sqrt(mse_hat);
        r.ci_low = estimate - half;
        r.ci_high = estimate + half;
    } else {
        r.ci_low = r.ci_high = kNaN;
    }
    return r;
}

PopulationMoments population_moments(const ArtificialPopulation& pop, const std::vector<std::string>& variables) {
    PopulationMoments m;
    m.domains = pop.aux.domain.levels;
    m.variables = variables;
    const auto d = static_cast<Eigen::Index>(m.domains.size());
    const auto p = static_cast<Eigen::Index>(variables.size());
    std::vector<Eigen::Index> cols;
    for (const auto& v : variables) {
        auto idx = pop.aux.x_index(v);
        if (!idx) throw MissingVariable(v);
        cols.push_back(static_cast<Eigen::Index>(*idx));
    }
    m.count = Eigen::VectorXd::Zero(d);
    m.xbar = Eigen::MatrixXd::Zero(d, p);
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        if (!pop.aux.in_scope[i]) continue;
        const auto code = pop.aux.domain.codes[i];
        m.count(code) += 1.0;
        for (Eigen::Index j = 0; j < p; ++j) m.xbar(code, j) += pop.aux.x(static_cast<Eigen::Index>(i), cols[static_cast<std::size_t>(j)]);
    }
    for (Eigen::Index r = 0; r < d; ++r) {
        if (m.count(r) > 0) m.xbar.row(r) /= m.count(r);
    }
    return m;
}

DomainSample replicate_sample(const ArtificialPopulation& pop, const SampleReplicate& rep,
                              const std::vector<std::string>& variables, const std::string& response) {
    const auto yi = pop.y_index(response);
    if (!yi) throw MissingVariable(response);
    std::vector<Eigen::Index> cols;
    for (const auto& v : variables) {
        auto idx = pop.aux.x_index(v);
        if (!idx) throw MissingVariable(v);
        cols.push_back(static_cast<Eigen::Index>(*idx));
    }
    DomainSample s;
    s.domains = static_cast<int>(pop.aux.domain.levels.size());
    const auto n = static_cast<Eigen::Index>(rep.rows.size());
    s.domain.resize(n);
    s.x.resize(n, static_cast<Eigen::Index>(cols.size()));
    s.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = static_cast<Eigen::Index>(rep.rows[static_cast<std::size_t>(i)]);
        s.domain(i) = pop.aux.domain.codes[static_cast<std::size_t>(row)];
        for (std::size_t j = 0; j < cols.size(); ++j) s.x(i, static_cast<Eigen::Index>(j)) = pop.aux.x(row, cols[j]);
        s.y(i) = pop.y(row, static_cast<Eigen::Index>(*yi));
    }
    return s;
}

std::vector<EstimateRecord> ht_estimate(const DomainSample& sample, int rep_index) {
    std::vector<double> n(static_cast<std::size_t>(sample.domains), 0.0), sum(n.size(), 0.0), ss(n.size(), 0.0);
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        const auto d = static_cast<std::size_t>(sample.domain(i));
        n[d] += 1.0;
        sum[d] += sample.y(i);
    }
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        const auto d = static_cast<std::size_t>(sample.domain(i));
        const double dev = sample.y(i) - sum[d] / n[d];
        ss[d] += dev * dev;
    }
    std::vector<EstimateRecord> out;
    out.reserve(n.size());
    for (std::size_t d = 0; d < n.size(); ++d) {
        const auto nd = static_cast<std::int64_t>(n[d]);
        const int code = static_cast<int>(d);
        if (nd == 0) {
            out.push_back(make_record(EstimatorKind::ht, code, rep_index, 0, kNaN, kNaN, flags::no_sample));
        } else if (nd == 1) {
            out.push_back(make_record(EstimatorKind::ht, code, rep_index, 1, sum[d], kNaN, flags::domain_too_small));
        } else {
            const double var = ss[d] / (n[d] - 1.0);
            out.push_back(make_record(EstimatorKind::ht, code, rep_index, nd, sum[d] / n[d], var / n[d]));
        }
    }
    return out;
}

std::vector<EstimateRecord> greg_estimate(const DomainSample& sample, const PopulationMoments& moments, int rep_index) {
    const Eigen::MatrixXd X = with_intercept(sample.x);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < X.cols()) {
        throw RankDeficientDesign("GREG design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(X.cols()));
    }
    const Eigen::VectorXd beta = qr.solve(sample.y);
    const Eigen::VectorXd resid = sample.y - X * beta;

    const auto D = static_cast<std::size_t>(sample.domains);
    std::vector<double> n(D, 0.0), sum(D, 0.0), ss(D, 0.0);
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        const auto d = static_cast<std::size_t>(sample.domain(i));
        n[d] += 1.0;
        sum[d] += resid(i);
    }
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        const auto d = static_cast<std::size_t>(sample.domain(i));
        const double dev = resid(i) - sum[d] / n[d];
        ss[d] += dev * dev;
    }
    std::vector<EstimateRecord> out;
    out.reserve(D);
    for (std::size_t d = 0; d < D; ++d) {
        const int code = static_cast<int>(d);
        const auto nd = static_cast<std::int64_t>(n[d]);
        if (nd == 0) {
            out.push_back(make_record(EstimatorKind::greg, code, rep_index, 0, kNaN, kNaN, flags::no_sample));
            continue;
        }
        const double synthetic = with_intercept(Eigen::VectorXd(moments.xbar.row(code).transpose())).dot(beta);
        const double estimate = synthetic + sum[d] / n[d];
        if (nd == 1) {
            out.push_back(make_record(EstimatorKind::greg, code, rep_index, 1, estimate, kNaN, flags::domain_too_small));
        } else {
            out.push_back(make_record(EstimatorKind::greg, code, rep_index, nd, estimate, ss[d] / (n[d] - 1.0) / n[d]));
        }
    }
    return out;
}

MixedModelFit fit_fay_herriot(const Eigen::VectorXd& direct, const Eigen::VectorXd& psi, const Eigen::MatrixXd& X,
                              const RemlOptions& options) {
    const Eigen::Index m = direct.size();
    const Eigen::Index p = X.cols();
    if (m < p + 2) {
        throw TooFewDomains("Fay-Herriot needs at least " + std::to_string(p + 2) + " domains, got " + std::to_string(m));
    }
    if ((psi.array() <= 0.0).any()) throw ValidationError("sampling variances must be positive");
    require_full_rank(X);

    auto gls = [&](double sv, MixedModelFit& fit) {
        const Eigen::VectorXd vinv = (psi.array() + sv).inverse();
        const Eigen::MatrixXd w = vinv.asDiagonal() * X;
        fit.beta_cov = spd_inverse(X.transpose() * w, "X' V^-1 X");
        fit.beta = fit.beta_cov * (w.transpose() * direct);
        fit.sigma2_v = sv;
        fit.variance_cov = Eigen::MatrixXd::Constant(1, 1, 2.0 / vinv.array().square().sum());
    };

    MixedModelFit fit;
    double sv = 0.0;
    {
        std::vector<double> sorted(psi.data(), psi.data() + m);
        std::nth_element(sorted.begin(), sorted.begin() + m / 2, sorted.end());
        sv = sorted[static_cast<std::size_t>(m / 2)];
    }
    bool ok = false;
    for (int it = 1; it <= options.max_iterations; ++it) {
        const Eigen::VectorXd vinv = (psi.array() + sv).inverse();
        const Eigen::MatrixXd w = vinv.asDiagonal() * X;
        Eigen::MatrixXd c;
        try {
            c = spd_inverse(X.transpose() * w, "X' V^-1 X");
        } catch (const RankDeficientDesign&) {
            break;
        }
        Eigen::MatrixXd P = -w * c * w.transpose();
        P.diagonal() += vinv;
        const Eigen::VectorXd py = P * direct;
        const double score = -0.5 * P.trace() + 0.5 * py.squaredNorm();
        const double info = 0.5 * P.squaredNorm();
        if (!(info > 0.0) || !std::isfinite(score)) break;
        const double next = std::max(0.0, sv + score / info);
        fit.iterations = it;
        const bool done = close_enough(next, sv, options.tolerance);
        sv = next;
        if (done) {
            ok = true;
            break;
        }
    }

    if (ok) {
        fit.converged = true;
    } else {
        // Prasad-Rao moment estimator.
        const Eigen::MatrixXd xtx_inv = spd_inverse(X.transpose() * X, "X'X");
        const Eigen::VectorXd beta = xtx_inv * (X.transpose() * direct);
        const Eigen::VectorXd e = direct - X * beta;
        const Eigen::VectorXd h = (X * xtx_inv).cwiseProduct(X).rowwise().sum();
        sv = std::max(0.0, (e.squaredNorm() - (psi.array() * (1.0 - h.array())).sum()) / static_cast<double>(m - p));
        fit.fallback = true;
    }
    gls(sv, fit);
    return fit;
}

NestedErrorStats NestedErrorStats::from_sample(const DomainSample& sample) {
    NestedErrorStats st;
    const auto D = static_cast<std::size_t>(sample.domains);
    st.p = static_cast<int>(sample.x.cols()) + 1;
    st.n.assign(D, 0.0);
    st.xtx.assign(D, Eigen::MatrixXd::Zero(st.p, st.p));
    st.xsum.assign(D, Eigen::VectorXd::Zero(st.p));
    st.xty.assign(D, Eigen::VectorXd::Zero(st.p));
    st.ysum.assign(D, 0.0);
    st.yty.assign(D, 0.0);
    Eigen::VectorXd xi(st.p);
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        const auto d = static_cast<std::size_t>(sample.domain(i));
        xi(0) = 1.0;
        xi.tail(st.p - 1) = sample.x.row(i).transpose();
        const double y = sample.y(i);
        st.n[d] += 1.0;
        st.xtx[d].noalias() += xi * xi.transpose();
        st.xsum[d] += xi;
        st.xty[d] += xi * y;
        st.ysum[d] += y;
        st.yty[d] += y * y;
    }
    return st;
}

double NestedErrorStats::total() const {
    double t = 0.0;
    for (double v : n) t += v;
    return t;
}

MixedModelFit fit_nested_error(const NestedErrorStats& st, const RemlOptions& options) {
    const double n_total = st.total();
    const auto sampled = std::count_if(st.n.begin(), st.n.end(), [](double v) { return v > 0; });
    if (n_total < st.p + 2) {
        throw TooFewDomains("nested-error model needs at least " + std::to_string(st.p + 2) + " units");
    }
    if (sampled < 2) throw TooFewDomains("nested-error model needs at least two sampled domains");
    {
        Eigen::MatrixXd xtx = Eigen::MatrixXd::Zero(st.p, st.p);
        for (const auto& m : st.xtx) xtx += m;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xtx);
        if (qr.rank() < st.p) throw RankDeficientDesign("nested-error design is rank deficient");
    }

    const MomentStart start = henderson(st);
    double sv = start.sv > 0 ? start.sv : 0.05 * start.se;
    double se = start.se;

    MixedModelFit fit;
    bool ok = false;
    try {
        for (int it = 1; it <= options.max_iterations; ++it) {
            const NestedErrorState state = evaluate_nested(st, sv, se);
            const double det = state.info.determinant();
            if (!(det > 0.0) || !state.score.allFinite()) break;
            const Eigen::Vector2d step = state.info.inverse() * state.score;
            const double next_v = std::max(0.0, sv + step(0));
            double next_e = se + step(1);
            if (!(next_e > 0.0)) next_e = 0.5 * se;
            fit.iterations = it;
            const bool done = close_enough(next_v, sv, options.tolerance) && close_enough(next_e, se, options.tolerance);
            sv = next_v;
            se = next_e;
            if (!std::isfinite(sv) || !std::isfinite(se)) break;
            if (done) {
                ok = true;
                break;
            }
        }
    } catch (const RankDeficientDesign&) {
        ok = false;
    }
    if (!ok) {
        sv = start.sv;
        se = start.se;
        fit.fallback = true;
    }
    fit.converged = ok;

    const NestedErrorState final_state = evaluate_nested(st, sv, se);
    fit.beta = final_state.beta;
    fit.beta_cov = final_state.q_inv;
    fit.sigma2_v = sv;
    fit.sigma2_e = se;
    const double det = final_state.info_ml.determinant();
    fit.variance_cov = det > 0.0 ? Eigen::MatrixXd(final_state.info_ml.inverse()) : Eigen::MatrixXd::Zero(2, 2);
    return fit;
}

ModelEstimates fh_estimate(const std::vector<EstimateRecord>& direct, const PopulationMoments& moments, int rep_index,
                           const RemlOptions& options) {
    const auto D = static_cast<std::size_t>(moments.domain_count());
    std::vector<std::int64_t> n_d(D, 0);
    std::vector<int> used;
    for (const auto& r : direct) {
        n_d[static_cast<std::size_t>(r.domain)] = r.n_d;
        if (r.has_estimate() && r.has_mse() && r.mse_hat > 0.0 && r.n_d >= 2) used.push_back(r.domain);
    }
    std::sort(used.begin(), used.end());
    const auto m = static_cast<Eigen::Index>(used.size());
    const auto p = moments.xbar.cols() + 1;
    Eigen::VectorXd y(m), psi(m);
    Eigen::MatrixXd X(m, p);
    std::vector<const EstimateRecord*> by_domain(D, nullptr);
    for (const auto& r : direct) by_domain[static_cast<std::size_t>(r.domain)] = &r;
    for (Eigen::Index i = 0; i < m; ++i) {
        const auto* r = by_domain[static_cast<std::size_t>(used[static_cast<std::size_t>(i)])];
        y(i) = r->estimate;
        psi(i) = r->mse_hat;
        X.row(i) = with_intercept(Eigen::VectorXd(moments.xbar.row(r->domain).transpose())).transpose();
    }

    ModelEstimates out;
    out.fit = fit_fay_herriot(y, psi, X, options);
    const unsigned base = out.fit.converged ? 0u : flags::non_convergence;
    const double sv = out.fit.sigma2_v;
    const double v_sigma = out.fit.variance_cov(0, 0);
    out.gamma.assign(D, kNaN);
    std::vector<Eigen::Index> pos(D, -1);
    for (Eigen::Index i = 0; i < m; ++i) pos[static_cast<std::size_t>(used[static_cast<std::size_t>(i)])] = i;

    for (std::size_t d = 0; d < D; ++d) {
        const int code = static_cast<int>(d);
        const Eigen::VectorXd xd = with_intercept(Eigen::VectorXd(moments.xbar.row(code).transpose()));
        const double synthetic = xd.dot(out.fit.beta);
        const double g2_full = xd.dot(out.fit.beta_cov * xd);
        const Eigen::Index i = pos[d];
        if (i < 0) {
            out.records.push_back(make_record(EstimatorKind::fh, code, rep_index, n_d[d], synthetic, sv + g2_full,
                                              base | flags::out_of_sample));
            continue;
        }
        const double ps = psi(i);
        const double gamma = sv / (sv + ps);
        out.gamma[d] = gamma;
        const double estimate = gamma * y(i) + (1.0 - gamma) * synthetic;
        const double g1 = gamma * ps;
        const double g2 = (1.0 - gamma) * (1.0 - gamma) * g2_full;
        const double g3 = ps * ps * v_sigma / std::pow(sv + ps, 3);
        out.records.push_back(make_record(EstimatorKind::fh, code, rep_index, n_d[d], estimate, g1 + g2 + 2.0 * g3, base));
    }
    return out;
}

ModelEstimates bhf_estimate(const DomainSample& sample, const PopulationMoments& moments, int rep_index,
                            const RemlOptions& options) {
    const NestedErrorStats st = NestedErrorStats::from_sample(sample);
    ModelEstimates out;
    out.fit = fit_nested_error(st, options);
    const unsigned base = out.fit.converged ? 0u : flags::non_convergence;
    const double sv = out.fit.sigma2_v;
    const double se = out.fit.sigma2_e;
    const Eigen::MatrixXd& V = out.fit.variance_cov;
    const auto D = static_cast<std::size_t>(sample.domains);
    out.gamma.assign(D, kNaN);
    for (std::size_t d = 0; d < D; ++d) {
        const int code = static_cast<int>(d);
        const Eigen::VectorXd xd = with_intercept(Eigen::VectorXd(moments.xbar.row(code).transpose()));
        const double synthetic = xd.dot(out.fit.beta);
        const double n = st.n[d];
        if (n <= 0) {
            const double mse = sv + xd.dot(out.fit.beta_cov * xd);
            out.records.push_back(make_record(EstimatorKind::bhf, code, rep_index, 0, synthetic, mse, base | flags::out_of_sample));
            continue;
        }
        const double gamma = sv / (sv + se / n);
        out.gamma[d] = gamma;
        const Eigen::VectorXd xs = st.xsum[d] / n;
        const double ybar = st.ysum[d] / n;
        const double estimate = synthetic + gamma * (ybar - xs.dot(out.fit.beta));
        const double g1 = (1.0 - gamma) * sv;
        const Eigen::VectorXd a = xd - gamma * xs;
        const double g2 = a.dot(out.fit.beta_cov * a);
        const double g3 = (se * se * V(0, 0) + sv * sv * V(1, 1) - 2.0 * se * sv * V(0, 1)) /
                          (n * n * std::pow(sv + se / n, 3));
        out.records.push_back(make_record(EstimatorKind::bhf, code, rep_index, static_cast<std::int64_t>(n), estimate,
                                          g1 + g2 + 2.0 * g3, base));
    }
    return out;
}

std::string estimates_header() { return "rep_index,estimator,domain_id,n_d,estimate,mse_hat,ci_low,ci_high,flags\n"; }

std::string emit_record(const EstimateRecord& r, const std::vector<std::string>& domains) {
    std::string out = std::to_string(r.rep_index);
    out += ',';
    out += to_string(r.estimator);
    out += ',';
    out += domains[static_cast<std::size_t>(r.domain)];
    out += ',';
    out += std::to_string(r.n_d);
    for (double v : {r.estimate, r.mse_hat, r.ci_low, r.ci_high}) {
        out += ',';
        out += csv::format(v);
    }
    out += ',';
    out += format_flags(r.flags);
    out += '\n';
    return out;
}

std::string emit_estimates(const std::vector<EstimateRecord>& records, const std::vector<std::string>& domains,
                           const std::string& comment) {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += estimates_header();
    for (const auto& r : records) out += emit_record(r, domains);
    return out;
}

std::vector<EstimateRecord> parse_estimates(const csv::Table& table, const std::vector<std::string>& domains) {
    std::unordered_map<std::string, int> code;
    for (std::size_t i = 0; i < domains.size(); ++i) code.emplace(domains[i], static_cast<int>(i));
    const auto c_rep = table.require("rep_index");
    const auto c_est = table.require("estimator");
    const auto c_dom = table.require("domain_id");
    const auto c_n = table.require("n_d");
    const auto c_e = table.require("estimate");
    const auto c_m = table.require("mse_hat");
    const auto c_lo = table.require("ci_low");
    const auto c_hi = table.require("ci_high");
    const auto c_f = table.require("flags");
    std::vector<EstimateRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        const auto line = static_cast<std::int64_t>(r + 1);
        EstimateRecord rec;
        rec.rep_index = static_cast<int>(csv::parse_int(row[c_rep], line, "rep_index"));
        rec.estimator = parse_estimator(row[c_est]);
        auto it = code.find(row[c_dom]);
        if (it == code.end()) throw ValidationError("unknown domain \"" + row[c_dom] + "\" in estimates");
        rec.domain = it->second;
        rec.n_d = csv::parse_int(row[c_n], line, "n_d");
        rec.estimate = csv::parse_double(row[c_e], line, "estimate").value_or(kNaN);
        rec.mse_hat = csv::parse_double(row[c_m], line, "mse_hat").value_or(kNaN);
        rec.ci_low = csv::parse_double(row[c_lo], line, "ci_low").value_or(kNaN);
        rec.ci_high = csv::parse_double(row[c_hi], line, "ci_high").value_or(kNaN);
        rec.flags = parse_flags(row[c_f]);
        out.push_back(rec);
    }
    return out;
}

}  // namespace simpop
