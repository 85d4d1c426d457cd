#include "oracles/oracles.hpp"
#include "simpop/fixture.hpp"
#include "simpop/imputer.hpp"
#include "support/gen.hpp"

#include <doctest.h>

#include <cmath>
#include <unordered_map>

using namespace simpop;

namespace {

MatchingSpec matching() { return {{"tcc", "elev", "tri", "ndvi"}, {{"tri", Skew::right, 0.0}, {"ndvi", Skew::left, 1.0}}}; }

FixtureSpec small_spec() {
    FixtureSpec s;
    s.units = 6000;
    s.clusters = 120;
    s.domains = 4;
    s.strata = 2;
    s.out_of_scope = 0.05;
    return s;
}

}  // namespace

TEST_CASE("geometric selection weights") {
    const auto w = selection_weights(10);
    REQUIRE(w.w.size() == 10);
    CHECK(w.w[0] == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
    for (int j = 1; j < 9; ++j) CHECK(w.w[static_cast<std::size_t>(j)] == doctest::Approx(w.w[0] * std::exp(-j)).epsilon(1e-14));
    CHECK(w.w[9] == doctest::Approx(std::exp(-9.0)).epsilon(1e-6));
    double sum = 0.0;
    for (double v : w.w) sum += v;
    CHECK(sum == 1.0);
    CHECK(selection_weights(1).w == std::vector<double>{1.0});
    CHECK_THROWS_AS(selection_weights(0), ValidationError);

    gen::for_all(51, 50, [](gen::Gen& g, int) {
        const int k = g.integer(1, 200);
        for (const auto& sw : {selection_weights(k), uniform_weights(k)}) {
            double s = 0.0;
            for (double v : sw.w) {
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(s == 1.0);
        }
    });
}

TEST_CASE("imputation config checks") {
    CHECK_THROWS_AS((ImputationConfig{ImputationMethod::single_nn, 5, 1}.check()), ValidationError);
    CHECK_THROWS_AS((ImputationConfig{ImputationMethod::kbaabb, 0, 1}.check()), ValidationError);
    CHECK_NOTHROW((ImputationConfig{ImputationMethod::single_nn, 1, 1}.check()));
}

TEST_CASE("select_donor follows the weights") {
    std::vector<Neighbor<double>> nb;
    for (int j = 0; j < 5; ++j) nb.push_back({100 + j, static_cast<double>(j)});
    const auto w = selection_weights(5);
    std::vector<double> counts(5, 0.0);
    for (int i = 0; i < 50000; ++i) {
        Stream rng(9, StreamTag::impute, static_cast<std::uint64_t>(i));
        const auto c = select_donor(nb, w, rng);
        CHECK(c.donor_id == 99 + c.rank);
        counts[static_cast<std::size_t>(c.rank - 1)] += 1.0;
    }
    CHECK(oracle::chi_square_statistic(counts, w.w) < oracle::chi_square_critical_001(4));
    Stream rng(9, StreamTag::impute, 0);
    CHECK_THROWS_AS(select_donor(std::span(nb).first(3), w, rng), LengthMismatch);
}

TEST_CASE("imputation stays in stratum, donates whole response rows, and records provenance") {
    const auto fx = make_fixture(small_spec());
    const auto m = matching();
    const auto scaling = fit_matching_scaling(fx.aux, m);
    const auto pop = generate_population(fx.aux, fx.survey, {ImputationMethod::kbaabb, 10, 77}, scaling, m, {1, true});

    std::unordered_map<UnitId, std::size_t> survey_row;
    for (std::size_t i = 0; i < fx.survey.rows(); ++i) survey_row[fx.survey.plot_id[i]] = i;
    for (std::size_t i = 0; i < pop.rows(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        if (!fx.aux.in_scope[i]) {
            CHECK(pop.donor_id[i] == -1);
            CHECK(pop.donor_rank[i] == 0);
            CHECK(std::isnan(pop.y(r, 0)));
            continue;
        }
        const auto s = survey_row.at(pop.donor_id[i]);
        CHECK(fx.survey.stratum.label(s) == fx.aux.stratum.label(i));
        CHECK(pop.y.row(r) == fx.survey.y.row(static_cast<Eigen::Index>(s)));
        CHECK(pop.donor_rank[i] >= 1);
        CHECK(pop.donor_rank[i] <= 10);
        CHECK(pop.pools[i * 10 + static_cast<std::size_t>(pop.donor_rank[i] - 1)] == pop.donor_id[i]);
    }
    CHECK(pop.provenance.weights == selection_weights(10).w);
}

TEST_CASE("donor pools equal brute-force neighbours in scaled space") {
    const auto fx = make_fixture(small_spec());
    const auto m = matching();
    const auto scaling = fit_matching_scaling(fx.aux, m);
    const auto pop = generate_population(fx.aux, fx.survey, {ImputationMethod::uniform_knn, 5, 3}, scaling, m, {1, true});
    const auto donors = apply_scaling(apply_transforms(matching_features(fx.survey, m.variables), m.transforms), scaling);
    const auto recips = apply_scaling(apply_transforms(matching_features(fx.aux, m.variables), m.transforms), scaling);
    for (std::size_t i = 0; i < pop.rows(); i += 97) {
        if (!fx.aux.in_scope[i]) continue;
        const auto& level = fx.aux.stratum.label(i);
        std::vector<Eigen::Index> rows;
        std::vector<UnitId> ids;
        for (std::size_t s = 0; s < fx.survey.rows(); ++s) {
            if (fx.survey.stratum.label(s) != level) continue;
            rows.push_back(static_cast<Eigen::Index>(s));
            ids.push_back(fx.survey.plot_id[s]);
        }
        RowMatrixXd pts(static_cast<Eigen::Index>(rows.size()), 4);
        for (std::size_t s = 0; s < rows.size(); ++s) pts.row(static_cast<Eigen::Index>(s)) = donors.values.row(rows[s]);
        const Eigen::RowVectorXd q = recips.values.row(static_cast<Eigen::Index>(i));
        const auto brute = brute_force_knn<double>(pts, ids, std::span<const double>(q.data(), 4), 5);
        for (int j = 0; j < 5; ++j) CHECK(pop.pools[i * 5 + static_cast<std::size_t>(j)] == brute.ranked[static_cast<std::size_t>(j)].donor_id);
    }
}

TEST_CASE("output does not depend on the worker count") {
    const auto fx = make_fixture(small_spec());
    const auto m = matching();
    const auto scaling = fit_matching_scaling(fx.aux, m);
    const ImputationConfig cfg{ImputationMethod::kbaabb, 10, 5};
    const auto one = emit(generate_population(fx.aux, fx.survey, cfg, scaling, m, {1, false}));
    CHECK(one == emit(generate_population(fx.aux, fx.survey, cfg, scaling, m, {3, false})));
    CHECK(one == emit(generate_population(fx.aux, fx.survey, cfg, scaling, m, {8, false})));
}

TEST_CASE("uniform k = 1 is single nearest neighbour") {
    const auto fx = make_fixture(small_spec());
    const auto m = matching();
    const auto scaling = fit_matching_scaling(fx.aux, m);
    const auto a = generate_population(fx.aux, fx.survey, {ImputationMethod::uniform_knn, 1, 5}, scaling, m);
    const auto b = generate_population(fx.aux, fx.survey, {ImputationMethod::single_nn, 1, 99}, scaling, m);
    CHECK(a.donor_id == b.donor_id);
    CHECK(a.donor_rank == b.donor_rank);
}

TEST_CASE("domain truth is the in-scope mean") {
    const auto fx = make_fixture(small_spec());
    const auto pop = generative_population(fx);
    const auto t = domain_truth(pop);
    for (std::size_t d = 0; d < t.domains.size(); ++d) {
        double sum = 0.0, zeros = 0.0, n = 0.0;
        for (std::size_t i = 0; i < pop.rows(); ++i) {
            if (!pop.aux.in_scope[i] || pop.aux.domain.label(i) != t.domains[d]) continue;
            n += 1.0;
            sum += pop.y(static_cast<Eigen::Index>(i), 0);
            zeros += pop.y(static_cast<Eigen::Index>(i), 0) == 0.0;
        }
        CHECK(t.count[d] == static_cast<std::int64_t>(n));
        CHECK(t.mean(static_cast<Eigen::Index>(d), 0) == doctest::Approx(sum / n).epsilon(1e-13));
        CHECK(t.zero_share(static_cast<Eigen::Index>(d), 0) == doctest::Approx(zeros / n).epsilon(1e-13));
    }
}
