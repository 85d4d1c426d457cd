#pragma once

#include "simpop/datamodel.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace simpop {

// Synthetic stand-in for a forest inventory: a pixel population with four
// remotely sensed variables and two responses, clusters nested in domains.
//
// Domains sit along a gradient in canopy cover and elevation: domain
// d = 0..D-1 has location L_d = separation (d - (D-1)/2), and each unit
// independent latents u_v ~ N(0, 1):
//
//   tcc  = 100 logistic(0.25 (L_d + u_tcc)), strata are equal-probability bins of L_d + u_tcc
//   elev = 2500 + 200 (L_d + u_elev)
//   tri  = 5 exp(0.4 u_tri)                    (right skewed)
//   ndvi = 0.9 - exp(-2 + 0.3 u_ndvi)          (left skewed)
//   BA   = beta0 + beta_tcc tcc + beta_tri tri + beta_elev elev / 100 + v_d + s_d sigma_e e
//   DRYBIO = BA (2.2 + 0.2 e')
//
// BA is floored at 0.5 and then set to zero with the domain's zero share.
// Domain noise multipliers s_d and zero shares are spread evenly over their
// ranges and share one seeded ordering along the gradient, chosen so that
// nearby domains are unrelated.
struct FixtureSpec {
    std::int64_t units = 100000;
    std::int64_t clusters = 500;
    int domains = 10;
    int strata = 2;
    std::uint64_t seed = 20240607;

    double beta0 = 20.0;
    double beta_tcc = 0.3;
    double beta_tri = 3.0;
    double beta_elev = 0.3;
    double separation = 2.5;
    double sigma_v = 5.0;
    double sigma_e = 8.0;
    double noise_min = 0.4;
    double noise_max = 2.0;
    double zero_min = 0.0;
    double zero_max = 0.5;
    double out_of_scope = 0.0;  // share of units flagged out of scope

    void check() const;
    nlohmann::json to_json() const;
    static FixtureSpec from_json(const nlohmann::json& j);
};

struct Fixture {
    AuxiliaryFrame aux;
    SurveyFrame survey;
    // Responses of every unit under the generative model, aligned with aux rows.
    std::vector<std::string> y_names;
    RowMatrixXd y;
    std::vector<double> zero_share;  // by domain code
};

Fixture make_fixture(const FixtureSpec& spec);

// Writes auxiliary.csv, survey.csv, generative.csv (aux plus true
// responses), truth.csv and a ready-to-run config.json.
void write_fixture(const Fixture& fixture, const FixtureSpec& spec, const std::filesystem::path& dir, int replicates = 2500);

// The generative population in population-file layout (no donors).
ArtificialPopulation generative_population(const Fixture& fixture);

}  // namespace simpop
