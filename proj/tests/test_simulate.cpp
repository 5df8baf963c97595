#include <doctest.h>

#include <cmath>
#include <map>

#include "isolate/config.hpp"
#include "isolate/inference.hpp"
#include "isolate/io.hpp"
#include "isolate/matching.hpp"
#include "isolate/simulate.hpp"

using namespace isolate;

namespace {

RunConfig pipeline_config(int J) {
  RunConfig cfg;
  cfg.set_size = J;
  cfg.k_range = {2};
  cfg.treated_states = {2};
  cfg.control_states = {1};
  cfg.exact_variables = {"region", "age_cat"};
  cfg.derived["age_cat"] = {"event_time", {16, 17, 18, 19}};
  cfg.distance_covariates = {"event_time_1", "education_1", "education_2"};
  return cfg;
}

}  // namespace

TEST_CASE("same seed gives a byte-identical cohort") {
  SimSpec spec;
  spec.n_subjects = 500;
  spec.seed = 42;
  spec.effect_model = EffectModel::kTobit;
  spec.tau = 0.05;

  auto a = simulate_cohort(spec);
  auto b = simulate_cohort(spec);
  CHECK(write_cohort_csv(a.cohort) == write_cohort_csv(b.cohort));
  CHECK(write_truth_json(a.truth) == write_truth_json(b.truth));

  spec.seed = 43;
  auto c = simulate_cohort(spec);
  CHECK(write_cohort_csv(a.cohort) != write_cohort_csv(c.cohort));
}

TEST_CASE("the latent confounder never reaches the cohort") {
  SimSpec spec;
  spec.n_subjects = 200;
  spec.seed = 7;
  auto result = simulate_cohort(spec);
  for (const auto& s : result.cohort) {
    for (const auto& [name, value] : s.fixed_covariates) {
      CHECK(name == "region");
    }
    for (const auto& e : s.events) {
      for (const auto& [name, value] : e.tv_covariates) {
        CHECK(name == "education");
      }
    }
    for (const auto& [name, value] : s.outcomes) {
      CHECK((name == "work_fraction" || name == "n_children"));
    }
  }
  // but the truth side-file does carry it
  CHECK(result.truth.subjects.at("s0000001").u >= 0.0);
  CHECK(result.truth.subjects.at("s0000001").u <= 1.0);
}

TEST_CASE("binary-confounder design reproduces the configured odds ratio") {
  SimSpec spec;
  spec.n_subjects = 50000;
  spec.periods = 4;
  spec.seed = 2024;
  spec.u_binary = true;
  spec.gamma_true = std::log(2.0);

  auto result = simulate_cohort(spec);
  // count event states by the subject's latent group
  double n_treated_u1 = 0, n_control_u1 = 0, n_treated_u0 = 0, n_control_u0 = 0;
  for (const auto& s : result.cohort) {
    const double u = result.truth.subjects.at(s.subject_id).u;
    for (const auto& e : s.events) {
      if (e.state == 2) {
        (u > 0.5 ? n_treated_u1 : n_treated_u0) += 1;
      } else {
        (u > 0.5 ? n_control_u1 : n_control_u0) += 1;
      }
    }
  }
  const double odds_ratio =
      (n_treated_u1 / n_control_u1) / (n_treated_u0 / n_control_u0);
  CHECK(odds_ratio > 1.8);
  CHECK(odds_ratio < 2.2);
}

TEST_CASE("without differential bias the treated member is uniform in u") {
  SimSpec spec;
  spec.n_subjects = 20000;
  spec.periods = 6;
  spec.max_events = 2;
  spec.seed = 99;
  spec.gamma_true = 0.0;
  spec.state_logit0 = std::log(1.0 / 4.0);  // roughly one treated in five
  auto result = simulate_cohort(spec);

  auto cfg = pipeline_config(3);
  auto design = build_risk_set_match(result.cohort, make_eligibility(cfg),
                                     make_distance_spec(cfg));
  REQUIRE(design.sets.size() >= 500);

  // rank of the treated member's latent u within its set: uniform over
  // {0,1,2} when the differential bias is off
  std::map<int, long> counts;
  for (const auto& s : design.sets) {
    const double ut = result.truth.subjects.at(s.treated).u;
    int rank = 0;
    for (const auto& c : s.controls) {
      if (result.truth.subjects.at(c).u < ut) ++rank;
    }
    counts[rank] += 1;
  }
  const double n = double(design.sets.size());
  double chi2 = 0.0;
  for (int r = 0; r < 3; ++r) {
    const double expected = n / 3.0;
    const double diff = double(counts[r]) - expected;
    chi2 += diff * diff / expected;
  }
  CHECK(chi2 < 9.21);  // chi-square(2) at the 1% level
}

TEST_CASE("with differential bias the treated member skews toward high u") {
  SimSpec spec;
  spec.n_subjects = 20000;
  spec.periods = 6;
  spec.max_events = 2;
  spec.seed = 99;
  spec.gamma_true = 2.5;
  spec.state_logit0 = std::log(1.0 / 4.0);
  auto result = simulate_cohort(spec);

  auto cfg = pipeline_config(3);
  auto design = build_risk_set_match(result.cohort, make_eligibility(cfg),
                                     make_distance_spec(cfg));
  REQUIRE(design.sets.size() >= 500);

  long top = 0;
  for (const auto& s : design.sets) {
    const double ut = result.truth.subjects.at(s.treated).u;
    int rank = 0;
    for (const auto& c : s.controls) {
      if (result.truth.subjects.at(c).u < ut) ++rank;
    }
    if (rank == 2) ++top;
  }
  CHECK(double(top) / double(design.sets.size()) > 0.40);  // vs 1/3 under none
}

TEST_CASE("a null tobit effect is estimated near zero") {
  SimSpec spec;
  spec.n_subjects = 20000;
  spec.periods = 6;
  spec.max_events = 2;
  spec.seed = 11;
  spec.effect_model = EffectModel::kTobit;
  spec.tau = 0.0;
  auto result = simulate_cohort(spec);

  auto cfg = pipeline_config(3);
  auto design = build_risk_set_match(result.cohort, make_eligibility(cfg),
                                     make_distance_spec(cfg));
  REQUIRE(design.sets.size() >= 1000);

  InferenceOptions options;
  options.gammas = {1.0};
  StatisticSpec stat;
  auto report =
      infer_tobit(design, result.cohort, "work_fraction", stat, options);
  CHECK(std::abs(report.rows[0].estimate_min) < 0.01);
}

TEST_CASE("invalid sim specs are rejected") {
  SimSpec spec;
  spec.n_subjects = 0;
  CHECK_THROWS_AS(simulate_cohort(spec), ConfigError);
  spec.n_subjects = 10;
  spec.periods = 0;
  CHECK_THROWS_AS(simulate_cohort(spec), ConfigError);
  spec.periods = 5;
  spec.n_states = 1;
  CHECK_THROWS_AS(simulate_cohort(spec), ConfigError);
}
