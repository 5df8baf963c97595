#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "isolate/core.hpp"

namespace isolate {

enum class EffectModel { kNone, kTobit, kProportional };

/// Generator for synthetic longitudinal cohorts with a latent confounder u
/// that always biases event timing, optionally biases which of the two
/// comparison states occurs (gamma_true), and a known treatment effect on
/// the outcomes.
struct SimSpec {
  long n_subjects = 1000;
  int n_states = 2;     // point states 1..K; state 2 is the treated state
  int periods = 10;     // discrete hazard periods
  int max_events = 0;   // 0 = unlimited
  uint64_t seed = 1;

  // Per-period event hazard: logistic(timing_logit0 + timing_slope * u).
  double timing_logit0 = -1.0;
  double timing_slope = 1.5;

  // Given an event: treated state with log-odds state_logit0 + gamma_true*u.
  double state_logit0 = -1.6094379124341003;  // log(1/5): one in six at u=0
  double gamma_true = 0.0;
  bool u_binary = false;  // draw u from {0,1} instead of uniform [0,1]

  EffectModel effect_model = EffectModel::kNone;
  double tau = 0.0;   // tobit: r_T = max(0, r_C - tau)
  double beta = 0.0;  // proportional: r_T = r_C + beta * (d_T - d_C)

  // Control-potential outcome: base + u_slope*u + noise*N(0,1), clamped to
  // [0,1]. The latent u confounds both timing and outcome level.
  double outcome_base = 0.55;
  double outcome_u_slope = -0.35;
  double outcome_noise = 0.15;

  int regions = 8;  // fixed covariate "region" with this many levels
};

/// Counterfactual bookkeeping for oracle checks; never part of the cohort.
struct SubjectTruth {
  double u = 0.0;
  double r_control = 0.0;
  double r_treated = 0.0;
  int d_control = 0;
  int d_treated = 0;
  bool treated = false;  // a treated-state event occurred
};

struct SimTruth {
  uint64_t seed = 0;
  double gamma_true = 0.0;
  EffectModel effect_model = EffectModel::kNone;
  double effect_value = 0.0;
  std::map<std::string, SubjectTruth> subjects;
};

struct SimResult {
  std::vector<SubjectHistory> cohort;
  SimTruth truth;
};

/// Deterministic under the seed: subjects draw from independent
/// counter-based streams, so the cohort is byte-identical however
/// generation is split.
SimResult simulate_cohort(const SimSpec& spec);

}  // namespace isolate
