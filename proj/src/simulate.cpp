#include "isolate/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "isolate/errors.hpp"

namespace isolate {

namespace {

// splitmix64: the per-subject stream generator. Fully specified arithmetic
// keeps cohorts byte-identical across platforms and thread splits.
struct Stream {
  uint64_t state;

  explicit Stream(uint64_t seed) : state(seed) {}

  uint64_t next() {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() {  // in [0, 1)
    return double(next() >> 11) * 0x1.0p-53;
  }

  double uniform_positive() {  // in (0, 1]
    return double((next() >> 11) + 1) * 0x1.0p-53;
  }

  double normal() {  // Box-Muller
    const double u1 = uniform_positive();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string padded_id(long index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%07ld", index);
  return buf;
}

void validate(const SimSpec& spec) {
  if (spec.n_subjects < 1) throw ConfigError("n_subjects must be positive");
  if (spec.n_states < 2) throw ConfigError("need at least two point states");
  if (spec.periods < 1) throw ConfigError("periods must be positive");
  if (spec.max_events < 0) throw ConfigError("max_events must be >= 0");
  if (spec.regions < 1) throw ConfigError("regions must be positive");
  if (spec.outcome_noise < 0) throw ConfigError("outcome_noise must be >= 0");
}

}  // namespace

SimResult simulate_cohort(const SimSpec& spec) {
  validate(spec);

  SimResult result;
  result.truth.seed = spec.seed;
  result.truth.gamma_true = spec.gamma_true;
  result.truth.effect_model = spec.effect_model;
  result.truth.effect_value = spec.effect_model == EffectModel::kTobit
                                  ? spec.tau
                                  : spec.effect_model == EffectModel::kProportional
                                        ? spec.beta
                                        : 0.0;
  result.cohort.reserve(spec.n_subjects);

  constexpr double kBaseAge = 14.0;  // event time = base age + period

  for (long i = 0; i < spec.n_subjects; ++i) {
    // Independent stream per subject, derived from (seed, index).
    Stream rng(spec.seed ^ (0x9e3779b97f4a7c15ULL * uint64_t(i + 1)));

    SubjectHistory subject;
    subject.subject_id = padded_id(i + 1);

    const double u_raw = rng.uniform();
    const double u = spec.u_binary ? (u_raw < 0.5 ? 0.0 : 1.0) : u_raw;

    subject.fixed_covariates["region"] =
        "r" + std::to_string(int(rng.next() % uint64_t(spec.regions)));

    // Total education correlates with the latent u; education credited at
    // each event is capped by age.
    const double total_education =
        std::floor(8.0 + 6.0 * u + 2.0 * rng.uniform());

    bool any_treated_event = false;
    const double event_p = logistic(spec.timing_logit0 + spec.timing_slope * u);
    const double treated_p = logistic(spec.state_logit0 + spec.gamma_true * u);
    for (int t = 1; t <= spec.periods; ++t) {
      if (spec.max_events > 0 && subject.n_events() >= spec.max_events) break;
      if (rng.uniform() >= event_p) continue;
      EventRecord ev;
      ev.event_index = subject.n_events() + 1;
      ev.event_time = kBaseAge + t;
      if (rng.uniform() < treated_p) {
        ev.state = 2;
        any_treated_event = true;
      } else if (spec.n_states == 2) {
        ev.state = 1;
      } else {
        // control states are uniform over the codes other than 2
        int pick = int(rng.next() % uint64_t(spec.n_states - 1));
        ev.state = pick == 0 ? 1 : pick + 2;
      }
      ev.tv_covariates["education"] =
          std::min(total_education, ev.event_time - 6.0);
      subject.events.push_back(std::move(ev));
    }

    SubjectTruth truth;
    truth.u = u;
    truth.treated = any_treated_event;
    truth.d_control = subject.n_events();
    truth.d_treated = truth.d_control + 1;  // a treated event adds one child
    truth.r_control = std::clamp(
        spec.outcome_base + spec.outcome_u_slope * u +
            spec.outcome_noise * rng.normal(),
        0.0, 1.0);
    switch (spec.effect_model) {
      case EffectModel::kTobit:
        truth.r_treated = std::max(0.0, truth.r_control - spec.tau);
        break;
      case EffectModel::kProportional:
        truth.r_treated =
            truth.r_control + spec.beta * (truth.d_treated - truth.d_control);
        break;
      case EffectModel::kNone:
        truth.r_treated = truth.r_control;
        break;
    }

    subject.outcomes["work_fraction"] =
        any_treated_event ? truth.r_treated : truth.r_control;
    subject.outcomes["n_children"] =
        double(any_treated_event ? truth.d_treated : truth.d_control);

    result.truth.subjects[subject.subject_id] = truth;
    result.cohort.push_back(std::move(subject));
  }
  return result;
}

}  // namespace isolate
