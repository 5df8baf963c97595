#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "isolate/core.hpp"
#include "isolate/matching.hpp"

namespace isolate {

/// Sensitivity parameter bounding the within-set odds ratio of treatment
/// attributable to an unobserved covariate in [0,1]. gamma == 1 is the
/// randomization distribution (each member treated with probability 1/J).
struct GammaLevel {
  double gamma = 1.0;

  explicit GammaLevel(double g) : gamma(g) {
    if (!(g >= 1.0)) throw DomainError("gamma must be >= 1");
  }
};

/// Per-set statistic ingredients: q[j] is the statistic contribution if
/// member j were the treated unit. Member 0 is the actually treated unit.
struct SetScore {
  long set_id = 0;
  std::vector<double> q;

  int set_size() const { return static_cast<int>(q.size()); }
  double observed() const { return q.front(); }
};

enum class StatisticKind { kMeanDifference, kHuberM };

struct StatisticSpec {
  StatisticKind kind = StatisticKind::kMeanDifference;
  double huber_cutoff = 2.0;  // in multiples of the scale
  // Median absolute treated-vs-control within-set difference over the whole
  // design. Computed from the unadjusted outcomes and frozen when empty.
  std::optional<double> scale;
};

/// One (Delta, Lambda) reading of a Gamma value: Delta relates the
/// unobserved covariate to the outcome, Lambda to the treatment, with
/// Gamma = (Delta*Lambda + 1) / (Delta + Lambda).
struct AmplificationPoint {
  double delta = 0.0;
  double lambda = 0.0;
};

struct SensitivityRow {
  double gamma = 1.0;
  double max_pvalue = 1.0;
  // One-sided confidence bound; NaN when the test rejects nowhere in the
  // bracket (the blank cell of a sensitivity table).
  double ci_bound = 0.0;
  // Point-estimate interval under biases up to gamma: estimate_min is the
  // least-favorable (attenuated toward zero) solution, estimate_max the
  // most favorable. They coincide at gamma == 1.
  double estimate_min = 0.0;
  double estimate_max = 0.0;
  std::optional<double> exact_max_pvalue;  // set when the convolution engages
};

struct SensitivityReport {
  std::string model;          // "tobit" | "ratio"
  std::string outcome;
  std::string direction;      // "less" | "greater"
  double alpha = 0.05;
  std::vector<SensitivityRow> rows;
  std::vector<std::string> warnings;
};

enum class Direction { kTreatedLower, kTreatedHigher };

struct InferenceOptions {
  std::vector<double> gammas{1.0};
  double alpha = 0.05;
  Direction direction = Direction::kTreatedLower;
  double bracket_lo = -1.0;
  double bracket_hi = 1.0;
  // Exact convolution is reported alongside the normal bound whenever the
  // design has at most this many sets.
  int exact_max_sets = 14;
};

/// Per-set scores for the configured statistic. Mean difference:
/// q_j = y_j - mean of the other members. Huber M: q_j is the average of
/// psi((y_j - y_m)/scale) over the other members, psi(u) =
/// sign(u)*min(|u|, cutoff). A zero scale falls back to the mean difference
/// and records a warning in `warnings` when provided.
std::vector<SetScore> set_scores(
    const MatchDesign& design,
    const std::function<double(const std::string&)>& outcome_of,
    const StatisticSpec& spec, std::vector<std::string>* warnings = nullptr);

/// Median over all sets and controls of |y_treated - y_control|, the scale
/// used by the Huber statistic.
double huber_scale(const MatchDesign& design,
                   const std::function<double(const std::string&)>& outcome_of);

/// Worst-case mean and variance of one set's contribution under biases up
/// to gamma: over binary confounder assignments, the candidate giving
/// weight gamma to the a largest scores (a = 0..J) is evaluated; the mean
/// is maximized first, then the variance among mean-maximizers.
std::pair<double, double> worst_case_moments(const SetScore& score,
                                             const GammaLevel& gamma);

/// Upper bound on the one-sided (upper-tail) p-value of observed_T against
/// the hypothesis of no effect, by normal approximation to the sum of
/// worst-case set contributions. observed_T is the sum over sets of the
/// treated member's score.
double max_pvalue(const std::vector<SetScore>& scores, const GammaLevel& gamma,
                  double observed_T);

/// Exact upper tail of the separable worst-case distribution, by
/// convolution across sets with support rounded to 1e-9. Throws TooLarge
/// when the convolution exceeds 1e6 atoms. This is the tail of the specific
/// distribution attaining the per-set worst-case moments, an asymptotically
/// correct stand-in for the global maximum.
double exact_max_pvalue(const std::vector<SetScore>& scores,
                        const GammaLevel& gamma, double observed_T);

/// Tobit adjustment: controls have the hypothesized effect removed,
/// max(0, R - tau0); treated values pass through.
double tobit_transform(double outcome, bool treated, double tau0);

/// Sensitivity analysis for the Tobit effect tau on a nonnegative outcome:
/// p-value bounds for H0: tau=0, one-sided CI bound and point-estimate
/// interval at each gamma, all by inverting the no-effect test on
/// tobit-adjusted outcomes.
SensitivityReport infer_tobit(const MatchDesign& design,
                              const std::vector<SubjectHistory>& cohort,
                              const std::string& outcome,
                              const StatisticSpec& spec,
                              const InferenceOptions& options);

/// Sensitivity analysis for the proportional effect beta of the dose on the
/// outcome (effect ratio at gamma == 1): H0: beta=beta0 is the no-effect
/// test on R - beta0*D.
SensitivityReport infer_proportional(const MatchDesign& design,
                                     const std::vector<SubjectHistory>& cohort,
                                     const std::string& outcome,
                                     const std::string& dose,
                                     const StatisticSpec& spec,
                                     const InferenceOptions& options);

/// Points (Delta, Lambda) on the amplification curve of gamma, sampled on a
/// grid of Delta > gamma: Lambda = (Delta*gamma - 1)/(Delta - gamma).
/// Throws DomainError for gamma <= 1 or a requested Delta <= gamma.
std::vector<AmplificationPoint> amplify(double gamma,
                                        const std::vector<double>& deltas);
std::vector<AmplificationPoint> amplify(double gamma, int n_points = 20,
                                        double delta_max = 10.0);

/// Upper tail of the standard normal distribution.
double normal_upper_tail(double z);

}  // namespace isolate
