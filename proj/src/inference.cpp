#include "isolate/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <set>

namespace isolate {

namespace {

double psi_huber(double u, double cutoff) {
  if (u > 0) return std::min(u, cutoff);
  if (u < 0) return -std::min(-u, cutoff);
  return 0.0;
}

double median_of(std::vector<double> v) {
  const size_t n = v.size();
  std::sort(v.begin(), v.end());
  if (n == 0) return 0.0;
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Mean of the worst-case candidate that upweights the `a` largest of the
// descending-sorted scores by gamma. Summation runs left to right over the
// sorted scores so that equal-value candidates agree bitwise.
struct CandidateMoments {
  double mean;
  double variance;
};

CandidateMoments candidate_moments(const std::vector<double>& sorted_desc,
                                   int a, double gamma) {
  const int J = static_cast<int>(sorted_desc.size());
  const double denom = a * gamma + (J - a);
  double s1 = 0.0, s1sq = 0.0;
  for (int j = 0; j < a; ++j) {
    s1 += sorted_desc[j];
    s1sq += sorted_desc[j] * sorted_desc[j];
  }
  double s0 = 0.0, s0sq = 0.0;
  for (int j = a; j < J; ++j) {
    s0 += sorted_desc[j];
    s0sq += sorted_desc[j] * sorted_desc[j];
  }
  const double mean = (gamma * s1 + s0) / denom;
  const double second = (gamma * s1sq + s0sq) / denom;
  return {mean, second - mean * mean};
}

}  // namespace

double normal_upper_tail(double z) {
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

std::pair<double, double> worst_case_moments(const SetScore& score,
                                             const GammaLevel& gamma) {
  const int J = score.set_size();
  if (J < 2) throw DomainError("set scores need at least 2 members");
  std::vector<double> sorted = score.q;
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());

  double best_mean = -std::numeric_limits<double>::infinity();
  double best_var = 0.0;
  for (int a = 0; a <= J; ++a) {
    auto [mean, var] = candidate_moments(sorted, a, gamma.gamma);
    if (mean > best_mean) {
      best_mean = mean;
      best_var = var;
    } else if (mean == best_mean && var > best_var) {
      best_var = var;  // expectation first, then variance
    }
  }
  return {best_mean, best_var};
}

double max_pvalue(const std::vector<SetScore>& scores, const GammaLevel& gamma,
                  double observed_T) {
  if (scores.empty()) throw EmptyDesign("no matched sets to test");
  double mu = 0.0, nu = 0.0;
  for (const auto& s : scores) {
    auto [m, v] = worst_case_moments(s, gamma);
    mu += m;
    nu += v;
  }
  if (nu <= 0.0) return observed_T <= mu ? 1.0 : 0.0;
  return normal_upper_tail((observed_T - mu) / std::sqrt(nu));
}

double exact_max_pvalue(const std::vector<SetScore>& scores,
                        const GammaLevel& gamma, double observed_T) {
  if (scores.empty()) throw EmptyDesign("no matched sets to test");
  constexpr size_t kAtomCap = 1000000;
  constexpr double kGrid = 1e9;  // support rounded to 1e-9

  auto key_of = [](double x) { return static_cast<int64_t>(std::llround(x * kGrid)); };

  std::map<int64_t, double> dist{{0, 1.0}};
  for (const auto& s : scores) {
    const int J = s.set_size();
    std::vector<double> sorted = s.q;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());

    // Worst-case candidate with the same tie rule as worst_case_moments.
    int best_a = 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    double best_var = 0.0;
    for (int a = 0; a <= J; ++a) {
      auto [mean, var] = candidate_moments(sorted, a, gamma.gamma);
      if (mean > best_mean || (mean == best_mean && var > best_var)) {
        best_mean = mean;
        best_var = var;
        best_a = a;
      }
    }
    const double denom = best_a * gamma.gamma + (J - best_a);
    std::map<int64_t, double> atom;
    for (int j = 0; j < J; ++j) {
      const double w = (j < best_a ? gamma.gamma : 1.0) / denom;
      atom[key_of(sorted[j])] += w;
    }

    std::map<int64_t, double> next;
    for (const auto& [k1, p1] : dist) {
      for (const auto& [k2, p2] : atom) {
        next[k1 + k2] += p1 * p2;
        if (next.size() > kAtomCap) {
          throw TooLarge("worst-case convolution exceeds the atom cap");
        }
      }
    }
    dist.swap(next);
  }

  const int64_t threshold = key_of(observed_T);
  double tail = 0.0;
  for (auto it = dist.lower_bound(threshold); it != dist.end(); ++it) {
    tail += it->second;
  }
  return std::min(tail, 1.0);
}

double huber_scale(
    const MatchDesign& design,
    const std::function<double(const std::string&)>& outcome_of) {
  std::vector<double> gaps;
  for (const auto& s : design.sets) {
    const double yt = outcome_of(s.treated);
    for (const auto& c : s.controls) {
      gaps.push_back(std::abs(yt - outcome_of(c)));
    }
  }
  return median_of(std::move(gaps));
}

std::vector<SetScore> set_scores(
    const MatchDesign& design,
    const std::function<double(const std::string&)>& outcome_of,
    const StatisticSpec& spec, std::vector<std::string>* warnings) {
  if (spec.kind == StatisticKind::kHuberM && spec.huber_cutoff <= 0.0) {
    throw ConfigError("huber cutoff must be positive");
  }

  StatisticKind kind = spec.kind;
  double scale = 0.0;
  if (kind == StatisticKind::kHuberM) {
    scale = spec.scale ? *spec.scale : huber_scale(design, outcome_of);
    if (scale <= 0.0) {
      kind = StatisticKind::kMeanDifference;
      if (warnings) {
        warnings->push_back(
            "degenerate scale: median within-set |treated-control| gap is "
            "zero; falling back to the mean-difference statistic");
      }
    }
  }

  std::vector<SetScore> scores;
  scores.reserve(design.sets.size());
  for (const auto& set : design.sets) {
    const int J = set.set_size();
    std::vector<double> y;
    y.reserve(J);
    y.push_back(outcome_of(set.treated));
    for (const auto& c : set.controls) y.push_back(outcome_of(c));

    SetScore score;
    score.set_id = set.set_id;
    score.q.resize(J);
    if (kind == StatisticKind::kMeanDifference) {
      double total = 0.0;
      for (double v : y) total += v;
      for (int j = 0; j < J; ++j) {
        score.q[j] = y[j] - (total - y[j]) / (J - 1);
      }
    } else {
      for (int j = 0; j < J; ++j) {
        double acc = 0.0;
        for (int m = 0; m < J; ++m) {
          if (m == j) continue;
          acc += psi_huber((y[j] - y[m]) / scale, spec.huber_cutoff);
        }
        score.q[j] = acc / (J - 1);
      }
    }
    scores.push_back(std::move(score));
  }
  return scores;
}

double tobit_transform(double outcome, bool treated, double tau0) {
  if (treated) return outcome;
  return std::max(0.0, outcome - tau0);
}

namespace {

double observed_sum(const std::vector<SetScore>& scores) {
  double t = 0.0;
  for (const auto& s : scores) t += s.observed();
  return t;
}

// Outcome lookup with a MissingOutcome error path.
std::function<double(const std::string&)> outcome_fn(
    const std::vector<SubjectHistory>& cohort, const std::string& name) {
  auto table = std::make_shared<std::map<std::string, double>>();
  for (const auto& s : cohort) {
    auto it = s.outcomes.find(name);
    if (it != s.outcomes.end()) (*table)[s.subject_id] = it->second;
  }
  return [table, name](const std::string& id) {
    auto it = table->find(id);
    if (it == table->end()) {
      throw MissingOutcome("outcome '" + name + "' missing for subject '" +
                           id + "'");
    }
    return it->second;
  };
}

enum class WorstSide { kNull, kFavorable };

struct Engine {
  const MatchDesign* design;
  StatisticSpec spec;  // scale frozen by the caller
  Direction direction;

  // Direction-oriented scores of the adjusted outcome: the upper tail of
  // their sum is evidence for the configured alternative.
  std::vector<SetScore> oriented_scores(
      const std::function<double(const std::string&)>& adjusted) const {
    auto scores = set_scores(*design, adjusted, spec, nullptr);
    if (direction == Direction::kTreatedLower) {
      for (auto& s : scores) {
        for (auto& v : s.q) v = -v;
      }
    }
    return scores;
  }

  double pvalue(const std::function<double(const std::string&)>& adjusted,
                const GammaLevel& gamma) const {
    auto scores = oriented_scores(adjusted);
    return max_pvalue(scores, gamma, observed_sum(scores));
  }

  // T - sum of worst-case means; zero at the reported estimate.
  double estimating(const std::function<double(const std::string&)>& adjusted,
                    const GammaLevel& gamma, WorstSide side) const {
    auto scores = oriented_scores(adjusted);
    double t = observed_sum(scores);
    double mu = 0.0;
    for (auto& s : scores) {
      if (side == WorstSide::kFavorable) {
        for (auto& v : s.q) v = -v;
      }
      auto [m, v] = worst_case_moments(s, gamma);
      mu += (side == WorstSide::kFavorable) ? -m : m;
    }
    return t - mu;
  }
};

// Root of f on [lo, hi] by bisection to 1e-6 after doubling expansion.
double bisect_root(const std::function<double(double)>& f, double lo,
                   double hi, const char* what) {
  double flo = f(lo);
  double fhi = f(hi);
  for (int i = 0; i < 40 && flo * fhi > 0.0; ++i) {
    const double width = hi - lo;
    lo -= width;
    hi += width;
    flo = f(lo);
    fhi = f(hi);
  }
  if (flo * fhi > 0.0) {
    throw BracketFailure(std::string("no sign change for ") + what +
                         " in the expanded bracket");
  }
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    const double fmid = f(mid);
    if (fmid == 0.0) return mid;
    if ((fmid < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fmid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

SensitivityReport run_inference(
    const Engine& engine,
    const std::function<std::function<double(const std::string&)>(double)>&
        adjusted_at,
    const InferenceOptions& options, const std::string& model,
    const std::string& outcome_name, std::vector<std::string> warnings) {
  if (engine.design->sets.empty()) {
    throw EmptyDesign("inference requires at least one matched set");
  }
  SensitivityReport report;
  report.model = model;
  report.outcome = outcome_name;
  report.direction =
      engine.direction == Direction::kTreatedLower ? "less" : "greater";
  report.alpha = options.alpha;
  report.warnings = std::move(warnings);

  const int n_sets = static_cast<int>(engine.design->sets.size());
  auto null_outcome = adjusted_at(0.0);

  for (double g : options.gammas) {
    GammaLevel gamma(g);
    SensitivityRow row;
    row.gamma = g;
    row.max_pvalue = engine.pvalue(null_outcome, gamma);
    if (n_sets <= options.exact_max_sets) {
      auto scores = engine.oriented_scores(null_outcome);
      row.exact_max_pvalue =
          exact_max_pvalue(scores, gamma, observed_sum(scores));
    }
    try {
      row.ci_bound = bisect_root(
          [&](double theta) {
            return engine.pvalue(adjusted_at(theta), gamma) - options.alpha;
          },
          options.bracket_lo, options.bracket_hi, "the confidence bound");
    } catch (const BracketFailure&) {
      // The test rejects nowhere in the bracket: no finite bound (the
      // blank-cell case of a sensitivity table).
      row.ci_bound = std::numeric_limits<double>::quiet_NaN();
    }
    row.estimate_min = bisect_root(
        [&](double theta) {
          return engine.estimating(adjusted_at(theta), gamma, WorstSide::kNull);
        },
        options.bracket_lo, options.bracket_hi, "the point estimate");
    row.estimate_max = bisect_root(
        [&](double theta) {
          return engine.estimating(adjusted_at(theta), gamma,
                                   WorstSide::kFavorable);
        },
        options.bracket_lo, options.bracket_hi, "the point estimate");
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace

SensitivityReport infer_tobit(const MatchDesign& design,
                              const std::vector<SubjectHistory>& cohort,
                              const std::string& outcome,
                              const StatisticSpec& spec,
                              const InferenceOptions& options) {
  auto raw = outcome_fn(cohort, outcome);
  std::set<std::string> treated_ids;
  for (const auto& s : design.sets) treated_ids.insert(s.treated);
  for (const auto& s : design.sets) {
    if (raw(s.treated) < 0.0) {
      throw DomainError("tobit outcome must be nonnegative");
    }
    for (const auto& c : s.controls) {
      if (raw(c) < 0.0) throw DomainError("tobit outcome must be nonnegative");
    }
  }

  Engine engine{&design, spec, options.direction};
  std::vector<std::string> warnings;
  if (spec.kind == StatisticKind::kHuberM && !spec.scale) {
    engine.spec.scale = huber_scale(design, raw);  // frozen at tau0 = 0
    if (*engine.spec.scale <= 0.0) {
      warnings.push_back(
          "degenerate scale: median within-set |treated-control| gap is "
          "zero; falling back to the mean-difference statistic");
    }
  }

  auto adjusted_at = [&, raw](double tau0) {
    return std::function<double(const std::string&)>(
        [raw, tau0, &treated_ids](const std::string& id) {
          return tobit_transform(raw(id), treated_ids.count(id) > 0, tau0);
        });
  };
  return run_inference(engine, adjusted_at, options, "tobit", outcome,
                       std::move(warnings));
}

SensitivityReport infer_proportional(const MatchDesign& design,
                                     const std::vector<SubjectHistory>& cohort,
                                     const std::string& outcome,
                                     const std::string& dose,
                                     const StatisticSpec& spec,
                                     const InferenceOptions& options) {
  auto raw = outcome_fn(cohort, outcome);
  auto dose_of = outcome_fn(cohort, dose);

  // A treatment that does not move the dose leaves beta unidentified.
  {
    StatisticSpec mean_spec;
    auto dose_scores = set_scores(design, dose_of, mean_spec, nullptr);
    if (observed_sum(dose_scores) == 0.0) {
      throw ZeroDoseEffect("treated-minus-control dose effect is zero");
    }
  }

  Engine engine{&design, spec, options.direction};
  std::vector<std::string> warnings;
  if (spec.kind == StatisticKind::kHuberM && !spec.scale) {
    engine.spec.scale = huber_scale(design, raw);  // frozen at beta0 = 0
    if (*engine.spec.scale <= 0.0) {
      warnings.push_back(
          "degenerate scale: median within-set |treated-control| gap is "
          "zero; falling back to the mean-difference statistic");
    }
  }

  auto adjusted_at = [raw, dose_of](double beta0) {
    return std::function<double(const std::string&)>(
        [raw, dose_of, beta0](const std::string& id) {
          return raw(id) - beta0 * dose_of(id);
        });
  };
  return run_inference(engine, adjusted_at, options, "ratio", outcome,
                       std::move(warnings));
}

std::vector<AmplificationPoint> amplify(double gamma,
                                        const std::vector<double>& deltas) {
  if (!(gamma > 1.0)) {
    throw DomainError("amplification requires gamma > 1");
  }
  std::vector<AmplificationPoint> points;
  points.reserve(deltas.size());
  for (double delta : deltas) {
    if (!(delta > gamma)) {
      throw DomainError("amplification requires delta > gamma");
    }
    points.push_back({delta, (delta * gamma - 1.0) / (delta - gamma)});
  }
  return points;
}

std::vector<AmplificationPoint> amplify(double gamma, int n_points,
                                        double delta_max) {
  if (!(gamma > 1.0)) {
    throw DomainError("amplification requires gamma > 1");
  }
  if (n_points < 1 || !(delta_max > gamma)) {
    throw DomainError("amplification grid must lie above gamma");
  }
  std::vector<double> deltas;
  deltas.reserve(n_points);
  for (int i = 1; i <= n_points; ++i) {
    deltas.push_back(gamma + (delta_max - gamma) * i / n_points);
  }
  return amplify(gamma, deltas);
}

}  // namespace isolate
