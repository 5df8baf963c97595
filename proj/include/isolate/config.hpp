#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "isolate/distance.hpp"
#include "isolate/inference.hpp"
#include "isolate/matching.hpp"
#include "isolate/simulate.hpp"

namespace isolate {

/// Derived categorical variable: bins a numeric value taken at the current
/// event (the k a view is truncated at). Source is "event_time" or a
/// time-varying covariate name. Breaks are ascending; value < breaks[0]
/// labels "b0", breaks[i-1] <= value < breaks[i] labels "b<i>", and so on.
struct DerivedCategorical {
  std::string source;
  std::vector<double> breaks;

  bool operator==(const DerivedCategorical&) const = default;
};

/// Everything a pipeline run needs, round-trippable through the flat
/// key-value config format.
struct RunConfig {
  // [match]
  int set_size = 6;
  std::vector<int> k_range{2};
  std::set<int> treated_states{2};
  std::set<int> control_states{1};
  // Excludes units whose history already contains a treated-state event.
  bool require_no_prior_treated_state = true;
  std::vector<std::string> exact_variables;
  std::map<std::string, DerivedCategorical> derived;
  std::vector<std::string> distance_covariates;
  bool penalty_unresolvable = false;

  // [statistic]
  StatisticKind statistic = StatisticKind::kMeanDifference;
  double huber_cutoff = 2.0;
  std::optional<double> scale;

  // [infer]
  std::vector<double> gammas{1.0};
  double alpha = 0.05;
  Direction direction = Direction::kTreatedLower;
  double bracket_lo = -1.0;
  double bracket_hi = 1.0;

  bool operator==(const RunConfig&) const = default;
};

/// Parse/serialize the "#isolate-config=1" format. Serialization is
/// canonical, and parse(serialize(c)) == c.
RunConfig parse_run_config(const std::string& text);
std::string serialize_run_config(const RunConfig& config);

SimSpec parse_sim_spec(const std::string& text);
std::string serialize_sim_spec(const SimSpec& spec);

/// The categorical resolver implied by the config: derived bins first, then
/// fixed covariates.
std::function<std::string(const HistoryView&, const std::string&)>
make_exact_resolver(const RunConfig& config);

/// Eligibility as configured: treated/control by the state at event k, both
/// optionally requiring no earlier treated-state event.
EligibilitySpec make_eligibility(const RunConfig& config);

DistanceSpec make_distance_spec(const RunConfig& config);
StatisticSpec make_statistic_spec(const RunConfig& config);
InferenceOptions make_inference_options(const RunConfig& config);

}  // namespace isolate
