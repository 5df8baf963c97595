#pragma once

#include <functional>
#include <string>
#include <vector>

#include "isolate/core.hpp"
#include "isolate/distance.hpp"

namespace isolate {

/// Who is eligible, at which event indices, and how sets are shaped.
/// Treated and control predicates must never both hold on the same view.
struct EligibilitySpec {
  std::function<bool(const HistoryView&)> treated_predicate;
  std::function<bool(const HistoryView&)> control_predicate;
  std::vector<std::string> exact_variables;
  // Resolves an exact variable to its categorical value on a view. Defaults
  // to fixed-covariate lookup when empty.
  std::function<std::string(const HistoryView&, const std::string&)>
      exact_resolver;
  int set_size = 2;  // J: one treated plus J-1 controls
  std::vector<int> k_range;
};

struct UnmatchedTreated {
  std::string subject_id;
  int event_index = 0;
  std::string reason;
};

struct DesignConfigEcho {
  int set_size = 0;
  std::vector<int> k_range;
  std::vector<std::string> exact_variables;
  std::vector<std::string> distance_covariates;
  bool penalty_for_unresolvable = false;
};

struct MatchDesign {
  std::vector<MatchedSet> sets;
  std::vector<UnmatchedTreated> unmatched_treated;
  DesignConfigEcho config_echo;
};

/// Optimal 1:(J-1) matching within one stratum: picks the largest number of
/// fully matched treated units, minimizing the total treated-to-control
/// distance, via min-cost flow (source -> treated, capacity J-1; treated ->
/// control, capacity 1; control -> sink, capacity 1). When controls are too
/// scarce to match every treated unit, the matched subset is chosen exactly
/// by enumeration while the search stays small; beyond that a deterministic
/// relaxed-flow ranking picks the subset (documented as heuristic).
///
/// Distances are scaled to integers by 1e6 (round half to even) for exact
/// flow arithmetic. Ties are broken by lexicographic subject id.
/// Throws InfeasibleStratum when treated units exist but none can be
/// matched. Returned sets carry only membership and distances; event index
/// and stratum key are the caller's to fill.
std::vector<MatchedSet> optimal_stratum_match(const DistanceMatrix& D, int J);

/// Exhaustive reference implementation of the same contract. Throws
/// TooLarge when the candidate-partition count exceeds 1e7.
std::vector<MatchedSet> brute_force_stratum_match(const DistanceMatrix& D,
                                                  int J);

/// Rolls forward over elig.k_range, forming risk sets of the not-yet-matched
/// at each event index, grouping them into exact-match strata, solving each
/// stratum optimally, and removing matched subjects from all later risk
/// sets. Deterministic given the cohort and spec. `n_threads` 0 means use
/// ISOLATE_THREADS or the hardware parallelism; strata within one event
/// index are solved in parallel, event indices strictly in order.
MatchDesign build_risk_set_match(const std::vector<SubjectHistory>& cohort,
                                 const EligibilitySpec& elig,
                                 const DistanceSpec& dist, int n_threads = 0);

/// Sum of total_distance over sets, accumulated in set order.
double design_objective(const std::vector<MatchedSet>& sets);

/// Number of worker threads implied by `requested` (0 = ISOLATE_THREADS env
/// var if set, else hardware parallelism).
int effective_thread_count(int requested);

}  // namespace isolate
