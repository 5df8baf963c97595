#pragma once

#include <optional>
#include <string>
#include <vector>

#include "isolate/core.hpp"

namespace isolate {

// Numeric history covariates are named "<base>_<j>" where j is a 1-based
// event index: "event_time_<j>" is event j's time, any other base is looked
// up among the time-varying covariates recorded at event j.

/// Split "<base>_<j>" into its base and event index; nullopt when the name
/// does not end in "_<positive integer>".
std::optional<std::pair<std::string, int>> parse_event_suffix(
    const std::string& name);

/// Resolve a numeric history covariate on a view, or nullopt when the view
/// cannot supply it (event beyond k, or unknown time-varying covariate).
std::optional<double> try_resolve_history_covariate(const HistoryView& view,
                                                    const std::string& name);

/// Resolving variant that throws UnresolvableCovariate.
double resolve_history_covariate(const HistoryView& view,
                                 const std::string& name);

/// Subset of `names` whose event suffix is <= k. Names referencing events a
/// view at k does not yet have are dropped; names without a parsable suffix
/// are kept (they will fail resolution later if truly unknown).
std::vector<std::string> covariates_available_at(
    const std::vector<std::string>& names, int k);

}  // namespace isolate
