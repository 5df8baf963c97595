#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "isolate/core.hpp"
#include "isolate/matching.hpp"

namespace isolate {

/// One row of the covariate-balance table. Categorical variables get one
/// row per (category, k) with counts and percents; numeric history
/// covariates get one row per k with means. k == 0 pools all event indices.
struct BalanceRow {
  std::string variable;
  std::string category;  // empty for numeric rows
  int event_index = 0;   // 0 = pooled over k
  long treated_count = 0;
  long control_count = 0;
  double treated_value = 0.0;  // percent for categorical, mean for numeric
  double control_value = 0.0;
  double std_difference = 0.0;
};

struct BalanceTable {
  std::vector<BalanceRow> rows;
};

/// Variables are fixed covariates (categorical), derived categoricals
/// supplied through `exact_resolver`, or numeric history covariate names
/// ("<base>_<j>"). Standardized difference uses the pooled-arm variance:
/// (mean_T - mean_C) / sqrt((s2_T + s2_C)/2). Exactly matched categoricals
/// are verified to balance perfectly, not just reported.
BalanceTable balance_table(
    const MatchDesign& design, const std::vector<SubjectHistory>& cohort,
    const std::vector<std::string>& variables,
    const std::function<std::string(const HistoryView&, const std::string&)>&
        exact_resolver = nullptr);

/// Quantile-quantile data for an outcome: the i-th sorted treated outcome
/// against the type-7 quantile of the pooled control outcomes at the same
/// plotting position. Points are (treated_quantile, control_quantile).
std::vector<std::pair<double, double>> qq_data(
    const MatchDesign& design, const std::vector<SubjectHistory>& cohort,
    const std::string& outcome_name);

/// Five-number summary with Tukey hinges.
struct FiveNumber {
  double min = 0.0;
  double lower_hinge = 0.0;
  double median = 0.0;
  double upper_hinge = 0.0;
  double max = 0.0;
};

struct BoxplotGroup {
  int event_index = 0;
  std::string arm;  // "treated" | "control"
  FiveNumber summary;
  long n = 0;
};

/// Per-(event index, arm) five-number summaries of an outcome.
std::vector<BoxplotGroup> outcome_boxplot_data(
    const MatchDesign& design, const std::vector<SubjectHistory>& cohort,
    const std::string& outcome_name);

/// Tukey five-number summary of `values` (not required to be sorted).
FiveNumber five_number_summary(std::vector<double> values);

/// Type-7 sample quantile (linear interpolation of order statistics).
double quantile_type7(const std::vector<double>& sorted, double p);

}  // namespace isolate
