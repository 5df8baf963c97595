#pragma once

#include <string>
#include <vector>

#include "isolate/balance.hpp"
#include "isolate/core.hpp"
#include "isolate/inference.hpp"
#include "isolate/matching.hpp"
#include "isolate/simulate.hpp"

namespace isolate {

// All files are UTF-8, comma-separated, RFC-4180 quoted, with the version
// line "#isolate-schema=1" first. Numbers carry 17 significant digits so
// round trips are bit-exact. Readers reject unknown schema versions.

extern const char* kCsvSchemaLine;

/// Long-format cohort: one "subject" row per subject (fixed covariates and
/// outcomes) followed by its "event" rows. Ingestion enforces unique
/// subject ids, dense event indices with strictly increasing times, and a
/// value for every time-varying covariate column on every event row.
std::string write_cohort_csv(const std::vector<SubjectHistory>& cohort);
std::vector<SubjectHistory> read_cohort_csv(const std::string& text);

/// Design rows: set_id,k,stratum,arm,subject_id,distance. The treated row
/// carries the set's total distance, control rows their pair distance.
std::string write_design_csv(const MatchDesign& design);
MatchDesign read_design_csv(const std::string& text);

std::string write_unmatched_csv(const MatchDesign& design);

std::string write_balance_csv(const BalanceTable& table);

std::string write_qq_json(const std::string& outcome,
                          const std::vector<std::pair<double, double>>& points);

std::string write_boxplot_json(const std::string& outcome,
                               const std::vector<BoxplotGroup>& groups);

std::string write_report_json(const SensitivityReport& report);
std::string write_report_csv(const SensitivityReport& report);

/// Truth side-file for simulator oracle checks.
std::string write_truth_json(const SimTruth& truth);
SimTruth read_truth_json(const std::string& text);

/// Whole-file helpers.
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// 17-significant-digit rendering used across all emitters.
std::string format_number(double v);

}  // namespace isolate
