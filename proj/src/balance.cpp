#include "isolate/balance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "isolate/covariates.hpp"
#include "isolate/errors.hpp"

namespace isolate {

namespace {

struct Arm {
  std::vector<double> values;

  long n() const { return static_cast<long>(values.size()); }
  double mean() const {
    if (values.empty()) return 0.0;
    double s = 0.0;
    for (double v : values) s += v;
    return s / double(values.size());
  }
  double sample_var() const {
    const size_t n = values.size();
    if (n < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return s / double(n - 1);
  }
};

double std_difference(const Arm& treated, const Arm& control) {
  const double pooled = 0.5 * (treated.sample_var() + control.sample_var());
  const double diff = treated.mean() - control.mean();
  if (diff == 0.0) return 0.0;
  if (pooled <= 0.0) return 0.0;
  return diff / std::sqrt(pooled);
}

const SubjectHistory& subject_by_id(
    const std::map<std::string, const SubjectHistory*>& index,
    const std::string& id) {
  auto it = index.find(id);
  if (it == index.end()) {
    throw SchemaError("subject '" + id +
                      "' from the design is not present in the cohort");
  }
  return *it->second;
}

}  // namespace

double quantile_type7(const std::vector<double>& sorted, double p) {
  const size_t n = sorted.size();
  if (n == 0) throw DomainError("quantile of an empty sample");
  if (n == 1) return sorted[0];
  const double h = (double(n) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, n - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

FiveNumber five_number_summary(std::vector<double> values) {
  if (values.empty()) throw DomainError("five-number summary of nothing");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();

  auto median_range = [&](size_t lo, size_t hi) {  // inclusive
    const size_t len = hi - lo + 1;
    if (len % 2 == 1) return values[lo + len / 2];
    return 0.5 * (values[lo + len / 2 - 1] + values[lo + len / 2]);
  };

  FiveNumber f;
  f.min = values.front();
  f.max = values.back();
  f.median = median_range(0, n - 1);
  // Tukey hinges: medians of the halves, both including the middle value
  // when n is odd.
  const size_t half = (n + 1) / 2;
  f.lower_hinge = median_range(0, half - 1);
  f.upper_hinge = median_range(n - half, n - 1);
  return f;
}

BalanceTable balance_table(
    const MatchDesign& design, const std::vector<SubjectHistory>& cohort,
    const std::vector<std::string>& variables,
    const std::function<std::string(const HistoryView&, const std::string&)>&
        exact_resolver) {
  if (design.sets.empty()) throw EmptyDesign("balance of an empty design");

  std::map<std::string, const SubjectHistory*> index;
  for (const auto& s : cohort) index[s.subject_id] = &s;

  std::set<int> ks;
  for (const auto& s : design.sets) ks.insert(s.event_index);
  const std::set<std::string> exact_vars(design.config_echo.exact_variables.begin(),
                                         design.config_echo.exact_variables.end());

  BalanceTable table;
  for (const auto& var : variables) {
    // Numeric if it parses as an event-suffixed covariate, else categorical.
    const bool numeric = parse_event_suffix(var).has_value();

    // (k, category) -> per-arm values; numeric rows use category "".
    std::map<std::pair<int, std::string>, std::pair<Arm, Arm>> cells;
    std::map<int, std::pair<Arm, Arm>> numeric_cells;

    // A covariate referencing event j only applies to sets matched at j or
    // later; earlier sets simply have no such row.
    auto suffix = parse_event_suffix(var);
    auto add_member = [&](const MatchedSet& set, const std::string& id,
                          bool treated) {
      if (numeric && suffix && suffix->second > set.event_index) return;
      const SubjectHistory& subj = subject_by_id(index, id);
      HistoryView view(subj, set.event_index);
      if (numeric) {
        auto v = try_resolve_history_covariate(view, var);
        if (!v) {
          throw UnknownVariable("variable '" + var +
                                "' unresolvable on subject '" + id + "'");
        }
        auto& arm = treated ? numeric_cells[set.event_index].first
                            : numeric_cells[set.event_index].second;
        arm.values.push_back(*v);
        auto& pooled = treated ? numeric_cells[0].first : numeric_cells[0].second;
        pooled.values.push_back(*v);
      } else {
        std::string value;
        if (exact_resolver) {
          value = exact_resolver(view, var);
        } else {
          auto it = subj.fixed_covariates.find(var);
          if (it == subj.fixed_covariates.end()) {
            throw UnknownVariable("variable '" + var +
                                  "' is not a fixed covariate of subject '" +
                                  id + "'");
          }
          value = it->second;
        }
        for (int k : {set.event_index, 0}) {
          auto& arms = cells[{k, value}];
          (treated ? arms.first : arms.second).values.push_back(1.0);
        }
      }
    };

    for (const auto& set : design.sets) {
      add_member(set, set.treated, true);
      for (const auto& c : set.controls) add_member(set, c, false);
    }

    if (numeric) {
      if (numeric_cells.empty()) {
        throw UnknownVariable("variable '" + var +
                              "' applies to no matched set in this design");
      }
      for (auto& [k, arms] : numeric_cells) {
        if (arms.first.values.empty() && arms.second.values.empty()) continue;
        BalanceRow row;
        row.variable = var;
        row.event_index = k;
        row.treated_count = arms.first.n();
        row.control_count = arms.second.n();
        row.treated_value = arms.first.mean();
        row.control_value = arms.second.mean();
        row.std_difference = std_difference(arms.first, arms.second);
        table.rows.push_back(row);
      }
    } else {
      // Category counts need the arm totals per k to turn into percents.
      std::map<int, std::pair<long, long>> totals;
      for (const auto& [key, arms] : cells) {
        totals[key.first].first += arms.first.n();
        totals[key.first].second += arms.second.n();
      }
      for (const auto& [key, arms] : cells) {
        const auto& [k, category] = key;
        BalanceRow row;
        row.variable = var;
        row.category = category;
        row.event_index = k;
        row.treated_count = arms.first.n();
        row.control_count = arms.second.n();
        const auto& [t_total, c_total] = totals[k];
        row.treated_value =
            t_total > 0 ? 100.0 * double(row.treated_count) / double(t_total)
                        : 0.0;
        row.control_value =
            c_total > 0 ? 100.0 * double(row.control_count) / double(c_total)
                        : 0.0;
        // Standardized difference on the category indicator over the two
        // arms (padded with the zeros of members outside the category).
        Arm t_ind, c_ind;
        t_ind.values.assign(size_t(t_total), 0.0);
        std::fill_n(t_ind.values.begin(), size_t(row.treated_count), 1.0);
        c_ind.values.assign(size_t(c_total), 0.0);
        std::fill_n(c_ind.values.begin(), size_t(row.control_count), 1.0);
        row.std_difference = std_difference(t_ind, c_ind);

        if (exact_vars.count(var)) {
          // The design guarantees exact balance here; a mismatch means the
          // design and cohort files do not belong together.
          const long j1 = design.config_echo.set_size - 1;
          if (row.control_count != j1 * row.treated_count) {
            throw SchemaError(
                "exact variable '" + var +
                "' is not exactly balanced; design and cohort disagree");
          }
        }
        table.rows.push_back(row);
      }
    }
  }
  return table;
}

std::vector<std::pair<double, double>> qq_data(
    const MatchDesign& design, const std::vector<SubjectHistory>& cohort,
    const std::string& outcome_name) {
  if (design.sets.empty()) throw EmptyDesign("qq data of an empty design");
  std::map<std::string, const SubjectHistory*> index;
  for (const auto& s : cohort) index[s.subject_id] = &s;

  auto outcome = [&](const std::string& id) {
    const SubjectHistory& subj = subject_by_id(index, id);
    auto it = subj.outcomes.find(outcome_name);
    if (it == subj.outcomes.end()) {
      throw MissingOutcome("outcome '" + outcome_name +
                           "' missing for subject '" + id + "'");
    }
    return it->second;
  };

  std::vector<double> treated, controls;
  for (const auto& s : design.sets) {
    treated.push_back(outcome(s.treated));
    for (const auto& c : s.controls) controls.push_back(outcome(c));
  }
  std::sort(treated.begin(), treated.end());
  std::sort(controls.begin(), controls.end());

  std::vector<std::pair<double, double>> points;
  const size_t n = treated.size();
  points.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const double p = n == 1 ? 0.5 : double(i) / double(n - 1);
    points.emplace_back(treated[i], quantile_type7(controls, p));
  }
  return points;
}

std::vector<BoxplotGroup> outcome_boxplot_data(
    const MatchDesign& design, const std::vector<SubjectHistory>& cohort,
    const std::string& outcome_name) {
  if (design.sets.empty()) throw EmptyDesign("boxplot data of an empty design");
  std::map<std::string, const SubjectHistory*> index;
  for (const auto& s : cohort) index[s.subject_id] = &s;

  auto outcome = [&](const std::string& id) {
    const SubjectHistory& subj = subject_by_id(index, id);
    auto it = subj.outcomes.find(outcome_name);
    if (it == subj.outcomes.end()) {
      throw MissingOutcome("outcome '" + outcome_name +
                           "' missing for subject '" + id + "'");
    }
    return it->second;
  };

  std::map<std::pair<int, std::string>, std::vector<double>> groups;
  for (const auto& s : design.sets) {
    groups[{s.event_index, "treated"}].push_back(outcome(s.treated));
    auto& ctrl = groups[{s.event_index, "control"}];
    for (const auto& c : s.controls) ctrl.push_back(outcome(c));
  }

  std::vector<BoxplotGroup> out;
  for (auto& [key, values] : groups) {
    BoxplotGroup g;
    g.event_index = key.first;
    g.arm = key.second;
    g.n = static_cast<long>(values.size());
    g.summary = five_number_summary(std::move(values));
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace isolate
