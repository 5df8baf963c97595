#pragma once

#include <map>
#include <string>
#include <vector>

#include "isolate/errors.hpp"

namespace isolate {

// State code 0 is reserved for the between-events interval state; event
// records always carry a point-state code >= 1.
struct EventState {
  int code = 0;
  std::string display_name;
};

struct EventRecord {
  int event_index = 0;           // 1-based ordinal within the subject
  double event_time = 0.0;       // e.g. mother's age in years
  int state = 0;                 // point-state code >= 1
  std::map<std::string, double> tv_covariates;  // measured just prior to the event
};

struct SubjectHistory {
  std::string subject_id;
  std::map<std::string, std::string> fixed_covariates;
  std::vector<EventRecord> events;               // ordered by event_index
  std::map<std::string, double> outcomes;        // measured after all events

  int n_events() const { return static_cast<int>(events.size()); }
};

/// Read-only window onto a subject's history up to and including event k.
/// Carries no outcomes and refuses access to any event beyond k, so code
/// operating on views cannot condition on the future.
class HistoryView {
 public:
  HistoryView(const SubjectHistory& subject, int k);

  const std::string& subject_id() const { return subject_->subject_id; }
  const std::map<std::string, std::string>& fixed_covariates() const {
    return subject_->fixed_covariates;
  }
  int k() const { return k_; }

  /// Event at 1-based index i, i <= k.
  const EventRecord& event(int i) const;

  /// State code at event k.
  int state_at_k() const { return event(k_).state; }

  int n_events() const { return k_; }

 private:
  const SubjectHistory* subject_;
  int k_;
};

struct StratumKey {
  int event_index = 0;
  std::vector<std::string> exact_values;

  bool operator==(const StratumKey&) const = default;
  auto operator<=>(const StratumKey&) const = default;

  std::string to_string() const;  // "k|v1|v2|..."
};

struct MatchedSet {
  long set_id = 0;
  int event_index = 0;
  StratumKey stratum;
  std::string treated;
  std::vector<std::string> controls;  // length J-1
  std::vector<double> control_distances;  // distance of each control to the treated
  double total_distance = 0.0;

  int set_size() const { return 1 + static_cast<int>(controls.size()); }
};

/// View of `subject` truncated at event k. Throws MissingEvent if the
/// subject has fewer than k events.
HistoryView history_view(const SubjectHistory& subject, int k);

/// Years of education creditable at an event: min(total education, age-6).
/// Throws DomainError unless total_education >= 0 and age_at_event > 6.
double impute_education_at_event(double total_education, double age_at_event);

/// Work fraction in [0,1]: min(hours,40) * weeks / (40*52).
/// Throws DomainError on negative inputs or weeks > 52.
double work_fraction(double hours_last_week, double weeks_last_year);

}  // namespace isolate
