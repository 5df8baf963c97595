#include "isolate/core.hpp"

#include <algorithm>
#include <sstream>

namespace isolate {

HistoryView::HistoryView(const SubjectHistory& subject, int k)
    : subject_(&subject), k_(k) {
  if (k < 1 || subject.n_events() < k) {
    throw MissingEvent("subject '" + subject.subject_id + "' has " +
                       std::to_string(subject.n_events()) +
                       " events, view at k=" + std::to_string(k) +
                       " requested");
  }
}

const EventRecord& HistoryView::event(int i) const {
  if (i < 1 || i > k_) {
    throw MissingEvent("event " + std::to_string(i) +
                       " outside view truncated at k=" + std::to_string(k_));
  }
  return subject_->events[static_cast<size_t>(i - 1)];
}

std::string StratumKey::to_string() const {
  std::ostringstream os;
  os << event_index;
  for (const auto& v : exact_values) os << '|' << v;
  return os.str();
}

HistoryView history_view(const SubjectHistory& subject, int k) {
  return HistoryView(subject, k);
}

double impute_education_at_event(double total_education, double age_at_event) {
  if (total_education < 0.0) {
    throw DomainError("total education must be nonnegative");
  }
  if (age_at_event <= 6.0) {
    throw DomainError("age at event must exceed 6 years");
  }
  return std::min(total_education, age_at_event - 6.0);
}

double work_fraction(double hours_last_week, double weeks_last_year) {
  if (hours_last_week < 0.0 || weeks_last_year < 0.0) {
    throw DomainError("hours and weeks must be nonnegative");
  }
  if (weeks_last_year > 52.0) {
    throw DomainError("weeks worked cannot exceed 52");
  }
  double f = std::min(hours_last_week, 40.0) * weeks_last_year / (40.0 * 52.0);
  return std::clamp(f, 0.0, 1.0);
}

}  // namespace isolate
