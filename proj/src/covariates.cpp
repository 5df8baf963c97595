#include "isolate/covariates.hpp"

#include <cstdlib>

#include "isolate/errors.hpp"

namespace isolate {

std::optional<std::pair<std::string, int>> parse_event_suffix(
    const std::string& name) {
  auto pos = name.rfind('_');
  if (pos == std::string::npos || pos + 1 >= name.size()) return std::nullopt;
  const std::string digits = name.substr(pos + 1);
  for (char c : digits) {
    if (c < '0' || c > '9') return std::nullopt;
  }
  int j = std::atoi(digits.c_str());
  if (j < 1) return std::nullopt;
  return std::make_pair(name.substr(0, pos), j);
}

std::optional<double> try_resolve_history_covariate(const HistoryView& view,
                                                    const std::string& name) {
  auto parsed = parse_event_suffix(name);
  if (!parsed) return std::nullopt;
  const auto& [base, j] = *parsed;
  if (j > view.k()) return std::nullopt;
  const EventRecord& ev = view.event(j);
  if (base == "event_time") return ev.event_time;
  auto it = ev.tv_covariates.find(base);
  if (it == ev.tv_covariates.end()) return std::nullopt;
  return it->second;
}

double resolve_history_covariate(const HistoryView& view,
                                 const std::string& name) {
  auto v = try_resolve_history_covariate(view, name);
  if (!v) {
    throw UnresolvableCovariate("covariate '" + name +
                                "' not resolvable on subject '" +
                                view.subject_id() + "' at k=" +
                                std::to_string(view.k()));
  }
  return *v;
}

std::vector<std::string> covariates_available_at(
    const std::vector<std::string>& names, int k) {
  std::vector<std::string> out;
  for (const auto& name : names) {
    auto parsed = parse_event_suffix(name);
    if (parsed && parsed->second > k) continue;
    out.push_back(name);
  }
  return out;
}

}  // namespace isolate
