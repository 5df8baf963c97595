#include "isolate/matching.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <thread>

#include "isolate/flow.hpp"

namespace isolate {

namespace {

constexpr double kCostScale = 1e6;
constexpr long kSubsetSolveCap = 5000;  // exact-search flow solves per stratum
constexpr long kBrutePartitionCap = 10000000;

int64_t scaled_cost(double d) {
  return static_cast<int64_t>(std::nearbyint(d * kCostScale));
}

// Indices of `ids` sorted by lexicographic id.
std::vector<int> lex_order(const std::vector<std::string>& ids) {
  std::vector<int> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return ids[a] < ids[b]; });
  return order;
}

struct StratumProblem {
  const DistanceMatrix* D;
  int J;
  std::vector<int> treated;   // row indices, lex order by id
  std::vector<int> controls;  // col indices, lex order by id
};

// Min-cost assignment of exactly J-1 controls to every treated unit in
// `subset` (indices into prob.treated). Returns nullopt when the flow cannot
// saturate every treated unit.
struct SubsetSolution {
  int64_t cost = 0;
  // control column indices per subset member, ascending
  std::vector<std::vector<int>> assigned;
};

std::optional<SubsetSolution> solve_subset(const StratumProblem& prob,
                                           const std::vector<int>& subset) {
  const int J1 = prob.J - 1;
  const int m = static_cast<int>(subset.size());
  const int nc = static_cast<int>(prob.controls.size());
  if (m == 0) return SubsetSolution{};
  // nodes: 0 source, 1..m treated, m+1..m+nc controls, m+nc+1 sink
  MinCostFlow flow(m + nc + 2);
  const int source = 0, sink = m + nc + 1;
  std::vector<std::vector<int>> arc_ids(m);
  for (int a = 0; a < m; ++a) flow.add_arc(source, 1 + a, J1, 0);
  for (int a = 0; a < m; ++a) {
    const int row = prob.treated[subset[a]];
    arc_ids[a].assign(nc, -1);
    for (int b = 0; b < nc; ++b) {
      const int col = prob.controls[b];
      if (prob.D->is_forbidden(row, col)) continue;
      arc_ids[a][b] =
          flow.add_arc(1 + a, 1 + m + b, 1, scaled_cost(prob.D->entries(row, col)));
    }
  }
  for (int b = 0; b < nc; ++b) flow.add_arc(1 + m + b, sink, 1, 0);

  auto [shipped, cost] = flow.solve(source, sink, int64_t(J1) * m);
  if (shipped != int64_t(J1) * m) return std::nullopt;

  SubsetSolution sol;
  sol.cost = cost;
  sol.assigned.resize(m);
  for (int a = 0; a < m; ++a) {
    for (int b = 0; b < nc; ++b) {
      if (arc_ids[a][b] >= 0 && flow.flow_on(arc_ids[a][b]) > 0) {
        sol.assigned[a].push_back(b);
      }
    }
  }
  return sol;
}

// C(n, k) capped to avoid overflow.
long choose_capped(int n, int k, long cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > cap) return cap + 1;
  }
  return r;
}

// All size-k subsets of {0..n-1} in lexicographic order, visited via `fn`;
// fn returns false to stop.
void for_each_subset(int n, int k,
                     const std::function<bool(const std::vector<int>&)>& fn) {
  std::vector<int> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  if (k == 0) {
    fn(idx);
    return;
  }
  if (k > n) return;
  while (true) {
    if (!fn(idx)) return;
    int i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::vector<MatchedSet> build_sets(const StratumProblem& prob,
                                   const std::vector<int>& subset,
                                   const SubsetSolution& sol) {
  std::vector<MatchedSet> sets;
  sets.reserve(subset.size());
  for (size_t a = 0; a < subset.size(); ++a) {
    const int row = prob.treated[subset[a]];
    MatchedSet s;
    s.treated = prob.D->treated_ids[row];
    double total = 0.0;
    for (int b : sol.assigned[a]) {
      const int col = prob.controls[b];
      const double d = prob.D->entries(row, col);
      s.controls.push_back(prob.D->control_ids[col]);
      s.control_distances.push_back(d);
      total += d;
    }
    s.total_distance = total;
    sets.push_back(std::move(s));
  }
  return sets;
}

}  // namespace

std::vector<MatchedSet> optimal_stratum_match(const DistanceMatrix& D, int J) {
  if (J < 2) throw ConfigError("set size J must be at least 2");
  const int J1 = J - 1;

  StratumProblem prob;
  prob.D = &D;
  prob.J = J;
  prob.controls = lex_order(D.control_ids);
  // Treated units lacking J-1 permitted controls can never be matched.
  for (int row : lex_order(D.treated_ids)) {
    int degree = 0;
    for (int col = 0; col < D.n_controls(); ++col) {
      if (!D.is_forbidden(row, col)) ++degree;
    }
    if (degree >= J1) prob.treated.push_back(row);
  }

  const int m = static_cast<int>(prob.treated.size());
  const int nc = static_cast<int>(prob.controls.size());
  auto infeasible = [&]() -> std::vector<MatchedSet> {
    if (D.n_treated() > 0) {
      throw InfeasibleStratum("no treated unit can be matched");
    }
    return {};
  };
  if (m == 0 || nc < J1) return infeasible();

  // Full cardinality first: when every treated unit can be saturated the
  // flow optimum is the exact answer.
  std::vector<int> all(m);
  std::iota(all.begin(), all.end(), 0);
  if (auto sol = solve_subset(prob, all)) return build_sets(prob, all, *sol);

  // Controls are scarce: search over which treated units to match, largest
  // cardinality first.
  for (int q = std::min(m, nc / J1); q >= 1; --q) {
    std::optional<SubsetSolution> best;
    std::vector<int> best_subset;
    if (choose_capped(m, q, kSubsetSolveCap) <= kSubsetSolveCap) {
      for_each_subset(m, q, [&](const std::vector<int>& subset) {
        auto sol = solve_subset(prob, subset);
        if (sol && (!best || sol->cost < best->cost)) {
          best = sol;
          best_subset = subset;
        }
        return true;
      });
    } else {
      // Deterministic heuristic for large scarce strata: one relaxed flow
      // (capacity J-1 per treated, total (J-1)q) ranks the treated units by
      // how much flow the optimum routes through them, then the best q are
      // matched exactly. Exactness of the subset choice is guaranteed only
      // on the enumeration path above.
      MinCostFlow relaxed(m + nc + 2);
      const int source = 0, sink = m + nc + 1;
      std::vector<int> treated_arcs(m);
      for (int a = 0; a < m; ++a) {
        treated_arcs[a] = relaxed.add_arc(source, 1 + a, J1, 0);
      }
      for (int a = 0; a < m; ++a) {
        const int row = prob.treated[a];
        for (int b = 0; b < nc; ++b) {
          const int col = prob.controls[b];
          if (prob.D->is_forbidden(row, col)) continue;
          relaxed.add_arc(1 + a, 1 + m + b, 1,
                          scaled_cost(prob.D->entries(row, col)));
        }
      }
      for (int b = 0; b < nc; ++b) relaxed.add_arc(1 + m + b, sink, 1, 0);
      relaxed.solve(source, sink, int64_t(J1) * q);

      std::vector<std::pair<std::pair<int64_t, int64_t>, int>> rank;
      for (int a = 0; a < m; ++a) {
        const int row = prob.treated[a];
        std::vector<int64_t> costs;
        for (int b = 0; b < nc; ++b) {
          const int col = prob.controls[b];
          if (!prob.D->is_forbidden(row, col)) {
            costs.push_back(scaled_cost(prob.D->entries(row, col)));
          }
        }
        std::sort(costs.begin(), costs.end());
        int64_t cheap = 0;
        for (int t = 0; t < J1 && t < static_cast<int>(costs.size()); ++t) {
          cheap += costs[t];
        }
        rank.push_back({{-relaxed.flow_on(treated_arcs[a]), cheap}, a});
      }
      std::stable_sort(rank.begin(), rank.end());
      std::vector<int> subset;
      for (int t = 0; t < q; ++t) subset.push_back(rank[t].second);
      std::sort(subset.begin(), subset.end());
      best = solve_subset(prob, subset);
      if (best) {
        best_subset = subset;
      } else {
        // pattern pathologies: retry on pure cheapness order
        std::stable_sort(rank.begin(), rank.end(),
                         [](const auto& x, const auto& y) {
                           return x.first.second < y.first.second;
                         });
        subset.clear();
        for (int t = 0; t < q; ++t) subset.push_back(rank[t].second);
        std::sort(subset.begin(), subset.end());
        best = solve_subset(prob, subset);
        if (best) best_subset = subset;
      }
    }
    if (best) return build_sets(prob, best_subset, *best);
  }
  return infeasible();
}

std::vector<MatchedSet> brute_force_stratum_match(const DistanceMatrix& D,
                                                  int J) {
  if (J < 2) throw ConfigError("set size J must be at least 2");
  const int J1 = J - 1;
  const int m = D.n_treated();
  const int nc = D.n_controls();
  if (m == 0) return {};

  std::vector<int> treated = lex_order(D.treated_ids);
  std::vector<int> controls = lex_order(D.control_ids);

  for (int q = std::min(m, nc / J1); q >= 1; --q) {
    // Candidate partitions: C(m,q) subsets times the control assignments.
    long count = choose_capped(m, q, kBrutePartitionCap);
    for (int i = 0; i < q && count <= kBrutePartitionCap; ++i) {
      long c = choose_capped(nc - i * J1, J1, kBrutePartitionCap);
      count = (c > 0 && count > kBrutePartitionCap / c) ? kBrutePartitionCap + 1
                                                        : count * c;
    }
    if (count > kBrutePartitionCap) {
      throw TooLarge("brute-force stratum search space exceeds cap");
    }

    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<std::vector<int>> best_assign;  // per subset member
    std::vector<int> best_subset;

    std::vector<std::vector<int>> assign(q);
    std::vector<bool> used(nc, false);

    std::function<void(const std::vector<int>&, int, double)> assign_member =
        [&](const std::vector<int>& subset, int depth, double cost_acc) {
          if (depth == q) {
            if (cost_acc < best_cost) {
              best_cost = cost_acc;
              best_assign = assign;
              best_subset = subset;
            }
            return;
          }
          const int row = treated[subset[depth]];
          std::vector<int> pick(J1);
          std::function<void(int, int, double)> choose_controls =
              [&](int start, int chosen, double acc) {
                if (chosen == J1) {
                  assign[depth] = pick;
                  assign_member(subset, depth + 1, acc);
                  return;
                }
                for (int b = start; b < nc; ++b) {
                  if (used[b]) continue;
                  const int col = controls[b];
                  if (D.is_forbidden(row, col)) continue;
                  used[b] = true;
                  pick[chosen] = b;
                  choose_controls(b + 1, chosen + 1, acc + D.entries(row, col));
                  used[b] = false;
                }
              };
          choose_controls(0, 0, cost_acc);
        };

    for_each_subset(m, q, [&](const std::vector<int>& subset) {
      assign_member(subset, 0, 0.0);
      return true;
    });

    if (best_cost < std::numeric_limits<double>::infinity()) {
      std::vector<MatchedSet> sets;
      for (int a = 0; a < q; ++a) {
        const int row = treated[best_subset[a]];
        MatchedSet s;
        s.treated = D.treated_ids[row];
        double total = 0.0;
        for (int b : best_assign[a]) {
          const int col = controls[b];
          s.controls.push_back(D.control_ids[col]);
          s.control_distances.push_back(D.entries(row, col));
          total += D.entries(row, col);
        }
        s.total_distance = total;
        sets.push_back(std::move(s));
      }
      return sets;
    }
  }
  throw InfeasibleStratum("no treated unit can be matched");
}

double design_objective(const std::vector<MatchedSet>& sets) {
  double total = 0.0;
  for (const auto& s : sets) total += s.total_distance;
  return total;
}

int effective_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ISOLATE_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

namespace {

// Runs fn(i) for i in [0, n) across `threads` workers. Work items are
// independent; results must be written to per-index slots by the caller.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  std::vector<std::exception_ptr> errors(threads);
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        while (true) {
          int i = next.fetch_add(1);
          if (i >= n) break;
          fn(i);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string default_exact_resolve(const HistoryView& view,
                                  const std::string& name) {
  const auto& fixed = view.fixed_covariates();
  auto it = fixed.find(name);
  if (it == fixed.end()) {
    throw UnknownVariable("exact variable '" + name +
                          "' is not a fixed covariate of subject '" +
                          view.subject_id() + "'");
  }
  return it->second;
}

}  // namespace

MatchDesign build_risk_set_match(const std::vector<SubjectHistory>& cohort,
                                 const EligibilitySpec& elig,
                                 const DistanceSpec& dist, int n_threads) {
  if (elig.set_size < 2) throw ConfigError("set size J must be at least 2");
  if (!elig.treated_predicate || !elig.control_predicate) {
    throw ConfigError("eligibility predicates must both be set");
  }
  if (!std::is_sorted(elig.k_range.begin(), elig.k_range.end())) {
    throw ConfigError("k_range must be sorted ascending");
  }
  auto resolve_exact = elig.exact_resolver
                           ? elig.exact_resolver
                           : std::function<std::string(const HistoryView&,
                                                       const std::string&)>(
                                 default_exact_resolve);
  const int threads = effective_thread_count(n_threads);

  MatchDesign design;
  design.config_echo.set_size = elig.set_size;
  design.config_echo.k_range = elig.k_range;
  design.config_echo.exact_variables = elig.exact_variables;
  design.config_echo.distance_covariates = dist.covariate_names;
  design.config_echo.penalty_for_unresolvable = dist.penalty_for_unresolvable;

  std::set<std::string> consumed;

  for (int k : elig.k_range) {
    struct StratumUnits {
      std::vector<HistoryView> treated;
      std::vector<HistoryView> controls;
    };
    std::map<StratumKey, StratumUnits> strata;

    for (const auto& subject : cohort) {
      if (subject.n_events() < k) continue;
      if (consumed.count(subject.subject_id)) continue;
      HistoryView view(subject, k);
      const bool is_treated = elig.treated_predicate(view);
      const bool is_control = elig.control_predicate(view);
      if (is_treated && is_control) {
        throw ConfigError("treated and control predicates overlap on subject '" +
                          subject.subject_id + "' at k=" + std::to_string(k));
      }
      if (!is_treated && !is_control) continue;
      StratumKey key;
      key.event_index = k;
      for (const auto& name : elig.exact_variables) {
        key.exact_values.push_back(resolve_exact(view, name));
      }
      auto& units = strata[key];
      (is_treated ? units.treated : units.controls).push_back(view);
    }

    DistanceSpec spec_at_k = dist;
    spec_at_k.covariate_names = covariates_available_at(dist.covariate_names, k);

    std::vector<const StratumKey*> keys;
    std::vector<const StratumUnits*> units;
    for (const auto& [key, u] : strata) {
      keys.push_back(&key);
      units.push_back(&u);
    }
    struct StratumResult {
      std::vector<MatchedSet> sets;
      std::vector<UnmatchedTreated> unmatched;
    };
    std::vector<StratumResult> results(keys.size());

    parallel_for(static_cast<int>(keys.size()), threads, [&](int i) {
      const StratumUnits& u = *units[i];
      StratumResult& res = results[i];
      if (u.treated.empty()) return;

      std::vector<MatchedSet> sets;
      if (static_cast<int>(u.controls.size()) >= elig.set_size - 1) {
        DistanceMatrix D;
        if (spec_at_k.covariate_names.empty()) {
          // No covariate usable at this k: all pairs are equally close.
          for (const auto& v : u.treated) D.treated_ids.push_back(v.subject_id());
          for (const auto& v : u.controls) D.control_ids.push_back(v.subject_id());
          D.entries = Eigen::MatrixXd::Zero(D.n_treated(), D.n_controls());
          D.forbidden = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::
              Constant(D.n_treated(), D.n_controls(), false);
        } else {
          D = robust_mahalanobis(u.treated, u.controls, spec_at_k);
        }
        try {
          sets = optimal_stratum_match(D, elig.set_size);
        } catch (const InfeasibleStratum&) {
          sets.clear();
        }
      }

      std::set<std::string> matched_here;
      for (auto& s : sets) {
        s.event_index = keys[i]->event_index;
        s.stratum = *keys[i];
        matched_here.insert(s.treated);
        matched_here.insert(s.controls.begin(), s.controls.end());
        res.sets.push_back(std::move(s));
      }
      for (const auto& v : u.treated) {
        if (!matched_here.count(v.subject_id())) {
          res.unmatched.push_back(
              {v.subject_id(), keys[i]->event_index, "insufficient controls"});
        }
      }
    });

    for (auto& res : results) {
      for (auto& s : res.sets) {
        consumed.insert(s.treated);
        consumed.insert(s.controls.begin(), s.controls.end());
        design.sets.push_back(std::move(s));
      }
      for (auto& u : res.unmatched) design.unmatched_treated.push_back(u);
    }
  }

  // Stable ids: sets arrive ordered by (k, stratum key, formation order);
  // order within a stratum follows the solver's lexicographic treated order.
  for (size_t i = 0; i < design.sets.size(); ++i) {
    design.sets[i].set_id = static_cast<long>(i) + 1;
  }
  return design;
}

}  // namespace isolate
