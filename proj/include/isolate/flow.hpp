#pragma once

#include <cstdint>
#include <vector>

namespace isolate {

/// Minimum-cost flow on a directed graph with integer capacities and costs,
/// solved by successive shortest augmenting paths with Johnson potentials.
/// Deterministic: arcs are relaxed in insertion order and the priority queue
/// breaks ties by node id.
class MinCostFlow {
 public:
  explicit MinCostFlow(int n_nodes);

  /// Adds arc from->to and returns its id (for flow_on).
  int add_arc(int from, int to, int64_t capacity, int64_t cost);

  /// Sends up to max_flow units from source to sink along successive
  /// shortest paths. Returns (flow shipped, total cost). Requires all costs
  /// nonnegative.
  std::pair<int64_t, int64_t> solve(int source, int sink, int64_t max_flow);

  /// Flow shipped on arc `id` after solve().
  int64_t flow_on(int id) const;

 private:
  struct Arc {
    int to;
    int64_t capacity;
    int64_t cost;
    int rev;  // index of the reverse arc in graph_[to]
  };
  int n_;
  std::vector<std::vector<Arc>> graph_;
  std::vector<std::pair<int, int>> arc_pos_;  // id -> (node, offset)
};

}  // namespace isolate
