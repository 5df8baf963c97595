#include "isolate/flow.hpp"

#include <limits>
#include <queue>
#include <stdexcept>

namespace isolate {

namespace {
constexpr int64_t kInf = std::numeric_limits<int64_t>::max() / 4;
}

MinCostFlow::MinCostFlow(int n_nodes) : n_(n_nodes), graph_(n_nodes) {}

int MinCostFlow::add_arc(int from, int to, int64_t capacity, int64_t cost) {
  Arc fwd{to, capacity, cost, static_cast<int>(graph_[to].size())};
  Arc bwd{from, 0, -cost, static_cast<int>(graph_[from].size())};
  graph_[from].push_back(fwd);
  graph_[to].push_back(bwd);
  arc_pos_.emplace_back(from, static_cast<int>(graph_[from].size()) - 1);
  return static_cast<int>(arc_pos_.size()) - 1;
}

std::pair<int64_t, int64_t> MinCostFlow::solve(int source, int sink,
                                               int64_t max_flow) {
  std::vector<int64_t> potential(n_, 0);  // valid: all input costs >= 0
  std::vector<int64_t> dist(n_);
  std::vector<int> prev_node(n_), prev_arc(n_);

  int64_t flow = 0;
  int64_t cost = 0;
  while (flow < max_flow) {
    // Dijkstra on reduced costs; ties broken by node id for determinism.
    std::fill(dist.begin(), dist.end(), kInf);
    dist[source] = 0;
    using Item = std::pair<int64_t, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    pq.emplace(0, source);
    while (!pq.empty()) {
      auto [d, u] = pq.top();
      pq.pop();
      if (d > dist[u]) continue;
      for (int a = 0; a < static_cast<int>(graph_[u].size()); ++a) {
        const Arc& arc = graph_[u][a];
        if (arc.capacity <= 0) continue;
        int64_t nd = d + arc.cost + potential[u] - potential[arc.to];
        if (nd < dist[arc.to]) {
          dist[arc.to] = nd;
          prev_node[arc.to] = u;
          prev_arc[arc.to] = a;
          pq.emplace(nd, arc.to);
        }
      }
    }
    if (dist[sink] >= kInf) break;  // no augmenting path left

    for (int v = 0; v < n_; ++v) {
      if (dist[v] < kInf) potential[v] += dist[v];
    }

    int64_t push = max_flow - flow;
    for (int v = sink; v != source; v = prev_node[v]) {
      push = std::min(push, graph_[prev_node[v]][prev_arc[v]].capacity);
    }
    for (int v = sink; v != source; v = prev_node[v]) {
      Arc& arc = graph_[prev_node[v]][prev_arc[v]];
      arc.capacity -= push;
      graph_[v][arc.rev].capacity += push;
      cost += push * arc.cost;
    }
    flow += push;
  }
  return {flow, cost};
}

int64_t MinCostFlow::flow_on(int id) const {
  const auto& [node, offset] = arc_pos_.at(static_cast<size_t>(id));
  const Arc& fwd = graph_[node][offset];
  // Residual capacity on the reverse arc equals the shipped flow.
  return graph_[fwd.to][fwd.rev].capacity;
}

}  // namespace isolate
