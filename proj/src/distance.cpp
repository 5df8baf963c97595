#include "isolate/distance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "isolate/errors.hpp"

namespace isolate {

namespace {

// Average ranks (ties share the mean rank), 1-based.
Eigen::VectorXd average_ranks(const Eigen::VectorXd& x) {
  const int n = static_cast<int>(x.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return x[a] < x[b]; });
  Eigen::VectorXd ranks(n);
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double mean_rank = 0.5 * (i + j) + 1.0;  // of positions i..j
    for (int m = i; m <= j; ++m) ranks[order[m]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

// Rank covariance accumulated over rows in a canonical (lexicographically
// sorted) order, so permuting the input pool cannot perturb the result.
Eigen::MatrixXd canonical_covariance(const Eigen::MatrixXd& rows) {
  const int n = static_cast<int>(rows.rows());
  const int p = static_cast<int>(rows.cols());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (int j = 0; j < p; ++j) {
      if (rows(a, j) != rows(b, j)) return rows(a, j) < rows(b, j);
    }
    return false;
  });
  Eigen::MatrixXd sorted(n, p);
  for (int i = 0; i < n; ++i) sorted.row(i) = rows.row(order[i]);
  Eigen::RowVectorXd mean = sorted.colwise().mean();
  Eigen::MatrixXd centered = sorted.rowwise() - mean;
  return (centered.transpose() * centered) / double(n - 1);
}

}  // namespace

DistanceMatrix robust_mahalanobis(const std::vector<HistoryView>& treated,
                                  const std::vector<HistoryView>& controls,
                                  const DistanceSpec& spec) {
  const int nt = static_cast<int>(treated.size());
  const int nc = static_cast<int>(controls.size());
  const int n = nt + nc;
  if (n == 0) throw EmptyPool("distance pool is empty");
  if (spec.covariate_names.empty()) {
    throw ConfigError("distance spec has no covariates");
  }
  {
    std::vector<std::string> sorted = spec.covariate_names;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ConfigError("distance covariate names must be unique");
    }
  }

  const int p = static_cast<int>(spec.covariate_names.size());
  auto view_at = [&](int i) -> const HistoryView& {
    return i < nt ? treated[i] : controls[i - nt];
  };

  Eigen::MatrixXd values(n, p);
  std::vector<bool> usable(n, true);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) {
      auto v = try_resolve_history_covariate(view_at(i),
                                             spec.covariate_names[j]);
      if (v) {
        values(i, j) = *v;
      } else if (spec.penalty_for_unresolvable) {
        usable[i] = false;
        values(i, j) = 0.0;
      } else {
        resolve_history_covariate(view_at(i), spec.covariate_names[j]);  // throws
      }
    }
  }

  std::vector<int> included;
  for (int i = 0; i < n; ++i) {
    if (usable[i]) included.push_back(i);
  }
  const int m = static_cast<int>(included.size());

  DistanceMatrix out;
  out.treated_ids.reserve(nt);
  for (const auto& v : treated) out.treated_ids.push_back(v.subject_id());
  out.control_ids.reserve(nc);
  for (const auto& v : controls) out.control_ids.push_back(v.subject_id());
  out.entries = Eigen::MatrixXd::Zero(nt, nc);
  out.forbidden =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(nt, nc,
                                                                    false);
  for (int i = 0; i < nt; ++i) {
    for (int j = 0; j < nc; ++j) {
      if (!usable[i] || !usable[nt + j]) out.forbidden(i, j) = true;
    }
  }
  if (m < 2) {
    // Not enough usable units to estimate a rank covariance; any surviving
    // pair is at distance 0.
    return out;
  }

  // Rank each covariate over the usable pool.
  Eigen::MatrixXd ranks(m, p);
  for (int j = 0; j < p; ++j) {
    Eigen::VectorXd col(m);
    for (int r = 0; r < m; ++r) col[r] = values(included[r], j);
    ranks.col(j) = average_ranks(col);
  }

  Eigen::MatrixXd cov = canonical_covariance(ranks);

  // Rescale each diagonal to the variance of untied ranks 1..m. Constant
  // columns (all ranks tied) carry no information and are dropped.
  const double var_untied = m * (m + 1) / 12.0;
  std::vector<int> keep;
  for (int j = 0; j < p; ++j) {
    if (cov(j, j) > 0.0) keep.push_back(j);
  }
  const int q = static_cast<int>(keep.size());
  if (q == 0) return out;  // no variation at all: distances stay 0

  Eigen::MatrixXd cov_k(q, q);
  Eigen::VectorXd scale(q);
  for (int a = 0; a < q; ++a) scale[a] = std::sqrt(var_untied / cov(keep[a], keep[a]));
  for (int a = 0; a < q; ++a) {
    for (int b = 0; b < q; ++b) {
      cov_k(a, b) = scale[a] * cov(keep[a], keep[b]) * scale[b];
    }
  }

  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(cov_k);
  Eigen::MatrixXd pinv = cod.pseudoInverse();

  // Map pool index -> row in the rank matrix.
  std::vector<int> rank_row(n, -1);
  for (int r = 0; r < m; ++r) rank_row[included[r]] = r;

  // Rank differences stay unscaled: the inflated diagonal of the adjusted
  // covariance is what downweights heavily tied covariates.
  for (int i = 0; i < nt; ++i) {
    if (!usable[i]) continue;
    for (int j = 0; j < nc; ++j) {
      if (!usable[nt + j]) continue;
      Eigen::VectorXd delta(q);
      for (int a = 0; a < q; ++a) {
        delta[a] =
            ranks(rank_row[i], keep[a]) - ranks(rank_row[nt + j], keep[a]);
      }
      double d = delta.dot(pinv * delta);
      out.entries(i, j) = std::max(d, 0.0);
    }
  }
  return out;
}

}  // namespace isolate
