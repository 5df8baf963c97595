#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "isolate/core.hpp"
#include "isolate/covariates.hpp"

namespace isolate {

struct DistanceSpec {
  std::vector<std::string> covariate_names;
  // When set, a unit with an unresolvable covariate is not an error: all of
  // its pairs are marked forbidden instead.
  bool penalty_for_unresolvable = false;
};

/// Dense treated-by-control distance matrix. Forbidden pairs carry an
/// explicit flag rather than a sentinel value; entries(i,j) is meaningless
/// where forbidden(i,j) is true.
struct DistanceMatrix {
  std::vector<std::string> treated_ids;
  std::vector<std::string> control_ids;
  Eigen::MatrixXd entries;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> forbidden;

  int n_treated() const { return static_cast<int>(treated_ids.size()); }
  int n_controls() const { return static_cast<int>(control_ids.size()); }
  bool is_forbidden(int i, int j) const { return forbidden(i, j); }
};

/// Rank-based Mahalanobis distance between every treated and control view.
///
/// Each covariate column is replaced by average ranks over the combined
/// pool, the rank covariance (denominator n-1) has its diagonal rescaled to
/// the variance of untied ranks 1..n, and squared distances are taken in the
/// Moore-Penrose pseudoinverse metric of the adjusted covariance. Ranking
/// makes the distance insensitive to outliers and invariant under monotone
/// transforms of any covariate.
DistanceMatrix robust_mahalanobis(const std::vector<HistoryView>& treated,
                                  const std::vector<HistoryView>& controls,
                                  const DistanceSpec& spec);

}  // namespace isolate
