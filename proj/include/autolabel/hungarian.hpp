#pragma once

#include <Eigen/Core>
#include <vector>

namespace autolabel {

// Min-cost assignment on a rectangular cost matrix (rows -> columns).
// Returns assignment[row] = column or -1 when rows > cols. O(n^3),
// deterministic for tied costs (lowest indices win).
std::vector<int> hungarian_assign(const Eigen::MatrixXd& cost);

}  // namespace autolabel
