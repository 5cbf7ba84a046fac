#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "sns/stream_window.hpp"

namespace sns {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// One N_m x R factor matrix per mode; the last mode is time.
struct FactorSet {
  std::vector<DenseMatrix> modes;

  std::size_t order() const noexcept { return modes.size(); }
  Eigen::Index rank() const noexcept { return modes.empty() ? 0 : modes.front().cols(); }
  std::vector<Index> dims() const;
  bool all_finite() const;
};

}  // namespace sns
