#pragma once

#include <Eigen/Dense>

#include "mfdag/shape.hpp"

namespace mfdag {

/// N discretized samples. Row n of `values` is sample n; columns follow the
/// observation layout of ProblemShape (node, function, grid point).
struct FunctionalDataset {
  ProblemShape shape;
  Eigen::MatrixXd values;  ///< N x obs_dim
  Eigen::VectorXd grid;    ///< T points in [0, 1]

  /// N x T block holding function l of node j for every sample.
  auto series(std::size_t j, std::size_t l) const {
    return values.middleCols(static_cast<Eigen::Index>(shape.obs_offset(j, l)),
                             static_cast<Eigen::Index>(shape.T));
  }
  auto series(std::size_t j, std::size_t l) {
    return values.middleCols(static_cast<Eigen::Index>(shape.obs_offset(j, l)),
                             static_cast<Eigen::Index>(shape.T));
  }

  /// Checks sizes, finiteness and that the grid is strictly increasing and equally spaced.
  void validate() const;
};

/// T equally spaced points from 0 to 1 (a single point at 0 when T == 1).
Eigen::VectorXd uniform_grid(std::size_t T);

}  // namespace mfdag
