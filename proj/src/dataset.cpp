#include "mfdag/dataset.hpp"

#include <cmath>

#include "mfdag/errors.hpp"

namespace mfdag {

Eigen::VectorXd uniform_grid(std::size_t T) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(T));
  if (T == 1) {
    g(0) = 0.0;
    return g;
  }
  for (std::size_t i = 0; i < T; ++i) {
    g(static_cast<Eigen::Index>(i)) = static_cast<double>(i) / static_cast<double>(T - 1);
  }
  return g;
}

void FunctionalDataset::validate() const {
  shape.validate();
  if (values.rows() != static_cast<Eigen::Index>(shape.N) ||
      values.cols() != static_cast<Eigen::Index>(shape.obs_dim())) {
    throw ShapeError("dataset values do not match N x sum(L)*T");
  }
  if (!values.allFinite()) throw InputError("dataset contains non-finite values");
  if (grid.size() != static_cast<Eigen::Index>(shape.T)) {
    throw ShapeError("grid length differs from T");
  }
  if (shape.T > 1) {
    const double step = grid(1) - grid(0);
    if (!(step > 0.0)) throw InputError("grid must be strictly increasing");
    for (Eigen::Index i = 1; i < grid.size(); ++i) {
      const double d = grid(i) - grid(i - 1);
      if (!(d > 0.0) || std::abs(d - step) > 1e-9 * (1.0 + std::abs(step))) {
        throw InputError("grid must be equally spaced");
      }
    }
  }
}

}  // namespace mfdag
