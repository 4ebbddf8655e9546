#pragma once

#include <cmath>
#include <random>
#include <string>

#include "conxgnn/tensor.hpp"

namespace conxgnn {

template <typename Rng>
Matrix xavier_uniform(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

template <typename Rng>
Parameter xavier_parameter(std::string name, Index rows, Index cols, Rng& rng) {
  return Parameter(std::move(name), xavier_uniform(rows, cols, rng));
}

inline Parameter zero_parameter(std::string name, Index rows, Index cols) {
  return Parameter(std::move(name), Matrix::Zero(rows, cols));
}

inline Parameter constant_parameter(std::string name, Index rows, Index cols, double v) {
  return Parameter(std::move(name), Matrix::Constant(rows, cols, v));
}

}  // namespace conxgnn
