#pragma once

#include <random>

#include "rankpool/core_types.hpp"

namespace rankpool::test {

inline Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * n01(rng);
  return m;
}

inline Vector gaussian_vec(std::mt19937_64& rng, Eigen::Index d, double scale = 1.0) {
  return gaussian(rng, d, 1, scale).col(0);
}

inline Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline FrameSequence seq(std::initializer_list<std::initializer_list<double>> r, std::string id = "s",
                         std::optional<int> label = std::nullopt) {
  return FrameSequence::from_matrix(rows(r), std::move(id), label);
}

}  // namespace rankpool::test
