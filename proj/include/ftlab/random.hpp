#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace ftlab {

using Rng = std::mt19937_64;

// Every generator in the library is a pure function of an explicit seed.
inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

// Derive an independent stream from (seed, stream) with splitmix64 so that
// e.g. the data draw and the task draw of one trial never share a sequence.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng,
                                       double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::MatrixXd out(rows, cols);
  // Fill row by row so the draw order does not depend on Eigen's storage order.
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  }
  return out;
}

inline Eigen::VectorXd gaussian_vector(Eigen::Index size, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> normal(0.0, stddev);
  Eigen::VectorXd out(size);
  for (Eigen::Index i = 0; i < size; ++i) out(i) = normal(rng);
  return out;
}

inline Eigen::VectorXd random_unit_vector(Eigen::Index size, Rng& rng) {
  Eigen::VectorXd v = gaussian_vector(size, rng);
  double norm = v.norm();
  while (norm == 0.0) {
    v = gaussian_vector(size, rng);
    norm = v.norm();
  }
  return v / norm;
}

}  // namespace ftlab
