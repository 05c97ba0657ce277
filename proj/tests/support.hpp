#pragma once

#include "nlcausal/nlcausal.hpp"

#include <optional>
#include <random>

namespace testing {

using nlcausal::Index;
using Mat = nlcausal::Matrix<double>;
using Vec = nlcausal::Vector<double>;

inline Mat random_normal(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

inline Vec random_vector(Index n, std::mt19937_64& rng) { return random_normal(n, 1, rng); }

inline Mat random_spd(Index p, std::mt19937_64& rng) {
  const Mat a = random_normal(p, p, rng);
  return a * a.transpose() / static_cast<double>(p) + 0.5 * Mat::Identity(p, p);
}

/// Individual-level data whose second moments equal the given ones exactly.
/// Uses a Cholesky factor of the joint (z, y) moment matrix as pseudo-rows.
inline std::pair<Mat, Vec> reconstruct(const nlcausal::SummaryStats& s) {
  const Index p = s.p();
  Mat joint(p + 1, p + 1);
  joint.topLeftCorner(p, p) = s.S_zz;
  joint.topRightCorner(p, 1) = s.s_zy;
  joint.bottomLeftCorner(1, p) = s.s_zy.transpose();
  joint(p, p) = s.s_yy;
  const Mat root = Eigen::LLT<Mat>(joint).matrixU();  // joint = root' root
  return {root.leftCols(p), root.col(p)};
}

}  // namespace testing

namespace testing {

/// Error code thrown by `f`, if any.
template <typename F>
std::optional<nlcausal::ErrorCode> error_of(F&& f) {
  try {
    f();
  } catch (const nlcausal::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace testing
