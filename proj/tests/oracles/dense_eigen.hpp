#pragma once

// Dense reference for (D - W) y = lambda D y via a full generalized
// eigendecomposition.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace flowcut::oracle {

struct DenseSpectrum {
  Eigen::VectorXd values;   // ascending
  Eigen::MatrixXd vectors;  // columns, y^T D y = 1
};

inline DenseSpectrum dense_generalized_spectrum(const std::vector<double>& w, std::size_t n) {
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd W(N, N);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < N; ++j) W(i, j) = w[static_cast<std::size_t>(i * N + j)];
  }
  const Eigen::VectorXd d = W.rowwise().sum();
  const Eigen::MatrixXd D = d.asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(D - W, D);
  return {solver.eigenvalues(), solver.eigenvectors()};
}

/// Second eigenvector with the library's sign convention (largest |y| positive).
inline std::vector<double> second_vector(const DenseSpectrum& s) {
  Eigen::VectorXd y = s.vectors.col(1);
  Eigen::Index arg = 0;
  y.cwiseAbs().maxCoeff(&arg);
  if (y[arg] < 0) y = -y;
  return {y.data(), y.data() + y.size()};
}

/// max_i |a_i - b_i| minimised over the sign of b. Eigenvectors whose
/// largest entries tie in magnitude have no stable sign convention.
inline double max_diff_up_to_sign(const std::vector<double>& a, const std::vector<double>& b) {
  double plus = 0.0, minus = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    plus = std::max(plus, std::abs(a[i] - b[i]));
    minus = std::max(minus, std::abs(a[i] + b[i]));
  }
  return std::min(plus, minus);
}

/// |(D - W) y - lambda D y| / |D y|
inline double generalized_residual(const std::vector<double>& w, std::size_t n, const std::vector<double>& y,
                                   double lambda) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0, wy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      d += w[i * n + j];
      wy += w[i * n + j] * y[j];
    }
    const double r = d * y[i] - wy - lambda * d * y[i];
    num += r * r;
    den += d * y[i] * d * y[i];
  }
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace flowcut::oracle
