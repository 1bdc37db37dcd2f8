// Test-only reference implementations: textbook dense Kalman filter,
// Monte-Carlo moment estimation, and random generators for beliefs.
// These stay independent of the library's factorized/tape code paths.
#ifndef HIPRSSM_TESTS_ORACLES_HPP_
#define HIPRSSM_TESTS_ORACLES_HPP_

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "hiprssm/gauss.hpp"
#include "hiprssm/rng.hpp"

namespace oracles {

using hiprssm::Matrix;
using hiprssm::Vector;

// One textbook dense Kalman predict step.
inline void kf_predict(Vector& mean, Matrix& cov, const Matrix& A,
                       const Vector& offset, const Matrix& Q) {
  mean = A * mean + offset;
  cov = A * cov * A.transpose() + Q;
}

// One textbook dense Kalman update step with full matrix inversion.
inline void kf_update(Vector& mean, Matrix& cov, const Matrix& H,
                      const Vector& y, const Matrix& R) {
  const Matrix S = H * cov * H.transpose() + R;
  const Matrix K = cov * H.transpose() * S.inverse();
  mean = mean + K * (y - H * mean);
  const Matrix I = Matrix::Identity(cov.rows(), cov.cols());
  cov = (I - K * H) * cov;
}

// Draws from N(mean, cov) via Cholesky.
class GaussianSampler {
 public:
  GaussianSampler(const Vector& mean, const Matrix& cov, uint64_t seed)
      : mean_(mean), chol_(cov.llt().matrixL()), engine_(seed) {}

  Vector sample() {
    Vector z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal_(engine_);
    return mean_ + chol_ * z;
  }

 private:
  Vector mean_;
  Matrix chol_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

inline Vector random_vector(hiprssm::Rng& rng, Eigen::Index d, double lo,
                            double hi) {
  Vector v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

inline Matrix random_matrix(hiprssm::Rng& rng, Eigen::Index r, Eigen::Index c,
                            double lo, double hi) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  }
  return m;
}

inline Matrix random_psd(hiprssm::Rng& rng, Eigen::Index d) {
  Matrix a = random_matrix(rng, d, d, -1.0, 1.0);
  return a * a.transpose() + 0.1 * Matrix::Identity(d, d);
}

// Random factorized belief with comfortably PSD per-coordinate blocks.
inline hiprssm::FactorizedBelief random_belief(hiprssm::Rng& rng,
                                               Eigen::Index m) {
  Vector var_u(m), var_l(m), cov_s(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    var_u(i) = rng.uniform(0.2, 3.0);
    var_l(i) = rng.uniform(0.2, 3.0);
    const double bound = 0.9 * std::sqrt(var_u(i) * var_l(i));
    cov_s(i) = rng.uniform(-bound, bound);
  }
  return hiprssm::FactorizedBelief(random_vector(rng, 2 * m, -2.0, 2.0),
                                   var_u, var_l, cov_s);
}

}  // namespace oracles

#endif  // HIPRSSM_TESTS_ORACLES_HPP_
