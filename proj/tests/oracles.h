// tests/oracles.h

// Copyright 2026 The ivpipe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Reference computations written independently of the library code paths:
// direct formulas, exhaustive searches and dense Gaussian algebra.

#ifndef IVPIPE_TESTS_ORACLES_H_
#define IVPIPE_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline Matrix RandomMatrix(int rows, int cols, std::mt19937_64 &rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

// A A' / n + ridge I, well conditioned for small dimensions.
inline Matrix RandomSpd(int dim, std::mt19937_64 &rng, double ridge = 0.1) {
  const Matrix a = RandomMatrix(dim, dim + 3, rng);
  return a * a.transpose() / (dim + 3) + ridge * Matrix::Identity(dim, dim);
}

// Samples as rows from N(mean, cov).
inline Matrix SampleGaussian(const Vector &mean, const Matrix &cov, int n, std::mt19937_64 &rng) {
  const Matrix l = Eigen::LLT<Matrix>(cov).matrixL();
  const Matrix z = RandomMatrix(n, static_cast<int>(mean.size()), rng);
  return (z * l.transpose()).rowwise() + mean.transpose();
}

inline double LogGaussian(const Vector &x, const Vector &mean, const Matrix &cov) {
  const Eigen::LDLT<Matrix> ldlt(cov);
  const Vector d = x - mean;
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * (x.size() * std::log(2.0 * std::numbers::pi) + logdet + d.dot(ldlt.solve(d)));
}

// Same-speaker versus different-speaker log-likelihood ratio of two vectors
// under the two-covariance model, from the joint 2D-dimensional Gaussians.
inline double TwoCovarianceLlr(const Vector &w1, const Vector &w2, const Vector &m,
                               const Matrix &sb, const Matrix &sw) {
  const int d = static_cast<int>(m.size());
  const Matrix st = sb + sw;
  Matrix same(2 * d, 2 * d), diff = Matrix::Zero(2 * d, 2 * d);
  same << st, sb, sb, st;
  diff.topLeftCorner(d, d) = st;
  diff.bottomRightCorner(d, d) = st;
  Vector x(2 * d), mu(2 * d);
  x << w1, w2;
  mu << m, m;
  return LogGaussian(x, mu, same) - LogGaussian(x, mu, diff);
}

// Naive O(N^2) DFT power spectrum of a zero-padded real frame.
inline Vector NaivePowerSpectrum(const Vector &frame, int n) {
  Vector p(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int t = 0; t < frame.size(); ++t)
      acc += frame(t) * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n);
    p(k) = std::norm(acc);
  }
  return p;
}

// Exhaustive search over every 2-state path; returns the best log score.
inline double BestPathBruteForce(const Matrix &loglikes, const Eigen::Matrix2d &trans,
                                 std::vector<bool> *best_path) {
  const int t_len = static_cast<int>(loglikes.rows());
  double best = -std::numeric_limits<double>::infinity();
  for (unsigned mask = 0; mask < (1u << t_len); ++mask) {
    double s = std::log(0.5);
    int prev = -1;
    for (int t = 0; t < t_len; ++t) {
      const int st = (mask >> t) & 1u;
      if (prev >= 0) s += std::log(trans(prev, st));
      s += loglikes(t, st);
      prev = st;
    }
    if (s > best) {
      best = s;
      if (best_path) {
        best_path->assign(t_len, false);
        for (int t = 0; t < t_len; ++t) (*best_path)[t] = (mask >> t) & 1u;
      }
    }
  }
  return best;
}

// Cdet at one threshold by direct counting; a trial is accepted when
// score >= thr.
inline double CdetAt(const std::vector<double> &s, const std::vector<bool> &lab, double thr,
                     double p_tar, double c_miss, double c_fa, double *p_miss_out = nullptr,
                     double *p_fa_out = nullptr) {
  double nt = 0, nn = 0, miss = 0, fa = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (lab[i]) {
      ++nt;
      if (s[i] < thr) ++miss;
    } else {
      ++nn;
      if (s[i] >= thr) ++fa;
    }
  }
  if (p_miss_out) *p_miss_out = miss / nt;
  if (p_fa_out) *p_fa_out = fa / nn;
  return (c_miss * p_tar) * (miss / nt) + (c_fa * (1.0 - p_tar)) * (fa / nn);
}

// Minimum over every candidate threshold (each score and +-inf).
inline double MinCdetBruteForce(const std::vector<double> &s, const std::vector<bool> &lab,
                                double p_tar, double c_miss, double c_fa) {
  double best = CdetAt(s, lab, std::numeric_limits<double>::infinity(), p_tar, c_miss, c_fa);
  best = std::min(best, CdetAt(s, lab, -std::numeric_limits<double>::infinity(), p_tar, c_miss,
                               c_fa));
  for (double thr : s) best = std::min(best, CdetAt(s, lab, thr, p_tar, c_miss, c_fa));
  return best;
}

// EER from (Pmiss, Pfa) counted at ascending candidate thresholds (each
// distinct score, then +inf), interpolated linearly where Pmiss - Pfa first
// becomes non-negative.
inline double EerBruteForce(std::vector<double> s, const std::vector<bool> &lab) {
  std::vector<double> thr = s;
  std::sort(thr.begin(), thr.end());
  thr.erase(std::unique(thr.begin(), thr.end()), thr.end());
  thr.push_back(std::numeric_limits<double>::infinity());
  double prev_m = 0, prev_f = 0;
  for (std::size_t k = 0; k < thr.size(); ++k) {
    double pm, pf;
    CdetAt(s, lab, thr[k], 0.5, 1, 1, &pm, &pf);
    if (k > 0 && pm - pf >= 0.0) {
      const double d0 = prev_m - prev_f, d1 = pm - pf;
      return prev_m + d0 / (d0 - d1) * (pm - prev_m);
    }
    prev_m = pm;
    prev_f = pf;
  }
  return 0.0;
}

// Largest principal angle (degrees) between the column spans of a and b,
// via Gram-Schmidt bases and the smallest singular value of Qa' Qb.
inline double MaxPrincipalAngleDeg(const Matrix &a, const Matrix &b) {
  auto orth = [](Matrix m) {
    for (int j = 0; j < m.cols(); ++j) {
      for (int i = 0; i < j; ++i) m.col(j) -= m.col(i).dot(m.col(j)) * m.col(i);
      m.col(j).normalize();
    }
    return m;
  };
  const Matrix qa = orth(a), qb = orth(b);
  Eigen::JacobiSVD<Matrix> svd(qa.transpose() * qb);
  const double smin = std::min(1.0, svd.singularValues().minCoeff());
  return std::acos(smin) * 180.0 / std::numbers::pi;
}

}  // namespace oracle

#endif  // IVPIPE_TESTS_ORACLES_H_
