// tests/test_transforms.cc

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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "ivpipe/linalg.h"
#include "ivpipe/transforms.h"
#include "oracles.h"

using namespace ivpipe;
namespace fs = std::filesystem;

namespace {

// Balanced Gaussian classes with a shared within-class covariance.
Matrix GaussianClasses(int classes, int per_class, int dim, double spread, std::mt19937_64 &rng,
                       std::vector<int> *labels) {
  const Matrix centres = oracle::RandomMatrix(classes, dim, rng, spread);
  const Matrix within = oracle::RandomSpd(dim, rng, 0.2);
  Matrix x(classes * per_class, dim);
  labels->clear();
  for (int c = 0; c < classes; ++c) {
    x.middleRows(c * per_class, per_class) =
        oracle::SampleGaussian(centres.row(c).transpose(), within, per_class, rng);
    for (int i = 0; i < per_class; ++i) labels->push_back(c);
  }
  return x;
}

Matrix ApplyRows(const LinearTransform &t, const Matrix &x) {
  Matrix y(x.rows(), t.out_dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i) = t.Apply(x.row(i).transpose()).transpose();
  return y;
}

Matrix CovarianceN(const Matrix &x) {
  const Matrix c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / static_cast<double>(x.rows());
}

// Average of per-class covariances (classes with at least two samples).
Matrix AverageClassCovariance(const Matrix &x, const std::vector<int> &labels) {
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  Matrix w = Matrix::Zero(x.cols(), x.cols());
  int used = 0;
  for (int c = 0; c < k; ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
    if (idx.size() < 2) continue;
    Matrix xc(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) xc.row(i) = x.row(idx[i]);
    w += CovarianceN(xc);
    ++used;
  }
  return w / used;
}

// Brute-force nonparametric scatter: full sort of every candidate list.
ScatterPair NdaBruteForce(const Matrix &x, const std::vector<int> &labels, int k, double alpha) {
  const int n = static_cast<int>(x.rows()), dim = static_cast<int>(x.cols());
  const int classes = *std::max_element(labels.begin(), labels.end()) + 1;
  ScatterPair s{Matrix::Zero(dim, dim), Matrix::Zero(dim, dim), Matrix()};
  auto knn = [&](int i, int cls, int kk, double *kth) {
    std::vector<std::pair<double, int>> c;
    for (int j = 0; j < n; ++j)
      if (j != i && labels[j] == cls) c.emplace_back((x.row(i) - x.row(j)).norm(), j);
    std::sort(c.begin(), c.end());
    Vector mean = Vector::Zero(dim);
    for (int q = 0; q < kk; ++q) mean += x.row(c[q].second).transpose();
    *kth = c[kk - 1].first;
    return Vector(mean / kk);
  };
  for (int i = 0; i < n; ++i) {
    const int c = labels[i];
    const int size_c = static_cast<int>(std::count(labels.begin(), labels.end(), c));
    double dw;
    const Vector dev_w = x.row(i).transpose() - knn(i, c, std::min(k, size_c - 1), &dw);
    s.within += dev_w * dev_w.transpose();
    for (int o = 0; o < classes; ++o) {
      if (o == c) continue;
      const int size_o = static_cast<int>(std::count(labels.begin(), labels.end(), o));
      double db;
      const Vector dev_b = x.row(i).transpose() - knn(i, o, std::min(k, size_o), &db);
      const double wgt = std::min(std::pow(dw, alpha), std::pow(db, alpha)) /
                         (std::pow(dw, alpha) + std::pow(db, alpha));
      s.between += wgt * dev_b * dev_b.transpose();
    }
  }
  s.within /= n;
  s.between /= n;
  return s;
}

}  // namespace

TEST_SUITE("transforms") {

TEST_CASE("class scatter on a hand example") {
  Matrix x(4, 1);
  x << 0, 2, 10, 12;
  const std::vector<int> lab{0, 0, 1, 1};
  const ScatterPair s = ClassScatter(x, lab);
  CHECK(s.within(0, 0) == doctest::Approx(1.0));   // deviations +-1
  CHECK(s.between(0, 0) == doctest::Approx(25.0)); // class means 1, 11 around 6
  CHECK(s.total(0, 0) == doctest::Approx(26.0));
  std::vector<std::string> names{"b", "a", "b"};
  int k = 0;
  CHECK(DenseLabels(names, &k) == std::vector<int>{0, 1, 0});
  CHECK(k == 2);
}

TEST_CASE("nonparametric scatter equals the brute-force neighbour oracle") {
  std::mt19937_64 rng(7);
  std::vector<int> lab;
  const Matrix x = GaussianClasses(4, 9, 3, 2.0, rng, &lab);
  for (int k : {1, 3, 8}) {
    const ScatterPair got = NdaScatter(x, lab, k, 2.0);
    const ScatterPair want = NdaBruteForce(x, lab, k, 2.0);
    CHECK((got.within - want.within).norm() < 1e-12 * want.within.norm());
    CHECK((got.between - want.between).norm() < 1e-12 * want.between.norm());
  }
  const std::vector<int> singleton{0, 0, 1};
  CHECK_THROWS_AS(NdaScatter(x.topRows(3), singleton, 2), DataError);
  CHECK_THROWS_AS(NdaScatter(x, lab, 0), ConfigError);
}

TEST_CASE("NDA approaches LDA when k reaches the class size") {
  std::mt19937_64 rng(12);
  std::vector<int> lab;
  const Matrix x = GaussianClasses(4, 60, 6, 2.5, rng, &lab);
  const LinearTransform lda = FitLda(x, lab, 3);
  const LinearTransform nda = FitNda(x, lab, 59, 3, 2.0);
  CHECK(oracle::MaxPrincipalAngleDeg(lda.a.transpose(), nda.a.transpose()) < 5.0);
}

TEST_CASE("LDA rows diagonalize both scatters") {
  std::mt19937_64 rng(3);
  std::vector<int> lab;
  const Matrix x = GaussianClasses(5, 20, 4, 2.0, rng, &lab);
  const ScatterPair s = ClassScatter(x, lab);
  Vector ev;
  const Matrix a = DiscriminantProjection(s.between, s.within, 3, 1e-8, &ev);
  CHECK((a * s.within * a.transpose() - Matrix::Identity(3, 3)).norm() < 1e-9);
  const Matrix b = a * s.between * a.transpose();
  CHECK((b - Matrix(ev.asDiagonal())).norm() < 1e-9);
  CHECK(ev(0) >= ev(1));
  CHECK(ev(1) >= ev(2));
  CHECK_THROWS_AS(FitLda(x, lab, 5), ConfigError);
}

TEST_CASE("language-normalized between scatter on a hand example") {
  // Language 0: speakers at 1 and 3 (language mean 2); language 1: speakers
  // at 10 and 14 (language mean 12). Two samples per speaker.
  Matrix x(8, 1);
  x << 0.5, 1.5, 2.5, 3.5, 9, 11, 13, 15;
  const std::vector<int> spk{0, 0, 1, 1, 2, 2, 3, 3};
  const std::vector<int> lang{0, 0, 0, 0, 1, 1, 1, 1};
  const ScatterPair s = LanguageNormalizedScatter(x, spk, lang);
  // between = (2*1 + 2*1 + 2*4 + 2*4) / 8
  CHECK(s.between(0, 0) == doctest::Approx(20.0 / 8.0));
  CHECK(s.total(0, 0) == doctest::Approx(x.squaredNorm() / 8.0));
  CHECK(s.within(0, 0) == doctest::Approx(s.total(0, 0) - s.between(0, 0)));
  const std::vector<int> bad_lang{0, 1, 0, 0, 1, 1, 1, 1};
  CHECK_THROWS_AS(LanguageNormalizedScatter(x, spk, bad_lang), DataError);
}

TEST_CASE("language normalization ignores language offsets") {
  std::mt19937_64 rng(9);
  std::vector<int> spk;
  Matrix x = GaussianClasses(8, 6, 3, 0.5, rng, &spk);
  std::vector<int> lang(spk.size());
  for (std::size_t i = 0; i < spk.size(); ++i) lang[i] = spk[i] % 2;
  // A large per-language offset along e0 is not speaker information.
  for (std::size_t i = 0; i < spk.size(); ++i) x(static_cast<Eigen::Index>(i), 0) += lang[i] ? 30.0 : -30.0;
  const ScatterPair ln = LanguageNormalizedScatter(x, spk, lang);
  const ScatterPair plain = ClassScatter(x, spk);
  CHECK(ln.between(0, 0) < 0.1 * plain.between(0, 0));
}

TEST_CASE("whitening yields identity covariance") {
  std::mt19937_64 rng(5);
  const Matrix cov = oracle::RandomSpd(6, rng, 0.05);
  const Matrix x = oracle::SampleGaussian(Vector::Constant(6, 3.0), cov, 500, rng);
  const LinearTransform t = FitCenterWhiten(x);
  const Matrix y = ApplyRows(t, x);
  CHECK((CovarianceN(y) - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(y.colwise().mean().norm() < 1e-10);
  const LinearTransform c = FitCenter(x);
  CHECK(ApplyRows(c, x).colwise().mean().norm() < 1e-10);
}

TEST_CASE("WCCN yields identity within-class covariance") {
  std::mt19937_64 rng(6);
  std::vector<int> lab;
  const Matrix x = GaussianClasses(10, 8, 5, 2.0, rng, &lab);
  const LinearTransform t = FitWccn(x, lab);
  const Matrix w = AverageClassCovariance(ApplyRows(t, x), lab);
  CHECK((w - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("short-duration compensation on full/excerpt pairs") {
  std::mt19937_64 rng(10);
  const Matrix full = oracle::RandomMatrix(60, 6, rng, 2.0);
  const Matrix excerpt = full + oracle::RandomMatrix(60, 6, rng, 0.3);
  for (bool wccn_first : {false, true}) {
    const ShortDurationComp sc = FitShortDurationComp(full, excerpt, 5, wccn_first);
    CHECK(sc.lda.out_dim == 5);
    CHECK(sc.wccn.in_dim == (wccn_first ? 6 : 5));
    if (!wccn_first) {
      Matrix both(120, 6);
      both << full, excerpt;
      std::vector<int> lab(120);
      for (int i = 0; i < 60; ++i) lab[i] = lab[60 + i] = i;
      const Matrix y = ApplyRows(sc.wccn, ApplyRows(sc.lda, both));
      CHECK((AverageClassCovariance(y, lab) - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
  CHECK_THROWS_AS(FitShortDurationComp(full, excerpt.topRows(10), 5), DataError);
}

TEST_CASE("length normalization gives unit norms") {
  std::mt19937_64 rng(11);
  const Matrix x = oracle::RandomMatrix(100, 7, rng, 5.0);
  for (int i = 0; i < 100; ++i)
    CHECK(std::abs(LengthNormalize(Vector(x.row(i).transpose())).norm() - 1.0) < 1e-12);
  CHECK_THROWS_AS(LengthNormalize(Vector(Vector::Zero(3))), DataError);
}

TEST_CASE("chains enforce order and dimensions") {
  std::mt19937_64 rng(13);
  std::vector<int> lab;
  const Matrix x = GaussianClasses(4, 10, 4, 2.0, rng, &lab);
  const LinearTransform white = FitCenterWhiten(x);
  const LinearTransform lda = FitLda(x, lab, 2);
  Embedding e;
  e.id = "e";
  e.w = x.row(0).transpose();
  const std::vector<LinearTransform> ok{white, lda, LengthNormTransform(2)};
  const Embedding out = ApplyChain(ok, e);
  CHECK(out.w.size() == 2);
  CHECK(out.stage == Stage::kLengthNorm);
  CHECK(out.w.norm() == doctest::Approx(1.0));
  const std::vector<LinearTransform> backwards{lda, white};
  CHECK_THROWS_AS(ApplyChain(backwards, e), Error);
  const std::vector<LinearTransform> repeat{white, white};
  CHECK_THROWS_AS(ApplyChain(repeat, e), DataError);

  const fs::path dir = fs::temp_directory_path() / "ivpipe_test_tr";
  fs::create_directories(dir);
  WriteTransform(dir / "w.ivtr", white);
  WriteTransform(dir / "l.ivtr", lda);
  WriteTransform(dir / "n.ivtr", LengthNormTransform(2));
  WriteChain(dir / "chain.txt", {dir / "w.ivtr", dir / "l.ivtr", dir / "n.ivtr"});
  const auto chain = ReadChain(dir / "chain.txt");
  REQUIRE(chain.size() == 3);
  CHECK((ApplyChain(chain, e).w - out.w).norm() < 1e-12);
  fs::remove_all(dir);
}

}  // TEST_SUITE
