// tests/test_gmm.cc

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

#include <cmath>
#include <filesystem>
#include <random>

#include "ivpipe/gmm.h"
#include "oracles.h"

using namespace ivpipe;
namespace fs = std::filesystem;

namespace {

GmmModel RandomGmm(int m, int d, std::mt19937_64 &rng) {
  Vector w = (oracle::RandomMatrix(m, 1, rng).col(0).array().abs() + 0.2).matrix();
  w /= w.sum();
  std::vector<Matrix> covs;
  for (int c = 0; c < m; ++c) covs.push_back(oracle::RandomSpd(d, rng));
  return GmmModel(w, oracle::RandomMatrix(m, d, rng, 3.0), covs);
}

FeatureMatrix SampleFrames(const GmmModel &g, int n, std::mt19937_64 &rng) {
  std::discrete_distribution<int> pick(g.weights().data(), g.weights().data() + g.weights().size());
  FeatureMatrix f;
  f.frames.resize(n, g.Dim());
  for (int t = 0; t < n; ++t) {
    const int c = pick(rng);
    f.frames.row(t) = oracle::SampleGaussian(g.means().row(c).transpose(), g.covariances()[c], 1, rng);
  }
  return f;
}

}  // namespace

TEST_SUITE("gmm") {

TEST_CASE("responsibilities equal normalized weighted Gaussian densities") {
  std::mt19937_64 rng(1);
  const GmmModel g = RandomGmm(4, 3, rng);
  const Matrix x = oracle::RandomMatrix(10, 3, rng, 2.0);
  Vector ll;
  const Matrix post = g.Posteriors(x, &ll);
  for (int t = 0; t < 10; ++t) {
    Vector lp(4);
    for (int c = 0; c < 4; ++c)
      lp(c) = std::log(g.weights()(c)) +
              oracle::LogGaussian(x.row(t).transpose(), g.means().row(c).transpose(), g.covariances()[c]);
    const double lse = lp.maxCoeff() + std::log((lp.array() - lp.maxCoeff()).exp().sum());
    CHECK(ll(t) == doctest::Approx(lse).epsilon(1e-10));
    for (int c = 0; c < 4; ++c) CHECK(post(t, c) == doctest::Approx(std::exp(lp(c) - lse)).epsilon(1e-10));
    CHECK(post.row(t).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("non-SPD covariance is a numerical error") {
  std::vector<Matrix> covs{-Matrix::Identity(2, 2)};
  CHECK_THROWS_AS(GmmModel(Vector::Ones(1), Matrix::Zero(1, 2), covs), NumericalError);
}

TEST_CASE("UBM EM is monotone and recovers a well separated mixture") {
  for (unsigned seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    const GmmModel truth = RandomGmm(3, 2, rng);
    const FeatureMatrix f = SampleFrames(truth, 3000, rng);
    UbmTrainOptions o;
    o.num_components = 3;
    o.num_iters = 15;
    o.seed = seed;
    std::vector<double> hist;
    const GmmModel g = TrainUbm({f}, o, &hist);
    REQUIRE(hist.size() == 16);
    for (std::size_t i = 1; i < hist.size(); ++i)
      CHECK(hist[i] >= hist[i - 1] - 1e-8 * std::abs(hist[i - 1]));
    Vector ll_truth, ll_fit;
    truth.Posteriors(f.frames, &ll_truth);
    g.Posteriors(f.frames, &ll_fit);
    CHECK(ll_fit.mean() >= ll_truth.mean() - 0.01);
  }
}

TEST_CASE("UBM training needs enough frames") {
  FeatureMatrix f;
  f.frames = Matrix::Random(10, 4);
  UbmTrainOptions o;
  o.num_components = 8;
  CHECK_THROWS_AS(TrainUbm({f}, o), DataError);
}

TEST_CASE("Baum-Welch statistics are posterior sums") {
  std::mt19937_64 rng(4);
  const GmmModel g = RandomGmm(3, 2, rng);
  const FeatureMatrix f = SampleFrames(g, 50, rng);
  const SuffStats s = AccumulateStats(g, f, "u");
  const Matrix post = g.Posteriors(f.frames);
  for (int c = 0; c < 3; ++c) {
    double n = 0.0;
    Vector first = Vector::Zero(2);
    for (int t = 0; t < 50; ++t) {
      n += post(t, c);
      first += post(t, c) * f.frames.row(t).transpose();
    }
    CHECK(s.zero_order(c) == doctest::Approx(n));
    CHECK((s.first_order.row(c).transpose() - first).norm() < 1e-10);
  }
  CHECK(s.zero_order.sum() == doctest::Approx(50.0));

  const SuffStats scaled = ScaleStats(s, 0.33);
  CHECK(scaled.zero_order.sum() == doctest::Approx(0.33 * 50.0));
  CHECK(scaled.scale == 0.33);
  CHECK_THROWS_AS(ScaleStats(scaled, 0.33), DataError);
  CHECK_THROWS_AS(ScaleStats(s, 0.0), ConfigError);
  CHECK_THROWS_AS(ScaleStats(s, 1.5), ConfigError);
}

TEST_CASE("model and statistics files round-trip") {
  std::mt19937_64 rng(6);
  const GmmModel g = RandomGmm(2, 3, rng);
  const fs::path dir = fs::temp_directory_path() / "ivpipe_test_gmm";
  fs::create_directories(dir);
  WriteGmm(dir / "u.ivgm", g);
  const GmmModel r = ReadGmm(dir / "u.ivgm");
  CHECK(r.Fingerprint() == g.Fingerprint());
  CHECK((r.means() - g.means()).norm() == 0.0);

  SuffStats s = AccumulateStats(g, SampleFrames(g, 20, rng), "utt7");
  s = ScaleStats(s, 0.5);
  WriteStats(dir / "utt7.ivst", s);
  const SuffStats t = ReadStats(dir / "utt7.ivst");
  CHECK(t.utterance_id == "utt7");
  CHECK(t.scale == 0.5);
  CHECK((t.first_order - s.first_order).norm() == 0.0);
  fs::remove_all(dir);
}

}  // TEST_SUITE
