// tests/test_plda.cc

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
#include <fstream>
#include <random>

#include "ivpipe/plda.h"
#include "oracles.h"

using namespace ivpipe;
namespace fs = std::filesystem;

namespace {

PldaModel RandomPlda(int dim, int factors, std::mt19937_64 &rng) {
  PldaModel p;
  p.m = oracle::RandomMatrix(dim, 1, rng).col(0);
  p.v = oracle::RandomMatrix(dim, factors, rng, 1.5);
  p.sigma = oracle::RandomSpd(dim, rng, 0.2);
  return p;
}

// Speakers drawn from a PLDA model: `per_spk` segments per speaker.
Matrix SamplePlda(const PldaModel &p, int speakers, int per_spk, std::mt19937_64 &rng,
                  std::vector<int> *labels) {
  Matrix x(speakers * per_spk, p.Dim());
  labels->clear();
  for (int s = 0; s < speakers; ++s) {
    const Vector y = oracle::RandomMatrix(p.NumFactors(), 1, rng).col(0);
    const Vector centre = p.m + p.v * y;
    x.middleRows(s * per_spk, per_spk) = oracle::SampleGaussian(centre, p.sigma, per_spk, rng);
    for (int i = 0; i < per_spk; ++i) labels->push_back(s);
  }
  return x;
}

}  // namespace

TEST_SUITE("plda") {

TEST_CASE("scalar kernel has closed-form P and Q") {
  PldaModel p;
  p.m = Vector::Zero(1);
  p.v = Matrix::Ones(1, 1);
  p.sigma = Matrix::Ones(1, 1);
  const ScoringKernel k = BuildKernel(p);
  CHECK(k.q(0, 0) == doctest::Approx(-1.0 / 6.0).epsilon(1e-14));
  CHECK(k.p(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(k.c == 0.0);
  Vector a(1), b(1);
  a << 2.0;
  b << -1.0;
  CHECK(ScoreTrial(a, b, k) == doctest::Approx(-4.0 / 6.0 - 1.0 / 6.0 - 4.0 / 3.0));
}

TEST_CASE("kernel score is twice the two-covariance LLR up to a constant") {
  std::mt19937_64 rng(17);
  for (int dim : {2, 5, 8}) {
    const PldaModel p = RandomPlda(dim, std::max(1, dim - 2), rng);
    const ScoringKernel k = BuildKernel(p);
    std::vector<double> diff;
    for (int t = 0; t < 50; ++t) {
      const Vector w1 = oracle::RandomMatrix(dim, 1, rng, 2.0).col(0);
      const Vector w2 = oracle::RandomMatrix(dim, 1, rng, 2.0).col(0);
      const double llr = oracle::TwoCovarianceLlr(w1, w2, p.m, p.v * p.v.transpose(), p.sigma);
      diff.push_back(0.5 * ScoreTrial(w1, w2, k) - llr);
    }
    double mean = 0.0, var = 0.0;
    for (double d : diff) mean += d / diff.size();
    for (double d : diff) var += (d - mean) * (d - mean) / diff.size();
    CHECK(var < 1e-16);
  }
}

TEST_CASE("kernel is symmetric in enrolment and test") {
  std::mt19937_64 rng(2);
  const ScoringKernel k = BuildKernel(RandomPlda(4, 2, rng));
  const Vector a = oracle::RandomMatrix(4, 1, rng).col(0), b = oracle::RandomMatrix(4, 1, rng).col(0);
  CHECK(ScoreTrial(a, b, k) == doctest::Approx(ScoreTrial(b, a, k)).epsilon(1e-13));
  CHECK_THROWS_AS(ScoreTrial(Vector(Vector::Zero(3)), b, k), DataError);
}

TEST_CASE("PLDA EM marginal likelihood is non-decreasing") {
  for (unsigned seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    const PldaModel truth = RandomPlda(6, 3, rng);
    std::vector<int> spk;
    const Matrix x = SamplePlda(truth, 40, 4, rng, &spk);
    std::vector<double> hist;
    const PldaModel fit = TrainPlda(x, spk, {3, 10, seed}, &hist);
    REQUIRE(hist.size() == 11);
    for (std::size_t i = 1; i < hist.size(); ++i)
      CHECK(hist[i] >= hist[i - 1] - 1e-8 * std::abs(hist[i - 1]));
    CHECK(hist.back() == doctest::Approx(PldaLogLikelihood(fit, x, spk)).epsilon(1e-10));
  }
}

TEST_CASE("warm start on singletons keeps the starting split") {
  std::mt19937_64 rng(6);
  const PldaModel truth = RandomPlda(5, 2, rng);
  std::vector<int> spk;
  const Matrix x = SamplePlda(truth, 200, 1, rng, &spk);
  std::vector<double> hist;
  const PldaModel warm = TrainPlda(x, spk, {2, 10, 1}, &hist, &truth);
  for (std::size_t i = 1; i < hist.size(); ++i)
    CHECK(hist[i] >= hist[i - 1] - 1e-8 * std::abs(hist[i - 1]));
  PldaModel start = truth;
  start.m = x.colwise().mean().transpose();
  CHECK(hist.front() == doctest::Approx(PldaLogLikelihood(start, x, spk)).epsilon(1e-12));
  // Only the total covariance is identifiable; the speaker share stays near
  // the starting one instead of absorbing the leading directions.
  const double share = (warm.v * warm.v.transpose()).trace() /
                       (warm.v * warm.v.transpose() + warm.sigma).trace();
  const double share0 = (truth.v * truth.v.transpose()).trace() /
                        (truth.v * truth.v.transpose() + truth.sigma).trace();
  CHECK(std::abs(share - share0) < 0.1);
  const PldaModel wrong = RandomPlda(5, 3, rng);
  CHECK_THROWS_AS(TrainPlda(x, spk, {2, 2, 1}, nullptr, &wrong), DataError);
}

TEST_CASE("factor count must fit the dimension") {
  std::mt19937_64 rng(4);
  std::vector<int> spk;
  const Matrix x = SamplePlda(RandomPlda(3, 1, rng), 5, 2, rng, &spk);
  CHECK_THROWS_AS(TrainPlda(x, spk, {4, 2, 1}), ConfigError);
  CHECK_THROWS_AS(TrainPlda(x, spk, {0, 2, 1}), ConfigError);
}

TEST_CASE("adaptation endpoints and interpolation") {
  std::mt19937_64 rng(8);
  const PldaModel in = RandomPlda(5, 2, rng), out = RandomPlda(5, 2, rng);
  const PldaModel a0 = AdaptPlda(in, out, 0.0);
  CHECK(a0.v == out.v);
  CHECK(a0.sigma == out.sigma);
  CHECK(a0.m == out.m);
  const PldaModel a1 = AdaptPlda(in, out, 1.0);
  CHECK(a1.v == in.v);
  CHECK(a1.sigma == in.sigma);
  CHECK(a1.m == out.m);
  CHECK(AdaptPlda(in, out, 1.0, true).m == in.m);
  const PldaModel mid = AdaptPlda(in, out, 0.1);
  CHECK((mid.v - (0.1 * in.v + 0.9 * out.v)).cwiseAbs().maxCoeff() <= 1e-15 * (1 + out.v.cwiseAbs().maxCoeff()));
  CHECK((mid.sigma - (0.1 * in.sigma + 0.9 * out.sigma)).cwiseAbs().maxCoeff() <=
        1e-15 * (1 + out.sigma.cwiseAbs().maxCoeff()));
  CHECK(mid.domain == PldaDomain::kAdapted);
  CHECK_THROWS_AS(AdaptPlda(in, out, 1.5), ConfigError);
  CHECK_THROWS_AS(AdaptPlda(RandomPlda(4, 2, rng), out, 0.5), DataError);
}

TEST_CASE("factor alignment keeps the likelihood and approaches the reference") {
  std::mt19937_64 rng(12);
  const PldaModel p = RandomPlda(6, 3, rng);
  std::vector<int> spk;
  const Matrix x = SamplePlda(p, 20, 3, rng, &spk);
  // A rotated copy of V: alignment must undo the rotation exactly.
  const Matrix rot = Eigen::HouseholderQR<Matrix>(oracle::RandomMatrix(3, 3, rng)).householderQ();
  PldaModel rotated = p;
  rotated.v = p.v * rot;
  const PldaModel aligned = AlignFactors(rotated, p.v);
  CHECK((aligned.v - p.v).norm() < 1e-10 * p.v.norm());
  CHECK(PldaLogLikelihood(rotated, x, spk) == doctest::Approx(PldaLogLikelihood(p, x, spk)).epsilon(1e-12));
  const PldaModel other = AlignFactors(RandomPlda(6, 3, rng), p.v);
  CHECK(PldaLogLikelihood(other, x, spk) ==
        doctest::Approx(PldaLogLikelihood(AlignFactors(other, p.v), x, spk)).epsilon(1e-12));
  CHECK_THROWS_AS(AlignFactors(p, Matrix::Zero(6, 2)), DataError);
}

TEST_CASE("enrolment averages three segments and keeps single ones") {
  Embedding a, b, c;
  a.w = Vector::Unit(3, 0);
  b.w = Vector::Unit(3, 1);
  c.w = Vector::Unit(3, 2);
  a.id = "a";
  std::vector<Embedding> one{a};
  const Embedding e1 = Enroll(one, "m1");
  CHECK(e1.id == "m1");
  CHECK(e1.w == a.w);
  std::vector<Embedding> three{a, b, c};
  const Embedding e3 = Enroll(three, "m3");
  CHECK((e3.w - Vector::Constant(3, 1.0 / std::sqrt(3.0))).norm() < 1e-15);
  std::vector<Embedding> two{a, b};
  CHECK_THROWS_AS(Enroll(two, "m2"), DataError);
  b.w = -a.w;
  c.w = Vector::Zero(3);
  std::vector<Embedding> cancel{a, b, c};
  CHECK_THROWS_AS(Enroll(cancel, "m0"), DataError);
}

TEST_CASE("model, kernel, trial and score files round-trip") {
  std::mt19937_64 rng(3);
  const fs::path dir = fs::temp_directory_path() / "ivpipe_test_plda";
  fs::create_directories(dir);
  PldaModel p = RandomPlda(4, 2, rng);
  p.domain = PldaDomain::kIn;
  WritePlda(dir / "p.ivpl", p);
  const PldaModel r = ReadPlda(dir / "p.ivpl");
  CHECK(r.v == p.v);
  CHECK(r.sigma == p.sigma);
  CHECK(r.domain == PldaDomain::kIn);

  const ScoringKernel k = BuildKernel(p);
  WriteKernel(dir / "k.ivkn", k);
  const ScoringKernel kr = ReadKernel(dir / "k.ivkn");
  CHECK(kr.p == k.p);
  CHECK(kr.q == k.q);
  CHECK(kr.m == k.m);

  const std::vector<TrialKey> key{{"m1", "t1", true}, {"m1", "t2", false}};
  WriteKey(dir / "key.txt", key);
  const auto kk = ReadTrials(dir / "key.txt", true);
  REQUIRE(kk.size() == 2);
  CHECK(kk[0].target);
  CHECK_FALSE(kk[1].target);
  {
    std::ofstream f(dir / "trials.txt");
    f << "m1 t1\n";
  }
  CHECK(ReadTrials(dir / "trials.txt", false).size() == 1);
  CHECK_THROWS_AS(ReadTrials(dir / "trials.txt", true), DataError);

  std::map<std::string, Embedding> models, tests;
  models["m1"].w = oracle::RandomMatrix(4, 1, rng).col(0);
  tests["t1"].w = oracle::RandomMatrix(4, 1, rng).col(0);
  tests["t2"].w = oracle::RandomMatrix(4, 1, rng).col(0);
  const auto scores = ScoreTrials(k, models, tests, key);
  REQUIRE(scores.size() == 2);
  CHECK(scores[1].score == ScoreTrial(models["m1"].w, tests["t2"].w, k));
  WriteScores(dir / "s.txt", scores);
  const auto sr = ReadScores(dir / "s.txt");
  CHECK(sr[0].score == doctest::Approx(scores[0].score).epsilon(1e-9));
  const std::vector<TrialKey> missing{{"m9", "t1", true}};
  CHECK_THROWS_AS(ScoreTrials(k, models, tests, missing), DataError);
  fs::remove_all(dir);
}

}  // TEST_SUITE
