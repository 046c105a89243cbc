// tests/test_sad.cc

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

#include "ivpipe/frontend.h"
#include "ivpipe/sad.h"
#include "oracles.h"

using namespace ivpipe;
namespace fs = std::filesystem;

TEST_SUITE("sad") {

TEST_CASE("Viterbi path equals exhaustive search") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 200; ++trial) {
    const int t_len = 1 + trial % 12;
    const Matrix ll = oracle::RandomMatrix(t_len, 2, rng, 1.5);
    const double a = u(rng), b = u(rng);
    Eigen::Matrix2d trans;
    trans << a, 1 - a, 1 - b, b;
    std::vector<bool> best;
    const double best_score = oracle::BestPathBruteForce(ll, trans, &best);
    const std::vector<bool> path = ViterbiDecode(ll, trans);
    CHECK(path == best);
    CHECK(PathLogProb(ll, trans, path) == doctest::Approx(best_score).epsilon(1e-12));
  }
}

TEST_CASE("sticky transitions smooth isolated flips") {
  Matrix ll(9, 2);
  for (int t = 0; t < 9; ++t) ll.row(t) << -1.0, 0.0;  // speech favoured
  ll.row(4) << 0.0, -1.0;                               // one contrary frame
  Eigen::Matrix2d sticky;
  sticky << 0.99, 0.01, 0.01, 0.99;
  const auto path = ViterbiDecode(ll, sticky);
  CHECK(std::count(path.begin(), path.end(), true) == 9);
  Eigen::Matrix2d loose;
  loose << 0.5, 0.5, 0.5, 0.5;
  CHECK_FALSE(ViterbiDecode(ll, loose)[4]);
}

TEST_CASE("Viterbi rejects malformed input") {
  Eigen::Matrix2d trans;
  trans << 0.9, 0.1, 0.1, 0.9;
  CHECK_THROWS_AS(ViterbiDecode(Matrix(0, 2), trans), DataError);
  CHECK_THROWS_AS(ViterbiDecode(Matrix::Zero(3, 3), trans), DataError);
}

TEST_CASE("energy source separates loud frames from near silence") {
  FeatureMatrix fb;
  fb.frames = Matrix::Constant(40, 10, -20.0);
  fb.frames.middleRows(10, 20).setConstant(0.0);
  SadModel model;  // peak reference, offset -5
  const auto mask = DetectSpeech(fb, model);
  for (int t = 0; t < 40; ++t) CHECK(mask[t] == (t >= 10 && t < 30));
}

TEST_CASE("peak reference ignores a single loud frame") {
  FeatureMatrix fb;
  fb.frames = Matrix::Constant(400, 10, -20.0);
  fb.frames.middleRows(100, 200).setConstant(0.0);
  fb.frames.row(150).setConstant(8.0);  // click well above the speech level
  SadModel peak;
  const auto kept = DetectSpeech(fb, peak);
  int n = 0;
  for (int t = 100; t < 300; ++t) n += kept[t];
  CHECK(n == 200);
  SadModel max;
  std::get<EnergySource>(max.source).reference = EnergyReference::kMax;
  const auto lost = DetectSpeech(fb, max);
  n = 0;
  for (int t = 100; t < 300; ++t) n += lost[t];
  CHECK(n < 20);
}

TEST_CASE("log energy is the log-sum-exp of mel log energies") {
  Matrix fb(1, 3);
  fb << std::log(1.0), std::log(2.0), std::log(5.0);
  CHECK(FbankLogEnergy(fb)(0) == doctest::Approx(std::log(8.0)));
}

TEST_CASE("splicing replicates edges") {
  Matrix f(3, 1);
  f << 1, 2, 3;
  const Matrix s = SpliceFrames(f, 1);
  Matrix expect(3, 3);
  expect << 1, 1, 2, 1, 2, 3, 2, 3, 3;
  CHECK(s == expect);
}

TEST_CASE("classifier forward pass equals a hand computation") {
  FrameClassifier c;
  c.context = 0;
  c.input_dim = 2;
  DenseLayer h{Matrix(2, 2), Vector(2)};
  h.weights << 1, -1, 0.5, 2;
  h.bias << 0.1, -3;
  DenseLayer o{Matrix(2, 2), Vector(2)};
  o.weights << 1, 0, 0, 1;
  o.bias << 0, 0;
  c.layers = {h, o};
  Matrix x(1, 2);
  x << 2, 1;
  const Matrix p = c.Forward(x);
  // hidden: relu(2 - 1 + 0.1, 1 + 2 - 3) = (1.1, 0); softmax(1.1, 0)
  CHECK(p(0, 0) == doctest::Approx(std::exp(1.1) / (std::exp(1.1) + 1.0)));
  CHECK(p.row(0).sum() == doctest::Approx(1.0));
  c.layers.pop_back();
  c.layers.push_back(DenseLayer{Matrix(3, 2), Vector(3)});
  CHECK_THROWS_AS(c.Validate(), ConfigError);
}

TEST_CASE("classifier training learns a separable energy rule") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<FeatureMatrix> fbanks;
  std::vector<std::vector<bool>> labels;
  for (int u = 0; u < 4; ++u) {
    FeatureMatrix f;
    f.frames.resize(200, 4);
    std::vector<bool> lab(200);
    for (int t = 0; t < 200; ++t) {
      lab[t] = (t / 25) % 2 == 0;
      for (int d = 0; d < 4; ++d) f.frames(t, d) = (lab[t] ? 1.0 : -1.0) + g(rng);
    }
    fbanks.push_back(f);
    labels.push_back(lab);
  }
  ClassifierTrainOptions o;
  o.hidden = {8};
  o.context = 1;
  o.epochs = 20;
  SadModel model;
  model.source = TrainFrameClassifier(fbanks, labels, o);
  const auto mask = DetectSpeech(fbanks[0], model);
  int agree = 0;
  for (int t = 0; t < 200; ++t) agree += mask[t] == labels[0][t];
  CHECK(agree >= 190);
}

TEST_CASE("SAD model file round-trip") {
  const fs::path p = fs::temp_directory_path() / "ivpipe_test.ivsd";
  SadModel m;
  m.prior_speech = 0.3;
  m.transitions << 0.95, 0.05, 0.2, 0.8;
  m.source = EnergySource{EnergyReference::kMean, -2.0, 1.5};
  WriteSadModel(p, m);
  const SadModel r = ReadSadModel(p);
  CHECK(r.prior_speech == 0.3);
  CHECK(r.transitions == m.transitions);
  const auto &e = std::get<EnergySource>(r.source);
  CHECK(e.reference == EnergyReference::kMean);
  CHECK(e.offset == -2.0);
  fs::remove(p);
  SadModel bad;
  bad.transitions << 0.5, 0.6, 0.5, 0.5;
  CHECK_THROWS_AS(bad.Validate(), ConfigError);
}

}  // TEST_SUITE
