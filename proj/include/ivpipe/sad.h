// include/ivpipe/sad.h

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

#ifndef IVPIPE_SAD_H_
#define IVPIPE_SAD_H_

#include <filesystem>
#include <variant>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/frontend.h"

namespace ivpipe {

// Column order of every SAD log-likelihood matrix.
inline constexpr int kNonSpeech = 0;
inline constexpr int kSpeech = 1;

// kPeak is the 99th percentile of frame log energies: a loud-speech level
// that, unlike kMax, a single click or spike cannot drag upward.
enum class EnergyReference { kAbsolute, kMean, kMax, kPeak };

// P(speech | frame) = sigmoid(scale * (log_energy - threshold)), where the
// threshold is `offset` relative to the chosen per-utterance reference.
struct EnergySource {
  EnergyReference reference = EnergyReference::kPeak;
  double offset = -5.0;
  double scale = 2.0;
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;
};

// Feed-forward speech/non-speech classifier over spliced filterbank frames.
// Hidden layers use ReLU; the output layer is a 2-way softmax.
struct FrameClassifier {
  int context = 7;       // frames on each side
  int input_dim = 40;    // per-frame filterbank dimension
  std::vector<DenseLayer> layers;

  int SplicedDim() const { return (2 * context + 1) * input_dim; }
  // Throws ConfigError on inconsistent layer shapes.
  void Validate() const;
  // Softmax posteriors, one row per input row.
  Matrix Forward(const Matrix &spliced) const;
};

struct SadModel {
  std::variant<EnergySource, FrameClassifier> source = EnergySource{};
  // log-domain priors used to turn posteriors into scaled likelihoods
  double prior_speech = 0.5;
  // transitions[i][j] = P(next = j | current = i), i, j in {kNonSpeech, kSpeech}
  Eigen::Matrix2d transitions = (Eigen::Matrix2d() << 0.99, 0.01, 0.01, 0.99).finished();

  void Validate() const;
};

// Splices +-context frames (edge frames replicated) into one row per frame.
Matrix SpliceFrames(const Matrix &frames, int context);

// Frame log-energy recovered from log mel energies.
Vector FbankLogEnergy(const Matrix &fbank);

// T x 2 matrix of log posterior - log prior.
Matrix SadLogLikelihoods(const FeatureMatrix &fbank, const SadModel &model);

// Most likely state sequence of the 2-state HMM (uniform initial
// distribution). Ties resolve toward non-speech.
std::vector<bool> ViterbiDecode(const Matrix &loglikes,
                                const Eigen::Matrix2d &transitions);

// Path log-probability used by ViterbiDecode (uniform initial state).
double PathLogProb(const Matrix &loglikes, const Eigen::Matrix2d &transitions,
                   const std::vector<bool> &path);

std::vector<bool> DetectSpeech(const FeatureMatrix &fbank, const SadModel &model);

struct ClassifierTrainOptions {
  std::vector<int> hidden = {64, 64};
  int context = 7;
  int epochs = 5;
  int batch_size = 128;
  double learning_rate = 0.05;
  unsigned seed = 7;
};

// Mini-batch SGD on cross-entropy against frame labels.
FrameClassifier TrainFrameClassifier(const std::vector<FeatureMatrix> &fbanks,
                                     const std::vector<std::vector<bool>> &labels,
                                     const ClassifierTrainOptions &opts);

void WriteSadModel(const std::filesystem::path &path, const SadModel &model);
SadModel ReadSadModel(const std::filesystem::path &path);

}  // namespace ivpipe

#endif  // IVPIPE_SAD_H_
