// include/ivpipe/plda.h

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

#ifndef IVPIPE_PLDA_H_
#define IVPIPE_PLDA_H_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/ivector.h"

namespace ivpipe {

enum class PldaDomain { kIn, kOut, kAdapted };

std::string PldaDomainName(PldaDomain d);

// w = m + V y + e, y ~ N(0, I_F), e ~ N(0, Sigma) with Sigma full rank.
struct PldaModel {
  Vector m;
  Matrix v;      // D x F
  Matrix sigma;  // D x D, SPD
  PldaDomain domain = PldaDomain::kOut;

  int Dim() const { return static_cast<int>(m.size()); }
  int NumFactors() const { return static_cast<int>(v.cols()); }
  void Validate() const;
};

struct PldaTrainOptions {
  int num_factors = 200;
  int num_iters = 10;
  unsigned seed = 1;
};

// Initialization used by TrainPlda: V from the top principal directions of
// the speaker means (plus a small seeded perturbation so that directions
// the data does not reach can still move), Sigma from the within-speaker
// residual, eigenvalue-floored.
PldaModel InitPlda(const Matrix &data, std::span<const int> speakers, int num_factors,
                   unsigned seed);

// Exact log marginal likelihood of the data under the model, grouped by
// speaker.
double PldaLogLikelihood(const PldaModel &model, const Matrix &data,
                         std::span<const int> speakers);

// EM with a joint update of [m V]. `loglik_history` receives the marginal
// likelihood of the initial model and after each iteration. With `init`, EM
// starts from its V and Sigma (and the data mean) instead of InitPlda. For
// all-singleton data only V V^T + Sigma is identifiable, so the start point
// decides how variance is split between speaker and residual.
PldaModel TrainPlda(const Matrix &data, std::span<const int> speakers,
                    const PldaTrainOptions &opts,
                    std::vector<double> *loglik_history = nullptr,
                    const PldaModel *init = nullptr);

// Returns `model` with its factor loadings rotated by the orthogonal R that
// minimizes ||V R - reference_v||_F. The likelihood is unchanged; the
// rotation makes factor columns of independently trained models comparable
// before interpolation.
PldaModel AlignFactors(const PldaModel &model, const Matrix &reference_v);

// V and Sigma interpolated as alpha * in + (1 - alpha) * out. The mean is
// taken from `out` unless interpolate_mean is set.
PldaModel AdaptPlda(const PldaModel &in, const PldaModel &out, double alpha,
                    bool interpolate_mean = false);

// s = x1' Q x1 + x2' Q x2 + 2 x1' P x2 + c with x = w - m, where
//   Q = St^-1 - (St - Sb St^-1 Sb)^-1,  P = St^-1 Sb (St - Sb St^-1 Sb)^-1,
//   Sb = V V', St = Sb + Sigma.
// With c = 0 this is twice the same-versus-different log-likelihood ratio
// plus a constant.
struct ScoringKernel {
  Matrix p, q, sb, st;
  Vector m;
  double c = 0.0;

  int Dim() const { return static_cast<int>(p.rows()); }
};

ScoringKernel BuildKernel(const PldaModel &model);

double ScoreTrial(const Vector &enrol, const Vector &test, const ScoringKernel &kernel);

// 1 segment: unchanged. 3 segments: mean, then length-normalized.
Embedding Enroll(std::span<const Embedding> segments, const std::string &model_id);

struct TrialKey {
  std::string model_id;
  std::string test_id;
  bool target = false;
};

struct TrialScore {
  std::string model_id;
  std::string test_id;
  double score = 0.0;
};

std::vector<TrialScore> ScoreTrials(const ScoringKernel &kernel,
                                    const std::map<std::string, Embedding> &models,
                                    const std::map<std::string, Embedding> &tests,
                                    std::span<const TrialKey> trials);

// "IVPL": magic, u32 version, u32 D, u32 F, u8 domain, m, V, Sigma (f64).
void WritePlda(const std::filesystem::path &path, const PldaModel &model);
PldaModel ReadPlda(const std::filesystem::path &path);

// "IVKN": magic, u32 version, u32 D, P, Q, m (f64), f64 c.
void WriteKernel(const std::filesystem::path &path, const ScoringKernel &kernel);
ScoringKernel ReadKernel(const std::filesystem::path &path);

// Trial list lines are "model_id test_id"; key lines append
// "target" or "nontarget". ReadTrials accepts either.
std::vector<TrialKey> ReadTrials(const std::filesystem::path &path, bool require_labels);
void WriteKey(const std::filesystem::path &path, std::span<const TrialKey> key);

// "model_id test_id score" with 10 decimals.
void WriteScores(const std::filesystem::path &path, std::span<const TrialScore> scores);
std::vector<TrialScore> ReadScores(const std::filesystem::path &path);

// Enrolment manifest: "model_id emb_path [emb_path ...]", relative paths
// resolved against the manifest directory.
std::map<std::string, std::vector<std::filesystem::path>> ReadEnrolManifest(
    const std::filesystem::path &path);

}  // namespace ivpipe

#endif  // IVPIPE_PLDA_H_
