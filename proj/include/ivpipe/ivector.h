// include/ivpipe/ivector.h

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

#ifndef IVPIPE_IVECTOR_H_
#define IVPIPE_IVECTOR_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/gmm.h"

namespace ivpipe {

// Total-variability subspace. Rows [c*D, (c+1)*D) of `t` belong to
// component c.
struct TvModel {
  Matrix t;                   // (M*D) x R
  std::uint64_t ubm_id = 0;   // GmmModel::Fingerprint() of the bound UBM
  int num_components = 0;
  int feat_dim = 0;

  int Rank() const { return static_cast<int>(t.cols()); }
};

enum class Domain { kIn, kOut };

// Pipeline position of an embedding. Transforms may only move it forward.
enum class Stage {
  kRaw = 0,
  kCentered,
  kWhitened,
  kDiscriminant,
  kShortComp,
  kLanguageNorm,
  kLengthNorm,
};

std::string StageName(Stage s);
Stage ParseStage(const std::string &name);

struct Embedding {
  std::string id;
  Vector w;
  std::string speaker;   // empty when unknown
  std::string language;  // empty when unknown
  Domain domain = Domain::kOut;
  double speech_duration = 0.0;
  Stage stage = Stage::kRaw;
};

// Per-component quantities reused across utterances.
class IvectorExtractor {
 public:
  IvectorExtractor(const TvModel &tv, const GmmModel &ubm);

  int Rank() const { return rank_; }

  // Posterior of the latent factor given (scaled) statistics: returns the
  // mean and writes the precision L = I + sum_c N_c T_c' Sigma_c^-1 T_c.
  // Zero statistics give the prior (w = 0, L = I).
  Vector PosteriorMean(const SuffStats &stats, Matrix *precision = nullptr) const;

  // Marginal log-likelihood of the centred first-order statistics, up to a
  // term that does not depend on T: -0.5 log|L| + 0.5 b' L^-1 b.
  double AuxObjective(const SuffStats &stats) const;

  // b = sum_c T_c' Sigma_c^-1 (F_c - N_c mu_c)
  Vector Projection(const SuffStats &stats) const;
  Matrix Precision(const Vector &zero_order) const;

 private:
  void CheckStats(const SuffStats &stats) const;

  int rank_, num_components_, dim_;
  Matrix means_;
  std::vector<Matrix> t_sigma_inv_;  // T_c' Sigma_c^-1, R x D
  std::vector<Matrix> t_sigma_inv_t_;  // R x R
};

struct TvTrainOptions {
  int rank = 60;
  int num_iters = 5;
  unsigned seed = 1;
};

// EM for the total-variability matrix. `objective_history` receives the
// summed auxiliary objective for T at each iteration start and for the
// returned model (num_iters + 1 entries).
TvModel TrainTv(const std::vector<SuffStats> &stats, const GmmModel &ubm,
                const TvTrainOptions &opts,
                std::vector<double> *objective_history = nullptr);

TvModel InitTv(const GmmModel &ubm, int rank, unsigned seed);

// MAP i-vector. Throws NoSpeechError when the statistics have zero
// occupancy and DataError when they are bound to a different UBM shape.
Embedding ExtractIvector(const SuffStats &stats, const IvectorExtractor &extractor);

// "IVTV": magic, u32 version, u32 M, u32 D, u32 R, u64 ubm_id, T (f64).
void WriteTv(const std::filesystem::path &path, const TvModel &tv);
TvModel ReadTv(const std::filesystem::path &path);

// "IVEC": magic, u32 version, id, u32 R, w (f64), speaker, language,
// u8 domain, f64 speech_duration, u8 stage.
void WriteEmbedding(const std::filesystem::path &path, const Embedding &e);
Embedding ReadEmbedding(const std::filesystem::path &path);

}  // namespace ivpipe

#endif  // IVPIPE_IVECTOR_H_
