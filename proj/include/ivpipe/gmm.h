// include/ivpipe/gmm.h

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

#ifndef IVPIPE_GMM_H_
#define IVPIPE_GMM_H_

#include <filesystem>
#include <string>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/frontend.h"

namespace ivpipe {

// Full-covariance Gaussian mixture. Call ComputeDerived() after editing the
// parameters; the cached Cholesky factors and normalizers depend on them.
class GmmModel {
 public:
  GmmModel() = default;
  GmmModel(Vector weights, Matrix means, std::vector<Matrix> covariances);

  int NumComponents() const { return static_cast<int>(weights_.size()); }
  int Dim() const { return static_cast<int>(means_.cols()); }

  const Vector &weights() const { return weights_; }
  const Matrix &means() const { return means_; }  // M x D
  const std::vector<Matrix> &covariances() const { return covariances_; }
  const Matrix &cholesky(int c) const { return chol_[c]; }  // lower factor
  const Vector &log_normalizers() const { return log_norm_; }

  // log(w_c) + log N(x_t; mu_c, Sigma_c) for every frame (rows) and
  // component (columns).
  Matrix ComponentLogLikelihoods(const Matrix &frames) const;
  // Responsibilities; rows sum to one. Per-frame log-likelihood goes to
  // *frame_loglike when non-null.
  Matrix Posteriors(const Matrix &frames, Vector *frame_loglike = nullptr) const;

  // Throws NumericalError if any covariance is not SPD.
  void ComputeDerived();
  // Stable identifier of the parameters, used to bind statistics and
  // extractors to one UBM.
  std::uint64_t Fingerprint() const;

 private:
  Vector weights_;
  Matrix means_;
  std::vector<Matrix> covariances_;
  std::vector<Matrix> chol_;
  Vector log_norm_;
};

struct UbmTrainOptions {
  int num_components = 64;
  int num_iters = 10;
  int kmeans_iters = 10;
  unsigned seed = 1;
  // Covariance eigenvalues are floored at this fraction of the average
  // per-dimension data variance.
  double cov_floor_factor = 1e-4;
  // Components whose occupancy drops below this many frames are re-seeded.
  double min_occupancy = -1.0;  // < 0: use the feature dimension
};

// k-means++ initialization followed by EM. When `loglike_history` is given it
// receives the average per-frame log-likelihood before each EM update and
// once more for the returned model (num_iters + 1 entries).
GmmModel TrainUbm(const std::vector<FeatureMatrix> &features,
                  const UbmTrainOptions &opts,
                  std::vector<double> *loglike_history = nullptr);

// Zero- and first-order Baum-Welch statistics of one utterance.
struct SuffStats {
  std::string utterance_id;
  Vector zero_order;   // M
  Matrix first_order;  // M x D
  double scale = 1.0;  // factor already applied; 1.0 for raw statistics
  double num_frames = 0.0;

  int NumComponents() const { return static_cast<int>(zero_order.size()); }
  int Dim() const { return static_cast<int>(first_order.cols()); }
};

SuffStats AccumulateStats(const GmmModel &ubm, const FeatureMatrix &feats,
                          const std::string &utterance_id = "");

// Multiplies both orders by `factor` in (0, 1]. Scaling statistics that were
// already scaled throws DataError.
SuffStats ScaleStats(const SuffStats &stats, double factor);

// "IVGM": magic, u32 version, u32 M, u32 D, weights, means, covariances (f64).
void WriteGmm(const std::filesystem::path &path, const GmmModel &gmm);
GmmModel ReadGmm(const std::filesystem::path &path);

// "IVST": magic, u32 version, u32 M, u32 D, f64 scale, N, F (f64).
void WriteStats(const std::filesystem::path &path, const SuffStats &stats);
SuffStats ReadStats(const std::filesystem::path &path);

}  // namespace ivpipe

#endif  // IVPIPE_GMM_H_
