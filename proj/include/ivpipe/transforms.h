// include/ivpipe/transforms.h

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

#ifndef IVPIPE_TRANSFORMS_H_
#define IVPIPE_TRANSFORMS_H_

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/ivector.h"

namespace ivpipe {

enum class TransformKind {
  kCenter = 0,
  kWhiten,
  kNda,
  kLda,
  kShortCompLda,
  kWccn,
  kLnLda,
  kLengthNorm,
};

std::string TransformKindName(TransformKind k);
TransformKind ParseTransformKind(const std::string &name);
// Stage an embedding reaches after this transform.
Stage StageAfter(TransformKind k);

// y = A (x - b). Length normalization carries no matrix.
struct LinearTransform {
  TransformKind kind = TransformKind::kCenter;
  Matrix a;  // out x in
  Vector b;  // in; zero when there is no offset
  int in_dim = 0;
  int out_dim = 0;

  Vector Apply(const Vector &x) const;
  void Validate() const;
};

struct ScatterPair {
  Matrix within;
  Matrix between;
  Matrix total;
};

// Rows of `data` are samples; labels are dense class ids 0..K-1.
std::vector<int> DenseLabels(std::span<const std::string> labels, int *num_classes = nullptr);

// Class-mean scatter, normalized by the sample count:
//   within  = 1/N sum_i (x_i - mu_{c(i)})(x_i - mu_{c(i)})'
//   between = 1/N sum_k n_k (mu_k - mu)(mu_k - mu)'
//   total   = within + between
ScatterPair ClassScatter(const Matrix &data, std::span<const int> labels);

// Nonparametric scatter built from k-nearest-neighbour local means
// (within-class neighbours for `within`, nearest neighbours in every other
// class for `between`, weighted by the ratio of k-th neighbour distances
// raised to `alpha`). k is clamped to class size - 1 (within) and class size
// (between) with a warning.
ScatterPair NdaScatter(const Matrix &data, std::span<const int> labels, int k,
                       double alpha = 2.0);

// Language-normalized scatter: total = 1/N sum_n w_n w_n', between from
// speaker means deviated from their language mean (occupancy weighted),
// within = total - between.
ScatterPair LanguageNormalizedScatter(const Matrix &data,
                                      std::span<const int> speakers,
                                      std::span<const int> languages);

LinearTransform FitCenter(const Matrix &data);
// ZCA whitening that also removes the sample mean.
LinearTransform FitCenterWhiten(const Matrix &data);
LinearTransform FitLda(const Matrix &data, std::span<const int> labels, int out_dim);
LinearTransform FitNda(const Matrix &data, std::span<const int> labels, int k,
                       int out_dim, double alpha = 2.0);
LinearTransform FitLnLda(const Matrix &data, std::span<const int> speakers,
                         std::span<const int> languages, int out_dim);

// Within-class covariance normalization: A = B' with B B' = W^-1, W the
// average per-class covariance.
LinearTransform FitWccn(const Matrix &data, std::span<const int> labels);

struct ShortDurationComp {
  LinearTransform lda;
  LinearTransform wccn;
  bool wccn_first = false;
};

// Each (full, excerpt) pair is one class. The LDA keeps the out_dim
// directions with the largest between-pair to within-pair ratio; the WCCN is
// estimated on the same pairs after (or, with wccn_first, before) the LDA.
ShortDurationComp FitShortDurationComp(const Matrix &full, const Matrix &excerpt,
                                       int out_dim, bool wccn_first = false);

LinearTransform LengthNormTransform(int dim);

// Throws DataError for a zero vector.
Embedding LengthNormalize(const Embedding &e);
Vector LengthNormalize(const Vector &w);

// Applies transforms in order, enforcing dimension agreement and forward-only
// stage movement.
Embedding ApplyChain(std::span<const LinearTransform> chain, const Embedding &e);

// "IVTR": magic, u32 version, u32 kind, u32 in_dim, u32 out_dim, u8 has_a,
// [A out x in f64 row-major], u8 has_b, [b f64].
void WriteTransform(const std::filesystem::path &path, const LinearTransform &t);
LinearTransform ReadTransform(const std::filesystem::path &path);

// Chain manifest: one transform path per line, in application order.
void WriteChain(const std::filesystem::path &manifest,
                const std::vector<std::filesystem::path> &paths);
std::vector<LinearTransform> ReadChain(const std::filesystem::path &manifest);

// Samples as rows.
Matrix StackEmbeddings(std::span<const Embedding> embeddings);

}  // namespace ivpipe

#endif  // IVPIPE_TRANSFORMS_H_
