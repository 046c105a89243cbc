// src/ivector.cc

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

#include "ivpipe/ivector.h"

#include <cmath>
#include <random>

#include "ivpipe/io.h"
#include "ivpipe/linalg.h"

namespace ivpipe {

namespace {
const char *const kStageNames[] = {"raw",      "centered",      "whitened",
                                   "discriminant", "shortcomp", "langnorm",
                                   "lengthnorm"};
}  // namespace

std::string StageName(Stage s) { return kStageNames[static_cast<int>(s)]; }

Stage ParseStage(const std::string &name) {
  for (int i = 0; i <= static_cast<int>(Stage::kLengthNorm); ++i)
    if (name == kStageNames[i]) return static_cast<Stage>(i);
  throw DataError("unknown embedding stage: " + name);
}

IvectorExtractor::IvectorExtractor(const TvModel &tv, const GmmModel &ubm)
    : rank_(tv.Rank()),
      num_components_(ubm.NumComponents()),
      dim_(ubm.Dim()),
      means_(ubm.means()) {
  if (tv.num_components != num_components_ || tv.feat_dim != dim_ ||
      tv.t.rows() != static_cast<Eigen::Index>(num_components_) * dim_)
    throw DataError("total-variability matrix does not match the UBM shape");
  if (tv.ubm_id != 0 && tv.ubm_id != ubm.Fingerprint())
    throw DataError("total-variability matrix was trained against a different UBM");
  t_sigma_inv_.resize(num_components_);
  t_sigma_inv_t_.resize(num_components_);
  for (int c = 0; c < num_components_; ++c) {
    const Matrix &chol = ubm.cholesky(c);
    Matrix tc = tv.t.middleRows(c * dim_, dim_);
    // Sigma^-1 T_c via two triangular solves with the cached factor.
    Matrix sinv_t = chol.triangularView<Eigen::Lower>().solve(tc);
    chol.transpose().triangularView<Eigen::Upper>().solveInPlace(sinv_t);
    t_sigma_inv_[c] = sinv_t.transpose();
    t_sigma_inv_t_[c] = Symmetrize(t_sigma_inv_[c] * tc);
  }
}

void IvectorExtractor::CheckStats(const SuffStats &stats) const {
  if (stats.NumComponents() != num_components_ || stats.Dim() != dim_)
    throw DataError("statistics shape (" + std::to_string(stats.NumComponents()) +
                    " x " + std::to_string(stats.Dim()) + ") does not match extractor (" +
                    std::to_string(num_components_) + " x " + std::to_string(dim_) + ")");
}

Matrix IvectorExtractor::Precision(const Vector &zero_order) const {
  Matrix l = Matrix::Identity(rank_, rank_);
  for (int c = 0; c < num_components_; ++c)
    if (zero_order(c) != 0.0) l.noalias() += zero_order(c) * t_sigma_inv_t_[c];
  return l;
}

Vector IvectorExtractor::Projection(const SuffStats &stats) const {
  Vector b = Vector::Zero(rank_);
  for (int c = 0; c < num_components_; ++c) {
    Vector centered = stats.first_order.row(c).transpose() -
                      stats.zero_order(c) * means_.row(c).transpose();
    b.noalias() += t_sigma_inv_[c] * centered;
  }
  return b;
}

Vector IvectorExtractor::PosteriorMean(const SuffStats &stats, Matrix *precision) const {
  CheckStats(stats);
  Matrix l = Precision(stats.zero_order);
  Eigen::LLT<Matrix> llt(l);
  if (llt.info() != Eigen::Success)
    throw NumericalError("i-vector posterior precision is not positive definite");
  Vector w = llt.solve(Projection(stats));
  if (precision) *precision = std::move(l);
  return w;
}

double IvectorExtractor::AuxObjective(const SuffStats &stats) const {
  CheckStats(stats);
  Eigen::LLT<Matrix> llt(Precision(stats.zero_order));
  if (llt.info() != Eigen::Success)
    throw NumericalError("i-vector posterior precision is not positive definite");
  const Vector b = Projection(stats);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * logdet + 0.5 * b.dot(llt.solve(b));
}

TvModel InitTv(const GmmModel &ubm, int rank, unsigned seed) {
  const int m = ubm.NumComponents(), d = ubm.Dim();
  if (rank < 1 || rank > m * d)
    throw ConfigError("i-vector rank " + std::to_string(rank) + " outside [1, M*D = " +
                      std::to_string(m * d) + "]");
  TvModel tv;
  tv.num_components = m;
  tv.feat_dim = d;
  tv.ubm_id = ubm.Fingerprint();
  tv.t.resize(static_cast<Eigen::Index>(m) * d, rank);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int c = 0; c < m; ++c) {
    Matrix block(d, rank);
    for (Eigen::Index i = 0; i < block.size(); ++i) block.data()[i] = g(rng);
    tv.t.middleRows(c * d, d) = ubm.cholesky(c) * block;
  }
  return tv;
}

TvModel TrainTv(const std::vector<SuffStats> &stats, const GmmModel &ubm,
                const TvTrainOptions &opts, std::vector<double> *objective_history) {
  TvModel tv = InitTv(ubm, opts.rank, opts.seed);
  if (stats.empty()) throw DataError("total-variability training needs statistics");
  const int m = ubm.NumComponents(), d = ubm.Dim(), r = opts.rank;
  if (objective_history) objective_history->clear();
  for (int iter = 0; iter <= opts.num_iters; ++iter) {
    const IvectorExtractor extractor(tv, ubm);
    const bool last = iter == opts.num_iters;
    std::vector<Matrix> a(last ? 0 : m, Matrix::Zero(r, r));
    std::vector<Matrix> c_acc(last ? 0 : m, Matrix::Zero(d, r));
    double objective = 0.0;
    for (const auto &s : stats) {
      Matrix precision;
      const Vector w = extractor.PosteriorMean(s, &precision);
      Eigen::LLT<Matrix> llt(precision);
      const Vector b = extractor.Projection(s);
      objective += -llt.matrixLLT().diagonal().array().log().sum() + 0.5 * b.dot(w);
      if (last) continue;
      Matrix second = llt.solve(Matrix::Identity(r, r));
      second.noalias() += w * w.transpose();
      for (int c = 0; c < m; ++c) {
        const double n = s.zero_order(c);
        if (n == 0.0) continue;
        a[c].noalias() += n * second;
        Vector centered = s.first_order.row(c).transpose() - n * ubm.means().row(c).transpose();
        c_acc[c].noalias() += centered * w.transpose();
      }
    }
    if (objective_history) objective_history->push_back(objective);
    if (last) break;
    for (int c = 0; c < m; ++c) {
      Eigen::LLT<Matrix> llt(Symmetrize(a[c]));
      if (llt.info() != Eigen::Success) {
        Warn("TV component " + std::to_string(c) + " has no occupancy; keeping previous rows");
        continue;
      }
      tv.t.middleRows(c * d, d) = llt.solve(c_acc[c].transpose()).transpose();
    }
  }
  return tv;
}

Embedding ExtractIvector(const SuffStats &stats, const IvectorExtractor &extractor) {
  if (!(stats.zero_order.sum() > 0.0))
    throw NoSpeechError("zero total occupancy for '" + stats.utterance_id + "'");
  Embedding e;
  e.id = stats.utterance_id;
  e.w = extractor.PosteriorMean(stats);
  e.stage = Stage::kRaw;
  return e;
}

void WriteTv(const std::filesystem::path &path, const TvModel &tv) {
  BinaryWriter w(path);
  w.Magic("IVTV");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(tv.num_components));
  w.U32(static_cast<std::uint32_t>(tv.feat_dim));
  w.U32(static_cast<std::uint32_t>(tv.Rank()));
  w.U64(tv.ubm_id);
  w.MatrixData(tv.t);
  w.Commit();
}

TvModel ReadTv(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVTV");
  if (r.U32() != 1) throw DataError("unsupported IVTV version in " + path.string());
  TvModel tv;
  tv.num_components = static_cast<int>(r.U32());
  tv.feat_dim = static_cast<int>(r.U32());
  const std::uint32_t rank = r.U32();
  tv.ubm_id = r.U64();
  tv.t = r.MatrixData(static_cast<Eigen::Index>(tv.num_components) * tv.feat_dim, rank);
  return tv;
}

void WriteEmbedding(const std::filesystem::path &path, const Embedding &e) {
  if (!e.w.allFinite()) throw NumericalError("non-finite embedding '" + e.id + "'");
  BinaryWriter w(path);
  w.Magic("IVEC");
  w.U32(1);
  w.String(e.id);
  w.U32(static_cast<std::uint32_t>(e.w.size()));
  w.VectorData(e.w);
  w.String(e.speaker);
  w.String(e.language);
  w.U8(e.domain == Domain::kIn ? 0 : 1);
  w.F64(e.speech_duration);
  w.U8(static_cast<std::uint8_t>(e.stage));
  w.Commit();
}

Embedding ReadEmbedding(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVEC");
  if (r.U32() != 1) throw DataError("unsupported IVEC version in " + path.string());
  Embedding e;
  e.id = r.String();
  const std::uint32_t dim = r.U32();
  e.w = r.VectorData(dim);
  e.speaker = r.String();
  e.language = r.String();
  e.domain = r.U8() == 0 ? Domain::kIn : Domain::kOut;
  e.speech_duration = r.F64();
  const std::uint8_t stage = r.U8();
  if (stage > static_cast<std::uint8_t>(Stage::kLengthNorm))
    throw DataError("bad stage tag in " + path.string());
  e.stage = static_cast<Stage>(stage);
  return e;
}

}  // namespace ivpipe
