// src/transforms.cc

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

#include "ivpipe/transforms.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "ivpipe/io.h"
#include "ivpipe/linalg.h"

namespace ivpipe {

namespace {

const char *const kKindNames[] = {"center", "whiten",     "nda",    "lda",
                                  "shortcomp", "wccn", "lnlda", "lengthnorm"};

void CheckLabels(const Matrix &data, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != data.rows())
    throw DataError("label count " + std::to_string(labels.size()) +
                    " != sample count " + std::to_string(data.rows()));
  if (data.rows() == 0) throw DataError("no samples");
  for (int l : labels)
    if (l < 0) throw DataError("negative class label");
}

int NumClasses(std::span<const int> labels) {
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

Matrix ClassMeans(const Matrix &data, std::span<const int> labels, Vector *counts) {
  const int k = NumClasses(labels);
  Matrix means = Matrix::Zero(k, data.cols());
  counts->setZero(k);
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    means.row(labels[i]) += data.row(i);
    (*counts)(labels[i]) += 1.0;
  }
  for (int c = 0; c < k; ++c)
    if ((*counts)(c) > 0.0) means.row(c) /= (*counts)(c);
  return means;
}

Matrix SampleCovariance(const Matrix &data, Vector *mean) {
  *mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - mean->transpose();
  return Symmetrize(centered.transpose() * centered / static_cast<double>(data.rows()));
}

}  // namespace

std::string TransformKindName(TransformKind k) { return kKindNames[static_cast<int>(k)]; }

TransformKind ParseTransformKind(const std::string &name) {
  for (int i = 0; i <= static_cast<int>(TransformKind::kLengthNorm); ++i)
    if (name == kKindNames[i]) return static_cast<TransformKind>(i);
  throw ConfigError("unknown transform kind: " + name);
}

Stage StageAfter(TransformKind k) {
  switch (k) {
    case TransformKind::kCenter: return Stage::kCentered;
    case TransformKind::kWhiten: return Stage::kWhitened;
    case TransformKind::kNda:
    case TransformKind::kLda: return Stage::kDiscriminant;
    case TransformKind::kShortCompLda:
    case TransformKind::kWccn: return Stage::kShortComp;
    case TransformKind::kLnLda: return Stage::kLanguageNorm;
    case TransformKind::kLengthNorm: return Stage::kLengthNorm;
  }
  return Stage::kRaw;
}

void LinearTransform::Validate() const {
  if (in_dim < 1 || out_dim < 1 || out_dim > in_dim)
    throw DataError("transform " + TransformKindName(kind) + " has bad dimensions " +
                    std::to_string(in_dim) + " -> " + std::to_string(out_dim));
  if (kind == TransformKind::kLengthNorm) {
    if (in_dim != out_dim) throw DataError("length norm must preserve dimension");
    return;
  }
  if (a.rows() != out_dim || a.cols() != in_dim)
    throw DataError("transform " + TransformKindName(kind) + " matrix shape mismatch");
  if (b.size() != 0 && b.size() != in_dim)
    throw DataError("transform " + TransformKindName(kind) + " offset shape mismatch");
  if (!a.allFinite() || !b.allFinite())
    throw NumericalError("transform " + TransformKindName(kind) + " is not finite");
}

Vector LinearTransform::Apply(const Vector &x) const {
  if (x.size() != in_dim)
    throw DataError("transform " + TransformKindName(kind) + " expects dimension " +
                    std::to_string(in_dim) + ", got " + std::to_string(x.size()));
  if (kind == TransformKind::kLengthNorm) return LengthNormalize(x);
  if (b.size() == 0) return a * x;
  return a * (x - b);
}

std::vector<int> DenseLabels(std::span<const std::string> labels, int *num_classes) {
  std::map<std::string, int> ids;
  std::vector<int> out;
  out.reserve(labels.size());
  for (const auto &l : labels) {
    auto [it, inserted] = ids.emplace(l, static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  if (num_classes) *num_classes = static_cast<int>(ids.size());
  return out;
}

ScatterPair ClassScatter(const Matrix &data, std::span<const int> labels) {
  CheckLabels(data, labels);
  Vector counts;
  const Matrix means = ClassMeans(data, labels, &counts);
  const Eigen::RowVectorXd mu = data.colwise().mean();
  const double n = static_cast<double>(data.rows());
  Matrix deviations(data.rows(), data.cols());
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    deviations.row(i) = data.row(i) - means.row(labels[i]);
  ScatterPair s;
  s.within = Symmetrize(deviations.transpose() * deviations / n);
  Matrix mean_dev = means.rowwise() - mu;
  Matrix weighted = mean_dev.array().colwise() * counts.array();
  s.between = Symmetrize(weighted.transpose() * mean_dev / n);
  s.total = s.within + s.between;
  return s;
}

ScatterPair NdaScatter(const Matrix &data, std::span<const int> labels, int k,
                       double alpha) {
  CheckLabels(data, labels);
  if (k < 1) throw ConfigError("NDA needs k >= 1");
  const Eigen::Index n = data.rows();
  const int num_classes = NumClasses(labels);
  std::vector<std::vector<Eigen::Index>> members(num_classes);
  for (Eigen::Index i = 0; i < n; ++i) members[labels[i]].push_back(i);
  for (int c = 0; c < num_classes; ++c)
    if (members[c].size() < 2)
      throw DataError("NDA needs at least 2 samples in every class (class " +
                      std::to_string(c) + " has " + std::to_string(members[c].size()) + ")");
  if (num_classes < 2) throw DataError("NDA needs at least 2 classes");
  bool clamped = false;
  for (const auto &m : members)
    if (static_cast<std::size_t>(k) >= m.size()) clamped = true;
  if (clamped)
    Warn("NDA k=" + std::to_string(k) + " is not below every class size; clamping per class");

  Matrix dist = -2.0 * data * data.transpose();
  dist.colwise() += data.rowwise().squaredNorm();
  dist.rowwise() += data.rowwise().squaredNorm().transpose();
  dist = dist.cwiseMax(0.0).cwiseSqrt();

  const Eigen::Index dim = data.cols();
  ScatterPair s;
  s.within = Matrix::Zero(dim, dim);
  s.between = Matrix::Zero(dim, dim);
  std::vector<std::pair<double, Eigen::Index>> cand;
  // Local mean of the kk nearest members of `cls` (excluding `self`) and the
  // distance to the kk-th of them.
  auto local_mean = [&](Eigen::Index self, int cls, int kk, double *kth) {
    cand.clear();
    for (Eigen::Index j : members[cls])
      if (j != self) cand.emplace_back(dist(self, j), j);
    std::partial_sort(cand.begin(), cand.begin() + kk, cand.end());
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(dim);
    for (int q = 0; q < kk; ++q) mean += data.row(cand[q].second);
    *kth = cand[kk - 1].first;
    return Eigen::RowVectorXd(mean / kk);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = labels[i];
    const int kw = std::min<int>(k, static_cast<int>(members[c].size()) - 1);
    double dw;
    const Eigen::RowVectorXd dev_w = data.row(i) - local_mean(i, c, kw, &dw);
    s.within.noalias() += dev_w.transpose() * dev_w;
    const double dw_a = std::pow(dw, alpha);
    for (int other = 0; other < num_classes; ++other) {
      if (other == c) continue;
      const int kb = std::min<int>(k, static_cast<int>(members[other].size()));
      double db;
      const Eigen::RowVectorXd dev_b = data.row(i) - local_mean(i, other, kb, &db);
      const double db_a = std::pow(db, alpha);
      const double denom = dw_a + db_a;
      const double weight = denom > 0.0 ? std::min(dw_a, db_a) / denom : 0.5;
      s.between.noalias() += weight * dev_b.transpose() * dev_b;
    }
  }
  s.within = Symmetrize(s.within / static_cast<double>(n));
  s.between = Symmetrize(s.between / static_cast<double>(n));
  s.total = s.within + s.between;
  return s;
}

ScatterPair LanguageNormalizedScatter(const Matrix &data,
                                      std::span<const int> speakers,
                                      std::span<const int> languages) {
  CheckLabels(data, speakers);
  CheckLabels(data, languages);
  const Eigen::Index n = data.rows(), dim = data.cols();
  std::map<int, int> speaker_language;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [it, inserted] = speaker_language.emplace(speakers[i], languages[i]);
    if (!inserted && it->second != languages[i])
      throw DataError("speaker " + std::to_string(speakers[i]) +
                      " appears under more than one language");
  }
  Vector spk_counts, lang_counts;
  const Matrix spk_means = ClassMeans(data, speakers, &spk_counts);
  const Matrix lang_means = ClassMeans(data, languages, &lang_counts);
  ScatterPair s;
  s.total = Symmetrize(data.transpose() * data / static_cast<double>(n));
  s.between = Matrix::Zero(dim, dim);
  for (const auto &[spk, lang] : speaker_language) {
    const Eigen::RowVectorXd d = spk_means.row(spk) - lang_means.row(lang);
    s.between.noalias() += spk_counts(spk) * d.transpose() * d;
  }
  s.between = Symmetrize(s.between / static_cast<double>(n));
  s.within = s.total - s.between;
  return s;
}

LinearTransform FitCenter(const Matrix &data) {
  if (data.rows() == 0) throw DataError("no samples");
  LinearTransform t;
  t.kind = TransformKind::kCenter;
  t.in_dim = t.out_dim = static_cast<int>(data.cols());
  t.a = Matrix::Identity(data.cols(), data.cols());
  t.b = data.colwise().mean().transpose();
  return t;
}

LinearTransform FitCenterWhiten(const Matrix &data) {
  if (data.rows() == 0) throw DataError("no samples");
  Vector mean;
  Matrix cov = SampleCovariance(data, &mean);
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const double max_eig = es.eigenvalues().maxCoeff();
  if (data.rows() <= data.cols() || es.eigenvalues().minCoeff() <= 1e-12 * std::max(max_eig, 1e-300)) {
    Warn("whitening covariance is rank deficient; adding ridge 1e-6");
    cov += 1e-6 * Matrix::Identity(cov.rows(), cov.cols());
  }
  LinearTransform t;
  t.kind = TransformKind::kWhiten;
  t.in_dim = t.out_dim = static_cast<int>(data.cols());
  t.a = InverseSqrtSym(cov);
  t.b = mean;
  return t;
}

namespace {

LinearTransform Projection(TransformKind kind, Matrix rows) {
  LinearTransform t;
  t.kind = kind;
  t.in_dim = static_cast<int>(rows.cols());
  t.out_dim = static_cast<int>(rows.rows());
  t.a = std::move(rows);
  return t;
}

}  // namespace

LinearTransform FitLda(const Matrix &data, std::span<const int> labels, int out_dim) {
  const ScatterPair s = ClassScatter(data, labels);
  return Projection(TransformKind::kLda, DiscriminantProjection(s.between, s.within, out_dim));
}

LinearTransform FitNda(const Matrix &data, std::span<const int> labels, int k,
                       int out_dim, double alpha) {
  const ScatterPair s = NdaScatter(data, labels, k, alpha);
  return Projection(TransformKind::kNda, DiscriminantProjection(s.between, s.within, out_dim));
}

LinearTransform FitLnLda(const Matrix &data, std::span<const int> speakers,
                         std::span<const int> languages, int out_dim) {
  const ScatterPair s = LanguageNormalizedScatter(data, speakers, languages);
  return Projection(TransformKind::kLnLda, DiscriminantProjection(s.between, s.within, out_dim));
}

LinearTransform FitWccn(const Matrix &data, std::span<const int> labels) {
  CheckLabels(data, labels);
  Vector counts;
  const Matrix means = ClassMeans(data, labels, &counts);
  const Eigen::Index dim = data.cols();
  Matrix w = Matrix::Zero(dim, dim);
  std::vector<Matrix> per_class(means.rows(), Matrix::Zero(dim, dim));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const Eigen::RowVectorXd d = data.row(i) - means.row(labels[i]);
    per_class[labels[i]].noalias() += d.transpose() * d;
  }
  int used = 0;
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    if (counts(c) < 2.0) continue;
    w += per_class[c] / counts(c);
    ++used;
  }
  if (used == 0) throw DataError("WCCN needs at least one class with 2 samples");
  w = Symmetrize(w / used);
  Eigen::SelfAdjointEigenSolver<Matrix> es(w);
  const double floor = std::max(1e-8, 1e-6 * es.eigenvalues().cwiseAbs().mean());
  if (es.eigenvalues().minCoeff() < floor) {
    Warn("WCCN within-class covariance is (near) singular; eigenvalues floored");
    w = es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() *
        es.eigenvectors().transpose();
  }
  Eigen::LLT<Matrix> llt(SpdInverse(Symmetrize(w)));
  if (llt.info() != Eigen::Success) throw NumericalError("WCCN factorization failed");
  LinearTransform t;
  t.kind = TransformKind::kWccn;
  t.in_dim = t.out_dim = static_cast<int>(dim);
  t.a = Matrix(llt.matrixL()).transpose();
  return t;
}

ShortDurationComp FitShortDurationComp(const Matrix &full, const Matrix &excerpt,
                                       int out_dim, bool wccn_first) {
  if (full.rows() != excerpt.rows() || full.cols() != excerpt.cols())
    throw DataError("short-duration compensation needs one excerpt per full segment");
  if (full.rows() < 2) throw DataError("short-duration compensation needs at least 2 pairs");
  const Eigen::Index pairs = full.rows();
  Matrix data(2 * pairs, full.cols());
  data.topRows(pairs) = full;
  data.bottomRows(pairs) = excerpt;
  std::vector<int> labels(2 * pairs);
  for (Eigen::Index i = 0; i < pairs; ++i) labels[i] = labels[pairs + i] = static_cast<int>(i);

  ShortDurationComp out;
  out.wccn_first = wccn_first;
  auto apply = [](const LinearTransform &t, const Matrix &x) {
    Matrix y(x.rows(), t.out_dim);
    for (Eigen::Index i = 0; i < x.rows(); ++i) y.row(i) = t.Apply(x.row(i).transpose()).transpose();
    return y;
  };
  auto fit_lda = [&](const Matrix &x) {
    const ScatterPair s = ClassScatter(x, labels);
    return Projection(TransformKind::kShortCompLda,
                      DiscriminantProjection(s.between, s.within, out_dim));
  };
  if (wccn_first) {
    out.wccn = FitWccn(data, labels);
    out.lda = fit_lda(apply(out.wccn, data));
  } else {
    out.lda = fit_lda(data);
    out.wccn = FitWccn(apply(out.lda, data), labels);
  }
  return out;
}

LinearTransform LengthNormTransform(int dim) {
  LinearTransform t;
  t.kind = TransformKind::kLengthNorm;
  t.in_dim = t.out_dim = dim;
  return t;
}

Vector LengthNormalize(const Vector &w) {
  const double norm = w.norm();
  if (!(norm > 0.0)) throw DataError("cannot length-normalize a zero vector");
  return w / norm;
}

Embedding LengthNormalize(const Embedding &e) {
  Embedding out = e;
  out.w = LengthNormalize(e.w);
  out.stage = Stage::kLengthNorm;
  return out;
}

Embedding ApplyChain(std::span<const LinearTransform> chain, const Embedding &e) {
  Embedding out = e;
  for (const auto &t : chain) {
    t.Validate();
    const Stage next = StageAfter(t.kind);
    const bool same_stage_ok = next == Stage::kShortComp && out.stage == Stage::kShortComp;
    if (next < out.stage || (next == out.stage && !same_stage_ok))
      throw DataError("transform " + TransformKindName(t.kind) + " cannot follow stage " +
                      StageName(out.stage) + " for '" + e.id + "'");
    out.w = t.Apply(out.w);
    out.stage = next;
  }
  return out;
}

void WriteTransform(const std::filesystem::path &path, const LinearTransform &t) {
  t.Validate();
  BinaryWriter w(path);
  w.Magic("IVTR");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(t.kind));
  w.U32(static_cast<std::uint32_t>(t.in_dim));
  w.U32(static_cast<std::uint32_t>(t.out_dim));
  const bool has_a = t.kind != TransformKind::kLengthNorm;
  w.U8(has_a ? 1 : 0);
  if (has_a) w.MatrixData(t.a);
  w.U8(t.b.size() ? 1 : 0);
  if (t.b.size()) w.VectorData(t.b);
  w.Commit();
}

LinearTransform ReadTransform(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVTR");
  if (r.U32() != 1) throw DataError("unsupported IVTR version in " + path.string());
  LinearTransform t;
  const std::uint32_t kind = r.U32();
  if (kind > static_cast<std::uint32_t>(TransformKind::kLengthNorm))
    throw DataError("bad transform kind in " + path.string());
  t.kind = static_cast<TransformKind>(kind);
  t.in_dim = static_cast<int>(r.U32());
  t.out_dim = static_cast<int>(r.U32());
  if (r.U8()) t.a = r.MatrixData(t.out_dim, t.in_dim);
  if (r.U8()) t.b = r.VectorData(t.in_dim);
  t.Validate();
  return t;
}

void WriteChain(const std::filesystem::path &manifest,
                const std::vector<std::filesystem::path> &paths) {
  std::ostringstream os;
  for (const auto &p : paths) os << p.string() << '\n';
  WriteTextAtomic(manifest, os.str());
}

std::vector<LinearTransform> ReadChain(const std::filesystem::path &manifest) {
  std::ifstream is(manifest);
  if (!is) throw DataError("cannot open chain manifest: " + manifest.string());
  std::vector<LinearTransform> chain;
  std::string line;
  while (std::getline(is, line)) {
    auto tok = SplitWhitespace(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    std::filesystem::path p(tok[0]);
    if (p.is_relative()) p = manifest.parent_path() / p;
    chain.push_back(ReadTransform(p));
  }
  for (std::size_t i = 1; i < chain.size(); ++i)
    if (chain[i].in_dim != chain[i - 1].out_dim)
      throw DataError("chain " + manifest.string() + " has inconsistent dimensions at step " +
                      std::to_string(i));
  return chain;
}

Matrix StackEmbeddings(std::span<const Embedding> embeddings) {
  if (embeddings.empty()) return Matrix();
  Matrix out(embeddings.size(), embeddings[0].w.size());
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (embeddings[i].w.size() != out.cols())
      throw DataError("embeddings have inconsistent dimensions");
    out.row(i) = embeddings[i].w.transpose();
  }
  return out;
}

}  // namespace ivpipe
