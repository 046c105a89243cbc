// src/plda.cc

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

#include "ivpipe/plda.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "ivpipe/io.h"
#include "ivpipe/linalg.h"
#include "ivpipe/transforms.h"

namespace ivpipe {

namespace {

struct SpeakerGroups {
  std::vector<std::vector<Eigen::Index>> rows;  // per speaker
  int max_count = 0;
};

SpeakerGroups GroupBySpeaker(const Matrix &data, std::span<const int> speakers) {
  if (static_cast<Eigen::Index>(speakers.size()) != data.rows())
    throw DataError("PLDA: " + std::to_string(speakers.size()) + " labels for " +
                    std::to_string(data.rows()) + " embeddings");
  if (data.rows() == 0) throw DataError("PLDA: no embeddings");
  SpeakerGroups g;
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const int s = speakers[i];
    if (s < 0) throw DataError("PLDA: negative speaker label");
    if (static_cast<std::size_t>(s) >= g.rows.size()) g.rows.resize(s + 1);
    g.rows[s].push_back(i);
  }
  for (const auto &r : g.rows) g.max_count = std::max<int>(g.max_count, r.size());
  return g;
}

// Quantities shared by every speaker with the same segment count.
struct PosteriorCache {
  Matrix vt_sinv;    // F x D
  Matrix vt_sinv_v;  // F x F
  std::map<int, Eigen::LLT<Matrix>> by_count;

  PosteriorCache(const PldaModel &model, const Eigen::LLT<Matrix> &sigma_llt) {
    vt_sinv = sigma_llt.solve(model.v).transpose();
    vt_sinv_v = Symmetrize(vt_sinv * model.v);
  }
  const Eigen::LLT<Matrix> &Get(int n) {
    auto it = by_count.find(n);
    if (it != by_count.end()) return it->second;
    Matrix l = Matrix::Identity(vt_sinv_v.rows(), vt_sinv_v.cols()) + n * vt_sinv_v;
    return by_count.emplace(n, Eigen::LLT<Matrix>(l)).first->second;
  }
};

Eigen::LLT<Matrix> SigmaFactor(const Matrix &sigma) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("PLDA residual covariance is not SPD");
  return llt;
}

}  // namespace

std::string PldaDomainName(PldaDomain d) {
  switch (d) {
    case PldaDomain::kIn: return "in";
    case PldaDomain::kOut: return "out";
    case PldaDomain::kAdapted: return "adapted";
  }
  return "?";
}

void PldaModel::Validate() const {
  const auto d = m.size();
  if (d == 0 || v.rows() != d || sigma.rows() != d || sigma.cols() != d)
    throw DataError("PLDA model has inconsistent dimensions");
  if (v.cols() > d) throw DataError("PLDA model has more speaker factors than dimensions");
  if (!m.allFinite() || !v.allFinite() || !sigma.allFinite())
    throw NumericalError("PLDA model is not finite");
  SigmaFactor(Symmetrize(sigma));
}

PldaModel InitPlda(const Matrix &data, std::span<const int> speakers, int num_factors,
                   unsigned seed) {
  const SpeakerGroups groups = GroupBySpeaker(data, speakers);
  const Eigen::Index n = data.rows(), dim = data.cols();
  if (num_factors < 1 || num_factors > dim)
    throw ConfigError("PLDA speaker factors F=" + std::to_string(num_factors) +
                      " must lie in [1, D=" + std::to_string(dim) + "]");
  const Vector mu = data.colwise().mean().transpose();
  Matrix between = Matrix::Zero(dim, dim), within = Matrix::Zero(dim, dim);
  for (const auto &rows : groups.rows) {
    if (rows.empty()) continue;
    Vector spk_mean = Vector::Zero(dim);
    for (auto i : rows) spk_mean += data.row(i).transpose();
    spk_mean /= static_cast<double>(rows.size());
    const Vector d = spk_mean - mu;
    between.noalias() += static_cast<double>(rows.size()) * d * d.transpose();
    for (auto i : rows) {
      const Vector e = data.row(i).transpose() - spk_mean;
      within.noalias() += e * e.transpose();
    }
  }
  between = Symmetrize(between / static_cast<double>(n));
  within = Symmetrize(within / static_cast<double>(n));
  const double scale = std::max((between + within).trace() / static_cast<double>(dim), 1e-12);

  Eigen::SelfAdjointEigenSolver<Matrix> eb(between);
  PldaModel model;
  model.m = mu;
  model.v.resize(dim, num_factors);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1e-3 * std::sqrt(scale));
  for (int f = 0; f < num_factors; ++f) {
    const Eigen::Index col = dim - 1 - f;
    model.v.col(f) = eb.eigenvectors().col(col) * std::sqrt(std::max(eb.eigenvalues()(col), 0.0));
    for (Eigen::Index r = 0; r < dim; ++r) model.v(r, f) += g(rng);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> ew(within);
  const Vector floored = ew.eigenvalues().cwiseMax(1e-3 * scale);
  model.sigma = Symmetrize(ew.eigenvectors() * floored.asDiagonal() * ew.eigenvectors().transpose());
  return model;
}

double PldaLogLikelihood(const PldaModel &model, const Matrix &data,
                         std::span<const int> speakers) {
  const SpeakerGroups groups = GroupBySpeaker(data, speakers);
  const Eigen::Index dim = data.cols();
  if (dim != model.Dim()) throw DataError("PLDA dimension mismatch");
  const Eigen::LLT<Matrix> sigma_llt = SigmaFactor(model.sigma);
  const double logdet_sigma = 2.0 * sigma_llt.matrixLLT().diagonal().array().log().sum();
  PosteriorCache cache(model, sigma_llt);
  const Matrix centered = data.rowwise() - model.m.transpose();
  const Matrix solved = sigma_llt.solve(centered.transpose());  // D x N
  const Vector quad = (centered.transpose().array() * solved.array()).colwise().sum().transpose();
  double total = 0.0;
  for (const auto &rows : groups.rows) {
    if (rows.empty()) continue;
    const int cnt = static_cast<int>(rows.size());
    Vector f = Vector::Zero(dim);
    double q = 0.0;
    for (auto i : rows) {
      f += centered.row(i).transpose();
      q += quad(i);
    }
    const Eigen::LLT<Matrix> &l = cache.Get(cnt);
    const Vector proj = cache.vt_sinv * f;
    q -= proj.dot(l.solve(proj));
    const double logdet_l = 2.0 * l.matrixLLT().diagonal().array().log().sum();
    total += -0.5 * (cnt * dim * std::log(2.0 * std::numbers::pi) + cnt * logdet_sigma +
                     logdet_l + q);
  }
  return total;
}

PldaModel TrainPlda(const Matrix &data, std::span<const int> speakers,
                    const PldaTrainOptions &opts, std::vector<double> *loglik_history,
                    const PldaModel *init) {
  PldaModel model;
  if (init) {
    if (init->Dim() != data.cols() || init->NumFactors() != opts.num_factors)
      throw DataError("PLDA initial model shape does not match the data and factor count");
    model = *init;
    model.m = data.colwise().mean().transpose();
  } else {
    model = InitPlda(data, speakers, opts.num_factors, opts.seed);
  }
  const SpeakerGroups groups = GroupBySpeaker(data, speakers);
  const Eigen::Index n = data.rows(), dim = data.cols();
  const int f = opts.num_factors;
  const Matrix scatter = data.transpose() * data;
  if (loglik_history) {
    loglik_history->clear();
    loglik_history->push_back(PldaLogLikelihood(model, data, speakers));
  }
  for (int iter = 0; iter < opts.num_iters; ++iter) {
    const Eigen::LLT<Matrix> sigma_llt = SigmaFactor(model.sigma);
    PosteriorCache cache(model, sigma_llt);
    // Augmented latent z = [1; y] so that [m V] is updated jointly.
    Matrix r_acc = Matrix::Zero(f + 1, f + 1);
    Matrix c_acc = Matrix::Zero(dim, f + 1);
    for (const auto &rows : groups.rows) {
      if (rows.empty()) continue;
      const int cnt = static_cast<int>(rows.size());
      Vector sum_w = Vector::Zero(dim);
      for (auto i : rows) sum_w += data.row(i).transpose();
      const Eigen::LLT<Matrix> &l = cache.Get(cnt);
      const Vector ey = l.solve(cache.vt_sinv * (sum_w - cnt * model.m));
      Matrix ezz(f + 1, f + 1);
      ezz(0, 0) = 1.0;
      ezz.block(1, 0, f, 1) = ey;
      ezz.block(0, 1, 1, f) = ey.transpose();
      ezz.block(1, 1, f, f) = l.solve(Matrix::Identity(f, f)) + ey * ey.transpose();
      r_acc.noalias() += cnt * ezz;
      c_acc.col(0) += sum_w;
      c_acc.rightCols(f).noalias() += sum_w * ey.transpose();
    }
    Eigen::LLT<Matrix> r_llt(Symmetrize(r_acc));
    if (r_llt.info() != Eigen::Success) throw NumericalError("PLDA M-step is singular");
    const Matrix w = r_llt.solve(c_acc.transpose()).transpose();  // D x (F+1)
    model.m = w.col(0);
    model.v = w.rightCols(f);
    Matrix sigma = Symmetrize((scatter - w * c_acc.transpose()) / static_cast<double>(n));
    Eigen::LLT<Matrix> check(sigma);
    if (check.info() != Eigen::Success) {
      Warn("PLDA residual covariance lost definiteness; flooring eigenvalues");
      Eigen::SelfAdjointEigenSolver<Matrix> es(sigma);
      const double floor = 1e-10 * std::max(sigma.trace() / static_cast<double>(dim), 1e-12);
      sigma = es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() *
              es.eigenvectors().transpose();
    }
    model.sigma = Symmetrize(sigma);
    if (loglik_history) loglik_history->push_back(PldaLogLikelihood(model, data, speakers));
  }
  return model;
}

PldaModel AlignFactors(const PldaModel &model, const Matrix &reference_v) {
  if (reference_v.rows() != model.v.rows() || reference_v.cols() != model.v.cols())
    throw DataError("factor alignment needs loadings of identical shape");
  Eigen::JacobiSVD<Matrix> svd(model.v.transpose() * reference_v,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
  PldaModel out = model;
  out.v = model.v * (svd.matrixU() * svd.matrixV().transpose());
  return out;
}

PldaModel AdaptPlda(const PldaModel &in, const PldaModel &out, double alpha,
                    bool interpolate_mean) {
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("adaptation weight alpha must lie in [0, 1]");
  if (in.Dim() != out.Dim() || in.NumFactors() != out.NumFactors())
    throw DataError("cannot adapt PLDA models of different shapes (" +
                    std::to_string(in.Dim()) + "x" + std::to_string(in.NumFactors()) + " vs " +
                    std::to_string(out.Dim()) + "x" + std::to_string(out.NumFactors()) + ")");
  const double beta = 1.0 - alpha;
  PldaModel a;
  a.v = alpha * in.v + beta * out.v;
  a.sigma = alpha * in.sigma + beta * out.sigma;
  a.m = interpolate_mean ? Vector(alpha * in.m + beta * out.m) : out.m;
  a.domain = PldaDomain::kAdapted;
  return a;
}

ScoringKernel BuildKernel(const PldaModel &model) {
  model.Validate();
  ScoringKernel k;
  k.m = model.m;
  k.sb = Symmetrize(model.v * model.v.transpose());
  k.st = Symmetrize(k.sb + model.sigma);
  const Matrix st_inv = SpdInverse(k.st);
  Matrix schur = Symmetrize(k.st - k.sb * st_inv * k.sb);
  Eigen::LLT<Matrix> llt(schur);
  if (llt.info() != Eigen::Success) {
    Warn("PLDA kernel: St - Sb St^-1 Sb is numerically singular; adding ridge 1e-10");
    schur += 1e-10 * Matrix::Identity(schur.rows(), schur.cols());
    llt.compute(schur);
    if (llt.info() != Eigen::Success) throw NumericalError("PLDA kernel is singular");
  }
  const Matrix a = llt.solve(Matrix::Identity(schur.rows(), schur.cols()));
  k.q = Symmetrize(st_inv - a);
  k.p = Symmetrize(st_inv * k.sb * a);
  k.c = 0.0;
  return k;
}

double ScoreTrial(const Vector &enrol, const Vector &test, const ScoringKernel &kernel) {
  if (enrol.size() != kernel.Dim() || test.size() != kernel.Dim())
    throw DataError("score: embedding dimension " + std::to_string(enrol.size()) + "/" +
                    std::to_string(test.size()) + " does not match kernel " +
                    std::to_string(kernel.Dim()));
  const Vector x1 = enrol - kernel.m, x2 = test - kernel.m;
  return x1.dot(kernel.q * x1) + x2.dot(kernel.q * x2) + 2.0 * x1.dot(kernel.p * x2) + kernel.c;
}

Embedding Enroll(std::span<const Embedding> segments, const std::string &model_id) {
  if (segments.size() != 1 && segments.size() != 3)
    throw DataError("enrolment for '" + model_id + "' needs 1 or 3 segments, got " +
                    std::to_string(segments.size()));
  Embedding out = segments[0];
  out.id = model_id;
  if (segments.size() == 1) return out;
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].w.size() != out.w.size())
      throw DataError("enrolment segments for '" + model_id + "' differ in dimension");
    out.w += segments[i].w;
    out.speech_duration += segments[i].speech_duration;
  }
  out.w /= static_cast<double>(segments.size());
  if (!(out.w.norm() > 0.0))
    throw DataError("enrolment mean for '" + model_id + "' is the zero vector");
  return LengthNormalize(out);
}

std::vector<TrialScore> ScoreTrials(const ScoringKernel &kernel,
                                    const std::map<std::string, Embedding> &models,
                                    const std::map<std::string, Embedding> &tests,
                                    std::span<const TrialKey> trials) {
  std::vector<TrialScore> out;
  out.reserve(trials.size());
  for (const auto &t : trials) {
    auto mi = models.find(t.model_id);
    if (mi == models.end()) throw DataError("trial references unknown model '" + t.model_id + "'");
    auto ti = tests.find(t.test_id);
    if (ti == tests.end()) throw DataError("trial references unknown test '" + t.test_id + "'");
    out.push_back({t.model_id, t.test_id, ScoreTrial(mi->second.w, ti->second.w, kernel)});
  }
  return out;
}

void WritePlda(const std::filesystem::path &path, const PldaModel &model) {
  model.Validate();
  BinaryWriter w(path);
  w.Magic("IVPL");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(model.Dim()));
  w.U32(static_cast<std::uint32_t>(model.NumFactors()));
  w.U8(static_cast<std::uint8_t>(model.domain));
  w.VectorData(model.m);
  w.MatrixData(model.v);
  w.MatrixData(model.sigma);
  w.Commit();
}

PldaModel ReadPlda(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVPL");
  if (r.U32() != 1) throw DataError("unsupported IVPL version in " + path.string());
  const std::uint32_t d = r.U32(), f = r.U32();
  const std::uint8_t dom = r.U8();
  if (dom > 2) throw DataError("bad PLDA domain tag in " + path.string());
  PldaModel model;
  model.domain = static_cast<PldaDomain>(dom);
  model.m = r.VectorData(d);
  model.v = r.MatrixData(d, f);
  model.sigma = r.MatrixData(d, d);
  model.Validate();
  return model;
}

void WriteKernel(const std::filesystem::path &path, const ScoringKernel &kernel) {
  BinaryWriter w(path);
  w.Magic("IVKN");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(kernel.Dim()));
  w.MatrixData(kernel.p);
  w.MatrixData(kernel.q);
  w.VectorData(kernel.m);
  w.F64(kernel.c);
  w.Commit();
}

ScoringKernel ReadKernel(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVKN");
  if (r.U32() != 1) throw DataError("unsupported IVKN version in " + path.string());
  const std::uint32_t d = r.U32();
  ScoringKernel k;
  k.p = r.MatrixData(d, d);
  k.q = r.MatrixData(d, d);
  k.m = r.VectorData(d);
  k.c = r.F64();
  return k;
}

std::vector<TrialKey> ReadTrials(const std::filesystem::path &path, bool require_labels) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open trial list: " + path.string());
  std::vector<TrialKey> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto tok = SplitWhitespace(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok.size() < 2 || tok.size() > 3 || (require_labels && tok.size() != 3))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed trial line");
    TrialKey t{tok[0], tok[1], false};
    if (tok.size() == 3) {
      if (tok[2] == "target") t.target = true;
      else if (tok[2] != "nontarget")
        throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad label '" +
                        tok[2] + "'");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void WriteKey(const std::filesystem::path &path, std::span<const TrialKey> key) {
  std::ostringstream os;
  for (const auto &t : key)
    os << t.model_id << ' ' << t.test_id << ' ' << (t.target ? "target" : "nontarget") << '\n';
  WriteTextAtomic(path, os.str());
}

void WriteScores(const std::filesystem::path &path, std::span<const TrialScore> scores) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(10);
  for (const auto &s : scores) {
    if (!std::isfinite(s.score))
      throw NumericalError("non-finite score for " + s.model_id + " " + s.test_id);
    os << s.model_id << ' ' << s.test_id << ' ' << s.score << '\n';
  }
  WriteTextAtomic(path, os.str());
}

std::vector<TrialScore> ReadScores(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open score file: " + path.string());
  std::vector<TrialScore> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto tok = SplitWhitespace(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok.size() != 3)
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed score line");
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok[2], &used);
    } catch (const std::exception &) {
      used = 0;
    }
    if (used != tok[2].size())
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": bad score '" + tok[2] + "'");
    out.push_back({tok[0], tok[1], v});
  }
  return out;
}

std::map<std::string, std::vector<std::filesystem::path>> ReadEnrolManifest(
    const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open enrolment manifest: " + path.string());
  std::map<std::string, std::vector<std::filesystem::path>> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto tok = SplitWhitespace(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok.size() < 2) throw DataError(path.string() + ": enrolment line without segments");
    auto &paths = out[tok[0]];
    for (std::size_t i = 1; i < tok.size(); ++i) {
      std::filesystem::path p(tok[i]);
      if (p.is_relative()) p = path.parent_path() / p;
      paths.push_back(p);
    }
  }
  return out;
}

}  // namespace ivpipe
