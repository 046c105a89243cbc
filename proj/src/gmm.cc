// src/gmm.cc

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

#include "ivpipe/gmm.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ivpipe/io.h"
#include "ivpipe/linalg.h"

namespace ivpipe {

GmmModel::GmmModel(Vector weights, Matrix means, std::vector<Matrix> covariances)
    : weights_(std::move(weights)),
      means_(std::move(means)),
      covariances_(std::move(covariances)) {
  ComputeDerived();
}

void GmmModel::ComputeDerived() {
  const int m = NumComponents(), d = Dim();
  if (means_.rows() != m || static_cast<int>(covariances_.size()) != m)
    throw DataError("GMM parameter shapes disagree");
  if (std::abs(weights_.sum() - 1.0) > 1e-9 || (weights_.array() < 0.0).any())
    throw DataError("GMM weights must form a probability vector");
  weights_ /= weights_.sum();
  chol_.resize(m);
  log_norm_.resize(m);
  for (int c = 0; c < m; ++c) {
    if (covariances_[c].rows() != d || covariances_[c].cols() != d)
      throw DataError("GMM covariance has wrong shape");
    Eigen::LLT<Matrix> llt(covariances_[c]);
    if (llt.info() != Eigen::Success)
      throw NumericalError("GMM component " + std::to_string(c) +
                           " covariance is not positive definite");
    chol_[c] = llt.matrixL();
    const double logdet = 2.0 * chol_[c].diagonal().array().log().sum();
    log_norm_(c) = (weights_(c) > 0.0 ? std::log(weights_(c))
                                      : -std::numeric_limits<double>::infinity()) -
                   0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet);
  }
}

Matrix GmmModel::ComponentLogLikelihoods(const Matrix &frames) const {
  if (frames.cols() != Dim())
    throw DataError("feature dimension " + std::to_string(frames.cols()) +
                    " != UBM dimension " + std::to_string(Dim()));
  Matrix ll(frames.rows(), NumComponents());
  for (int c = 0; c < NumComponents(); ++c) {
    Matrix centered = (frames.rowwise() - means_.row(c)).transpose();
    chol_[c].triangularView<Eigen::Lower>().solveInPlace(centered);
    ll.col(c) = (log_norm_(c) - 0.5 * centered.colwise().squaredNorm().array()).matrix().transpose();
  }
  return ll;
}

Matrix GmmModel::Posteriors(const Matrix &frames, Vector *frame_loglike) const {
  Matrix post = ComponentLogLikelihoods(frames);
  if (frame_loglike) frame_loglike->resize(post.rows());
  for (Eigen::Index t = 0; t < post.rows(); ++t) {
    const double m = post.row(t).maxCoeff();
    post.row(t) = (post.row(t).array() - m).exp();
    const double s = post.row(t).sum();
    post.row(t) /= s;
    if (frame_loglike) (*frame_loglike)(t) = m + std::log(s);
  }
  return post;
}

std::uint64_t GmmModel::Fingerprint() const {
  std::uint64_t h = Fnv1a(weights_.data(), sizeof(double) * weights_.size());
  h = Fnv1a(means_.data(), sizeof(double) * means_.size(), h);
  for (const auto &c : covariances_) h = Fnv1a(c.data(), sizeof(double) * c.size(), h);
  return h;
}

namespace {

Matrix PoolFrames(const std::vector<FeatureMatrix> &features) {
  if (features.empty()) throw DataError("UBM training needs at least one utterance");
  const int dim = features[0].Dim();
  Eigen::Index total = 0;
  for (const auto &f : features) {
    if (f.Dim() != dim) throw DataError("inconsistent feature dimensions in UBM training data");
    total += f.NumFrames();
  }
  Matrix x(total, dim);
  Eigen::Index r = 0;
  for (const auto &f : features) {
    x.middleRows(r, f.NumFrames()) = f.frames;
    r += f.NumFrames();
  }
  return x;
}

Matrix FloorCovariance(const Matrix &cov, double floor) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(Symmetrize(cov));
  Vector d = es.eigenvalues().cwiseMax(floor);
  return Symmetrize(es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose());
}

// Squared distances from every row of x to every row of centers.
Matrix SquaredDistances(const Matrix &x, const Matrix &centers) {
  Matrix d = -2.0 * x * centers.transpose();
  d.colwise() += x.rowwise().squaredNorm();
  d.rowwise() += centers.rowwise().squaredNorm().transpose();
  return d.cwiseMax(0.0);
}

Matrix KMeans(const Matrix &x, int k, int iters, std::mt19937_64 *rng,
              std::vector<int> *assignment) {
  const Eigen::Index n = x.rows();
  Matrix centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centers.row(0) = x.row(pick(*rng));
  Vector best = (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(*rng), acc = 0.0;
      for (chosen = 0; chosen < n - 1; ++chosen) {
        acc += best(chosen);
        if (acc >= target) break;
      }
    } else {
      chosen = pick(*rng);
    }
    centers.row(c) = x.row(chosen);
    best = best.cwiseMin((x.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  assignment->assign(n, 0);
  constexpr Eigen::Index kBlock = 8192;
  for (int it = 0; it <= iters; ++it) {
    Vector nearest(n);
    for (Eigen::Index start = 0; start < n; start += kBlock) {
      const Eigen::Index len = std::min(kBlock, n - start);
      const Matrix dist = SquaredDistances(x.middleRows(start, len), centers);
      for (Eigen::Index i = 0; i < len; ++i) {
        Eigen::Index arg;
        nearest(start + i) = dist.row(i).minCoeff(&arg);
        (*assignment)[start + i] = static_cast<int>(arg);
      }
    }
    if (it == iters) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    Vector counts = Vector::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row((*assignment)[i]) += x.row(i);
      counts((*assignment)[i]) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0.0) {
        centers.row(c) = sums.row(c) / counts(c);
      } else {
        // empty cluster: move it onto the point farthest from its centre
        Eigen::Index far;
        nearest.maxCoeff(&far);
        centers.row(c) = x.row(far);
        nearest(far) = 0.0;
      }
    }
  }
  return centers;
}

}  // namespace

GmmModel TrainUbm(const std::vector<FeatureMatrix> &features,
                  const UbmTrainOptions &opts,
                  std::vector<double> *loglike_history) {
  const Matrix x = PoolFrames(features);
  const Eigen::Index n = x.rows();
  const int dim = static_cast<int>(x.cols());
  const int m = opts.num_components;
  if (m < 1) throw ConfigError("UBM needs at least one component");
  if (n < static_cast<Eigen::Index>(m) * (dim + 1))
    throw DataError("too few frames (" + std::to_string(n) + ") for " +
                    std::to_string(m) + " full-covariance components");
  const Eigen::RowVectorXd global_mean = x.colwise().mean();
  const Matrix global_cov =
      (x.rowwise() - global_mean).transpose() * (x.rowwise() - global_mean) / static_cast<double>(n);
  const double floor = opts.cov_floor_factor * global_cov.diagonal().mean();
  const double min_occ = opts.min_occupancy < 0.0 ? dim : opts.min_occupancy;

  std::mt19937_64 rng(opts.seed);
  std::vector<int> assign;
  const Matrix centers = KMeans(x, m, opts.kmeans_iters, &rng, &assign);
  Vector weights = Vector::Zero(m);
  Matrix means = centers;
  std::vector<Matrix> covs(m, Matrix::Zero(dim, dim));
  {
    std::vector<Matrix> scatter(m, Matrix::Zero(dim, dim));
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = assign[i];
      weights(c) += 1.0;
      Eigen::RowVectorXd d = x.row(i) - centers.row(c);
      scatter[c].noalias() += d.transpose() * d;
    }
    for (int c = 0; c < m; ++c) {
      covs[c] = weights(c) >= 2.0 ? Matrix(scatter[c] / weights(c)) : global_cov;
      covs[c] = FloorCovariance(covs[c], floor);
      weights(c) = std::max(weights(c), 1.0);
    }
    weights /= weights.sum();
  }
  GmmModel gmm(weights, means, covs);

  if (loglike_history) loglike_history->clear();
  // Second-order statistics are accumulated around the global mean and in
  // blocks of frames so memory stays bounded by the block size.
  constexpr Eigen::Index kBlock = 8192;
  for (int iter = 0; iter <= opts.num_iters; ++iter) {
    Vector occ = Vector::Zero(m);
    Matrix first = Matrix::Zero(m, dim);
    std::vector<Matrix> second(m, Matrix::Zero(dim, dim));
    double total_ll = 0.0;
    const bool last = iter == opts.num_iters;
    for (Eigen::Index start = 0; start < n; start += kBlock) {
      const Eigen::Index len = std::min(kBlock, n - start);
      Vector frame_ll;
      const Matrix post = gmm.Posteriors(x.middleRows(start, len), &frame_ll);
      total_ll += frame_ll.sum();
      if (last) continue;
      const Matrix shifted = x.middleRows(start, len).rowwise() - global_mean;
      occ += post.colwise().sum().transpose();
      first.noalias() += post.transpose() * shifted;
      for (int c = 0; c < m; ++c) {
        const Matrix weighted = shifted.array().colwise() * post.col(c).array();
        second[c].noalias() += weighted.transpose() * shifted;
      }
    }
    if (loglike_history) loglike_history->push_back(total_ll / static_cast<double>(n));
    if (last) break;
    std::vector<int> starved;
    for (int c = 0; c < m; ++c) {
      if (occ(c) < min_occ) {
        starved.push_back(c);
        continue;
      }
      const Eigen::RowVectorXd mean = first.row(c) / occ(c);
      means.row(c) = mean + global_mean;
      covs[c] = FloorCovariance(second[c] / occ(c) - mean.transpose() * mean, floor);
      weights(c) = occ(c) / static_cast<double>(n);
    }
    for (int c : starved) {
      Eigen::Index donor;
      Vector live = weights;
      for (int s : starved) live(s) = -1.0;
      live.maxCoeff(&donor);
      Warn("UBM component " + std::to_string(c) + " starved (occupancy " +
           std::to_string(occ(c)) + "); re-seeding from component " +
           std::to_string(donor));
      Eigen::SelfAdjointEigenSolver<Matrix> es(covs[donor]);
      const Eigen::RowVectorXd offset =
          0.5 * std::sqrt(es.eigenvalues()(dim - 1)) * es.eigenvectors().col(dim - 1).transpose();
      means.row(c) = means.row(donor) + offset;
      means.row(donor) -= offset;
      covs[c] = covs[donor];
      weights(donor) *= 0.5;
      weights(c) = weights(donor);
    }
    weights /= weights.sum();
    gmm = GmmModel(weights, means, covs);
  }
  return gmm;
}

SuffStats AccumulateStats(const GmmModel &ubm, const FeatureMatrix &feats,
                          const std::string &utterance_id) {
  const Matrix post = ubm.Posteriors(feats.frames);
  SuffStats s;
  s.utterance_id = utterance_id;
  s.zero_order = post.colwise().sum().transpose();
  s.first_order = post.transpose() * feats.frames;
  s.num_frames = feats.NumFrames();
  return s;
}

SuffStats ScaleStats(const SuffStats &stats, double factor) {
  if (!(factor > 0.0 && factor <= 1.0))
    throw ConfigError("stats scale factor must lie in (0, 1]");
  if (stats.scale != 1.0)
    throw DataError("statistics for '" + stats.utterance_id +
                    "' are already scaled by " + std::to_string(stats.scale));
  SuffStats out = stats;
  out.zero_order *= factor;
  out.first_order *= factor;
  out.scale = factor;
  return out;
}

void WriteGmm(const std::filesystem::path &path, const GmmModel &gmm) {
  BinaryWriter w(path);
  w.Magic("IVGM");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(gmm.NumComponents()));
  w.U32(static_cast<std::uint32_t>(gmm.Dim()));
  w.VectorData(gmm.weights());
  w.MatrixData(gmm.means());
  for (const auto &c : gmm.covariances()) w.MatrixData(c);
  w.Commit();
}

GmmModel ReadGmm(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVGM");
  if (r.U32() != 1) throw DataError("unsupported IVGM version in " + path.string());
  const std::uint32_t m = r.U32(), d = r.U32();
  Vector weights = r.VectorData(m);
  Matrix means = r.MatrixData(m, d);
  std::vector<Matrix> covs;
  for (std::uint32_t c = 0; c < m; ++c) covs.push_back(r.MatrixData(d, d));
  return GmmModel(std::move(weights), std::move(means), std::move(covs));
}

void WriteStats(const std::filesystem::path &path, const SuffStats &stats) {
  BinaryWriter w(path);
  w.Magic("IVST");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(stats.NumComponents()));
  w.U32(static_cast<std::uint32_t>(stats.Dim()));
  w.F64(stats.scale);
  w.VectorData(stats.zero_order);
  w.MatrixData(stats.first_order);
  w.Commit();
}

SuffStats ReadStats(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVST");
  if (r.U32() != 1) throw DataError("unsupported IVST version in " + path.string());
  const std::uint32_t m = r.U32(), d = r.U32();
  SuffStats s;
  s.utterance_id = path.stem().string();
  s.scale = r.F64();
  s.zero_order = r.VectorData(m);
  s.first_order = r.MatrixData(m, d);
  s.num_frames = s.zero_order.sum() / s.scale;
  return s;
}

}  // namespace ivpipe
