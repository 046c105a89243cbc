// src/sad.cc

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

#include "ivpipe/sad.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "ivpipe/io.h"

namespace ivpipe {

void FrameClassifier::Validate() const {
  if (context < 0 || input_dim < 1) throw ConfigError("bad classifier context/input dim");
  if (layers.empty()) throw ConfigError("classifier has no layers");
  Eigen::Index in = SplicedDim();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto &l = layers[i];
    if (l.weights.cols() != in || l.bias.size() != l.weights.rows())
      throw ConfigError("classifier layer " + std::to_string(i) +
                        " dimension mismatch (expected input " + std::to_string(in) + ")");
    in = l.weights.rows();
  }
  if (in != 2) throw ConfigError("classifier output layer must have 2 units");
}

Matrix FrameClassifier::Forward(const Matrix &spliced) const {
  if (spliced.cols() != SplicedDim())
    throw ConfigError("classifier input dimension " + std::to_string(spliced.cols()) +
                      " != " + std::to_string(SplicedDim()));
  Matrix h = spliced.transpose();  // features x frames
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = (layers[i].weights * h).colwise() + layers[i].bias;
    if (i + 1 < layers.size()) h = h.cwiseMax(0.0);
  }
  // softmax per column
  Matrix post(h.cols(), h.rows());
  for (Eigen::Index t = 0; t < h.cols(); ++t) {
    const double m = h.col(t).maxCoeff();
    Vector e = (h.col(t).array() - m).exp();
    post.row(t) = (e / e.sum()).transpose();
  }
  return post;
}

void SadModel::Validate() const {
  for (int i = 0; i < 2; ++i) {
    if (std::abs(transitions.row(i).sum() - 1.0) > 1e-9)
      throw ConfigError("SAD transition rows must sum to 1");
    for (int j = 0; j < 2; ++j)
      if (!(transitions(i, j) > 0.0 && transitions(i, j) < 1.0))
        throw ConfigError("SAD transition probabilities must lie in (0, 1)");
  }
  if (!(prior_speech > 0.0 && prior_speech < 1.0))
    throw ConfigError("SAD speech prior must lie in (0, 1)");
  if (const auto *c = std::get_if<FrameClassifier>(&source)) c->Validate();
}

Matrix SpliceFrames(const Matrix &frames, int context) {
  const Eigen::Index rows = frames.rows(), dim = frames.cols();
  Matrix out(rows, (2 * context + 1) * dim);
  for (Eigen::Index t = 0; t < rows; ++t)
    for (int k = -context; k <= context; ++k) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + k, 0, rows - 1);
      out.block(t, (k + context) * dim, 1, dim) = frames.row(src);
    }
  return out;
}

Vector FbankLogEnergy(const Matrix &fbank) {
  Vector e(fbank.rows());
  for (Eigen::Index t = 0; t < fbank.rows(); ++t) {
    const double m = fbank.row(t).maxCoeff();
    e(t) = m + std::log((fbank.row(t).array() - m).exp().sum());
  }
  return e;
}

Matrix SadLogLikelihoods(const FeatureMatrix &fbank, const SadModel &model) {
  model.Validate();
  const int num_frames = fbank.NumFrames();
  if (num_frames < 1) throw DataError("SAD input has no frames");
  Matrix post(num_frames, 2);
  if (const auto *energy = std::get_if<EnergySource>(&model.source)) {
    const Vector e = FbankLogEnergy(fbank.frames);
    double threshold = energy->offset;
    if (energy->reference == EnergyReference::kMean) threshold += e.mean();
    if (energy->reference == EnergyReference::kMax) threshold += e.maxCoeff();
    if (energy->reference == EnergyReference::kPeak) {
      std::vector<double> sorted(e.data(), e.data() + e.size());
      const auto k = static_cast<std::ptrdiff_t>(0.99 * static_cast<double>(sorted.size() - 1));
      std::nth_element(sorted.begin(), sorted.begin() + k, sorted.end());
      threshold += sorted[k];
    }
    for (int t = 0; t < num_frames; ++t) {
      const double p = 1.0 / (1.0 + std::exp(-energy->scale * (e(t) - threshold)));
      post(t, kSpeech) = p;
      post(t, kNonSpeech) = 1.0 - p;
    }
  } else {
    const auto &clf = std::get<FrameClassifier>(model.source);
    if (fbank.Dim() != clf.input_dim)
      throw ConfigError("SAD classifier expects " + std::to_string(clf.input_dim) +
                        "-dim filterbank input, got " + std::to_string(fbank.Dim()));
    post = clf.Forward(SpliceFrames(fbank.frames, clf.context));
  }
  constexpr double kEps = 1e-10;
  Matrix ll(num_frames, 2);
  const double log_prior_speech = std::log(model.prior_speech);
  const double log_prior_non = std::log(1.0 - model.prior_speech);
  for (int t = 0; t < num_frames; ++t) {
    ll(t, kSpeech) = std::log(std::clamp(post(t, kSpeech), kEps, 1.0 - kEps)) - log_prior_speech;
    ll(t, kNonSpeech) = std::log(std::clamp(post(t, kNonSpeech), kEps, 1.0 - kEps)) - log_prior_non;
  }
  return ll;
}

std::vector<bool> ViterbiDecode(const Matrix &loglikes,
                                const Eigen::Matrix2d &transitions) {
  if (loglikes.cols() != 2) throw DataError("Viterbi expects a T x 2 matrix");
  const Eigen::Index num_frames = loglikes.rows();
  if (num_frames < 1) throw DataError("Viterbi needs at least one frame");
  const Eigen::Matrix2d log_trans = transitions.array().log();
  std::vector<std::array<std::uint8_t, 2>> back(num_frames);
  double delta[2];
  for (int j = 0; j < 2; ++j) delta[j] = std::log(0.5) + loglikes(0, j);
  for (Eigen::Index t = 1; t < num_frames; ++t) {
    double next[2];
    for (int j = 0; j < 2; ++j) {
      const double from_non = delta[kNonSpeech] + log_trans(kNonSpeech, j);
      const double from_speech = delta[kSpeech] + log_trans(kSpeech, j);
      const bool speech_wins = from_speech > from_non;
      back[t][j] = speech_wins ? kSpeech : kNonSpeech;
      next[j] = (speech_wins ? from_speech : from_non) + loglikes(t, j);
    }
    delta[0] = next[0];
    delta[1] = next[1];
  }
  std::vector<bool> path(num_frames);
  int state = delta[kSpeech] > delta[kNonSpeech] ? kSpeech : kNonSpeech;
  for (Eigen::Index t = num_frames - 1; t >= 0; --t) {
    path[t] = state == kSpeech;
    if (t > 0) state = back[t][state];
  }
  return path;
}

double PathLogProb(const Matrix &loglikes, const Eigen::Matrix2d &transitions,
                   const std::vector<bool> &path) {
  double lp = std::log(0.5);
  for (Eigen::Index t = 0; t < loglikes.rows(); ++t) {
    const int s = path[t] ? kSpeech : kNonSpeech;
    if (t > 0) lp += std::log(transitions(path[t - 1] ? kSpeech : kNonSpeech, s));
    lp += loglikes(t, s);
  }
  return lp;
}

std::vector<bool> DetectSpeech(const FeatureMatrix &fbank, const SadModel &model) {
  return ViterbiDecode(SadLogLikelihoods(fbank, model), model.transitions);
}

FrameClassifier TrainFrameClassifier(const std::vector<FeatureMatrix> &fbanks,
                                     const std::vector<std::vector<bool>> &labels,
                                     const ClassifierTrainOptions &opts) {
  if (fbanks.empty() || fbanks.size() != labels.size())
    throw DataError("classifier training needs one label vector per utterance");
  FrameClassifier clf;
  clf.context = opts.context;
  clf.input_dim = fbanks[0].Dim();
  Matrix inputs;
  std::vector<int> targets;
  {
    std::vector<Matrix> parts;
    Eigen::Index total = 0;
    for (std::size_t u = 0; u < fbanks.size(); ++u) {
      if (fbanks[u].Dim() != clf.input_dim) throw DataError("inconsistent filterbank dimension");
      if (static_cast<int>(labels[u].size()) != fbanks[u].NumFrames())
        throw DataError("label length != frame count");
      parts.push_back(SpliceFrames(fbanks[u].frames, clf.context));
      total += parts.back().rows();
      for (bool b : labels[u]) targets.push_back(b ? kSpeech : kNonSpeech);
    }
    inputs.resize(total, clf.SplicedDim());
    Eigen::Index r = 0;
    for (const auto &p : parts) {
      inputs.middleRows(r, p.rows()) = p;
      r += p.rows();
    }
  }
  std::mt19937_64 rng(opts.seed);
  std::vector<int> sizes;
  sizes.push_back(clf.SplicedDim());
  for (int h : opts.hidden) sizes.push_back(h);
  sizes.push_back(2);
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / sizes[i]));
    DenseLayer l;
    l.weights.resize(sizes[i + 1], sizes[i]);
    for (Eigen::Index k = 0; k < l.weights.size(); ++k) l.weights.data()[k] = g(rng);
    l.bias = Vector::Zero(sizes[i + 1]);
    clf.layers.push_back(std::move(l));
  }
  const Eigen::Index n = inputs.rows();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t num_layers = clf.layers.size();
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += opts.batch_size) {
      const Eigen::Index bs = std::min<Eigen::Index>(opts.batch_size, n - start);
      Matrix x(clf.SplicedDim(), bs);
      for (Eigen::Index b = 0; b < bs; ++b) x.col(b) = inputs.row(order[start + b]).transpose();
      std::vector<Matrix> acts{x};
      for (std::size_t i = 0; i < num_layers; ++i) {
        Matrix z = (clf.layers[i].weights * acts.back()).colwise() + clf.layers[i].bias;
        if (i + 1 < num_layers) z = z.cwiseMax(0.0);
        acts.push_back(std::move(z));
      }
      Matrix grad = acts.back();
      for (Eigen::Index b = 0; b < bs; ++b) {
        const double m = grad.col(b).maxCoeff();
        Vector e = (grad.col(b).array() - m).exp();
        grad.col(b) = e / e.sum();
        grad(targets[order[start + b]], b) -= 1.0;
      }
      grad /= static_cast<double>(bs);
      for (std::size_t i = num_layers; i-- > 0;) {
        Matrix prev_grad;
        if (i > 0) {
          prev_grad = clf.layers[i].weights.transpose() * grad;
          prev_grad = prev_grad.cwiseProduct((acts[i].array() > 0.0).cast<double>().matrix());
        }
        clf.layers[i].weights -= opts.learning_rate * grad * acts[i].transpose();
        clf.layers[i].bias -= opts.learning_rate * grad.rowwise().sum();
        if (i > 0) grad = std::move(prev_grad);
      }
    }
  }
  return clf;
}

void WriteSadModel(const std::filesystem::path &path, const SadModel &model) {
  model.Validate();
  BinaryWriter w(path);
  w.Magic("IVSD");
  w.U32(1);
  if (const auto *e = std::get_if<EnergySource>(&model.source)) {
    w.U8(0);
    w.U8(static_cast<std::uint8_t>(e->reference));
    w.F64(e->offset);
    w.F64(e->scale);
  } else {
    const auto &c = std::get<FrameClassifier>(model.source);
    w.U8(1);
    w.U32(static_cast<std::uint32_t>(c.context));
    w.U32(static_cast<std::uint32_t>(c.input_dim));
    w.U32(static_cast<std::uint32_t>(c.layers.size()));
    for (const auto &l : c.layers) {
      w.U32(static_cast<std::uint32_t>(l.weights.rows()));
      w.U32(static_cast<std::uint32_t>(l.weights.cols()));
      w.MatrixData(l.weights);
      w.VectorData(l.bias);
    }
  }
  w.F64(model.prior_speech);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) w.F64(model.transitions(i, j));
  w.Commit();
}

SadModel ReadSadModel(const std::filesystem::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVSD");
  if (r.U32() != 1) throw DataError("unsupported IVSD version in " + path.string());
  SadModel model;
  const std::uint8_t kind = r.U8();
  if (kind == 0) {
    EnergySource e;
    const std::uint8_t ref = r.U8();
    if (ref > 3) throw DataError("bad energy reference in " + path.string());
    e.reference = static_cast<EnergyReference>(ref);
    e.offset = r.F64();
    e.scale = r.F64();
    model.source = e;
  } else if (kind == 1) {
    FrameClassifier c;
    c.context = static_cast<int>(r.U32());
    c.input_dim = static_cast<int>(r.U32());
    const std::uint32_t num_layers = r.U32();
    for (std::uint32_t i = 0; i < num_layers; ++i) {
      DenseLayer l;
      const std::uint32_t rows = r.U32(), cols = r.U32();
      l.weights = r.MatrixData(rows, cols);
      l.bias = r.VectorData(rows);
      c.layers.push_back(std::move(l));
    }
    model.source = std::move(c);
  } else {
    throw DataError("unknown SAD source kind in " + path.string());
  }
  model.prior_speech = r.F64();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) model.transitions(i, j) = r.F64();
  model.Validate();
  return model;
}

}  // namespace ivpipe
