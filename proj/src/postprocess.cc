// src/postprocess.cc

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

#include "ivpipe/postprocess.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "ivpipe/io.h"

namespace ivpipe {

namespace {

void MeanStd(std::span<const double> x, double *mu, double *sigma) {
  double s = 0.0;
  for (double v : x) s += v;
  *mu = s / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - *mu) * (v - *mu);
  *sigma = std::max(std::sqrt(ss / static_cast<double>(x.size())), 1e-12);
}

using TrialPair = std::pair<std::string, std::string>;

// log(1 + exp(x)) without overflow.
double Softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double Sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void CheckBinary(std::span<const double> scores, const std::vector<bool> &labels, int *nt, int *nn) {
  if (scores.size() != labels.size())
    throw DataError("score and label counts differ");
  *nt = static_cast<int>(std::count(labels.begin(), labels.end(), true));
  *nn = static_cast<int>(labels.size()) - *nt;
  if (*nt == 0 || *nn == 0) throw DataError("both target and nontarget trials are required");
  for (double s : scores)
    if (!std::isfinite(s)) throw DataError("non-finite score");
}

double Logit(double p) { return std::log(p / (1.0 - p)); }

void CheckPrior(double p_tar) {
  if (!(p_tar > 0.0 && p_tar < 1.0)) throw ConfigError("p_tar must lie in (0, 1)");
}

}  // namespace

CohortStats ComputeCohortStats(std::span<const double> enrol_cohort,
                               std::span<const double> test_cohort) {
  if (enrol_cohort.size() < 2 || test_cohort.size() < 2)
    throw DataError("s-norm cohort needs at least 2 scores per side");
  CohortStats c;
  MeanStd(enrol_cohort, &c.mu1, &c.sigma1);
  MeanStd(test_cohort, &c.mu2, &c.sigma2);
  c.cohort_size = static_cast<int>(std::min(enrol_cohort.size(), test_cohort.size()));
  return c;
}

SnormMode ParseSnormMode(const std::string &name) {
  if (name == "sum") return SnormMode::kSum;
  if (name == "paper-minus") return SnormMode::kPaperMinus;
  throw ConfigError("unknown s-norm mode: " + name);
}

std::string SnormModeName(SnormMode m) { return m == SnormMode::kSum ? "sum" : "paper-minus"; }

double Snorm(double raw, const CohortStats &stats, SnormMode mode) {
  if (stats.cohort_size < 2) throw DataError("s-norm cohort needs at least 2 scores");
  const double z1 = (raw - stats.mu1) / std::max(stats.sigma1, 1e-12);
  const double z2 = (raw - stats.mu2) / std::max(stats.sigma2, 1e-12);
  return mode == SnormMode::kSum ? 0.5 * (z1 + z2) : z1 - z2;
}

std::vector<double> CohortScores(const ScoringKernel &kernel, const Vector &w,
                                 const Matrix &cohort) {
  std::vector<double> out(cohort.rows());
  for (Eigen::Index i = 0; i < cohort.rows(); ++i)
    out[i] = ScoreTrial(w, cohort.row(i).transpose(), kernel);
  return out;
}

std::vector<TrialScore> SnormTrials(const ScoringKernel &kernel,
                                    std::span<const TrialScore> raw,
                                    const std::map<std::string, Embedding> &models,
                                    const std::map<std::string, Embedding> &tests,
                                    const Matrix &cohort, SnormMode mode) {
  if (cohort.rows() < 2) throw DataError("s-norm cohort needs at least 2 embeddings");
  std::map<std::string, std::pair<double, double>> enrol_stats, test_stats;
  auto stats_for = [&](const std::map<std::string, Embedding> &pool, const std::string &id,
                       std::map<std::string, std::pair<double, double>> *cache) {
    auto it = cache->find(id);
    if (it != cache->end()) return it->second;
    auto e = pool.find(id);
    if (e == pool.end()) throw DataError("s-norm: unknown embedding '" + id + "'");
    const auto scores = CohortScores(kernel, e->second.w, cohort);
    std::pair<double, double> ms;
    MeanStd(scores, &ms.first, &ms.second);
    return cache->emplace(id, ms).first->second;
  };
  std::vector<TrialScore> out;
  out.reserve(raw.size());
  for (const auto &t : raw) {
    const auto [mu1, s1] = stats_for(models, t.model_id, &enrol_stats);
    const auto [mu2, s2] = stats_for(tests, t.test_id, &test_stats);
    CohortStats c{mu1, s1, mu2, s2, static_cast<int>(cohort.rows())};
    out.push_back({t.model_id, t.test_id, Snorm(t.score, c, mode)});
  }
  return out;
}

double ApplyQmf(double score, double test_duration, double coeff) {
  if (!(test_duration > 0.0))
    throw DataError("QMF needs a positive test duration, got " + std::to_string(test_duration));
  return score + coeff * std::sqrt(test_duration);
}

std::vector<TrialScore> Fuse(std::span<const TrialScore> a, std::span<const TrialScore> b) {
  std::map<TrialPair, double> other;
  for (const auto &s : b)
    if (!other.emplace(TrialPair{s.model_id, s.test_id}, s.score).second)
      throw DataError("fuse: duplicate trial " + s.model_id + " " + s.test_id);
  if (a.size() != other.size())
    throw DataError("fuse: inputs cover " + std::to_string(a.size()) + " and " +
                    std::to_string(other.size()) + " trials");
  std::vector<TrialScore> out;
  out.reserve(a.size());
  for (const auto &s : a) {
    auto it = other.find({s.model_id, s.test_id});
    if (it == other.end())
      throw DataError("fuse: trial " + s.model_id + " " + s.test_id + " missing from second input");
    out.push_back({s.model_id, s.test_id, s.score + it->second});
  }
  return out;
}

double CalibrationObjective(std::span<const double> scores, const std::vector<bool> &labels,
                            double p_tar, double a, double b) {
  int nt, nn;
  CheckBinary(scores, labels, &nt, &nn);
  CheckPrior(p_tar);
  const double offset = Logit(p_tar);
  const double wt = p_tar / nt, wn = (1.0 - p_tar) / nn;
  double j = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double x = a * scores[i] + b + offset;
    j += labels[i] ? wt * Softplus(-x) : wn * Softplus(x);
  }
  return j;
}

CalibrationMap TrainCalibration(std::span<const double> scores, const std::vector<bool> &labels,
                                double p_tar) {
  int nt, nn;
  CheckBinary(scores, labels, &nt, &nn);
  CheckPrior(p_tar);
  constexpr double kMaxScale = 1e3;
  const double offset = Logit(p_tar);
  const double wt = p_tar / nt, wn = (1.0 - p_tar) / nn;

  double min_tar = std::numeric_limits<double>::infinity();
  double max_non = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) min_tar = std::min(min_tar, scores[i]);
    else max_non = std::max(max_non, scores[i]);
  }
  const bool separable = min_tar > max_non;

  // Gradient and Hessian of the objective in (a, b).
  auto derivs = [&](double a, double b, Eigen::Vector2d *g, Eigen::Matrix2d *h) {
    g->setZero();
    h->setZero();
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double s = scores[i];
      const double x = a * s + b + offset;
      const double sig = Sigmoid(x);
      const double r = labels[i] ? wt * (sig - 1.0) : wn * sig;
      const double c = (labels[i] ? wt : wn) * sig * (1.0 - sig);
      (*g)(0) += r * s;
      (*g)(1) += r;
      (*h)(0, 0) += c * s * s;
      (*h)(0, 1) += c * s;
      (*h)(1, 1) += c;
    }
    (*h)(1, 0) = (*h)(0, 1);
  };

  double mean = 0.0, var = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  for (double s : scores) var += (s - mean) * (s - mean);
  var /= static_cast<double>(scores.size());
  double a = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  double b = -a * mean;
  bool fix_a = false;
  if (separable) {
    Warn("calibration scores are perfectly separable; scale capped at 1e3");
    a = kMaxScale;
    fix_a = true;
  }
  // Damped Newton; with fix_a only b moves. Returns false if the gradient
  // did not reach 1e-8.
  auto solve = [&]() {
    double j = CalibrationObjective(scores, labels, p_tar, a, b);
    for (int iter = 0; iter < 500; ++iter) {
      Eigen::Vector2d g;
      Eigen::Matrix2d h;
      derivs(a, b, &g, &h);
      if (fix_a) g(0) = 0.0;
      if (g.norm() < 1e-8) return true;
      Eigen::Vector2d step;
      if (fix_a) {
        step << 0.0, -g(1) / std::max(h(1, 1), 1e-300);
      } else {
        const double ridge = 1e-12 * std::max(h.trace(), 1e-300);
        step = -(h + ridge * Eigen::Matrix2d::Identity()).ldlt().solve(g);
      }
      double t = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        double na = a + t * step(0), nb = b + t * step(1);
        if (na > kMaxScale) na = kMaxScale;
        const double nj = CalibrationObjective(scores, labels, p_tar, na, nb);
        if (nj <= j) {
          moved = nj < j || (na != a || nb != b);
          a = na;
          b = nb;
          j = nj;
          break;
        }
      }
      if (!fix_a && a >= kMaxScale) {
        Warn("calibration scale reached the 1e3 cap");
        fix_a = true;
      }
      if (!moved) break;
    }
    Eigen::Vector2d g;
    Eigen::Matrix2d h;
    derivs(a, b, &g, &h);
    if (fix_a) g(0) = 0.0;
    return g.norm() < 1e-8;
  };
  bool converged = solve();
  if (!(a > 0.0)) {
    // Scores rank against the labels (or not at all). The best
    // non-decreasing map is then the constant one; fit b alone.
    Warn("calibration slope would be non-positive; scores carry no ranking information, "
         "using a = 0");
    a = 0.0;
    fix_a = true;
    converged = solve();
  }
  if (!converged) {
    Eigen::Vector2d g;
    Eigen::Matrix2d h;
    derivs(a, b, &g, &h);
    if (fix_a) g(0) = 0.0;
    Warn("calibration stopped with gradient norm " + std::to_string(g.norm()));
  }
  return {a, b, p_tar};
}

DetMetrics ComputeMetrics(std::span<const double> scores, const std::vector<bool> &labels,
                          double p_tar, double c_miss, double c_fa) {
  int nt, nn;
  CheckBinary(scores, labels, &nt, &nn);
  CheckPrior(p_tar);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return scores[x] < scores[y];
  });

  DetMetrics m;
  m.p_tar = p_tar;
  m.num_target = nt;
  m.num_nontarget = nn;
  const double wmiss = c_miss * p_tar, wfa = c_fa * (1.0 - p_tar);
  // Position k accepts every score >= the k-th distinct value; the final
  // position accepts nothing.
  int tar_below = 0, non_below = 0;
  m.min_cdet = std::numeric_limits<double>::infinity();
  std::size_t i = 0;
  while (true) {
    const double thr = i < order.size() ? scores[order[i]] : std::numeric_limits<double>::infinity();
    const double pm = static_cast<double>(tar_below) / nt;
    const double pf = static_cast<double>(nn - non_below) / nn;
    m.det.push_back({pm, pf});
    const double cdet = wmiss * pm + wfa * pf;
    if (cdet < m.min_cdet) {
      m.min_cdet = cdet;
      m.threshold_min = thr;
    }
    if (i >= order.size()) break;
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      if (labels[order[i]]) ++tar_below;
      else ++non_below;
      ++i;
    }
  }
  for (std::size_t k = 1; k < m.det.size(); ++k) {
    const double d0 = m.det[k - 1].p_miss - m.det[k - 1].p_fa;
    const double d1 = m.det[k].p_miss - m.det[k].p_fa;
    if (d1 >= 0.0) {
      const double t = d0 / (d0 - d1);
      m.eer = m.det[k - 1].p_miss + t * (m.det[k].p_miss - m.det[k - 1].p_miss);
      break;
    }
  }
  const double bayes = std::log(wfa / wmiss);
  int miss = 0, fa = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    const bool accept = scores[k] >= bayes;
    if (labels[k] && !accept) ++miss;
    if (!labels[k] && accept) ++fa;
  }
  m.act_cdet = wmiss * (static_cast<double>(miss) / nt) + wfa * (static_cast<double>(fa) / nn);
  const double norm = std::min(wmiss, wfa);
  m.min_cdet_norm = m.min_cdet / norm;
  m.act_cdet_norm = m.act_cdet / norm;
  return m;
}

std::string FormatMetrics(const DetMetrics &m) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "targets " << m.num_target << "\n"
     << "nontargets " << m.num_nontarget << "\n"
     << "p_tar " << m.p_tar << "\n"
     << "eer " << m.eer << "\n"
     << "min_cdet " << m.min_cdet << "\n"
     << "act_cdet " << m.act_cdet << "\n"
     << "min_cdet_norm " << m.min_cdet_norm << "\n"
     << "act_cdet_norm " << m.act_cdet_norm << "\n"
     << "threshold_min " << m.threshold_min << "\n";
  return os.str();
}

void WriteDetPoints(const std::filesystem::path &path, const DetMetrics &m) {
  std::ostringstream os;
  os << std::setprecision(10) << "# p_miss p_fa\n";
  for (const auto &p : m.det) os << p.p_miss << ' ' << p.p_fa << '\n';
  WriteTextAtomic(path, os.str());
}

void JoinWithKey(std::span<const TrialScore> scores, std::span<const TrialKey> key,
                 std::vector<double> *values, std::vector<bool> *labels) {
  std::map<TrialPair, bool> lookup;
  for (const auto &k : key) lookup[{k.model_id, k.test_id}] = k.target;
  values->clear();
  labels->clear();
  for (const auto &s : scores) {
    auto it = lookup.find({s.model_id, s.test_id});
    if (it == lookup.end())
      throw DataError("scored trial " + s.model_id + " " + s.test_id + " is not in the key");
    values->push_back(s.score);
    labels->push_back(it->second);
  }
}

void WriteCalibration(const std::filesystem::path &path, const CalibrationMap &map) {
  std::ostringstream os;
  os << std::setprecision(17) << "IVCA\na " << map.a << "\nb " << map.b << "\np_tar "
     << map.p_tar << "\n";
  WriteTextAtomic(path, os.str());
}

CalibrationMap ReadCalibration(const std::filesystem::path &path) {
  std::istringstream is(ReadText(path));
  std::string magic;
  if (!(is >> magic) || magic != "IVCA")
    throw DataError(path.string() + ": not an IVCA calibration file");
  CalibrationMap map;
  std::string key;
  double value;
  int seen = 0;
  while (is >> key >> value) {
    if (key == "a") map.a = value, seen |= 1;
    else if (key == "b") map.b = value, seen |= 2;
    else if (key == "p_tar") map.p_tar = value, seen |= 4;
    else throw DataError(path.string() + ": unknown field '" + key + "'");
  }
  if (seen != 7) throw DataError(path.string() + ": incomplete calibration file");
  if (!(map.a >= 0.0)) throw DataError(path.string() + ": calibration scale must be non-negative");
  return map;
}

}  // namespace ivpipe
