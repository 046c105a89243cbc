// include/ivpipe/postprocess.h

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

#ifndef IVPIPE_POSTPROCESS_H_
#define IVPIPE_POSTPROCESS_H_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/plda.h"

namespace ivpipe {

struct CohortStats {
  double mu1 = 0.0, sigma1 = 1.0;  // enrolment side
  double mu2 = 0.0, sigma2 = 1.0;  // test side
  int cohort_size = 0;
};

// Population mean and standard deviation; sigma floored at 1e-12. Needs at
// least two cohort scores on each side.
CohortStats ComputeCohortStats(std::span<const double> enrol_cohort,
                               std::span<const double> test_cohort);

// kSum:        0.5 * [(s - mu1)/sigma1 + (s - mu2)/sigma2]
// kPaperMinus: (s - mu1)/sigma1 - (s - mu2)/sigma2
enum class SnormMode { kSum, kPaperMinus };

SnormMode ParseSnormMode(const std::string &name);
std::string SnormModeName(SnormMode m);

double Snorm(double raw, const CohortStats &stats, SnormMode mode = SnormMode::kSum);

// Scores of one embedding against every cohort row.
std::vector<double> CohortScores(const ScoringKernel &kernel, const Vector &w,
                                 const Matrix &cohort);

// Normalizes every trial. `cohort` rows are cohort embeddings.
std::vector<TrialScore> SnormTrials(const ScoringKernel &kernel,
                                    std::span<const TrialScore> raw,
                                    const std::map<std::string, Embedding> &models,
                                    const std::map<std::string, Embedding> &tests,
                                    const Matrix &cohort, SnormMode mode);

// score + coeff * sqrt(t); t must be positive.
double ApplyQmf(double score, double test_duration, double coeff = -0.2);

// Per-trial sum over identical trial coverage, in the order of `a`.
std::vector<TrialScore> Fuse(std::span<const TrialScore> a, std::span<const TrialScore> b);

struct CalibrationMap {
  double a = 1.0;
  double b = 0.0;
  double p_tar = 1e-4;

  double Apply(double s) const { return a * s + b; }
};

// Prior-weighted logistic regression of llr = a*s + b (targets and
// nontargets weighted p_tar and 1 - p_tar, each normalized by its count),
// solved by damped Newton iteration to a gradient norm below 1e-8. For
// separable scores `a` is capped at 1e3 with a warning. The map is kept
// non-decreasing: if the optimum has a <= 0, a is set to 0 (with a warning)
// and only b is fitted.
CalibrationMap TrainCalibration(std::span<const double> scores, const std::vector<bool> &labels,
                                double p_tar = 1e-4);

// Objective minimized by TrainCalibration, in nats per unit prior weight.
double CalibrationObjective(std::span<const double> scores, const std::vector<bool> &labels,
                            double p_tar, double a, double b);

struct DetPoint {
  double p_miss;
  double p_fa;
};

// Decisions accept a trial when score >= threshold.
//   Cdet(t) = c_miss * p_tar * Pmiss(t) + c_fa * (1 - p_tar) * Pfa(t)
// act_cdet uses t = log(c_fa (1 - p_tar) / (c_miss p_tar)), the Bayes
// threshold for llr scores. The *_norm values divide by
// min(c_miss p_tar, c_fa (1 - p_tar)).
struct DetMetrics {
  double eer = 0.0;
  double min_cdet = 0.0;
  double act_cdet = 0.0;
  double min_cdet_norm = 0.0;
  double act_cdet_norm = 0.0;
  double threshold_min = 0.0;
  double p_tar = 1e-4;
  int num_target = 0;
  int num_nontarget = 0;
  std::vector<DetPoint> det;  // one per distinct threshold, ascending threshold
};

DetMetrics ComputeMetrics(std::span<const double> scores, const std::vector<bool> &labels,
                          double p_tar = 1e-4, double c_miss = 1.0, double c_fa = 1.0);

std::string FormatMetrics(const DetMetrics &m);
void WriteDetPoints(const std::filesystem::path &path, const DetMetrics &m);

// Joins scores with a key; every scored trial must be keyed.
void JoinWithKey(std::span<const TrialScore> scores, std::span<const TrialKey> key,
                 std::vector<double> *values, std::vector<bool> *labels);

// "IVCA" text file: lines "IVCA", "a <v>", "b <v>", "p_tar <v>".
void WriteCalibration(const std::filesystem::path &path, const CalibrationMap &map);
CalibrationMap ReadCalibration(const std::filesystem::path &path);

}  // namespace ivpipe

#endif  // IVPIPE_POSTPROCESS_H_
