// include/ivpipe/pipeline.h

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

#ifndef IVPIPE_PIPELINE_H_
#define IVPIPE_PIPELINE_H_

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ivpipe/config.h"
#include "ivpipe/gmm.h"
#include "ivpipe/io.h"
#include "ivpipe/ivector.h"
#include "ivpipe/plda.h"
#include "ivpipe/postprocess.h"

namespace ivpipe {

// A generated (or external) corpus directory: train.list, dev.list,
// eval.list, eval_enrol.txt and eval.key. Train utterances carry speaker and
// language labels; dev labels are ignored (unlabelled in-domain set).
struct Corpus {
  std::filesystem::path dir;
  std::vector<ManifestEntry> train, dev, eval;
  std::map<std::string, std::vector<std::string>> enrol;  // model -> segment ids
  std::vector<TrialKey> key;
  std::uint64_t fingerprint = 0;  // manifests, enrolment, key and audio bytes

  static Corpus Load(const std::filesystem::path &dir);
};

struct StageRecord {
  std::string chain;
  std::string stage;
  std::string hash;
  std::filesystem::path dir;
  bool cache_hit = false;
};

struct SystemResult {
  std::string name;  // chain name or "fusion"
  DetMetrics metrics;
  CalibrationMap calibration;  // fitted on all trials, for reference
};

struct RunResult {
  std::vector<StageRecord> stages;
  std::vector<SystemResult> systems;
  std::filesystem::path results_dir;

  const SystemResult &System(const std::string &name) const;
  const StageRecord *Stage(const std::string &chain, const std::string &stage) const;
};

// Runs features -> SAD -> UBM -> scaled statistics -> TV -> i-vectors ->
// transform chain -> PLDA (out, in) -> adaptation -> enrolment and scoring
// -> s-norm -> QMF -> calibration -> metrics for every configured chain,
// then fuses the chains. Each stage writes to
// <out>/<chain>/<stage>-<hash> and is skipped when that directory is
// complete. Errors are rethrown with the stage name prepended.
RunResult RunPipeline(const PipelineConfig &config, const std::filesystem::path &corpus_dir,
                      const std::filesystem::path &out_dir);

std::string FormatRunSummary(const RunResult &r);

// Features of one utterance for a chain: cepstra with ST-CMVN and the SAD
// mask attached (not yet applied).
FeatureMatrix ComputeFeatures(const PipelineConfig &config, const std::string &chain,
                              const AudioSegment &audio, const SadModel &sad);

struct TimingRow {
  std::string segment;  // enrolment | test
  std::string stage;    // features | SAD | i-vectors
  double seconds_audio = 0.0;
  double user = 0.0, sys = 0.0, real = 0.0;  // seconds
  long peak_rss_kb = 0;
};

// Times cepstral features, SAD and i-vector extraction (statistics plus
// posterior) for one enrolment and one test segment, in-process.
std::vector<TimingRow> TimingReport(const PipelineConfig &config, const std::string &chain,
                                    const GmmModel &ubm, const TvModel &tv,
                                    const AudioSegment &enrol, const AudioSegment &test);
std::string FormatTiming(const std::vector<TimingRow> &rows);

}  // namespace ivpipe

#endif  // IVPIPE_PIPELINE_H_
