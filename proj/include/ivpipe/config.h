// include/ivpipe/config.h

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

#ifndef IVPIPE_CONFIG_H_
#define IVPIPE_CONFIG_H_

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/frontend.h"
#include "ivpipe/gmm.h"
#include "ivpipe/ivector.h"
#include "ivpipe/plda.h"
#include "ivpipe/postprocess.h"
#include "ivpipe/sad.h"

namespace ivpipe {

// One "key = value" line inside a "[section]" block.
struct IniEntry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

// '#' starts a comment; values may be double-quoted.
std::vector<IniEntry> ParseIni(const std::string &text, const std::string &source);

// Typed binding of a config field, used for parsing, dumping and hashing.
struct ConfigField {
  std::string section;
  std::string key;
  std::variant<int *, double *, bool *, std::string *, unsigned *> target;
};

std::string FormatFieldValue(const ConfigField &f);
void SetFieldValue(const ConfigField &f, const std::string &value, const std::string &where);

// Sets fields from ini text; unknown sections or keys are configuration
// errors.
void ApplyIni(const std::vector<ConfigField> &fields, const std::vector<IniEntry> &entries);
// Canonical "[section]\nkey = value" text, optionally one section only.
std::string DumpFields(const std::vector<ConfigField> &fields, const std::string &section = "");

struct FrontendConfig {
  double sample_rate = 8000.0;
  double frame_shift = 0.010;
  std::string window = "hamming";
  double preemph_coeff = 0.97;
  double mfcc_frame_length = 0.020;
  int mfcc_num_mel_bins = 23;
  int mfcc_num_ceps = 20;
  int mfcc_delta_order = 0;
  double plp_frame_length = 0.025;
  int plp_num_mel_bins = 23;
  int plp_num_ceps = 13;
  int plp_lpc_order = 12;
  int plp_delta_order = 0;
  double cmvn_window = 3.0;
  double cmvn_var_floor = 1e-10;
};

struct SadConfig {
  std::string source = "energy";     // energy | classifier
  std::string model_file;            // IVSD file for the classifier source
  std::string energy_reference = "peak";  // absolute | mean | max | peak
  double energy_offset = -5.0;
  double energy_scale = 2.0;
  double prior_speech = 0.5;
  double self_loop = 0.99;
  int fbank_num_mel_bins = 40;
};

struct GmmConfig {
  int num_components = 64;
  int num_iters = 8;
  int kmeans_iters = 8;
  unsigned seed = 11;
  int max_frames = 150000;  // frames sampled for UBM training; 0 = all
  double stats_scale = 0.33;
};

struct IvectorConfig {
  int rank = 60;
  int num_iters = 5;
  unsigned seed = 13;
};

struct TransformsConfig {
  bool use_lda = false;  // LDA in place of NDA
  int nda_dim = 40;
  int nda_k = 10;
  double nda_alpha = 2.0;
  bool shortcomp = true;
  int shortcomp_dim = 39;
  double excerpt_seconds = 10.0;
  bool wccn_first = false;
  bool lnlda = true;
  int lnlda_dim = 30;
  unsigned seed = 17;
};

struct PldaConfig {
  int num_factors = 10;
  int num_iters = 10;
  unsigned seed = 19;
  bool adapt = true;
  double alpha = 0.10;
  bool interpolate_mean = false;
  // Start of the in-domain EM: "out" (the out-of-domain model) or "pca".
  std::string in_domain_init = "out";
};

struct PostprocessConfig {
  bool snorm = true;
  std::string snorm_mode = "sum";
  bool qmf = true;
  double qmf_coeff = -0.2;
  double p_tar = 1e-4;
  double c_miss = 1.0;
  double c_fa = 1.0;
  int calibration_folds = 2;
};

struct PipelineSection {
  std::string chains = "mfcc,plp";
  std::string models_dir;  // UBM and TV used by the timing report
};

struct PipelineConfig {
  FrontendConfig frontend;
  SadConfig sad;
  GmmConfig gmm;
  IvectorConfig ivector;
  TransformsConfig transforms;
  PldaConfig plda;
  PostprocessConfig postprocess;
  PipelineSection pipeline;

  std::vector<ConfigField> Fields();
  std::vector<ConfigField> Fields() const {
    return const_cast<PipelineConfig *>(this)->Fields();
  }
  // Dimension ladder and value-range checks.
  void Validate() const;
  std::vector<std::string> Chains() const;

  // Desk-scale defaults or the full-scale ladder.
  static PipelineConfig Preset(const std::string &name);
  static PipelineConfig Load(const std::filesystem::path &path);
  std::string Dump() const { return DumpFields(Fields()); }

  // Stage option builders.
  MfccOptions Mfcc() const;
  PlpOptions Plp() const;
  FbankOptions Fbank() const;
  CmvnOptions Cmvn() const;
  SadModel Sad() const;
  UbmTrainOptions Ubm() const;
  TvTrainOptions Tv() const;
  PldaTrainOptions Plda() const;
  // Dimension after the transform chain.
  int EmbeddingDim() const;
};

std::vector<std::string> SplitList(const std::string &s, char sep = ',');

}  // namespace ivpipe

#endif  // IVPIPE_CONFIG_H_
