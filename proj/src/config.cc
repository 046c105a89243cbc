// src/config.cc

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

#include "ivpipe/config.h"

#include <algorithm>
#include <sstream>

#include "ivpipe/io.h"

namespace ivpipe {

namespace {

std::string Trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T ParseNumber(const std::string &value, const std::string &where) {
  std::istringstream is(value);
  T v{};
  is >> v;
  if (!is || !is.eof()) throw ConfigError(where + ": bad numeric value '" + value + "'");
  return v;
}

void Require(bool ok, const std::string &msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

std::vector<IniEntry> ParseIni(const std::string &text, const std::string &source) {
  std::vector<IniEntry> out;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    // A '#' inside quotes belongs to the value.
    if (hash != std::string::npos &&
        std::count(line.begin(), line.begin() + hash, '"') % 2 == 0)
      line.erase(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = Trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    IniEntry e{section, Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)), lineno};
    if (e.value.size() >= 2 && e.value.front() == '"' && e.value.back() == '"')
      e.value = e.value.substr(1, e.value.size() - 2);
    if (e.key.empty()) throw ConfigError(where + ": empty key");
    out.push_back(std::move(e));
  }
  return out;
}

std::string FormatFieldValue(const ConfigField &f) {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&](auto *p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) os << (*p ? "true" : "false");
        else if constexpr (std::is_same_v<T, std::string>) os << '"' << *p << '"';
        else os << *p;
      },
      f.target);
  return os.str();
}

void SetFieldValue(const ConfigField &f, const std::string &value, const std::string &where) {
  std::visit(
      [&](auto *p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1") *p = true;
          else if (value == "false" || value == "0") *p = false;
          else throw ConfigError(where + ": bad boolean '" + value + "'");
        } else if constexpr (std::is_same_v<T, std::string>) {
          *p = value;
        } else if constexpr (std::is_same_v<T, unsigned>) {
          const long long v = ParseNumber<long long>(value, where);
          if (v < 0) throw ConfigError(where + ": seed must be non-negative");
          *p = static_cast<unsigned>(v);
        } else {
          *p = ParseNumber<T>(value, where);
        }
      },
      f.target);
}

void ApplyIni(const std::vector<ConfigField> &fields, const std::vector<IniEntry> &entries) {
  for (const auto &e : entries) {
    auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField &f) {
      return f.section == e.section && f.key == e.key;
    });
    const std::string where = "line " + std::to_string(e.line);
    if (it == fields.end())
      throw ConfigError(where + ": unknown key '" + e.key + "' in section [" + e.section + "]");
    SetFieldValue(*it, e.value, where + " (" + e.section + "." + e.key + ")");
  }
}

std::string DumpFields(const std::vector<ConfigField> &fields, const std::string &section) {
  std::ostringstream os;
  std::string current;
  for (const auto &f : fields) {
    if (!section.empty() && f.section != section) continue;
    if (f.section != current) {
      if (!current.empty()) os << '\n';
      os << '[' << f.section << "]\n";
      current = f.section;
    }
    os << f.key << " = " << FormatFieldValue(f) << '\n';
  }
  return os.str();
}

std::vector<ConfigField> PipelineConfig::Fields() {
  auto &fe = frontend;
  auto &tr = transforms;
  auto &pp = postprocess;
  return {
      {"frontend", "sample_rate", &fe.sample_rate},
      {"frontend", "frame_shift", &fe.frame_shift},
      {"frontend", "window", &fe.window},
      {"frontend", "preemph_coeff", &fe.preemph_coeff},
      {"frontend", "mfcc_frame_length", &fe.mfcc_frame_length},
      {"frontend", "mfcc_num_mel_bins", &fe.mfcc_num_mel_bins},
      {"frontend", "mfcc_num_ceps", &fe.mfcc_num_ceps},
      {"frontend", "mfcc_delta_order", &fe.mfcc_delta_order},
      {"frontend", "plp_frame_length", &fe.plp_frame_length},
      {"frontend", "plp_num_mel_bins", &fe.plp_num_mel_bins},
      {"frontend", "plp_num_ceps", &fe.plp_num_ceps},
      {"frontend", "plp_lpc_order", &fe.plp_lpc_order},
      {"frontend", "plp_delta_order", &fe.plp_delta_order},
      {"frontend", "cmvn_window", &fe.cmvn_window},
      {"frontend", "cmvn_var_floor", &fe.cmvn_var_floor},
      {"sad", "source", &sad.source},
      {"sad", "model_file", &sad.model_file},
      {"sad", "energy_reference", &sad.energy_reference},
      {"sad", "energy_offset", &sad.energy_offset},
      {"sad", "energy_scale", &sad.energy_scale},
      {"sad", "prior_speech", &sad.prior_speech},
      {"sad", "self_loop", &sad.self_loop},
      {"sad", "fbank_num_mel_bins", &sad.fbank_num_mel_bins},
      {"gmm", "num_components", &gmm.num_components},
      {"gmm", "num_iters", &gmm.num_iters},
      {"gmm", "kmeans_iters", &gmm.kmeans_iters},
      {"gmm", "seed", &gmm.seed},
      {"gmm", "max_frames", &gmm.max_frames},
      {"gmm", "stats_scale", &gmm.stats_scale},
      {"ivector", "rank", &ivector.rank},
      {"ivector", "num_iters", &ivector.num_iters},
      {"ivector", "seed", &ivector.seed},
      {"transforms", "use_lda", &tr.use_lda},
      {"transforms", "nda_dim", &tr.nda_dim},
      {"transforms", "nda_k", &tr.nda_k},
      {"transforms", "nda_alpha", &tr.nda_alpha},
      {"transforms", "shortcomp", &tr.shortcomp},
      {"transforms", "shortcomp_dim", &tr.shortcomp_dim},
      {"transforms", "excerpt_seconds", &tr.excerpt_seconds},
      {"transforms", "wccn_first", &tr.wccn_first},
      {"transforms", "lnlda", &tr.lnlda},
      {"transforms", "lnlda_dim", &tr.lnlda_dim},
      {"transforms", "seed", &tr.seed},
      {"plda", "num_factors", &plda.num_factors},
      {"plda", "num_iters", &plda.num_iters},
      {"plda", "seed", &plda.seed},
      {"plda", "adapt", &plda.adapt},
      {"plda", "alpha", &plda.alpha},
      {"plda", "interpolate_mean", &plda.interpolate_mean},
      {"plda", "in_domain_init", &plda.in_domain_init},
      {"postprocess", "snorm", &pp.snorm},
      {"postprocess", "snorm_mode", &pp.snorm_mode},
      {"postprocess", "qmf", &pp.qmf},
      {"postprocess", "qmf_coeff", &pp.qmf_coeff},
      {"postprocess", "p_tar", &pp.p_tar},
      {"postprocess", "c_miss", &pp.c_miss},
      {"postprocess", "c_fa", &pp.c_fa},
      {"postprocess", "calibration_folds", &pp.calibration_folds},
      {"pipeline", "chains", &pipeline.chains},
      {"pipeline", "models_dir", &pipeline.models_dir},
  };
}

std::vector<std::string> SplitList(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, sep)) {
    item = Trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> PipelineConfig::Chains() const {
  auto chains = SplitList(pipeline.chains);
  for (const auto &c : chains)
    if (c != "mfcc" && c != "plp") throw ConfigError("unknown chain '" + c + "' (mfcc|plp)");
  if (chains.empty()) throw ConfigError("pipeline.chains is empty");
  return chains;
}

int PipelineConfig::EmbeddingDim() const {
  int dim = transforms.nda_dim;
  if (transforms.shortcomp) dim = transforms.shortcomp_dim;
  if (transforms.lnlda) dim = transforms.lnlda_dim;
  return dim;
}

void PipelineConfig::Validate() const {
  const auto &fe = frontend;
  Require(fe.sample_rate > 0.0, "frontend.sample_rate must be positive");
  Require(fe.frame_shift > 0.0, "frontend.frame_shift must be positive");
  Require(fe.mfcc_frame_length >= fe.frame_shift && fe.plp_frame_length >= fe.frame_shift,
          "frame lengths must be at least the frame shift");
  ParseWindowType(fe.window);
  Require(fe.mfcc_num_ceps >= 1 && fe.mfcc_num_ceps <= fe.mfcc_num_mel_bins,
          "frontend.mfcc_num_ceps must lie in [1, mfcc_num_mel_bins]");
  Require(fe.plp_num_ceps >= 1 && fe.plp_lpc_order >= 1, "PLP orders must be positive");
  Require(fe.mfcc_delta_order >= 0 && fe.mfcc_delta_order <= 2 && fe.plp_delta_order >= 0 &&
              fe.plp_delta_order <= 2,
          "delta orders must lie in [0, 2]");
  Require(fe.cmvn_window > 0.0, "frontend.cmvn_window must be positive");
  Require(sad.source == "energy" || sad.source == "classifier",
          "sad.source must be 'energy' or 'classifier'");
  Require(sad.source != "classifier" || !sad.model_file.empty(),
          "sad.model_file is required for the classifier source");
  Require(sad.self_loop > 0.0 && sad.self_loop < 1.0, "sad.self_loop must lie in (0, 1)");
  Require(sad.prior_speech > 0.0 && sad.prior_speech < 1.0,
          "sad.prior_speech must lie in (0, 1)");
  Require(gmm.num_components >= 1 && gmm.num_iters >= 0, "bad gmm sizes");
  Require(gmm.stats_scale > 0.0 && gmm.stats_scale <= 1.0, "gmm.stats_scale must lie in (0, 1]");
  Require(gmm.max_frames >= 0, "gmm.max_frames must be non-negative");

  const int d_mfcc = fe.mfcc_num_ceps * (1 + fe.mfcc_delta_order);
  const int d_plp = fe.plp_num_ceps * (1 + fe.plp_delta_order);
  for (const auto &c : Chains()) {
    const int d = c == "mfcc" ? d_mfcc : d_plp;
    Require(ivector.rank >= 1 && ivector.rank <= gmm.num_components * d,
            "ivector.rank must lie in [1, M*D] for the " + c + " chain");
  }
  const auto &tr = transforms;
  Require(tr.nda_dim >= 1 && tr.nda_dim <= ivector.rank,
          "dimension ladder: transforms.nda_dim must not exceed ivector.rank");
  int dim = tr.nda_dim;
  if (tr.shortcomp) {
    Require(tr.shortcomp_dim >= 1 && tr.shortcomp_dim <= dim,
            "dimension ladder: shortcomp_dim must not exceed the previous stage");
    Require(tr.excerpt_seconds > 0.0, "transforms.excerpt_seconds must be positive");
    dim = tr.shortcomp_dim;
  }
  if (tr.lnlda) {
    Require(tr.lnlda_dim >= 1 && tr.lnlda_dim <= dim,
            "dimension ladder: lnlda_dim must not exceed the previous stage");
    dim = tr.lnlda_dim;
  }
  Require(tr.nda_k >= 1, "transforms.nda_k must be positive");
  Require(plda.num_factors >= 1 && plda.num_factors <= dim,
          "dimension ladder: plda.num_factors must not exceed the embedding dimension");
  Require(plda.alpha >= 0.0 && plda.alpha <= 1.0, "plda.alpha must lie in [0, 1]");
  Require(plda.in_domain_init == "out" || plda.in_domain_init == "pca",
          "plda.in_domain_init must be 'out' or 'pca'");
  ParseSnormMode(postprocess.snorm_mode);
  Require(postprocess.p_tar > 0.0 && postprocess.p_tar < 1.0, "postprocess.p_tar must lie in (0, 1)");
  Require(postprocess.c_miss > 0.0 && postprocess.c_fa > 0.0, "detection costs must be positive");
  Require(postprocess.calibration_folds >= 1, "postprocess.calibration_folds must be >= 1");
}

PipelineConfig PipelineConfig::Preset(const std::string &name) {
  PipelineConfig c;
  if (name == "desk") return c;
  if (name == "full") {
    c.frontend.mfcc_delta_order = 2;
    c.frontend.plp_delta_order = 2;
    c.gmm.num_components = 2048;
    c.gmm.num_iters = 10;
    c.gmm.max_frames = 0;
    c.ivector.rank = 600;
    c.transforms.nda_dim = 400;
    c.transforms.shortcomp_dim = 390;
    c.transforms.lnlda_dim = 300;
    c.plda.num_factors = 200;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (desk|full)");
}

PipelineConfig PipelineConfig::Load(const std::filesystem::path &path) {
  const auto entries = ParseIni(ReadText(path), path.string());
  std::string preset = "desk";
  std::vector<IniEntry> rest;
  for (const auto &e : entries) {
    if (e.section.empty() && e.key == "preset") preset = e.value;
    else rest.push_back(e);
  }
  PipelineConfig c = Preset(preset);
  ApplyIni(c.Fields(), rest);
  c.Validate();
  return c;
}

MfccOptions PipelineConfig::Mfcc() const {
  MfccOptions o;
  o.frame.frame_length = frontend.mfcc_frame_length;
  o.frame.frame_shift = frontend.frame_shift;
  o.frame.window = ParseWindowType(frontend.window);
  o.frame.preemph_coeff = frontend.preemph_coeff;
  o.num_mel_bins = frontend.mfcc_num_mel_bins;
  o.num_ceps = frontend.mfcc_num_ceps;
  o.delta_order = frontend.mfcc_delta_order;
  return o;
}

PlpOptions PipelineConfig::Plp() const {
  PlpOptions o;
  o.frame.frame_length = frontend.plp_frame_length;
  o.frame.frame_shift = frontend.frame_shift;
  o.frame.window = ParseWindowType(frontend.window);
  o.frame.preemph_coeff = frontend.preemph_coeff;
  o.num_mel_bins = frontend.plp_num_mel_bins;
  o.num_ceps = frontend.plp_num_ceps;
  o.lpc_order = frontend.plp_lpc_order;
  o.delta_order = frontend.plp_delta_order;
  return o;
}

FbankOptions PipelineConfig::Fbank() const {
  FbankOptions o;
  o.frame.frame_shift = frontend.frame_shift;
  o.frame.window = ParseWindowType(frontend.window);
  o.frame.preemph_coeff = frontend.preemph_coeff;
  o.num_mel_bins = sad.fbank_num_mel_bins;
  return o;
}

CmvnOptions PipelineConfig::Cmvn() const { return {frontend.cmvn_window, frontend.cmvn_var_floor}; }

SadModel PipelineConfig::Sad() const {
  SadModel m;
  if (sad.source == "classifier") {
    m = ReadSadModel(sad.model_file);
  } else {
    EnergySource e;
    if (sad.energy_reference == "absolute") e.reference = EnergyReference::kAbsolute;
    else if (sad.energy_reference == "mean") e.reference = EnergyReference::kMean;
    else if (sad.energy_reference == "max") e.reference = EnergyReference::kMax;
    else if (sad.energy_reference == "peak") e.reference = EnergyReference::kPeak;
    else throw ConfigError("sad.energy_reference must be absolute, mean, max or peak");
    e.offset = sad.energy_offset;
    e.scale = sad.energy_scale;
    m.source = e;
  }
  m.prior_speech = sad.prior_speech;
  m.transitions << sad.self_loop, 1.0 - sad.self_loop, 1.0 - sad.self_loop, sad.self_loop;
  m.Validate();
  return m;
}

UbmTrainOptions PipelineConfig::Ubm() const {
  UbmTrainOptions o;
  o.num_components = gmm.num_components;
  o.num_iters = gmm.num_iters;
  o.kmeans_iters = gmm.kmeans_iters;
  o.seed = gmm.seed;
  return o;
}

TvTrainOptions PipelineConfig::Tv() const { return {ivector.rank, ivector.num_iters, ivector.seed}; }

PldaTrainOptions PipelineConfig::Plda() const {
  return {plda.num_factors, plda.num_iters, plda.seed};
}

}  // namespace ivpipe
