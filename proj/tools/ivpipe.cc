// tools/ivpipe.cc

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

// ivpipe: batch command-line front end for the speaker-verification
// pipeline. Every subcommand reads and writes the library's file formats;
// `run` chains them with caching.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ivpipe/config.h"
#include "ivpipe/frontend.h"
#include "ivpipe/gmm.h"
#include "ivpipe/io.h"
#include "ivpipe/ivector.h"
#include "ivpipe/pipeline.h"
#include "ivpipe/plda.h"
#include "ivpipe/postprocess.h"
#include "ivpipe/sad.h"
#include "ivpipe/synth.h"
#include "ivpipe/transforms.h"

namespace fs = std::filesystem;
using namespace ivpipe;

namespace {

PipelineConfig LoadConfig(const std::string &path) {
  return path.empty() ? PipelineConfig::Preset("desk") : PipelineConfig::Load(path);
}

std::vector<Embedding> LoadEmbeddingManifest(const std::string &path) {
  std::vector<Embedding> out;
  for (const auto &e : ReadManifest(path)) out.push_back(ReadEmbedding(e.path));
  return out;
}

std::map<std::string, Embedding> ById(const std::vector<Embedding> &v) {
  std::map<std::string, Embedding> out;
  for (const auto &e : v) out.emplace(e.id, e);
  return out;
}

std::map<std::string, Embedding> LoadEnrolModels(const std::string &path) {
  std::map<std::string, Embedding> models;
  for (const auto &[model, paths] : ReadEnrolManifest(path)) {
    std::vector<Embedding> segs;
    for (const auto &p : paths) segs.push_back(ReadEmbedding(p));
    models.emplace(model, Enroll(segs, model));
  }
  return models;
}

void WriteEmbeddings(const fs::path &dir, const std::vector<Embedding> &embs) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> manifest;
  for (const auto &e : embs) {
    WriteEmbedding(dir / (e.id + ".ivec"), e);
    manifest.push_back({e.id, e.id + ".ivec", {}});
  }
  WriteManifest(dir / "embeddings.list", manifest);
}

std::vector<int> SpeakerLabels(const std::vector<Embedding> &embs, bool singletons) {
  std::vector<std::string> spk;
  for (std::size_t i = 0; i < embs.size(); ++i) {
    if (singletons) {
      spk.push_back(std::to_string(i));
      continue;
    }
    if (embs[i].speaker.empty())
      throw DataError("embedding '" + embs[i].id + "' has no speaker label");
    spk.push_back(embs[i].speaker);
  }
  return DenseLabels(spk);
}

int ExitCode(const Error &e) {
  switch (e.kind()) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kData: return 3;
    case ErrorKind::kNumerical: return 4;
  }
  return 3;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"i-vector / PLDA speaker verification toolkit"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress warnings on stderr");

  // features
  std::string f_type = "mfcc", f_config, f_manifest, f_out;
  auto *features = app.add_subcommand("features", "Extract cepstral or filterbank features");
  features->add_option("--type", f_type, "mfcc | plp | fbank")
      ->check(CLI::IsMember({"mfcc", "plp", "fbank"}));
  features->add_option("--config", f_config, "Pipeline config");
  features->add_option("--manifest", f_manifest, "Audio manifest")->required();
  features->add_option("--out", f_out, "Output directory")->required();

  // sad
  std::string s_model, s_config, s_manifest, s_features, s_out;
  auto *sad = app.add_subcommand("sad", "Speech activity detection over filterbank features");
  sad->add_option("--model", s_model, "IVSD model file (default: energy source from config)");
  sad->add_option("--config", s_config, "Pipeline config");
  sad->add_option("--manifest", s_manifest, "Filterbank feature manifest")->required();
  sad->add_option("--features", s_features, "Feature manifest to attach masks to");
  sad->add_option("--out", s_out, "Output directory")->required();

  // ubm-train
  std::string u_config, u_manifest, u_out;
  auto *ubm_train = app.add_subcommand("ubm-train", "Train a full-covariance UBM");
  ubm_train->add_option("--config", u_config, "Pipeline config");
  ubm_train->add_option("--manifest", u_manifest, "Feature manifest (masks applied)")->required();
  ubm_train->add_option("--out", u_out, "Output IVGM file")->required();

  // stats
  std::string st_ubm, st_manifest, st_out;
  double st_scale = 0.33;
  auto *stats = app.add_subcommand("stats", "Accumulate scaled Baum-Welch statistics");
  stats->add_option("--ubm", st_ubm, "UBM file")->required();
  stats->add_option("--manifest", st_manifest, "Feature manifest (masks applied)")->required();
  stats->add_option("--scale", st_scale, "Statistics scale factor");
  stats->add_option("--out", st_out, "Output directory")->required();

  // tv-train
  std::string tv_config, tv_ubm, tv_stats, tv_out;
  auto *tv_train = app.add_subcommand("tv-train", "Train the total-variability matrix");
  tv_train->add_option("--config", tv_config, "Pipeline config");
  tv_train->add_option("--ubm", tv_ubm, "UBM file")->required();
  tv_train->add_option("--stats", tv_stats, "Statistics manifest")->required();
  tv_train->add_option("--out", tv_out, "Output IVTV file")->required();

  // ivectors
  std::string iv_ubm, iv_tv, iv_stats, iv_out;
  auto *ivectors = app.add_subcommand("ivectors", "Extract i-vectors");
  ivectors->add_option("--ubm", iv_ubm, "UBM file")->required();
  ivectors->add_option("--tv", iv_tv, "TV file")->required();
  ivectors->add_option("--stats", iv_stats,
                       "Statistics manifest (speaker/language/domain/duration attributes kept)")
      ->required();
  ivectors->add_option("--out", iv_out, "Output directory")->required();

  // transform-fit
  std::string tf_kind, tf_in, tf_excerpts, tf_out;
  int tf_dim = 0, tf_k = 10;
  double tf_alpha = 2.0;
  bool tf_wccn_first = false;
  auto *tfit = app.add_subcommand("transform-fit", "Fit one transform");
  tfit->add_option("--kind", tf_kind, "center|whiten|nda|lda|shortcomp|wccn|lnlda|lengthnorm")
      ->required()
      ->check(CLI::IsMember(
          {"center", "whiten", "nda", "lda", "shortcomp", "wccn", "lnlda", "lengthnorm"}));
  tfit->add_option("--in", tf_in, "Embedding manifest")->required();
  tfit->add_option("--excerpts", tf_excerpts, "Excerpt manifest, paired by line (shortcomp)");
  tfit->add_option("--dim", tf_dim, "Output dimension");
  tfit->add_option("--k", tf_k, "NDA neighbours");
  tfit->add_option("--alpha", tf_alpha, "NDA weighting exponent");
  tfit->add_flag("--wccn-first", tf_wccn_first, "Short-duration WCCN before the LDA");
  tfit->add_option("--out", tf_out,
                   "Output IVTR file (shortcomp writes <out>.lda and <out>.wccn)")
      ->required();

  // transform-apply
  std::string ta_chain, ta_in, ta_out;
  auto *tapply = app.add_subcommand("transform-apply", "Apply a transform chain");
  tapply->add_option("--chain", ta_chain, "Chain manifest")->required();
  tapply->add_option("--in", ta_in, "Embedding manifest")->required();
  tapply->add_option("--out", ta_out, "Output directory")->required();

  // plda-train
  std::string pt_in, pt_out, pt_domain = "out";
  int pt_factors = 10, pt_iters = 10;
  unsigned pt_seed = 19;
  bool pt_singletons = false;
  std::string pt_init;
  auto *plda_train = app.add_subcommand("plda-train", "Train a Gaussian PLDA model");
  plda_train->add_option("--in", pt_in, "Embedding manifest")->required();
  plda_train->add_option("--factors", pt_factors, "Speaker factors F");
  plda_train->add_option("--iters", pt_iters, "EM iterations");
  plda_train->add_option("--seed", pt_seed, "Initialization seed");
  plda_train->add_option("--domain", pt_domain, "in | out")->check(CLI::IsMember({"in", "out"}));
  plda_train->add_flag("--singletons", pt_singletons, "Treat every embedding as its own speaker");
  plda_train->add_option("--init", pt_init, "Start EM from this model")->check(CLI::ExistingFile);
  plda_train->add_option("--out", pt_out, "Output IVPL file")->required();

  // plda-adapt
  std::string pa_in, pa_outm, pa_out, pa_kernel;
  double pa_alpha = 0.10;
  bool pa_mean = false;
  auto *plda_adapt = app.add_subcommand("plda-adapt", "Interpolate in- and out-of-domain PLDA");
  plda_adapt->add_option("--in-model", pa_in, "In-domain IVPL")->required();
  plda_adapt->add_option("--out-model", pa_outm, "Out-of-domain IVPL")->required();
  plda_adapt->add_option("--alpha", pa_alpha, "Weight of the in-domain model");
  plda_adapt->add_flag("--interpolate-mean", pa_mean, "Interpolate the mean as well");
  plda_adapt->add_option("--out", pa_out, "Output IVPL file")->required();
  plda_adapt->add_option("--kernel", pa_kernel, "Also write the scoring kernel (IVKN)");

  // score
  std::string sc_kernel, sc_plda, sc_enrol, sc_test, sc_trials, sc_out;
  auto *score = app.add_subcommand("score", "Score trials with a PLDA kernel");
  score->add_option("--kernel", sc_kernel, "IVKN file");
  score->add_option("--plda", sc_plda, "IVPL file (kernel built on the fly)");
  score->add_option("--enrol", sc_enrol, "Enrolment manifest: model_id emb [emb ...]")->required();
  score->add_option("--test", sc_test, "Test embedding manifest")->required();
  score->add_option("--trials", sc_trials, "Trial list or key")->required();
  score->add_option("--out", sc_out, "Output score file")->required();

  // snorm
  std::string sn_kernel, sn_enrol, sn_test, sn_cohort, sn_scores, sn_out, sn_mode = "sum";
  auto *snorm = app.add_subcommand("snorm", "Symmetric score normalization");
  snorm->add_option("--kernel", sn_kernel, "IVKN file")->required();
  snorm->add_option("--enrol", sn_enrol, "Enrolment manifest")->required();
  snorm->add_option("--test", sn_test, "Test embedding manifest")->required();
  snorm->add_option("--cohort", sn_cohort, "Cohort embedding manifest")->required();
  snorm->add_option("--scores", sn_scores, "Raw score file")->required();
  snorm->add_option("--mode", sn_mode, "sum | paper-minus");
  snorm->add_option("--out", sn_out, "Output score file")->required();

  // qmf
  std::string q_scores, q_test, q_out;
  double q_coeff = -0.2;
  auto *qmf = app.add_subcommand("qmf", "Add the test-duration quality term");
  qmf->add_option("--coeff", q_coeff, "Coefficient of sqrt(duration)");
  qmf->add_option("--scores", q_scores, "Score file")->required();
  qmf->add_option("--test", q_test, "Test embedding manifest (speech durations)")->required();
  qmf->add_option("--out", q_out, "Output score file")->required();

  // fuse
  std::vector<std::string> fu_in;
  std::string fu_out;
  auto *fuse = app.add_subcommand("fuse", "Sum two score files");
  fuse->add_option("inputs", fu_in, "Two score files")->required()->expected(2);
  fuse->add_option("--out", fu_out, "Output score file")->required();

  // calibrate
  std::string ca_scores, ca_key, ca_out, ca_apply;
  double ca_ptar = 1e-4;
  auto *calibrate = app.add_subcommand("calibrate", "Train an affine llr calibration");
  calibrate->add_option("--ptar", ca_ptar, "Target prior");
  calibrate->add_option("--scores", ca_scores, "Score file")->required();
  calibrate->add_option("--key", ca_key, "Key file")->required();
  calibrate->add_option("--out", ca_out, "Output IVCA file")->required();
  calibrate->add_option("--apply-out", ca_apply, "Also write calibrated scores");

  // metrics
  std::string me_scores, me_key, me_det;
  double me_ptar = 1e-4, me_cmiss = 1.0, me_cfa = 1.0;
  auto *metrics = app.add_subcommand("metrics", "EER, Cdet and minCdet");
  metrics->add_option("--ptar", me_ptar, "Target prior");
  metrics->add_option("--cmiss", me_cmiss, "Miss cost");
  metrics->add_option("--cfa", me_cfa, "False-alarm cost");
  metrics->add_option("--scores", me_scores, "Score file")->required();
  metrics->add_option("--key", me_key, "Key file")->required();
  metrics->add_option("--det", me_det, "Write DET points (p_miss p_fa)");

  // config
  std::string cf_preset = "desk", cf_file;
  bool cf_dump = false;
  auto *config = app.add_subcommand("config", "Print configuration");
  config->add_flag("--dump", cf_dump, "Print every setting with its value");
  config->add_option("--preset", cf_preset, "desk | full");
  config->add_option("--config", cf_file, "Config file to resolve");

  // synth
  std::string sy_spec, sy_out;
  bool sy_control = false, sy_dump = false;
  auto *synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--spec", sy_spec, "Corpus spec (defaults when omitted)");
  synth->add_flag("--control", sy_control, "Indistinguishable speakers: speaker_scale 0, one eval language");
  synth->add_flag("--dump", sy_dump, "Print the resolved spec and exit");
  synth->add_option("--out", sy_out, "Output directory");

  // run
  std::string r_config, r_corpus, r_out;
  bool r_lda = false, r_noshort = false, r_nolnlda = false, r_noqmf = false, r_noadapt = false;
  auto *run = app.add_subcommand("run", "Run the full pipeline");
  run->add_option("--config", r_config, "Pipeline config");
  run->add_option("--corpus", r_corpus, "Corpus directory")->required();
  run->add_option("--out", r_out, "Output directory")->required();
  run->add_flag("--lda-instead-of-nda", r_lda, "LDA in place of NDA");
  run->add_flag("--no-shortcomp", r_noshort, "Skip short-duration compensation");
  run->add_flag("--no-lnlda", r_nolnlda, "Skip language-normalized LDA");
  run->add_flag("--no-qmf", r_noqmf, "Skip the quality measure function");
  run->add_flag("--no-adapt", r_noadapt, "Use the out-of-domain PLDA only");

  // timing
  std::string ti_config, ti_enrol, ti_test, ti_chain = "mfcc", ti_models;
  auto *timing = app.add_subcommand("timing", "Per-stage CPU time for one trial");
  timing->add_option("--config", ti_config, "Pipeline config");
  timing->add_option("--enrol", ti_enrol, "Enrolment WAV")->required();
  timing->add_option("--test", ti_test, "Test WAV")->required();
  timing->add_option("--chain", ti_chain, "mfcc | plp");
  timing->add_option("--models", ti_models, "Directory with ubm.ivgm and tv.ivtv "
                                            "(default: pipeline.models_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  SetWarningsQuiet(quiet);

  try {
    if (*features) {
      const PipelineConfig cfg = LoadConfig(f_config);
      fs::create_directories(f_out);
      std::vector<ManifestEntry> out;
      for (const auto &e : ReadManifest(f_manifest)) {
        const AudioSegment audio = ReadWav(e.path, cfg.frontend.sample_rate);
        FeatureMatrix f;
        if (f_type == "fbank") f = ExtractFbank(audio, cfg.Fbank());
        else f = StCmvn(f_type == "mfcc" ? ExtractMfcc(audio, cfg.Mfcc()) : ExtractPlp(audio, cfg.Plp()),
                        cfg.Cmvn());
        WriteFeatures(fs::path(f_out) / (e.id + ".ivfm"), f);
        out.push_back({e.id, e.id + ".ivfm", e.attrs});
      }
      WriteManifest(fs::path(f_out) / "features.list", out);
    } else if (*sad) {
      PipelineConfig cfg = LoadConfig(s_config);
      SadModel model = s_model.empty() ? cfg.Sad() : ReadSadModel(s_model);
      fs::create_directories(s_out);
      std::map<std::string, std::vector<bool>> masks;
      std::ostringstream text;
      for (const auto &e : ReadManifest(s_manifest)) {
        const auto mask = DetectSpeech(ReadFeatures(e.path), model);
        text << e.id << ' ';
        for (bool b : mask) text << (b ? '1' : '0');
        text << '\n';
        masks[e.id] = mask;
      }
      WriteTextAtomic(fs::path(s_out) / "masks.txt", text.str());
      if (!s_features.empty()) {
        std::vector<ManifestEntry> out;
        for (const auto &e : ReadManifest(s_features)) {
          auto it = masks.find(e.id);
          if (it == masks.end()) throw DataError("no SAD mask for '" + e.id + "'");
          FeatureMatrix f = ReadFeatures(e.path);
          f.speech_mask = AlignMask(it->second, f.NumFrames());
          WriteFeatures(fs::path(s_out) / (e.id + ".ivfm"), f);
          out.push_back({e.id, e.id + ".ivfm", e.attrs});
        }
        WriteManifest(fs::path(s_out) / "features.list", out);
      }
    } else if (*ubm_train) {
      const PipelineConfig cfg = LoadConfig(u_config);
      std::vector<FeatureMatrix> feats;
      for (const auto &e : ReadManifest(u_manifest)) {
        FeatureMatrix f = ReadFeatures(e.path);
        feats.push_back(f.speech_mask ? ApplyMask(f, *f.speech_mask) : f);
      }
      std::vector<double> history;
      WriteGmm(u_out, TrainUbm(feats, cfg.Ubm(), &history));
      for (std::size_t i = 0; i < history.size(); ++i)
        std::cout << "iter " << i << " loglike " << history[i] << '\n';
    } else if (*stats) {
      const GmmModel ubm = ReadGmm(st_ubm);
      fs::create_directories(st_out);
      std::vector<ManifestEntry> out;
      for (const auto &e : ReadManifest(st_manifest)) {
        FeatureMatrix f = ReadFeatures(e.path);
        auto attrs = e.attrs;
        if (f.speech_mask) {
          f = ApplyMask(f, *f.speech_mask);
          attrs["duration"] = std::to_string(f.NumFrames() * f.frame_shift);
        }
        WriteStats(fs::path(st_out) / (e.id + ".ivst"),
                   ScaleStats(AccumulateStats(ubm, f, e.id), st_scale));
        out.push_back({e.id, e.id + ".ivst", attrs});
      }
      WriteManifest(fs::path(st_out) / "stats.list", out);
    } else if (*tv_train) {
      const PipelineConfig cfg = LoadConfig(tv_config);
      const GmmModel ubm = ReadGmm(tv_ubm);
      std::vector<SuffStats> all;
      for (const auto &e : ReadManifest(tv_stats)) all.push_back(ReadStats(e.path));
      std::vector<double> history;
      WriteTv(tv_out, TrainTv(all, ubm, cfg.Tv(), &history));
      for (std::size_t i = 0; i < history.size(); ++i)
        std::cout << "iter " << i << " objective " << history[i] << '\n';
    } else if (*ivectors) {
      const GmmModel ubm = ReadGmm(iv_ubm);
      const IvectorExtractor extractor(ReadTv(iv_tv), ubm);
      std::vector<Embedding> embs;
      for (const auto &e : ReadManifest(iv_stats)) {
        SuffStats s = ReadStats(e.path);
        s.utterance_id = e.id;
        Embedding emb = ExtractIvector(s, extractor);
        emb.speaker = e.Attr("speaker");
        emb.language = e.Attr("language");
        emb.domain = e.Attr("domain", "out") == "in" ? Domain::kIn : Domain::kOut;
        emb.speech_duration = e.AttrDouble("duration", s.num_frames * 0.01);
        embs.push_back(std::move(emb));
      }
      WriteEmbeddings(iv_out, embs);
    } else if (*tfit) {
      const auto embs = LoadEmbeddingManifest(tf_in);
      const Matrix data = StackEmbeddings(embs);
      const int dim = tf_dim > 0 ? tf_dim : static_cast<int>(data.cols());
      const TransformKind kind = tf_kind == "shortcomp" ? TransformKind::kShortCompLda
                                                         : ParseTransformKind(tf_kind);
      switch (kind) {
        case TransformKind::kCenter: WriteTransform(tf_out, FitCenter(data)); break;
        case TransformKind::kWhiten: WriteTransform(tf_out, FitCenterWhiten(data)); break;
        case TransformKind::kNda:
          WriteTransform(tf_out, FitNda(data, SpeakerLabels(embs, false), tf_k, dim, tf_alpha));
          break;
        case TransformKind::kLda:
          WriteTransform(tf_out, FitLda(data, SpeakerLabels(embs, false), dim));
          break;
        case TransformKind::kWccn:
          WriteTransform(tf_out, FitWccn(data, SpeakerLabels(embs, false)));
          break;
        case TransformKind::kLnLda: {
          std::vector<std::string> lang;
          for (const auto &e : embs) {
            if (e.language.empty()) throw DataError("embedding '" + e.id + "' has no language");
            lang.push_back(e.language);
          }
          WriteTransform(tf_out, FitLnLda(data, SpeakerLabels(embs, false), DenseLabels(lang), dim));
          break;
        }
        case TransformKind::kShortCompLda: {
          if (tf_excerpts.empty()) throw ConfigError("shortcomp needs --excerpts");
          const Matrix ex = StackEmbeddings(LoadEmbeddingManifest(tf_excerpts));
          const ShortDurationComp sc = FitShortDurationComp(data, ex, dim, tf_wccn_first);
          WriteTransform(tf_out + ".lda", sc.lda);
          WriteTransform(tf_out + ".wccn", sc.wccn);
          break;
        }
        case TransformKind::kLengthNorm:
          WriteTransform(tf_out, LengthNormTransform(static_cast<int>(data.cols())));
          break;
      }
    } else if (*tapply) {
      const auto chain = ReadChain(ta_chain);
      std::vector<Embedding> out;
      for (const auto &e : LoadEmbeddingManifest(ta_in)) out.push_back(ApplyChain(chain, e));
      WriteEmbeddings(ta_out, out);
    } else if (*plda_train) {
      const auto embs = LoadEmbeddingManifest(pt_in);
      std::vector<double> history;
      std::optional<PldaModel> start;
      if (!pt_init.empty()) start = ReadPlda(pt_init);
      PldaModel m = TrainPlda(StackEmbeddings(embs), SpeakerLabels(embs, pt_singletons),
                              {pt_factors, pt_iters, pt_seed}, &history,
                              start ? &*start : nullptr);
      m.domain = pt_domain == "in" ? PldaDomain::kIn : PldaDomain::kOut;
      WritePlda(pt_out, m);
      for (std::size_t i = 0; i < history.size(); ++i)
        std::cout << "iter " << i << " loglike " << history[i] << '\n';
    } else if (*plda_adapt) {
      const PldaModel m = AdaptPlda(ReadPlda(pa_in), ReadPlda(pa_outm), pa_alpha, pa_mean);
      WritePlda(pa_out, m);
      if (!pa_kernel.empty()) WriteKernel(pa_kernel, BuildKernel(m));
    } else if (*score) {
      if (sc_kernel.empty() == sc_plda.empty())
        throw ConfigError("score needs exactly one of --kernel or --plda");
      const ScoringKernel kernel =
          sc_kernel.empty() ? BuildKernel(ReadPlda(sc_plda)) : ReadKernel(sc_kernel);
      const auto trials = ReadTrials(sc_trials, false);
      WriteScores(sc_out, ScoreTrials(kernel, LoadEnrolModels(sc_enrol),
                                      ById(LoadEmbeddingManifest(sc_test)), trials));
    } else if (*snorm) {
      const ScoringKernel kernel = ReadKernel(sn_kernel);
      const auto raw = ReadScores(sn_scores);
      const Matrix cohort = StackEmbeddings(LoadEmbeddingManifest(sn_cohort));
      WriteScores(sn_out, SnormTrials(kernel, raw, LoadEnrolModels(sn_enrol),
                                      ById(LoadEmbeddingManifest(sn_test)), cohort,
                                      ParseSnormMode(sn_mode)));
    } else if (*qmf) {
      const auto tests = ById(LoadEmbeddingManifest(q_test));
      auto scores = ReadScores(q_scores);
      for (auto &s : scores) {
        auto it = tests.find(s.test_id);
        if (it == tests.end()) throw DataError("qmf: unknown test '" + s.test_id + "'");
        s.score = ApplyQmf(s.score, it->second.speech_duration, q_coeff);
      }
      WriteScores(q_out, scores);
    } else if (*fuse) {
      WriteScores(fu_out, Fuse(ReadScores(fu_in[0]), ReadScores(fu_in[1])));
    } else if (*calibrate) {
      const auto scores = ReadScores(ca_scores);
      std::vector<double> values;
      std::vector<bool> labels;
      JoinWithKey(scores, ReadTrials(ca_key, true), &values, &labels);
      const CalibrationMap map = TrainCalibration(values, labels, ca_ptar);
      WriteCalibration(ca_out, map);
      std::cout << "a " << map.a << "\nb " << map.b << '\n';
      if (!ca_apply.empty()) {
        auto out = scores;
        for (auto &s : out) s.score = map.Apply(s.score);
        WriteScores(ca_apply, out);
      }
    } else if (*metrics) {
      std::vector<double> values;
      std::vector<bool> labels;
      JoinWithKey(ReadScores(me_scores), ReadTrials(me_key, true), &values, &labels);
      const DetMetrics m = ComputeMetrics(values, labels, me_ptar, me_cmiss, me_cfa);
      std::cout << FormatMetrics(m);
      if (!me_det.empty()) WriteDetPoints(me_det, m);
    } else if (*config) {
      const PipelineConfig cfg =
          cf_file.empty() ? PipelineConfig::Preset(cf_preset) : PipelineConfig::Load(cf_file);
      cfg.Validate();
      if (cf_dump) std::cout << cfg.Dump();
      else std::cout << "config ok; use --dump to print all settings\n";
    } else if (*synth) {
      SynthSpec spec = sy_spec.empty() ? SynthSpec{} : SynthSpec::Load(sy_spec);
      if (sy_control) spec = spec.Control();
      spec.Validate();
      if (sy_dump) {
        std::cout << spec.Dump();
      } else {
        if (sy_out.empty()) throw ConfigError("synth needs --out");
        GenerateCorpus(spec, sy_out);
      }
    } else if (*run) {
      PipelineConfig cfg = LoadConfig(r_config);
      if (r_lda) cfg.transforms.use_lda = true;
      if (r_noshort) cfg.transforms.shortcomp = false;
      if (r_nolnlda) cfg.transforms.lnlda = false;
      if (r_noqmf) cfg.postprocess.qmf = false;
      if (r_noadapt) cfg.plda.adapt = false;
      const RunResult result = RunPipeline(cfg, r_corpus, r_out);
      std::cout << FormatRunSummary(result) << "results: " << result.results_dir.string() << '\n';
    } else if (*timing) {
      const PipelineConfig cfg = LoadConfig(ti_config);
      const fs::path models = ti_models.empty() ? fs::path(cfg.pipeline.models_dir) : fs::path(ti_models);
      if (models.empty()) throw ConfigError("timing needs --models or pipeline.models_dir");
      const GmmModel ubm = ReadGmm(models / "ubm.ivgm");
      const TvModel tv = ReadTv(models / "tv.ivtv");
      const auto rows = TimingReport(cfg, ti_chain, ubm, tv,
                                     ReadWav(ti_enrol, cfg.frontend.sample_rate),
                                     ReadWav(ti_test, cfg.frontend.sample_rate));
      std::cout << FormatTiming(rows);
    }
  } catch (const Error &e) {
    std::cerr << "ivpipe: " << e.what() << '\n';
    return ExitCode(e);
  } catch (const std::exception &e) {
    std::cerr << "ivpipe: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
