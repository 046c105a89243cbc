// src/pipeline.cc

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

#include "ivpipe/pipeline.h"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "ivpipe/frontend.h"
#include "ivpipe/sad.h"
#include "ivpipe/transforms.h"

namespace ivpipe {

namespace fs = std::filesystem;

namespace {

// Rethrows the in-flight exception with `prefix` prepended, keeping its kind.
[[noreturn]] void RethrowWithPrefix(const std::string &prefix) {
  try {
    throw;
  } catch (const NoSpeechError &e) {
    throw NoSpeechError(prefix + e.what());
  } catch (const TooShortError &e) {
    throw TooShortError(prefix + e.what());
  } catch (const ConfigError &e) {
    throw ConfigError(prefix + e.what());
  } catch (const DataError &e) {
    throw DataError(prefix + e.what());
  } catch (const NumericalError &e) {
    throw NumericalError(prefix + e.what());
  } catch (const std::exception &e) {
    throw DataError(prefix + e.what());
  }
}

class StageRunner {
 public:
  StageRunner(fs::path root, RunResult *result) : root_(std::move(root)), result_(result) {}

  // Runs `body` in <root>/<chain>/<stage>-<hash> unless that directory was
  // completed before. Returns the directory; `hash` receives the digest.
  fs::path Run(const std::string &chain, const std::string &stage, const std::string &hash_input,
               const std::function<void(const fs::path &)> &body, std::string *hash = nullptr) {
    const std::string h = HexDigest(Fnv1a(stage + "\n" + hash_input));
    const fs::path dir = root_ / chain / (stage + "-" + h);
    StageRecord rec{chain, stage, h, dir, fs::exists(dir / "DONE")};
    if (!rec.cache_hit) {
      try {
        fs::remove_all(dir);
        fs::create_directories(dir);
        body(dir);
        WriteTextAtomic(dir / "DONE", h + "\n");
      } catch (...) {
        RethrowWithPrefix("stage " + chain + "/" + stage + ": ");
      }
    }
    result_->stages.push_back(rec);
    if (hash) *hash = h;
    return dir;
  }

 private:
  fs::path root_;
  RunResult *result_;
};

struct UttInfo {
  const ManifestEntry *entry;
  std::string part;  // train | dev | eval
};

// Exact decimal form for hash inputs.
std::string Num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string IvecName(const std::string &id) { return id + ".ivec"; }

std::map<std::string, double> ReadIndex(const fs::path &path) {
  std::map<std::string, double> out;
  std::istringstream is(ReadText(path));
  std::string id;
  double d;
  while (is >> id >> d) out[id] = d;
  return out;
}

FeatureMatrix LoadSpeech(const fs::path &feat_dir, const std::string &id) {
  FeatureMatrix f = ReadFeatures(feat_dir / (id + ".ivfm"));
  if (!f.speech_mask) throw DataError("features for '" + id + "' carry no speech mask");
  return ApplyMask(f, *f.speech_mask);
}

std::vector<std::string> Ids(const std::vector<ManifestEntry> &entries,
                             const std::map<std::string, double> &available) {
  std::vector<std::string> out;
  for (const auto &e : entries)
    if (available.count(e.id)) out.push_back(e.id);
  return out;
}

std::vector<Embedding> LoadEmbeddings(const fs::path &dir, const std::vector<std::string> &ids) {
  std::vector<Embedding> out;
  out.reserve(ids.size());
  for (const auto &id : ids) out.push_back(ReadEmbedding(dir / IvecName(id)));
  return out;
}

std::vector<Embedding> ApplyAll(std::span<const LinearTransform> chain,
                                const std::vector<Embedding> &in) {
  std::vector<Embedding> out;
  out.reserve(in.size());
  for (const auto &e : in) out.push_back(ApplyChain(chain, e));
  return out;
}

void WriteHistory(const fs::path &path, const std::vector<double> &h) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < h.size(); ++i) os << i << ' ' << h[i] << '\n';
  WriteTextAtomic(path, os.str());
}

std::vector<TrialScore> CalibrateFolds(const std::vector<TrialScore> &scores,
                                       const std::vector<TrialKey> &key,
                                       const PostprocessConfig &pp, CalibrationMap *overall) {
  std::vector<double> values;
  std::vector<bool> labels;
  JoinWithKey(scores, key, &values, &labels);
  *overall = TrainCalibration(values, labels, pp.p_tar);
  std::map<std::string, int> model_index;
  for (const auto &s : scores) model_index.emplace(s.model_id, 0);
  int next = 0;
  for (auto &[m, idx] : model_index) idx = next++;
  std::vector<TrialScore> out = scores;
  const int folds = pp.calibration_folds;
  if (folds == 1) {
    for (auto &s : out) s.score = overall->Apply(s.score);
    return out;
  }
  for (int f = 0; f < folds; ++f) {
    std::vector<double> tv;
    std::vector<bool> tl;
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (model_index[scores[i].model_id] % folds != f) {
        tv.push_back(values[i]);
        tl.push_back(labels[i]);
      }
    const CalibrationMap map = TrainCalibration(tv, tl, pp.p_tar);
    for (std::size_t i = 0; i < scores.size(); ++i)
      if (model_index[scores[i].model_id] % folds == f) out[i].score = map.Apply(values[i]);
  }
  return out;
}

struct Timer {
  rusage start_usage{};
  std::chrono::steady_clock::time_point start_wall;

  Timer() {
    getrusage(RUSAGE_SELF, &start_usage);
    start_wall = std::chrono::steady_clock::now();
  }
  void Stop(TimingRow *row) const {
    rusage end{};
    getrusage(RUSAGE_SELF, &end);
    auto secs = [](const timeval &a, const timeval &b) {
      return static_cast<double>(b.tv_sec - a.tv_sec) + 1e-6 * static_cast<double>(b.tv_usec - a.tv_usec);
    };
    row->user = secs(start_usage.ru_utime, end.ru_utime);
    row->sys = secs(start_usage.ru_stime, end.ru_stime);
    row->real = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_wall).count();
    row->peak_rss_kb = end.ru_maxrss;
  }
};

}  // namespace

Corpus Corpus::Load(const fs::path &dir) {
  Corpus c;
  c.dir = dir;
  c.train = ReadManifest(dir / "train.list");
  c.dev = ReadManifest(dir / "dev.list");
  c.eval = ReadManifest(dir / "eval.list");
  std::istringstream enrol(ReadText(dir / "eval_enrol.txt"));
  std::string line;
  while (std::getline(enrol, line)) {
    auto tok = SplitWhitespace(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok.size() < 2) throw DataError("eval_enrol.txt: model '" + tok[0] + "' has no segments");
    c.enrol[tok[0]] = std::vector<std::string>(tok.begin() + 1, tok.end());
  }
  c.key = ReadTrials(dir / "eval.key", true);
  std::uint64_t h = 0;
  for (const char *f : {"train.list", "dev.list", "eval.list", "eval_enrol.txt", "eval.key"})
    h = Fnv1a(ReadText(dir / f), h);
  for (const auto *part : {&c.train, &c.dev, &c.eval})
    for (const auto &e : *part) {
      if (!fs::exists(e.path)) throw DataError("missing audio '" + e.path + "' for " + e.id);
      h = Fnv1a(ReadText(e.path), h);
    }
  c.fingerprint = h;
  return c;
}

const SystemResult &RunResult::System(const std::string &name) const {
  for (const auto &s : systems)
    if (s.name == name) return s;
  throw DataError("no system named '" + name + "' in the run result");
}

const StageRecord *RunResult::Stage(const std::string &chain, const std::string &stage) const {
  for (const auto &s : stages)
    if (s.chain == chain && s.stage == stage) return &s;
  return nullptr;
}

FeatureMatrix ComputeFeatures(const PipelineConfig &config, const std::string &chain,
                              const AudioSegment &audio, const SadModel &sad) {
  FeatureMatrix f = chain == "mfcc" ? ExtractMfcc(audio, config.Mfcc())
                                    : ExtractPlp(audio, config.Plp());
  const FeatureMatrix fbank = ExtractFbank(audio, config.Fbank());
  const std::vector<bool> mask = DetectSpeech(fbank, sad);
  f = StCmvn(f, config.Cmvn());
  f.speech_mask = AlignMask(mask, f.NumFrames());
  return f;
}

RunResult RunPipeline(const PipelineConfig &config, const fs::path &corpus_dir,
                      const fs::path &out_dir) {
  config.Validate();
  const Corpus corpus = Corpus::Load(corpus_dir);
  const auto fields = config.Fields();
  RunResult result;
  StageRunner runner(out_dir, &result);

  std::map<std::string, UttInfo> utts;
  for (const auto &e : corpus.train) utts[e.id] = {&e, "train"};
  for (const auto &e : corpus.dev) utts[e.id] = {&e, "dev"};
  for (const auto &e : corpus.eval) utts[e.id] = {&e, "eval"};

  std::map<std::string, std::vector<TrialScore>> final_scores;
  std::vector<std::string> qmf_hashes;
  for (const auto &chain : config.Chains()) {
    // Features, SAD mask and ST-CMVN.
    std::string sad_extra;
    if (config.sad.source == "classifier")
      sad_extra = HexDigest(Fnv1a(ReadText(config.sad.model_file)));
    std::string h_feat;
    const fs::path feat_dir = runner.Run(
        chain, "features",
        chain + DumpFields(fields, "frontend") + DumpFields(fields, "sad") + sad_extra +
            HexDigest(corpus.fingerprint),
        [&](const fs::path &dir) {
          const SadModel sad = config.Sad();
          std::ostringstream index;
          index << std::setprecision(10);
          for (const auto *part : {&corpus.train, &corpus.dev, &corpus.eval})
            for (const auto &e : *part) {
              const AudioSegment audio = ReadWav(e.path, config.frontend.sample_rate);
              FeatureMatrix f = ComputeFeatures(config, chain, audio, sad);
              const double speech = f.SpeechDuration();
              if (speech <= 0.0) {
                if (part == &corpus.eval) throw NoSpeechError("no speech detected in '" + e.id + "'");
                Warn("no speech detected in '" + e.id + "'; utterance dropped");
                continue;
              }
              WriteFeatures(dir / (e.id + ".ivfm"), f);
              index << e.id << ' ' << speech << '\n';
            }
          WriteTextAtomic(dir / "index.txt", index.str());
        },
        &h_feat);
    const auto available = ReadIndex(feat_dir / "index.txt");
    const auto train_ids = Ids(corpus.train, available);
    const auto dev_ids = Ids(corpus.dev, available);
    const auto eval_ids = Ids(corpus.eval, available);
    std::vector<std::string> bg_ids = train_ids;
    bg_ids.insert(bg_ids.end(), dev_ids.begin(), dev_ids.end());

    // UBM on a strided subset of train + dev speech frames.
    std::string h_ubm;
    const fs::path ubm_dir = runner.Run(
        chain, "ubm", h_feat + DumpFields(fields, "gmm"),
        [&](const fs::path &dir) {
          double total = 0.0;
          for (const auto &id : bg_ids) total += available.at(id) / config.frontend.frame_shift;
          const long stride = config.gmm.max_frames > 0
                                  ? std::max(1L, static_cast<long>(std::ceil(total / config.gmm.max_frames)))
                                  : 1L;
          std::vector<FeatureMatrix> subset;
          long counter = 0;
          for (const auto &id : bg_ids) {
            const FeatureMatrix f = LoadSpeech(feat_dir, id);
            std::vector<Eigen::Index> keep;
            for (Eigen::Index t = 0; t < f.frames.rows(); ++t, ++counter)
              if (counter % stride == 0) keep.push_back(t);
            if (keep.empty()) continue;
            FeatureMatrix s;
            s.frame_shift = f.frame_shift;
            s.frames = f.frames(keep, Eigen::all);
            subset.push_back(std::move(s));
          }
          std::vector<double> history;
          const GmmModel ubm = TrainUbm(subset, config.Ubm(), &history);
          WriteGmm(dir / "ubm.ivgm", ubm);
          WriteHistory(dir / "loglike.txt", history);
        },
        &h_ubm);

    // Scaled Baum-Welch statistics, plus excerpt statistics for dev pairs.
    std::string h_stats;
    const fs::path stats_dir = runner.Run(
        chain, "stats",
        h_ubm + "scale=" + Num(config.gmm.stats_scale) +
            " excerpt=" + Num(config.transforms.excerpt_seconds) +
            " seed=" + std::to_string(config.transforms.seed),
        [&](const fs::path &dir) {
          const GmmModel ubm = ReadGmm(ubm_dir / "ubm.ivgm");
          std::ostringstream index;
          index << std::setprecision(10);
          for (const auto &[id, d] : available) {
            const FeatureMatrix f = LoadSpeech(feat_dir, id);
            WriteStats(dir / (id + ".ivst"),
                       ScaleStats(AccumulateStats(ubm, f, id), config.gmm.stats_scale));
            if (utts.at(id).part != "dev") continue;
            std::mt19937_64 rng(Fnv1a(id, config.transforms.seed));
            const FeatureMatrix ex = SpeechExcerpt(f, config.transforms.excerpt_seconds, &rng);
            const std::string xid = id + "__x";
            WriteStats(dir / (xid + ".ivst"),
                       ScaleStats(AccumulateStats(ubm, ex, xid), config.gmm.stats_scale));
            index << xid << ' ' << ex.NumFrames() * ex.frame_shift << '\n';
          }
          WriteTextAtomic(dir / "excerpts.txt", index.str());
        },
        &h_stats);

    std::string h_tv;
    const fs::path tv_dir = runner.Run(
        chain, "tv", h_stats + DumpFields(fields, "ivector"),
        [&](const fs::path &dir) {
          const GmmModel ubm = ReadGmm(ubm_dir / "ubm.ivgm");
          std::vector<SuffStats> stats;
          for (const auto &id : bg_ids) stats.push_back(ReadStats(stats_dir / (id + ".ivst")));
          std::vector<double> history;
          const TvModel tv = TrainTv(stats, ubm, config.Tv(), &history);
          WriteTv(dir / "tv.ivtv", tv);
          WriteHistory(dir / "objective.txt", history);
        },
        &h_tv);
    fs::create_directories(out_dir / chain / "models");
    fs::copy_file(ubm_dir / "ubm.ivgm", out_dir / chain / "models" / "ubm.ivgm",
                  fs::copy_options::overwrite_existing);
    fs::copy_file(tv_dir / "tv.ivtv", out_dir / chain / "models" / "tv.ivtv",
                  fs::copy_options::overwrite_existing);

    std::string h_ivec;
    const fs::path ivec_dir = runner.Run(
        chain, "ivectors", h_tv,
        [&](const fs::path &dir) {
          const GmmModel ubm = ReadGmm(ubm_dir / "ubm.ivgm");
          const IvectorExtractor extractor(ReadTv(tv_dir / "tv.ivtv"), ubm);
          auto emit = [&](const std::string &id, const UttInfo &info, double duration) {
            Embedding e = ExtractIvector(ReadStats(stats_dir / (id + ".ivst")), extractor);
            const ManifestEntry &m = *info.entry;
            e.speaker = info.part == "dev" ? "" : m.Attr("speaker");
            e.language = info.part == "train" ? m.Attr("language") : "";
            e.domain = m.Attr("domain", "out") == "in" ? Domain::kIn : Domain::kOut;
            e.speech_duration = duration;
            WriteEmbedding(dir / IvecName(id), e);
          };
          const auto excerpts = ReadIndex(stats_dir / "excerpts.txt");
          for (const auto &[id, d] : available) emit(id, utts.at(id), d);
          for (const auto &[xid, d] : excerpts) emit(xid, utts.at(xid.substr(0, xid.size() - 3)), d);
        },
        &h_ivec);

    // Whitening, NDA/LDA, short-duration LDA + WCCN, LN-LDA, length norm.
    std::string h_tr;
    const fs::path tr_dir = runner.Run(
        chain, "transforms", h_ivec + DumpFields(fields, "transforms"),
        [&](const fs::path &dir) {
          const auto train = LoadEmbeddings(ivec_dir, train_ids);
          const auto dev = LoadEmbeddings(ivec_dir, dev_ids);
          std::vector<std::string> xids;
          for (const auto &id : dev_ids) xids.push_back(id + "__x");
          const auto dev_x = LoadEmbeddings(ivec_dir, xids);
          std::vector<std::string> spk, lang;
          for (const auto &e : train) {
            spk.push_back(e.speaker);
            lang.push_back(e.language);
          }
          const auto spk_labels = DenseLabels(spk);
          const auto lang_labels = DenseLabels(lang);

          std::vector<LinearTransform> chain_tr;
          std::vector<fs::path> files;
          auto push = [&](LinearTransform t, const std::string &name) {
            WriteTransform(dir / (name + ".ivtr"), t);
            files.push_back(name + ".ivtr");
            chain_tr.push_back(std::move(t));
          };
          std::vector<Embedding> bg = train;
          bg.insert(bg.end(), dev.begin(), dev.end());
          push(FitCenterWhiten(StackEmbeddings(bg)), "whiten");
          const Matrix train_w = StackEmbeddings(ApplyAll(chain_tr, train));
          const auto &tr = config.transforms;
          if (tr.use_lda) push(FitLda(train_w, spk_labels, tr.nda_dim), "lda");
          else push(FitNda(train_w, spk_labels, tr.nda_k, tr.nda_dim, tr.nda_alpha), "nda");
          if (tr.shortcomp) {
            const ShortDurationComp sc =
                FitShortDurationComp(StackEmbeddings(ApplyAll(chain_tr, dev)),
                                     StackEmbeddings(ApplyAll(chain_tr, dev_x)),
                                     tr.shortcomp_dim, tr.wccn_first);
            if (tr.wccn_first) {
              push(sc.wccn, "sc_wccn");
              push(sc.lda, "sc_lda");
            } else {
              push(sc.lda, "sc_lda");
              push(sc.wccn, "sc_wccn");
            }
          }
          if (tr.lnlda)
            push(FitLnLda(StackEmbeddings(ApplyAll(chain_tr, train)), spk_labels, lang_labels,
                          tr.lnlda_dim),
                 "lnlda");
          push(LengthNormTransform(chain_tr.back().out_dim), "lengthnorm");
          WriteChain(dir / "chain.txt", files);
          fs::create_directories(dir / "emb");
          for (const auto *ids : {&train_ids, &dev_ids, &eval_ids})
            for (const auto &e : ApplyAll(chain_tr, LoadEmbeddings(ivec_dir, *ids)))
              WriteEmbedding(dir / "emb" / IvecName(e.id), e);
        },
        &h_tr);
    const fs::path emb_dir = tr_dir / "emb";

    std::string h_plda;
    const fs::path plda_dir = runner.Run(
        chain, "plda",
        h_tr + "F=" +
            std::to_string(config.plda.num_factors) + " iters=" +
            std::to_string(config.plda.num_iters) + " seed=" + std::to_string(config.plda.seed) + " aligned init=" +
            config.plda.in_domain_init,
        [&](const fs::path &dir) {
          const auto train = LoadEmbeddings(emb_dir, train_ids);
          std::vector<std::string> spk;
          for (const auto &e : train) spk.push_back(e.speaker);
          std::vector<double> h_out, h_in;
          PldaModel out = TrainPlda(StackEmbeddings(train), DenseLabels(spk), config.Plda(), &h_out);
          out.domain = PldaDomain::kOut;
          const auto dev = LoadEmbeddings(emb_dir, dev_ids);
          std::vector<int> singletons(dev.size());
          std::iota(singletons.begin(), singletons.end(), 0);
          const bool warm = config.plda.in_domain_init == "out";
          PldaModel in = AlignFactors(TrainPlda(StackEmbeddings(dev), singletons, config.Plda(),
                                                &h_in, warm ? &out : nullptr),
                                      out.v);
          in.domain = PldaDomain::kIn;
          WritePlda(dir / "plda_out.ivpl", out);
          WritePlda(dir / "plda_in.ivpl", in);
          WriteHistory(dir / "loglike_out.txt", h_out);
          WriteHistory(dir / "loglike_in.txt", h_in);
        },
        &h_plda);

    std::string h_adapt;
    const fs::path adapt_dir = runner.Run(
        chain, "adapt",
        h_plda + "adapt=" + (config.plda.adapt ? "1" : "0") +
            " alpha=" + Num(config.plda.alpha) +
            " mean=" + (config.plda.interpolate_mean ? "1" : "0"),
        [&](const fs::path &dir) {
          const PldaModel out = ReadPlda(plda_dir / "plda_out.ivpl");
          const PldaModel model =
              config.plda.adapt ? AdaptPlda(ReadPlda(plda_dir / "plda_in.ivpl"), out,
                                            config.plda.alpha, config.plda.interpolate_mean)
                                : out;
          WritePlda(dir / "plda.ivpl", model);
          WriteKernel(dir / "kernel.ivkn", BuildKernel(model));
        },
        &h_adapt);

    std::map<std::string, Embedding> tests;
    for (const auto &e : LoadEmbeddings(emb_dir, eval_ids)) tests.emplace(e.id, e);

    std::string h_scores;
    const fs::path score_dir = runner.Run(
        chain, "scores",
        h_adapt + "snorm=" + (config.postprocess.snorm ? "1" : "0") + " mode=" +
            config.postprocess.snorm_mode,
        [&](const fs::path &dir) {
          const ScoringKernel kernel = ReadKernel(adapt_dir / "kernel.ivkn");
          std::map<std::string, Embedding> models;
          for (const auto &[model, segs] : corpus.enrol) {
            std::vector<Embedding> parts;
            for (const auto &s : segs) {
              auto it = tests.find(s);
              if (it == tests.end()) throw DataError("enrolment segment '" + s + "' has no embedding");
              parts.push_back(it->second);
            }
            models.emplace(model, Enroll(parts, model));
          }
          const auto raw = ScoreTrials(kernel, models, tests, corpus.key);
          WriteScores(dir / "raw.scores", raw);
          if (config.postprocess.snorm) {
            const Matrix cohort = StackEmbeddings(LoadEmbeddings(emb_dir, dev_ids));
            WriteScores(dir / "norm.scores",
                        SnormTrials(kernel, raw, models, tests, cohort,
                                    ParseSnormMode(config.postprocess.snorm_mode)));
          } else {
            WriteScores(dir / "norm.scores", raw);
          }
        },
        &h_scores);

    std::string h_qmf;
    const fs::path qmf_dir = runner.Run(
        chain, "qmf",
        h_scores + "qmf=" + (config.postprocess.qmf ? "1" : "0") +
            " coeff=" + Num(config.postprocess.qmf_coeff),
        [&](const fs::path &dir) {
          auto scores = ReadScores(score_dir / "norm.scores");
          if (config.postprocess.qmf)
            for (auto &s : scores)
              s.score = ApplyQmf(s.score, tests.at(s.test_id).speech_duration,
                                 config.postprocess.qmf_coeff);
          WriteScores(dir / "qmf.scores", scores);
        },
        &h_qmf);
    final_scores[chain] = ReadScores(qmf_dir / "qmf.scores");
    qmf_hashes.push_back(h_qmf);
  }

  // Calibration and metrics are cheap and always recomputed.
  std::string results_input = DumpFields(fields, "postprocess");
  for (const auto &h : qmf_hashes) results_input += h;
  result.results_dir = out_dir / ("results-" + HexDigest(Fnv1a(results_input)));
  fs::create_directories(result.results_dir);
  std::vector<std::pair<std::string, std::vector<TrialScore>>> systems(final_scores.begin(),
                                                                      final_scores.end());
  if (systems.size() > 1) {
    std::vector<TrialScore> fused = systems[0].second;
    for (std::size_t i = 1; i < systems.size(); ++i) fused = Fuse(fused, systems[i].second);
    systems.emplace_back("fusion", std::move(fused));
  }
  const auto &pp = config.postprocess;
  std::ostringstream summary;
  try {
    for (const auto &[name, scores] : systems) {
      SystemResult sr;
      sr.name = name;
      const auto calibrated = CalibrateFolds(scores, corpus.key, pp, &sr.calibration);
      std::vector<double> values;
      std::vector<bool> labels;
      JoinWithKey(calibrated, corpus.key, &values, &labels);
      sr.metrics = ComputeMetrics(values, labels, pp.p_tar, pp.c_miss, pp.c_fa);
      WriteScores(result.results_dir / (name + ".llr.scores"), calibrated);
      WriteTextAtomic(result.results_dir / (name + ".metrics.txt"), FormatMetrics(sr.metrics));
      WriteDetPoints(result.results_dir / (name + ".det.txt"), sr.metrics);
      WriteCalibration(result.results_dir / (name + ".ivca"), sr.calibration);
      result.systems.push_back(std::move(sr));
    }
  } catch (...) {
    RethrowWithPrefix("stage calibration/metrics: ");
  }
  WriteTextAtomic(result.results_dir / "summary.txt", FormatRunSummary(result));
  return result;
}

std::string FormatRunSummary(const RunResult &r) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "# system eer min_cdet act_cdet min_cdet_norm act_cdet_norm\n";
  for (const auto &s : r.systems)
    os << s.name << ' ' << s.metrics.eer << ' ' << s.metrics.min_cdet << ' ' << s.metrics.act_cdet
       << ' ' << s.metrics.min_cdet_norm << ' ' << s.metrics.act_cdet_norm << '\n';
  os << "# stages\n";
  for (const auto &s : r.stages)
    os << s.chain << '/' << s.stage << ' ' << s.hash << (s.cache_hit ? " cached" : " computed")
       << '\n';
  return os.str();
}

std::vector<TimingRow> TimingReport(const PipelineConfig &config, const std::string &chain,
                                    const GmmModel &ubm, const TvModel &tv,
                                    const AudioSegment &enrol, const AudioSegment &test) {
  if (chain != "mfcc" && chain != "plp") throw ConfigError("unknown chain '" + chain + "'");
  const SadModel sad = config.Sad();
  // Model set-up happens once per trial and is not attributed to a segment.
  const IvectorExtractor extractor(tv, ubm);
  std::vector<TimingRow> rows;
  for (const auto &[name, audio] :
       {std::pair<std::string, const AudioSegment *>{"enrolment", &enrol}, {"test", &test}}) {
    const double seconds = audio->samples.size() / audio->sample_rate;
    TimingRow feat_row{name, "features", seconds};
    FeatureMatrix feats;
    {
      Timer t;
      feats = chain == "mfcc" ? ExtractMfcc(*audio, config.Mfcc()) : ExtractPlp(*audio, config.Plp());
      feats = StCmvn(feats, config.Cmvn());
      t.Stop(&feat_row);
    }
    TimingRow sad_row{name, "SAD", seconds};
    FeatureMatrix speech;
    {
      Timer t;
      const FeatureMatrix fbank = ExtractFbank(*audio, config.Fbank());
      const auto mask = DetectSpeech(fbank, sad);
      speech = ApplyMask(feats, AlignMask(mask, feats.NumFrames()));
      t.Stop(&sad_row);
    }
    TimingRow iv_row{name, "i-vectors", seconds};
    {
      Timer t;
      const SuffStats stats =
          ScaleStats(AccumulateStats(ubm, speech, audio->id), config.gmm.stats_scale);
      const Embedding e = ExtractIvector(stats, extractor);
      t.Stop(&iv_row);
      if (!e.w.allFinite()) throw NumericalError("timing: non-finite i-vector");
    }
    rows.push_back(feat_row);
    rows.push_back(sad_row);
    rows.push_back(iv_row);
  }
  return rows;
}

std::string FormatTiming(const std::vector<TimingRow> &rows) {
  std::ostringstream os;
  os << std::left << std::setw(10) << "segment" << std::setw(11) << "stage" << std::right
     << std::setw(9) << "audio_s" << std::setw(10) << "user_s" << std::setw(10) << "sys_s"
     << std::setw(10) << "real_s" << std::setw(13) << "peak_rss_kb" << '\n';
  os << std::fixed;
  for (const auto &r : rows)
    os << std::left << std::setw(10) << r.segment << std::setw(11) << r.stage << std::right
       << std::setprecision(1) << std::setw(9) << r.seconds_audio << std::setprecision(4)
       << std::setw(10) << r.user << std::setw(10) << r.sys << std::setw(10) << r.real
       << std::setw(13) << r.peak_rss_kb << '\n';
  return os.str();
}

}  // namespace ivpipe
