// include/ivpipe/synth.h

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

#ifndef IVPIPE_SYNTH_H_
#define IVPIPE_SYNTH_H_

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ivpipe/common.h"
#include "ivpipe/config.h"
#include "ivpipe/frontend.h"

namespace ivpipe {

// Language-level acoustic shift: spectral tilt plus formant offsets (Hz).
struct LanguageSpec {
  double tilt = 0.0;
  std::array<double, 3> formant_offset{0.0, 0.0, 0.0};
  unsigned phone_seed = 0;  // draws the language's phone-usage distribution
};

struct PartitionSpec {
  int num_speakers = 0;
  int segments_per_speaker = 0;
  std::string languages;  // comma-separated language names
  std::string domain = "out";
  double min_duration = 10.0;  // seconds of audio
  double max_duration = 20.0;
  int enrol_segments = 0;      // eval only: leading segments used for enrolment
  // Per-segment handset response (two random peaking filters, gain std
  // 9 dB * scale). Nonzero only in-domain, so out-of-domain models never
  // see this session variability.
  double handset_scale = 0.0;
  // Multiplies SynthSpec::speaker_scale for speakers of this partition.
  double speaker_spread = 1.0;
};

// Filtered-noise "speech": each speaker owns a formant scaling, per-phone
// formant offsets, a spectral tilt and a pitch; each segment gets a random
// channel (gain, tilt, additive noise). speaker_scale = 0 makes every
// speaker identical.
struct SynthSpec {
  unsigned seed = 1;
  double sample_rate = 8000.0;
  double speaker_scale = 1.5;
  double channel_scale = 1.0;
  double silence_fraction = 0.2;
  double silence_level = 1e-3;  // silence amplitude relative to speech RMS
  double snr_db = 30.0;
  int num_phones = 16;
  PartitionSpec train{60, 5, "L0,L1", "out", 10.0, 20.0, 0, 0.0};
  PartitionSpec dev{200, 1, "L2,L3", "in", 10.0, 20.0, 0, 0.5};
  PartitionSpec eval{50, 8, "L2,L3", "in", 9.0, 30.0, 3, 0.5};
  std::map<std::string, LanguageSpec> languages = {
      {"L0", {0.00, {0.0, 0.0, 0.0}, 1}},
      {"L1", {0.10, {40.0, -80.0, 60.0}, 2}},
      {"L2", {-0.25, {-60.0, 150.0, -120.0}, 3}},
      {"L3", {-0.15, {30.0, 220.0, -40.0}, 4}},
  };

  std::vector<ConfigField> Fields();
  void Validate() const;
  // Indistinguishable-speaker variant: speaker_scale 0 and a single eval
  // language, so target and nontarget trials share every source.
  SynthSpec Control() const;
  static SynthSpec Load(const std::filesystem::path &path);
  std::string Dump();
};

struct SynthUtterance {
  AudioSegment audio;
  std::string speaker;
  std::string language;
  std::vector<bool> speech;  // per sample ground truth
};

// One utterance; deterministic in (spec, partition, speaker, index).
SynthUtterance SynthesizeUtterance(const SynthSpec &spec, const std::string &speaker,
                                   const std::string &language, const std::string &utt_id,
                                   double duration, double handset_scale = 0.0,
                                   double speaker_spread = 1.0);

// Speech regions [start, end) in seconds from a per-sample mask.
std::vector<std::pair<double, double>> MaskToSegments(const std::vector<bool> &speech,
                                                      double sample_rate);

// Writes wav/, truth/, train.list, dev.list, eval.list, eval_enrol.txt,
// eval.key and spec.txt under `out`.
void GenerateCorpus(const SynthSpec &spec, const std::filesystem::path &out);

}  // namespace ivpipe

#endif  // IVPIPE_SYNTH_H_
