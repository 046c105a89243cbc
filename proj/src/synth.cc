// src/synth.cc

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

#include "ivpipe/synth.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "ivpipe/io.h"

namespace ivpipe {

namespace {

constexpr double kPi = std::numbers::pi;

struct Phone {
  std::array<double, 3> formants;
  bool voiced;
};

struct SpeakerTraits {
  double warp = 1.0;  // formant scaling
  double f0 = 120.0;
  double tilt = 0.0;
  double breath = 0.2;
  std::vector<std::array<double, 3>> phone_offsets;
};

std::uint64_t SeedFor(const SynthSpec &spec, const std::string &tag) {
  return Fnv1a(tag, Fnv1a(&spec.seed, sizeof(spec.seed)));
}

std::vector<Phone> PhoneInventory(const SynthSpec &spec) {
  std::mt19937_64 rng(SeedFor(spec, "phones"));
  std::uniform_real_distribution<double> f1(250.0, 850.0), f2(850.0, 2300.0), f3(2300.0, 3300.0);
  std::vector<Phone> phones(spec.num_phones);
  for (int p = 0; p < spec.num_phones; ++p) {
    phones[p].formants = {f1(rng), f2(rng), f3(rng)};
    phones[p].voiced = p % 4 != 3;
  }
  return phones;
}

SpeakerTraits DrawSpeaker(const SynthSpec &spec, const std::string &speaker, double spread) {
  std::mt19937_64 rng(SeedFor(spec, "speaker:" + speaker));
  std::normal_distribution<double> g(0.0, 1.0);
  const double s = spec.speaker_scale * spread;
  SpeakerTraits t;
  t.warp = std::exp(0.10 * s * g(rng));
  t.f0 = 120.0 * std::exp(0.25 * s * g(rng));
  t.tilt = 0.25 * s * g(rng);
  t.breath = std::clamp(0.2 + 0.1 * s * g(rng), 0.02, 0.6);
  t.phone_offsets.resize(spec.num_phones);
  for (auto &o : t.phone_offsets)
    for (double &v : o) v = 80.0 * s * g(rng);
  return t;
}

std::vector<double> PhoneWeights(const SynthSpec &spec, const LanguageSpec &lang) {
  std::mt19937_64 rng(SeedFor(spec, "language:" + std::to_string(lang.phone_seed)));
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(spec.num_phones);
  for (double &v : w) v = std::exp(0.8 * g(rng));
  return w;
}

// Two-pole resonator with state carried across phones.
struct Resonator {
  double a1 = 0.0, a2 = 0.0, gain = 1.0, y1 = 0.0, y2 = 0.0;

  void Set(double freq, double bandwidth, double rate) {
    const double r = std::exp(-kPi * bandwidth / rate);
    a1 = 2.0 * r * std::cos(2.0 * kPi * freq / rate);
    a2 = -r * r;
    gain = 1.0 - r * r;
  }
  double Step(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

// Peaking equalizer biquad (direct form I).
struct Peaking {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;
  double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;

  Peaking(double freq, double gain_db, double q, double rate) {
    const double a = std::pow(10.0, gain_db / 40.0);
    const double w = 2.0 * kPi * freq / rate;
    const double alpha = std::sin(w) / (2.0 * q);
    const double a0 = 1.0 + alpha / a;
    b0 = (1.0 + alpha * a) / a0;
    b1 = -2.0 * std::cos(w) / a0;
    b2 = (1.0 - alpha * a) / a0;
    a1 = b1;
    a2 = (1.0 - alpha / a) / a0;
  }
  double Step(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

std::vector<ConfigField> SynthSpec::Fields() {
  std::vector<ConfigField> f = {
      {"corpus", "seed", &seed},
      {"corpus", "sample_rate", &sample_rate},
      {"corpus", "speaker_scale", &speaker_scale},
      {"corpus", "channel_scale", &channel_scale},
      {"corpus", "silence_fraction", &silence_fraction},
      {"corpus", "silence_level", &silence_level},
      {"corpus", "snr_db", &snr_db},
      {"corpus", "num_phones", &num_phones},
  };
  for (auto [name, p] : {std::pair<const char *, PartitionSpec *>{"train", &train},
                         {"dev", &dev},
                         {"eval", &eval}}) {
    f.push_back({name, "num_speakers", &p->num_speakers});
    f.push_back({name, "segments_per_speaker", &p->segments_per_speaker});
    f.push_back({name, "languages", &p->languages});
    f.push_back({name, "domain", &p->domain});
    f.push_back({name, "min_duration", &p->min_duration});
    f.push_back({name, "max_duration", &p->max_duration});
    f.push_back({name, "enrol_segments", &p->enrol_segments});
    f.push_back({name, "handset_scale", &p->handset_scale});
    f.push_back({name, "speaker_spread", &p->speaker_spread});
  }
  return f;
}

std::string SynthSpec::Dump() {
  std::ostringstream os;
  os << DumpFields(Fields()) << "\n[languages]\n";
  os << std::setprecision(17);
  for (const auto &[name, l] : languages)
    os << name << " = \"" << l.tilt << ' ' << l.formant_offset[0] << ' ' << l.formant_offset[1]
       << ' ' << l.formant_offset[2] << ' ' << l.phone_seed << "\"\n";
  return os.str();
}

void SynthSpec::Validate() const {
  auto require = [](bool ok, const std::string &msg) {
    if (!ok) throw ConfigError("corpus spec: " + msg);
  };
  require(sample_rate > 0.0, "sample_rate must be positive");
  require(speaker_scale >= 0.0 && channel_scale >= 0.0 && train.handset_scale >= 0.0 &&
              dev.handset_scale >= 0.0 && eval.handset_scale >= 0.0 &&
              train.speaker_spread >= 0.0 && dev.speaker_spread >= 0.0 &&
              eval.speaker_spread >= 0.0,
          "variance scales must be non-negative");
  require(silence_fraction >= 0.0 && silence_fraction < 0.9, "silence_fraction must lie in [0, 0.9)");
  require(num_phones >= 2, "num_phones must be at least 2");
  for (auto [name, p] : {std::pair<const char *, const PartitionSpec *>{"train", &train},
                         {"dev", &dev},
                         {"eval", &eval}}) {
    const std::string n = name;
    require(p->num_speakers >= 1 && p->segments_per_speaker >= 1,
            n + " needs at least one speaker and one segment");
    require(p->min_duration >= 9.0 && p->max_duration <= 140.0 &&
                p->min_duration <= p->max_duration,
            n + " durations must lie within [9, 140] seconds");
    require(p->domain == "in" || p->domain == "out", n + ".domain must be 'in' or 'out'");
    const auto langs = SplitList(p->languages);
    require(!langs.empty(), n + " needs at least one language");
    for (const auto &l : langs)
      require(languages.count(l) == 1, n + " uses undefined language '" + l + "'");
  }
  require(eval.enrol_segments >= 1 && eval.enrol_segments < eval.segments_per_speaker,
          "eval.enrol_segments must leave at least one test segment");
}

SynthSpec SynthSpec::Load(const std::filesystem::path &path) {
  SynthSpec spec;
  std::vector<IniEntry> rest;
  for (auto &e : ParseIni(ReadText(path), path.string())) {
    if (e.section != "languages") {
      rest.push_back(e);
      continue;
    }
    std::istringstream is(e.value);
    LanguageSpec l;
    if (!(is >> l.tilt >> l.formant_offset[0] >> l.formant_offset[1] >> l.formant_offset[2] >>
          l.phone_seed))
      throw ConfigError(path.string() + ":" + std::to_string(e.line) +
                        ": language needs 'tilt f1 f2 f3 phone_seed'");
    spec.languages[e.key] = l;
  }
  ApplyIni(spec.Fields(), rest);
  spec.Validate();
  return spec;
}

SynthSpec SynthSpec::Control() const {
  SynthSpec c = *this;
  c.speaker_scale = 0.0;
  c.eval.languages = SplitList(eval.languages).at(0);
  return c;
}

SynthUtterance SynthesizeUtterance(const SynthSpec &spec, const std::string &speaker,
                                   const std::string &language, const std::string &utt_id,
                                   double duration, double handset_scale,
                                   double speaker_spread) {
  const auto lang_it = spec.languages.find(language);
  if (lang_it == spec.languages.end()) throw ConfigError("undefined language '" + language + "'");
  const LanguageSpec &lang = lang_it->second;
  const auto phones = PhoneInventory(spec);
  const SpeakerTraits traits = DrawSpeaker(spec, speaker, speaker_spread);
  const auto weights = PhoneWeights(spec, lang);

  std::mt19937_64 rng(SeedFor(spec, "utt:" + utt_id));
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  const double rate = spec.sample_rate;
  const auto total = static_cast<std::size_t>(duration * rate);

  SynthUtterance out;
  out.speaker = speaker;
  out.language = language;
  out.audio.id = utt_id;
  out.audio.sample_rate = rate;
  std::vector<double> x(total, 0.0);
  out.speech.assign(total, false);

  // Words of 0.4-1.5 s separated by gaps sized to hit the silence fraction.
  const double sf = spec.silence_fraction;
  const double mean_word = 0.95;
  const double mean_gap = sf > 0.0 ? mean_word * sf / (1.0 - sf) : 0.0;
  std::array<Resonator, 3> res;
  const std::array<double, 3> bandwidth{90.0, 110.0, 170.0};
  std::size_t n = static_cast<std::size_t>(mean_gap * 0.5 * u(rng) * rate);
  double pulse_phase = 0.0;
  while (n < total) {
    const std::size_t word_end =
        std::min(total, n + static_cast<std::size_t>((0.4 + 1.1 * u(rng)) * rate));
    const double word_gain = std::exp(0.2 * g(rng));
    while (n < word_end) {
      const int p = pick(rng);
      const Phone &ph = phones[p];
      for (int k = 0; k < 3; ++k) {
        const double f = std::clamp(
            (ph.formants[k] + lang.formant_offset[k] + traits.phone_offsets[p][k]) * traits.warp,
            150.0, 0.45 * rate);
        res[k].Set(f, bandwidth[k], rate);
      }
      const std::size_t ph_end =
          std::min(word_end, n + static_cast<std::size_t>((0.06 + 0.10 * u(rng)) * rate));
      for (; n < ph_end; ++n) {
        double e;
        if (ph.voiced) {
          const double period = rate / (traits.f0 * (1.0 + 0.02 * g(rng)));
          pulse_phase += 1.0;
          double pulse = 0.0;
          if (pulse_phase >= period) {
            pulse_phase -= period;
            pulse = std::sqrt(period);
          }
          e = pulse + traits.breath * g(rng);
        } else {
          e = g(rng);
        }
        double y = e;
        for (auto &r : res) y = r.Step(y);
        x[n] = word_gain * y;
        out.speech[n] = true;
      }
    }
    n += sf > 0.0 ? static_cast<std::size_t>((0.5 + u(rng)) * mean_gap * rate) : 0;
  }

  double speech_power = 0.0;
  std::size_t speech_count = 0;
  for (std::size_t i = 0; i < total; ++i)
    if (out.speech[i]) speech_power += x[i] * x[i], ++speech_count;
  const double rms = speech_count ? std::sqrt(speech_power / speech_count) : 1.0;

  // Spectral tilt from speaker, language and channel, then channel gain and
  // noise.
  const double channel_tilt = 0.15 * spec.channel_scale * g(rng);
  const double tilt = std::clamp(traits.tilt + lang.tilt + channel_tilt, -0.9, 0.9);
  const double channel_gain = std::exp(0.3 * spec.channel_scale * g(rng));
  const double noise = rms * std::pow(10.0, -spec.snr_db / 20.0);
  const double silence = rms * spec.silence_level;
  auto &samples = out.audio.samples;
  samples.resize(total);
  // Separate stream so handset_scale = 0 leaves every other draw unchanged.
  std::mt19937_64 handset_rng(SeedFor(spec, "handset:" + utt_id));
  std::vector<Peaking> handset;
  if (handset_scale > 0.0)
    for (int k = 0; k < 2; ++k) {
      const double freq = 300.0 + 0.4 * rate * u(handset_rng) * 0.9;
      handset.emplace_back(freq, 9.0 * handset_scale * g(handset_rng), 1.5, rate);
    }
  double prev = 0.0, peak = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    double v = x[i] - tilt * prev + (out.speech[i] ? 0.0 : silence * g(rng));
    prev = x[i];
    for (auto &h : handset) v = h.Step(v);
    samples[i] = channel_gain * v + noise * g(rng);
    peak = std::max(peak, std::abs(samples[i]));
  }
  if (peak > 0.0)
    for (double &s : samples) s *= 0.5 / peak;
  return out;
}

std::vector<std::pair<double, double>> MaskToSegments(const std::vector<bool> &speech,
                                                      double sample_rate) {
  std::vector<std::pair<double, double>> out;
  std::size_t i = 0;
  while (i < speech.size()) {
    if (!speech[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < speech.size() && speech[j]) ++j;
    out.emplace_back(i / sample_rate, j / sample_rate);
    i = j;
  }
  return out;
}

void GenerateCorpus(const SynthSpec &spec_in, const std::filesystem::path &out) {
  SynthSpec spec = spec_in;
  spec.Validate();
  std::filesystem::create_directories(out / "wav");
  std::filesystem::create_directories(out / "truth");
  std::vector<TrialKey> key;
  std::ostringstream enrol;
  for (auto [name, part] : {std::pair<std::string, const PartitionSpec *>{"train", &spec.train},
                            {"dev", &spec.dev},
                            {"eval", &spec.eval}}) {
    const std::string prefix = name == "train" ? "tr" : name == "dev" ? "dv" : "ev";
    const auto langs = SplitList(part->languages);
    std::mt19937_64 rng(SeedFor(spec, "durations:" + name));
    std::uniform_real_distribution<double> dur(part->min_duration, part->max_duration);
    std::vector<ManifestEntry> manifest;
    for (int s = 0; s < part->num_speakers; ++s) {
      std::ostringstream spk;
      spk << prefix << "_s" << std::setw(3) << std::setfill('0') << s;
      const std::string &lang = langs[s % langs.size()];
      for (int k = 0; k < part->segments_per_speaker; ++k) {
        const std::string id = spk.str() + "_u" + std::to_string(k);
        const double duration = dur(rng);
        const SynthUtterance utt =
            SynthesizeUtterance(spec, spk.str(), lang, id, duration,
                                                       part->handset_scale, part->speaker_spread);
        WriteWav(out / "wav" / (id + ".wav"), utt.audio);
        std::ostringstream truth;
        truth << std::setprecision(10);
        for (const auto &[b, e] : MaskToSegments(utt.speech, spec.sample_rate))
          truth << b << ' ' << e << '\n';
        WriteTextAtomic(out / "truth" / (id + ".txt"), truth.str());
        std::ostringstream d;
        d << std::setprecision(10) << duration;
        manifest.push_back({id, "wav/" + id + ".wav",
                            {{"speaker", spk.str()},
                             {"language", lang},
                             {"domain", part->domain},
                             {"duration", d.str()}}});
      }
      if (name == "eval") {
        enrol << spk.str();
        for (int k = 0; k < part->enrol_segments; ++k) enrol << ' ' << spk.str() << "_u" << k;
        enrol << '\n';
      }
    }
    WriteManifest(out / (name + ".list"), manifest);
    if (name == "eval") {
      for (int m = 0; m < part->num_speakers; ++m)
        for (const auto &e : manifest) {
          const std::string model = manifest[m * part->segments_per_speaker].attrs.at("speaker");
          const int k = std::stoi(e.id.substr(e.id.rfind("_u") + 2));
          if (k < part->enrol_segments) continue;
          key.push_back({model, e.id, e.attrs.at("speaker") == model});
        }
    }
  }
  WriteTextAtomic(out / "eval_enrol.txt", enrol.str());
  WriteKey(out / "eval.key", key);
  WriteTextAtomic(out / "spec.txt", spec.Dump());
}

}  // namespace ivpipe
