// src/frontend.cc

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

#include "ivpipe/frontend.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "ivpipe/io.h"

namespace ivpipe {

namespace fs = std::filesystem;
using std::numbers::pi;

// ---------------------------------------------------------------------------
// WAV

namespace {

std::uint32_t Le32(const unsigned char *p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t Le16(const unsigned char *p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

}  // namespace

AudioSegment ReadWav(const fs::path &path, double expected_rate) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open wav: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  auto bad = [&](const std::string &why) {
    return DataError("bad wav " + path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw bad("not a RIFF/WAVE file");
  std::size_t pos = 12;
  int channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  const unsigned char *data = nullptr;
  std::size_t data_size = 0;
  while (pos + 8 <= bytes.size()) {
    std::uint32_t size = Le32(&bytes[pos + 4]);
    const unsigned char *body = &bytes[pos + 8];
    if (pos + 8 + size > bytes.size()) size = static_cast<std::uint32_t>(bytes.size() - pos - 8);
    if (std::memcmp(&bytes[pos], "fmt ", 4) == 0) {
      if (size < 16) throw bad("short fmt chunk");
      format = Le16(body);
      channels = Le16(body + 2);
      rate = Le32(body + 4);
      bits = Le16(body + 14);
    } else if (std::memcmp(&bytes[pos], "data", 4) == 0) {
      data = body;
      data_size = size;
    }
    pos += 8 + size + (size & 1);
  }
  if (format != 1 || bits != 16) throw bad("only PCM16 is supported");
  if (channels != 1) throw bad("only mono is supported");
  if (!data) throw bad("missing data chunk");
  if (static_cast<double>(rate) != expected_rate)
    throw bad("sample rate " + std::to_string(rate) + " != expected " +
              std::to_string(static_cast<int>(expected_rate)));
  AudioSegment audio;
  audio.sample_rate = rate;
  audio.id = path.stem().string();
  audio.samples.resize(data_size / 2);
  for (std::size_t i = 0; i < audio.samples.size(); ++i)
    audio.samples[i] = static_cast<std::int16_t>(Le16(data + 2 * i)) / 32768.0;
  return audio;
}

void WriteWav(const fs::path &path, const AudioSegment &audio) {
  std::string buf;
  auto put32 = [&](std::uint32_t v) { buf.append(reinterpret_cast<const char *>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { buf.append(reinterpret_cast<const char *>(&v), 2); };
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  const auto rate = static_cast<std::uint32_t>(audio.sample_rate);
  buf += "RIFF";
  put32(36 + 2 * n);
  buf += "WAVEfmt ";
  put32(16);
  put16(1);
  put16(1);
  put32(rate);
  put32(rate * 2);
  put16(2);
  put16(16);
  buf += "data";
  put32(2 * n);
  for (double s : audio.samples) {
    double v = std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0;
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v))));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw DataError("cannot write wav: " + path.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Framing

WindowType ParseWindowType(const std::string &name) {
  if (name == "hamming") return WindowType::kHamming;
  if (name == "hanning") return WindowType::kHanning;
  if (name == "povey") return WindowType::kPovey;
  if (name == "rectangular") return WindowType::kRectangular;
  throw ConfigError("unknown window type: " + name);
}

std::string WindowTypeName(WindowType w) {
  switch (w) {
    case WindowType::kHamming: return "hamming";
    case WindowType::kHanning: return "hanning";
    case WindowType::kPovey: return "povey";
    case WindowType::kRectangular: return "rectangular";
  }
  return "hamming";
}

int FrameOptions::FrameLengthSamples(double rate) const {
  return static_cast<int>(std::lround(frame_length * rate));
}

int FrameOptions::FrameShiftSamples(double rate) const {
  return static_cast<int>(std::lround(frame_shift * rate));
}

int NumFrames(std::size_t num_samples, double sample_rate,
              const FrameOptions &opts) {
  if (!(opts.frame_shift > 0.0) || opts.frame_length < opts.frame_shift)
    throw ConfigError("need frame_length >= frame_shift > 0");
  if (!(sample_rate > 0.0)) throw ConfigError("sample rate must be positive");
  const int len = opts.FrameLengthSamples(sample_rate);
  const int shift = opts.FrameShiftSamples(sample_rate);
  if (shift < 1) throw ConfigError("frame shift below one sample");
  if (num_samples < static_cast<std::size_t>(len))
    throw TooShortError("audio too short: " + std::to_string(num_samples) +
                        " samples < one frame of " + std::to_string(len));
  return static_cast<int>((num_samples - len) / shift) + 1;
}

Vector WindowFunction(WindowType type, int length) {
  Vector w(length);
  const double denom = length > 1 ? length - 1 : 1;
  for (int i = 0; i < length; ++i) {
    const double a = 2.0 * pi * i / denom;
    switch (type) {
      case WindowType::kHamming: w(i) = 0.54 - 0.46 * std::cos(a); break;
      case WindowType::kHanning: w(i) = 0.5 - 0.5 * std::cos(a); break;
      case WindowType::kPovey: w(i) = std::pow(0.5 - 0.5 * std::cos(a), 0.85); break;
      case WindowType::kRectangular: w(i) = 1.0; break;
    }
  }
  return w;
}

Matrix FrameSignal(const AudioSegment &audio, const FrameOptions &opts) {
  const int num_frames = NumFrames(audio.samples.size(), audio.sample_rate, opts);
  const int len = opts.FrameLengthSamples(audio.sample_rate);
  const int shift = opts.FrameShiftSamples(audio.sample_rate);
  const Vector window = WindowFunction(opts.window, len);
  Matrix frames(num_frames, len);
  Vector buf(len);
  for (int t = 0; t < num_frames; ++t) {
    for (int i = 0; i < len; ++i) buf(i) = audio.samples[static_cast<std::size_t>(t) * shift + i];
    if (opts.remove_dc_offset) buf.array() -= buf.mean();
    if (opts.preemph_coeff != 0.0) {
      for (int i = len - 1; i > 0; --i) buf(i) -= opts.preemph_coeff * buf(i - 1);
      buf(0) -= opts.preemph_coeff * buf(0);
    }
    frames.row(t) = buf.cwiseProduct(window).transpose();
  }
  return frames;
}

double FeatureMatrix::SpeechDuration() const {
  if (speech_mask)
    return frame_shift * static_cast<double>(
        std::count(speech_mask->begin(), speech_mask->end(), true));
  return frame_shift * NumFrames();
}

// ---------------------------------------------------------------------------
// Spectral analysis

int RoundUpToPowerOfTwo(int n) {
  int p = 1;
  while (p < n) p <<= 1;
  return p;
}

namespace {

std::mutex &PlannerMutex() {
  static std::mutex m;
  return m;
}

// Real-to-complex FFTW plan with its own buffers. FFTW_ESTIMATE makes the
// plan, and so every output bit, independent of machine load.
class R2cPlan {
 public:
  explicit R2cPlan(int n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(PlannerMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    if (!plan_) throw NumericalError("FFTW cannot plan a transform of size " + std::to_string(n));
  }
  ~R2cPlan() {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  R2cPlan(const R2cPlan &) = delete;
  R2cPlan &operator=(const R2cPlan &) = delete;

  int size() const { return n_; }

  Vector Power(const Eigen::Ref<const Vector> &frame) {
    std::fill(in_, in_ + n_, 0.0);
    for (Eigen::Index i = 0; i < frame.size(); ++i) in_[i] = frame(i);
    fftw_execute(plan_);
    Vector p(n_ / 2 + 1);
    for (int k = 0; k <= n_ / 2; ++k) p(k) = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    return p;
  }

 private:
  int n_;
  double *in_;
  fftw_complex *out_;
  fftw_plan plan_;
};

}  // namespace

Vector PowerSpectrum(const Eigen::Ref<const Vector> &frame, int fft_size) {
  if (fft_size < 2 || frame.size() > fft_size)
    throw ConfigError("FFT size " + std::to_string(fft_size) + " cannot hold a frame of " +
                      std::to_string(frame.size()) + " samples");
  thread_local std::unique_ptr<R2cPlan> plan;
  if (!plan || plan->size() != fft_size) plan = std::make_unique<R2cPlan>(fft_size);
  return plan->Power(frame);
}

double MelScale(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
double InverseMelScale(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

MelBanks::MelBanks(int num_bins, double sample_rate, int fft_size,
                   double low_freq, double high_freq) {
  const double nyquist = 0.5 * sample_rate;
  if (high_freq <= 0.0) high_freq += nyquist;
  if (num_bins < 3 || low_freq < 0.0 || high_freq > nyquist || low_freq >= high_freq)
    throw ConfigError("bad mel filterbank configuration");
  const int num_fft_bins = fft_size / 2 + 1;
  const double mel_low = MelScale(low_freq), mel_high = MelScale(high_freq);
  const double delta = (mel_high - mel_low) / (num_bins + 1);
  weights_ = Matrix::Zero(num_bins, num_fft_bins);
  centers_.resize(num_bins);
  for (int b = 0; b < num_bins; ++b) {
    const double left = mel_low + b * delta;
    const double center = left + delta;
    const double right = center + delta;
    centers_(b) = InverseMelScale(center);
    for (int k = 0; k < num_fft_bins; ++k) {
      const double mel = MelScale(sample_rate * k / fft_size);
      if (mel > left && mel < right)
        weights_(b, k) = mel <= center ? (mel - left) / delta : (right - mel) / delta;
    }
  }
}

Vector MelBanks::Compute(const Vector &power_spectrum) const {
  return weights_ * power_spectrum;
}

Matrix DctMatrix(int num_ceps, int num_bins) {
  if (num_ceps > num_bins) throw ConfigError("num_ceps exceeds number of mel bins");
  Matrix m(num_ceps, num_bins);
  for (int k = 0; k < num_ceps; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / num_bins) : std::sqrt(2.0 / num_bins);
    for (int n = 0; n < num_bins; ++n)
      m(k, n) = scale * std::cos(pi / num_bins * (n + 0.5) * k);
  }
  return m;
}

Vector LifterCoefficients(int num_ceps, double lifter) {
  Vector c = Vector::Ones(num_ceps);
  if (lifter != 0.0)
    for (int k = 0; k < num_ceps; ++k) c(k) = 1.0 + 0.5 * lifter * std::sin(pi * k / lifter);
  return c;
}

namespace {

Matrix Delta(const Matrix &x, int window) {
  const int rows = static_cast<int>(x.rows());
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;
  Matrix d = Matrix::Zero(x.rows(), x.cols());
  for (int t = 0; t < rows; ++t) {
    for (int n = -window; n <= window; ++n) {
      if (n == 0) continue;
      const int src = std::clamp(t + n, 0, rows - 1);
      d.row(t) += static_cast<double>(n) * x.row(src);
    }
  }
  return d / denom;
}

}  // namespace

Matrix AddDeltas(const Matrix &statics, int order, int window) {
  if (order < 0 || window < 1) throw ConfigError("bad delta configuration");
  const Eigen::Index dim = statics.cols();
  Matrix out(statics.rows(), dim * (order + 1));
  out.leftCols(dim) = statics;
  Matrix prev = statics;
  for (int k = 1; k <= order; ++k) {
    prev = Delta(prev, window);
    out.middleCols(k * dim, dim) = prev;
  }
  return out;
}

FeatureMatrix ExtractMfcc(const AudioSegment &audio, const MfccOptions &opts) {
  const Matrix frames = FrameSignal(audio, opts.frame);
  const int fft_size = RoundUpToPowerOfTwo(static_cast<int>(frames.cols()));
  const MelBanks banks(opts.num_mel_bins, audio.sample_rate, fft_size,
                       opts.low_freq, opts.high_freq);
  const Matrix dct = DctMatrix(opts.num_ceps, opts.num_mel_bins);
  const Vector lifter = LifterCoefficients(opts.num_ceps, opts.cepstral_lifter);
  Matrix statics(frames.rows(), opts.num_ceps);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    Vector mel = banks.Compute(PowerSpectrum(frames.row(t).transpose(), fft_size));
    mel = mel.cwiseMax(opts.energy_floor).array().log();
    statics.row(t) = (dct * mel).cwiseProduct(lifter).transpose();
  }
  FeatureMatrix out;
  out.frames = AddDeltas(statics, opts.delta_order);
  out.frame_shift = opts.frame.frame_shift;
  return out;
}

Vector EqualLoudness(const Vector &freqs) {
  Vector w(freqs.size());
  for (Eigen::Index i = 0; i < freqs.size(); ++i) {
    const double fsq = freqs(i) * freqs(i);
    const double fsub = fsq / (fsq + 1.6e5);
    w(i) = fsub * fsub * (fsq + 1.44e6) / (fsq + 9.61e6);
  }
  return w;
}

Vector LevinsonDurbin(const Vector &autocorr, double *residual) {
  const Eigen::Index order = autocorr.size() - 1;
  Vector a = Vector::Zero(order);
  double err = autocorr(0);
  if (!(err > 0.0)) throw NumericalError("non-positive zero-lag autocorrelation");
  Vector tmp(order);
  for (Eigen::Index i = 0; i < order; ++i) {
    double acc = autocorr(i + 1);
    for (Eigen::Index j = 0; j < i; ++j) acc += a(j) * autocorr(i - j);
    const double k = -acc / err;
    tmp.head(i) = a.head(i);
    for (Eigen::Index j = 0; j < i; ++j) a(j) = tmp(j) + k * tmp(i - 1 - j);
    a(i) = k;
    err *= (1.0 - k * k);
    if (!(err > 0.0)) err = std::numeric_limits<double>::min();
  }
  if (residual) *residual = err;
  return a;
}

Vector LpcToCepstrum(const Vector &lpc, double log_gain, int num_ceps) {
  const int p = static_cast<int>(lpc.size());
  Vector c = Vector::Zero(num_ceps);
  if (num_ceps == 0) return c;
  c(0) = log_gain;
  for (int n = 1; n < num_ceps; ++n) {
    double acc = n <= p ? -lpc(n - 1) : 0.0;
    for (int k = std::max(1, n - p); k < n; ++k)
      acc -= (static_cast<double>(k) / n) * c(k) * lpc(n - k - 1);
    c(n) = acc;
  }
  return c;
}

FeatureMatrix ExtractPlp(const AudioSegment &audio, const PlpOptions &opts) {
  if (opts.lpc_order < 1 || opts.num_ceps > opts.lpc_order + 1)
    throw ConfigError("PLP needs num_ceps <= lpc_order + 1");
  const Matrix frames = FrameSignal(audio, opts.frame);
  const int fft_size = RoundUpToPowerOfTwo(static_cast<int>(frames.cols()));
  const MelBanks banks(opts.num_mel_bins, audio.sample_rate, fft_size,
                       opts.low_freq, opts.high_freq);
  const int nb = opts.num_mel_bins;
  const Vector loudness = EqualLoudness(banks.center_freqs());
  // Cosine basis that turns the (nb + 2)-point symmetric auditory spectrum,
  // edge bins duplicated, into autocorrelation lags 0..lpc_order.
  const int n = nb + 2;
  Matrix idft(opts.lpc_order + 1, n);
  for (int k = 0; k <= opts.lpc_order; ++k)
    for (int j = 0; j < n; ++j) {
      double w = (j == 0 || j == n - 1) ? 1.0 : 2.0;
      idft(k, j) = w * std::cos(pi * j * k / (n - 1)) / (2.0 * (n - 1));
    }
  const Vector lifter = LifterCoefficients(opts.num_ceps, opts.cepstral_lifter);
  Matrix statics(frames.rows(), opts.num_ceps);
  Vector spec(n);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    Vector bands = banks.Compute(PowerSpectrum(frames.row(t).transpose(), fft_size));
    bands = bands.cwiseMax(opts.energy_floor).cwiseProduct(loudness);
    bands = bands.array().pow(opts.compress_factor);
    spec(0) = bands(0);
    spec.segment(1, nb) = bands;
    spec(n - 1) = bands(nb - 1);
    Vector autocorr = idft * spec;
    double residual = 0.0;
    Vector lpc = LevinsonDurbin(autocorr, &residual);
    const double log_gain = std::log(std::max(residual, opts.energy_floor));
    statics.row(t) = LpcToCepstrum(lpc, log_gain, opts.num_ceps).cwiseProduct(lifter).transpose();
  }
  FeatureMatrix out;
  out.frames = AddDeltas(statics, opts.delta_order);
  out.frame_shift = opts.frame.frame_shift;
  return out;
}

FeatureMatrix ExtractFbank(const AudioSegment &audio, const FbankOptions &opts) {
  const Matrix frames = FrameSignal(audio, opts.frame);
  const int fft_size = RoundUpToPowerOfTwo(static_cast<int>(frames.cols()));
  const MelBanks banks(opts.num_mel_bins, audio.sample_rate, fft_size,
                       opts.low_freq, opts.high_freq);
  FeatureMatrix out;
  out.frames.resize(frames.rows(), opts.num_mel_bins);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    Vector mel = banks.Compute(PowerSpectrum(frames.row(t).transpose(), fft_size));
    out.frames.row(t) = mel.cwiseMax(opts.energy_floor).array().log().matrix().transpose();
  }
  out.frame_shift = opts.frame.frame_shift;
  return out;
}

// ---------------------------------------------------------------------------
// Normalization and masking

std::pair<int, int> CmvnWindow(int t, int num_frames, int window_frames) {
  if (window_frames >= num_frames) return {0, num_frames};
  int begin = t - window_frames / 2;
  if (begin < 0) begin = 0;
  int end = begin + window_frames;
  if (end > num_frames) {
    end = num_frames;
    begin = num_frames - window_frames;
  }
  return {begin, end};
}

FeatureMatrix StCmvn(const FeatureMatrix &feats, const CmvnOptions &opts) {
  if (!(opts.window > 0.0)) throw ConfigError("CMVN window must be positive");
  const int num_frames = feats.NumFrames();
  const int dim = feats.Dim();
  FeatureMatrix out = feats;
  if (num_frames == 0) return out;
  const int window_frames =
      std::max(1, static_cast<int>(std::lround(opts.window / feats.frame_shift)));
  // Prefix sums of the offsets from the first frame keep cancellation small
  // and make a constant sequence normalize to exact zeros.
  const Eigen::RowVectorXd ref = feats.frames.row(0);
  Matrix sum = Matrix::Zero(num_frames + 1, dim);
  Matrix sumsq = Matrix::Zero(num_frames + 1, dim);
  for (int t = 0; t < num_frames; ++t) {
    Eigen::RowVectorXd d = feats.frames.row(t) - ref;
    sum.row(t + 1) = sum.row(t) + d;
    sumsq.row(t + 1) = sumsq.row(t) + d.cwiseProduct(d);
  }
  for (int t = 0; t < num_frames; ++t) {
    auto [begin, end] = CmvnWindow(t, num_frames, window_frames);
    const double n = end - begin;
    Eigen::RowVectorXd mean = (sum.row(end) - sum.row(begin)) / n;
    Eigen::RowVectorXd var = (sumsq.row(end) - sumsq.row(begin)) / n - mean.cwiseProduct(mean);
    var = var.cwiseMax(opts.var_floor);
    out.frames.row(t) = ((feats.frames.row(t) - ref - mean).array() / var.array().sqrt()).matrix();
  }
  return out;
}

FeatureMatrix ApplyMask(const FeatureMatrix &feats, const std::vector<bool> &mask) {
  if (static_cast<int>(mask.size()) != feats.NumFrames())
    throw DataError("mask length " + std::to_string(mask.size()) +
                    " != frame count " + std::to_string(feats.NumFrames()));
  const auto kept = std::count(mask.begin(), mask.end(), true);
  if (kept == 0) throw NoSpeechError("no speech frames in mask");
  FeatureMatrix out;
  out.frame_shift = feats.frame_shift;
  out.frames.resize(kept, feats.Dim());
  Eigen::Index r = 0;
  for (int t = 0; t < feats.NumFrames(); ++t)
    if (mask[t]) out.frames.row(r++) = feats.frames.row(t);
  return out;
}

std::vector<bool> AlignMask(const std::vector<bool> &mask, int num_frames) {
  if (mask.empty()) throw DataError("cannot align an empty mask");
  std::vector<bool> out(num_frames);
  for (int t = 0; t < num_frames; ++t)
    out[t] = mask[std::min<std::size_t>(t, mask.size() - 1)];
  return out;
}

FeatureMatrix SpeechExcerpt(const FeatureMatrix &feats, double seconds,
                            std::mt19937_64 *rng) {
  const int want = static_cast<int>(std::lround(seconds / feats.frame_shift));
  if (want >= feats.NumFrames()) {
    FeatureMatrix copy = feats;
    copy.speech_mask.reset();
    return copy;
  }
  std::uniform_int_distribution<int> start_dist(0, feats.NumFrames() - want);
  const int start = start_dist(*rng);
  FeatureMatrix out;
  out.frame_shift = feats.frame_shift;
  out.frames = feats.frames.middleRows(start, want);
  return out;
}

// ---------------------------------------------------------------------------
// Archive

void WriteFeatures(const fs::path &path, const FeatureMatrix &feats) {
  for (Eigen::Index i = 0; i < feats.frames.size(); ++i)
    if (!std::isfinite(feats.frames.data()[i]))
      throw NumericalError("non-finite feature value in " + path.string());
  BinaryWriter w(path);
  w.Magic("IVFM");
  w.U32(1);
  w.U32(static_cast<std::uint32_t>(feats.NumFrames()));
  w.U32(static_cast<std::uint32_t>(feats.Dim()));
  w.F64(feats.frame_shift);
  for (int t = 0; t < feats.NumFrames(); ++t)
    for (int d = 0; d < feats.Dim(); ++d) w.F32(static_cast<float>(feats.frames(t, d)));
  if (feats.speech_mask) {
    if (static_cast<int>(feats.speech_mask->size()) != feats.NumFrames())
      throw DataError("speech mask length does not match frame count");
    w.U8(1);
    for (bool b : *feats.speech_mask) w.U8(b ? 1 : 0);
  } else {
    w.U8(0);
  }
  w.Commit();
}

FeatureMatrix ReadFeatures(const fs::path &path) {
  BinaryReader r(path);
  r.ExpectMagic("IVFM");
  const std::uint32_t version = r.U32();
  if (version != 1) throw DataError("unsupported IVFM version in " + path.string());
  const std::uint32_t rows = r.U32(), cols = r.U32();
  FeatureMatrix feats;
  feats.frame_shift = r.F64();
  feats.frames.resize(rows, cols);
  for (std::uint32_t t = 0; t < rows; ++t)
    for (std::uint32_t d = 0; d < cols; ++d) feats.frames(t, d) = r.F32();
  if (r.U8()) {
    std::vector<bool> mask(rows);
    for (std::uint32_t t = 0; t < rows; ++t) mask[t] = r.U8() != 0;
    feats.speech_mask = std::move(mask);
  }
  return feats;
}

}  // namespace ivpipe
