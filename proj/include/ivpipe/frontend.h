// include/ivpipe/frontend.h

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

#ifndef IVPIPE_FRONTEND_H_
#define IVPIPE_FRONTEND_H_

#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ivpipe/common.h"

namespace ivpipe {

struct AudioSegment {
  std::vector<double> samples;
  double sample_rate = 8000.0;
  std::string id;
};

// PCM16 mono only. A rate other than `expected_rate` is an error; there is no
// resampling.
AudioSegment ReadWav(const std::filesystem::path &path,
                     double expected_rate = 8000.0);
// Samples are clipped to [-1, 1) and quantized to 16 bits.
void WriteWav(const std::filesystem::path &path, const AudioSegment &audio);

enum class WindowType { kHamming, kHanning, kPovey, kRectangular };

WindowType ParseWindowType(const std::string &name);
std::string WindowTypeName(WindowType w);

// frame_shift is the hop between successive frames (10 ms by default).
struct FrameOptions {
  double frame_length = 0.025;
  double frame_shift = 0.010;
  WindowType window = WindowType::kHamming;
  double preemph_coeff = 0.97;
  bool remove_dc_offset = true;

  int FrameLengthSamples(double rate) const;
  int FrameShiftSamples(double rate) const;
};

// floor((N - L) / S) + 1; throws TooShortError when N < L.
int NumFrames(std::size_t num_samples, double sample_rate,
              const FrameOptions &opts);

Vector WindowFunction(WindowType type, int length);

// One processed (DC removal, pre-emphasis, taper) frame per row.
Matrix FrameSignal(const AudioSegment &audio, const FrameOptions &opts);

struct FeatureMatrix {
  Matrix frames;  // T x D
  double frame_shift = 0.010;
  std::optional<std::vector<bool>> speech_mask;

  int NumFrames() const { return static_cast<int>(frames.rows()); }
  int Dim() const { return static_cast<int>(frames.cols()); }
  double SpeechDuration() const;
};

int RoundUpToPowerOfTwo(int n);
// |X(k)|^2 for k = 0..fft_size/2 of a zero-padded frame (FFTW).
Vector PowerSpectrum(const Eigen::Ref<const Vector> &frame, int fft_size);

double MelScale(double hz);
double InverseMelScale(double mel);

// Triangular filters equally spaced on the mel scale.
class MelBanks {
 public:
  MelBanks(int num_bins, double sample_rate, int fft_size,
           double low_freq = 20.0, double high_freq = 0.0);

  Vector Compute(const Vector &power_spectrum) const;
  const Matrix &weights() const { return weights_; }  // bins x (fft/2+1)
  const Vector &center_freqs() const { return centers_; }
  int NumBins() const { return static_cast<int>(weights_.rows()); }

 private:
  Matrix weights_;
  Vector centers_;
};

// Orthonormal DCT-II rows 0..num_ceps-1.
Matrix DctMatrix(int num_ceps, int num_bins);
Vector LifterCoefficients(int num_ceps, double lifter);

// Appends regression deltas (+-window frames, edges replicated) up to `order`.
Matrix AddDeltas(const Matrix &statics, int order, int window = 2);

struct MfccOptions {
  FrameOptions frame{0.020, 0.010};
  int num_mel_bins = 23;
  int num_ceps = 20;
  double cepstral_lifter = 22.0;
  int delta_order = 2;
  double low_freq = 20.0;
  double high_freq = 0.0;
  double energy_floor = 1.1920928955078125e-07;
};

struct PlpOptions {
  FrameOptions frame{0.025, 0.010};
  int num_mel_bins = 23;
  int num_ceps = 13;
  int lpc_order = 12;
  double compress_factor = 1.0 / 3.0;
  double cepstral_lifter = 22.0;
  int delta_order = 2;
  double low_freq = 20.0;
  double high_freq = 0.0;
  double energy_floor = 1.1920928955078125e-07;
};

struct FbankOptions {
  FrameOptions frame{0.025, 0.010};
  int num_mel_bins = 40;
  double low_freq = 20.0;
  double high_freq = 0.0;
  double energy_floor = 1.1920928955078125e-07;
};

FeatureMatrix ExtractMfcc(const AudioSegment &audio, const MfccOptions &opts);
FeatureMatrix ExtractPlp(const AudioSegment &audio, const PlpOptions &opts);
// Log mel filterbank energies.
FeatureMatrix ExtractFbank(const AudioSegment &audio, const FbankOptions &opts);

// Levinson-Durbin on autocorrelation r[0..p]. Returns a[1..p] of the error
// filter A(z) = 1 + sum_k a_k z^-k; residual energy goes to *residual.
Vector LevinsonDurbin(const Vector &autocorr, double *residual);
// Cepstrum of gain/A(z): c0 = log_gain, then the standard recursion.
Vector LpcToCepstrum(const Vector &lpc, double log_gain, int num_ceps);
// Equal-loudness weights at the given centre frequencies (Hz).
Vector EqualLoudness(const Vector &freqs);

struct CmvnOptions {
  double window = 3.0;  // seconds
  double var_floor = 1e-10;
};

// Sliding-window mean/variance normalization. The window keeps its full width
// near the edges by shifting inward, and covers the whole utterance when the
// utterance is shorter than the window.
FeatureMatrix StCmvn(const FeatureMatrix &feats, const CmvnOptions &opts = {});

// Frames [begin, end) used to normalize frame t.
std::pair<int, int> CmvnWindow(int t, int num_frames, int window_frames);

// Keeps mask-true frames. Throws NoSpeechError for an all-false mask.
FeatureMatrix ApplyMask(const FeatureMatrix &feats, const std::vector<bool> &mask);

// Maps a mask computed at the same frame shift onto `num_frames` frames by
// index, replicating the last decision when the target is longer.
std::vector<bool> AlignMask(const std::vector<bool> &mask, int num_frames);

// Contiguous excerpt of `seconds` of frames with a uniformly drawn start. When
// the input holds less than that, a copy of the whole input is returned.
FeatureMatrix SpeechExcerpt(const FeatureMatrix &feats, double seconds,
                            std::mt19937_64 *rng);

// "IVFM" archive: magic, u32 version, u32 T, u32 D, f64 frame_shift,
// T*D f32 row-major, u8 has_mask, [T bytes of mask].
void WriteFeatures(const std::filesystem::path &path, const FeatureMatrix &feats);
FeatureMatrix ReadFeatures(const std::filesystem::path &path);

}  // namespace ivpipe

#endif  // IVPIPE_FRONTEND_H_
