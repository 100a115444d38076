#pragma once

#include <filesystem>
#include <vector>

#include "pafa/dense.hpp"
#include "pafa/errors.hpp"

namespace pafa {

struct WaveBuffer {
  std::vector<double> samples;
  int rate_hz = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(rate_hz);
  }
};

inline constexpr int kTargetRateHz = 16000;
inline constexpr double kClipSeconds = 5.0;
inline constexpr int kClipSamples = 80000;

// Fixed fbank framing. These values are pinned for bit-reproducibility:
// 25 ms Hann window, 10 ms hop, 512-point FFT, 128 triangular mel filters
// spanning 20 Hz - 8 kHz, natural log with a 1e-10 floor. A 5 s clip at
// 16 kHz yields exactly (80000 - 400) / 160 + 1 = 498 frames.
struct FbankConfig {
  int window = 400;
  int hop = 160;
  int fft_size = 512;
  int n_mels = 128;
  double fmin_hz = 20.0;
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
};

inline constexpr int kFbankFrames = 498;
inline constexpr int kNumMels = 128;

// Band-limited resampling (windowed sinc, Kaiser window, cutoff at the
// lower of the two Nyquist frequencies). Output length is
// round(n_in * target / rate_in). A matching input rate passes through.
WaveBuffer resample(const WaveBuffer& w, int target_hz = kTargetRateHz);

// Pads by end-to-end repetition or truncates from the start so the output
// is exactly 5 s at 16 kHz.
WaveBuffer fix_length(const WaveBuffer& w, double target_s = kClipSeconds);

// Log-mel energies without normalization, frames x n_mels.
MatrixX<double> log_mel_energies(const WaveBuffer& w, const FbankConfig& cfg = {});

// Per-utterance, per-coefficient mean/variance normalization.
MatrixX<double> mean_variance_normalize(const MatrixX<double>& m);

// The full front end: log-mel energies followed by normalization, cast to
// the float32 precision used by the feature cache and the model.
MatrixX<float> log_mel_fbank(const WaveBuffer& w, const FbankConfig& cfg = {});

// Feature cache entry: "PAFB", u32 version=1, u32 T, u32 n_mels, float32
// row-major data. Writes go to a temp file first, then rename.
void write_feature_cache(const std::filesystem::path& path, const MatrixX<float>& features);
MatrixX<float> read_feature_cache(const std::filesystem::path& path);

// In-place radix-2 FFT over interleaved complex values, used by the fbank
// front end and by spectral checks in tests.
void fft_radix2(std::vector<double>& re, std::vector<double>& im, bool inverse = false);

}  // namespace pafa
