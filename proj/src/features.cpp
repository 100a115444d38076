#include "pafa/features.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace pafa {

namespace {

constexpr double kKaiserBeta = 8.6;
constexpr int kSincZeroCrossings = 32;

double bessel_i0(double x) {
  // Power series; converges quickly for the argument range the Kaiser
  // window uses.
  double sum = 1.0, term = 1.0;
  const double half_x = x / 2.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half_x / k) * (half_x / k);
    sum += term;
    if (term < sum * 1e-18) break;
  }
  return sum;
}

double kaiser(double frac) {  // frac in [-1, 1]
  const double t = 1.0 - frac * frac;
  if (t <= 0.0) return 0.0;
  return bessel_i0(kKaiserBeta * std::sqrt(t)) / bessel_i0(kKaiserBeta);
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

void check_finite(const WaveBuffer& w) {
  for (double s : w.samples)
    if (!std::isfinite(s)) throw DataError("waveform contains NaN/Inf");
}

}  // namespace

WaveBuffer resample(const WaveBuffer& w, int target_hz) {
  if (w.samples.empty()) throw DataError("resample: empty input");
  if (w.rate_hz < 1 || target_hz < 1) throw DataError("resample: bad sample rate");
  if (w.rate_hz == target_hz) return w;
  check_finite(w);

  const double ratio = static_cast<double>(target_hz) / static_cast<double>(w.rate_hz);
  // Cutoff relative to the input Nyquist frequency.
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kSincZeroCrossings / cutoff;
  const std::size_t n_out =
      static_cast<std::size_t>(std::llround(static_cast<double>(w.samples.size()) * ratio));

  WaveBuffer out;
  out.rate_hz = target_hz;
  out.samples.resize(n_out);
  const auto n_in = static_cast<std::ptrdiff_t>(w.samples.size());
  for (std::size_t n = 0; n < n_out; ++n) {
    const double t = static_cast<double>(n) / ratio;  // position in input samples
    const auto k_lo = static_cast<std::ptrdiff_t>(std::ceil(t - half_width));
    const auto k_hi = static_cast<std::ptrdiff_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(k_lo, 0);
         k <= std::min(k_hi, n_in - 1); ++k) {
      const double u = static_cast<double>(k) - t;
      acc += w.samples[static_cast<std::size_t>(k)] * cutoff * sinc(cutoff * u) *
             kaiser(u / half_width);
    }
    out.samples[n] = acc;
  }
  return out;
}

WaveBuffer fix_length(const WaveBuffer& w, double target_s) {
  if (w.samples.empty()) throw DataError("fix_length: empty input");
  if (w.rate_hz != kTargetRateHz)
    throw DataError("fix_length expects a 16 kHz buffer, got " + std::to_string(w.rate_hz));
  const auto target =
      static_cast<std::size_t>(std::llround(target_s * static_cast<double>(w.rate_hz)));
  WaveBuffer out;
  out.rate_hz = w.rate_hz;
  if (w.samples.size() == target) {
    out.samples = w.samples;
    return out;
  }
  out.samples.resize(target);
  if (w.samples.size() > target) {
    // Keep the head.
    std::copy_n(w.samples.begin(), target, out.samples.begin());
  } else {
    for (std::size_t i = 0; i < target; ++i) out.samples[i] = w.samples[i % w.samples.size()];
  }
  return out;
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im, bool inverse) {
  const std::size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
    throw DataError("fft_radix2 requires a power-of-two size");
  // Bit reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const double wr = std::cos(angle), wi = std::sin(angle);
    for (std::size_t i = 0; i < n; i += len) {
      double cur_r = 1.0, cur_i = 0.0;
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::size_t a = i + k, b = i + k + len / 2;
        const double tr = re[b] * cur_r - im[b] * cur_i;
        const double ti = re[b] * cur_i + im[b] * cur_r;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
        const double next_r = cur_r * wr - cur_i * wi;
        cur_i = cur_r * wi + cur_i * wr;
        cur_r = next_r;
      }
    }
  }
  if (inverse) {
    for (std::size_t i = 0; i < n; ++i) {
      re[i] /= static_cast<double>(n);
      im[i] /= static_cast<double>(n);
    }
  }
}

MatrixX<double> log_mel_energies(const WaveBuffer& w, const FbankConfig& cfg) {
  if (w.rate_hz != kTargetRateHz)
    throw DataError("fbank expects 16 kHz input, got " + std::to_string(w.rate_hz));
  if (w.samples.size() != static_cast<std::size_t>(kClipSamples))
    throw DataError("fbank expects exactly " + std::to_string(kClipSamples) + " samples, got " +
                    std::to_string(w.samples.size()));
  check_finite(w);

  const int n_frames =
      (static_cast<int>(w.samples.size()) - cfg.window) / cfg.hop + 1;
  const int n_bins = cfg.fft_size / 2 + 1;

  // Periodic Hann window.
  std::vector<double> window(static_cast<std::size_t>(cfg.window));
  for (int i = 0; i < cfg.window; ++i)
    window[static_cast<std::size_t>(i)] =
        0.5 - 0.5 * std::cos(2.0 * M_PI * i / static_cast<double>(cfg.window));

  // Triangular mel filter bank evaluated at FFT bin centers.
  const double mel_lo = hz_to_mel(cfg.fmin_hz);
  const double mel_hi = hz_to_mel(cfg.fmax_hz);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t k = 0; k < edges.size(); ++k)
    edges[k] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(k) /
                                      static_cast<double>(cfg.n_mels + 1));
  MatrixX<double> filters = MatrixX<double>::Zero(cfg.n_mels, n_bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m) + 1];
    const double hi = edges[static_cast<std::size_t>(m) + 2];
    for (int j = 0; j < n_bins; ++j) {
      const double f = static_cast<double>(j) * kTargetRateHz / cfg.fft_size;
      if (f > lo && f < hi)
        filters(m, j) = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }

  MatrixX<double> out(n_frames, cfg.n_mels);
  std::vector<double> re(static_cast<std::size_t>(cfg.fft_size));
  std::vector<double> im(static_cast<std::size_t>(cfg.fft_size));
  VectorX<double> power(n_bins);
  for (int t = 0; t < n_frames; ++t) {
    std::fill(re.begin(), re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    const std::size_t start = static_cast<std::size_t>(t) * static_cast<std::size_t>(cfg.hop);
    for (int i = 0; i < cfg.window; ++i)
      re[static_cast<std::size_t>(i)] =
          w.samples[start + static_cast<std::size_t>(i)] * window[static_cast<std::size_t>(i)];
    fft_radix2(re, im);
    for (int j = 0; j < n_bins; ++j) {
      const std::size_t sj = static_cast<std::size_t>(j);
      power[j] = re[sj] * re[sj] + im[sj] * im[sj];
    }
    out.row(t) = (filters * power).array() + cfg.log_floor;
    out.row(t) = out.row(t).array().log();
  }
  return out;
}

MatrixX<double> mean_variance_normalize(const MatrixX<double>& m) {
  // Per coefficient over frames; the variance epsilon keeps constant
  // columns (silence) at exactly-representable near-zero outputs.
  MatrixX<double> out(m.rows(), m.cols());
  const double t = static_cast<double>(m.rows());
  for (Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).sum() / t;
    const double var = (m.col(c).array() - mean).square().sum() / t;
    out.col(c) = (m.col(c).array() - mean) / std::sqrt(var + 1e-8);
  }
  return out;
}

MatrixX<float> log_mel_fbank(const WaveBuffer& w, const FbankConfig& cfg) {
  return mean_variance_normalize(log_mel_energies(w, cfg)).cast<float>();
}

void write_feature_cache(const std::filesystem::path& path, const MatrixX<float>& features) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open feature cache for writing: " + tmp.string());
    out.write("PAFB", 4);
    const std::uint32_t version = 1;
    const auto rows = static_cast<std::uint32_t>(features.rows());
    const auto cols = static_cast<std::uint32_t>(features.cols());
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    for (Index r = 0; r < features.rows(); ++r)
      for (Index c = 0; c < features.cols(); ++c) {
        const float v = features(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
      }
    if (!out) throw IoError("feature cache write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

MatrixX<float> read_feature_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature cache: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PAFB", 4) != 0)
    throw ParseError("not a feature cache file: " + path.string());
  std::uint32_t version = 0, rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  if (!in || version != 1)
    throw ParseError("unsupported feature cache version in " + path.string());
  MatrixX<float> m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!in) throw ParseError("feature cache truncated: " + path.string());
  std::size_t k = 0;
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = buf[k++];
  return m;
}

}  // namespace pafa
