#include "stfd/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace stfd {
namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

Eigen::Index frame_count(Eigen::Index n_samples, int n_fft, int hop) {
  if (n_samples < n_fft) return 0;
  return 1 + (n_samples - n_fft) / hop;
}

Eigen::ArrayXd hann_window(Eigen::Index n) {
  if (n < 2) throw ConfigError("hann_window: length must be >= 2");
  Eigen::ArrayXd w(n);
  const double denom = static_cast<double>(n - 1);
  for (Eigen::Index k = 0; k < n; ++k) {
    w[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / denom));
  }
  // Exact symmetry regardless of cos rounding.
  for (Eigen::Index k = 0; k < n / 2; ++k) w[n - 1 - k] = w[k];
  return w;
}

RowArrayXXd stft_power(const Eigen::Ref<const Eigen::ArrayXd>& signal, int n_fft, int hop) {
  if (!is_power_of_two(n_fft) || n_fft < 2) throw ConfigError("stft_power: n_fft must be a power of two");
  if (hop < 1) throw ConfigError("stft_power: hop must be >= 1");
  if (signal.size() < n_fft) {
    throw DataError("stft_power: signal of " + std::to_string(signal.size()) +
                    " samples is shorter than n_fft=" + std::to_string(n_fft));
  }
  const Eigen::Index frames = frame_count(signal.size(), n_fft, hop);
  const Eigen::Index bins = n_fft / 2 + 1;
  const Eigen::ArrayXd window = hann_window(n_fft);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(static_cast<std::size_t>(n_fft));
  std::vector<std::complex<double>> spectrum;
  RowArrayXXd power(bins, frames);
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (int k = 0; k < n_fft; ++k) frame[k] = signal[f * hop + k] * window[k];
    fft.fwd(spectrum, frame);
    for (Eigen::Index b = 0; b < bins; ++b) power(b, f) = std::norm(spectrum[static_cast<std::size_t>(b)]);
  }
  return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelBank mel_bank(int sample_rate_hz, int n_fft, int n_mels, double fmin_hz, double fmax_hz) {
  if (sample_rate_hz <= 0) throw ConfigError("mel_bank: sample rate must be positive");
  if (n_mels < 2) throw ConfigError("mel_bank: n_mels must be >= 2");
  if (!(fmin_hz >= 0.0 && fmin_hz < fmax_hz && fmax_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("mel_bank: need 0 <= fmin < fmax <= sample_rate/2");
  }
  const Eigen::Index bins = n_fft / 2 + 1;
  const double mlo = hz_to_mel(fmin_hz);
  const double mhi = hz_to_mel(fmax_hz);
  Eigen::VectorXd edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mlo + (mhi - mlo) * static_cast<double>(i) / (n_mels + 1));
  }
  MelBank bank;
  bank.fmin_hz = fmin_hz;
  bank.fmax_hz = fmax_hz;
  bank.center_hz = edges.segment(1, n_mels);
  bank.weights = Eigen::MatrixXd::Zero(n_mels, bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (Eigen::Index b = 0; b < bins; ++b) {
      const double f = static_cast<double>(b) * sample_rate_hz / n_fft;
      const double up = (f - lo) / (mid - lo);
      const double down = (hi - f) / (hi - mid);
      bank.weights(m, b) = std::max(0.0, std::min(up, down));
    }
    const double total = bank.weights.row(m).sum();
    if (!(total > 0.0)) {
      throw ConfigError("mel_bank: filter " + std::to_string(m) +
                        " covers no FFT bin; use fewer mels or a larger n_fft");
    }
    bank.weights.row(m) /= total;
  }
  return bank;
}

void validate(const DspConfig& cfg, int sample_rate_hz) {
  if (!is_power_of_two(cfg.n_fft) || cfg.n_fft < 2) throw ConfigError("dsp.n_fft must be a power of two");
  if (cfg.hop < 1) throw ConfigError("dsp.hop must be >= 1");
  if (!(cfg.floor_eps > 0.0)) throw ConfigError("dsp.floor_eps must be positive");
  if (cfg.n_mels < 2) throw ConfigError("dsp.n_mels must be >= 2");
  if (!(cfg.fmin_hz >= 0.0 && cfg.fmin_hz < cfg.fmax_hz && cfg.fmax_hz <= sample_rate_hz / 2.0)) {
    throw ConfigError("dsp: need 0 <= fmin_hz < fmax_hz <= sample_rate/2");
  }
}

SpectralGram log_mel_gram(const AccelTrace& trace, const DspConfig& cfg) {
  return log_mel_gram(trace, cfg,
                      mel_bank(trace.sample_rate_hz, cfg.n_fft, cfg.n_mels, cfg.fmin_hz, cfg.fmax_hz));
}

SpectralGram log_mel_gram(const AccelTrace& trace, const DspConfig& cfg, const MelBank& bank) {
  validate(cfg, trace.sample_rate_hz);
  if (bank.weights.rows() != cfg.n_mels || bank.weights.cols() != cfg.n_fft / 2 + 1) {
    throw ConfigError("log_mel_gram: mel bank does not match configuration");
  }
  SpectralGram gram;
  gram.n_fft = cfg.n_fft;
  gram.hop = cfg.hop;
  gram.sample_rate_hz = trace.sample_rate_hz;
  for (int a = 0; a < 3; ++a) {
    const Eigen::ArrayXd signal = trace.samples.col(a).cast<double>().array();
    const RowArrayXXd power = stft_power(signal, cfg.n_fft, cfg.hop);
    const Eigen::MatrixXd mel = bank.weights * power.matrix();
    gram.axes[a] = (mel.array() + cfg.floor_eps).log();
  }
  return gram;
}

}  // namespace stfd
