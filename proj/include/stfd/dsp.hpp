#pragma once

#include <Eigen/Core>

#include <array>

#include "stfd/io.hpp"

namespace stfd {

struct DspConfig {
  int n_fft = 256;
  int hop = 128;
  int n_mels = 32;
  double fmin_hz = 0.0;
  double fmax_hz = 125.0;
  double floor_eps = 1e-10;
};

using RowArrayXXd = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Frames that fit in n_samples with no padding (0 when n_samples < n_fft).
Eigen::Index frame_count(Eigen::Index n_samples, int n_fft, int hop);

// Symmetric Hann window, w[k] = 0.5 (1 - cos(2 pi k / (n - 1))).
Eigen::ArrayXd hann_window(Eigen::Index n);

// Squared-magnitude STFT: (n_fft/2 + 1) x n_frames, frame f covering samples
// [f * hop, f * hop + n_fft), Hann-windowed, no centering.
RowArrayXXd stft_power(const Eigen::Ref<const Eigen::ArrayXd>& signal, int n_fft, int hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelBank {
  Eigen::MatrixXd weights;  // n_mels x (n_fft/2 + 1), rows sum to 1
  Eigen::VectorXd center_hz;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;
};

// Triangular HTK-mel filters, peaks equally spaced in mel between fmin and
// fmax, each row normalized to unit sum.
MelBank mel_bank(int sample_rate_hz, int n_fft, int n_mels, double fmin_hz, double fmax_hz);

// Log-Mel spectrogram per axis: axes[a] is n_mels x n_frames.
struct SpectralGram {
  std::array<RowArrayXXd, 3> axes;
  int n_fft = 0;
  int hop = 0;
  int sample_rate_hz = 0;

  Eigen::Index n_mels() const { return axes[0].rows(); }
  Eigen::Index n_frames() const { return axes[0].cols(); }
};

SpectralGram log_mel_gram(const AccelTrace& trace, const DspConfig& cfg);
SpectralGram log_mel_gram(const AccelTrace& trace, const DspConfig& cfg, const MelBank& bank);

// Validates the n_fft/hop/band configuration; throws ConfigError.
void validate(const DspConfig& cfg, int sample_rate_hz);

}  // namespace stfd
