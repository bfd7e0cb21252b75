#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stfd/dsp.hpp"
#include "stfd/io.hpp"
#include "stfd/ops.hpp"
#include "stfd/rng.hpp"
#include "stfd/tensor.hpp"

namespace stfd {

struct ArchConfig {
  DspConfig dsp;
  int sample_rate_hz = 250;
  int tgram_blocks = 3;
  int fusion_channels = 16;
  int mfn_stem_channels = 32;
  int mfn_blocks = 3;
  int mfn_expand = 2;
  int projected_channels = 64;
  double leaky_slope = 0.01;
};

enum class Head { Segment, Streaming };

const char* to_string(Head head);

// Per-side frame lookahead of a stack of time-axis kernels: sum of (k - 1) / 2.
int receptive_field_frames(std::span<const int> time_kernels);
// Lookahead of the detector built from `arch` (9 for the default stack).
int receptive_field_frames(const ArchConfig& arch);
std::vector<int> time_kernels(const ArchConfig& arch);

// Model inputs for N equal-length traces.
template <typename S>
struct FeatureBatch {
  Index batch = 0;
  Tensor<S> wave;      // (N * 3, 1, L): one row per axis, axes share TgramNet weights
  Tensor<S> spectral;  // (N, 3, n_mels, T): log-Mel gram H_s
};

template <typename S>
FeatureBatch<S> make_batch(std::span<const AccelTrace> traces, const DspConfig& dsp,
                           const MelBank& bank);

// Spectral-temporal fusion detector: TgramNet branch, CNN fusion to one
// channel, MobileFaceNet-style projector, and one of the two heads.
//
// Parameters and batchnorm buffers live in a ParamStore under stable dotted
// names (tgram.block0.conv.w, fusion.conv1.b, mfn.stem.bn.gamma,
// head.seg.linear.w, ...).
template <typename S>
class Detector {
 public:
  Detector(const ArchConfig& arch, Head head, std::uint64_t seed);

  const ArchConfig& arch() const { return arch_; }
  Head head() const { return head_; }
  const MelBank& mel() const { return mel_; }
  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }

  // (N*3, 1, L) waveform -> (N, 3, n_mels, T) temporal gram H_t.
  Tensor<S> temporal_gram(const Tensor<S>& wave, Index batch);
  // H = F(H_s, H_t): (N, 3, M, T) x 2 -> (N, 1, M, T).
  Tensor<S> fuse(const Tensor<S>& hs, const Tensor<S>& ht, Mode mode);
  // (N, 1, M, T) -> (N, C_p, M/4, T); the time axis is never strided.
  Tensor<S> project(const Tensor<S>& h, Mode mode);
  // (N, C_p, M', T) -> (N) segment probabilities.
  Tensor<S> segment_head(const Tensor<S>& projected);
  // (N, C_p, M', T) -> (N, T) frame probabilities.
  Tensor<S> streaming_head(const Tensor<S>& projected);

  // Full pipeline ending in the configured head: (N) or (N, T).
  Tensor<S> forward(const FeatureBatch<S>& batch, Mode mode);

  // Copies values by name. Throws FormatError naming missing, extra or
  // mis-shaped parameters.
  void load(const ParamStore<float>& store);
  ParamStore<float> export_params() const;

 private:
  Tensor<S>& p(const std::string& name) { return params_.at(name); }
  Tensor<S> bn(const Tensor<S>& x, const std::string& prefix, Mode mode);
  void add_weight(const std::string& name, Shape shape, Index fan_in);
  void add_zeros(const std::string& name, Shape shape, bool trainable = true);
  void add_ones(const std::string& name, Shape shape, bool trainable = true);
  void add_bn(const std::string& prefix, Index channels);

  ArchConfig arch_;
  Head head_;
  MelBank mel_;
  ParamStore<S> params_;
  SplitMix64 rng_;
};

// Eval-mode inference helpers on a single trace.
Vec<float> frame_probabilities(Detector<float>& model, const AccelTrace& trace);
float segment_probability(Detector<float>& model, const AccelTrace& trace);

}  // namespace stfd
