#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stfd/io.hpp"
#include "stfd/model.hpp"

namespace stfd {

struct ExtractConfig {
  double threshold_on = 0.6;
  double threshold_off = 0.4;
  double min_dur_s = 5.0;
  double min_gap_s = 3.0;

  // Throws ConfigError unless 0 < off <= on < 1 and durations are >= 0.
  void validate() const;
};

// Hysteresis thresholding of frame probabilities into "in bed" events:
// enter at p >= threshold_on, leave at p < threshold_off. Boundaries are the
// centers of the first and last active frame. Gaps shorter than min_gap_s
// are merged, then events shorter than min_dur_s (or of zero length) are
// dropped.
EventList extract_events(std::span<const float> probs, double hop_s, const ExtractConfig& cfg);

// Frame label used in prediction files: p > 0.5 (ties predict 0).
inline int frame_label(float prob) { return prob > 0.5f ? 1 : 0; }

struct Emission {
  std::int64_t frame = 0;
  double time_s = 0.0;  // frame * hop / sample_rate
  float prob = 0.0f;
};

// Push-based causal runtime around a trained streaming detector.
//
// Frame t is emitted as soon as the samples covering frames [t - R, t + R]
// have arrived (R = receptive_field_frames), by running the offline pipeline
// on exactly that context. Emitted frames are final. close() flushes the last
// R frames with the same zero padding the offline pipeline applies at the end
// of a trace. Samples live in a ring buffer of n_fft + (2R + 1) * hop rows.
class StreamingDetector {
 public:
  // `model` must outlive this object; it is only read (eval mode).
  explicit StreamingDetector(Detector<float>& model);

  std::vector<Emission> push(const SampleMatrix& chunk);
  std::vector<Emission> push(std::span<const std::array<float, 3>> chunk);
  std::vector<Emission> close();

  bool closed() const { return closed_; }
  int lookahead_frames() const { return lookahead_; }
  std::int64_t samples_received() const { return received_; }
  std::int64_t frames_emitted() const { return emitted_; }
  Eigen::Index capacity() const { return ring_.rows(); }
  double hop_s() const;
  // Delay between a frame's start time and the moment it can be emitted:
  // (n_fft + R * hop) / sample_rate.
  double structural_latency_s() const;

 private:
  void push_sample(const float* xyz, std::vector<Emission>& out);
  Emission compute(std::int64_t frame, std::int64_t last_frame);

  Detector<float>& model_;
  int n_fft_;
  int hop_;
  int lookahead_;
  SampleMatrix ring_;
  std::int64_t received_ = 0;
  std::int64_t emitted_ = 0;
  bool closed_ = false;
};

}  // namespace stfd
