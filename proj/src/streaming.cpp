#include "stfd/streaming.hpp"

#include <algorithm>

namespace stfd {

void ExtractConfig::validate() const {
  if (!(threshold_off > 0.0 && threshold_off <= threshold_on && threshold_on < 1.0)) {
    throw ConfigError("extract: need 0 < threshold_off <= threshold_on < 1");
  }
  if (!(min_dur_s >= 0.0) || !(min_gap_s >= 0.0)) {
    throw ConfigError("extract: min_dur_s and min_gap_s must be >= 0");
  }
}

EventList extract_events(std::span<const float> probs, double hop_s, const ExtractConfig& cfg) {
  cfg.validate();
  if (!(hop_s > 0.0)) throw ConfigError("extract_events: hop_s must be positive");
  auto center = [hop_s](std::size_t t) { return (static_cast<double>(t) + 0.5) * hop_s; };

  std::vector<Event> runs;
  bool active = false;
  std::size_t start = 0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const double p = probs[t];
    if (!active && p >= cfg.threshold_on) {
      active = true;
      start = t;
    } else if (active && p < cfg.threshold_off) {
      active = false;
      runs.push_back({center(start), center(t - 1)});
    }
  }
  if (active) runs.push_back({center(start), center(probs.size() - 1)});

  std::vector<Event> merged;
  for (const Event& e : runs) {
    if (!merged.empty() && e.onset_s - merged.back().offset_s < cfg.min_gap_s) {
      merged.back().offset_s = e.offset_s;
    } else {
      merged.push_back(e);
    }
  }
  EventList out;
  for (const Event& e : merged) {
    if (e.duration() > 0.0 && e.duration() >= cfg.min_dur_s) out.events.push_back(e);
  }
  return out;
}

StreamingDetector::StreamingDetector(Detector<float>& model)
    : model_(model),
      n_fft_(model.arch().dsp.n_fft),
      hop_(model.arch().dsp.hop),
      lookahead_(receptive_field_frames(model.arch())) {
  if (model.head() != Head::Streaming) throw UsageError("StreamingDetector needs a streaming-head detector");
  ring_ = SampleMatrix::Zero(n_fft_ + (2 * lookahead_ + 1) * hop_, 3);
}

double StreamingDetector::hop_s() const {
  return static_cast<double>(hop_) / model_.arch().sample_rate_hz;
}

double StreamingDetector::structural_latency_s() const {
  return static_cast<double>(n_fft_ + lookahead_ * hop_) / model_.arch().sample_rate_hz;
}

std::vector<Emission> StreamingDetector::push(const SampleMatrix& chunk) {
  if (closed_) throw UsageError("push after close");
  std::vector<Emission> out;
  for (Eigen::Index i = 0; i < chunk.rows(); ++i) push_sample(chunk.row(i).data(), out);
  return out;
}

std::vector<Emission> StreamingDetector::push(std::span<const std::array<float, 3>> chunk) {
  if (closed_) throw UsageError("push after close");
  std::vector<Emission> out;
  for (const auto& s : chunk) push_sample(s.data(), out);
  return out;
}

void StreamingDetector::push_sample(const float* xyz, std::vector<Emission>& out) {
  const Eigen::Index slot = static_cast<Eigen::Index>(received_ % ring_.rows());
  ring_.row(slot) << xyz[0], xyz[1], xyz[2];
  ++received_;
  // Frame t is ready once frame t + R is complete.
  while (received_ >= (emitted_ + lookahead_) * hop_ + n_fft_) {
    out.push_back(compute(emitted_, emitted_ + lookahead_));
    ++emitted_;
  }
}

std::vector<Emission> StreamingDetector::close() {
  if (closed_) throw UsageError("stream already closed");
  closed_ = true;
  std::vector<Emission> out;
  const std::int64_t total = frame_count(received_, n_fft_, hop_);
  for (; emitted_ < total; ++emitted_) out.push_back(compute(emitted_, total - 1));
  return out;
}

Emission StreamingDetector::compute(std::int64_t frame, std::int64_t last_frame) {
  const std::int64_t first_frame = std::max<std::int64_t>(0, frame - lookahead_);
  const std::int64_t begin = first_frame * hop_;
  const std::int64_t end = last_frame * hop_ + n_fft_;
  AccelTrace window;
  window.sample_rate_hz = model_.arch().sample_rate_hz;
  window.samples.resize(end - begin, 3);
  for (std::int64_t s = begin; s < end; ++s) {
    window.samples.row(s - begin) = ring_.row(static_cast<Eigen::Index>(s % ring_.rows()));
  }
  const Vec<float> probs = frame_probabilities(model_, window);
  Emission e;
  e.frame = frame;
  e.time_s = static_cast<double>(frame) * hop_s();
  e.prob = probs[frame - first_frame];
  return e;
}

}  // namespace stfd
