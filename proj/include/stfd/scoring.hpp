#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stfd/io.hpp"

namespace stfd {

// Fraction of items where (p > threshold) == label; p == threshold predicts 0.
double segment_accuracy(std::span<const double> preds, std::span<const int> labels, double threshold);

// Fraction of equal entries.
double frame_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

double overlap_s(const Event& a, const Event& b);

struct EventMatch {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred index, truth index)
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_truth;
  double total_overlap_s = 0.0;
};

// Greedy one-to-one matching in order of decreasing temporal overlap; pairs
// that do not overlap never match.
EventMatch match_events(const EventList& pred, const EventList& truth);

struct LatencySummary {
  double mean = 0.0;
  double mean_abs = 0.0;
  double max_abs = 0.0;

  friend bool operator==(const LatencySummary&, const LatencySummary&) = default;
};

struct Latencies {
  std::vector<double> onset_s;   // pred onset - true onset (positive = late)
  std::vector<double> offset_s;  // pred offset - true offset
  LatencySummary onset;
  LatencySummary offset;
};

Latencies latency_stats(const EventList& pred, const EventList& truth, const EventMatch& match);
LatencySummary summarize(std::span<const double> values);

// 100 * frame_accuracy - (mean_abs_onset + mean_abs_offset) / 2
//   - 5 * (unmatched_true + unmatched_pred) / max(1, n_true_events), in [0, 100].
double composite_score(double frame_accuracy, double mean_abs_onset_s, double mean_abs_offset_s,
                       std::int64_t unmatched_true, std::int64_t unmatched_pred,
                       std::int64_t n_true_events);

enum class Track { Segmented, Streaming };

struct ScoreReport {
  Track track = Track::Streaming;
  std::int64_t n_items = 0;  // segments (Track 1) or frames (Track 2)
  double segment_accuracy = 0.0;
  double frame_accuracy = 0.0;
  std::vector<double> onset_latencies_s;
  std::vector<double> offset_latencies_s;
  LatencySummary onset;
  LatencySummary offset;
  std::int64_t n_true_events = 0;
  std::int64_t n_pred_events = 0;
  std::int64_t unmatched_true = 0;
  std::int64_t unmatched_pred = 0;
  double structural_latency_s = 0.0;
  double composite = 0.0;

  // One "key=value" line per field relevant to the track.
  std::string to_key_values() const;
  friend bool operator==(const ScoreReport&, const ScoreReport&) = default;
};

// Accumulates Track-2 results over several traces, then finalizes the
// composite on the pooled counts.
class StreamScorer {
 public:
  void add(std::span<const std::uint8_t> predicted_frames, std::span<const std::uint8_t> truth_frames,
           const EventList& pred_events, const EventList& truth_events);
  ScoreReport report(double structural_latency_s = 0.0) const;

 private:
  std::int64_t frames_ = 0;
  std::int64_t correct_ = 0;
  std::vector<double> onset_, offset_;
  std::int64_t n_true_ = 0, n_pred_ = 0, unmatched_true_ = 0, unmatched_pred_ = 0;
};

}  // namespace stfd
