#include "stfd/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <tuple>

namespace stfd {

double segment_accuracy(std::span<const double> preds, std::span<const int> labels, double threshold) {
  if (preds.size() != labels.size()) throw ShapeError("segment_accuracy: length mismatch");
  if (preds.empty()) throw ShapeError("segment_accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int predicted = preds[i] > threshold ? 1 : 0;
    correct += predicted == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double frame_accuracy(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("frame_accuracy: length mismatch");
  if (predicted.empty()) throw ShapeError("frame_accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

double overlap_s(const Event& a, const Event& b) {
  return std::max(0.0, std::min(a.offset_s, b.offset_s) - std::max(a.onset_s, b.onset_s));
}

EventMatch match_events(const EventList& pred, const EventList& truth) {
  struct Candidate {
    double overlap;
    double start;  // start of the shared region, symmetric under swapping lists
    std::size_t p, t;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const double ov = overlap_s(pred.events[i], truth.events[j]);
      if (ov > 0.0) {
        cands.push_back({ov, std::max(pred.events[i].onset_s, truth.events[j].onset_s), i, j});
      }
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(b.overlap, a.start, a.p, a.t) < std::tie(a.overlap, b.start, b.p, b.t);
  });
  EventMatch m;
  std::vector<bool> used_p(pred.size(), false), used_t(truth.size(), false);
  for (const auto& c : cands) {
    if (used_p[c.p] || used_t[c.t]) continue;
    used_p[c.p] = used_t[c.t] = true;
    m.pairs.emplace_back(c.p, c.t);
    m.total_overlap_s += c.overlap;
  }
  std::sort(m.pairs.begin(), m.pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!used_p[i]) m.unmatched_pred.push_back(i);
  }
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (!used_t[j]) m.unmatched_truth.push_back(j);
  }
  return m;
}

LatencySummary summarize(std::span<const double> values) {
  LatencySummary s;
  if (values.empty()) return s;
  for (double v : values) {
    s.mean += v;
    s.mean_abs += std::abs(v);
    s.max_abs = std::max(s.max_abs, std::abs(v));
  }
  s.mean /= static_cast<double>(values.size());
  s.mean_abs /= static_cast<double>(values.size());
  return s;
}

Latencies latency_stats(const EventList& pred, const EventList& truth, const EventMatch& match) {
  Latencies l;
  for (const auto& [p, t] : match.pairs) {
    l.onset_s.push_back(pred.events[p].onset_s - truth.events[t].onset_s);
    l.offset_s.push_back(pred.events[p].offset_s - truth.events[t].offset_s);
  }
  l.onset = summarize(l.onset_s);
  l.offset = summarize(l.offset_s);
  return l;
}

double composite_score(double frame_accuracy, double mean_abs_onset_s, double mean_abs_offset_s,
                       std::int64_t unmatched_true, std::int64_t unmatched_pred,
                       std::int64_t n_true_events) {
  const double points = 100.0 * frame_accuracy - 1.0 * (mean_abs_onset_s + mean_abs_offset_s) / 2.0 -
                        5.0 * static_cast<double>(unmatched_true + unmatched_pred) /
                            static_cast<double>(std::max<std::int64_t>(1, n_true_events));
  return std::clamp(points, 0.0, 100.0);
}

void StreamScorer::add(std::span<const std::uint8_t> predicted_frames,
                       std::span<const std::uint8_t> truth_frames, const EventList& pred_events,
                       const EventList& truth_events) {
  if (predicted_frames.size() != truth_frames.size()) throw ShapeError("StreamScorer: frame count mismatch");
  frames_ += static_cast<std::int64_t>(predicted_frames.size());
  for (std::size_t i = 0; i < predicted_frames.size(); ++i) correct_ += predicted_frames[i] == truth_frames[i];
  const EventMatch m = match_events(pred_events, truth_events);
  const Latencies l = latency_stats(pred_events, truth_events, m);
  onset_.insert(onset_.end(), l.onset_s.begin(), l.onset_s.end());
  offset_.insert(offset_.end(), l.offset_s.begin(), l.offset_s.end());
  n_true_ += static_cast<std::int64_t>(truth_events.size());
  n_pred_ += static_cast<std::int64_t>(pred_events.size());
  unmatched_true_ += static_cast<std::int64_t>(m.unmatched_truth.size());
  unmatched_pred_ += static_cast<std::int64_t>(m.unmatched_pred.size());
}

ScoreReport StreamScorer::report(double structural_latency_s) const {
  ScoreReport r;
  r.track = Track::Streaming;
  r.n_items = frames_;
  r.frame_accuracy = frames_ ? static_cast<double>(correct_) / static_cast<double>(frames_) : 0.0;
  r.onset_latencies_s = onset_;
  r.offset_latencies_s = offset_;
  r.onset = summarize(onset_);
  r.offset = summarize(offset_);
  r.n_true_events = n_true_;
  r.n_pred_events = n_pred_;
  r.unmatched_true = unmatched_true_;
  r.unmatched_pred = unmatched_pred_;
  r.structural_latency_s = structural_latency_s;
  r.composite = composite_score(r.frame_accuracy, r.onset.mean_abs, r.offset.mean_abs, unmatched_true_,
                                unmatched_pred_, n_true_);
  return r;
}

std::string ScoreReport::to_key_values() const {
  std::ostringstream os;
  os.precision(10);
  if (track == Track::Segmented) {
    os << "track=segmented\n";
    os << "n_segments=" << n_items << '\n';
    os << "segment_accuracy=" << segment_accuracy << '\n';
    return os.str();
  }
  os << "track=streaming\n";
  os << "n_frames=" << n_items << '\n';
  os << "frame_accuracy=" << frame_accuracy << '\n';
  os << "n_true_events=" << n_true_events << '\n';
  os << "n_pred_events=" << n_pred_events << '\n';
  os << "matched_events=" << onset_latencies_s.size() << '\n';
  os << "unmatched_true=" << unmatched_true << '\n';
  os << "unmatched_pred=" << unmatched_pred << '\n';
  os << "onset_latency_mean_s=" << onset.mean << '\n';
  os << "onset_latency_mean_abs_s=" << onset.mean_abs << '\n';
  os << "onset_latency_max_abs_s=" << onset.max_abs << '\n';
  os << "offset_latency_mean_s=" << offset.mean << '\n';
  os << "offset_latency_mean_abs_s=" << offset.mean_abs << '\n';
  os << "offset_latency_max_abs_s=" << offset.max_abs << '\n';
  os << "structural_latency_s=" << structural_latency_s << '\n';
  os << "composite=" << composite << '\n';
  return os.str();
}

}  // namespace stfd
