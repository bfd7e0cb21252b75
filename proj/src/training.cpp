#include "stfd/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace stfd {
namespace {

// Separate stream for batch order and augmentation, so the same seed can
// also initialize the weights.
constexpr std::uint64_t kDataStream = 0xD1B54A32D192ED03ull;

void check_finite(double loss, int epoch) {
  if (!std::isfinite(loss)) {
    throw TrainError("training diverged at epoch " + std::to_string(epoch) + " (loss is not finite)");
  }
}

AccelTrace slice_trace(const AccelTrace& tr, Eigen::Index start, Eigen::Index len) {
  AccelTrace out;
  out.sample_rate_hz = tr.sample_rate_hz;
  out.samples = tr.samples.middleRows(start, len);
  return out;
}

Vec<float> frame_targets(const EventList& events, double hop_s, Index n_frames) {
  const FrameLabels fl = events_to_frames(events, hop_s, n_frames);
  Vec<float> y(n_frames);
  for (Index t = 0; t < n_frames; ++t) y[t] = fl.labels[static_cast<std::size_t>(t)];
  return y;
}

double hop_seconds(const ArchConfig& arch) { return static_cast<double>(arch.dsp.hop) / arch.sample_rate_hz; }

struct Selection {
  double best = -1.0;
  bool has_val = false;

  bool improves(double metric) {
    if (!has_val || metric > best) {
      best = metric;
      return true;
    }
    return false;
  }
};

}  // namespace

std::string EpochLog::line() const {
  return std::to_string(epoch) + "," + format_double(train_loss) + "," + format_double(val_loss) + "," +
         format_double(val_metric);
}

Split split_by_source(std::span<const std::size_t> item_source, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
  Split split;
  const std::size_t n = item_source.size();
  if (n == 0) return split;
  SplitMix64 rng(seed);
  const auto target = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(n)));

  std::vector<std::size_t> sources;
  for (std::size_t s : item_source) {
    if (std::find(sources.begin(), sources.end(), s) == sources.end()) sources.push_back(s);
  }
  std::set<std::size_t> val_sources;
  std::vector<char> in_val(n, 0);
  if (sources.size() >= 2) {
    std::shuffle(sources.begin(), sources.end(), rng);
    std::size_t count = 0;
    for (std::size_t k = 0; k + 1 < sources.size() && count < target; ++k) {
      val_sources.insert(sources[k]);
      count += static_cast<std::size_t>(std::count(item_source.begin(), item_source.end(), sources[k]));
    }
    for (std::size_t i = 0; i < n; ++i) in_val[i] = val_sources.count(item_source[i]) ? 1 : 0;
  } else {
    std::vector<std::size_t> items(n);
    std::iota(items.begin(), items.end(), std::size_t{0});
    std::shuffle(items.begin(), items.end(), rng);
    for (std::size_t k = 0; k < std::min(target, n - 1); ++k) in_val[items[k]] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) (in_val[i] ? split.val : split.train).push_back(i);
  return split;
}

Split segment_split(const Corpus& corpus, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> src;
  for (const auto& s : corpus.segments) src.push_back(s.source);
  return split_by_source(src, val_fraction, seed);
}

Split trace_split(const Corpus& corpus, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> src(corpus.traces.size());
  std::iota(src.begin(), src.end(), std::size_t{0});
  return split_by_source(src, val_fraction, seed);
}

EventList slice_events(const EventList& events, double start_s, double length_s) {
  EventList out;
  const double end_s = start_s + length_s;
  for (const Event& e : events.events) {
    const double a = std::max(e.onset_s, start_s);
    const double b = std::min(e.offset_s, end_s);
    if (b > a) out.events.push_back({a - start_s, b - start_s});
  }
  return out;
}

TrainResult train_segmented(const Corpus& corpus, const ArchConfig& arch, const SegTrainConfig& cfg,
                            const EpochCallback& on_epoch) {
  if (corpus.segments.empty()) throw DataError("train_segmented: corpus has no segments");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("seg.epochs and seg.batch_size must be >= 1");
  Detector<float> model(arch, Head::Segment, cfg.seed);
  SplitMix64 rng(cfg.seed ^ kDataStream);
  const Split split = segment_split(corpus, cfg.val_fraction, cfg.seed);
  const AdamConfig adam{.lr = cfg.lr};

  TrainResult result;
  Selection sel;
  sel.has_val = false;
  std::vector<std::size_t> order = split.train;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<AccelTrace> traces;
      Vec<float> labels(static_cast<Index>(e - b));
      for (std::size_t k = b; k < e; ++k) {
        traces.push_back(corpus.segments[order[k]].trace);
        labels[static_cast<Index>(k - b)] = static_cast<float>(corpus.segments[order[k]].label);
      }
      const auto batch = make_batch<float>(traces, arch.dsp, model.mel());
      const Tensor<float> p = model.forward(batch, Mode::Train);
      const Tensor<float> loss = bce(p, Tensor<float>(Shape{labels.size()}, labels));
      check_finite(loss.item(), epoch);
      model.params().zero_grads();
      backward(loss);
      adam_step(model.params(), adam);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(e - b);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    if (!split.val.empty()) {
      Vec<float> probs(static_cast<Index>(split.val.size()));
      Vec<float> labels(probs.size());
      std::vector<double> pd;
      std::vector<int> li;
      for (std::size_t k = 0; k < split.val.size(); ++k) {
        const CorpusSegment& s = corpus.segments[split.val[k]];
        probs[static_cast<Index>(k)] = segment_probability(model, s.trace);
        labels[static_cast<Index>(k)] = static_cast<float>(s.label);
        pd.push_back(probs[static_cast<Index>(k)]);
        li.push_back(s.label);
      }
      log.val_loss = bce(Tensor<float>(Shape{probs.size()}, probs), Tensor<float>(Shape{labels.size()}, labels)).item();
      log.val_metric = segment_accuracy(pd, li, 0.5);
      check_finite(log.val_loss, epoch);
    }
    if (sel.improves(log.val_metric)) {
      result.best = model.export_params();
      result.best_epoch = epoch;
      result.best_metric = log.val_metric;
    }
    sel.has_val = !split.val.empty();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

TrainResult train_streaming(const Corpus& corpus, const ArchConfig& arch, const StreamTrainConfig& cfg,
                            const EpochCallback& on_epoch) {
  if (corpus.traces.empty()) throw DataError("train_streaming: corpus has no traces");
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.windows_per_trace < 1) {
    throw ConfigError("stream.epochs, stream.batch_size and stream.windows_per_trace must be >= 1");
  }
  if (!(cfg.window_s > 0.0)) throw ConfigError("stream.window_s must be positive");
  if (!(cfg.beta >= 0.0)) throw ConfigError("loss.beta must be >= 0");
  Detector<float> model(arch, Head::Streaming, cfg.seed);
  SplitMix64 rng(cfg.seed ^ kDataStream);
  const Split split = trace_split(corpus, cfg.val_fraction, cfg.seed);
  const AdamConfig adam{.lr = cfg.lr};
  const double hop_s = hop_seconds(arch);
  const int rate = arch.sample_rate_hz;

  auto loss_fn = [&](const Tensor<float>& p, const Tensor<float>& y) {
    return cfg.loss ? cfg.loss(p, y) : streaming_loss(p, y, static_cast<float>(cfg.beta));
  };

  Eigen::Index window = static_cast<Eigen::Index>(std::llround(cfg.window_s * rate));
  for (std::size_t i : split.train) window = std::min(window, corpus.traces[i].trace.length());
  const Index frames = frame_count(window, arch.dsp.n_fft, arch.dsp.hop);
  if (frames < 1) throw DataError("train_streaming: training traces are shorter than n_fft");

  TrainResult result;
  Selection sel;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    struct Item {
      std::size_t trace;
      Eigen::Index start;
    };
    std::vector<Item> items;
    for (std::size_t i : split.train) {
      const Eigen::Index span = corpus.traces[i].trace.length() - window + 1;
      for (int w = 0; w < cfg.windows_per_trace; ++w) {
        const auto start = std::min<Eigen::Index>(span - 1, static_cast<Eigen::Index>(rng.uniform() * span));
        items.push_back({i, start});
      }
    }
    std::shuffle(items.begin(), items.end(), rng);

    double loss_sum = 0.0;
    for (std::size_t b = 0; b < items.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(items.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const auto n = static_cast<Index>(e - b);
      std::vector<AccelTrace> traces;
      Eigen::MatrixXf targets(n, frames);
      for (std::size_t k = b; k < e; ++k) {
        const CorpusTrace& ct = corpus.traces[items[k].trace];
        traces.push_back(slice_trace(ct.trace, items[k].start, window));
        const EventList ev = slice_events(ct.events, static_cast<double>(items[k].start) / rate,
                                          static_cast<double>(window) / rate);
        targets.row(static_cast<Index>(k - b)) = frame_targets(ev, hop_s, frames).matrix().transpose();
      }
      if (cfg.mixup.enabled) {
        const double lambda = sample_mixup_lambda(rng, cfg.mixup);
        std::vector<std::size_t> perm(traces.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<AccelTrace> mixed = traces;
        Eigen::MatrixXf mixed_targets = targets;
        for (std::size_t k = 0; k < traces.size(); ++k) {
          auto [x, y] = mixup(traces[k].samples, targets.row(static_cast<Index>(k)), traces[perm[k]].samples,
                              targets.row(static_cast<Index>(perm[k])), lambda);
          mixed[k].samples = std::move(x);
          mixed_targets.row(static_cast<Index>(k)) = y;
        }
        traces = std::move(mixed);
        targets = std::move(mixed_targets);
      }
      const auto batch = make_batch<float>(traces, arch.dsp, model.mel());
      Vec<float> y(n * frames);
      for (Index r = 0; r < n; ++r) y.segment(r * frames, frames) = targets.row(r).transpose().array();
      const Tensor<float> p = model.forward(batch, Mode::Train);
      const Tensor<float> loss = loss_fn(p, Tensor<float>(Shape{n, frames}, std::move(y)));
      check_finite(loss.item(), epoch);
      model.params().zero_grads();
      backward(loss);
      adam_step(model.params(), adam);
      loss_sum += static_cast<double>(loss.item()) * static_cast<double>(n);
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(items.size());
    if (!split.val.empty()) {
      std::int64_t correct = 0, total = 0;
      double vloss = 0.0;
      for (std::size_t i : split.val) {
        const CorpusTrace& ct = corpus.traces[i];
        const Vec<float> probs = frame_probabilities(model, ct.trace);
        const Index t = probs.size();
        const Vec<float> y = frame_targets(ct.events, hop_s, t);
        vloss += loss_fn(Tensor<float>(Shape{1, t}, probs), Tensor<float>(Shape{1, t}, y)).item();
        for (Index k = 0; k < t; ++k) correct += (frame_label(probs[k]) == static_cast<int>(y[k])) ? 1 : 0;
        total += t;
      }
      log.val_loss = vloss / static_cast<double>(split.val.size());
      log.val_metric = static_cast<double>(correct) / static_cast<double>(total);
      check_finite(log.val_loss, epoch);
    }
    if (sel.improves(log.val_metric)) {
      result.best = model.export_params();
      result.best_epoch = epoch;
      result.best_metric = log.val_metric;
    }
    sel.has_val = !split.val.empty();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

ScoreReport evaluate_segments(Detector<float>& model, const Corpus& corpus, std::span<const std::size_t> items) {
  if (items.empty()) throw DataError("evaluate_segments: no segments to evaluate");
  std::vector<double> probs;
  std::vector<int> labels;
  for (std::size_t i : items) {
    probs.push_back(segment_probability(model, corpus.segments.at(i).trace));
    labels.push_back(corpus.segments.at(i).label);
  }
  ScoreReport r;
  r.track = Track::Segmented;
  r.n_items = static_cast<std::int64_t>(items.size());
  r.segment_accuracy = segment_accuracy(probs, labels, 0.5);
  return r;
}

ScoreReport evaluate_stream(Detector<float>& model, const Corpus& corpus, std::span<const std::size_t> traces,
                            const ExtractConfig& extract) {
  if (traces.empty()) throw DataError("evaluate_stream: no traces to evaluate");
  const double hop_s = hop_seconds(model.arch());
  StreamScorer scorer;
  for (std::size_t i : traces) {
    const CorpusTrace& ct = corpus.traces.at(i);
    const Vec<float> probs = frame_probabilities(model, ct.trace);
    std::vector<std::uint8_t> pred(static_cast<std::size_t>(probs.size()));
    for (Index k = 0; k < probs.size(); ++k) pred[static_cast<std::size_t>(k)] = static_cast<std::uint8_t>(frame_label(probs[k]));
    const FrameLabels truth = events_to_frames(ct.events, hop_s, probs.size());
    const EventList events = extract_events(std::span<const float>(probs.data(), static_cast<std::size_t>(probs.size())),
                                            hop_s, extract);
    scorer.add(pred, truth.labels, events, ct.events);
  }
  const ArchConfig& a = model.arch();
  const double structural =
      static_cast<double>(a.dsp.n_fft + receptive_field_frames(a) * a.dsp.hop) / a.sample_rate_hz;
  return scorer.report(structural);
}

Head checkpoint_head(const ParamStore<float>& store) {
  const bool seg = store.contains("head.seg.linear.w");
  const bool stream = store.contains("head.stream.linear.w");
  if (seg == stream) throw FormatError("checkpoint does not contain exactly one detector head");
  return seg ? Head::Segment : Head::Streaming;
}

}  // namespace stfd
