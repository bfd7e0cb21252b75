#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stfd/losses.hpp"
#include "stfd/model.hpp"
#include "stfd/optim.hpp"
#include "stfd/scoring.hpp"
#include "stfd/streaming.hpp"
#include "stfd/synth.hpp"

namespace stfd {

struct SegTrainConfig {
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct StreamTrainConfig {
  int epochs = 40;
  int batch_size = 4;
  double lr = 1e-3;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  double window_s = 60.0;
  int windows_per_trace = 2;
  double beta = 1.0;
  MixupConfig mixup;
  // Replaces streaming_loss when set (used to compare against plain MSE).
  std::function<Tensor<float>(const Tensor<float>&, const Tensor<float>&)> loss;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_metric = 0.0;

  // "epoch,train_loss,val_loss,val_metric"
  std::string line() const;
};

struct TrainResult {
  ParamStore<float> best;  // parameters and buffers at the best validation epoch
  int best_epoch = 0;
  double best_metric = -1.0;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Deterministic train/validation split over source traces: whole traces go to
// validation until it holds at least val_fraction of the items. With a single
// source the split falls back to item level. Returns item indices.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_by_source(std::span<const std::size_t> item_source, double val_fraction, std::uint64_t seed);
Split segment_split(const Corpus& corpus, double val_fraction, std::uint64_t seed);
Split trace_split(const Corpus& corpus, double val_fraction, std::uint64_t seed);

// Track 1: minimizes mean BCE of the segment head; selects by validation
// segment accuracy (strict improvement). Throws DataError on an empty corpus
// and TrainError when the loss becomes non-finite.
TrainResult train_segmented(const Corpus& corpus, const ArchConfig& arch, const SegTrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

// Track 2: random windows with frame labels, optional waveform mixup,
// streaming_loss on the frame head; selects by validation frame accuracy.
TrainResult train_streaming(const Corpus& corpus, const ArchConfig& arch, const StreamTrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

// Events clipped to [start_s, start_s + length_s] and shifted to start at 0.
EventList slice_events(const EventList& events, double start_s, double length_s);

// Eval-mode metrics. Segment accuracy uses threshold 0.5.
ScoreReport evaluate_segments(Detector<float>& model, const Corpus& corpus, std::span<const std::size_t> items);
ScoreReport evaluate_stream(Detector<float>& model, const Corpus& corpus, std::span<const std::size_t> traces,
                            const ExtractConfig& extract);

// Head implied by the parameter names of a checkpoint.
Head checkpoint_head(const ParamStore<float>& store);

}  // namespace stfd
