#include <doctest.h>

#include <filesystem>
#include <set>

#include "stfd/checkpoint.hpp"
#include "stfd/training.hpp"

using namespace stfd;
namespace fs = std::filesystem;

namespace {

const Corpus& seg_corpus() {
  static const Corpus c = [] {
    SynthConfig cfg;
    cfg.seed = 7;
    cfg.duration_s = 240;
    CorpusConfig layout;
    layout.n_traces = 4;
    layout.segments_per_class = 4;
    return build_corpus(cfg, layout);
  }();
  return c;
}

const Corpus& stream_corpus() {
  static const Corpus c = [] {
    SynthConfig cfg;
    cfg.seed = 9;
    cfg.duration_s = 60;
    CorpusConfig layout;
    layout.n_traces = 5;
    layout.segments_per_class = 1;
    return build_corpus(cfg, layout);
  }();
  return c;
}

SegTrainConfig seg_cfg() {
  SegTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.seed = 5;
  return cfg;
}

StreamTrainConfig stream_cfg() {
  StreamTrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.window_s = 30;
  cfg.windows_per_trace = 1;
  cfg.seed = 5;
  return cfg;
}

std::string bytes_of(const ParamStore<float>& store) {
  const fs::path p = fs::temp_directory_path() / "stfd_training_bytes.ckpt";
  save_checkpoint(store, p.string());
  std::string b = read_file(p.string());
  fs::remove(p);
  return b;
}

}  // namespace

TEST_CASE("one epoch on eight segments writes a loadable checkpoint") {
  REQUIRE(seg_corpus().segments.size() == 8);
  std::vector<EpochLog> seen;
  const TrainResult r = train_segmented(seg_corpus(), ArchConfig{}, seg_cfg(), [&](const EpochLog& e) { seen.push_back(e); });
  REQUIRE(r.log.size() == 1);
  CHECK(seen.size() == 1);
  CHECK(r.best_epoch == 1);
  CHECK(std::isfinite(r.log[0].train_loss));
  CHECK(r.log[0].line().starts_with("1,"));

  const fs::path p = fs::temp_directory_path() / "stfd_training_seg.ckpt";
  save_checkpoint(r.best, p.string());
  const ParamStore<float> loaded = load_checkpoint(p.string());
  CHECK(checkpoint_head(loaded) == Head::Segment);
  Detector<float> m(ArchConfig{}, Head::Segment, 99);
  CHECK_NOTHROW(m.load(loaded));
  fs::remove(p);
}

TEST_CASE("zero learning rate leaves every trainable parameter bitwise unchanged") {
  SegTrainConfig cfg = seg_cfg();
  cfg.lr = 0;
  const TrainResult r = train_segmented(seg_corpus(), ArchConfig{}, cfg);
  const Detector<float> fresh(ArchConfig{}, Head::Segment, cfg.seed);
  int checked = 0;
  for (const auto& e : fresh.params()) {
    if (!e.tensor.requires_grad()) continue;
    CHECK((r.best.at(e.name).value().array() == e.tensor.value().array()).all());
    ++checked;
  }
  CHECK(checked > 10);
}

TEST_CASE("training errors") {
  Corpus empty;
  CHECK_THROWS_AS(train_segmented(empty, ArchConfig{}, seg_cfg()), DataError);
  CHECK_THROWS_AS(train_streaming(empty, ArchConfig{}, stream_cfg()), DataError);

  SegTrainConfig cfg = seg_cfg();
  cfg.epochs = 3;
  cfg.lr = 1e30;
  try {
    train_segmented(seg_corpus(), ArchConfig{}, cfg);
    FAIL("expected divergence");
  } catch (const TrainError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("segmented training is deterministic and evaluation reproduces the log") {
  SegTrainConfig cfg = seg_cfg();
  cfg.epochs = 2;
  const TrainResult a = train_segmented(seg_corpus(), ArchConfig{}, cfg);
  const TrainResult b = train_segmented(seg_corpus(), ArchConfig{}, cfg);
  REQUIRE(a.log.size() == 2);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].line() == b.log[i].line());
  CHECK(bytes_of(a.best) == bytes_of(b.best));

  Detector<float> m(ArchConfig{}, Head::Segment, 0);
  m.load(a.best);
  const Split split = segment_split(seg_corpus(), cfg.val_fraction, cfg.seed);
  const ScoreReport rep = evaluate_segments(m, seg_corpus(), split.val);
  CHECK(rep.segment_accuracy == a.best_metric);
  CHECK(rep.segment_accuracy == a.log[static_cast<std::size_t>(a.best_epoch - 1)].val_metric);

  const fs::path p = fs::temp_directory_path() / "stfd_training_rt.ckpt";
  save_checkpoint(a.best, p.string());
  Detector<float> again(ArchConfig{}, Head::Segment, 1);
  again.load(load_checkpoint(p.string()));
  CHECK(evaluate_segments(again, seg_corpus(), split.val) == rep);
  fs::remove(p);
}

TEST_CASE("an all-zero model scores the label-0 fraction under the tie rule") {
  Detector<float> m(ArchConfig{}, Head::Segment, 2);
  for (auto& e : m.params()) {
    if (e.name.find("running_var") == std::string::npos) e.tensor.value().setZero();
  }
  std::vector<std::size_t> all(seg_corpus().segments.size());
  double zeros = 0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = i;
    zeros += seg_corpus().segments[i].label == 0;
  }
  CHECK(segment_probability(m, seg_corpus().segments[0].trace) == 0.5f);
  CHECK(evaluate_segments(m, seg_corpus(), all).segment_accuracy == doctest::Approx(zeros / all.size()));
}

TEST_CASE("streaming training: mixup, beta and determinism") {
  StreamTrainConfig cfg = stream_cfg();
  cfg.mixup.enabled = false;
  const TrainResult plain = train_streaming(stream_corpus(), ArchConfig{}, cfg);
  cfg.mixup.enabled = true;
  const TrainResult mixed = train_streaming(stream_corpus(), ArchConfig{}, cfg);
  CHECK(plain.log[0].train_loss != mixed.log[0].train_loss);
  const TrainResult mixed2 = train_streaming(stream_corpus(), ArchConfig{}, cfg);
  CHECK(mixed.log[0].line() == mixed2.log[0].line());
  CHECK(bytes_of(mixed.best) == bytes_of(mixed2.best));
  CHECK(checkpoint_head(mixed.best) == Head::Streaming);

  StreamTrainConfig b0 = stream_cfg();
  b0.beta = 0;
  StreamTrainConfig mse = b0;
  mse.loss = [](const Tensor<float>& p, const Tensor<float>& y) { return mse_frames(p, y); };
  const TrainResult x = train_streaming(stream_corpus(), ArchConfig{}, b0);
  const TrainResult y = train_streaming(stream_corpus(), ArchConfig{}, mse);
  CHECK(x.log[0].train_loss == y.log[0].train_loss);
  CHECK(x.log[0].val_loss == y.log[0].val_loss);
  CHECK(bytes_of(x.best) == bytes_of(y.best));

  Detector<float> m(ArchConfig{}, Head::Streaming, 0);
  m.load(mixed.best);
  const Split split = trace_split(stream_corpus(), cfg.val_fraction, cfg.seed);
  const ScoreReport rep = evaluate_stream(m, stream_corpus(), split.val, ExtractConfig{});
  CHECK(rep.frame_accuracy == mixed.best_metric);
  CHECK(rep.structural_latency_s > 0);
}

TEST_CASE("splits keep whole sources on one side") {
  const std::vector<std::size_t> source{0, 0, 0, 1, 1, 2, 2, 2, 3, 4, 4};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Split s = split_by_source(source, 0.2, seed);
    CHECK(s.train.size() + s.val.size() == source.size());
    CHECK(s.val.size() >= 3);
    std::set<std::size_t> tr, va;
    for (auto i : s.train) tr.insert(source[i]);
    for (auto i : s.val) va.insert(source[i]);
    for (auto v : va) CHECK(tr.count(v) == 0);
    CHECK_FALSE(tr.empty());
    CHECK(split_by_source(source, 0.2, seed).val == s.val);
  }
  const std::vector<std::size_t> single(10, 0);
  const Split one = split_by_source(single, 0.2, 1);
  CHECK(one.val.size() == 2);
  CHECK(one.train.size() == 8);
}

TEST_CASE("slice_events clips and shifts") {
  EventList e;
  e.events = {{5, 15}, {20, 30}, {40, 50}};
  const EventList s = slice_events(e, 10, 25);
  REQUIRE(s.events.size() == 2);
  CHECK(s.events[0].onset_s == 0);
  CHECK(s.events[0].offset_s == 5);
  CHECK(s.events[1].onset_s == 10);
  CHECK(s.events[1].offset_s == 20);
  CHECK(slice_events(e, 31, 8).events.empty());
}
