#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "stfd/checkpoint.hpp"
#include "stfd/config.hpp"
#include "stfd/scoring.hpp"
#include "stfd/streaming.hpp"
#include "stfd/synth.hpp"
#include "stfd/training.hpp"

namespace {

using namespace stfd;

constexpr int kExitConfig = 2;
constexpr int kExitTrain = 3;
constexpr int kExitGate = 4;

struct Options {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string corpus;
  std::string checkpoint;
  std::optional<double> threshold_on;
  std::optional<double> threshold_off;
  std::optional<double> min_score;
  std::string pred;
  std::string truth;
  std::string events_out;
  std::string split = "val";
};

Config resolve(const Options& o) {
  Config cfg = o.config.empty() ? Config{} : load_config(o.config);
  KeyValues kv;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  apply_keys(cfg, kv);
  if (o.threshold_on) cfg.extract.threshold_on = *o.threshold_on;
  if (o.threshold_off) cfg.extract.threshold_off = *o.threshold_off;
  if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
  return cfg;
}

void print_report(const ScoreReport& r) { std::cout << r.to_key_values() << std::flush; }

int gate(const ScoreReport& r, const Options& o) {
  if (o.min_score && r.composite < *o.min_score) {
    std::cerr << "composite " << r.composite << " is below --min-score " << *o.min_score << "\n";
    return kExitGate;
  }
  return 0;
}

int run_synth(const Options& o) {
  Config cfg = resolve(o);
  if (o.seed) cfg.synth.seed = *o.seed;
  const Corpus corpus = build_corpus(cfg.synth, cfg.corpus);
  write_corpus(corpus, o.out);
  std::size_t positive = 0;
  for (const auto& s : corpus.segments) positive += s.label == 1 ? 1 : 0;
  std::cout << "traces=" << corpus.traces.size() << "\nsegments=" << corpus.segments.size()
            << "\nsegments_in_bed=" << positive << "\nsegments_out_of_bed=" << corpus.segments.size() - positive
            << "\n";
  return 0;
}

template <typename TrainFn>
int run_train(const Options& o, Config& cfg, TrainFn&& train) {
  std::ofstream log_file;
  if (!cfg.log.empty()) {
    log_file.open(cfg.log, std::ios::trunc);
    if (!log_file) throw FormatError("cannot open log file '" + cfg.log + "'");
  }
  const Corpus corpus = load_corpus(o.corpus);
  std::cout << "epoch,train_loss,val_loss,val_metric" << std::endl;
  if (log_file) log_file << "epoch,train_loss,val_loss,val_metric\n";
  const TrainResult result = train(corpus, [&](const EpochLog& e) {
    std::cout << e.line() << std::endl;
    if (log_file) log_file << e.line() << "\n" << std::flush;
  });
  save_checkpoint(result.best, cfg.checkpoint);
  std::cout << "best_epoch=" << result.best_epoch << "\nbest_val_metric=" << format_double(result.best_metric)
            << "\ncheckpoint=" << cfg.checkpoint << "\n";
  return 0;
}

Detector<float> load_detector(const Config& cfg, Head expected) {
  const ParamStore<float> store = load_checkpoint(cfg.checkpoint);
  if (checkpoint_head(store) != expected) {
    throw FormatError("checkpoint '" + cfg.checkpoint + "' holds a " + to_string(checkpoint_head(store)) +
                      " detector, expected " + to_string(expected));
  }
  Detector<float> model(cfg.arch, expected, 0);
  model.load(store);
  return model;
}

std::vector<std::size_t> pick(const Options& o, const Split& split, std::size_t n) {
  if (o.split == "all") {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  return o.split == "train" ? split.train : split.val;
}

int run_eval_seg(const Options& o) {
  Config cfg = resolve(o);
  if (o.seed) cfg.seg.seed = *o.seed;
  Detector<float> model = load_detector(cfg, Head::Segment);
  const Corpus corpus = load_corpus(o.corpus);
  const auto items = pick(o, segment_split(corpus, cfg.seg.val_fraction, cfg.seg.seed), corpus.segments.size());
  print_report(evaluate_segments(model, corpus, items));
  return 0;
}

int run_eval_stream(const Options& o) {
  Config cfg = resolve(o);
  if (o.seed) cfg.stream.seed = *o.seed;
  Detector<float> model = load_detector(cfg, Head::Streaming);
  const Corpus corpus = load_corpus(o.corpus);
  const auto items = pick(o, trace_split(corpus, cfg.stream.val_fraction, cfg.stream.seed), corpus.traces.size());
  const ScoreReport r = evaluate_stream(model, corpus, items, cfg.extract);
  print_report(r);
  return gate(r, o);
}

int run_stream(const Options& o) {
  Config cfg = resolve(o);
  cfg.extract.validate();
  Detector<float> model = load_detector(cfg, Head::Streaming);
  StreamingDetector stream(model);
  std::vector<float> probs;
  auto emit = [&](const std::vector<Emission>& out) {
    for (const Emission& e : out) {
      std::cout << format_prediction_line({e.frame, e.time_s, e.prob, frame_label(e.prob)}) << '\n';
      probs.push_back(e.prob);
    }
    if (!out.empty()) std::cout << std::flush;
  };

  std::string line;
  if (!std::getline(std::cin, line)) throw FormatError("stream: missing trace header on stdin");
  const int rate = parse_trace_header(line);
  if (rate != cfg.arch.sample_rate_hz) {
    throw DataError("stream: input is " + std::to_string(rate) + " Hz but the model expects " +
                    std::to_string(cfg.arch.sample_rate_hz) + " Hz");
  }
  std::size_t line_no = 1;
  while (std::getline(std::cin, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::array<float, 3> xyz = parse_sample_line(line, line_no);
    emit(stream.push(std::span<const std::array<float, 3>>(&xyz, 1)));
  }
  emit(stream.close());
  if (!o.events_out.empty()) write_file(o.events_out, emit_events(extract_events(probs, stream.hop_s(), cfg.extract)));
  return 0;
}

int run_score(const Options& o) {
  const Config cfg = resolve(o);
  const std::vector<Prediction> preds = parse_predictions(read_file(o.pred));
  const EventList truth = parse_events(read_file(o.truth));
  if (preds.empty()) throw DataError("score: prediction file '" + o.pred + "' has no rows");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].frame != static_cast<std::int64_t>(i)) {
      throw DataError("score: prediction frames must run 0, 1, 2, ... (row " + std::to_string(i + 1) + ")");
    }
  }
  double hop_s = static_cast<double>(cfg.arch.dsp.hop) / cfg.arch.sample_rate_hz;
  if (preds.size() > 1) hop_s = preds.back().time_s / static_cast<double>(preds.back().frame);

  std::vector<float> probs;
  std::vector<std::uint8_t> labels;
  for (const auto& p : preds) {
    probs.push_back(p.prob);
    labels.push_back(static_cast<std::uint8_t>(p.label));
  }
  const FrameLabels truth_frames = events_to_frames(truth, hop_s, static_cast<std::int64_t>(preds.size()));
  StreamScorer scorer;
  scorer.add(labels, truth_frames.labels, extract_events(probs, hop_s, cfg.extract), truth);
  const ArchConfig& a = cfg.arch;
  const ScoreReport r = scorer.report(static_cast<double>(a.dsp.n_fft + receptive_field_frames(a) * a.dsp.hop) /
                                      a.sample_rate_hz);
  print_report(r);
  return gate(r, o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral-temporal fusion person-in-bed detector"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", o.sets, "override a config key (key=value), repeatable");
  };
  auto thresholds = [&](CLI::App* cmd) {
    cmd->add_option("--threshold-on", o.threshold_on, "hysteresis enter threshold");
    cmd->add_option("--threshold-off", o.threshold_off, "hysteresis exit threshold");
  };

  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic corpus");
  common(synth);
  synth->add_option("--seed", o.seed, "corpus seed (synth.seed)");
  synth->add_option("--out", o.out, "output directory")->required();

  auto* train_seg = app.add_subcommand("train-seg", "train the segment classifier");
  auto* train_stream = app.add_subcommand("train-stream", "train the frame-wise streaming detector");
  for (auto* cmd : {train_seg, train_stream}) {
    common(cmd);
    cmd->add_option("--corpus", o.corpus, "corpus directory")->required();
    cmd->add_option("--seed", o.seed, "training seed");
    cmd->add_option("--checkpoint", o.checkpoint, "output checkpoint path");
  }

  auto* eval_seg = app.add_subcommand("eval-seg", "segment accuracy of a checkpoint");
  auto* eval_stream = app.add_subcommand("eval-stream", "frame accuracy, latency and composite of a checkpoint");
  for (auto* cmd : {eval_seg, eval_stream}) {
    common(cmd);
    cmd->add_option("--corpus", o.corpus, "corpus directory")->required();
    cmd->add_option("--checkpoint", o.checkpoint, "checkpoint path");
    cmd->add_option("--seed", o.seed, "seed that defined the training split");
    cmd->add_option("--split", o.split, "which items to score")->check(CLI::IsMember({"val", "train", "all"}));
  }
  thresholds(eval_stream);
  eval_stream->add_option("--min-score", o.min_score, "exit 4 when the composite is lower");

  auto* stream = app.add_subcommand("stream", "trace CSV on stdin -> prediction CSV on stdout");
  common(stream);
  thresholds(stream);
  stream->add_option("--checkpoint", o.checkpoint, "streaming checkpoint");
  stream->add_option("--events", o.events_out, "also write extracted events here after the stream ends");

  auto* score = app.add_subcommand("score", "score a prediction CSV against true events");
  common(score);
  thresholds(score);
  score->add_option("--pred", o.pred, "prediction CSV")->required()->check(CLI::ExistingFile);
  score->add_option("--truth", o.truth, "event CSV")->required()->check(CLI::ExistingFile);
  score->add_option("--min-score", o.min_score, "exit 4 when the composite is lower");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) return run_synth(o);
    if (*train_seg) {
      Config cfg = resolve(o);
      if (o.seed) cfg.seg.seed = *o.seed;
      return run_train(o, cfg, [&](const Corpus& c, const EpochCallback& cb) {
        return train_segmented(c, cfg.arch, cfg.seg, cb);
      });
    }
    if (*train_stream) {
      Config cfg = resolve(o);
      if (o.seed) cfg.stream.seed = *o.seed;
      return run_train(o, cfg, [&](const Corpus& c, const EpochCallback& cb) {
        return train_streaming(c, cfg.arch, cfg.stream, cb);
      });
    }
    if (*eval_seg) return run_eval_seg(o);
    if (*eval_stream) return run_eval_stream(o);
    if (*stream) return run_stream(o);
    if (*score) return run_score(o);
  } catch (const TrainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitTrain;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
