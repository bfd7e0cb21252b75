#include "stfd/config.hpp"

#include <algorithm>
#include <cstdint>

namespace stfd {
namespace {

// Walks every configurable field, pairing it with its key.
template <typename C, typename Visitor>
void visit(C& c, Visitor&& v) {
  v("dsp.sample_rate_hz", c.arch.sample_rate_hz);
  v("dsp.n_fft", c.arch.dsp.n_fft);
  v("dsp.hop", c.arch.dsp.hop);
  v("dsp.n_mels", c.arch.dsp.n_mels);
  v("dsp.fmin_hz", c.arch.dsp.fmin_hz);
  v("dsp.fmax_hz", c.arch.dsp.fmax_hz);
  v("dsp.floor_eps", c.arch.dsp.floor_eps);

  v("model.tgram_blocks", c.arch.tgram_blocks);
  v("model.fusion_channels", c.arch.fusion_channels);
  v("model.mfn_stem_channels", c.arch.mfn_stem_channels);
  v("model.mfn_blocks", c.arch.mfn_blocks);
  v("model.mfn_expand", c.arch.mfn_expand);
  v("model.projected_channels", c.arch.projected_channels);
  v("model.leaky_slope", c.arch.leaky_slope);

  v("synth.duration_s", c.synth.duration_s);
  v("synth.sample_rate_hz", c.synth.sample_rate_hz);
  v("synth.seed", c.synth.seed);
  v("synth.resp_hz_min", c.synth.resp_hz_min);
  v("synth.resp_hz_max", c.synth.resp_hz_max);
  v("synth.resp_amp", c.synth.resp_amp);
  v("synth.cardiac_hz_min", c.synth.cardiac_hz_min);
  v("synth.cardiac_hz_max", c.synth.cardiac_hz_max);
  v("synth.cardiac_amp", c.synth.cardiac_amp);
  v("synth.posture_shift_rate", c.synth.posture_shift_rate);
  v("synth.burst_gain", c.synth.burst_gain);
  v("synth.noise_std", c.synth.noise_std);
  v("synth.foot_traffic_rate", c.synth.foot_traffic_rate);
  v("synth.foot_traffic_amp", c.synth.foot_traffic_amp);
  v("synth.mean_in_bed_s", c.synth.mean_in_bed_s);
  v("synth.mean_out_bed_s", c.synth.mean_out_bed_s);
  v("synth.min_dwell_s", c.synth.min_dwell_s);
  v("synth.ramp_s", c.synth.ramp_s);

  v("corpus.n_traces", c.corpus.n_traces);
  v("corpus.segment_s", c.corpus.segment_s);
  v("corpus.segments_per_class", c.corpus.segments_per_class);
  v("corpus.segment_margin_s", c.corpus.segment_margin_s);

  v("seg.epochs", c.seg.epochs);
  v("seg.batch_size", c.seg.batch_size);
  v("seg.lr", c.seg.lr);
  v("seg.val_fraction", c.seg.val_fraction);
  v("seg.seed", c.seg.seed);

  v("stream.epochs", c.stream.epochs);
  v("stream.batch_size", c.stream.batch_size);
  v("stream.lr", c.stream.lr);
  v("stream.val_fraction", c.stream.val_fraction);
  v("stream.seed", c.stream.seed);
  v("stream.window_s", c.stream.window_s);
  v("stream.windows_per_trace", c.stream.windows_per_trace);
  v("loss.beta", c.stream.beta);
  v("mixup.alpha", c.stream.mixup.alpha);
  v("mixup.enabled", c.stream.mixup.enabled);

  v("extract.threshold_on", c.extract.threshold_on);
  v("extract.threshold_off", c.extract.threshold_off);
  v("extract.min_dur_s", c.extract.min_dur_s);
  v("extract.min_gap_s", c.extract.min_gap_s);

  v("train.checkpoint", c.checkpoint);
  v("train.log", c.log);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + value + "'");
}

void assign(const std::string& key, const std::string& value, int& out) {
  long long v = 0;
  if (!parse_int(value, v) || v < INT32_MIN || v > INT32_MAX) bad_value(key, value, "an integer");
  out = static_cast<int>(v);
}

void assign(const std::string& key, const std::string& value, std::uint64_t& out) {
  long long v = 0;
  if (!parse_int(value, v) || v < 0) bad_value(key, value, "a non-negative integer");
  out = static_cast<std::uint64_t>(v);
}

void assign(const std::string& key, const std::string& value, double& out) {
  if (!parse_double(value, out)) bad_value(key, value, "a finite number");
}

void assign(const std::string& key, const std::string& value, bool& out) {
  if (value == "true" || value == "1") {
    out = true;
  } else if (value == "false" || value == "0") {
    out = false;
  } else {
    bad_value(key, value, "true or false");
  }
}

void assign(const std::string&, const std::string& value, std::string& out) { out = value; }

std::string render(int v) { return std::to_string(v); }
std::string render(std::uint64_t v) { return std::to_string(v); }
std::string render(double v) { return format_double(v); }
std::string render(bool v) { return v ? "true" : "false"; }
std::string render(const std::string& v) { return v; }

bool has_prefix(std::string_view key, std::string_view prefix) { return key.substr(0, prefix.size()) == prefix; }

}  // namespace

void apply_keys(Config& cfg, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    bool found = false;
    visit(cfg, [&](const char* name, auto& field) {
      if (!found && key == name) {
        assign(key, value, field);
        found = true;
      }
    });
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

Config parse_config(std::string_view text) {
  Config cfg;
  try {
    apply_keys(cfg, parse_key_values(text));
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

Config load_config(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

KeyValues to_key_values(const Config& cfg) {
  KeyValues kv;
  visit(cfg, [&](const char* name, const auto& field) { kv.emplace_back(name, render(field)); });
  return kv;
}

KeyValues corpus_key_values(const SynthConfig& synth, const CorpusConfig& layout) {
  Config cfg;
  cfg.synth = synth;
  cfg.corpus = layout;
  KeyValues kv = to_key_values(cfg);
  std::erase_if(kv, [](const auto& e) { return !has_prefix(e.first, "synth.") && !has_prefix(e.first, "corpus."); });
  return kv;
}

std::pair<SynthConfig, CorpusConfig> parse_corpus_key_values(const KeyValues& kv) {
  for (const auto& e : kv) {
    if (!has_prefix(e.first, "synth.") && !has_prefix(e.first, "corpus.")) {
      throw FormatError("manifest header: unexpected key '" + e.first + "'");
    }
  }
  Config cfg;
  apply_keys(cfg, kv);
  return {cfg.synth, cfg.corpus};
}

}  // namespace stfd
