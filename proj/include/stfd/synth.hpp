#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stfd/io.hpp"

namespace stfd {

// Physics knobs of the synthetic mattress accelerometer. Amplitudes are in
// arbitrary sensor units, rates per minute.
struct SynthConfig {
  double duration_s = 120.0;
  int sample_rate_hz = 250;
  std::uint64_t seed = 0;

  // occupant
  double resp_hz_min = 0.15;
  double resp_hz_max = 0.45;
  double resp_amp = 0.02;
  double cardiac_hz_min = 0.9;
  double cardiac_hz_max = 1.8;
  double cardiac_amp = 0.01;
  double posture_shift_rate = 0.5;
  // Repositioning burst amplitude as a multiple of resp_amp.
  double burst_gain = 4.0;

  // ambient
  double noise_std = 0.002;
  double foot_traffic_rate = 4.0;
  double foot_traffic_amp = 0.03;

  // occupancy process
  double mean_in_bed_s = 60.0;
  double mean_out_bed_s = 30.0;
  double min_dwell_s = 5.0;
  double ramp_s = 0.5;

  // Throws ConfigError on negative rates/amplitudes, empty ranges or
  // duration < 10 s.
  void validate() const;
};

struct OccupancyInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  bool in_bed = false;
};

struct SynthTrace {
  AccelTrace trace;
  EventList events;
  // Dwell-process state covering [0, duration), alternating in/out.
  std::vector<OccupancyInterval> occupancy;

  double occupancy_fraction() const;
};

// Fully determined by cfg (including cfg.seed).
SynthTrace synth_trace(const SynthConfig& cfg);

struct CorpusConfig {
  int n_traces = 40;
  double segment_s = 30.0;
  // Per-class cap on emitted Track-1 segments; 0 keeps every candidate.
  int segments_per_class = 0;
  // Distance kept from every occupancy change when cutting segments.
  double segment_margin_s = 1.0;

  void validate() const;
};

struct CorpusTrace {
  std::string name;  // e.g. "trace_000"
  std::uint64_t seed = 0;
  AccelTrace trace;
  EventList events;
  double occupancy_fraction = 0.0;
};

struct CorpusSegment {
  std::string name;  // e.g. "seg_0000"
  std::size_t source = 0;  // index into Corpus::traces
  double start_s = 0.0;
  int label = 0;
  AccelTrace trace;
};

struct Corpus {
  SynthConfig synth;
  CorpusConfig layout;
  std::vector<CorpusTrace> traces;
  std::vector<CorpusSegment> segments;
};

// Trace i uses seed cfg.seed + i. Segments lie wholly inside or wholly
// outside an event, at least segment_margin_s away from any boundary.
Corpus build_corpus(const SynthConfig& cfg, const CorpusConfig& layout);

// Writes traces/, events/, segments/ and manifest.txt under out_dir and
// returns the manifest text.
std::string write_corpus(const Corpus& corpus, const std::string& out_dir);
// build_corpus followed by write_corpus.
std::string synth_corpus(const SynthConfig& cfg, const CorpusConfig& layout, const std::string& out_dir);

// Reads a corpus written by write_corpus (trace, event and segment files).
Corpus load_corpus(const std::string& dir);

}  // namespace stfd
