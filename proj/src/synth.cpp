#include "stfd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "stfd/config.hpp"
#include "stfd/rng.hpp"

namespace stfd {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Cardiac wavelet shape (ballistocardiographic pulse).
constexpr double kCardiacSigmaS = 0.05;
constexpr double kCardiacCarrierHz = 6.0;

void require_config(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

std::array<double, 3> random_direction(SplitMix64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::array<double, 3> v{};
  double norm = 0.0;
  while (norm < 1e-6) {
    for (auto& c : v) c = n01(rng);
    norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  }
  for (auto& c : v) c /= norm;
  return v;
}

double exponential(SplitMix64& rng, double mean) {
  if (mean <= 0.0) return 0.0;
  return -mean * std::log(1.0 - rng.uniform());
}

std::string numbered(const char* stem, std::size_t i, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%0*zu", stem, width, i);
  return buf;
}

// Adds amp * dir * f(t) over samples [lo, hi).
template <typename F>
void add_directional(SampleMatrix& out, int rate, Eigen::Index lo, Eigen::Index hi,
                     const std::array<double, 3>& dir, F&& f) {
  lo = std::max<Eigen::Index>(lo, 0);
  hi = std::min<Eigen::Index>(hi, out.rows());
  for (Eigen::Index i = lo; i < hi; ++i) {
    const double v = f(static_cast<double>(i) / rate);
    for (int a = 0; a < 3; ++a) out(i, a) += static_cast<float>(dir[a] * v);
  }
}

}  // namespace

void SynthConfig::validate() const {
  require_config(duration_s >= 10.0, "synth.duration_s must be >= 10");
  require_config(sample_rate_hz > 0, "synth.sample_rate_hz must be positive");
  require_config(resp_hz_min >= 0.0 && resp_hz_min <= resp_hz_max, "synth: invalid respiration range");
  require_config(cardiac_hz_min > 0.0 && cardiac_hz_min <= cardiac_hz_max, "synth: invalid cardiac range");
  for (double v : {resp_amp, cardiac_amp, posture_shift_rate, burst_gain, noise_std, foot_traffic_rate,
                   foot_traffic_amp, min_dwell_s, ramp_s}) {
    require_config(v >= 0.0, "synth: rates and amplitudes must be >= 0");
  }
  require_config(mean_in_bed_s > 0.0 && mean_out_bed_s > 0.0, "synth: mean dwell times must be positive");
  require_config(min_dwell_s <= mean_in_bed_s && min_dwell_s <= mean_out_bed_s,
                 "synth.min_dwell_s must not exceed the mean dwell times");
}

void CorpusConfig::validate() const {
  require_config(n_traces >= 1, "corpus.n_traces must be >= 1");
  require_config(segment_s > 0.0, "corpus.segment_s must be positive");
  require_config(segments_per_class >= 0, "corpus.segments_per_class must be >= 0");
  require_config(segment_margin_s >= 0.0, "corpus.segment_margin_s must be >= 0");
}

double SynthTrace::occupancy_fraction() const {
  double in = 0.0;
  for (const auto& iv : occupancy) {
    if (iv.in_bed) in += iv.end_s - iv.start_s;
  }
  return occupancy.empty() ? 0.0 : in / occupancy.back().end_s;
}

SynthTrace synth_trace(const SynthConfig& cfg) {
  cfg.validate();
  SplitMix64 rng(cfg.seed);
  const int rate = cfg.sample_rate_hz;
  const auto n = static_cast<Eigen::Index>(std::llround(cfg.duration_s * rate));
  const double duration = static_cast<double>(n) / rate;

  SynthTrace out;
  out.trace.sample_rate_hz = rate;
  out.trace.samples = SampleMatrix::Zero(n, 3);

  // Alternating renewal process with shifted-exponential dwell times.
  bool in_bed = rng.uniform() < cfg.mean_in_bed_s / (cfg.mean_in_bed_s + cfg.mean_out_bed_s);
  double t = 0.0;
  while (t < duration) {
    const double mean = in_bed ? cfg.mean_in_bed_s : cfg.mean_out_bed_s;
    const double dwell = cfg.min_dwell_s + exponential(rng, mean - cfg.min_dwell_s);
    const double end = std::min(duration, t + dwell);
    if (end > t) out.occupancy.push_back({t, end, in_bed});
    t = end;
    in_bed = !in_bed;
  }

  SampleMatrix& x = out.trace.samples;
  for (const auto& iv : out.occupancy) {
    const double a = iv.start_s, b = iv.end_s;
    const auto lo = static_cast<Eigen::Index>(std::ceil(a * rate));
    const auto hi = static_cast<Eigen::Index>(std::ceil(b * rate));
    if (iv.in_bed) {
      out.events.events.push_back({a, b});
      // Linear ramps only at real transitions, not at the trace edges.
      const double ramp_in = a > 0.0 ? cfg.ramp_s : 0.0;
      const double ramp_out = b < duration ? cfg.ramp_s : 0.0;
      auto envelope = [=](double s) {
        double e = 1.0;
        if (ramp_in > 0.0) e = std::min(e, (s - a) / ramp_in);
        if (ramp_out > 0.0) e = std::min(e, (b - s) / ramp_out);
        return std::clamp(e, 0.0, 1.0);
      };
      const auto dir = random_direction(rng);
      const double gain = rng.uniform(0.7, 1.3);
      const double resp_hz = rng.uniform(cfg.resp_hz_min, cfg.resp_hz_max);
      const double phi1 = rng.uniform(0.0, kTwoPi);
      const double phi2 = rng.uniform(0.0, kTwoPi);
      const double resp_amp = cfg.resp_amp * gain;
      add_directional(x, rate, lo, hi, dir, [&](double s) {
        const double w = kTwoPi * resp_hz * s;
        return resp_amp * envelope(s) * (std::sin(w + phi1) + 0.3 * std::sin(2.0 * w + phi2));
      });

      // Heartbeat wavelets with beat-to-beat jitter.
      const double cardiac_hz = rng.uniform(cfg.cardiac_hz_min, cfg.cardiac_hz_max);
      const double cardiac_amp = cfg.cardiac_amp * gain;
      double beat = a + rng.uniform(0.0, 1.0 / cardiac_hz);
      const auto half = static_cast<Eigen::Index>(std::ceil(4.0 * kCardiacSigmaS * rate));
      while (beat < b) {
        const double tk = beat;
        const auto center = static_cast<Eigen::Index>(std::llround(tk * rate));
        add_directional(x, rate, std::max(lo, center - half), std::min(hi, center + half + 1), dir,
                        [&](double s) {
                          const double d = s - tk;
                          return cardiac_amp * envelope(s) *
                                 std::exp(-0.5 * d * d / (kCardiacSigmaS * kCardiacSigmaS)) *
                                 std::cos(kTwoPi * kCardiacCarrierHz * d);
                        });
        beat += (1.0 / cardiac_hz) * rng.uniform(0.97, 1.03);
      }

      // Repositioning bursts.
      if (cfg.posture_shift_rate > 0.0) {
        double tb = a + exponential(rng, 60.0 / cfg.posture_shift_rate);
        while (tb < b) {
          const double len = rng.uniform(1.0, 3.0);
          const double start = tb, stop = std::min(b, tb + len);
          const auto bdir = random_direction(rng);
          std::array<double, 3> freq{}, phase{};
          for (int k = 0; k < 3; ++k) {
            freq[k] = rng.uniform(0.5, 4.0);
            phase[k] = rng.uniform(0.0, kTwoPi);
          }
          const double amp = cfg.burst_gain * resp_amp * rng.uniform(0.5, 1.5);
          add_directional(x, rate, static_cast<Eigen::Index>(std::ceil(start * rate)),
                          static_cast<Eigen::Index>(std::ceil(stop * rate)), bdir, [&](double s) {
                            const double u = (s - start) / len;
                            const double hann = 0.5 * (1.0 - std::cos(kTwoPi * u));
                            double v = 0.0;
                            for (int k = 0; k < 3; ++k) v += std::sin(kTwoPi * freq[k] * (s - start) + phase[k]);
                            return amp * hann * v / 3.0;
                          });
          tb += len + exponential(rng, 60.0 / cfg.posture_shift_rate);
        }
      }
    } else if (cfg.foot_traffic_rate > 0.0) {
      // Walk-bys: short trains of damped floor oscillations.
      double tw = a + exponential(rng, 60.0 / cfg.foot_traffic_rate);
      while (tw < b) {
        const int steps = 2 + static_cast<int>(rng.uniform() * 5.0);
        const auto wdir = random_direction(rng);
        double ts = tw;
        for (int k = 0; k < steps && ts < b; ++k) {
          const double f = rng.uniform(5.0, 20.0);
          const double tau = rng.uniform(0.05, 0.2);
          const double amp = cfg.foot_traffic_amp * rng.uniform(0.5, 1.5);
          const double t0 = ts;
          add_directional(x, rate, static_cast<Eigen::Index>(std::ceil(t0 * rate)),
                          std::min(hi, static_cast<Eigen::Index>(std::ceil((t0 + 5.0 * tau) * rate))), wdir,
                          [&](double s) {
                            const double d = s - t0;
                            return amp * std::exp(-d / tau) * std::sin(kTwoPi * f * d);
                          });
          ts += rng.uniform(0.45, 0.65);
        }
        tw = ts + exponential(rng, 60.0 / cfg.foot_traffic_rate);
      }
    }
  }

  if (cfg.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_std);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) x(i, a) += static_cast<float>(noise(rng));
    }
  }
  return out;
}

Corpus build_corpus(const SynthConfig& cfg, const CorpusConfig& layout) {
  cfg.validate();
  layout.validate();
  Corpus corpus;
  corpus.synth = cfg;
  corpus.layout = layout;
  const int width = layout.n_traces > 1000 ? 5 : 3;
  const auto seg_len = static_cast<Eigen::Index>(std::llround(layout.segment_s * cfg.sample_rate_hz));
  struct Candidate {
    std::size_t source;
    Eigen::Index first;
    int label;
  };
  std::array<std::vector<Candidate>, 2> candidates;
  for (int i = 0; i < layout.n_traces; ++i) {
    SynthConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(i);
    SynthTrace st = synth_trace(c);
    CorpusTrace ct;
    ct.name = numbered("trace", static_cast<std::size_t>(i), width);
    ct.seed = c.seed;
    ct.occupancy_fraction = st.occupancy_fraction();
    ct.events = st.events;
    ct.trace = std::move(st.trace);
    corpus.traces.push_back(std::move(ct));
    const CorpusTrace& src = corpus.traces.back();

    for (const auto& iv : st.occupancy) {
      const int label = iv.in_bed ? 1 : 0;
      // Intervals touching the trace edges have no boundary there.
      const double lo = iv.start_s + (iv.start_s > 0.0 ? layout.segment_margin_s : 0.0);
      const double hi = iv.end_s - (iv.end_s < src.trace.duration_s() ? layout.segment_margin_s : 0.0);
      for (double s = lo; s + layout.segment_s <= hi; s += layout.segment_s) {
        const auto first = static_cast<Eigen::Index>(std::ceil(s * cfg.sample_rate_hz));
        if (first + seg_len > src.trace.length() ||
            static_cast<double>(first + seg_len) / cfg.sample_rate_hz > hi) {
          break;
        }
        candidates[static_cast<std::size_t>(label)].push_back({static_cast<std::size_t>(i), first, label});
      }
    }
  }

  // A per-class cap keeps candidates spread evenly over the whole corpus.
  std::vector<Candidate> chosen;
  for (auto& list : candidates) {
    const std::size_t n = list.size();
    const auto cap = static_cast<std::size_t>(layout.segments_per_class);
    if (cap == 0 || n <= cap) {
      chosen.insert(chosen.end(), list.begin(), list.end());
    } else {
      for (std::size_t j = 0; j < cap; ++j) chosen.push_back(list[j * n / cap]);
    }
  }
  std::sort(chosen.begin(), chosen.end(), [](const Candidate& a, const Candidate& b) {
    return a.source != b.source ? a.source < b.source : a.first < b.first;
  });
  for (const Candidate& cand : chosen) {
    CorpusSegment seg;
    seg.name = numbered("seg", corpus.segments.size(), 4);
    seg.source = cand.source;
    seg.start_s = static_cast<double>(cand.first) / cfg.sample_rate_hz;
    seg.label = cand.label;
    seg.trace.sample_rate_hz = cfg.sample_rate_hz;
    seg.trace.samples = corpus.traces[cand.source].trace.samples.middleRows(cand.first, seg_len);
    corpus.segments.push_back(std::move(seg));
  }
  return corpus;
}

std::string write_corpus(const Corpus& corpus, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"traces", "events", "segments"}) {
    fs::create_directories(fs::path(out_dir) / sub, ec);
    if (ec) throw FormatError("cannot create directory '" + (fs::path(out_dir) / sub).string() + "': " + ec.message());
  }
  std::string manifest;
  for (const auto& [k, v] : corpus_key_values(corpus.synth, corpus.layout)) manifest += k + "=" + v + "\n";
  for (const auto& t : corpus.traces) {
    const std::string trace_file = "traces/" + t.name + ".csv";
    const std::string event_file = "events/" + t.name + ".csv";
    write_file((fs::path(out_dir) / trace_file).string(), emit_trace(t.trace));
    write_file((fs::path(out_dir) / event_file).string(), emit_events(t.events));
    manifest += "\ntrace=" + trace_file + "\nevents=" + event_file + "\nseed=" + std::to_string(t.seed) +
                "\noccupancy=" + format_double(t.occupancy_fraction) + "\n";
  }
  for (const auto& s : corpus.segments) {
    const std::string seg_file = "segments/" + s.name + ".csv";
    write_file((fs::path(out_dir) / seg_file).string(), emit_trace(s.trace));
    manifest += "\nsegment=" + seg_file + "\nlabel=" + std::to_string(s.label) + "\nsource=traces/" +
                corpus.traces[s.source].name + ".csv\nstart_s=" + format_double(s.start_s) + "\n";
  }
  write_file((fs::path(out_dir) / "manifest.txt").string(), manifest);
  return manifest;
}

std::string synth_corpus(const SynthConfig& cfg, const CorpusConfig& layout, const std::string& out_dir) {
  return write_corpus(build_corpus(cfg, layout), out_dir);
}

Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string text = read_file((fs::path(dir) / "manifest.txt").string());
  // Split into blank-line separated blocks.
  std::vector<std::string> blocks(1);
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    if (line.empty()) {
      if (!blocks.back().empty()) blocks.emplace_back();
    } else {
      blocks.back() += line + "\n";
    }
    pos = nl + 1;
  }
  if (blocks.back().empty()) blocks.pop_back();
  if (blocks.empty()) throw FormatError("empty manifest in '" + dir + "'");

  Corpus corpus;
  std::tie(corpus.synth, corpus.layout) = parse_corpus_key_values(parse_key_values(blocks[0]));
  auto lookup = [&](const KeyValues& kv, const std::string& key) -> const std::string& {
    for (const auto& [k, v] : kv) {
      if (k == key) return v;
    }
    throw FormatError("manifest block missing '" + key + "'");
  };
  for (std::size_t b = 1; b < blocks.size(); ++b) {
    const KeyValues kv = parse_key_values(blocks[b]);
    if (kv.empty()) continue;
    if (kv.front().first == "trace") {
      CorpusTrace t;
      const std::string& file = lookup(kv, "trace");
      t.name = fs::path(file).stem().string();
      long long seed = 0;
      if (!parse_int(lookup(kv, "seed"), seed)) throw FormatError("manifest: invalid seed for " + file);
      t.seed = static_cast<std::uint64_t>(seed);
      parse_double(lookup(kv, "occupancy"), t.occupancy_fraction);
      t.trace = parse_trace(read_file((fs::path(dir) / file).string()));
      t.events = parse_events(read_file((fs::path(dir) / lookup(kv, "events")).string()));
      corpus.traces.push_back(std::move(t));
    } else if (kv.front().first == "segment") {
      CorpusSegment s;
      const std::string& file = lookup(kv, "segment");
      s.name = fs::path(file).stem().string();
      long long label = 0;
      if (!parse_int(lookup(kv, "label"), label) || (label != 0 && label != 1)) {
        throw FormatError("manifest: invalid label for " + file);
      }
      s.label = static_cast<int>(label);
      const std::string source = fs::path(lookup(kv, "source")).stem().string();
      auto it = std::find_if(corpus.traces.begin(), corpus.traces.end(),
                             [&](const CorpusTrace& t) { return t.name == source; });
      if (it == corpus.traces.end()) throw FormatError("manifest: unknown source " + source);
      s.source = static_cast<std::size_t>(it - corpus.traces.begin());
      parse_double(lookup(kv, "start_s"), s.start_s);
      s.trace = parse_trace(read_file((fs::path(dir) / file).string()));
      corpus.segments.push_back(std::move(s));
    } else {
      throw FormatError("manifest: unrecognized block starting with '" + kv.front().first + "'");
    }
  }
  return corpus;
}

}  // namespace stfd
