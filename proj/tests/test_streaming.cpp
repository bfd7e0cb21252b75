#include <doctest.h>

#include <cmath>

#include "stfd/rng.hpp"
#include "stfd/streaming.hpp"
#include "stfd/synth.hpp"
#include "suites.hpp"

using namespace stfd;

namespace {

AccelTrace synth(double seconds, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.duration_s = seconds;
  return synth_trace(cfg).trace;
}

std::vector<Emission> run_all(StreamingDetector& s, const SampleMatrix& x, Index chunk) {
  std::vector<Emission> out;
  for (Index i = 0; i < x.rows(); i += chunk) {
    const auto e = s.push(SampleMatrix(x.middleRows(i, std::min(chunk, x.rows() - i))));
    out.insert(out.end(), e.begin(), e.end());
  }
  const auto e = s.close();
  out.insert(out.end(), e.begin(), e.end());
  return out;
}

}  // namespace

TEST_CASE("extract_events scans with hysteresis at frame centers") {
  ExtractConfig cfg{0.5, 0.5, 0.0, 0.0};
  const std::vector<float> p{.1f, .1f, .9f, .9f, .9f, .1f};
  const EventList e = extract_events(p, 0.5, cfg);
  REQUIRE(e.events.size() == 1);
  CHECK(e.events[0].onset_s == 1.25);
  CHECK(e.events[0].offset_s == 2.25);

  const std::vector<float> low{.1f, .2f, .3f};
  CHECK(extract_events(low, 0.5, ExtractConfig{}).events.empty());
  CHECK(extract_events(std::vector<float>{}, 0.5, ExtractConfig{}).events.empty());

  // Between the thresholds the state holds.
  ExtractConfig hyst{0.6, 0.4, 0.0, 0.0};
  const std::vector<float> q{.5f, .7f, .5f, .45f, .3f, .5f};
  const EventList h = extract_events(q, 1.0, hyst);
  REQUIRE(h.events.size() == 1);
  CHECK(h.events[0].onset_s == 1.5);
  CHECK(h.events[0].offset_s == 3.5);
}

TEST_CASE("extract_events merges short gaps before dropping short events") {
  ExtractConfig cfg{0.5, 0.5, 2.5, 2.5};
  const std::vector<float> p{.9f, .9f, .1f, .9f, .9f, .1f, .1f, .1f, .1f, .9f, .9f};
  const EventList e = extract_events(p, 1.0, cfg);
  REQUIRE(e.events.size() == 1);
  CHECK(e.events[0].onset_s == 0.5);
  CHECK(e.events[0].offset_s == 4.5);
}

TEST_CASE("extract_events rejects bad thresholds") {
  const std::vector<float> p{.5f};
  CHECK_THROWS_AS(extract_events(p, 1.0, ExtractConfig{0.4, 0.6, 0, 0}), ConfigError);
  CHECK_THROWS_AS(extract_events(p, 1.0, ExtractConfig{1.0, 0.5, 0, 0}), ConfigError);
  CHECK_THROWS_AS(extract_events(p, 1.0, ExtractConfig{0.5, 0.0, 0, 0}), ConfigError);
  CHECK_THROWS_AS(extract_events(p, 1.0, ExtractConfig{0.6, 0.4, -1, 0}), ConfigError);
}

TEST_CASE("extract_events agrees with a brute-force scanner") {
  const auto r = suites::extract_events_suite(500, 11);
  CHECK(r.cases == 500);
  CHECK(r.mismatches == 0);
}

TEST_CASE("extract_events always returns a valid event list") {
  SplitMix64 rng(5);
  for (int c = 0; c < 200; ++c) {
    std::vector<float> p(static_cast<std::size_t>(rng.uniform(1, 81)));
    for (auto& v : p) v = static_cast<float>(rng.uniform());
    const double on = rng.uniform(0.3, 0.9);
    ExtractConfig cfg{on, rng.uniform(0.05, on), rng.uniform(0, 5), rng.uniform(0, 5)};
    CHECK_NOTHROW(extract_events(p, 0.512, cfg).validate());
  }
}

TEST_CASE("emission counts follow the lookahead") {
  Detector<float> m(ArchConfig{}, Head::Streaming, 3);
  const int R = receptive_field_frames(m.arch());
  const auto& d = m.arch().dsp;
  const AccelTrace t = synth(40, 1);
  const Index frames = frame_count(t.length(), d.n_fft, d.hop);

  StreamingDetector s(m);
  CHECK(s.lookahead_frames() == R);
  CHECK(s.capacity() == d.n_fft + (2 * R + 1) * d.hop);
  const auto pushed = s.push(t.samples);
  CHECK(static_cast<Index>(pushed.size()) == frames - R);
  const auto rest = s.close();
  CHECK(static_cast<Index>(rest.size()) == R);
  CHECK(s.closed());
  CHECK_THROWS_AS(s.push(t.samples), UsageError);
  CHECK_THROWS_AS(s.close(), UsageError);

  StreamingDetector one(m);
  CHECK(one.push(SampleMatrix(t.samples.topRows(d.n_fft))).empty());
  CHECK(one.close().size() == 1);

  StreamingDetector none(m);
  CHECK(none.push(SampleMatrix(0, 3)).empty());
  CHECK(none.close().empty());

  StreamingDetector shorter(m);
  CHECK(shorter.push(SampleMatrix(t.samples.topRows(d.n_fft - 1))).empty());
  CHECK(shorter.close().empty());
}

TEST_CASE("each frame is emitted once its lookahead samples arrive") {
  Detector<float> m(ArchConfig{}, Head::Streaming, 4);
  const int R = receptive_field_frames(m.arch());
  const auto& d = m.arch().dsp;
  const AccelTrace t = synth(30, 2);
  StreamingDetector s(m);
  std::int64_t next = 0;
  for (Index i = 0; i < t.length(); ++i) {
    const auto e = s.push(SampleMatrix(t.samples.row(i)));
    for (const auto& em : e) {
      CHECK(em.frame == next);
      ++next;
      CHECK(i + 1 == (em.frame + R) * d.hop + d.n_fft);
      CHECK(em.time_s == doctest::Approx(em.frame * d.hop / 250.0));
    }
  }
  CHECK(s.structural_latency_s() == doctest::Approx((d.n_fft + R * d.hop) / 250.0));
  CHECK(s.hop_s() == doctest::Approx(d.hop / 250.0));
}

TEST_CASE("streaming matches the offline pipeline and ignores chunking") {
  Detector<float> m(ArchConfig{}, Head::Streaming, 9);
  SplitMix64 rng(21);
  for (int k = 0; k < 3; ++k) {
    const AccelTrace t = synth(45 + 10 * k, 30 + k);
    const Vec<float> offline = frame_probabilities(m, t);
    StreamingDetector whole(m), single(m), odd(m);
    const auto a = run_all(whole, t.samples, t.length());
    const auto b = run_all(single, t.samples, 1);
    const auto c = run_all(odd, t.samples, static_cast<Index>(rng.uniform(2, 701)));
    REQUIRE(static_cast<Index>(a.size()) == offline.size());
    REQUIRE(b.size() == a.size());
    REQUIRE(c.size() == a.size());
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].frame == static_cast<std::int64_t>(i));
      CHECK(b[i].frame == a[i].frame);
      CHECK(c[i].frame == a[i].frame);
      worst = std::max<double>({worst, std::abs(double(a[i].prob) - offline[Index(i)]),
                        std::abs(double(b[i].prob) - a[i].prob), std::abs(double(c[i].prob) - a[i].prob)});
    }
    INFO("max deviation " << worst);
    CHECK(worst <= 1e-5);
  }
}
