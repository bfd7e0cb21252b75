#include <doctest.h>

#include <array>

#include "stfd/losses.hpp"
#include "stfd/model.hpp"

using namespace stfd;

namespace {

AccelTrace random_trace(Index n, std::uint64_t seed, float amp = 0.05f) {
  SplitMix64 rng(seed);
  AccelTrace t;
  t.samples.resize(n, 3);
  for (Index i = 0; i < t.samples.size(); ++i) t.samples.data()[i] = static_cast<float>(rng.uniform(-amp, amp));
  return t;
}

template <typename S>
FeatureBatch<S> batch_of(Detector<S>& m, const AccelTrace& t) {
  return make_batch<S>(std::span<const AccelTrace>(&t, 1), m.arch().dsp, m.mel());
}

void zero_params(ParamStore<float>& ps, std::string_view prefix) {
  for (auto& e : ps) {
    if (e.name.rfind(prefix, 0) == 0 && e.name.find("running_var") == std::string::npos) e.tensor.value().setZero();
  }
}

}  // namespace

TEST_CASE("feature shapes stay frame aligned") {
  Detector<float> m(ArchConfig{}, Head::Streaming, 1);
  const AccelTrace t = random_trace(15000, 2);
  const auto b = batch_of(m, t);
  CHECK(b.spectral.shape() == Shape{1, 3, 32, 116});
  const auto ht = m.temporal_gram(b.wave, 1);
  CHECK(ht.shape() == Shape{1, 3, 32, 116});
  const auto h = m.fuse(b.spectral, ht, Mode::Eval);
  CHECK(h.shape() == Shape{1, 1, 32, 116});
  const auto hp = m.project(h, Mode::Eval);
  CHECK(hp.shape() == Shape{1, 64, 8, 116});
  CHECK(m.streaming_head(hp).shape() == Shape{1, 116});
  CHECK_THROWS_AS(m.fuse(b.spectral, Tensor<float>({1, 3, 32, 115}), Mode::Eval), ShapeError);
  CHECK_THROWS_AS(frame_probabilities(m, random_trace(100, 1)), DataError);
  AccelTrace other = t;
  other.sample_rate_hz = 100;
  CHECK_THROWS_AS(frame_probabilities(m, other), DataError);
}

TEST_CASE("TgramNet: zero input with zero biases gives zero output") {
  Detector<float> m(ArchConfig{}, Head::Segment, 3);
  AccelTrace t;
  t.samples = SampleMatrix::Zero(2000, 3);
  const auto b = batch_of(m, t);
  CHECK(m.temporal_gram(b.wave, 1).value().abs().maxCoeff() == 0);
}

TEST_CASE("TgramNet: delaying by one hop shifts interior frames by one") {
  ArchConfig arch;
  Detector<float> m(arch, Head::Segment, 4);
  for (auto& e : m.params()) {
    if (e.name.find(".b") != std::string::npos || e.name.find("beta") != std::string::npos) {
      SplitMix64 r(11);
      for (auto& v : e.tensor.value()) v = static_cast<float>(r.uniform(-0.2, 0.2));
    }
  }
  const AccelTrace a = random_trace(256 + 40 * 128, 5);
  AccelTrace b = a;
  b.samples.topRows(128).setZero();
  b.samples.bottomRows(a.length() - 128) = a.samples.topRows(a.length() - 128);
  const auto ta = m.temporal_gram(batch_of(m, a).wave, 1);
  const auto tb = m.temporal_gram(batch_of(m, b).wave, 1);
  const Index T = ta.dim(3);
  const int r = arch.tgram_blocks;  // one frame of context per block
  float worst = 0;
  for (Index c = 0; c < 3 * 32; ++c) {
    for (Index t = r + 1; t + r + 1 < T; ++t) {
      worst = std::max(worst, std::abs(tb.value()[c * T + t + 1] - ta.value()[c * T + t]));
    }
  }
  CHECK(worst < 1e-5f);
}

TEST_CASE("fusion is deterministic and feeds gradient to both branches") {
  Detector<float> m(ArchConfig{}, Head::Segment, 6);
  const AccelTrace t = random_trace(256 + 20 * 128, 7);
  const auto b = batch_of(m, t);
  const auto ht = m.temporal_gram(b.wave, 1);
  CHECK((m.fuse(b.spectral, ht, Mode::Eval).value() == m.fuse(b.spectral, ht, Mode::Eval).value()).all());

  m.params().zero_grads();
  const auto p = m.forward(b, Mode::Train);
  backward(bce(p, Tensor<float>({1}, Vec<float>::Ones(1))));
  const Vec<float>& g = m.params().at("fusion.conv0.w").grad();  // (16, 6, 3, 3)
  double hs = 0, hts = 0;
  for (Index o = 0; o < 16; ++o) {
    for (Index c = 0; c < 6; ++c) {
      const double s = g.segment((o * 6 + c) * 9, 9).abs().sum();
      (c < 3 ? hs : hts) += s;
    }
  }
  CHECK(hs > 0);
  CHECK(hts > 0);
  CHECK(m.params().at("tgram.stem.conv.w").grad().abs().sum() > 0);
}

TEST_CASE("zeroed residual blocks act as identity") {
  ArchConfig full, one = full;
  one.mfn_blocks = 1;
  Detector<float> a(full, Head::Segment, 8);
  Detector<float> b(one, Head::Segment, 9);
  for (auto& e : b.params()) e.tensor.value() = a.params().at(e.name).value();
  zero_params(a.params(), "mfn.block1.");
  zero_params(a.params(), "mfn.block2.");
  Tensor<float> h({1, 1, 32, 12}, Vec<float>::LinSpaced(32 * 12, -1, 1));
  CHECK((a.project(h, Mode::Eval).value() == b.project(h, Mode::Eval).value()).all());
}

TEST_CASE("heads with zero weights output one half") {
  Detector<float> seg(ArchConfig{}, Head::Segment, 1);
  zero_params(seg.params(), "head.");
  CHECK(segment_probability(seg, random_trace(3000, 1)) == 0.5f);

  Detector<float> st(ArchConfig{}, Head::Streaming, 1);
  zero_params(st.params(), "head.");
  for (Index frames : {1, 116, 400}) {
    const Vec<float> p = frame_probabilities(st, random_trace(256 + (frames - 1) * 128, 2));
    CHECK(p.size() == frames);
    CHECK((p == 0.5f).all());
  }

  Detector<float> big(ArchConfig{}, Head::Segment, 2);
  big.params().at("head.seg.linear.b").value().setConstant(1e4f);
  const float p = segment_probability(big, random_trace(3000, 1));
  CHECK(p <= 1.0f - static_cast<float>(kProbEps) * 0.5f);
  CHECK(p > 0.5f);
}

TEST_CASE("streaming head is frame-wise") {
  Detector<float> m(ArchConfig{}, Head::Streaming, 12);
  SplitMix64 rng(3);
  const Index T = 10;
  Vec<float> v(64 * 8 * T);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  const Tensor<float> h({1, 64, 8, T}, v);
  std::vector<Index> perm(T);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  Vec<float> pv(v.size());
  for (Index r = 0; r < 64 * 8; ++r) {
    for (Index t = 0; t < T; ++t) pv[r * T + t] = v[r * T + perm[static_cast<std::size_t>(t)]];
  }
  const Vec<float> out = m.streaming_head(h).value();
  const Vec<float> pout = m.streaming_head(Tensor<float>({1, 64, 8, T}, pv)).value();
  for (Index t = 0; t < T; ++t) CHECK(pout[t] == out[perm[static_cast<std::size_t>(t)]]);
}

TEST_CASE("receptive field") {
  CHECK(receptive_field_frames(ArchConfig{}) == 9);
  const std::array<int, 5> ones{1, 1, 1, 1, 1};
  CHECK(receptive_field_frames(std::span<const int>(ones)) == 0);
  const std::array<int, 3> mixed{3, 5, 1};
  CHECK(receptive_field_frames(std::span<const int>(mixed)) == 3);
}

TEST_CASE("outputs ignore input beyond the receptive field") {
  ArchConfig arch;
  const int R = receptive_field_frames(arch);
  const Index hop = arch.dsp.hop, n_fft = arch.dsp.n_fft;
  Detector<float> m(arch, Head::Streaming, 21);
  const Index T = 2 * R + 6;
  const AccelTrace base = random_trace(n_fft + (T - 1) * hop, 22);
  const Vec<float> p0 = frame_probabilities(m, base);
  SplitMix64 rng(23);
  int probes = 0, violations = 0, inside_changes = 0;
  while (probes < 1000) {
    const Index t = static_cast<Index>(rng.uniform() * T);
    const Index lo = (t - R) * hop, hi = (t + R) * hop + n_fft;  // samples frame t may depend on
    const Index s = static_cast<Index>(rng.uniform() * base.length());
    AccelTrace probe = base;
    probe.samples(s, static_cast<Index>(rng.uniform() * 3)) += static_cast<float>(rng.uniform(0.5, 2.0));
    const Vec<float> p = frame_probabilities(m, probe);
    if (s < lo || s >= hi) {
      ++probes;
      if (p[t] != p0[t]) ++violations;
    } else if (p[t] != p0[t]) {
      ++inside_changes;
    }
  }
  CHECK(violations == 0);
  CHECK(inside_changes > 0);
}

TEST_CASE("end-to-end gradient matches finite differences on probe parameters") {
  ArchConfig arch;
  Detector<double> m(arch, Head::Segment, 31);
  const AccelTrace t = random_trace(256 + 11 * 128, 32);
  const auto b = make_batch<double>(std::span<const AccelTrace>(&t, 1), arch.dsp, m.mel());
  const Tensor<double> y({1}, Vec<double>::Ones(1));
  auto loss = [&] { return bce(m.forward(b, Mode::Train), y); };
  m.params().zero_grads();
  backward(loss());
  const std::array<std::pair<const char*, Index>, 3> probes{
      {{"tgram.block0.conv.w", 17}, {"fusion.conv0.w", 40}, {"mfn.block2.project.conv.w", 5}}};
  for (const auto& [name, idx] : probes) {
    Tensor<double>& p = m.params().at(name);
    const double analytic = p.grad()[idx];
    const double saved = p.value()[idx];
    const double h = 1e-5;
    p.value()[idx] = saved + h;
    const double up = loss().item();
    p.value()[idx] = saved - h;
    const double down = loss().item();
    p.value()[idx] = saved;
    const double numeric = (up - down) / (2 * h);
    INFO(name);
    CHECK(std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)}) < 1e-6);
    CHECK(analytic != 0.0);
  }
}

TEST_CASE("eval-mode forward is deterministic") {
  Detector<float> m(ArchConfig{}, Head::Streaming, 41);
  const AccelTrace t = random_trace(5000, 42);
  CHECK((frame_probabilities(m, t) == frame_probabilities(m, t)).all());
  Detector<float> m2(ArchConfig{}, Head::Streaming, 41);
  CHECK((frame_probabilities(m2, t) == frame_probabilities(m, t)).all());
}
