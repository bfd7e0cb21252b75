#include "stfd/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace stfd {

const char* to_string(Head head) { return head == Head::Segment ? "segment" : "streaming"; }

int receptive_field_frames(std::span<const int> time_kernels) {
  int r = 0;
  for (int k : time_kernels) r += (k - 1) / 2;
  return r;
}

std::vector<int> time_kernels(const ArchConfig& arch) {
  std::vector<int> k;
  for (int b = 0; b < arch.tgram_blocks; ++b) k.push_back(3);  // tgram block convs
  k.push_back(3);                                               // fusion.conv0
  k.push_back(3);                                               // fusion.conv1
  k.push_back(3);                                               // mfn.stem
  for (int b = 0; b < arch.mfn_blocks; ++b) {
    k.push_back(1);  // expand
    k.push_back(3);  // depthwise
    k.push_back(1);  // project
  }
  return k;
}

int receptive_field_frames(const ArchConfig& arch) {
  const auto k = time_kernels(arch);
  return receptive_field_frames(std::span<const int>(k));
}

template <typename S>
FeatureBatch<S> make_batch(std::span<const AccelTrace> traces, const DspConfig& dsp,
                           const MelBank& bank) {
  if (traces.empty()) throw DataError("make_batch: no traces");
  const Index n = static_cast<Index>(traces.size());
  const Index len = traces[0].length();
  const Index frames = frame_count(len, dsp.n_fft, dsp.hop);
  if (frames < 1) {
    throw DataError("trace of " + std::to_string(len) + " samples is shorter than n_fft=" +
                    std::to_string(dsp.n_fft));
  }
  FeatureBatch<S> batch;
  batch.batch = n;
  Vec<S> wave(n * 3 * len);
  Vec<S> spec(n * 3 * dsp.n_mels * frames);
  for (Index i = 0; i < n; ++i) {
    const AccelTrace& tr = traces[static_cast<std::size_t>(i)];
    if (tr.length() != len) throw ShapeError("make_batch: traces differ in length");
    if (tr.sample_rate_hz != traces[0].sample_rate_hz) throw DataError("make_batch: mixed sample rates");
    for (int a = 0; a < 3; ++a) {
      wave.segment((i * 3 + a) * len, len) = tr.samples.col(a).array().template cast<S>();
    }
    const SpectralGram g = log_mel_gram(tr, dsp, bank);
    for (int a = 0; a < 3; ++a) {
      const Index off = (i * 3 + a) * dsp.n_mels * frames;
      spec.segment(off, dsp.n_mels * frames) =
          Eigen::Map<const Eigen::ArrayXd>(g.axes[a].data(), dsp.n_mels * frames).template cast<S>();
    }
  }
  batch.wave = Tensor<S>(Shape{n * 3, 1, len}, std::move(wave));
  batch.spectral = Tensor<S>(Shape{n, 3, dsp.n_mels, frames}, std::move(spec));
  return batch;
}

template <typename S>
Detector<S>::Detector(const ArchConfig& arch, Head head, std::uint64_t seed)
    : arch_(arch), head_(head), rng_(seed) {
  validate(arch_.dsp, arch_.sample_rate_hz);
  if (arch_.dsp.n_mels % 4 != 0) throw ConfigError("n_mels must be divisible by 4");
  mel_ = mel_bank(arch_.sample_rate_hz, arch_.dsp.n_fft, arch_.dsp.n_mels, arch_.dsp.fmin_hz,
                  arch_.dsp.fmax_hz);
  const Index m = arch_.dsp.n_mels;
  const Index nfft = arch_.dsp.n_fft;

  add_weight("tgram.stem.conv.w", {m, 1, nfft}, nfft);
  add_zeros("tgram.stem.conv.b", {m});
  for (int b = 0; b < arch_.tgram_blocks; ++b) {
    const std::string pre = "tgram.block" + std::to_string(b);
    add_ones(pre + ".ln.gamma", {m});
    add_zeros(pre + ".ln.beta", {m});
    add_weight(pre + ".conv.w", {m, m, 3}, m * 3);
    add_zeros(pre + ".conv.b", {m});
  }

  const Index fc = arch_.fusion_channels;
  add_weight("fusion.conv0.w", {fc, 6, 3, 3}, 6 * 9);
  add_bn("fusion.bn0", fc);
  add_weight("fusion.conv1.w", {1, fc, 3, 3}, fc * 9);
  add_zeros("fusion.conv1.b", {1});

  const Index stem = arch_.mfn_stem_channels;
  add_weight("mfn.stem.conv.w", {stem, 1, 3, 3}, 9);
  add_bn("mfn.stem.bn", stem);
  Index in_c = stem;
  const Index out_c = arch_.projected_channels;
  for (int b = 0; b < arch_.mfn_blocks; ++b) {
    const std::string pre = "mfn.block" + std::to_string(b);
    const Index mid = in_c * arch_.mfn_expand;
    add_weight(pre + ".expand.conv.w", {mid, in_c, 1, 1}, in_c);
    add_bn(pre + ".expand.bn", mid);
    add_weight(pre + ".dw.conv.w", {mid, 1, 3, 3}, 9);
    add_weight(pre + ".project.conv.w", {out_c, mid, 1, 1}, mid);
    add_bn(pre + ".project.bn", out_c);
    in_c = out_c;
  }

  if (head_ == Head::Segment) {
    add_weight("head.seg.linear.w", {1, out_c}, out_c);
    add_zeros("head.seg.linear.b", {1});
  } else {
    const Index flat = out_c * (m / 4);
    add_weight("head.stream.linear.w", {1, flat}, flat);
    add_zeros("head.stream.linear.b", {1});
  }
}

template <typename S>
void Detector<S>::add_weight(const std::string& name, Shape shape, Index fan_in) {
  // Kaiming-uniform, fan-in mode.
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Vec<S> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<S>(rng_.uniform(-bound, bound));
  params_.add(name, Tensor<S>(std::move(shape), std::move(v), true));
}

template <typename S>
void Detector<S>::add_zeros(const std::string& name, Shape shape, bool trainable) {
  params_.add(name, Tensor<S>(std::move(shape), trainable));
}

template <typename S>
void Detector<S>::add_ones(const std::string& name, Shape shape, bool trainable) {
  Tensor<S> t(std::move(shape), trainable);
  t.value().setOnes();
  params_.add(name, std::move(t));
}

template <typename S>
void Detector<S>::add_bn(const std::string& prefix, Index channels) {
  add_ones(prefix + ".gamma", {channels});
  add_zeros(prefix + ".beta", {channels});
  add_zeros(prefix + ".running_mean", {channels}, false);
  add_ones(prefix + ".running_var", {channels}, false);
}

template <typename S>
Tensor<S> Detector<S>::bn(const Tensor<S>& x, const std::string& prefix, Mode mode) {
  return batch_norm(x, p(prefix + ".gamma"), p(prefix + ".beta"), p(prefix + ".running_mean"),
                    p(prefix + ".running_var"), mode);
}

template <typename S>
Tensor<S> Detector<S>::temporal_gram(const Tensor<S>& wave, Index batch) {
  const auto slope = static_cast<S>(arch_.leaky_slope);
  Tensor<S> x = conv1d(wave, p("tgram.stem.conv.w"), p("tgram.stem.conv.b"), arch_.dsp.hop, 0);
  for (int b = 0; b < arch_.tgram_blocks; ++b) {
    const std::string pre = "tgram.block" + std::to_string(b);
    x = layer_norm(x, p(pre + ".ln.gamma"), p(pre + ".ln.beta"), 1);
    x = leaky_relu(x, slope);
    x = conv1d(x, p(pre + ".conv.w"), p(pre + ".conv.b"), 1, 1);
  }
  return reshape(x, Shape{batch, 3, x.dim(1), x.dim(2)});
}

template <typename S>
Tensor<S> Detector<S>::fuse(const Tensor<S>& hs, const Tensor<S>& ht, Mode mode) {
  if (hs.shape() != ht.shape()) {
    throw ShapeError("fuse: spectral " + to_string(hs.shape()) + " vs temporal " + to_string(ht.shape()));
  }
  Conv2dOptions same;
  same.pad = {1, 1};
  Tensor<S> x = concat(std::vector<Tensor<S>>{hs, ht}, 1);
  x = relu(bn(conv2d(x, p("fusion.conv0.w"), Tensor<S>(), same), "fusion.bn0", mode));
  return conv2d(x, p("fusion.conv1.w"), p("fusion.conv1.b"), same);
}

template <typename S>
Tensor<S> Detector<S>::project(const Tensor<S>& h, Mode mode) {
  Conv2dOptions stem;
  stem.stride = {2, 1};
  stem.pad = {1, 1};
  Tensor<S> x = relu(bn(conv2d(h, p("mfn.stem.conv.w"), Tensor<S>(), stem), "mfn.stem.bn", mode));
  for (int b = 0; b < arch_.mfn_blocks; ++b) {
    const std::string pre = "mfn.block" + std::to_string(b);
    Tensor<S> y = relu(bn(conv2d(x, p(pre + ".expand.conv.w"), Tensor<S>()), pre + ".expand.bn", mode));
    Conv2dOptions dw;
    dw.stride = {b == 0 ? 2 : 1, 1};
    dw.pad = {1, 1};
    dw.groups = y.dim(1);
    y = conv2d(y, p(pre + ".dw.conv.w"), Tensor<S>(), dw);
    y = bn(conv2d(y, p(pre + ".project.conv.w"), Tensor<S>()), pre + ".project.bn", mode);
    x = y.shape() == x.shape() ? add(x, y) : y;
  }
  return x;
}

template <typename S>
Tensor<S> Detector<S>::segment_head(const Tensor<S>& projected) {
  Tensor<S> pooled = global_avg_pool(projected, 2);
  Tensor<S> logits = linear(pooled, p("head.seg.linear.w"), p("head.seg.linear.b"));
  return reshape(sigmoid(logits), Shape{projected.dim(0)});
}

template <typename S>
Tensor<S> Detector<S>::streaming_head(const Tensor<S>& projected) {
  const Index n = projected.dim(0), c = projected.dim(1), m = projected.dim(2), t = projected.dim(3);
  Tensor<S> rows = reshape(permute(projected, {0, 3, 1, 2}), Shape{n * t, c * m});
  Tensor<S> logits = linear(rows, p("head.stream.linear.w"), p("head.stream.linear.b"));
  return reshape(sigmoid(logits), Shape{n, t});
}

template <typename S>
Tensor<S> Detector<S>::forward(const FeatureBatch<S>& batch, Mode mode) {
  Tensor<S> ht = temporal_gram(batch.wave, batch.batch);
  Tensor<S> h = fuse(batch.spectral, ht, mode);
  Tensor<S> projected = project(h, mode);
  return head_ == Head::Segment ? segment_head(projected) : streaming_head(projected);
}

template <typename S>
void Detector<S>::load(const ParamStore<float>& store) {
  std::set<std::string> have;
  for (const auto& e : store) have.insert(e.name);
  std::string missing, extra, shapes;
  for (const auto& e : params_) {
    if (!have.count(e.name)) {
      missing += (missing.empty() ? "" : ", ") + e.name;
    } else if (store.at(e.name).shape() != e.tensor.shape()) {
      shapes += (shapes.empty() ? "" : ", ") + e.name + " " + to_string(store.at(e.name).shape()) +
                " != " + to_string(e.tensor.shape());
    }
  }
  for (const auto& e : store) {
    if (!params_.contains(e.name)) extra += (extra.empty() ? "" : ", ") + e.name;
  }
  if (!missing.empty() || !extra.empty() || !shapes.empty()) {
    std::string msg = std::string("checkpoint does not match the ") + stfd::to_string(head_) + " detector;";
    if (!missing.empty()) msg += " missing: " + missing + ";";
    if (!extra.empty()) msg += " extra: " + extra + ";";
    if (!shapes.empty()) msg += " shape mismatch: " + shapes + ";";
    throw FormatError(msg);
  }
  for (auto& e : params_) e.tensor.value() = store.at(e.name).value().template cast<S>();
}

template <typename S>
ParamStore<float> Detector<S>::export_params() const {
  return cast_store<float>(params_);
}

namespace {

void check_rate(const Detector<float>& model, const AccelTrace& trace) {
  if (trace.sample_rate_hz != model.arch().sample_rate_hz) {
    throw DataError("trace sample rate " + std::to_string(trace.sample_rate_hz) + " Hz does not match the model's " +
                    std::to_string(model.arch().sample_rate_hz) + " Hz");
  }
}

}  // namespace

Vec<float> frame_probabilities(Detector<float>& model, const AccelTrace& trace) {
  check_rate(model, trace);
  const auto batch = make_batch<float>(std::span<const AccelTrace>(&trace, 1), model.arch().dsp, model.mel());
  if (model.head() != Head::Streaming) throw UsageError("frame_probabilities needs a streaming detector");
  return model.forward(batch, Mode::Eval).value();
}

float segment_probability(Detector<float>& model, const AccelTrace& trace) {
  check_rate(model, trace);
  const auto batch = make_batch<float>(std::span<const AccelTrace>(&trace, 1), model.arch().dsp, model.mel());
  if (model.head() != Head::Segment) throw UsageError("segment_probability needs a segment detector");
  return model.forward(batch, Mode::Eval).value()[0];
}

template class Detector<float>;
template class Detector<double>;
template FeatureBatch<float> make_batch(std::span<const AccelTrace>, const DspConfig&, const MelBank&);
template FeatureBatch<double> make_batch(std::span<const AccelTrace>, const DspConfig&, const MelBank&);

}  // namespace stfd
