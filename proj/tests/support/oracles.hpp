#pragma once

// Independent brute-force reference implementations used by the tests.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <vector>

#include "stfd/io.hpp"

namespace oracle {

// O(n^2) DFT of Hann-windowed frames; returns bins x frames.
inline Eigen::ArrayXXd direct_stft_power(const Eigen::ArrayXd& x, int n_fft, int hop) {
  const Eigen::Index frames = 1 + (x.size() - n_fft) / hop;
  const long double pi = std::numbers::pi_v<long double>;
  std::vector<long double> window(static_cast<std::size_t>(n_fft)), re(static_cast<std::size_t>(n_fft)),
      im(static_cast<std::size_t>(n_fft));
  for (int n = 0; n < n_fft; ++n) {
    window[static_cast<std::size_t>(n)] = 0.5L - 0.5L * std::cos(2.0L * pi * n / (n_fft - 1));
    re[static_cast<std::size_t>(n)] = std::cos(-2.0L * pi * n / n_fft);
    im[static_cast<std::size_t>(n)] = std::sin(-2.0L * pi * n / n_fft);
  }
  Eigen::ArrayXXd out(n_fft / 2 + 1, frames);
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (int k = 0; k <= n_fft / 2; ++k) {
      long double ar = 0.0L, ai = 0.0L;
      for (int n = 0; n < n_fft; ++n) {
        const auto idx = static_cast<std::size_t>((static_cast<long>(k) * n) % n_fft);
        const long double v = static_cast<long double>(x[f * hop + n]) * window[static_cast<std::size_t>(n)];
        ar += v * re[idx];
        ai += v * im[idx];
      }
      out(k, f) = static_cast<double>(ar * ar + ai * ai);
    }
  }
  return out;
}

// Triangular filters straight from the definition: peaks equally spaced on
// mel(f) = 2595 log10(1 + f / 700), each row scaled to unit sum.
inline Eigen::MatrixXd naive_mel(int sr, int n_fft, int n_mels, double fmin, double fmax) {
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<double> pts;
  for (int i = 0; i < n_mels + 2; ++i) pts.push_back(hz(mel(fmin) + i * (mel(fmax) - mel(fmin)) / (n_mels + 1)));
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_mels, n_fft / 2 + 1);
  for (int m = 0; m < n_mels; ++m) {
    for (int b = 0; b <= n_fft / 2; ++b) {
      const double f = static_cast<double>(b) * sr / n_fft;
      double v = 0.0;
      if (f > pts[m] && f <= pts[m + 1]) v = (f - pts[m]) / (pts[m + 1] - pts[m]);
      if (f > pts[m + 1] && f < pts[m + 2]) v = (pts[m + 2] - f) / (pts[m + 2] - pts[m + 1]);
      w(m, b) = v;
    }
    const double s = w.row(m).sum();
    if (s > 0) w.row(m) /= s;
  }
  return w;
}

inline std::vector<std::uint8_t> frames_by_scan(const stfd::EventList& ev, double hop_s, std::int64_t n) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n), 0);
  for (std::int64_t t = 0; t < n; ++t) {
    const double c = (t + 0.5) * hop_s;
    for (const auto& e : ev.events) {
      if (e.onset_s <= c && c <= e.offset_s) out[static_cast<std::size_t>(t)] = 1;
    }
  }
  return out;
}

inline double segment_accuracy(const std::vector<double>& p, const std::vector<int>& y, double thr) {
  int ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    int pred = 0;
    if (p[i] > thr) pred = 1;
    if (pred == y[i]) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

// Hysteresis state per frame, then runs, gap merging and duration filter.
inline stfd::EventList extract_events(const std::vector<float>& p, double hop, double on, double off,
                                      double min_dur, double min_gap) {
  std::vector<int> state(p.size(), 0);
  for (std::size_t t = 0; t < p.size(); ++t) {
    const int prev = t == 0 ? 0 : state[t - 1];
    state[t] = prev ? (p[t] >= off ? 1 : 0) : (p[t] >= on ? 1 : 0);
  }
  std::vector<std::pair<double, double>> runs;
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (state[t] && (t == 0 || !state[t - 1])) runs.push_back({(t + 0.5) * hop, 0.0});
    if (state[t] && (t + 1 == p.size() || !state[t + 1])) runs.back().second = (t + 0.5) * hop;
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
      if (runs[i + 1].first - runs[i].second < min_gap) {
        runs[i].second = runs[i + 1].second;
        runs.erase(runs.begin() + static_cast<long>(i) + 1);
        changed = true;
        break;
      }
    }
  }
  stfd::EventList out;
  for (const auto& [a, b] : runs) {
    if (b - a > 0.0 && !(b - a < min_dur)) out.events.push_back({a, b});
  }
  return out;
}

inline double overlap(const stfd::Event& a, const stfd::Event& b) {
  return std::max(0.0, std::min(a.offset_s, b.offset_s) - std::max(a.onset_s, b.onset_s));
}

// Enumerates every one-to-one matching over positively overlapping pairs and
// returns the one whose overlaps, sorted in decreasing order, are
// lexicographically largest: the matching greedy selection must produce when
// overlaps are distinct.
struct Matching {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total = 0.0;
};

inline Matching exhaustive_greedy_matching(const stfd::EventList& pred, const stfd::EventList& truth) {
  Matching best;
  std::vector<double> best_key;
  std::vector<std::pair<std::size_t, std::size_t>> cur;
  std::vector<bool> used(truth.size(), false);
  auto key_of = [&](const std::vector<std::pair<std::size_t, std::size_t>>& m) {
    std::vector<double> k;
    for (auto [i, j] : m) k.push_back(overlap(pred.events[i], truth.events[j]));
    std::sort(k.rbegin(), k.rend());
    return k;
  };
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == pred.size()) {
      auto k = key_of(cur);
      if (std::lexicographical_compare(best_key.begin(), best_key.end(), k.begin(), k.end())) {
        best_key = k;
        best.pairs = cur;
      }
      return;
    }
    self(self, i + 1);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (used[j] || overlap(pred.events[i], truth.events[j]) <= 0.0) continue;
      used[j] = true;
      cur.emplace_back(i, j);
      self(self, i + 1);
      cur.pop_back();
      used[j] = false;
    }
  };
  rec(rec, 0);
  for (auto [i, j] : best.pairs) best.total += overlap(pred.events[i], truth.events[j]);
  return best;
}

// Maximum total overlap over all matchings (for reference only).
inline double max_total_overlap(const stfd::EventList& pred, const stfd::EventList& truth) {
  double best = 0.0;
  std::vector<bool> used(truth.size(), false);
  auto rec = [&](auto&& self, std::size_t i, double acc) -> void {
    if (i == pred.size()) {
      best = std::max(best, acc);
      return;
    }
    self(self, i + 1, acc);
    for (std::size_t j = 0; j < truth.size(); ++j) {
      const double ov = overlap(pred.events[i], truth.events[j]);
      if (used[j] || ov <= 0.0) continue;
      used[j] = true;
      self(self, i + 1, acc + ov);
      used[j] = false;
    }
  };
  rec(rec, 0, 0.0);
  return best;
}

}  // namespace oracle
