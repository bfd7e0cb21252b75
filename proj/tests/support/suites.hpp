#pragma once

// Randomized check suites shared by the unit tests and the acceptance gate.

#include <cstdint>
#include <string>
#include <vector>

namespace suites {

struct CheckResult {
  std::string name;
  int cases = 0;
  double max_error = 0.0;  // suite-specific error measure
  int mismatches = 0;      // for exact-equality suites
};

// Finite-difference gradient checks in 64-bit for every differentiable op and
// loss. Error per element: |analytic - numeric| / max(1, |analytic|, |numeric|).
std::vector<CheckResult> gradient_suite(int shapes_per_op, std::uint64_t seed);

// stft_power vs direct DFT (relative error per entry), mel_bank vs formula
// (absolute), log_mel_gram shift covariance (absolute, interior frames).
std::vector<CheckResult> dsp_suite(int cases, std::uint64_t seed);

// Exact-agreement checks against brute-force references.
CheckResult extract_events_suite(int cases, std::uint64_t seed);
CheckResult segment_accuracy_suite(int cases, std::uint64_t seed);
CheckResult match_events_suite(int cases, std::uint64_t seed);
CheckResult events_to_frames_suite(int cases, std::uint64_t seed);

}  // namespace suites
