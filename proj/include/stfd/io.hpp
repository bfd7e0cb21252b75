#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stfd/errors.hpp"

namespace stfd {

// N x 3 row-major matrix of (x, y, z) acceleration samples.
using SampleMatrix = Eigen::Matrix<float, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct AccelTrace {
  int sample_rate_hz = 250;
  SampleMatrix samples;

  Eigen::Index length() const { return samples.rows(); }
  double duration_s() const { return static_cast<double>(length()) / sample_rate_hz; }

  // Throws DataError (empty, non-finite) or FormatError (rate <= 0).
  void validate() const;
};

struct Event {
  double onset_s = 0.0;
  double offset_s = 0.0;

  double duration() const { return offset_s - onset_s; }
  friend bool operator==(const Event&, const Event&) = default;
};

// Sorted, disjoint "in bed" intervals.
struct EventList {
  std::vector<Event> events;

  std::size_t size() const { return events.size(); }
  bool empty() const { return events.empty(); }
  // Throws DataError unless 0 <= onset < offset and events strictly increase.
  void validate() const;
  friend bool operator==(const EventList&, const EventList&) = default;
};

struct FrameLabels {
  double hop_s = 0.0;
  std::vector<std::uint8_t> labels;
};

struct Prediction {
  std::int64_t frame = 0;
  double time_s = 0.0;  // frame * hop_s
  float prob = 0.0f;
  int label = 0;
};

// ---- trace CSV: "sample_rate_hz=<int>" header, then "x,y,z" rows ----
AccelTrace parse_trace(std::string_view text);
std::string emit_trace(const AccelTrace& trace);
// Pieces used by incremental readers (the `stream` command).
int parse_trace_header(std::string_view line);
std::array<float, 3> parse_sample_line(std::string_view line, std::size_t line_no);
std::string format_sample_line(const float* xyz);

// ---- event CSV: "onset_s,offset_s" rows ----
EventList parse_events(std::string_view text);
std::string emit_events(const EventList& events);

// ---- prediction CSV: "frame_index,time_s,prob,label" rows ----
std::vector<Prediction> parse_predictions(std::string_view text);
std::string emit_predictions(const std::vector<Prediction>& preds);
std::string format_prediction_line(const Prediction& p);

// Frame t is labeled 1 iff its center (t + 0.5) * hop_s lies in a closed
// interval [onset_s, offset_s] of `events`.
FrameLabels events_to_frames(const EventList& events, double hop_s, std::int64_t n_frames);

// ---- flat key=value text ----
// Blank lines and lines starting with '#' are skipped. Duplicate keys are an
// error. Order is preserved.
using KeyValues = std::vector<std::pair<std::string, std::string>>;
KeyValues parse_key_values(std::string_view text);

// Shortest round-trip decimal forms used by every writer.
std::string format_float(float v);
std::string format_double(double v);
// Parse a full field as a finite double; std::nullopt-like failure is signalled
// by returning false.
bool parse_double(std::string_view field, double& out);
bool parse_int(std::string_view field, long long& out);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace stfd
