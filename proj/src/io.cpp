#include "stfd/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

namespace stfd {
namespace {

// Splits into lines, dropping one trailing newline and any '\r'.
std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(pos));
      return fields;
    }
    fields.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void data_error(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

double field_double(std::string_view field, std::size_t line_no) {
  double v = 0.0;
  if (!parse_double(field, v)) data_error(line_no, "invalid number '" + std::string(field) + "'");
  return v;
}

}  // namespace

bool parse_double(std::string_view field, double& out) {
  field = trim(field);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size() && std::isfinite(out);
}

bool parse_int(std::string_view field, long long& out) {
  field = trim(field);
  if (field.empty()) return false;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc() && res.ptr == field.data() + field.size();
}

std::string format_float(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void AccelTrace::validate() const {
  if (sample_rate_hz <= 0) throw FormatError("sample_rate_hz must be positive");
  if (length() < 1) throw DataError("trace has no samples");
  if (!samples.allFinite()) throw DataError("trace contains non-finite samples");
}

void EventList::validate() const {
  for (std::size_t i = 0; i < events.size(); ++i) {
    const Event& e = events[i];
    if (!(e.onset_s >= 0.0)) throw DataError("event " + std::to_string(i) + ": negative onset");
    if (!(e.onset_s < e.offset_s)) {
      throw DataError("event " + std::to_string(i) + ": onset must precede offset");
    }
    if (i > 0 && !(events[i - 1].offset_s < e.onset_s)) {
      throw DataError("event " + std::to_string(i) + " overlaps its predecessor");
    }
  }
}

int parse_trace_header(std::string_view line) {
  constexpr std::string_view key = "sample_rate_hz=";
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  if (line.substr(0, key.size()) != key) {
    throw FormatError("trace header must be 'sample_rate_hz=<int>', got '" + std::string(line) + "'");
  }
  long long rate = 0;
  if (!parse_int(line.substr(key.size()), rate)) {
    throw FormatError("trace header: invalid sample rate '" + std::string(line.substr(key.size())) + "'");
  }
  if (rate <= 0 || rate > 1'000'000'000) throw FormatError("trace header: sample rate must be positive");
  return static_cast<int>(rate);
}

std::array<float, 3> parse_sample_line(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = split_fields(line);
  if (fields.size() != 3) data_error(line_no, "expected 3 fields 'x,y,z'");
  std::array<float, 3> out{};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto v = static_cast<float>(field_double(fields[k], line_no));
    if (!std::isfinite(v)) data_error(line_no, "value out of 32-bit range");
    out[k] = v;
  }
  return out;
}

std::string format_sample_line(const float* xyz) {
  std::string s = format_float(xyz[0]);
  s += ',';
  s += format_float(xyz[1]);
  s += ',';
  s += format_float(xyz[2]);
  return s;
}

AccelTrace parse_trace(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw FormatError("empty trace file");
  AccelTrace trace;
  trace.sample_rate_hz = parse_trace_header(lines[0]);
  const auto n = static_cast<Eigen::Index>(lines.size() - 1);
  if (n == 0) throw DataError("trace has no samples");
  trace.samples.resize(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = parse_sample_line(lines[static_cast<std::size_t>(i) + 1],
                                       static_cast<std::size_t>(i) + 2);
    trace.samples.row(i) << row[0], row[1], row[2];
  }
  return trace;
}

std::string emit_trace(const AccelTrace& trace) {
  std::string out = "sample_rate_hz=" + std::to_string(trace.sample_rate_hz) + "\n";
  out.reserve(out.size() + static_cast<std::size_t>(trace.length()) * 32);
  for (Eigen::Index i = 0; i < trace.length(); ++i) {
    out += format_sample_line(trace.samples.row(i).data());
    out += '\n';
  }
  return out;
}

EventList parse_events(std::string_view text) {
  EventList list;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != 2) data_error(i + 1, "expected 'onset_s,offset_s'");
    list.events.push_back({field_double(fields[0], i + 1), field_double(fields[1], i + 1)});
  }
  std::stable_sort(list.events.begin(), list.events.end(),
                   [](const Event& a, const Event& b) { return a.onset_s < b.onset_s; });
  list.validate();
  return list;
}

std::string emit_events(const EventList& events) {
  std::string out;
  for (const Event& e : events.events) {
    out += format_double(e.onset_s);
    out += ',';
    out += format_double(e.offset_s);
    out += '\n';
  }
  return out;
}

std::string format_prediction_line(const Prediction& p) {
  return std::to_string(p.frame) + ',' + format_double(p.time_s) + ',' + format_float(p.prob) +
         ',' + std::to_string(p.label);
}

std::vector<Prediction> parse_predictions(std::string_view text) {
  std::vector<Prediction> preds;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const auto fields = split_fields(lines[i]);
    if (fields.size() != 4) data_error(i + 1, "expected 'frame_index,time_s,prob,label'");
    Prediction p;
    long long frame = 0, label = 0;
    if (!parse_int(fields[0], frame) || frame < 0) data_error(i + 1, "invalid frame index");
    p.frame = frame;
    p.time_s = field_double(fields[1], i + 1);
    p.prob = static_cast<float>(field_double(fields[2], i + 1));
    if (!(p.prob >= 0.0f && p.prob <= 1.0f)) data_error(i + 1, "probability outside [0, 1]");
    if (!parse_int(fields[3], label) || (label != 0 && label != 1)) data_error(i + 1, "label must be 0 or 1");
    p.label = static_cast<int>(label);
    if (!preds.empty() && p.frame <= preds.back().frame) data_error(i + 1, "frame indices must increase");
    preds.push_back(p);
  }
  return preds;
}

std::string emit_predictions(const std::vector<Prediction>& preds) {
  std::string out;
  for (const auto& p : preds) {
    out += format_prediction_line(p);
    out += '\n';
  }
  return out;
}

FrameLabels events_to_frames(const EventList& events, double hop_s, std::int64_t n_frames) {
  if (!(hop_s > 0.0)) throw DataError("events_to_frames: hop_s must be positive");
  if (n_frames < 1) throw DataError("events_to_frames: n_frames must be >= 1");
  FrameLabels out;
  out.hop_s = hop_s;
  out.labels.assign(static_cast<std::size_t>(n_frames), 0);
  std::size_t k = 0;
  for (std::int64_t t = 0; t < n_frames; ++t) {
    const double center = (static_cast<double>(t) + 0.5) * hop_s;
    while (k < events.events.size() && events.events[k].offset_s < center) ++k;
    if (k < events.events.size() && events.events[k].onset_s <= center) {
      out.labels[static_cast<std::size_t>(t)] = 1;
    }
  }
  return out;
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("line " + std::to_string(i + 1) + ": expected key=value");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw FormatError("line " + std::to_string(i + 1) + ": empty key");
    for (const auto& [k, v] : kv) {
      if (k == key) throw FormatError("line " + std::to_string(i + 1) + ": duplicate key '" + key + "'");
    }
    kv.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw FormatError("write failed for '" + path + "'");
}

}  // namespace stfd
