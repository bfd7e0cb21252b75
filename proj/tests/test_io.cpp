#include <doctest.h>

#include "oracles.hpp"
#include "stfd/io.hpp"
#include "stfd/synth.hpp"
#include "suites.hpp"

using namespace stfd;

TEST_CASE("parse_trace") {
  const AccelTrace t = parse_trace("sample_rate_hz=250\n0,0,1\n0,0,1\n");
  CHECK(t.sample_rate_hz == 250);
  CHECK(t.length() == 2);
  CHECK(t.samples(1, 2) == 1.0f);

  CHECK_THROWS_AS(parse_trace("sample_rate_hz=0\n0,0,1\n"), FormatError);
  CHECK_THROWS_AS(parse_trace("rate=250\n0,0,1\n"), FormatError);
  CHECK_THROWS_AS(parse_trace("sample_rate_hz=abc\n0,0,1\n"), FormatError);
  CHECK_THROWS_AS(parse_trace("sample_rate_hz=250\n"), DataError);
  CHECK_THROWS_AS(parse_trace("sample_rate_hz=250\n0,0\n"), DataError);
  CHECK_THROWS_AS(parse_trace("sample_rate_hz=250\n0,nan,1\n"), DataError);
  CHECK_THROWS_AS(parse_trace(""), FormatError);
  try {
    parse_trace("sample_rate_hz=250\n0,0,1\n0,x,1\n");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("trace round trip is byte exact") {
  SynthConfig cfg;
  cfg.duration_s = 10;
  cfg.seed = 9;
  AccelTrace t = synth_trace(cfg).trace;
  t.samples.conservativeResize(1000, 3);
  const std::string text = emit_trace(t);
  CHECK(emit_trace(parse_trace(text)) == text);
  const AccelTrace back = parse_trace(text);
  CHECK((back.samples.array() == t.samples.array()).all());
}

TEST_CASE("parse_events") {
  const EventList ev = parse_events("1.0,5.0\n10.0,20.0\n");
  REQUIRE(ev.size() == 2);
  CHECK(ev.events[1] == Event{10.0, 20.0});
  CHECK(parse_events("10,20\n1,5\n").events[0] == Event{1, 5});
  CHECK_THROWS_AS(parse_events("5.0,1.0\n"), DataError);
  CHECK_THROWS_AS(parse_events("1.0,5.0\n4.0,6.0\n"), DataError);
  CHECK_THROWS_AS(parse_events("-1.0,5.0\n"), DataError);
  CHECK_THROWS_AS(parse_events("1.0\n"), DataError);
  CHECK(parse_events("").empty());
  const std::string text = "0.25,3.5\n7,12.125\n";
  CHECK(emit_events(parse_events(text)) == text);
}

TEST_CASE("prediction CSV") {
  const std::string text = "0,0,0.25,0\n1,0.512,0.75,1\n";
  const auto preds = parse_predictions(text);
  REQUIRE(preds.size() == 2);
  CHECK(preds[1].time_s == 0.512);
  CHECK(preds[1].label == 1);
  CHECK(emit_predictions(preds) == text);
  CHECK_THROWS_AS(parse_predictions("1,0,0.2,0\n0,0,0.2,0\n"), DataError);
  CHECK_THROWS_AS(parse_predictions("0,0,1.5,1\n"), DataError);
  CHECK_THROWS_AS(parse_predictions("0,0,0.5,2\n"), DataError);
  CHECK_THROWS_AS(parse_predictions("0,0,0.5\n"), DataError);
}

TEST_CASE("events_to_frames") {
  EventList ev;
  ev.events = {{1.0, 2.0}};
  const auto fl = events_to_frames(ev, 0.5, 6);
  CHECK(fl.labels == std::vector<std::uint8_t>{0, 0, 1, 1, 0, 0});
  CHECK(events_to_frames(EventList{}, 0.3, 4).labels == std::vector<std::uint8_t>(4, 0));
  CHECK_THROWS_AS(events_to_frames(ev, 0.0, 4), DataError);

  const auto r = suites::events_to_frames_suite(100, 17);
  CHECK(r.cases == 100);
  CHECK(r.mismatches == 0);
}

TEST_CASE("key=value files") {
  const KeyValues kv = parse_key_values("# comment\n a = 1 \n\nb=two words\n");
  REQUIRE(kv.size() == 2);
  CHECK(kv[0] == std::pair<std::string, std::string>{"a", "1"});
  CHECK(kv[1].second == "two words");
  CHECK_THROWS_AS(parse_key_values("a=1\na=2\n"), FormatError);
  CHECK_THROWS_AS(parse_key_values("novalue\n"), FormatError);
}

TEST_CASE("file errors name the path") {
  try {
    read_file("/nonexistent/dir/x.csv");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/x.csv") != std::string::npos);
  }
}
