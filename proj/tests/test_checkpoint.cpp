#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "stfd/checkpoint.hpp"
#include "stfd/model.hpp"

using namespace stfd;

TEST_CASE("empty store is 12 bytes of header and round trips") {
  const std::string bytes = serialize_checkpoint(ParamStore<float>{});
  // magic (4) + version (4) + entry count (4)
  CHECK(bytes.size() == 12);
  CHECK(bytes.substr(0, 4) == "STFD");
  CHECK(deserialize_checkpoint(bytes).size() == 0);
}

TEST_CASE("single tensor round trips bitwise with the documented layout") {
  ParamStore<float> ps;
  ps.add("w", Tensor<float>({2, 2}, Vec<float>{{1.5f, -0.0f, 3e-38f, 7}}));
  const std::string bytes = serialize_checkpoint(ps);
  // header 12 + name_len 2 + name 1 + rank 1 + dims 8 + payload 16
  CHECK(bytes.size() == 40);
  CHECK(static_cast<unsigned char>(bytes[4]) == kCheckpointVersion);
  const ParamStore<float> back = deserialize_checkpoint(bytes);
  CHECK(bitwise_equal(ps, back));
  CHECK(serialize_checkpoint(back) == bytes);
}

TEST_CASE("malformed checkpoints are rejected") {
  ParamStore<float> ps;
  ps.add("a", Tensor<float>({3}, Vec<float>{{1, 2, 3}}));
  const std::string good = serialize_checkpoint(ps);
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
  bad = good;
  bad[4] = 9;
  CHECK_THROWS_AS(deserialize_checkpoint(bad), FormatError);
  for (std::size_t cut = 0; cut < good.size(); ++cut) {
    CHECK_THROWS_AS(deserialize_checkpoint(good.substr(0, cut)), FormatError);
  }
  CHECK_THROWS_AS(deserialize_checkpoint(good + "x"), FormatError);

  ParamStore<float> nan;
  nan.add("n", Tensor<float>({1}, Vec<float>{{std::nanf("")}}));
  CHECK_THROWS_AS(serialize_checkpoint(nan), DataError);
}

TEST_CASE("full detector round trip gives bitwise-identical predictions") {
  ArchConfig arch;
  Detector<float> a(arch, Head::Streaming, 5);
  const auto path = (std::filesystem::temp_directory_path() / "stfd_ckpt_test.ckpt").string();
  save_checkpoint(a.export_params(), path);
  Detector<float> b(arch, Head::Streaming, 99);
  b.load(load_checkpoint(path));
  std::remove(path.c_str());

  AccelTrace t;
  t.samples = SampleMatrix::Random(256 + 30 * 128, 3);
  const Vec<float> pa = frame_probabilities(a, t);
  const Vec<float> pb = frame_probabilities(b, t);
  CHECK((pa == pb).all());

  Detector<float> seg(arch, Head::Segment, 1);
  try {
    seg.load(a.export_params());
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("head.seg.linear.w") != std::string::npos);
    CHECK(msg.find("head.stream.linear.w") != std::string::npos);
  }
}
