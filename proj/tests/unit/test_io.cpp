#include <doctest.h>

#include <filesystem>

#include "dynvla/common/error.hpp"
#include "dynvla/io/array_file.hpp"

using namespace dynvla;
using namespace dynvla::io;

namespace {
ArrayFile sample() {
  ArrayFile f;
  f.set_meta("kind", "test");
  f.set_meta("seed", "42");
  const std::vector<float> a{1.5f, -2.0f, 3.25f, 0.0f, 1e-7f, 9.0f};
  const std::vector<double> b{3.141592653589793, -1e300};
  const std::vector<std::uint8_t> c{0, 255, 7};
  const std::vector<std::int64_t> d{-5, 1LL << 40};
  f.add_f32("a", {2, 3}, a);
  f.add_f64("b", {2}, b);
  f.add_u8("c", {3}, c);
  f.add_i64("d", {2}, d);
  return f;
}
}  // namespace

TEST_CASE("array file round trip") {
  const auto f = sample();
  const auto bytes = f.serialize();
  CHECK(bytes.rfind("DYNVLA-ARRAYS 1\n", 0) == 0);
  const auto g = ArrayFile::parse(bytes);
  CHECK(g.meta("seed") == std::optional<std::string>("42"));
  CHECK_FALSE(g.meta("missing").has_value());
  CHECK(g.f32("a") == f.f32("a"));
  CHECK(g.f64("b") == f.f64("b"));
  CHECK(g.u8("c") == f.u8("c"));
  CHECK(g.i64("d") == f.i64("d"));
  CHECK(g.get("a").shape == std::vector<std::int64_t>{2, 3});
  CHECK(g.serialize() == bytes);
  CHECK(sample().serialize() == bytes);
}

TEST_CASE("array file errors") {
  const auto f = sample();
  CHECK_THROWS_AS(f.f64("a"), FormatError);
  CHECK_THROWS_AS(f.get("zzz"), FormatError);
  CHECK_THROWS_AS(ArrayFile::parse("not a header\n"), FormatError);
  auto bytes = f.serialize();
  CHECK_THROWS_AS(ArrayFile::parse(bytes.substr(0, bytes.size() - 3)), FormatError);
  ArrayFile bad;
  const std::vector<float> three(3, 0.0f);
  CHECK_THROWS(bad.add_f32("x", {2, 2}, three));
}

TEST_CASE("array file on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "dynvla_io_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "s.arrays";
  sample().write(path);
  CHECK(ArrayFile::read(path).serialize() == sample().serialize());
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(ArrayFile::read(dir / "missing.arrays"), IoError);
}
