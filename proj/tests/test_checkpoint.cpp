#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

#include "doctest.h"
#include "sffn/checkpoint.hpp"
#include "sffn/io.hpp"

using namespace sffn;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("checkpoint round-trips awkward doubles bit-exactly") {
  Matrix a(2, 3);
  a(0, 0) = -0.0;
  a(0, 1) = std::numeric_limits<double>::denorm_min();
  a(0, 2) = -std::numeric_limits<double>::max();
  a(1, 0) = 1.0 + std::numeric_limits<double>::epsilon();
  a(1, 1) = 1e-308;
  a(1, 2) = 0.1;  // not exactly representable; must survive untouched
  Matrix b(1, 1);
  b(0, 0) = 3.5;

  TempFile f("test_ckpt_roundtrip.sffn");
  save_checkpoint(f.path, {{"alpha", a}, {"beta.gamma", b}});
  const auto back = load_checkpoint(f.path);

  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "alpha");
  CHECK(back[1].name == "beta.gamma");
  CHECK(back[0].value.rows == 2);
  CHECK(back[0].value.cols == 3);
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    std::uint64_t want, got;
    std::memcpy(&want, &a.data[i], 8);
    std::memcpy(&got, &back[0].value.data[i], 8);
    CHECK(want == got);  // bit-level, so -0.0 keeps its sign
  }
  CHECK(back[1].value(0, 0) == 3.5);
}

TEST_CASE("empty tensors and empty lists are legal") {
  TempFile f("test_ckpt_empty.sffn");
  save_checkpoint(f.path, {{"nil", Matrix(0, 5)}});
  auto back = load_checkpoint(f.path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].value.rows == 0);
  CHECK(back[0].value.cols == 5);
  CHECK(back[0].value.data.empty());

  save_checkpoint(f.path, {});
  CHECK(load_checkpoint(f.path).empty());
}

TEST_CASE("tensor names must be whitespace-free") {
  CHECK_THROWS(save_checkpoint("unused.sffn", {{"has space", Matrix(1, 1)}}));
  CHECK_THROWS(save_checkpoint("unused.sffn", {{"", Matrix(1, 1)}}));
  CHECK_THROWS(save_checkpoint("unused.sffn", {{"tab\tbed", Matrix(1, 1)}}));
}

TEST_CASE("load failures name the offending file") {
  auto error_mentions_path = [](const std::string& path) {
    try {
      load_checkpoint(path);
      return false;
    } catch (const std::exception& e) {
      return std::string(e.what()).find(path) != std::string::npos;
    }
  };

  CHECK(error_mentions_path("does_not_exist.sffn"));

  TempFile f("test_ckpt_bad.sffn");
  atomic_write_file(f.path, "NOPE\ndata\n");
  CHECK(error_mentions_path(f.path));  // wrong magic

  atomic_write_file(f.path, "SFFN1\ntensor x f32 1 1\ndata\n");
  CHECK(error_mentions_path(f.path));  // unsupported dtype

  atomic_write_file(f.path, "SFFN1\ntensor x f64 1\ndata\n");
  CHECK(error_mentions_path(f.path));  // missing column count

  atomic_write_file(f.path, "SFFN1\ntensor x f64 1 2\ndata\n\x01\x02");
  CHECK(error_mentions_path(f.path));  // truncated data (2 of 16 bytes)

  std::string trailing = "SFFN1\ntensor x f64 1 1\ndata\n";
  trailing.append(8, '\0');
  trailing += "extra";
  atomic_write_file(f.path, trailing);
  CHECK(error_mentions_path(f.path));  // trailing bytes

  atomic_write_file(f.path, "SFFN1\ntensor x f64 1 1");
  CHECK(error_mentions_path(f.path));  // header never reaches "data"
}

TEST_CASE("header order is preserved for many tensors") {
  std::vector<NamedTensor> tensors;
  for (int i = 0; i < 17; ++i) {
    Matrix m(1, 2);
    m(0, 0) = i;
    m(0, 1) = -i;
    tensors.push_back({"t" + std::to_string(i), m});
  }
  TempFile f("test_ckpt_order.sffn");
  save_checkpoint(f.path, tensors);
  const auto back = load_checkpoint(f.path);
  REQUIRE(back.size() == tensors.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].name == tensors[i].name);
    CHECK(back[i].value.data == tensors[i].value.data);
  }
}
