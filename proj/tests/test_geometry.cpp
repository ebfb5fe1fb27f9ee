#include "doctest.h"
#include "sffn/geometry.hpp"

using namespace sffn;

TEST_CASE("geometry derives block counts and the size multiplier") {
  const MemoryGeometry g = MemoryGeometry::make(16, 128, 8, 32);
  CHECK(g.blocks() == 16);
  CHECK(g.active_blocks() == 4);
  CHECK(g.E == doctest::Approx(128.0 / (4.0 * 16.0)));
}

TEST_CASE("geometry validation rejects inconsistent shapes") {
  CHECK_THROWS(MemoryGeometry::make(0, 128, 8, 32));   // d <= 0
  CHECK_THROWS(MemoryGeometry::make(16, 0, 8, 32));    // d_m <= 0
  CHECK_THROWS(MemoryGeometry::make(16, 128, 0, 32));  // g <= 0
  CHECK_THROWS(MemoryGeometry::make(16, 128, 8, 0));   // k <= 0
  CHECK_THROWS(MemoryGeometry::make(16, 130, 8, 32));  // g does not divide d_m
  CHECK_THROWS(MemoryGeometry::make(16, 128, 8, 30));  // g does not divide k
  CHECK_THROWS(MemoryGeometry::make(16, 128, 8, 136)); // k > d_m
  // Boundary accepted: k == d_m (full selection).
  CHECK(MemoryGeometry::make(16, 128, 8, 128).active_blocks() == 16);
}

TEST_CASE("selection validation enforces uniqueness, range, pairing") {
  BlockSelection ok{{0, 2, 5}, {1.0, 0.5, 2.0}};
  CHECK_NOTHROW(validate_selection(ok, 6));
  BlockSelection dup{{2, 2}, {1.0, 1.0}};
  CHECK_THROWS(validate_selection(dup, 6));
  BlockSelection oob{{0, 6}, {1.0, 1.0}};
  CHECK_THROWS(validate_selection(oob, 6));
  BlockSelection neg{{-1, 0}, {1.0, 1.0}};
  CHECK_THROWS(validate_selection(neg, 6));
  BlockSelection mismatch{{0, 1}, {1.0}};
  CHECK_THROWS(validate_selection(mismatch, 6));
}

TEST_CASE("sort_selection keeps index/weight pairs together") {
  BlockSelection sel{{5, 1, 3}, {0.5, 0.1, 0.3}};
  sort_selection(sel);
  CHECK(sel.indices == std::vector<int>{1, 3, 5});
  CHECK(sel.weights == std::vector<double>{0.1, 0.3, 0.5});
}
