#include <limits>

#include "doctest.h"
#include "miaa/core.hpp"
#include "miaa/dataset.hpp"
#include "miaa/rng.hpp"
#include "miaa/simgen.hpp"

using namespace miaa;

namespace {

core::Request tiny_request(int n, int m) {
  simgen::MarketConfig cfg;
  cfg.n = n;
  cfg.m = m;
  Rng rng(99);
  return simgen::sample_request(cfg, rng, "t0");
}

}  // namespace

TEST_CASE("enumerate_allocations counts and order") {
  const auto r = tiny_request(2, 4);
  const auto allocs = core::enumerate_allocations(r);
  REQUIRE(allocs.size() == 8);
  int k = 0;
  for (int i = 1; i <= 2; ++i)
    for (int j = 1; j <= 4; ++j) {
      CHECK(allocs[k].ad_index == i);
      CHECK(allocs[k].ad_position == j);
      CHECK(core::allocation_ordinal(r, i, j) == k);
      ++k;
    }
}

TEST_CASE("degenerate single-ad, single-position request") {
  core::Request r = tiny_request(1, 1);
  REQUIRE(r.organic.empty());
  const auto allocs = core::enumerate_allocations(r);
  REQUIRE(allocs.size() == 1);
  CHECK(allocs[0].items.size() == 1);
  CHECK(allocs[0].items[0].is_ad);
}

TEST_CASE("no candidate ads is an error") {
  core::Request r = tiny_request(1, 3);
  r.ads.clear();
  CHECK_THROWS_WITH_AS(core::enumerate_allocations(r), "no candidate ads",
                       std::runtime_error);
  CHECK_THROWS_AS(core::validate(r), std::runtime_error);
}

TEST_CASE("position limit mirrors the platform-scale default") {
  core::Request r = tiny_request(1, 4);
  // Inflate m beyond the default limit of 5.
  for (int extra = 0; extra < 3; ++extra) r.organic.push_back(r.organic[0]);
  CHECK(r.num_positions() == 7);
  CHECK_THROWS_WITH_AS(core::enumerate_allocations(r), doctest::Contains("exceeds"),
                       std::runtime_error);
  CHECK_NOTHROW(core::enumerate_allocations(r, 10));
}

TEST_CASE("organic order is preserved in every allocation") {
  const auto r = tiny_request(3, 5);
  for (const auto& a : core::enumerate_allocations(r)) {
    // Deleting the ad slot must recover the organic list exactly.
    std::vector<int> organics;
    for (const auto& slot : a.items)
      if (!slot.is_ad) organics.push_back(slot.source_index);
    REQUIRE(organics.size() == r.organic.size());
    for (std::size_t i = 0; i < organics.size(); ++i)
      CHECK(organics[i] == static_cast<int>(i));
    int ad_slots = 0;
    for (const auto& slot : a.items) ad_slots += slot.is_ad ? 1 : 0;
    CHECK(ad_slots == 1);
    CHECK(a.items[static_cast<std::size_t>(a.ad_position - 1)].is_ad);
  }
}

TEST_CASE("enumeration is a bijection over (ad_index, ad_position)") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_int(4));
    const int m = 1 + static_cast<int>(rng.uniform_int(5));
    const auto r = tiny_request(n, m);
    const auto allocs = core::enumerate_allocations(r);
    REQUIRE(static_cast<int>(allocs.size()) == n * m);
    std::vector<bool> seen(allocs.size(), false);
    for (const auto& a : allocs) {
      const int ord = core::allocation_ordinal(r, a.ad_index, a.ad_position);
      CHECK(!seen[static_cast<std::size_t>(ord)]);
      seen[static_cast<std::size_t>(ord)] = true;
    }
  }
}

TEST_CASE("allocations_excluding") {
  const auto r2 = tiny_request(2, 4);
  const auto allocs2 = core::enumerate_allocations(r2);
  const auto rest = core::allocations_excluding(allocs2, 1);
  REQUIRE(rest.size() == 4);
  for (const auto& a : rest) CHECK(a.ad_index == 2);

  const auto r1 = tiny_request(1, 4);
  CHECK(core::allocations_excluding(core::enumerate_allocations(r1), 1).empty());

  const auto r3 = tiny_request(3, 2);
  const auto rest3 = core::allocations_excluding(core::enumerate_allocations(r3), 2);
  REQUIRE(rest3.size() == 4);
  for (const auto& a : rest3) CHECK(a.ad_index != 2);
}

TEST_CASE("request JSONL round trip") {
  const auto r = tiny_request(3, 4);
  const auto j = data::request_to_json(r);
  const auto back = data::request_from_json(j);
  CHECK(back.request_id == r.request_id);
  REQUIRE(back.ads.size() == r.ads.size());
  REQUIRE(back.organic.size() == r.organic.size());
  for (std::size_t i = 0; i < r.ads.size(); ++i) {
    CHECK(back.ads[i].ad_id == r.ads[i].ad_id);
    CHECK(back.ads[i].bid == r.ads[i].bid);
    REQUIRE(back.ads[i].true_value.has_value());
    CHECK(*back.ads[i].true_value == *r.ads[i].true_value);
    CHECK(back.ads[i].value_dist_features == r.ads[i].value_dist_features);
    CHECK(back.ads[i].features.sparse_ids == r.ads[i].features.sparse_ids);
    CHECK(back.ads[i].features.dense == r.ads[i].features.dense);
  }
  for (std::size_t i = 0; i < r.organic.size(); ++i) {
    CHECK(back.organic[i].item_id == r.organic[i].item_id);
    CHECK(back.organic[i].gmv_per_click == r.organic[i].gmv_per_click);
  }
  CHECK(data::request_to_json(back) == j);
}

TEST_CASE("request validation catches bad values") {
  auto r = tiny_request(2, 3);
  r.ads[0].bid = 0.0;
  CHECK_THROWS_AS(core::validate(r), std::runtime_error);
  r = tiny_request(2, 3);
  r.ads[1].features.dense[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(core::validate(r), std::runtime_error);
  r = tiny_request(2, 3);
  r.organic[0].features.sparse_ids[0] = -4;
  CHECK_THROWS_AS(core::validate(r), std::runtime_error);
}
