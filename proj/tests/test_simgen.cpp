#include <cmath>

#include "doctest.h"
#include "miaa/dataset.hpp"
#include "miaa/rng.hpp"
#include "miaa/simgen.hpp"

using namespace miaa;

TEST_CASE("sampled quantities stay inside configured supports") {
  simgen::MarketConfig cfg;
  cfg.n = 4;
  cfg.m = 5;
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = simgen::sample_request(cfg, rng, "s");
    for (const auto& ad : r.ads) {
      CHECK(ad.bid >= 0.5);
      CHECK(ad.bid <= 1.0);
      CHECK(ad.gmv_per_click >= 2.0);
      CHECK(ad.gmv_per_click <= 4.0);
      REQUIRE(ad.true_value.has_value());
      CHECK(*ad.true_value == ad.bid);
    }
    for (const auto& oi : r.organic) {
      CHECK(oi.gmv_per_click >= 3.5);
      CHECK(oi.gmv_per_click <= 6.0);
    }
    // Organic list pre-sorted by estimated GMV.
    for (std::size_t i = 1; i < r.organic.size(); ++i)
      CHECK(r.organic[i - 1].gmv_per_click >= r.organic[i].gmv_per_click);
  }
}

TEST_CASE("generation is byte deterministic given (config, seed)") {
  simgen::MarketConfig cfg;
  const auto a = simgen::generate_dataset(cfg, 25, 77, "d-");
  const auto b = simgen::generate_dataset(cfg, 25, 77, "d-");
  REQUIRE(a.requests.size() == b.requests.size());
  for (std::size_t i = 0; i < a.requests.size(); ++i) {
    CHECK(data::request_to_json(a.requests[i]).dump() ==
          data::request_to_json(b.requests[i]).dump());
    CHECK(data::display_to_json(a.displays[i]).dump() ==
          data::display_to_json(b.displays[i]).dump());
  }
  const auto c = simgen::generate_dataset(cfg, 25, 78, "d-");
  CHECK(data::request_to_json(a.requests[0]).dump() !=
        data::request_to_json(c.requests[0]).dump());
}

TEST_CASE("true_ctr factorizes when context is off") {
  simgen::MarketConfig cfg;
  cfg.context_coefficient = 0.0;
  cfg.m = 4;
  Rng rng(5);
  const auto r = simgen::sample_request(cfg, rng, "f");
  const auto gt = simgen::GroundTruthClickModel::from_config(cfg);
  const auto mults = cfg.resolved_position_multipliers();
  for (int j = 1; j <= 4; ++j) {
    const auto a = core::build_allocation(r, 1, j);
    const double expect =
        std::clamp(r.ads[0].features.dense[0] * mults[static_cast<std::size_t>(j - 1)],
                   1e-4, 1.0 - 1e-4);
    CHECK(gt.true_ctr(r, a, j) == doctest::Approx(expect));
  }

  SUBCASE("flat position multipliers give CTR == base rate") {
    simgen::MarketConfig flat = cfg;
    flat.position_multipliers.assign(4, 1.0);
    const auto gt_flat = simgen::GroundTruthClickModel::from_config(flat);
    const auto a = core::build_allocation(r, 1, 2);
    CHECK(gt_flat.true_ctr(r, a, 2) == doctest::Approx(r.ads[0].features.dense[0]));
  }
}

TEST_CASE("rank-1 structure of the (item, position) CTR matrix without context") {
  simgen::MarketConfig cfg;
  cfg.context_coefficient = 0.0;
  cfg.m = 4;
  cfg.n = 3;
  Rng rng(6);
  const auto r = simgen::sample_request(cfg, rng, "r1");
  const auto gt = simgen::GroundTruthClickModel::from_config(cfg);
  // ctr(i,j)*ctr(i',j') == ctr(i,j')*ctr(i',j) exactly in the factorized regime.
  for (int i1 = 1; i1 <= 2; ++i1)
    for (int j1 = 1; j1 <= 3; ++j1) {
      const double a11 = gt.true_ctr(r, core::build_allocation(r, i1, j1), j1);
      const double a22 = gt.true_ctr(r, core::build_allocation(r, i1 + 1, j1 + 1), j1 + 1);
      const double a12 = gt.true_ctr(r, core::build_allocation(r, i1, j1 + 1), j1 + 1);
      const double a21 = gt.true_ctr(r, core::build_allocation(r, i1 + 1, j1), j1);
      CHECK(std::abs(a11 * a22 - a12 * a21) < 1e-12);
    }
}

TEST_CASE("swapping neighbours moves CTR when context is on") {
  simgen::MarketConfig cfg;
  cfg.context_coefficient = 0.8;
  cfg.m = 4;
  cfg.n = 1;
  Rng rng(7);
  auto r = simgen::sample_request(cfg, rng, "ctx");
  const auto gt = simgen::GroundTruthClickModel::from_config(cfg);
  const auto a = core::build_allocation(r, 1, 2);
  const double before = gt.true_ctr(r, a, 2);
  // Change the follower's affinity; the ad's CTR at slot 2 must move.
  r.organic[1].features.dense[1] = -r.organic[1].features.dense[1] + 0.35;
  const double after = gt.true_ctr(r, a, 2);
  CHECK(before != after);
}

TEST_CASE("simulate_clicks respects forced extremes and the law of large numbers") {
  simgen::MarketConfig cfg;
  cfg.m = 2;
  cfg.n = 1;
  cfg.context_coefficient = 0.0;
  cfg.position_multipliers = {1.0, 1.0};
  Rng rng(8);
  auto r = simgen::sample_request(cfg, rng, "lln");
  const auto gt = simgen::GroundTruthClickModel::from_config(cfg);
  const auto a = core::build_allocation(r, 1, 1);

  // Force the CTR through the feature channel (clip floor/ceiling aside).
  r.ads[0].features.dense[0] = 0.0;  // clipped to 1e-4
  r.organic[0].features.dense[0] = 1.0;
  Rng clicks_rng(9);
  int ad_clicks = 0, organic_clicks = 0;
  for (int t = 0; t < 2000; ++t) {
    const auto y = gt.simulate_clicks(r, a, clicks_rng);
    ad_clicks += y[0];
    organic_clicks += y[1];
  }
  CHECK(ad_clicks <= 2);         // ~ Binomial(2000, 1e-4)
  CHECK(organic_clicks >= 1998); // ~ Binomial(2000, 1-1e-4)

  r.ads[0].features.dense[0] = 0.3;
  Rng lln_rng(10);
  int hits = 0;
  const int draws = 100000;
  for (int t = 0; t < draws; ++t) hits += gt.simulate_clicks(r, a, lln_rng)[0];
  CHECK(std::abs(static_cast<double>(hits) / draws - 0.3) < 0.01);
}

TEST_CASE("display logs cover all positions and carry per-click GMV") {
  simgen::MarketConfig cfg;
  cfg.m = 4;
  cfg.n = 3;
  const auto ds = simgen::generate_dataset(cfg, 400, 21, "log-");
  std::vector<int> position_counts(5, 0);
  for (std::size_t i = 0; i < ds.displays.size(); ++i) {
    const auto& d = ds.displays[i];
    REQUIRE(d.ad_position >= 1);
    REQUIRE(d.ad_position <= 4);
    ++position_counts[static_cast<std::size_t>(d.ad_position)];
    const auto a = core::build_allocation(ds.requests[i], d.ad_index, d.ad_position);
    for (std::size_t j = 0; j < a.items.size(); ++j)
      CHECK(d.gmv_per_click[j] ==
            core::slot_gmv_per_click(ds.requests[i], a.items[j]));
  }
  for (int j = 1; j <= 4; ++j) CHECK(position_counts[static_cast<std::size_t>(j)] > 50);
}
