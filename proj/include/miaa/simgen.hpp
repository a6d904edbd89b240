#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaa/core.hpp"
#include "miaa/dataset.hpp"
#include "miaa/rng.hpp"

namespace miaa::simgen {

struct UniformRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct MarketConfig {
  int n = 3;  // candidate ads per request
  int m = 4;  // list positions (m-1 organic items)
  UniformRange bid_dist{0.5, 1.0};
  UniformRange organic_gmv_dist{3.5, 6.0};
  UniformRange ad_gmv_dist{2.0, 4.0};
  UniformRange base_ctr_dist{0.05, 0.45};
  std::vector<double> position_multipliers;  // empty -> 0.85^(j-1)
  double context_coefficient = 0.8;
  std::uint64_t seed = 1;

  // Feature-space layout shared with the models. Dense columns are
  // [base_ctr, affinity, gmv_norm, noise...]; see docs/schemas.md.
  std::vector<std::int64_t> vocab_sizes{200, 20, 50};
  int dense_dim = 4;
  int user_dim = 4;
  int request_dim = 4;
  int x_dim = 4;

  void validate() const;
  std::vector<double> resolved_position_multipliers() const;
};

// Persistent item pools. Ids are stable across requests (embedding
// signal is real, as in production logs); ads and organic items split
// the id space so the embedding table never aliases them.
struct CatalogItem {
  std::int64_t id = 0;
  core::ItemFeatures features;
  double gmv_per_click = 0.0;
};

struct Catalog {
  std::vector<CatalogItem> organic;
  std::vector<CatalogItem> ads;
  // Deterministic in (cfg, cfg.seed); shared by train and test streams.
  static Catalog build(const MarketConfig& cfg);
};

// Ground truth used to label impressions and to score "realized" metrics.
// CTR factorizes into item x position when context_coefficient is 0; the
// context term couples a slot's CTR to its neighbours' affinity features.
struct GroundTruthClickModel {
  std::vector<double> position_multipliers;
  double context_coefficient = 0.0;

  static GroundTruthClickModel from_config(const MarketConfig& cfg);

  double base_ctr(const core::ItemFeatures& f) const;
  double interaction(const core::Request& r, const core::Allocation& a, int slot) const;
  // slot is 1-based; result clipped to [1e-4, 1-1e-4].
  double true_ctr(const core::Request& r, const core::Allocation& a, int slot) const;
  std::vector<double> true_ctrs(const core::Request& r, const core::Allocation& a) const;
  std::vector<int> simulate_clicks(const core::Request& r, const core::Allocation& a,
                                   Rng& rng) const;
};

core::Request sample_request(const Catalog& catalog, const MarketConfig& cfg, Rng& rng,
                             const std::string& request_id);

// Convenience overload that builds the catalog from cfg.
core::Request sample_request(const MarketConfig& cfg, Rng& rng, const std::string& request_id);

// Requests plus display logs from a uniform-random logging policy
// (uniform ad index and uniform ad position), so every position carries
// labels. Byte-deterministic given (cfg, seed, count, prefix).
data::Dataset generate_dataset(const MarketConfig& cfg, int count, std::uint64_t seed,
                               const std::string& id_prefix);

}  // namespace miaa::simgen
