#include "miaa/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace miaa::simgen {

namespace {

constexpr double kCtrFloor = 1e-4;
constexpr double kCtrCeil = 1.0 - 1e-4;

void check_range(const UniformRange& r, const char* what) {
  if (!(r.lo < r.hi))
    throw std::runtime_error(std::string("market config: ") + what + " needs lo < hi");
}

CatalogItem sample_catalog_item(const MarketConfig& cfg, Rng& rng, std::int64_t id,
                                const UniformRange& gmv_dist) {
  CatalogItem item;
  item.id = id;
  item.gmv_per_click = rng.uniform(gmv_dist.lo, gmv_dist.hi);
  auto& f = item.features;
  f.sparse_ids.push_back(id);
  for (std::size_t field = 1; field < cfg.vocab_sizes.size(); ++field)
    f.sparse_ids.push_back(rng.uniform_int(cfg.vocab_sizes[field]));
  f.dense.resize(static_cast<std::size_t>(cfg.dense_dim));
  f.dense[0] = rng.uniform(cfg.base_ctr_dist.lo, cfg.base_ctr_dist.hi);
  f.dense[1] = rng.uniform(-1.0, 1.0);  // affinity, drives the context term
  if (cfg.dense_dim > 2) f.dense[2] = item.gmv_per_click / 6.0;
  for (int k = 3; k < cfg.dense_dim; ++k) f.dense[static_cast<std::size_t>(k)] = rng.uniform();
  return item;
}

// Partial Fisher-Yates draw of k distinct indices from [0, n).
std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(
                           rng.uniform_int(static_cast<std::int64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

Catalog Catalog::build(const MarketConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0xCA7));
  Catalog catalog;
  const std::int64_t vocab = cfg.vocab_sizes.at(0);
  const std::int64_t organic_pool =
      std::max<std::int64_t>(cfg.m - 1, std::max<std::int64_t>(1, vocab / 2));
  const std::int64_t ad_pool =
      std::max<std::int64_t>(cfg.n, std::max<std::int64_t>(1, vocab - vocab / 2));
  catalog.organic.reserve(static_cast<std::size_t>(organic_pool));
  for (std::int64_t k = 0; k < organic_pool; ++k)
    catalog.organic.push_back(
        sample_catalog_item(cfg, rng, k % vocab, cfg.organic_gmv_dist));
  catalog.ads.reserve(static_cast<std::size_t>(ad_pool));
  for (std::int64_t k = 0; k < ad_pool; ++k)
    catalog.ads.push_back(
        sample_catalog_item(cfg, rng, (vocab / 2 + k) % vocab, cfg.ad_gmv_dist));
  return catalog;
}

void MarketConfig::validate() const {
  if (n < 1) throw std::runtime_error("market config: n must be >= 1");
  if (m < 1) throw std::runtime_error("market config: m must be >= 1");
  if (m > core::kDefaultMaxPositions)
    throw std::runtime_error("market config: m exceeds the position limit " +
                             std::to_string(core::kDefaultMaxPositions));
  check_range(bid_dist, "bid_dist");
  check_range(organic_gmv_dist, "organic_gmv_dist");
  check_range(ad_gmv_dist, "ad_gmv_dist");
  check_range(base_ctr_dist, "base_ctr_dist");
  if (!position_multipliers.empty() &&
      static_cast<int>(position_multipliers.size()) != m)
    throw std::runtime_error("market config: position_multipliers must have length m");
  for (double p : position_multipliers)
    if (!(p > 0.0)) throw std::runtime_error("market config: position multipliers must be > 0");
  if (context_coefficient < 0.0)
    throw std::runtime_error("market config: context_coefficient must be >= 0");
  if (dense_dim < 2)
    throw std::runtime_error("market config: dense_dim must be >= 2 (base_ctr, affinity)");
  if (vocab_sizes.empty()) throw std::runtime_error("market config: vocab_sizes empty");
}

std::vector<double> MarketConfig::resolved_position_multipliers() const {
  if (!position_multipliers.empty()) return position_multipliers;
  std::vector<double> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(j)] = std::pow(0.85, j);
  return out;
}

GroundTruthClickModel GroundTruthClickModel::from_config(const MarketConfig& cfg) {
  GroundTruthClickModel gt;
  gt.position_multipliers = cfg.resolved_position_multipliers();
  gt.context_coefficient = cfg.context_coefficient;
  return gt;
}

double GroundTruthClickModel::base_ctr(const core::ItemFeatures& f) const {
  return std::clamp(f.dense.at(0), kCtrFloor, kCtrCeil);
}

double GroundTruthClickModel::interaction(const core::Request& r, const core::Allocation& a,
                                          int slot) const {
  const int m = static_cast<int>(a.items.size());
  const auto affinity = [&](int s) {
    return core::slot_features(r, a.items[static_cast<std::size_t>(s - 1)]).dense.at(1);
  };
  double acc = 0.0;
  int count = 0;
  if (slot > 1) {
    acc += affinity(slot - 1);
    ++count;
  }
  if (slot < m) {
    acc += affinity(slot + 1);
    ++count;
  }
  if (count == 0) return 0.0;
  // Similarity to the adjacent items: 1 - |distance|, in [-1, 1].
  return 1.0 - std::abs(affinity(slot) - acc / count);
}

double GroundTruthClickModel::true_ctr(const core::Request& r, const core::Allocation& a,
                                       int slot) const {
  if (slot < 1 || slot > static_cast<int>(a.items.size()))
    throw std::runtime_error("true_ctr: slot out of range");
  const auto& f = core::slot_features(r, a.items[static_cast<std::size_t>(slot - 1)]);
  const double mult = position_multipliers.at(static_cast<std::size_t>(slot - 1));
  const double ctx = 1.0 + context_coefficient * interaction(r, a, slot);
  return std::clamp(base_ctr(f) * mult * ctx, kCtrFloor, kCtrCeil);
}

std::vector<double> GroundTruthClickModel::true_ctrs(const core::Request& r,
                                                     const core::Allocation& a) const {
  std::vector<double> out(a.items.size());
  for (std::size_t j = 0; j < a.items.size(); ++j)
    out[j] = true_ctr(r, a, static_cast<int>(j) + 1);
  return out;
}

std::vector<int> GroundTruthClickModel::simulate_clicks(const core::Request& r,
                                                        const core::Allocation& a,
                                                        Rng& rng) const {
  std::vector<int> y(a.items.size());
  for (std::size_t j = 0; j < a.items.size(); ++j)
    y[j] = rng.bernoulli(true_ctr(r, a, static_cast<int>(j) + 1)) ? 1 : 0;
  return y;
}

core::Request sample_request(const Catalog& catalog, const MarketConfig& cfg, Rng& rng,
                             const std::string& request_id) {
  core::Request r;
  r.request_id = request_id;
  r.user_features.resize(static_cast<std::size_t>(cfg.user_dim));
  for (auto& v : r.user_features) v = rng.uniform();
  r.request_features.resize(static_cast<std::size_t>(cfg.request_dim));
  for (auto& v : r.request_features) v = rng.uniform();

  const auto organic_picks = sample_distinct(rng, catalog.organic.size(),
                                             static_cast<std::size_t>(cfg.m - 1));
  r.organic.reserve(organic_picks.size());
  for (auto pick : organic_picks) {
    const auto& item = catalog.organic[pick];
    core::OrganicItem oi;
    oi.item_id = item.id;
    oi.features = item.features;
    oi.gmv_per_click = item.gmv_per_click;
    r.organic.push_back(std::move(oi));
  }
  // Organic list arrives pre-sorted by estimated GMV; order is immutable
  // downstream, so sort here once.
  std::stable_sort(r.organic.begin(), r.organic.end(),
                   [](const auto& a, const auto& b) { return a.gmv_per_click > b.gmv_per_click; });

  const auto ad_picks =
      sample_distinct(rng, catalog.ads.size(), static_cast<std::size_t>(cfg.n));
  r.ads.reserve(ad_picks.size());
  for (auto pick : ad_picks) {
    const auto& item = catalog.ads[pick];
    core::AdCandidate ad;
    ad.ad_id = item.id;
    ad.features = item.features;
    ad.gmv_per_click = item.gmv_per_click;
    const double value = rng.uniform(cfg.bid_dist.lo, cfg.bid_dist.hi);
    ad.true_value = value;
    ad.bid = value;  // logs are generated under truthful reporting
    // Value-distribution summary: support stats plus bid-free quality
    // signals. The live bid must never leak in here.
    ad.value_dist_features.resize(static_cast<std::size_t>(cfg.x_dim));
    ad.value_dist_features[0] = 0.5 * (cfg.bid_dist.lo + cfg.bid_dist.hi);
    if (cfg.x_dim > 1) ad.value_dist_features[1] = cfg.bid_dist.hi - cfg.bid_dist.lo;
    if (cfg.x_dim > 2) ad.value_dist_features[2] = ad.features.dense[0];
    if (cfg.x_dim > 3) ad.value_dist_features[3] = ad.gmv_per_click / 6.0;
    for (int c = 4; c < cfg.x_dim; ++c)
      ad.value_dist_features[static_cast<std::size_t>(c)] = rng.uniform();
    r.ads.push_back(std::move(ad));
  }
  core::validate(r);
  return r;
}

core::Request sample_request(const MarketConfig& cfg, Rng& rng, const std::string& request_id) {
  return sample_request(Catalog::build(cfg), cfg, rng, request_id);
}

data::Dataset generate_dataset(const MarketConfig& cfg, int count, std::uint64_t seed,
                               const std::string& id_prefix) {
  cfg.validate();
  const Catalog catalog = Catalog::build(cfg);
  const GroundTruthClickModel gt = GroundTruthClickModel::from_config(cfg);
  data::Dataset ds;
  ds.requests.reserve(static_cast<std::size_t>(count));
  ds.displays.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s%06d", id_prefix.c_str(), i);
    core::Request r = sample_request(catalog, cfg, rng, idbuf);

    data::DisplayRecord d;
    d.request_id = r.request_id;
    d.ad_index = static_cast<int>(rng.uniform_int(cfg.n)) + 1;
    d.ad_position = static_cast<int>(rng.uniform_int(cfg.m)) + 1;
    const auto alloc = core::build_allocation(r, d.ad_index, d.ad_position);
    d.clicks = gt.simulate_clicks(r, alloc, rng);
    d.gmv_per_click.resize(alloc.items.size());
    for (std::size_t j = 0; j < alloc.items.size(); ++j)
      d.gmv_per_click[j] = core::slot_gmv_per_click(r, alloc.items[j]);

    ds.requests.push_back(std::move(r));
    ds.displays.push_back(std::move(d));
  }
  return ds;
}

}  // namespace miaa::simgen
