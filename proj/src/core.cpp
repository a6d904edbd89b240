#include "miaa/core.hpp"

#include <cmath>
#include <stdexcept>

namespace miaa::core {

namespace {

void validate_features(const ItemFeatures& f, const std::string& what) {
  for (double v : f.dense)
    if (!std::isfinite(v)) throw std::runtime_error("request: non-finite dense feature in " + what);
  for (auto id : f.sparse_ids)
    if (id < 0) throw std::runtime_error("request: negative sparse id in " + what);
}

}  // namespace

void validate(const Request& request) {
  if (request.ads.empty()) throw std::runtime_error("no candidate ads");
  for (const auto& ad : request.ads) {
    if (!(ad.bid > 0.0)) throw std::runtime_error("request: ad bid must be > 0");
    if (ad.true_value && !(*ad.true_value > 0.0))
      throw std::runtime_error("request: ad true_value must be > 0");
    validate_features(ad.features, "ad " + std::to_string(ad.ad_id));
    for (double v : ad.value_dist_features)
      if (!std::isfinite(v)) throw std::runtime_error("request: non-finite value_dist feature");
  }
  for (const auto& oi : request.organic)
    validate_features(oi.features, "organic item " + std::to_string(oi.item_id));
  for (double v : request.user_features)
    if (!std::isfinite(v)) throw std::runtime_error("request: non-finite user feature");
  for (double v : request.request_features)
    if (!std::isfinite(v)) throw std::runtime_error("request: non-finite request feature");
}

Allocation build_allocation(const Request& request, int ad_index, int ad_position) {
  const int m = request.num_positions();
  const int n = request.num_ads();
  if (ad_index < 1 || ad_index > n)
    throw std::runtime_error("allocation: ad_index out of range");
  if (ad_position < 1 || ad_position > m)
    throw std::runtime_error("allocation: ad_position out of range");
  Allocation a;
  a.ad_index = ad_index;
  a.ad_position = ad_position;
  a.items.reserve(static_cast<std::size_t>(m));
  int organic_cursor = 0;
  for (int pos = 1; pos <= m; ++pos) {
    if (pos == ad_position) {
      a.items.push_back(Slot{true, ad_index - 1});
    } else {
      a.items.push_back(Slot{false, organic_cursor++});
    }
  }
  return a;
}

std::vector<Allocation> enumerate_allocations(const Request& request, int max_positions) {
  if (request.ads.empty()) throw std::runtime_error("no candidate ads");
  const int m = request.num_positions();
  const int n = request.num_ads();
  if (m > max_positions)
    throw std::runtime_error("enumerate_allocations: m=" + std::to_string(m) +
                             " exceeds the position limit " + std::to_string(max_positions));
  std::vector<Allocation> out;
  out.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= m; ++j) out.push_back(build_allocation(request, i, j));
  return out;
}

std::vector<Allocation> allocations_excluding(const std::vector<Allocation>& allocations,
                                              int ad_index) {
  if (ad_index < 1) throw std::runtime_error("allocations_excluding: ad_index out of range");
  std::vector<Allocation> out;
  out.reserve(allocations.size());
  for (const auto& a : allocations)
    if (a.ad_index != ad_index) out.push_back(a);
  return out;
}

const ItemFeatures& slot_features(const Request& r, const Slot& s) {
  return s.is_ad ? r.ads[static_cast<std::size_t>(s.source_index)].features
                 : r.organic[static_cast<std::size_t>(s.source_index)].features;
}

double slot_gmv_per_click(const Request& r, const Slot& s) {
  return s.is_ad ? r.ads[static_cast<std::size_t>(s.source_index)].gmv_per_click
                 : r.organic[static_cast<std::size_t>(s.source_index)].gmv_per_click;
}

double slot_bid(const Request& r, const Slot& s) {
  return s.is_ad ? r.ads[static_cast<std::size_t>(s.source_index)].bid : 0.0;
}

}  // namespace miaa::core
