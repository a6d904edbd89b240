#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace miaa::core {

// Number of list positions the enumerator accepts unless told otherwise.
inline constexpr int kDefaultMaxPositions = 5;

struct ItemFeatures {
  std::vector<std::int64_t> sparse_ids;  // item id, category, brand, ...
  std::vector<double> dense;             // historical CTR, affinity, ...
  std::optional<int> position_hint;      // 1-based, if the log recorded one
};

struct OrganicItem {
  std::int64_t item_id = 0;
  ItemFeatures features;
  double gmv_per_click = 0.0;  // implicit bid and click value are 0
};

struct AdCandidate {
  std::int64_t ad_id = 0;
  double bid = 0.0;                        // money per click, > 0
  std::optional<double> true_value;        // known only in simulation
  std::vector<double> value_dist_features; // x_i; never contains the live bid
  ItemFeatures features;
  double gmv_per_click = 0.0;
};

struct Request {
  std::string request_id;
  std::vector<double> user_features;     // z^u
  std::vector<double> request_features;  // z^r
  std::vector<OrganicItem> organic;      // m-1 items, order immutable
  std::vector<AdCandidate> ads;          // n candidates

  int num_positions() const { return static_cast<int>(organic.size()) + 1; }  // m
  int num_ads() const { return static_cast<int>(ads.size()); }                // n
};

// One slot of a displayed list: either the request's ad #source_index or
// its organic item #source_index (both 0-based).
struct Slot {
  bool is_ad = false;
  int source_index = 0;
};

struct Allocation {
  int ad_index = 0;     // i, 1-based
  int ad_position = 0;  // sigma(i), 1-based
  std::vector<Slot> items;
};

// Throws on any violated invariant (empty ads, non-positive bid, ...).
void validate(const Request& request);

Allocation build_allocation(const Request& request, int ad_index, int ad_position);

// All m*n single-ad insertions, ordered by (ad_index, ad_position).
std::vector<Allocation> enumerate_allocations(const Request& request,
                                              int max_positions = kDefaultMaxPositions);

std::vector<Allocation> allocations_excluding(const std::vector<Allocation>& allocations,
                                              int ad_index);

// Flat index of allocation (i, j) in enumeration order.
inline int allocation_ordinal(const Request& r, int ad_index, int ad_position) {
  return (ad_index - 1) * r.num_positions() + (ad_position - 1);
}

const ItemFeatures& slot_features(const Request& r, const Slot& s);
double slot_gmv_per_click(const Request& r, const Slot& s);
double slot_bid(const Request& r, const Slot& s);  // 0 for organic slots

}  // namespace miaa::core
