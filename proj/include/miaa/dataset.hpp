#pragma once

#include <string>
#include <vector>

#include "miaa/core.hpp"

#include "json.hpp"

namespace miaa::data {

// One logged impression: which allocation was shown and what happened.
// Parallel to the owning request stream; see docs/schemas.md.
struct DisplayRecord {
  std::string request_id;
  int ad_index = 0;     // 1-based
  int ad_position = 0;  // 1-based
  std::vector<int> clicks;             // length m
  std::vector<double> gmv_per_click;   // realized per-click GMV, length m
};

struct Dataset {
  std::vector<core::Request> requests;
  std::vector<DisplayRecord> displays;  // empty or parallel to requests
};

nlohmann::json request_to_json(const core::Request& r);
core::Request request_from_json(const nlohmann::json& j);

nlohmann::json display_to_json(const DisplayRecord& d);
DisplayRecord display_from_json(const nlohmann::json& j);

void write_requests_jsonl(const std::string& path, const std::vector<core::Request>& rs);
std::vector<core::Request> read_requests_jsonl(const std::string& path);

void write_displays_jsonl(const std::string& path, const std::vector<DisplayRecord>& ds);
std::vector<DisplayRecord> read_displays_jsonl(const std::string& path);

}  // namespace miaa::data
