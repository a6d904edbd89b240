#include "miaa/dataset.hpp"

#include <fstream>
#include <stdexcept>

#include "miaa/util.hpp"

namespace miaa::data {

using nlohmann::json;

namespace {

json features_to_json(const core::ItemFeatures& f) {
  json j;
  j["sparse"] = f.sparse_ids;
  j["dense"] = f.dense;
  if (f.position_hint) j["position_hint"] = *f.position_hint;
  return j;
}

core::ItemFeatures features_from_json(const json& j) {
  core::ItemFeatures f;
  f.sparse_ids = j.at("sparse").get<std::vector<std::int64_t>>();
  f.dense = j.at("dense").get<std::vector<double>>();
  if (j.contains("position_hint")) f.position_hint = j.at("position_hint").get<int>();
  return f;
}

}  // namespace

json request_to_json(const core::Request& r) {
  json j;
  j["request_id"] = r.request_id;
  j["user"] = r.user_features;
  j["req"] = r.request_features;
  auto organic = json::array();
  for (const auto& oi : r.organic) {
    json o = features_to_json(oi.features);
    o["item_id"] = oi.item_id;
    o["gmv_per_click"] = oi.gmv_per_click;
    organic.push_back(std::move(o));
  }
  j["organic"] = std::move(organic);
  auto ads = json::array();
  for (const auto& ad : r.ads) {
    json a = features_to_json(ad.features);
    a["ad_id"] = ad.ad_id;
    a["bid"] = ad.bid;
    if (ad.true_value) a["true_value"] = *ad.true_value;
    a["x"] = ad.value_dist_features;
    a["gmv_per_click"] = ad.gmv_per_click;
    ads.push_back(std::move(a));
  }
  j["ads"] = std::move(ads);
  return j;
}

core::Request request_from_json(const json& j) {
  core::Request r;
  r.request_id = j.at("request_id").get<std::string>();
  r.user_features = j.at("user").get<std::vector<double>>();
  r.request_features = j.at("req").get<std::vector<double>>();
  for (const auto& o : j.at("organic")) {
    core::OrganicItem oi;
    oi.item_id = o.at("item_id").get<std::int64_t>();
    oi.features = features_from_json(o);
    oi.gmv_per_click = o.at("gmv_per_click").get<double>();
    r.organic.push_back(std::move(oi));
  }
  for (const auto& a : j.at("ads")) {
    core::AdCandidate ad;
    ad.ad_id = a.at("ad_id").get<std::int64_t>();
    ad.bid = a.at("bid").get<double>();
    if (a.contains("true_value")) ad.true_value = a.at("true_value").get<double>();
    ad.value_dist_features = a.at("x").get<std::vector<double>>();
    ad.features = features_from_json(a);
    ad.gmv_per_click = a.at("gmv_per_click").get<double>();
    r.ads.push_back(std::move(ad));
  }
  core::validate(r);
  return r;
}

json display_to_json(const DisplayRecord& d) {
  json j;
  j["request_id"] = d.request_id;
  j["ad_index"] = d.ad_index;
  j["ad_position"] = d.ad_position;
  j["clicks"] = d.clicks;
  j["gmv_per_click"] = d.gmv_per_click;
  return j;
}

DisplayRecord display_from_json(const json& j) {
  DisplayRecord d;
  d.request_id = j.at("request_id").get<std::string>();
  d.ad_index = j.at("ad_index").get<int>();
  d.ad_position = j.at("ad_position").get<int>();
  d.clicks = j.at("clicks").get<std::vector<int>>();
  d.gmv_per_click = j.at("gmv_per_click").get<std::vector<double>>();
  if (d.clicks.size() != d.gmv_per_click.size())
    throw std::runtime_error("display record: clicks/gmv length mismatch for " + d.request_id);
  return d;
}

void write_requests_jsonl(const std::string& path, const std::vector<core::Request>& rs) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rs) f << request_to_json(r).dump() << '\n';
}

std::vector<core::Request> read_requests_jsonl(const std::string& path) {
  std::vector<core::Request> out;
  for (const auto& line : util::read_lines(path))
    out.push_back(request_from_json(json::parse(line)));
  return out;
}

void write_displays_jsonl(const std::string& path, const std::vector<DisplayRecord>& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  for (const auto& d : ds) f << display_to_json(d).dump() << '\n';
}

std::vector<DisplayRecord> read_displays_jsonl(const std::string& path) {
  std::vector<DisplayRecord> out;
  for (const auto& line : util::read_lines(path))
    out.push_back(display_from_json(json::parse(line)));
  return out;
}

}  // namespace miaa::data
