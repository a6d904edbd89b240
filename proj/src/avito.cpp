#include "miaa/avito.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "miaa/util.hpp"

namespace miaa::avito {

namespace {

struct Row {
  std::int64_t ad_id = 0;
  int position = 0;
  double hist_ctr = 0.0;
  int is_click = -1;  // -1 when the column is empty for this row
};

std::vector<std::string> split(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, delim)) out.push_back(cur);
  if (!line.empty() && line.back() == delim) out.push_back("");
  return out;
}

core::ItemFeatures make_features(const AvitoConfig& cfg, const Row& row) {
  core::ItemFeatures f;
  f.sparse_ids = {row.ad_id % cfg.vocab_size};
  f.dense = {row.hist_ctr};
  f.position_hint = row.position;
  return f;
}

core::AdCandidate make_ad(const AvitoConfig& cfg, const Row& row, Rng& rng) {
  core::AdCandidate ad;
  ad.ad_id = row.ad_id;
  const double value = rng.uniform(cfg.bid_dist.lo, cfg.bid_dist.hi);
  ad.true_value = value;
  ad.bid = value;
  ad.gmv_per_click = rng.uniform(cfg.ad_gmv_dist.lo, cfg.ad_gmv_dist.hi);
  ad.features = make_features(cfg, row);
  ad.value_dist_features.assign(static_cast<std::size_t>(cfg.x_dim), 0.0);
  ad.value_dist_features[0] = 0.5 * (cfg.bid_dist.lo + cfg.bid_dist.hi);
  if (cfg.x_dim > 1) ad.value_dist_features[1] = cfg.bid_dist.hi - cfg.bid_dist.lo;
  if (cfg.x_dim > 2) ad.value_dist_features[2] = row.hist_ctr;
  if (cfg.x_dim > 3) ad.value_dist_features[3] = ad.gmv_per_click / 6.0;
  return ad;
}

core::OrganicItem make_organic(const AvitoConfig& cfg, const Row& row, Rng& rng) {
  core::OrganicItem oi;
  oi.item_id = row.ad_id;
  oi.gmv_per_click = rng.uniform(cfg.organic_gmv_dist.lo, cfg.organic_gmv_dist.hi);
  oi.features = make_features(cfg, row);
  return oi;
}

std::vector<double> pseudo_context(std::uint64_t search_id, int dim, std::uint64_t stream) {
  Rng rng(derive_seed(search_id, stream));
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (auto& v : out) v = rng.uniform();
  return out;
}

}  // namespace

IngestResult ingest_avito_sessions(const std::string& path, const AvitoConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("avito: cannot open " + path);
  std::string first;
  if (!std::getline(f, first)) throw std::runtime_error("avito: empty file " + path);
  if (!first.empty() && first.back() == '\r') first.pop_back();

  IngestResult result;
  std::map<std::int64_t, std::vector<Row>> sessions;  // ordered by SearchID
  std::string line;

  const bool jsonl = !first.empty() && first.front() == '{';
  if (jsonl) {
    // JSONL rows with the same field names as the tabular layout.
    line = first;
    do {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        if (!j.contains("IsClick"))
          throw std::runtime_error("avito: rows are missing the IsClick column");
        Row row;
        const auto search_id = j.at("SearchID").get<std::int64_t>();
        row.ad_id = j.at("AdID").get<std::int64_t>();
        row.position = j.at("Position").get<int>();
        row.hist_ctr = j.value("HistCTR", 0.0);
        row.is_click = j.at("IsClick").is_null() ? -1 : j.at("IsClick").get<int>();
        sessions[search_id].push_back(row);
      } catch (const nlohmann::json::exception&) {
        ++result.malformed_rows;
      }
    } while (std::getline(f, line));
    if (sessions.empty() && result.malformed_rows > 0)
      throw std::runtime_error("avito: no parsable JSONL rows in " + path);
  } else {
    const std::string& header = first;
    const char delim = header.find('\t') != std::string::npos ? '\t' : ',';
    const auto cols = split(header, delim);
    auto col = [&](const std::string& name) -> int {
      for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i] == name) return static_cast<int>(i);
      return -1;
    };
    const int c_search = col("SearchID");
    const int c_ad = col("AdID");
    const int c_pos = col("Position");
    const int c_ctr = col("HistCTR");
    const int c_click = col("IsClick");
    if (c_search < 0 || c_ad < 0 || c_pos < 0)
      throw std::runtime_error("avito: header is missing SearchID/AdID/Position columns");
    if (c_click < 0)
      throw std::runtime_error("avito: header is missing the IsClick column");

    while (std::getline(f, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto parts = split(line, delim);
      const int needed = std::max({c_search, c_ad, c_pos, c_ctr, c_click});
      if (static_cast<int>(parts.size()) <= needed) {
        ++result.malformed_rows;
        continue;
      }
      try {
        Row row;
        const std::int64_t search_id = std::stoll(parts[static_cast<std::size_t>(c_search)]);
        row.ad_id = std::stoll(parts[static_cast<std::size_t>(c_ad)]);
        row.position = std::stoi(parts[static_cast<std::size_t>(c_pos)]);
        row.hist_ctr =
            c_ctr >= 0 && !parts[static_cast<std::size_t>(c_ctr)].empty()
                ? std::stod(parts[static_cast<std::size_t>(c_ctr)])
                : 0.0;
        const auto& click_s = parts[static_cast<std::size_t>(c_click)];
        row.is_click = click_s.empty() ? -1 : std::stoi(click_s);
        sessions[search_id].push_back(row);
      } catch (const std::exception&) {
        ++result.malformed_rows;
      }
    }
  }

  // Corpus position CTRs from real labels.
  std::int64_t n1 = 0, k1 = 0, n7 = 0, k7 = 0;
  for (const auto& [sid, rows] : sessions) {
    for (const auto& r : rows) {
      if (r.position == 1 && r.is_click >= 0) {
        ++n1;
        k1 += r.is_click;
      }
      if (r.position == 7 && r.is_click >= 0) {
        ++n7;
        k7 += r.is_click;
      }
    }
  }
  if (n1 == 0 || n7 == 0)
    throw std::runtime_error("avito: no labeled rows at positions 1 and 7");
  result.ctr1 = static_cast<double>(k1) / static_cast<double>(n1);
  result.ctr7 = static_cast<double>(k7) / static_cast<double>(n7);
  const double mu2 = simulated_ctr2_mean(result.ctr1, result.ctr7);
  const double mu6 = simulated_ctr6_mean(result.ctr1, result.ctr7);
  // Treating the recipe's second parameter as a variance; negative draws
  // are clipped, which is why the floor below matters.
  const double sd2 = std::sqrt(0.1 * result.ctr1);
  const double sd6 = std::sqrt(0.1 * result.ctr7);

  std::int64_t session_index = 0;
  for (const auto& [sid, rows] : sessions) {
    const std::int64_t index = session_index++;
    const Row* at[9] = {};
    bool dup = false;
    for (const auto& r : rows) {
      if (r.position >= 1 && r.position <= 8) {
        if (at[r.position]) dup = true;
        at[r.position] = &r;
      }
    }
    const bool complete = at[1] && at[2] && at[6] && at[7] && at[8] && !dup &&
                          at[1]->is_click >= 0 && at[7]->is_click >= 0;
    if (!complete) {
      ++result.skipped_sessions;
      continue;
    }

    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(sid)));
    // Per-item CTR drawn once from the recipe's normal, then a Bernoulli
    // label per impression.
    const double ctr2 = std::clamp(rng.normal(mu2, sd2), 1e-4, 1.0 - 1e-4);
    const double ctr6 = std::clamp(rng.normal(mu6, sd6), 1e-4, 1.0 - 1e-4);
    const int y2 = rng.bernoulli(ctr2) ? 1 : 0;
    const int y6 = rng.bernoulli(ctr6) ? 1 : 0;

    const auto zu = pseudo_context(static_cast<std::uint64_t>(sid), cfg.user_dim, 11);
    const auto zr = pseudo_context(static_cast<std::uint64_t>(sid), cfg.request_dim, 12);

    // Display-style request: shown list [1, 2, 6, 7]; the position-1 item
    // is the inserted ad, the rest are treated as organic context.
    {
      core::Request r;
      r.request_id = "avito-epm-" + std::to_string(sid);
      r.user_features = zu;
      r.request_features = zr;
      r.ads.push_back(make_ad(cfg, *at[1], rng));
      r.organic.push_back(make_organic(cfg, *at[2], rng));
      r.organic.push_back(make_organic(cfg, *at[6], rng));
      r.organic.push_back(make_organic(cfg, *at[7], rng));
      data::DisplayRecord d;
      d.request_id = r.request_id;
      d.ad_index = 1;
      d.ad_position = 1;
      d.clicks = {at[1]->is_click, y2, y6, at[7]->is_click};
      d.gmv_per_click = {r.ads[0].gmv_per_click, r.organic[0].gmv_per_click,
                         r.organic[1].gmv_per_click, r.organic[2].gmv_per_click};
      core::validate(r);
      result.epm.requests.push_back(std::move(r));
      result.epm.displays.push_back(std::move(d));
    }

    // Auction-style request: the two labeled items are the candidate ads.
    {
      core::Request r;
      r.request_id = "avito-" + std::to_string(sid);
      r.user_features = zu;
      r.request_features = zr;
      r.ads.push_back(make_ad(cfg, *at[1], rng));
      r.ads.push_back(make_ad(cfg, *at[7], rng));
      r.organic.push_back(make_organic(cfg, *at[2], rng));
      r.organic.push_back(make_organic(cfg, *at[6], rng));
      r.organic.push_back(make_organic(cfg, *at[8], rng));
      core::validate(r);
      result.auction.push_back(std::move(r));
    }
    (void)index;
  }
  return result;
}

}  // namespace miaa::avito
