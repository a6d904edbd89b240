#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaa/dataset.hpp"
#include "miaa/simgen.hpp"

namespace miaa::avito {

// Ingestion of Avito-style session logs (Kaggle SearchStream column
// layout, see docs/schemas.md). Five positions per session are logged
// (1, 2, 6, 7, 8); only positions 1 and 7 carry real click labels.
struct AvitoConfig {
  std::uint64_t seed = 1;
  std::int64_t vocab_size = 10000;        // AdID hash bucket count
  simgen::UniformRange bid_dist{0.5, 1.0};
  simgen::UniformRange organic_gmv_dist{3.5, 6.0};
  simgen::UniformRange ad_gmv_dist{2.0, 4.0};
  int x_dim = 4;
  int user_dim = 4;
  int request_dim = 4;
};

// Mean of the synthesized CTR distribution for the 2nd logged slot.
inline double simulated_ctr2_mean(double ctr1, double ctr7) { return 0.8 * ctr1 + 0.2 * ctr7; }
// Mean of the synthesized CTR distribution for the 6th logged slot.
inline double simulated_ctr6_mean(double ctr1, double ctr7) { return 0.2 * ctr1 + 0.8 * ctr7; }

struct IngestResult {
  // Display-style stream for CTR model training: the shown list
  // [pos1, pos2, pos6, pos7] with real labels at slots 1 and 4 and
  // synthesized labels at slots 2 and 3.
  data::Dataset epm;
  // Auction-style stream: 2 candidate ads (positions 1 and 7) and
  // 3 organic items (positions 2, 6, 8) per session.
  std::vector<core::Request> auction;
  std::int64_t malformed_rows = 0;
  std::int64_t skipped_sessions = 0;
  double ctr1 = 0.0;  // corpus click rate at logged position 1
  double ctr7 = 0.0;  // corpus click rate at logged position 7
};

IngestResult ingest_avito_sessions(const std::string& path, const AvitoConfig& cfg);

}  // namespace miaa::avito
