#include "miaa/config.hpp"

#include <fstream>
#include <stdexcept>

#include "miaa/util.hpp"

namespace miaa::config {

using nlohmann::json;

namespace {

// Reads a field if present, leaving the default otherwise.
template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void get_range(const json& j, const char* key, simgen::UniformRange& out) {
  if (!j.contains(key)) return;
  const auto& r = j.at(key);
  out.lo = r.at(0).get<double>();
  out.hi = r.at(1).get<double>();
}

json range_to_json(const simgen::UniformRange& r) { return json::array({r.lo, r.hi}); }

}  // namespace

void ExperimentConfig::harmonize() {
  epm.num_positions = market.m;
  epm.vocab_sizes = market.vocab_sizes;
  epm.dense_dim = market.dense_dim;
  epm.user_dim = market.user_dim;
  epm.request_dim = market.request_dim;
  mechanism.num_positions = market.m;
  mechanism.x_dim = market.x_dim;
  mechanism.user_dim = market.user_dim;
  mechanism.request_dim = market.request_dim;
  if (data.source == "avito") {
    // The session recipe fixes the shape: 2 candidate ads, 3 organic items.
    market.n = 2;
    market.m = 4;
    market.vocab_sizes = {10000};
    market.dense_dim = 1;
    epm.num_positions = 4;
    epm.vocab_sizes = {10000};
    epm.dense_dim = 1;
    mechanism.num_positions = 4;
  }
}

void ExperimentConfig::validate() const {
  market.validate();
  epm.validate();
  mechanism.validate();
  if (data.source != "synthetic" && data.source != "avito")
    throw std::runtime_error("config: data.source must be 'synthetic' or 'avito'");
  if (data.source == "avito" && data.avito_path.empty())
    throw std::runtime_error("config: data.avito_path required for the avito source");
  if (data.train_requests < 1 || data.test_requests < 1)
    throw std::runtime_error("config: request counts must be >= 1");
  if (seeds.empty()) throw std::runtime_error("config: seeds list is empty");
  if (epm_train.epochs < 1 || mech_train.epochs < 1)
    throw std::runtime_error("config: epochs must be >= 1");
  if (mech_train.tau_start <= 0 || mech_train.tau_end <= 0)
    throw std::runtime_error("config: temperatures must be > 0");
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.harmonize();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["market"] = {{"n", cfg.market.n},
                 {"m", cfg.market.m},
                 {"bid_dist", range_to_json(cfg.market.bid_dist)},
                 {"organic_gmv_dist", range_to_json(cfg.market.organic_gmv_dist)},
                 {"ad_gmv_dist", range_to_json(cfg.market.ad_gmv_dist)},
                 {"base_ctr_dist", range_to_json(cfg.market.base_ctr_dist)},
                 {"position_multipliers", cfg.market.position_multipliers},
                 {"context_coefficient", cfg.market.context_coefficient},
                 {"vocab_sizes", cfg.market.vocab_sizes},
                 {"dense_dim", cfg.market.dense_dim},
                 {"user_dim", cfg.market.user_dim},
                 {"request_dim", cfg.market.request_dim},
                 {"x_dim", cfg.market.x_dim}};
  j["data"] = {{"source", cfg.data.source},
               {"avito_path", cfg.data.avito_path},
               {"train_requests", cfg.data.train_requests},
               {"test_requests", cfg.data.test_requests}};
  j["epm"] = {{"embedding_dim", cfg.epm.embedding_dim},
              {"position_dim", cfg.epm.position_dim},
              {"hidden", cfg.epm.hidden}};
  j["pointwise"] = {{"hidden", cfg.pointwise.hidden}};
  j["epm_train"] = {{"epochs", cfg.epm_train.epochs},
                    {"batch_size", cfg.epm_train.batch_size},
                    {"learning_rate", cfg.epm_train.learning_rate},
                    {"val_fraction", cfg.epm_train.val_fraction},
                    {"gmv_loss_weight", cfg.epm_train.gmv_loss_weight}};
  j["mechanism"] = {{"mu_hidden", cfg.mechanism.mu_hidden},
                    {"lambda_hidden", cfg.mechanism.lambda_hidden},
                    {"alpha", cfg.mechanism.alpha},
                    {"allow_no_ad", cfg.mechanism.allow_no_ad},
                    {"clamp_payment_at_zero", cfg.mechanism.clamp_payment_at_zero}};
  j["mech_train"] = {{"epochs", cfg.mech_train.epochs},
                     {"batch_size", cfg.mech_train.batch_size},
                     {"learning_rate", cfg.mech_train.learning_rate},
                     {"tau_start", cfg.mech_train.tau_start},
                     {"tau_end", cfg.mech_train.tau_end},
                     {"val_fraction", cfg.mech_train.val_fraction},
                     {"ic_spot_requests", cfg.mech_train.ic_spot_requests},
                     {"ic_spot_grid", cfg.mech_train.ic_spot_grid}};
  j["eval"] = {{"audit_grid", cfg.eval.audit_grid},
               {"audit_sample", cfg.eval.audit_sample},
               {"ic_grid", cfg.eval.ic_grid}};
  j["seeds"] = cfg.seeds;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  return j;
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("market")) {
    const auto& m = j.at("market");
    get_if(m, "n", cfg.market.n);
    get_if(m, "m", cfg.market.m);
    get_range(m, "bid_dist", cfg.market.bid_dist);
    get_range(m, "organic_gmv_dist", cfg.market.organic_gmv_dist);
    get_range(m, "ad_gmv_dist", cfg.market.ad_gmv_dist);
    get_range(m, "base_ctr_dist", cfg.market.base_ctr_dist);
    get_if(m, "position_multipliers", cfg.market.position_multipliers);
    get_if(m, "context_coefficient", cfg.market.context_coefficient);
    get_if(m, "vocab_sizes", cfg.market.vocab_sizes);
    get_if(m, "dense_dim", cfg.market.dense_dim);
    get_if(m, "user_dim", cfg.market.user_dim);
    get_if(m, "request_dim", cfg.market.request_dim);
    get_if(m, "x_dim", cfg.market.x_dim);
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    get_if(d, "source", cfg.data.source);
    get_if(d, "avito_path", cfg.data.avito_path);
    get_if(d, "train_requests", cfg.data.train_requests);
    get_if(d, "test_requests", cfg.data.test_requests);
  }
  if (j.contains("epm")) {
    const auto& e = j.at("epm");
    get_if(e, "embedding_dim", cfg.epm.embedding_dim);
    get_if(e, "position_dim", cfg.epm.position_dim);
    get_if(e, "hidden", cfg.epm.hidden);
  }
  if (j.contains("pointwise")) get_if(j.at("pointwise"), "hidden", cfg.pointwise.hidden);
  if (j.contains("epm_train")) {
    const auto& t = j.at("epm_train");
    get_if(t, "epochs", cfg.epm_train.epochs);
    get_if(t, "batch_size", cfg.epm_train.batch_size);
    get_if(t, "learning_rate", cfg.epm_train.learning_rate);
    get_if(t, "val_fraction", cfg.epm_train.val_fraction);
    get_if(t, "gmv_loss_weight", cfg.epm_train.gmv_loss_weight);
  }
  if (j.contains("mechanism")) {
    const auto& a = j.at("mechanism");
    get_if(a, "mu_hidden", cfg.mechanism.mu_hidden);
    get_if(a, "lambda_hidden", cfg.mechanism.lambda_hidden);
    get_if(a, "alpha", cfg.mechanism.alpha);
    get_if(a, "allow_no_ad", cfg.mechanism.allow_no_ad);
    get_if(a, "clamp_payment_at_zero", cfg.mechanism.clamp_payment_at_zero);
  }
  if (j.contains("mech_train")) {
    const auto& t = j.at("mech_train");
    get_if(t, "epochs", cfg.mech_train.epochs);
    get_if(t, "batch_size", cfg.mech_train.batch_size);
    get_if(t, "learning_rate", cfg.mech_train.learning_rate);
    get_if(t, "tau_start", cfg.mech_train.tau_start);
    get_if(t, "tau_end", cfg.mech_train.tau_end);
    get_if(t, "val_fraction", cfg.mech_train.val_fraction);
    get_if(t, "ic_spot_requests", cfg.mech_train.ic_spot_requests);
    get_if(t, "ic_spot_grid", cfg.mech_train.ic_spot_grid);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    get_if(e, "audit_grid", cfg.eval.audit_grid);
    get_if(e, "audit_sample", cfg.eval.audit_sample);
    get_if(e, "ic_grid", cfg.eval.ic_grid);
  }
  get_if(j, "seeds", cfg.seeds);
  get_if(j, "seed", cfg.seed);
  get_if(j, "out_dir", cfg.out_dir);
  cfg.harmonize();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config: " + path + ": " + e.what());
  }
  auto cfg = from_json(j);
  cfg.validate();
  return cfg;
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  return util::fnv1a(to_json(cfg).dump());
}

}  // namespace miaa::config
