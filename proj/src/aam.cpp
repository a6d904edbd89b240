#include "miaa/aam.hpp"

#include <algorithm>
#include <cmath>

namespace miaa::aam {

using num::Tape;
using num::Tensor;
using num::Var;

namespace {

void add_mlp(num::ParameterStore& st, Rng& rng, const std::string& prefix, int in_dim,
             const std::vector<int>& hidden, int out_dim) {
  int cur = in_dim;
  int layer = 0;
  for (int h : hidden) {
    st.add(prefix + "." + std::to_string(layer) + ".w",
           num::xavier_uniform(rng, cur, h, {cur, h}));
    st.add(prefix + "." + std::to_string(layer) + ".b", Tensor({h}));
    cur = h;
    ++layer;
  }
  st.add(prefix + "." + std::to_string(layer) + ".w",
         num::xavier_uniform(rng, cur, out_dim, {cur, out_dim}));
  st.add(prefix + "." + std::to_string(layer) + ".b", Tensor({out_dim}));
}

Var mlp(Tape& tape, num::ParameterStore& st, const std::string& prefix, const Var& batch,
        int n_hidden) {
  Var h = batch;
  for (int layer = 0; layer <= n_hidden; ++layer) {
    const std::string base = prefix + "." + std::to_string(layer);
    h = num::add_rowvec(num::matmul(h, tape.param(st, base + ".w")),
                        tape.param(st, base + ".b"));
    if (layer < n_hidden) h = num::relu(h);
  }
  return h;
}

void append(std::vector<double>& out, const std::vector<double>& v) {
  out.insert(out.end(), v.begin(), v.end());
}

}  // namespace

void MechanismConfig::validate() const {
  if (num_positions < 1) throw std::runtime_error("mechanism config: num_positions < 1");
  if (x_dim < 1) throw std::runtime_error("mechanism config: x_dim < 1");
  if (alpha < 0.0) throw std::runtime_error("mechanism config: alpha must be >= 0");
  if (mu_hidden.empty() || lambda_hidden.empty())
    throw std::runtime_error("mechanism config: hidden layers empty");
}

MechanismModel MechanismModel::init(const MechanismConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  MechanismModel m;
  m.cfg_ = cfg;
  Rng rng_mu(derive_seed(seed, 0xA1));
  Rng rng_lam(derive_seed(seed, 0xA2));
  add_mlp(m.mu_, rng_mu, "mlp", cfg.mu_input_dim(), cfg.mu_hidden, 1);
  add_mlp(m.lam_, rng_lam, "mlp", cfg.lambda_input_dim(), cfg.lambda_hidden, 1);
  return m;
}

std::vector<double> MechanismModel::mu_features(const MechanismConfig& cfg,
                                                const core::Request& r, int ad_index) {
  const auto& ad = r.ads.at(static_cast<std::size_t>(ad_index - 1));
  if (static_cast<int>(ad.value_dist_features.size()) != cfg.x_dim)
    throw std::runtime_error("mechanism: x feature width mismatch");
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(cfg.mu_input_dim()));
  append(f, ad.value_dist_features);
  append(f, r.user_features);
  append(f, r.request_features);
  return f;
}

std::vector<double> MechanismModel::lambda_features(const MechanismConfig& cfg,
                                                    const core::Request& r,
                                                    const core::Allocation& a,
                                                    const epm::EpmPrediction& p) {
  if (static_cast<int>(a.items.size()) != cfg.num_positions)
    throw std::runtime_error("mechanism: allocation length mismatch");
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(cfg.lambda_input_dim()));
  for (std::size_t j = 0; j < a.items.size(); ++j) {
    const auto& slot = a.items[j];
    if (slot.is_ad) {
      const auto& ad = r.ads.at(static_cast<std::size_t>(slot.source_index));
      if (static_cast<int>(ad.value_dist_features.size()) != cfg.x_dim)
        throw std::runtime_error("mechanism: x feature width mismatch");
      append(f, ad.value_dist_features);
    } else {
      f.insert(f.end(), static_cast<std::size_t>(cfg.x_dim), 0.0);
    }
    f.push_back(p.pctr.at(j));
    f.push_back(p.pgmv_per_click.at(j));
  }
  append(f, r.user_features);
  append(f, r.request_features);
  return f;
}

std::vector<double> MechanismModel::lambda_features_null(const MechanismConfig& cfg,
                                                         const core::Request& r,
                                                         const epm::EpmPrediction& p) {
  std::vector<double> f;
  f.reserve(static_cast<std::size_t>(cfg.lambda_input_dim()));
  for (int j = 0; j < cfg.num_positions; ++j) {
    f.insert(f.end(), static_cast<std::size_t>(cfg.x_dim), 0.0);
    f.push_back(p.pctr.at(static_cast<std::size_t>(j)));
    f.push_back(p.pgmv_per_click.at(static_cast<std::size_t>(j)));
  }
  append(f, r.user_features);
  append(f, r.request_features);
  return f;
}

Var MechanismModel::mu_forward(Tape& tape, const Var& batch) const {
  return num::sigmoid(mlp(tape, mu_, "mlp", batch,
                          static_cast<int>(cfg_.mu_hidden.size())));
}

Var MechanismModel::lambda_forward(Tape& tape, const Var& batch) const {
  return mlp(tape, lam_, "mlp", batch, static_cast<int>(cfg_.lambda_hidden.size()));
}

double MechanismModel::mu_value(const core::Request& r, int ad_index) const {
  Tape tape;
  Var batch = tape.leaf(Tensor::matrix(1, cfg_.mu_input_dim(), mu_features(cfg_, r, ad_index)));
  return mu_forward(tape, batch).value().at(0);
}

double MechanismModel::lambda_value(const core::Request& r, const core::Allocation& a,
                                    const epm::EpmPrediction& p) const {
  Tape tape;
  Var batch =
      tape.leaf(Tensor::matrix(1, cfg_.lambda_input_dim(), lambda_features(cfg_, r, a, p)));
  return lambda_forward(tape, batch).value().at(0);
}

double MechanismModel::lambda_value_null(const core::Request& r,
                                         const epm::EpmPrediction& p) const {
  Tape tape;
  Var batch = tape.leaf(
      Tensor::matrix(1, cfg_.lambda_input_dim(), lambda_features_null(cfg_, r, p)));
  return lambda_forward(tape, batch).value().at(0);
}

void MechanismModel::save(const std::string& path) const {
  num::ParameterStore merged;
  for (const auto& [name, e] : mu_.entries()) merged.add("mu." + name, e.value);
  for (const auto& [name, e] : lam_.entries()) merged.add("lam." + name, e.value);
  nlohmann::json meta;
  meta["model"] = "mechanism";
  meta["config"] = {{"num_positions", cfg_.num_positions},
                    {"x_dim", cfg_.x_dim},
                    {"user_dim", cfg_.user_dim},
                    {"request_dim", cfg_.request_dim},
                    {"mu_hidden", cfg_.mu_hidden},
                    {"lambda_hidden", cfg_.lambda_hidden},
                    {"alpha", cfg_.alpha},
                    {"allow_no_ad", cfg_.allow_no_ad},
                    {"clamp_payment_at_zero", cfg_.clamp_payment_at_zero}};
  merged.save(path, meta);
}

MechanismModel MechanismModel::load(const std::string& path) {
  nlohmann::json meta;
  auto merged = num::ParameterStore::load(path, &meta);
  if (meta.value("model", "") != "mechanism")
    throw std::runtime_error("mechanism: checkpoint is not a mechanism model: " + path);
  MechanismModel m;
  const auto& c = meta.at("config");
  m.cfg_.num_positions = c.at("num_positions").get<int>();
  m.cfg_.x_dim = c.at("x_dim").get<int>();
  m.cfg_.user_dim = c.at("user_dim").get<int>();
  m.cfg_.request_dim = c.at("request_dim").get<int>();
  m.cfg_.mu_hidden = c.at("mu_hidden").get<std::vector<int>>();
  m.cfg_.lambda_hidden = c.at("lambda_hidden").get<std::vector<int>>();
  m.cfg_.alpha = c.at("alpha").get<double>();
  m.cfg_.allow_no_ad = c.at("allow_no_ad").get<bool>();
  m.cfg_.clamp_payment_at_zero = c.at("clamp_payment_at_zero").get<bool>();
  for (const auto& [name, e] : merged.entries()) {
    if (name.rfind("mu.", 0) == 0)
      m.mu_.add(name.substr(3), e.value);
    else if (name.rfind("lam.", 0) == 0)
      m.lam_.add(name.substr(4), e.value);
    else
      throw std::runtime_error("mechanism: unexpected tensor " + name + " in " + path);
  }
  return m;
}

double SwLedger::recompute_payment() const {
  const double raw = (sw_counterfactual - lambda_star) / (mu_winner * q_winner);
  return clamped_at_zero ? std::max(0.0, raw) : raw;
}

nlohmann::json outcome_to_json(const AuctionOutcome& o) {
  return {{"has_winner", o.has_winner},
          {"winner_ad_index", o.winner_ad_index},
          {"winner_ad_id", o.winner_ad_id},
          {"position", o.position},
          {"payment_per_click", o.payment_per_click},
          {"sw_ledger",
           {{"sw_star", o.ledger.sw_star},
            {"sw_counterfactual", o.ledger.sw_counterfactual},
            {"lambda_star", o.ledger.lambda_star},
            {"mu_winner", o.ledger.mu_winner},
            {"q_winner", o.ledger.q_winner},
            {"bid_winner", o.ledger.bid_winner},
            {"counterfactual_is_null", o.ledger.counterfactual_is_null},
            {"clamped_at_zero", o.ledger.clamped_at_zero}}}};
}

ScoreSet neural_scores(const MechanismModel& model, const core::Request& r,
                       const std::vector<core::Allocation>& allocs,
                       const std::vector<epm::EpmPrediction>& preds,
                       const epm::EpmPrediction* organic_pred) {
  ScoreSet s;
  s.mu.reserve(r.ads.size());
  for (int i = 1; i <= r.num_ads(); ++i) s.mu.push_back(model.mu_value(r, i));
  s.lambda.reserve(allocs.size());
  for (std::size_t k = 0; k < allocs.size(); ++k)
    s.lambda.push_back(model.lambda_value(r, allocs[k], preds[k]));
  if (organic_pred) s.lambda_null = model.lambda_value_null(r, *organic_pred);
  return s;
}

ScoreSet constant_scores(int n, int num_allocations, double mu, double lambda,
                         std::optional<double> lambda_null) {
  ScoreSet s;
  s.mu.assign(static_cast<std::size_t>(n), mu);
  s.lambda.assign(static_cast<std::size_t>(num_allocations), lambda);
  s.lambda_null = lambda_null;
  return s;
}

double social_welfare(const MechanismModel& model, const core::Request& r,
                      const core::Allocation& a, const epm::EpmPrediction& p) {
  const double mu_i = model.mu_value(r, a.ad_index);
  const double bid = r.ads.at(static_cast<std::size_t>(a.ad_index - 1)).bid;
  const double q = p.pctr.at(static_cast<std::size_t>(a.ad_position - 1));
  return social_welfare(mu_i, bid, q, model.lambda_value(r, a, p));
}

AuctionOutcome run_auction(const core::Request& r,
                           const std::vector<core::Allocation>& allocs,
                           const std::vector<epm::EpmPrediction>& preds,
                           const ScoreSet& scores, const AuctionOptions& options) {
  const int n = r.num_ads();
  if (allocs.empty()) throw std::runtime_error("run_auction: no allocations");
  if (preds.size() != allocs.size())
    throw std::runtime_error("run_auction: predictions not aligned with allocations");
  if (scores.mu.size() != static_cast<std::size_t>(n) ||
      scores.lambda.size() != allocs.size())
    throw std::runtime_error("run_auction: score set not aligned");
  const bool with_null = options.allow_no_ad && scores.lambda_null.has_value();
  if (n < 2 && !with_null)
    throw std::runtime_error("counterfactual allocation set empty");

  std::vector<double> sw(allocs.size());
  for (std::size_t k = 0; k < allocs.size(); ++k) {
    const auto& a = allocs[k];
    const double bid = r.ads[static_cast<std::size_t>(a.ad_index - 1)].bid;
    const double q = preds[k].pctr.at(static_cast<std::size_t>(a.ad_position - 1));
    sw[k] = social_welfare(scores.mu[static_cast<std::size_t>(a.ad_index - 1)], bid, q,
                           scores.lambda[k]);
  }

  // Argmax in enumeration order; the organic-only reserve wins only on a
  // strictly larger score.
  std::size_t best = 0;
  for (std::size_t k = 1; k < sw.size(); ++k)
    if (sw[k] > sw[best]) best = k;
  const bool null_wins = with_null && *scores.lambda_null > sw[best];

  AuctionOutcome out;
  if (null_wins) {
    out.has_winner = false;
    out.ledger.sw_star = *scores.lambda_null;
    out.ledger.lambda_star = *scores.lambda_null;
    out.ledger.counterfactual_is_null = true;
    out.payment_per_click = 0.0;
    return out;
  }

  const auto& star = allocs[best];
  const int i = star.ad_index;
  const auto& ad = r.ads[static_cast<std::size_t>(i - 1)];

  bool cf_found = false;
  bool cf_null = false;
  double cf = 0.0;
  for (std::size_t k = 0; k < sw.size(); ++k) {
    if (allocs[k].ad_index == i) continue;
    if (!cf_found || sw[k] > cf) {
      cf = sw[k];
      cf_found = true;
    }
  }
  if (with_null && (!cf_found || *scores.lambda_null > cf)) {
    cf = *scores.lambda_null;
    cf_found = true;
    cf_null = true;
  }
  if (!cf_found) throw std::runtime_error("counterfactual allocation set empty");

  const double mu_w = scores.mu[static_cast<std::size_t>(i - 1)];
  const double q_w = preds[best].pctr.at(static_cast<std::size_t>(star.ad_position - 1));
  const double denom = mu_w * q_w;
  if (denom < options.division_guard)
    throw AuctionRejected("run_auction: rejected instance, mu*q=" + std::to_string(denom));

  const double lambda_star = scores.lambda[best];
  double payment = (cf - lambda_star) / denom;
  const bool clamped = options.clamp_payment_at_zero && payment < 0.0;
  if (clamped) payment = 0.0;

  out.has_winner = true;
  out.winner_ad_index = i;
  out.winner_ad_id = ad.ad_id;
  out.position = star.ad_position;
  out.payment_per_click = payment;
  out.ledger.sw_star = sw[best];
  out.ledger.sw_counterfactual = cf;
  out.ledger.lambda_star = lambda_star;
  out.ledger.mu_winner = mu_w;
  out.ledger.q_winner = q_w;
  out.ledger.bid_winner = ad.bid;
  out.ledger.counterfactual_is_null = cf_null;
  out.ledger.clamped_at_zero = clamped;

  if (out.payment_per_click > ad.bid + 1e-9)
    throw std::logic_error("run_auction: payment exceeded bid, broken welfare maximum");
  return out;
}

}  // namespace miaa::aam
