#include "miaa/dsm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "miaa/util.hpp"

namespace miaa::dsm {

using num::Tape;
using num::Tensor;
using num::Var;

std::vector<double> winning_probs(const std::vector<double>& sw, double tau) {
  return num::softmax_values(sw, tau);
}

AllocationObjectives allocation_objectives(const core::Request& r,
                                           const std::vector<core::Allocation>& allocs,
                                           const std::vector<epm::EpmPrediction>& preds,
                                           const aam::ScoreSet& scores, bool allow_no_ad) {
  const int n = r.num_ads();
  std::vector<double> sw(allocs.size());
  for (std::size_t k = 0; k < allocs.size(); ++k) {
    const auto& a = allocs[k];
    const double bid = r.ads[static_cast<std::size_t>(a.ad_index - 1)].bid;
    const double q = preds[k].pctr.at(static_cast<std::size_t>(a.ad_position - 1));
    sw[k] = aam::social_welfare(scores.mu[static_cast<std::size_t>(a.ad_index - 1)], bid, q,
                                scores.lambda[k]);
  }
  const bool with_null = allow_no_ad && scores.lambda_null.has_value();

  // Counterfactual per ad: best welfare among the other ads' allocations
  // (plus the organic-only reserve when enabled).
  std::vector<double> cf(static_cast<std::size_t>(n),
                         -std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < allocs.size(); ++k) {
    const int i = allocs[k].ad_index;
    for (int other = 1; other <= n; ++other)
      if (other != i) {
        auto& c = cf[static_cast<std::size_t>(other - 1)];
        if (sw[k] > c) c = sw[k];
      }
  }
  if (with_null)
    for (auto& c : cf) c = std::max(c, *scores.lambda_null);
  for (double c : cf)
    if (!std::isfinite(c)) throw std::runtime_error("counterfactual allocation set empty");

  AllocationObjectives out;
  out.rev.resize(allocs.size());
  out.gmv.resize(allocs.size());
  for (std::size_t k = 0; k < allocs.size(); ++k) {
    const auto& a = allocs[k];
    const auto& p = preds[k];
    const double bid = r.ads[static_cast<std::size_t>(a.ad_index - 1)].bid;
    const double q = p.pctr.at(static_cast<std::size_t>(a.ad_position - 1));
    const double mu_i = scores.mu[static_cast<std::size_t>(a.ad_index - 1)];
    const double payment =
        (cf[static_cast<std::size_t>(a.ad_index - 1)] - scores.lambda[k]) / (mu_i * q);
    out.rev[k] = std::clamp(payment, 0.0, bid) * q;
    double gmv = 0.0;
    for (std::size_t j = 0; j < p.pctr.size(); ++j) gmv += p.pgmv_per_click[j] * p.pctr[j];
    out.gmv[k] = gmv;
  }
  return out;
}

double reward_loss(const std::vector<double>& pr, const std::vector<double>& rev,
                   const std::vector<double>& gmv, double alpha) {
  if (pr.size() != rev.size() || pr.size() != gmv.size())
    throw std::runtime_error("reward_loss: length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < pr.size(); ++k) acc += pr[k] * (rev[k] + alpha * gmv[k]);
  return -acc;
}

RequestContext make_context(const core::Request& r, const epm::EpmModel& epm_model,
                            bool with_organic) {
  RequestContext ctx;
  ctx.request = r;
  ctx.allocations = core::enumerate_allocations(r);
  ctx.predictions = epm_model.predict_all(r, ctx.allocations);
  if (with_organic) ctx.organic_pred = epm_model.predict_organic_only(r);
  return ctx;
}

namespace {

// Per-request differentiable loss. All EPM quantities enter as constants;
// gradients flow through the mu/lambda forwards only.
Var request_loss(Tape& tape, const aam::MechanismModel& model, const RequestContext& ctx,
                 double tau, double alpha, bool allow_no_ad) {
  const auto& r = ctx.request;
  const int n = r.num_ads();
  const auto K = ctx.allocations.size();

  std::vector<Var> mu_rows;
  mu_rows.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i)
    mu_rows.push_back(
        tape.leaf(Tensor::vector(aam::MechanismModel::mu_features(model.config(), r, i))));
  Var mu_col = model.mu_forward(tape, num::stack_rows(mu_rows));  // n x 1
  Var mu_vec = num::reshape(mu_col, {n});

  std::vector<Var> lam_rows;
  lam_rows.reserve(K);
  for (std::size_t k = 0; k < K; ++k)
    lam_rows.push_back(tape.leaf(Tensor::vector(aam::MechanismModel::lambda_features(
        model.config(), r, ctx.allocations[k], ctx.predictions[k]))));
  Var lam_col = model.lambda_forward(tape, num::stack_rows(lam_rows));
  Var lam_vec = num::reshape(lam_col, {static_cast<std::int64_t>(K)});

  std::optional<Var> lam_null;
  if (allow_no_ad) {
    if (!ctx.organic_pred)
      throw std::runtime_error("train_mechanism: missing organic-only prediction");
    Var row = tape.leaf(Tensor::vector(aam::MechanismModel::lambda_features_null(
        model.config(), r, *ctx.organic_pred)));
    lam_null = num::reshape(model.lambda_forward(tape, num::stack_rows({row})), {1});
    lam_null = num::index1d(*lam_null, 0);
  }

  std::vector<Var> mu_scalar(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) mu_scalar[static_cast<std::size_t>(i)] = num::index1d(mu_vec, i);

  std::vector<Var> sw(K);
  std::vector<double> bid_q(K);
  std::vector<double> q_at(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& a = ctx.allocations[k];
    const double bid = r.ads[static_cast<std::size_t>(a.ad_index - 1)].bid;
    const double q = ctx.predictions[k].pctr.at(static_cast<std::size_t>(a.ad_position - 1));
    bid_q[k] = bid * q;
    q_at[k] = q;
    sw[k] = num::add(num::scale(mu_scalar[static_cast<std::size_t>(a.ad_index - 1)], bid_q[k]),
                     num::index1d(lam_vec, static_cast<std::int64_t>(k)));
  }

  // Per-ad counterfactual: pick the argmax by value, keep its node so the
  // gradient flows through the selected branch.
  std::vector<Var> cf(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    int best = -1;
    for (std::size_t k = 0; k < K; ++k) {
      if (ctx.allocations[k].ad_index == i) continue;
      if (best < 0 || sw[k].value().at(0) > sw[static_cast<std::size_t>(best)].value().at(0))
        best = static_cast<int>(k);
    }
    if (lam_null &&
        (best < 0 || lam_null->value().at(0) > sw[static_cast<std::size_t>(best)].value().at(0))) {
      cf[static_cast<std::size_t>(i - 1)] = *lam_null;
    } else if (best >= 0) {
      cf[static_cast<std::size_t>(i - 1)] = sw[static_cast<std::size_t>(best)];
    } else {
      throw std::runtime_error("train_mechanism: counterfactual allocation set empty");
    }
  }

  std::vector<Var> rev(K);
  std::vector<double> gmv(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& a = ctx.allocations[k];
    const double bid = r.ads[static_cast<std::size_t>(a.ad_index - 1)].bid;
    Var payment = num::div(num::sub(cf[static_cast<std::size_t>(a.ad_index - 1)],
                                    num::index1d(lam_vec, static_cast<std::int64_t>(k))),
                           num::scale(mu_scalar[static_cast<std::size_t>(a.ad_index - 1)],
                                      q_at[k]));
    rev[k] = num::scale(num::clamp(payment, 0.0, bid), q_at[k]);
    double g = 0.0;
    const auto& p = ctx.predictions[k];
    for (std::size_t j = 0; j < p.pctr.size(); ++j) g += p.pgmv_per_click[j] * p.pctr[j];
    gmv[k] = g;
  }

  Var sw_vec = num::concat1d(sw);
  Var pr = num::softmax1d(sw_vec, tau);
  Var rev_vec = num::concat1d(rev);
  Tensor alpha_gmv({static_cast<std::int64_t>(K)});
  for (std::size_t k = 0; k < K; ++k) alpha_gmv.at(static_cast<std::int64_t>(k)) = alpha * gmv[k];
  return num::neg(num::sum(num::mul(pr, num::add_const_t(rev_vec, alpha_gmv))));
}

struct ValStats {
  double rev = 0.0;
  double gmv = 0.0;
  double objective = 0.0;
  double negative_rate = 0.0;
};

ValStats validate_hard(const std::vector<RequestContext>& val,
                       const aam::MechanismModel& model, double alpha,
                       const aam::AuctionOptions& options) {
  ValStats s;
  if (val.empty()) return s;
  std::size_t negatives = 0;
  for (const auto& ctx : val) {
    const auto scores = aam::neural_scores(model, ctx.request, ctx.allocations,
                                           ctx.predictions,
                                           ctx.organic_pred ? &*ctx.organic_pred : nullptr);
    const auto out =
        aam::run_auction(ctx.request, ctx.allocations, ctx.predictions, scores, options);
    double rev = 0.0, gmv = 0.0;
    if (out.has_winner) {
      rev = out.payment_per_click * out.ledger.q_winner;
      const auto ord =
          core::allocation_ordinal(ctx.request, out.winner_ad_index, out.position);
      const auto& p = ctx.predictions[static_cast<std::size_t>(ord)];
      for (std::size_t j = 0; j < p.pctr.size(); ++j)
        gmv += p.pgmv_per_click[j] * p.pctr[j];
      if (out.payment_per_click < 0.0) ++negatives;
    } else if (ctx.organic_pred) {
      for (std::size_t j = 0; j < ctx.organic_pred->pctr.size(); ++j)
        gmv += ctx.organic_pred->pgmv_per_click[j] * ctx.organic_pred->pctr[j];
    }
    s.rev += rev;
    s.gmv += gmv;
  }
  const double nreq = static_cast<double>(val.size());
  s.rev /= nreq;
  s.gmv /= nreq;
  s.objective = s.rev + alpha * s.gmv;
  s.negative_rate = static_cast<double>(negatives) / nreq;
  return s;
}

}  // namespace

double miaa_ic_spot_regret(const std::vector<RequestContext>& contexts,
                           const aam::MechanismModel& model, int grid_size) {
  double max_regret = 0.0;
  aam::AuctionOptions options;
  options.allow_no_ad = model.config().allow_no_ad;
  for (const auto& ctx : contexts) {
    const auto scores = aam::neural_scores(model, ctx.request, ctx.allocations,
                                           ctx.predictions,
                                           ctx.organic_pred ? &*ctx.organic_pred : nullptr);
    for (int i = 1; i <= ctx.request.num_ads(); ++i) {
      const auto& ad = ctx.request.ads[static_cast<std::size_t>(i - 1)];
      const double value = ad.true_value.value_or(ad.bid);
      auto utility_at = [&](double bid) {
        core::Request mod = ctx.request;
        mod.ads[static_cast<std::size_t>(i - 1)].bid = bid;
        const auto out =
            aam::run_auction(mod, ctx.allocations, ctx.predictions, scores, options);
        if (!out.has_winner || out.winner_ad_index != i) return 0.0;
        return (value - out.payment_per_click) * out.ledger.q_winner;
      };
      const double truthful = utility_at(value);
      for (double b : util::linspace(0.1 * value, 3.0 * value, grid_size))
        max_regret = std::max(max_regret, utility_at(b) - truthful);
    }
  }
  return max_regret;
}

aam::MechanismModel train_mechanism(const std::vector<core::Request>& requests,
                                    const epm::EpmModel& epm_model,
                                    const aam::MechanismConfig& cfg,
                                    const MechTrainConfig& train,
                                    std::vector<MechEpochStats>* curve) {
  if (requests.empty()) throw std::runtime_error("train_mechanism: empty dataset");
  cfg.validate();
  for (const auto& r : requests) {
    if (r.num_positions() != cfg.num_positions)
      throw std::runtime_error("train_mechanism: request m does not match num_positions");
    if (r.num_ads() < 2 && !cfg.allow_no_ad)
      throw std::runtime_error(
          "train_mechanism: request with a single ad needs allow_no_ad");
  }

  std::vector<RequestContext> contexts;
  contexts.reserve(requests.size());
  for (const auto& r : requests)
    contexts.push_back(make_context(r, epm_model, cfg.allow_no_ad));

  const auto n_val =
      static_cast<std::size_t>(static_cast<double>(contexts.size()) * train.val_fraction);
  const std::size_t n_train = contexts.size() - n_val;
  std::vector<RequestContext> val(contexts.begin() + static_cast<std::ptrdiff_t>(n_train),
                                  contexts.end());
  contexts.resize(n_train);
  if (contexts.empty()) throw std::runtime_error("train_mechanism: empty training split");

  aam::MechanismModel model = aam::MechanismModel::init(cfg, train.seed);
  Rng rng(derive_seed(train.seed, 0xD5));
  aam::AuctionOptions val_options;
  val_options.allow_no_ad = cfg.allow_no_ad;

  std::vector<RequestContext> spot(
      val.begin(),
      val.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                        val.size(), static_cast<std::size_t>(train.ic_spot_requests))));

  double best_objective = -std::numeric_limits<double>::infinity();
  num::ParameterStore best_mu = model.mu_params();
  num::ParameterStore best_lam = model.lambda_params();

  std::vector<std::size_t> order(contexts.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    const double frac =
        train.epochs > 1 ? static_cast<double>(epoch) / (train.epochs - 1) : 1.0;
    const double tau = train.tau_start * std::pow(train.tau_end / train.tau_start, frac);

    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)))]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(train.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(train.batch_size));
      Tape tape;
      std::vector<Var> losses;
      losses.reserve(end - start);
      for (std::size_t s = start; s < end; ++s)
        losses.push_back(request_loss(tape, model, contexts[order[s]], tau, cfg.alpha,
                                      cfg.allow_no_ad));
      Var loss = num::scale(num::sum(num::concat1d(losses)),
                            1.0 / static_cast<double>(end - start));
      epoch_loss += loss.value().at(0) * static_cast<double>(end - start);
      tape.backward(loss);
      model.mu_params().adam_step(train.learning_rate);
      model.lambda_params().adam_step(train.learning_rate);
    }

    MechEpochStats stats;
    stats.epoch = epoch;
    stats.tau = tau;
    stats.train_loss = epoch_loss / static_cast<double>(order.size());
    const auto vs = validate_hard(val.empty() ? contexts : val, model, cfg.alpha, val_options);
    stats.val_rev = vs.rev;
    stats.val_gmv = vs.gmv;
    stats.val_objective = vs.objective;
    stats.negative_payment_rate = vs.negative_rate;
    stats.ic_spot_regret =
        spot.empty() ? 0.0 : miaa_ic_spot_regret(spot, model, train.ic_spot_grid);
    if (curve) curve->push_back(stats);

    if (stats.val_objective > best_objective) {
      best_objective = stats.val_objective;
      best_mu = model.mu_params();
      best_lam = model.lambda_params();
    }
  }
  model.mu_params() = best_mu;
  model.lambda_params() = best_lam;
  return model;
}

}  // namespace miaa::dsm
