#include "miaa/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "miaa/util.hpp"

namespace miaa::bench {

// ---- providers ------------------------------------------------------------

PredictionProvider::Entry& PredictionProvider::entry(const core::Request& r) const {
  auto it = cache_.find(r.request_id);
  if (it != cache_.end()) return it->second;
  Entry e;
  e.allocs = core::enumerate_allocations(r);
  e.preds = model_->predict_all(r, e.allocs);
  auto [pos, ok] = cache_.emplace(r.request_id, std::move(e));
  (void)ok;
  return pos->second;
}

const std::vector<core::Allocation>& PredictionProvider::allocations(
    const core::Request& r) const {
  return entry(r).allocs;
}

const std::vector<epm::EpmPrediction>& PredictionProvider::predictions(
    const core::Request& r) const {
  return entry(r).preds;
}

const epm::EpmPrediction& PredictionProvider::organic_only(const core::Request& r) const {
  auto& e = entry(r);
  if (!e.organic) e.organic = model_->predict_organic_only(r);
  return *e.organic;
}

const std::vector<double>& PointwiseProvider::pctrs(const core::Request& r) const {
  auto it = cache_.find(r.request_id);
  if (it != cache_.end()) return it->second;
  std::vector<double> out;
  out.reserve(r.ads.size());
  const int pos = std::min(ranking_position_, r.num_positions());
  for (const auto& ad : r.ads) out.push_back(model_->predict(r, ad.features, true, pos));
  return cache_.emplace(r.request_id, std::move(out)).first->second;
}

// ---- mechanisms -------------------------------------------------------------

MiaaMechanism::MiaaMechanism(const aam::MechanismModel& model,
                             std::shared_ptr<PredictionProvider> preds)
    : model_(&model), preds_(std::move(preds)) {
  options_.allow_no_ad = model.config().allow_no_ad;
  options_.clamp_payment_at_zero = model.config().clamp_payment_at_zero;
}

aam::AuctionOutcome MiaaMechanism::run(const core::Request& r) const {
  const auto& allocs = preds_->allocations(r);
  const auto& preds = preds_->predictions(r);
  auto it = scores_.find(r.request_id);
  if (it == scores_.end()) {
    const epm::EpmPrediction* organic =
        options_.allow_no_ad ? &preds_->organic_only(r) : nullptr;
    it = scores_.emplace(r.request_id,
                         aam::neural_scores(*model_, r, allocs, preds, organic))
             .first;
  }
  return aam::run_auction(r, allocs, preds, it->second, options_);
}

VcgMechanism::VcgMechanism(std::shared_ptr<PredictionProvider> preds,
                           aam::AuctionOptions options)
    : preds_(std::move(preds)), options_(options) {}

aam::AuctionOutcome VcgMechanism::run(const core::Request& r) const {
  const auto& allocs = preds_->allocations(r);
  const auto& preds = preds_->predictions(r);
  // Organic-only reserve has zero welfare under lambda == 0.
  const auto scores = aam::constant_scores(
      r.num_ads(), static_cast<int>(allocs.size()), 1.0, 0.0,
      options_.allow_no_ad ? std::optional<double>(0.0) : std::nullopt);
  return aam::run_auction(r, allocs, preds, scores, options_);
}

GspFixedMechanism::GspFixedMechanism(std::shared_ptr<PointwiseProvider> pointwise,
                                     int fixed_position)
    : pointwise_(std::move(pointwise)), fixed_position_(fixed_position) {}

GspSelection gsp_select(const core::Request& r, const std::vector<double>& pctr) {
  if (pctr.size() != r.ads.size())
    throw std::runtime_error("gsp_select: one pctr per ad required");
  const int n = r.num_ads();
  GspSelection g;
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (r.ads[static_cast<std::size_t>(i)].bid * pctr[static_cast<std::size_t>(i)] >
        r.ads[static_cast<std::size_t>(best)].bid * pctr[static_cast<std::size_t>(best)])
      best = i;
  g.winner = best + 1;
  g.pctr_winner = pctr[static_cast<std::size_t>(best)];
  g.ecpm_winner = r.ads[static_cast<std::size_t>(best)].bid * g.pctr_winner;
  if (n >= 2) {
    bool found = false;
    for (int i = 0; i < n; ++i) {
      if (i == best) continue;
      const double e =
          r.ads[static_cast<std::size_t>(i)].bid * pctr[static_cast<std::size_t>(i)];
      if (!found || e > g.ecpm_second) {
        g.ecpm_second = e;
        found = true;
      }
    }
    g.payment = std::min(g.ecpm_second / g.pctr_winner,
                         r.ads[static_cast<std::size_t>(best)].bid);
  } else {
    // Single bidder: zero reserve price (documented deviation).
    g.ecpm_second = 0.0;
    g.payment = 0.0;
  }
  return g;
}

namespace {

aam::AuctionOutcome gsp_outcome(const core::Request& r, const GspSelection& g, int position) {
  aam::AuctionOutcome out;
  out.has_winner = true;
  out.winner_ad_index = g.winner;
  out.winner_ad_id = r.ads[static_cast<std::size_t>(g.winner - 1)].ad_id;
  out.position = position;
  out.payment_per_click = g.payment;
  out.ledger.sw_star = g.ecpm_winner;
  out.ledger.sw_counterfactual = g.ecpm_second;
  out.ledger.lambda_star = 0.0;
  out.ledger.mu_winner = 1.0;
  out.ledger.q_winner = g.pctr_winner;
  out.ledger.bid_winner = r.ads[static_cast<std::size_t>(g.winner - 1)].bid;
  return out;
}

}  // namespace

aam::AuctionOutcome GspFixedMechanism::run(const core::Request& r) const {
  const auto g = gsp_select(r, pointwise_->pctrs(r));
  const int position = std::min(fixed_position_, r.num_positions());
  return gsp_outcome(r, g, position);
}

GspDynamicMechanism::GspDynamicMechanism(std::shared_ptr<PointwiseProvider> pointwise,
                                         std::shared_ptr<PredictionProvider> preds,
                                         double alpha)
    : pointwise_(std::move(pointwise)), preds_(std::move(preds)), alpha_(alpha) {}

aam::AuctionOutcome GspDynamicMechanism::run(const core::Request& r) const {
  const auto g = gsp_select(r, pointwise_->pctrs(r));
  const auto& preds = preds_->predictions(r);
  const int m = r.num_positions();
  int best_pos = 1;
  double best_score = -std::numeric_limits<double>::infinity();
  for (int j = 1; j <= m; ++j) {
    const auto& p =
        preds[static_cast<std::size_t>(core::allocation_ordinal(r, g.winner, j))];
    double gmv = 0.0;
    for (std::size_t s = 0; s < p.pctr.size(); ++s) gmv += p.pgmv_per_click[s] * p.pctr[s];
    const double score =
        g.payment * p.pctr[static_cast<std::size_t>(j - 1)] + alpha_ * gmv;
    if (score > best_score) {
      best_score = score;
      best_pos = j;
    }
  }
  return gsp_outcome(r, g, best_pos);
}

// ---- evaluation -------------------------------------------------------------

nlohmann::json EvalReport::to_json() const {
  return {{"mechanism", mechanism},
          {"requests", requests},
          {"objective_expected", objective_expected},
          {"rpm_expected", rpm_expected},
          {"gpm_expected", gpm_expected},
          {"has_realized", has_realized},
          {"objective_realized", objective_realized},
          {"rpm_realized", rpm_realized},
          {"gpm_realized", gpm_realized},
          {"auc", auc},
          {"pcoc", pcoc},
          {"ic_max_regret", ic_max_regret},
          {"ic_mean_regret", ic_mean_regret},
          {"ir_violations", ir_violations},
          {"negative_payment_rate", negative_payment_rate}};
}

std::string EvalReport::csv_header() {
  return "mechanism,requests,objective_expected,rpm_expected,gpm_expected,"
         "objective_realized,rpm_realized,gpm_realized,auc,pcoc,ic_max_regret,"
         "ic_mean_regret,ir_violations,negative_payment_rate";
}

std::string EvalReport::csv_row() const {
  std::ostringstream ss;
  ss << mechanism << ',' << requests << ',' << util::fmt_double(objective_expected) << ','
     << util::fmt_double(rpm_expected) << ',' << util::fmt_double(gpm_expected) << ','
     << util::fmt_double(objective_realized) << ',' << util::fmt_double(rpm_realized) << ','
     << util::fmt_double(gpm_realized) << ',' << util::fmt_double(auc) << ','
     << util::fmt_double(pcoc) << ',' << util::fmt_double(ic_max_regret) << ','
     << util::fmt_double(ic_mean_regret) << ',' << ir_violations << ','
     << util::fmt_double(negative_payment_rate);
  return ss.str();
}

EvalReport evaluate_mechanism(const Mechanism& mech, const std::vector<core::Request>& requests,
                              const PredictionProvider& scoring, const EvalOptions& options) {
  if (requests.empty()) throw std::runtime_error("evaluate: zero impressions");
  EvalReport rep;
  rep.mechanism = mech.name();
  rep.requests = static_cast<std::int64_t>(requests.size());

  std::optional<simgen::GroundTruthClickModel> gt;
  if (options.market) gt = simgen::GroundTruthClickModel::from_config(*options.market);
  rep.has_realized = gt.has_value();

  double rev_e = 0.0, gmv_e = 0.0, rev_r = 0.0, gmv_r = 0.0;
  std::int64_t negatives = 0;
  std::vector<double> scores_auc;
  std::vector<int> labels_auc;

  for (std::size_t idx = 0; idx < requests.size(); ++idx) {
    const auto& r = requests[idx];
    const auto out = mech.run(r);
    if (out.payment_per_click < 0.0) ++negatives;
    if (out.payment_per_click > out.ledger.bid_winner + 1e-9) ++rep.ir_violations;

    const core::Allocation* chosen = nullptr;
    const epm::EpmPrediction* pred = nullptr;
    if (out.has_winner) {
      const auto ord = core::allocation_ordinal(r, out.winner_ad_index, out.position);
      chosen = &scoring.allocations(r)[static_cast<std::size_t>(ord)];
      pred = &scoring.predictions(r)[static_cast<std::size_t>(ord)];
      const double q_win = pred->pctr[static_cast<std::size_t>(out.position - 1)];
      rev_e += out.payment_per_click * q_win;
    } else {
      pred = &scoring.organic_only(r);
    }
    for (std::size_t j = 0; j < pred->pctr.size(); ++j)
      gmv_e += pred->pgmv_per_click[j] * pred->pctr[j];

    if (gt && chosen) {
      // Click seed derives from the request id, so every reported metric
      // is invariant to evaluation order.
      Rng rng(derive_seed(options.seed, util::fnv1a(r.request_id)));
      const auto clicks = gt->simulate_clicks(r, *chosen, rng);
      for (std::size_t j = 0; j < clicks.size(); ++j) {
        scores_auc.push_back(pred->pctr[j]);
        labels_auc.push_back(clicks[j]);
        if (clicks[j])
          gmv_r += core::slot_gmv_per_click(r, chosen->items[j]);
      }
      if (clicks[static_cast<std::size_t>(out.position - 1)])
        rev_r += out.payment_per_click;
    }
  }

  const auto n = static_cast<std::int64_t>(requests.size());
  rep.rpm_expected = rpm(rev_e, n);
  rep.gpm_expected = gpm(gmv_e, n);
  rep.objective_expected = (rev_e + options.alpha * gmv_e) / static_cast<double>(n);
  if (gt) {
    rep.rpm_realized = rpm(rev_r, n);
    rep.gpm_realized = gpm(gmv_r, n);
    rep.objective_realized = (rev_r + options.alpha * gmv_r) / static_cast<double>(n);
    if (!scores_auc.empty()) {
      rep.auc = util::auc(scores_auc, labels_auc);
      double clicked = 0.0;
      for (int y : labels_auc) clicked += y;
      rep.pcoc = pcoc(util::mean(scores_auc),
                      clicked / static_cast<double>(labels_auc.size()));
    }
  }
  rep.negative_payment_rate =
      static_cast<double>(negatives) / static_cast<double>(requests.size());

  if (options.audit_sample > 0 && options.audit_grid > 1) {
    std::vector<core::Request> sample(
        requests.begin(),
        requests.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(
                               requests.size(),
                               static_cast<std::size_t>(options.audit_sample))));
    const auto audit = ic_audit(mech, sample, options.audit_grid, scoring);
    rep.ic_max_regret = audit.max_regret;
    rep.ic_mean_regret = audit.mean_regret;
  }
  return rep;
}

// ---- audits -----------------------------------------------------------------

IcAuditResult ic_audit(const Mechanism& mech, const std::vector<core::Request>& requests,
                       int grid_size, const PredictionProvider& utility_q) {
  IcAuditResult result;
  double regret_sum = 0.0;
  for (const auto& r : requests) {
    for (int i = 1; i <= r.num_ads(); ++i) {
      const auto& ad = r.ads[static_cast<std::size_t>(i - 1)];
      const double value = ad.true_value.value_or(ad.bid);

      auto utility_at = [&](double bid) {
        core::Request mod = r;
        mod.ads[static_cast<std::size_t>(i - 1)].bid = bid;
        const auto out = mech.run(mod);
        if (!out.has_winner || out.winner_ad_index != i) return 0.0;
        const auto ord = core::allocation_ordinal(mod, out.winner_ad_index, out.position);
        const double q = utility_q.predictions(mod)[static_cast<std::size_t>(ord)]
                             .pctr[static_cast<std::size_t>(out.position - 1)];
        return (value - out.payment_per_click) * q;
      };

      RegretRow row;
      row.request_id = r.request_id;
      row.ad_id = ad.ad_id;
      row.truthful_utility = utility_at(value);
      row.best_bid = value;
      row.best_utility = row.truthful_utility;
      for (double b : util::linspace(0.1 * value, 3.0 * value, grid_size)) {
        const double u = utility_at(b);
        if (u > row.best_utility) {
          row.best_utility = u;
          row.best_bid = b;
        }
      }
      row.regret = row.best_utility - row.truthful_utility;
      result.max_regret = std::max(result.max_regret, row.regret);
      regret_sum += row.regret;
      ++result.instances;
      result.rows.push_back(std::move(row));
    }
  }
  if (result.instances > 0)
    result.mean_regret = regret_sum / static_cast<double>(result.instances);
  return result;
}

IrAuditResult ir_audit(const Mechanism& mech, const std::vector<core::Request>& requests) {
  IrAuditResult result;
  for (const auto& r : requests) {
    const auto out = mech.run(r);
    ++result.outcomes;
    if (!out.has_winner) continue;
    const double bid = r.ads[static_cast<std::size_t>(out.winner_ad_index - 1)].bid;
    if (out.payment_per_click > bid + 1e-9) ++result.violations;
    if (out.payment_per_click < 0.0) ++result.negative_payments;
  }
  return result;
}

}  // namespace miaa::bench
