#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "miaa/aam.hpp"
#include "miaa/core.hpp"
#include "miaa/epm.hpp"
#include "miaa/simgen.hpp"

#include "json.hpp"

namespace miaa::bench {

// Caches list-wise predictions per request id. Safe across bid sweeps
// because predictions are bid-independent; callers must keep features
// fixed per request id.
class PredictionProvider {
 public:
  explicit PredictionProvider(const epm::EpmModel& model) : model_(&model) {}

  const std::vector<core::Allocation>& allocations(const core::Request& r) const;
  const std::vector<epm::EpmPrediction>& predictions(const core::Request& r) const;
  const epm::EpmPrediction& organic_only(const core::Request& r) const;
  const epm::EpmModel& model() const { return *model_; }

 private:
  struct Entry {
    std::vector<core::Allocation> allocs;
    std::vector<epm::EpmPrediction> preds;
    std::optional<epm::EpmPrediction> organic;
  };
  Entry& entry(const core::Request& r) const;
  const epm::EpmModel* model_;
  mutable std::map<std::string, Entry> cache_;
};

// Point-wise pCTRs per ad, evaluated at the GSP ranking position.
class PointwiseProvider {
 public:
  PointwiseProvider(const epm::PointwiseModel& model, int ranking_position)
      : model_(&model), ranking_position_(ranking_position) {}

  const std::vector<double>& pctrs(const core::Request& r) const;
  int ranking_position() const { return ranking_position_; }

 private:
  const epm::PointwiseModel* model_;
  int ranking_position_;
  mutable std::map<std::string, std::vector<double>> cache_;
};

class Mechanism {
 public:
  virtual ~Mechanism() = default;
  virtual std::string name() const = 0;
  virtual aam::AuctionOutcome run(const core::Request& r) const = 0;
};

// Winner and payment of a GSP round: rank by eCPM = bid * pctr, charge
// eCPM of the runner-up divided by the winner's own pctr, capped at the
// winner's bid. Single bidder pays the zero reserve.
struct GspSelection {
  int winner = 0;  // 1-based
  double payment = 0.0;
  double pctr_winner = 0.0;
  double ecpm_winner = 0.0;
  double ecpm_second = 0.0;
};

GspSelection gsp_select(const core::Request& r, const std::vector<double>& pctr);

class MiaaMechanism : public Mechanism {
 public:
  MiaaMechanism(const aam::MechanismModel& model, std::shared_ptr<PredictionProvider> preds);
  std::string name() const override { return "miaa"; }
  aam::AuctionOutcome run(const core::Request& r) const override;

 private:
  const aam::MechanismModel* model_;
  std::shared_ptr<PredictionProvider> preds_;
  aam::AuctionOptions options_;
  mutable std::map<std::string, aam::ScoreSet> scores_;
};

class VcgMechanism : public Mechanism {
 public:
  explicit VcgMechanism(std::shared_ptr<PredictionProvider> preds,
                        aam::AuctionOptions options = {});
  std::string name() const override { return "vcg"; }
  aam::AuctionOutcome run(const core::Request& r) const override;

 private:
  std::shared_ptr<PredictionProvider> preds_;
  aam::AuctionOptions options_;
};

// GSP with the ad pinned at a fixed display position.
class GspFixedMechanism : public Mechanism {
 public:
  GspFixedMechanism(std::shared_ptr<PointwiseProvider> pointwise, int fixed_position);
  std::string name() const override { return "gsp_fixed"; }
  aam::AuctionOutcome run(const core::Request& r) const override;

 private:
  std::shared_ptr<PointwiseProvider> pointwise_;
  int fixed_position_;
};

// GSP winner and payment, then a greedy position choice maximizing
// payment * q + alpha * Gmv with list-wise predictions. Stands in for the
// learned dynamic-allocation baseline; it keeps the property under
// critique: the winner's own bid moves neither payment nor position.
class GspDynamicMechanism : public Mechanism {
 public:
  GspDynamicMechanism(std::shared_ptr<PointwiseProvider> pointwise,
                      std::shared_ptr<PredictionProvider> preds, double alpha);
  std::string name() const override { return "gsp_dynamic"; }
  aam::AuctionOutcome run(const core::Request& r) const override;

 private:
  std::shared_ptr<PointwiseProvider> pointwise_;
  std::shared_ptr<PredictionProvider> preds_;
  double alpha_;
};

// ---- metrics ------------------------------------------------------------

inline double rpm(double click_payment_sum, std::int64_t impressions) {
  if (impressions <= 0) throw std::runtime_error("rpm: zero impressions");
  return click_payment_sum / static_cast<double>(impressions) * 1000.0;
}

inline double gpm(double gmv_sum, std::int64_t impressions) {
  if (impressions <= 0) throw std::runtime_error("gpm: zero impressions");
  return gmv_sum / static_cast<double>(impressions) * 1000.0;
}

inline double pcoc(double mean_predicted, double mean_actual) {
  if (mean_actual <= 0.0) return 0.0;
  return mean_predicted / mean_actual;
}

struct EvalReport {
  std::string mechanism;
  std::int64_t requests = 0;
  double objective_expected = 0.0;  // Rev + alpha*Gmv, pCTR/pGMV expectation
  double rpm_expected = 0.0;
  double gpm_expected = 0.0;
  bool has_realized = false;  // ground-truth clicks available
  double objective_realized = 0.0;
  double rpm_realized = 0.0;
  double gpm_realized = 0.0;
  double auc = 0.5;   // list-wise pCTR vs realized clicks on chosen lists
  double pcoc = 0.0;
  double ic_max_regret = 0.0;
  double ic_mean_regret = 0.0;
  std::int64_t ir_violations = 0;
  double negative_payment_rate = 0.0;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

struct EvalOptions {
  double alpha = 0.5;
  std::uint64_t seed = 1;  // drives realized-click simulation
  std::optional<simgen::MarketConfig> market;  // enables realized mode
  int audit_grid = 15;      // light in-evaluation IC sweep
  int audit_sample = 200;   // requests audited inside evaluate
};

EvalReport evaluate_mechanism(const Mechanism& mech, const std::vector<core::Request>& requests,
                              const PredictionProvider& scoring, const EvalOptions& options);

// ---- audits ---------------------------------------------------------------

struct RegretRow {
  std::string request_id;
  std::int64_t ad_id = 0;
  double truthful_utility = 0.0;
  double best_bid = 0.0;
  double best_utility = 0.0;
  double regret = 0.0;
};

struct IcAuditResult {
  double max_regret = 0.0;
  double mean_regret = 0.0;
  std::int64_t instances = 0;  // (request, ad) pairs swept
  std::vector<RegretRow> rows;
};

// Sweeps grid_size misreports in [0.1 v, 3 v] per ad; utility is
// (v - p) * q with q taken from the shared list-wise model, so the
// learned mechanism is audited against its own click model.
IcAuditResult ic_audit(const Mechanism& mech, const std::vector<core::Request>& requests,
                       int grid_size, const PredictionProvider& utility_q);

struct IrAuditResult {
  std::int64_t violations = 0;
  std::int64_t negative_payments = 0;
  std::int64_t outcomes = 0;
};

IrAuditResult ir_audit(const Mechanism& mech, const std::vector<core::Request>& requests);

}  // namespace miaa::bench
