#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "miaa/core.hpp"
#include "miaa/epm.hpp"
#include "miaa/params.hpp"
#include "miaa/tape.hpp"

#include "json.hpp"

namespace miaa::aam {

struct MechanismConfig {
  int num_positions = 4;  // m, fixes the lambda-network input width
  int x_dim = 4;
  int user_dim = 4;
  int request_dim = 4;
  std::vector<int> mu_hidden{32, 16};
  std::vector<int> lambda_hidden{64, 32};
  double alpha = 0.5;  // platform revenue/GMV trade-off
  bool allow_no_ad = false;
  bool clamp_payment_at_zero = false;

  int mu_input_dim() const { return x_dim + user_dim + request_dim; }
  int lambda_input_dim() const {
    return num_positions * (x_dim + 2) + user_dim + request_dim;
  }
  void validate() const;
};

// The learned mechanism: a mu-network scoring each ad's bidding strength
// and a lambda-network scoring whole allocations. Neither network ever
// sees a bid; that is what keeps the auction incentive compatible.
class MechanismModel {
 public:
  MechanismModel() = default;
  static MechanismModel init(const MechanismConfig& cfg, std::uint64_t seed);

  const MechanismConfig& config() const { return cfg_; }
  MechanismConfig& mutable_config() { return cfg_; }
  num::ParameterStore& mu_params() { return mu_; }
  num::ParameterStore& lambda_params() { return lam_; }

  static std::vector<double> mu_features(const MechanismConfig& cfg, const core::Request& r,
                                         int ad_index);
  // o_j = x_j | q_j | g_j per slot; organic slots use a zero x vector.
  static std::vector<double> lambda_features(const MechanismConfig& cfg,
                                             const core::Request& r,
                                             const core::Allocation& a,
                                             const epm::EpmPrediction& p);
  static std::vector<double> lambda_features_null(const MechanismConfig& cfg,
                                                  const core::Request& r,
                                                  const epm::EpmPrediction& organic_pred);

  num::Var mu_forward(num::Tape& tape, const num::Var& batch) const;      // rows -> (0,1)
  num::Var lambda_forward(num::Tape& tape, const num::Var& batch) const;  // rows -> R

  double mu_value(const core::Request& r, int ad_index) const;
  double lambda_value(const core::Request& r, const core::Allocation& a,
                      const epm::EpmPrediction& p) const;
  double lambda_value_null(const core::Request& r,
                           const epm::EpmPrediction& organic_pred) const;

  void save(const std::string& path) const;
  static MechanismModel load(const std::string& path);

 private:
  MechanismConfig cfg_;
  mutable num::ParameterStore mu_;
  mutable num::ParameterStore lam_;
};

struct AuctionOptions {
  bool allow_no_ad = false;
  bool clamp_payment_at_zero = false;
  double division_guard = 1e-12;
};

// Everything needed to replay the payment computation offline.
struct SwLedger {
  double sw_star = 0.0;            // SW of the chosen allocation
  double sw_counterfactual = 0.0;  // max SW over allocations without the winner
  double lambda_star = 0.0;        // f_lambda of the chosen allocation
  double mu_winner = 0.0;          // f_mu at the winner's slot
  double q_winner = 0.0;           // pCTR at the winner's slot
  double bid_winner = 0.0;
  bool counterfactual_is_null = false;
  bool clamped_at_zero = false;

  double recompute_payment() const;
};

struct AuctionOutcome {
  bool has_winner = true;  // false when the organic-only reserve wins
  int winner_ad_index = 0;
  std::int64_t winner_ad_id = 0;
  int position = 0;  // sigma(i), 1-based
  double payment_per_click = 0.0;
  SwLedger ledger;
};

nlohmann::json outcome_to_json(const AuctionOutcome& o);

// Bid-independent per-request scores; reusable across bid sweeps.
struct ScoreSet {
  std::vector<double> mu;      // per ad
  std::vector<double> lambda;  // per allocation, enumeration order
  std::optional<double> lambda_null;
};

ScoreSet neural_scores(const MechanismModel& model, const core::Request& r,
                       const std::vector<core::Allocation>& allocs,
                       const std::vector<epm::EpmPrediction>& preds,
                       const epm::EpmPrediction* organic_pred = nullptr);

// mu == 1, lambda == 0 reduces the auction to VCG.
ScoreSet constant_scores(int n, int num_allocations, double mu = 1.0, double lambda = 0.0,
                         std::optional<double> lambda_null = std::nullopt);

inline double social_welfare(double mu_i, double bid_i, double q_at_pos, double lambda_a) {
  return mu_i * (bid_i * q_at_pos) + lambda_a;
}

double social_welfare(const MechanismModel& model, const core::Request& r,
                      const core::Allocation& a, const epm::EpmPrediction& p);

// Instance rejected rather than priced (for example a vanishing
// mu * q denominator).
class AuctionRejected : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

AuctionOutcome run_auction(const core::Request& r,
                           const std::vector<core::Allocation>& allocs,
                           const std::vector<epm::EpmPrediction>& preds,
                           const ScoreSet& scores, const AuctionOptions& options);

}  // namespace miaa::aam
