#pragma once

#include <cstdint>
#include <vector>

#include "miaa/aam.hpp"
#include "miaa/core.hpp"
#include "miaa/epm.hpp"

namespace miaa::dsm {

// Pr = softmax(SW / tau); the continuous relaxation of winner selection.
std::vector<double> winning_probs(const std::vector<double>& sw, double tau);

struct AllocationObjectives {
  std::vector<double> rev;  // counterfactual revenue per allocation, clamped to [0, bid]
  std::vector<double> gmv;  // sum_j g_j * q_j per allocation
};

// Scores every allocation as if it were the chosen one. The per-ad
// counterfactual term is held fixed, matching the training-path reading
// of the payment rule; payments are clamped to [0, bid] here (the
// evaluation path never clamps).
AllocationObjectives allocation_objectives(const core::Request& r,
                                           const std::vector<core::Allocation>& allocs,
                                           const std::vector<epm::EpmPrediction>& preds,
                                           const aam::ScoreSet& scores,
                                           bool allow_no_ad = false);

double reward_loss(const std::vector<double>& pr, const std::vector<double>& rev,
                   const std::vector<double>& gmv, double alpha);

struct MechTrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 3e-3;
  double tau_start = 1.0;
  double tau_end = 0.1;  // geometric anneal across epochs
  double val_fraction = 0.15;
  int ic_spot_requests = 3;  // per-epoch IC spot check size
  int ic_spot_grid = 9;
  std::uint64_t seed = 1;
};

struct MechEpochStats {
  int epoch = 0;
  double tau = 0.0;
  double train_loss = 0.0;
  double val_rev = 0.0;
  double val_gmv = 0.0;
  double val_objective = 0.0;  // rev + alpha * gmv under hard argmax
  double ic_spot_regret = 0.0;
  double negative_payment_rate = 0.0;
};

// Precomputed per-request EPM outputs; the EPM stays frozen here.
struct RequestContext {
  core::Request request;
  std::vector<core::Allocation> allocations;
  std::vector<epm::EpmPrediction> predictions;
  std::optional<epm::EpmPrediction> organic_pred;
};

RequestContext make_context(const core::Request& r, const epm::EpmModel& epm_model,
                            bool with_organic);

// End-to-end training of the mu/lambda networks against the soft
// relaxation; checkpoint selection uses the hard-argmax objective on the
// validation split.
aam::MechanismModel train_mechanism(const std::vector<core::Request>& requests,
                                    const epm::EpmModel& epm_model,
                                    const aam::MechanismConfig& cfg,
                                    const MechTrainConfig& train,
                                    std::vector<MechEpochStats>* curve = nullptr);

// Max truthful-vs-misreport utility gap for the learned mechanism on a
// few requests; cheap enough to run every epoch.
double miaa_ic_spot_regret(const std::vector<RequestContext>& contexts,
                           const aam::MechanismModel& model, int grid_size);

}  // namespace miaa::dsm
