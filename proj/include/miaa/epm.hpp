#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miaa/core.hpp"
#include "miaa/dataset.hpp"
#include "miaa/params.hpp"
#include "miaa/tape.hpp"

namespace miaa::epm {

struct EpmConfig {
  int num_positions = 4;  // m; one output head pair per position
  std::vector<std::int64_t> vocab_sizes{200, 20, 50};
  int embedding_dim = 8;
  int position_dim = 3;
  int dense_dim = 4;
  int user_dim = 4;
  int request_dim = 4;
  std::vector<int> hidden{128, 64};

  // Item vector width d: embeddings | dense | position embedding | is_ad.
  int item_dim() const {
    return static_cast<int>(vocab_sizes.size()) * embedding_dim + dense_dim + position_dim + 1;
  }
  int trunk_input_dim() const {
    return num_positions * item_dim() + user_dim + request_dim;
  }
  void validate() const;
};

struct EpmPrediction {
  std::vector<double> pctr;           // q_j, each in (0,1)
  std::vector<double> pgmv_per_click; // g_j, each >= 0
};

// List-wise model: self-attention over the allocation's item vectors,
// shared trunk, and per-position CTR (sigmoid) and GMV (softplus) heads.
// The bid is never part of any feature, by construction.
class EpmModel {
 public:
  EpmModel() = default;
  static EpmModel init(const EpmConfig& cfg, std::uint64_t seed);

  const EpmConfig& config() const { return cfg_; }
  num::ParameterStore& params() { return params_; }

  num::Var item_row(num::Tape& tape, const core::ItemFeatures& f, bool is_ad,
                    int position) const;
  // Attention output flattened and concatenated with z^u | z^r.
  num::Var alloc_row(num::Tape& tape, const core::Request& r, const core::Allocation& a) const;

  struct HeadOutputs {
    std::vector<num::Var> ctr;  // per position, batch x 1
    std::vector<num::Var> gmv;  // per position, batch x 1
  };
  HeadOutputs forward_rows(num::Tape& tape, const num::Var& batch) const;

  EpmPrediction predict(const core::Request& r, const core::Allocation& a) const;
  std::vector<EpmPrediction> predict_all(const core::Request& r,
                                         const std::vector<core::Allocation>& allocs) const;
  // Organic-only list padded with an empty slot at the last position;
  // used as the reserve option when no ad is shown.
  EpmPrediction predict_organic_only(const core::Request& r) const;

  struct Featurized {
    num::Tensor items;  // Z^a, m x d
    num::Tensor user;
    num::Tensor request;
  };
  Featurized featurize(const core::Request& r, const core::Allocation& a) const;

  void save(const std::string& path) const;
  static EpmModel load(const std::string& path);

 private:
  EpmConfig cfg_;
  // Prediction builds tapes over these weights without mutating them;
  // gradients only flow during training.
  mutable num::ParameterStore params_;
};

// Eq.-style list cross entropy with probabilities clipped to
// [1e-7, 1-1e-7] before the logs.
double ce_loss(const EpmPrediction& prediction, const std::vector<int>& clicks);

// Point-wise baseline: one item (plus position and context vectors)
// through an MLP; blind to the rest of the list by construction.
struct PointwiseConfig {
  std::vector<int> hidden{64, 32};
};

class PointwiseModel {
 public:
  PointwiseModel() = default;
  static PointwiseModel init(const EpmConfig& feature_cfg, const PointwiseConfig& cfg,
                             std::uint64_t seed);

  const EpmConfig& feature_config() const { return feature_cfg_; }
  num::ParameterStore& params() { return params_; }

  num::Var sample_row(num::Tape& tape, const core::Request& r, const core::ItemFeatures& f,
                      bool is_ad, int position) const;
  num::Var forward_rows(num::Tape& tape, const num::Var& batch) const;  // batch x 1, sigmoid

  double predict(const core::Request& r, const core::ItemFeatures& f, bool is_ad,
                 int position) const;

  void save(const std::string& path) const;
  static PointwiseModel load(const std::string& path);

 private:
  EpmConfig feature_cfg_;
  PointwiseConfig cfg_;
  mutable num::ParameterStore params_;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 3e-3;
  // Linear decay: the last epoch runs at learning_rate * final_lr_fraction.
  double final_lr_fraction = 0.1;
  double val_fraction = 0.15;
  double gmv_loss_weight = 0.1;
  std::uint64_t seed = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_auc = 0.0;
  double val_pcoc = 0.0;
};

EpmModel train_epm(const data::Dataset& dataset, const EpmConfig& cfg,
                   const TrainConfig& train, std::vector<EpochStats>* curve = nullptr);

PointwiseModel train_pointwise(const data::Dataset& dataset, const EpmConfig& feature_cfg,
                               const PointwiseConfig& cfg, const TrainConfig& train,
                               std::vector<EpochStats>* curve = nullptr);

struct ModelEval {
  double auc = 0.5;
  double pcoc = 0.0;
  double mean_pred = 0.0;
  double click_rate = 0.0;
};

ModelEval evaluate_epm(const EpmModel& model, const data::Dataset& dataset);
ModelEval evaluate_pointwise(const PointwiseModel& model, const data::Dataset& dataset);

}  // namespace miaa::epm
