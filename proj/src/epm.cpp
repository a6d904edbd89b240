#include "miaa/epm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "miaa/util.hpp"

#include "json.hpp"

namespace miaa::epm {

using num::Tape;
using num::Tensor;
using num::Var;

namespace {

constexpr double kProbClip = 1e-7;

nlohmann::json epm_config_to_json(const EpmConfig& c) {
  return {{"num_positions", c.num_positions}, {"vocab_sizes", c.vocab_sizes},
          {"embedding_dim", c.embedding_dim}, {"position_dim", c.position_dim},
          {"dense_dim", c.dense_dim},         {"user_dim", c.user_dim},
          {"request_dim", c.request_dim},     {"hidden", c.hidden}};
}

EpmConfig epm_config_from_json(const nlohmann::json& j) {
  EpmConfig c;
  c.num_positions = j.at("num_positions").get<int>();
  c.vocab_sizes = j.at("vocab_sizes").get<std::vector<std::int64_t>>();
  c.embedding_dim = j.at("embedding_dim").get<int>();
  c.position_dim = j.at("position_dim").get<int>();
  c.dense_dim = j.at("dense_dim").get<int>();
  c.user_dim = j.at("user_dim").get<int>();
  c.request_dim = j.at("request_dim").get<int>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  return c;
}

void add_mlp_params(num::ParameterStore& store, Rng& rng, const std::string& prefix,
                    int in_dim, const std::vector<int>& hidden, int out_dim) {
  int cur = in_dim;
  int layer = 0;
  for (int h : hidden) {
    store.add(prefix + "." + std::to_string(layer) + ".w",
              num::xavier_uniform(rng, cur, h, {cur, h}));
    store.add(prefix + "." + std::to_string(layer) + ".b", Tensor({h}));
    cur = h;
    ++layer;
  }
  store.add(prefix + "." + std::to_string(layer) + ".w",
            num::xavier_uniform(rng, cur, out_dim, {cur, out_dim}));
  store.add(prefix + "." + std::to_string(layer) + ".b", Tensor({out_dim}));
}

// relu MLP body; the caller applies the output nonlinearity.
Var mlp_forward(Tape& tape, num::ParameterStore& store, const std::string& prefix,
                const Var& batch, int n_hidden) {
  Var h = batch;
  for (int layer = 0; layer <= n_hidden; ++layer) {
    const std::string base = prefix + "." + std::to_string(layer);
    h = num::add_rowvec(num::matmul(h, tape.param(store, base + ".w")),
                        tape.param(store, base + ".b"));
    if (layer < n_hidden) h = num::relu(h);
  }
  return h;
}

std::int64_t map_sparse_id(std::int64_t id, std::int64_t vocab) {
  // Reserved OOV bucket is the last row.
  return (id >= 0 && id < vocab) ? id : vocab;
}

// Binary cross entropy of one head column against constant labels.
Var bce_column(const Var& q_col, const Tensor& y) {
  Var qc = num::clamp(q_col, kProbClip, 1.0 - kProbClip);
  Tensor one_minus_y(y.shape);
  for (std::int64_t k = 0; k < y.size(); ++k) one_minus_y.at(k) = 1.0 - y.at(k);
  Var pos = num::mul_const_t(num::log_op(qc), y);
  Var negt = num::mul_const_t(num::log_op(num::sub_from_const(1.0, qc)), one_minus_y);
  return num::neg(num::add(num::sum(pos), num::sum(negt)));
}

Var mse_column(const Var& g_col, const Tensor& target) {
  Tensor neg_target(target.shape);
  for (std::int64_t k = 0; k < target.size(); ++k) neg_target.at(k) = -target.at(k);
  Var d = num::add_const_t(g_col, neg_target);
  return num::sum(num::mul(d, d));
}

}  // namespace

void EpmConfig::validate() const {
  if (num_positions < 1 || num_positions > 9)
    throw std::runtime_error("epm config: num_positions out of range");
  if (vocab_sizes.empty()) throw std::runtime_error("epm config: vocab_sizes empty");
  for (auto v : vocab_sizes)
    if (v < 1) throw std::runtime_error("epm config: vocab size must be >= 1");
  if (embedding_dim < 1 || position_dim < 1 || dense_dim < 0)
    throw std::runtime_error("epm config: bad dimensions");
  if (hidden.empty()) throw std::runtime_error("epm config: hidden layers empty");
}

EpmModel EpmModel::init(const EpmConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  EpmModel model;
  model.cfg_ = cfg;
  Rng rng(derive_seed(seed, 0xE1));
  auto& st = model.params_;
  const int d = cfg.item_dim();
  for (std::size_t f = 0; f < cfg.vocab_sizes.size(); ++f) {
    const auto rows = cfg.vocab_sizes[f] + 1;  // +1 OOV
    st.add("emb." + std::to_string(f),
           num::xavier_uniform(rng, cfg.embedding_dim, cfg.embedding_dim,
                               {rows, cfg.embedding_dim}));
  }
  st.add("pos_emb", num::xavier_uniform(rng, cfg.position_dim, cfg.position_dim,
                                        {cfg.num_positions, cfg.position_dim}));
  st.add("attn.wq", num::xavier_uniform(rng, d, d, {d, d}));
  st.add("attn.wk", num::xavier_uniform(rng, d, d, {d, d}));
  st.add("attn.wv", num::xavier_uniform(rng, d, d, {d, d}));
  int cur = cfg.trunk_input_dim();
  for (std::size_t l = 0; l < cfg.hidden.size(); ++l) {
    st.add("trunk." + std::to_string(l) + ".w",
           num::xavier_uniform(rng, cur, cfg.hidden[l], {cur, cfg.hidden[l]}));
    st.add("trunk." + std::to_string(l) + ".b", Tensor({cfg.hidden[l]}));
    cur = cfg.hidden[l];
  }
  for (int j = 0; j < cfg.num_positions; ++j) {
    st.add("head_ctr." + std::to_string(j) + ".w", num::xavier_uniform(rng, cur, 1, {cur, 1}));
    st.add("head_ctr." + std::to_string(j) + ".b", Tensor({1}));
    st.add("head_gmv." + std::to_string(j) + ".w", num::xavier_uniform(rng, cur, 1, {cur, 1}));
    st.add("head_gmv." + std::to_string(j) + ".b", Tensor({1}));
  }
  return model;
}

Var EpmModel::item_row(Tape& tape, const core::ItemFeatures& f, bool is_ad,
                       int position) const {
  const auto& cfg = cfg_;
  if (static_cast<int>(f.dense.size()) != cfg.dense_dim)
    throw std::runtime_error("epm: dense feature width mismatch");
  if (f.sparse_ids.size() != cfg.vocab_sizes.size())
    throw std::runtime_error("epm: sparse field count mismatch");
  if (position < 1 || position > cfg.num_positions)
    throw std::runtime_error("epm: position out of range");
  std::vector<Var> parts;
  parts.reserve(cfg.vocab_sizes.size() + 3);
  for (std::size_t k = 0; k < cfg.vocab_sizes.size(); ++k) {
    const auto id = map_sparse_id(f.sparse_ids[k], cfg.vocab_sizes[k]);
    parts.push_back(num::embed_row(tape.param(params_, "emb." + std::to_string(k)), id));
  }
  parts.push_back(tape.leaf(Tensor::vector(f.dense)));
  parts.push_back(num::embed_row(tape.param(params_, "pos_emb"), position - 1));
  parts.push_back(tape.leaf(Tensor::scalar(is_ad ? 1.0 : 0.0)));
  return num::concat1d(parts);
}

Var EpmModel::alloc_row(Tape& tape, const core::Request& r, const core::Allocation& a) const {
  if (static_cast<int>(a.items.size()) != cfg_.num_positions)
    throw std::runtime_error("epm: allocation length does not match num_positions");
  std::vector<Var> rows;
  rows.reserve(a.items.size());
  for (std::size_t j = 0; j < a.items.size(); ++j) {
    const auto& slot = a.items[j];
    rows.push_back(item_row(tape, core::slot_features(r, slot), slot.is_ad,
                            static_cast<int>(j) + 1));
  }
  Var z = num::stack_rows(rows);
  Var q = num::matmul(z, tape.param(params_, "attn.wq"));
  Var k = num::matmul(z, tape.param(params_, "attn.wk"));
  Var v = num::matmul(z, tape.param(params_, "attn.wv"));
  // Residual keeps each slot's own identity next to the mixed context.
  Var h = num::add(z, num::attention(q, k, v));
  Var flat = num::reshape(h, {static_cast<std::int64_t>(a.items.size()) * cfg_.item_dim()});
  return num::concat1d({flat, tape.leaf(Tensor::vector(r.user_features)),
                        tape.leaf(Tensor::vector(r.request_features))});
}

EpmModel::HeadOutputs EpmModel::forward_rows(Tape& tape, const Var& batch) const {
  const int n_hidden = static_cast<int>(cfg_.hidden.size());
  Var h = batch;
  for (int layer = 0; layer < n_hidden; ++layer) {
    const std::string base = "trunk." + std::to_string(layer);
    h = num::relu(num::add_rowvec(num::matmul(h, tape.param(params_, base + ".w")),
                                  tape.param(params_, base + ".b")));
  }
  HeadOutputs out;
  for (int j = 0; j < cfg_.num_positions; ++j) {
    const std::string cb = "head_ctr." + std::to_string(j);
    const std::string gb = "head_gmv." + std::to_string(j);
    out.ctr.push_back(num::sigmoid(num::add_rowvec(
        num::matmul(h, tape.param(params_, cb + ".w")), tape.param(params_, cb + ".b"))));
    out.gmv.push_back(num::softplus(num::add_rowvec(
        num::matmul(h, tape.param(params_, gb + ".w")), tape.param(params_, gb + ".b"))));
  }
  return out;
}

EpmPrediction EpmModel::predict(const core::Request& r, const core::Allocation& a) const {
  Tape tape;
  Var batch = num::stack_rows({alloc_row(tape, r, a)});
  const auto heads = forward_rows(tape, batch);
  EpmPrediction p;
  p.pctr.reserve(heads.ctr.size());
  p.pgmv_per_click.reserve(heads.gmv.size());
  for (const auto& c : heads.ctr) p.pctr.push_back(c.value().at(0));
  for (const auto& g : heads.gmv) p.pgmv_per_click.push_back(g.value().at(0));
  return p;
}

std::vector<EpmPrediction> EpmModel::predict_all(
    const core::Request& r, const std::vector<core::Allocation>& allocs) const {
  std::vector<EpmPrediction> out;
  out.reserve(allocs.size());
  for (const auto& a : allocs) out.push_back(predict(r, a));
  return out;
}

EpmPrediction EpmModel::predict_organic_only(const core::Request& r) const {
  Tape tape;
  const int m = cfg_.num_positions;
  std::vector<Var> rows;
  rows.reserve(static_cast<std::size_t>(m));
  core::ItemFeatures empty;
  empty.sparse_ids.assign(cfg_.vocab_sizes.size(), -1);  // maps to the OOV bucket
  empty.dense.assign(static_cast<std::size_t>(cfg_.dense_dim), 0.0);
  for (int j = 1; j <= m; ++j) {
    if (j <= static_cast<int>(r.organic.size()))
      rows.push_back(item_row(tape, r.organic[static_cast<std::size_t>(j - 1)].features,
                              false, j));
    else
      rows.push_back(item_row(tape, empty, false, j));
  }
  Var z = num::stack_rows(rows);
  Var q = num::matmul(z, tape.param(params_, "attn.wq"));
  Var k = num::matmul(z, tape.param(params_, "attn.wk"));
  Var v = num::matmul(z, tape.param(params_, "attn.wv"));
  Var flat = num::reshape(num::add(z, num::attention(q, k, v)),
                          {static_cast<std::int64_t>(m) * cfg_.item_dim()});
  Var row = num::concat1d({flat, tape.leaf(Tensor::vector(r.user_features)),
                           tape.leaf(Tensor::vector(r.request_features))});
  const auto heads = forward_rows(tape, num::stack_rows({row}));
  EpmPrediction p;
  for (const auto& c : heads.ctr) p.pctr.push_back(c.value().at(0));
  for (const auto& g : heads.gmv) p.pgmv_per_click.push_back(g.value().at(0));
  return p;
}

EpmModel::Featurized EpmModel::featurize(const core::Request& r,
                                         const core::Allocation& a) const {
  Tape tape;
  std::vector<Var> rows;
  for (std::size_t j = 0; j < a.items.size(); ++j) {
    const auto& slot = a.items[j];
    rows.push_back(item_row(tape, core::slot_features(r, slot), slot.is_ad,
                            static_cast<int>(j) + 1));
  }
  Featurized out;
  out.items = num::stack_rows(rows).value();
  out.user = Tensor::vector(r.user_features);
  out.request = Tensor::vector(r.request_features);
  return out;
}

void EpmModel::save(const std::string& path) const {
  nlohmann::json meta;
  meta["model"] = "epm";
  meta["config"] = epm_config_to_json(cfg_);
  params_.save(path, meta);
}

EpmModel EpmModel::load(const std::string& path) {
  nlohmann::json meta;
  auto store = num::ParameterStore::load(path, &meta);
  if (meta.value("model", "") != "epm")
    throw std::runtime_error("epm: checkpoint is not an epm model: " + path);
  EpmModel model;
  model.cfg_ = epm_config_from_json(meta.at("config"));
  model.params_ = std::move(store);
  return model;
}

double ce_loss(const EpmPrediction& prediction, const std::vector<int>& clicks) {
  if (prediction.pctr.size() != clicks.size())
    throw std::runtime_error("ce_loss: prediction/click length mismatch");
  double loss = 0.0;
  for (std::size_t j = 0; j < clicks.size(); ++j) {
    const double q = std::clamp(prediction.pctr[j], kProbClip, 1.0 - kProbClip);
    loss -= clicks[j] ? std::log(q) : std::log(1.0 - q);
  }
  return loss;
}

// ---- point-wise baseline -------------------------------------------------

PointwiseModel PointwiseModel::init(const EpmConfig& feature_cfg, const PointwiseConfig& cfg,
                                    std::uint64_t seed) {
  feature_cfg.validate();
  PointwiseModel model;
  model.feature_cfg_ = feature_cfg;
  model.cfg_ = cfg;
  Rng rng(derive_seed(seed, 0xF0));
  auto& st = model.params_;
  for (std::size_t f = 0; f < feature_cfg.vocab_sizes.size(); ++f) {
    const auto rows = feature_cfg.vocab_sizes[f] + 1;
    st.add("emb." + std::to_string(f),
           num::xavier_uniform(rng, feature_cfg.embedding_dim, feature_cfg.embedding_dim,
                               {rows, feature_cfg.embedding_dim}));
  }
  st.add("pos_emb",
         num::xavier_uniform(rng, feature_cfg.position_dim, feature_cfg.position_dim,
                             {feature_cfg.num_positions, feature_cfg.position_dim}));
  const int in_dim = feature_cfg.item_dim() + feature_cfg.user_dim + feature_cfg.request_dim;
  add_mlp_params(st, rng, "mlp", in_dim, cfg.hidden, 1);
  return model;
}

Var PointwiseModel::sample_row(Tape& tape, const core::Request& r,
                               const core::ItemFeatures& f, bool is_ad, int position) const {
  const auto& cfg = feature_cfg_;
  if (static_cast<int>(f.dense.size()) != cfg.dense_dim)
    throw std::runtime_error("pointwise: dense feature width mismatch");
  if (f.sparse_ids.size() != cfg.vocab_sizes.size())
    throw std::runtime_error("pointwise: sparse field count mismatch");
  std::vector<Var> parts;
  for (std::size_t k = 0; k < cfg.vocab_sizes.size(); ++k) {
    const auto id = map_sparse_id(f.sparse_ids[k], cfg.vocab_sizes[k]);
    parts.push_back(num::embed_row(tape.param(params_, "emb." + std::to_string(k)), id));
  }
  parts.push_back(tape.leaf(Tensor::vector(f.dense)));
  parts.push_back(num::embed_row(tape.param(params_, "pos_emb"), position - 1));
  parts.push_back(tape.leaf(Tensor::scalar(is_ad ? 1.0 : 0.0)));
  parts.push_back(tape.leaf(Tensor::vector(r.user_features)));
  parts.push_back(tape.leaf(Tensor::vector(r.request_features)));
  return num::concat1d(parts);
}

Var PointwiseModel::forward_rows(Tape& tape, const Var& batch) const {
  return num::sigmoid(mlp_forward(tape, params_, "mlp", batch,
                                  static_cast<int>(cfg_.hidden.size())));
}

double PointwiseModel::predict(const core::Request& r, const core::ItemFeatures& f,
                               bool is_ad, int position) const {
  Tape tape;
  Var batch = num::stack_rows({sample_row(tape, r, f, is_ad, position)});
  return forward_rows(tape, batch).value().at(0);
}

void PointwiseModel::save(const std::string& path) const {
  nlohmann::json meta;
  meta["model"] = "pointwise";
  meta["config"] = epm_config_to_json(feature_cfg_);
  meta["hidden"] = cfg_.hidden;
  params_.save(path, meta);
}

PointwiseModel PointwiseModel::load(const std::string& path) {
  nlohmann::json meta;
  auto store = num::ParameterStore::load(path, &meta);
  if (meta.value("model", "") != "pointwise")
    throw std::runtime_error("pointwise: checkpoint is not a pointwise model: " + path);
  PointwiseModel model;
  model.feature_cfg_ = epm_config_from_json(meta.at("config"));
  model.cfg_.hidden = meta.at("hidden").get<std::vector<int>>();
  model.params_ = std::move(store);
  return model;
}

// ---- training --------------------------------------------------------------

namespace {

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

Split make_split(std::size_t n, double val_fraction) {
  Split s;
  const auto n_val = static_cast<std::size_t>(static_cast<double>(n) * val_fraction);
  const std::size_t n_train = n - n_val;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? s.train : s.val).push_back(i);
  if (s.train.empty()) throw std::runtime_error("train: empty training split");
  return s;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform_int(
                  static_cast<std::int64_t>(i)))]);
}

void check_dataset(const data::Dataset& ds, const EpmConfig& cfg) {
  if (ds.requests.empty()) throw std::runtime_error("train: empty dataset");
  if (ds.displays.size() != ds.requests.size())
    throw std::runtime_error("train: requests and display logs are not parallel");
  for (std::size_t i = 0; i < ds.requests.size(); ++i) {
    if (ds.requests[i].num_positions() != cfg.num_positions)
      throw std::runtime_error("train: request m does not match model num_positions");
    if (static_cast<int>(ds.displays[i].clicks.size()) != cfg.num_positions)
      throw std::runtime_error("train: display record length mismatch");
  }
}

}  // namespace

ModelEval evaluate_epm(const EpmModel& model, const data::Dataset& dataset) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < dataset.requests.size(); ++i) {
    const auto& r = dataset.requests[i];
    const auto& d = dataset.displays[i];
    const auto a = core::build_allocation(r, d.ad_index, d.ad_position);
    const auto p = model.predict(r, a);
    for (std::size_t j = 0; j < p.pctr.size(); ++j) {
      scores.push_back(p.pctr[j]);
      labels.push_back(d.clicks[j]);
    }
  }
  ModelEval e;
  e.auc = util::auc(scores, labels);
  e.mean_pred = util::mean(scores);
  double clicked = 0.0;
  for (int y : labels) clicked += y;
  e.click_rate = clicked / static_cast<double>(labels.size());
  e.pcoc = e.click_rate > 0.0 ? e.mean_pred / e.click_rate : 0.0;
  return e;
}

ModelEval evaluate_pointwise(const PointwiseModel& model, const data::Dataset& dataset) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (std::size_t i = 0; i < dataset.requests.size(); ++i) {
    const auto& r = dataset.requests[i];
    const auto& d = dataset.displays[i];
    const auto a = core::build_allocation(r, d.ad_index, d.ad_position);
    for (std::size_t j = 0; j < a.items.size(); ++j) {
      const auto& slot = a.items[j];
      scores.push_back(model.predict(r, core::slot_features(r, slot), slot.is_ad,
                                     static_cast<int>(j) + 1));
      labels.push_back(d.clicks[j]);
    }
  }
  ModelEval e;
  e.auc = util::auc(scores, labels);
  e.mean_pred = util::mean(scores);
  double clicked = 0.0;
  for (int y : labels) clicked += y;
  e.click_rate = clicked / static_cast<double>(labels.size());
  e.pcoc = e.click_rate > 0.0 ? e.mean_pred / e.click_rate : 0.0;
  return e;
}

EpmModel train_epm(const data::Dataset& dataset, const EpmConfig& cfg,
                   const TrainConfig& train, std::vector<EpochStats>* curve) {
  check_dataset(dataset, cfg);
  EpmModel model = EpmModel::init(cfg, train.seed);
  Rng rng(derive_seed(train.seed, 0xE9));
  const auto split = make_split(dataset.requests.size(), train.val_fraction);

  data::Dataset val;
  for (auto i : split.val) {
    val.requests.push_back(dataset.requests[i]);
    val.displays.push_back(dataset.displays[i]);
  }

  const int m = cfg.num_positions;
  double best_val = std::numeric_limits<double>::infinity();
  num::ParameterStore best = model.params();

  std::vector<std::size_t> order = split.train;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    const double lr =
        train.learning_rate *
        (1.0 - (1.0 - train.final_lr_fraction) *
                   (train.epochs > 1 ? static_cast<double>(epoch) / (train.epochs - 1) : 0.0));
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      const auto b = static_cast<std::int64_t>(end - start);
      Tape tape;
      std::vector<Var> rows;
      std::vector<Tensor> y_cols(m, Tensor({b, 1}));
      std::vector<Tensor> g_cols(m, Tensor({b, 1}));
      for (std::size_t s = start; s < end; ++s) {
        const auto i = order[s];
        const auto& r = dataset.requests[i];
        const auto& d = dataset.displays[i];
        rows.push_back(model.alloc_row(tape, r, core::build_allocation(r, d.ad_index,
                                                                       d.ad_position)));
        const auto row = static_cast<std::int64_t>(s - start);
        for (int j = 0; j < m; ++j) {
          y_cols[j].at(row, 0) = d.clicks[static_cast<std::size_t>(j)];
          g_cols[j].at(row, 0) = d.gmv_per_click[static_cast<std::size_t>(j)];
        }
      }
      const auto heads = model.forward_rows(tape, num::stack_rows(rows));
      Var loss = bce_column(heads.ctr[0], y_cols[0]);
      for (int j = 1; j < m; ++j) loss = num::add(loss, bce_column(heads.ctr[j], y_cols[j]));
      for (int j = 0; j < m; ++j)
        loss = num::add(loss, num::scale(mse_column(heads.gmv[j], g_cols[j]),
                                         train.gmv_loss_weight));
      loss = num::scale(loss, 1.0 / static_cast<double>(b));
      epoch_loss += loss.value().at(0) * static_cast<double>(b);
      seen += static_cast<std::size_t>(b);
      tape.backward(loss);
      model.params().adam_step(lr);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(seen);
    if (!val.requests.empty()) {
      double vloss = 0.0;
      for (std::size_t i = 0; i < val.requests.size(); ++i) {
        const auto& r = val.requests[i];
        const auto& d = val.displays[i];
        const auto p = model.predict(r, core::build_allocation(r, d.ad_index, d.ad_position));
        vloss += ce_loss(p, d.clicks);
        for (int j = 0; j < m; ++j) {
          const double diff = p.pgmv_per_click[static_cast<std::size_t>(j)] -
                              d.gmv_per_click[static_cast<std::size_t>(j)];
          vloss += train.gmv_loss_weight * diff * diff;
        }
      }
      stats.val_loss = vloss / static_cast<double>(val.requests.size());
      const auto e = evaluate_epm(model, val);
      stats.val_auc = e.auc;
      stats.val_pcoc = e.pcoc;
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best = model.params();
      }
    } else {
      stats.val_loss = stats.train_loss;
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best = model.params();
      }
    }
    if (curve) curve->push_back(stats);
  }
  model.params() = best;
  return model;
}

PointwiseModel train_pointwise(const data::Dataset& dataset, const EpmConfig& feature_cfg,
                               const PointwiseConfig& cfg, const TrainConfig& train,
                               std::vector<EpochStats>* curve) {
  check_dataset(dataset, feature_cfg);
  PointwiseModel model = PointwiseModel::init(feature_cfg, cfg, train.seed);
  Rng rng(derive_seed(train.seed, 0xF9));
  const auto split = make_split(dataset.requests.size(), train.val_fraction);

  struct SlotSample {
    std::size_t request;
    int position;  // 1-based
    int label;
  };
  std::vector<SlotSample> samples;
  for (auto i : split.train) {
    const auto& d = dataset.displays[i];
    for (int j = 0; j < feature_cfg.num_positions; ++j)
      samples.push_back({i, j + 1, d.clicks[static_cast<std::size_t>(j)]});
  }
  data::Dataset val;
  for (auto i : split.val) {
    val.requests.push_back(dataset.requests[i]);
    val.displays.push_back(dataset.displays[i]);
  }

  double best_val = std::numeric_limits<double>::infinity();
  num::ParameterStore best = model.params();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    const double lr =
        train.learning_rate *
        (1.0 - (1.0 - train.final_lr_fraction) *
                   (train.epochs > 1 ? static_cast<double>(epoch) / (train.epochs - 1) : 0.0));
    shuffle_indices(order, rng);
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch_size) {
      const std::size_t end = std::min(order.size(), start + train.batch_size);
      const auto b = static_cast<std::int64_t>(end - start);
      Tape tape;
      std::vector<Var> rows;
      Tensor y({b, 1});
      for (std::size_t s = start; s < end; ++s) {
        const auto& sample = samples[order[s]];
        const auto& r = dataset.requests[sample.request];
        const auto& d = dataset.displays[sample.request];
        const auto a = core::build_allocation(r, d.ad_index, d.ad_position);
        const auto& slot = a.items[static_cast<std::size_t>(sample.position - 1)];
        rows.push_back(model.sample_row(tape, r, core::slot_features(r, slot), slot.is_ad,
                                        sample.position));
        y.at(static_cast<std::int64_t>(s - start), 0) = sample.label;
      }
      Var q = model.forward_rows(tape, num::stack_rows(rows));
      Var loss = num::scale(bce_column(q, y), 1.0 / static_cast<double>(b));
      epoch_loss += loss.value().at(0) * static_cast<double>(b);
      seen += static_cast<std::size_t>(b);
      tape.backward(loss);
      model.params().adam_step(lr);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(seen);
    if (!val.requests.empty()) {
      const auto e = evaluate_pointwise(model, val);
      double vloss = 0.0;
      std::size_t slots = 0;
      for (std::size_t i = 0; i < val.requests.size(); ++i) {
        const auto& r = val.requests[i];
        const auto& d = val.displays[i];
        const auto a = core::build_allocation(r, d.ad_index, d.ad_position);
        for (std::size_t j = 0; j < a.items.size(); ++j) {
          const auto& slot = a.items[j];
          const double q = std::clamp(model.predict(r, core::slot_features(r, slot),
                                                    slot.is_ad, static_cast<int>(j) + 1),
                                      kProbClip, 1.0 - kProbClip);
          vloss -= d.clicks[j] ? std::log(q) : std::log(1.0 - q);
          ++slots;
        }
      }
      stats.val_loss = vloss / static_cast<double>(slots);
      stats.val_auc = e.auc;
      stats.val_pcoc = e.pcoc;
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best = model.params();
      }
    } else {
      stats.val_loss = stats.train_loss;
      if (stats.val_loss < best_val) {
        best_val = stats.val_loss;
        best = model.params();
      }
    }
    if (curve) curve->push_back(stats);
  }
  model.params() = best;
  return model;
}

}  // namespace miaa::epm
