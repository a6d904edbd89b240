#pragma once

#include <map>
#include <string>
#include <vector>

#include "miaa/rng.hpp"
#include "miaa/tensor.hpp"

#include "json.hpp"

namespace miaa::num {

// Named parameters with matching gradient accumulators and Adam state.
// std::map keeps iteration (and therefore updates, checkpoints and
// hashes) in a fixed order.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
  };

  void add(const std::string& name, Tensor init);
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Tensor& grad(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  void zero_grad();
  // Adam with fixed defaults; zeroes gradients after the update.
  void adam_step(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  // Checkpoint: one-line versioned JSON header (names, shapes, meta)
  // followed by flat little-endian float64 blobs. Bit-exact round trip.
  void save(const std::string& path, const nlohmann::json& meta) const;
  static ParameterStore load(const std::string& path, nlohmann::json* meta_out = nullptr);

  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  std::int64_t step_ = 0;
};

Tensor xavier_uniform(Rng& rng, std::int64_t fan_in, std::int64_t fan_out,
                      std::vector<std::int64_t> shape);

}  // namespace miaa::num
