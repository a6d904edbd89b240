#include "miaa/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace miaa::num {

void ParameterStore::add(const std::string& name, Tensor init) {
  if (entries_.count(name)) throw std::runtime_error("params: duplicate name " + name);
  if (!init.all_finite()) throw std::runtime_error("params: non-finite init for " + name);
  Entry e;
  e.grad = Tensor(init.shape);
  e.adam_m = Tensor(init.shape);
  e.adam_v = Tensor(init.shape);
  e.value = std::move(init);
  entries_.emplace(name, std::move(e));
}

Tensor& ParameterStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("params: unknown name " + name);
  return it->second.value;
}

const Tensor& ParameterStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("params: unknown name " + name);
  return it->second.value;
}

Tensor& ParameterStore::grad(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::runtime_error("params: unknown name " + name);
  return it->second.grad;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void ParameterStore::zero_grad() {
  for (auto& [k, e] : entries_) std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
}

void ParameterStore::adam_step(double learning_rate, double beta1, double beta2, double eps) {
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& [k, e] : entries_) {
    for (std::int64_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad.at(i);
      e.adam_m.at(i) = beta1 * e.adam_m.at(i) + (1.0 - beta1) * g;
      e.adam_v.at(i) = beta2 * e.adam_v.at(i) + (1.0 - beta2) * g * g;
      const double mhat = e.adam_m.at(i) / bc1;
      const double vhat = e.adam_v.at(i) / bc2;
      e.value.at(i) -= learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
    std::fill(e.grad.data.begin(), e.grad.data.end(), 0.0);
    if (!e.value.all_finite()) throw std::runtime_error("params: non-finite after step: " + k);
  }
}

namespace {

void write_doubles_le(std::ofstream& f, const std::vector<double>& v) {
  for (double d : v) {
    const auto u = std::bit_cast<std::uint64_t>(d);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
    f.write(reinterpret_cast<const char*>(b), 8);
  }
}

void read_doubles_le(std::ifstream& f, std::vector<double>& v) {
  for (double& d : v) {
    unsigned char b[8];
    f.read(reinterpret_cast<char*>(b), 8);
    if (!f) throw std::runtime_error("checkpoint: truncated tensor data");
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    d = std::bit_cast<double>(u);
  }
}

}  // namespace

void ParameterStore::save(const std::string& path, const nlohmann::json& meta) const {
  nlohmann::json header;
  header["format"] = "miaa-checkpoint";
  header["version"] = 1;
  header["meta"] = meta;
  auto tensors = nlohmann::json::array();
  for (const auto& [name, e] : entries_)
    tensors.push_back({{"name", name}, {"shape", e.value.shape}});
  header["tensors"] = tensors;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f << header.dump() << '\n';
  for (const auto& [name, e] : entries_) write_doubles_le(f, e.value.data);
}

ParameterStore ParameterStore::load(const std::string& path, nlohmann::json* meta_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("checkpoint: missing header in " + path);
  nlohmann::json header = nlohmann::json::parse(line);
  if (header.value("format", "") != "miaa-checkpoint")
    throw std::runtime_error("checkpoint: bad format marker in " + path);
  if (header.value("version", 0) != 1)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  if (meta_out) *meta_out = header.value("meta", nlohmann::json::object());
  ParameterStore store;
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<std::int64_t>>();
    Tensor tensor(shape);
    read_doubles_le(f, tensor.data);
    store.add(name, std::move(tensor));
  }
  return store;
}

Tensor xavier_uniform(Rng& rng, std::int64_t fan_in, std::int64_t fan_out,
                      std::vector<std::int64_t> shape) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace miaa::num
