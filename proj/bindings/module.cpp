#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "miaa/aam.hpp"
#include "miaa/avito.hpp"
#include "miaa/cli.hpp"
#include "miaa/core.hpp"
#include "miaa/dataset.hpp"
#include "miaa/dsm.hpp"
#include "miaa/simgen.hpp"
#include "miaa/tape.hpp"

namespace py = pybind11;

namespace {

std::vector<std::pair<int, int>> enumerate_allocations_json(const std::string& request_json) {
  const auto r = miaa::data::request_from_json(nlohmann::json::parse(request_json));
  std::vector<std::pair<int, int>> out;
  for (const auto& a : miaa::core::enumerate_allocations(r))
    out.emplace_back(a.ad_index, a.ad_position);
  return out;
}

std::vector<std::string> sample_requests_jsonl(const std::string& market_json, int count,
                                               std::uint64_t seed) {
  auto cfg = miaa::simgen::MarketConfig{};
  if (!market_json.empty()) {
    const auto j = nlohmann::json::parse(market_json);
    if (j.contains("n")) cfg.n = j.at("n").get<int>();
    if (j.contains("m")) cfg.m = j.at("m").get<int>();
    if (j.contains("context_coefficient"))
      cfg.context_coefficient = j.at("context_coefficient").get<double>();
  }
  const auto ds = miaa::simgen::generate_dataset(cfg, count, seed, "py-");
  std::vector<std::string> out;
  out.reserve(ds.requests.size());
  for (const auto& r : ds.requests) out.push_back(miaa::data::request_to_json(r).dump());
  return out;
}

// VCG special case over explicit per-allocation pCTR rows (enumeration
// order, each of length m).
std::string run_vcg_json(const std::string& request_json,
                         const std::vector<std::vector<double>>& pctr_rows) {
  const auto r = miaa::data::request_from_json(nlohmann::json::parse(request_json));
  const auto allocs = miaa::core::enumerate_allocations(r);
  if (pctr_rows.size() != allocs.size())
    throw std::runtime_error("run_vcg: need one pCTR row per allocation");
  std::vector<miaa::epm::EpmPrediction> preds(allocs.size());
  for (std::size_t k = 0; k < allocs.size(); ++k) {
    preds[k].pctr = pctr_rows[k];
    preds[k].pgmv_per_click.assign(pctr_rows[k].size(), 0.0);
  }
  const auto scores =
      miaa::aam::constant_scores(r.num_ads(), static_cast<int>(allocs.size()));
  const auto out = miaa::aam::run_auction(r, allocs, preds, scores, {});
  return miaa::aam::outcome_to_json(out).dump();
}

}  // namespace

PYBIND11_MODULE(_miaa, m) {
  m.doc() = "Integrated ad auction and allocation lab";
  m.attr("__version__") = "0.1.0";

  m.def("run_cli", &miaa::cli::run, py::arg("args"),
        "Run a CLI verb (generate/train-epm/train-mechanism/evaluate/audit/"
        "serve-sim/compare); returns the exit code");
  m.def("softmax", &miaa::num::softmax_values, py::arg("x"), py::arg("temperature") = 1.0);
  m.def("winning_probs", &miaa::dsm::winning_probs, py::arg("sw"), py::arg("tau"));
  m.def("reward_loss", &miaa::dsm::reward_loss, py::arg("pr"), py::arg("rev"),
        py::arg("gmv"), py::arg("alpha"));
  m.def("enumerate_allocations", &enumerate_allocations_json, py::arg("request_json"),
        "Returns (ad_index, ad_position) pairs in enumeration order");
  m.def("sample_requests", &sample_requests_jsonl, py::arg("market_json") = std::string(),
        py::arg("count") = 1, py::arg("seed") = 1,
        "Sample synthetic requests; returns JSONL lines");
  m.def("run_vcg", &run_vcg_json, py::arg("request_json"), py::arg("pctr_rows"),
        "Run the mu=1, lambda=0 auction over explicit pCTRs");
  m.def("avito_simulated_ctr_means", [](double ctr1, double ctr7) {
    return std::make_pair(miaa::avito::simulated_ctr2_mean(ctr1, ctr7),
                          miaa::avito::simulated_ctr6_mean(ctr1, ctr7));
  });
}
