#include "miaa/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "miaa/bench.hpp"
#include "miaa/config.hpp"
#include "miaa/util.hpp"

#include "CLI11.hpp"

namespace miaa::cli {

namespace fs = std::filesystem;
using config::ExperimentConfig;
using nlohmann::json;

namespace {

struct Paths {
  fs::path out;
  explicit Paths(const ExperimentConfig& cfg) : out(cfg.out_dir) {}
  fs::path dataset(const std::string& name) const { return out / "dataset" / name; }
  fs::path checkpoint(const std::string& name) const { return out / "checkpoints" / name; }
  fs::path report(const std::string& name) const { return out / "reports" / name; }
  void ensure_dirs() const {
    fs::create_directories(out / "dataset");
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "reports");
  }
};

void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p))
    throw std::runtime_error("missing " + p.string() + "; " + hint);
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<fs::path>& files) {
  json m;
  m["command"] = command;
  m["config_hash"] = util::hex64(config::config_hash(cfg));
  m["seed"] = cfg.seed;
  m["seeds"] = cfg.seeds;
  json file_hashes = json::object();
  for (const auto& f : files)
    file_hashes[fs::relative(f, fs::path(cfg.out_dir)).generic_string()] =
        util::hex64(util::file_hash(f.string()));
  m["files"] = file_hashes;
  util::write_file((fs::path(cfg.out_dir) / ("manifest_" + command + ".json")).string(),
                   m.dump(2) + "\n");
}

// Derived seed streams per pipeline stage.
enum Stream : std::uint64_t {
  kGenTrain = 1000,
  kGenTest = 2000,
  kEpmTrain = 3000,
  kPointwiseTrain = 3500,
  kMechTrain = 4000,
  kEvalClicks = 5000,
};

// ---- generate --------------------------------------------------------------

void write_dataset_files(const Paths& paths, const std::string& prefix,
                         const data::Dataset& ds, std::vector<fs::path>& files) {
  const auto reqs = paths.dataset(prefix + "_requests.jsonl");
  const auto disp = paths.dataset(prefix + "_display.jsonl");
  data::write_requests_jsonl(reqs.string(), ds.requests);
  data::write_displays_jsonl(disp.string(), ds.displays);
  files.push_back(reqs);
  files.push_back(disp);
}

void cmd_generate(const ExperimentConfig& cfg) {
  Paths paths(cfg);
  paths.ensure_dirs();
  std::vector<fs::path> files;

  if (cfg.data.source == "synthetic") {
    auto market = cfg.market;
    market.seed = cfg.seed;
    const auto train = simgen::generate_dataset(market, cfg.data.train_requests,
                                                derive_seed(cfg.seed, kGenTrain), "train-");
    const auto test = simgen::generate_dataset(market, cfg.data.test_requests,
                                               derive_seed(cfg.seed, kGenTest), "test-");
    write_dataset_files(paths, "train", train, files);
    write_dataset_files(paths, "test", test, files);
    // Same streams feed the CTR models; kept as separate files so the
    // avito source can diverge.
    write_dataset_files(paths, "epm_train", train, files);
    write_dataset_files(paths, "epm_test", test, files);
    std::cout << "generate: wrote " << train.requests.size() << " train and "
              << test.requests.size() << " test requests\n";
  } else {
    avito::AvitoConfig acfg;
    acfg.seed = cfg.seed;
    acfg.vocab_size = cfg.market.vocab_sizes.at(0);
    acfg.x_dim = cfg.market.x_dim;
    acfg.user_dim = cfg.market.user_dim;
    acfg.request_dim = cfg.market.request_dim;
    acfg.bid_dist = cfg.market.bid_dist;
    acfg.organic_gmv_dist = cfg.market.organic_gmv_dist;
    acfg.ad_gmv_dist = cfg.market.ad_gmv_dist;
    const auto ingested = avito::ingest_avito_sessions(cfg.data.avito_path, acfg);
    const std::size_t total = ingested.epm.requests.size();
    if (total == 0) throw std::runtime_error("avito: no complete sessions ingested");
    const std::size_t n_train = total - total / 5;  // 80/20 split in session order

    data::Dataset epm_train, epm_test;
    std::vector<core::Request> auc_train, auc_test;
    for (std::size_t i = 0; i < total; ++i) {
      auto& dst = i < n_train ? epm_train : epm_test;
      dst.requests.push_back(ingested.epm.requests[i]);
      dst.displays.push_back(ingested.epm.displays[i]);
      (i < n_train ? auc_train : auc_test).push_back(ingested.auction[i]);
    }
    const auto train_reqs = paths.dataset("train_requests.jsonl");
    const auto test_reqs = paths.dataset("test_requests.jsonl");
    data::write_requests_jsonl(train_reqs.string(), auc_train);
    data::write_requests_jsonl(test_reqs.string(), auc_test);
    files.push_back(train_reqs);
    files.push_back(test_reqs);
    write_dataset_files(paths, "epm_train", epm_train, files);
    write_dataset_files(paths, "epm_test", epm_test, files);
    std::cout << "generate: ingested " << total << " sessions (skipped "
              << ingested.skipped_sessions << ", malformed rows "
              << ingested.malformed_rows << "), corpus CTR1=" << ingested.ctr1
              << " CTR7=" << ingested.ctr7 << "\n";
  }
  write_manifest(cfg, "generate", files);
}

// ---- training --------------------------------------------------------------

std::string epoch_curve_csv(const std::vector<epm::EpochStats>& curve) {
  std::ostringstream ss;
  ss << "epoch,train_loss,val_loss,val_auc,val_pcoc\n";
  for (const auto& s : curve)
    ss << s.epoch << ',' << util::fmt_double(s.train_loss) << ','
       << util::fmt_double(s.val_loss) << ',' << util::fmt_double(s.val_auc) << ','
       << util::fmt_double(s.val_pcoc) << '\n';
  return ss.str();
}

void cmd_train_epm(const ExperimentConfig& cfg) {
  Paths paths(cfg);
  paths.ensure_dirs();
  require_file(paths.dataset("epm_train_requests.jsonl"), "run `generate` first");
  data::Dataset ds;
  ds.requests = data::read_requests_jsonl(paths.dataset("epm_train_requests.jsonl").string());
  ds.displays = data::read_displays_jsonl(paths.dataset("epm_train_display.jsonl").string());

  auto train_cfg = cfg.epm_train;
  train_cfg.seed = derive_seed(cfg.seed, kEpmTrain);
  std::vector<epm::EpochStats> curve;
  const auto model = epm::train_epm(ds, cfg.epm, train_cfg, &curve);
  model.save(paths.checkpoint("epm.ckpt").string());
  util::write_file(paths.report("epm_training.csv").string(), epoch_curve_csv(curve));

  auto pw_cfg = cfg.epm_train;
  pw_cfg.seed = derive_seed(cfg.seed, kPointwiseTrain);
  std::vector<epm::EpochStats> pw_curve;
  const auto pw = epm::train_pointwise(ds, cfg.epm, cfg.pointwise, pw_cfg, &pw_curve);
  pw.save(paths.checkpoint("pointwise.ckpt").string());
  util::write_file(paths.report("pointwise_training.csv").string(),
                   epoch_curve_csv(pw_curve));

  write_manifest(cfg, "train-epm",
                 {paths.checkpoint("epm.ckpt"), paths.checkpoint("pointwise.ckpt"),
                  paths.report("epm_training.csv"), paths.report("pointwise_training.csv")});
  if (!curve.empty())
    std::cout << "train-epm: " << curve.size() << " epochs, final val_auc="
              << curve.back().val_auc << " val_pcoc=" << curve.back().val_pcoc << "\n";
}

void cmd_train_mechanism(const ExperimentConfig& cfg) {
  Paths paths(cfg);
  paths.ensure_dirs();
  require_file(paths.checkpoint("epm.ckpt"),
               "train EPM first (`train-epm` produces checkpoints/epm.ckpt)");
  require_file(paths.dataset("train_requests.jsonl"), "run `generate` first");
  const auto epm_model = epm::EpmModel::load(paths.checkpoint("epm.ckpt").string());
  const auto requests =
      data::read_requests_jsonl(paths.dataset("train_requests.jsonl").string());

  auto mech_cfg = cfg.mechanism;
  auto train_cfg = cfg.mech_train;
  train_cfg.seed = derive_seed(cfg.seed, kMechTrain);
  std::vector<dsm::MechEpochStats> curve;
  const auto model = dsm::train_mechanism(requests, epm_model, mech_cfg, train_cfg, &curve);
  model.save(paths.checkpoint("mechanism.ckpt").string());

  std::ostringstream ss;
  ss << "epoch,tau,train_loss,val_rev,val_gmv,val_objective,ic_spot_regret,"
        "negative_payment_rate\n";
  for (const auto& s : curve)
    ss << s.epoch << ',' << util::fmt_double(s.tau) << ',' << util::fmt_double(s.train_loss)
       << ',' << util::fmt_double(s.val_rev) << ',' << util::fmt_double(s.val_gmv) << ','
       << util::fmt_double(s.val_objective) << ',' << util::fmt_double(s.ic_spot_regret)
       << ',' << util::fmt_double(s.negative_payment_rate) << '\n';
  util::write_file(paths.report("mech_training.csv").string(), ss.str());

  write_manifest(cfg, "train-mechanism",
                 {paths.checkpoint("mechanism.ckpt"), paths.report("mech_training.csv")});
  if (!curve.empty())
    std::cout << "train-mechanism: " << curve.size()
              << " epochs, final val objective=" << curve.back().val_objective << "\n";
}

// ---- evaluation / audits -----------------------------------------------------

struct LoadedModels {
  epm::EpmModel epm_model;
  epm::PointwiseModel pointwise;
  aam::MechanismModel mechanism;
  std::shared_ptr<bench::PredictionProvider> preds;
  std::shared_ptr<bench::PointwiseProvider> pw;
};

LoadedModels load_models(const ExperimentConfig& cfg, const Paths& paths, int fixed_position) {
  require_file(paths.checkpoint("epm.ckpt"), "train EPM first");
  require_file(paths.checkpoint("pointwise.ckpt"), "train EPM first");
  require_file(paths.checkpoint("mechanism.ckpt"),
               "train the mechanism first (`train-mechanism`)");
  LoadedModels m;
  m.epm_model = epm::EpmModel::load(paths.checkpoint("epm.ckpt").string());
  m.pointwise = epm::PointwiseModel::load(paths.checkpoint("pointwise.ckpt").string());
  m.mechanism = aam::MechanismModel::load(paths.checkpoint("mechanism.ckpt").string());
  m.mechanism.mutable_config().alpha = cfg.mechanism.alpha;
  m.mechanism.mutable_config().allow_no_ad = cfg.mechanism.allow_no_ad;
  m.mechanism.mutable_config().clamp_payment_at_zero = cfg.mechanism.clamp_payment_at_zero;
  m.preds = std::make_shared<bench::PredictionProvider>(m.epm_model);
  m.pw = std::make_shared<bench::PointwiseProvider>(m.pointwise, fixed_position);
  return m;
}

constexpr int kGspFixedPosition = 2;

struct MechanismSet {
  std::unique_ptr<bench::MiaaMechanism> miaa;
  std::unique_ptr<bench::VcgMechanism> vcg;
  std::unique_ptr<bench::GspFixedMechanism> gsp_fixed;
  std::unique_ptr<bench::GspDynamicMechanism> gsp_dynamic;
  std::vector<const bench::Mechanism*> all() const {
    return {miaa.get(), vcg.get(), gsp_fixed.get(), gsp_dynamic.get()};
  }
};

MechanismSet make_mechanisms(const ExperimentConfig& cfg, const LoadedModels& m) {
  MechanismSet set;
  set.miaa = std::make_unique<bench::MiaaMechanism>(m.mechanism, m.preds);
  aam::AuctionOptions vcg_opts;
  vcg_opts.allow_no_ad = cfg.mechanism.allow_no_ad;
  set.vcg = std::make_unique<bench::VcgMechanism>(m.preds, vcg_opts);
  set.gsp_fixed = std::make_unique<bench::GspFixedMechanism>(m.pw, kGspFixedPosition);
  set.gsp_dynamic =
      std::make_unique<bench::GspDynamicMechanism>(m.pw, m.preds, cfg.mechanism.alpha);
  return set;
}

struct EvalOutputs {
  std::vector<bench::EvalReport> mechanisms;
  epm::ModelEval listwise;
  epm::ModelEval pointwise;
};

EvalOutputs cmd_evaluate(const ExperimentConfig& cfg) {
  Paths paths(cfg);
  paths.ensure_dirs();
  require_file(paths.dataset("test_requests.jsonl"), "run `generate` first");
  const auto models = load_models(cfg, paths, kGspFixedPosition);
  const auto requests =
      data::read_requests_jsonl(paths.dataset("test_requests.jsonl").string());
  const auto set = make_mechanisms(cfg, models);

  bench::EvalOptions options;
  options.alpha = cfg.mechanism.alpha;
  options.seed = derive_seed(cfg.seed, kEvalClicks);
  if (cfg.data.source == "synthetic") options.market = cfg.market;
  options.audit_grid = cfg.eval.audit_grid;
  options.audit_sample = cfg.eval.audit_sample;

  EvalOutputs out;
  std::ostringstream csv;
  csv << bench::EvalReport::csv_header() << '\n';
  json jout = json::array();
  for (const auto* mech : set.all()) {
    const auto rep = bench::evaluate_mechanism(*mech, requests, *models.preds, options);
    csv << rep.csv_row() << '\n';
    jout.push_back(rep.to_json());
    out.mechanisms.push_back(rep);
    std::cout << "evaluate: " << rep.mechanism
              << " objective=" << rep.objective_expected << " rpm=" << rep.rpm_expected
              << " gpm=" << rep.gpm_expected << "\n";
  }
  util::write_file(paths.report("eval_report.csv").string(), csv.str());
  util::write_file(paths.report("eval_report.json").string(), jout.dump(2) + "\n");

  // Model-level comparison on the held-out display stream.
  data::Dataset epm_test;
  epm_test.requests =
      data::read_requests_jsonl(paths.dataset("epm_test_requests.jsonl").string());
  epm_test.displays =
      data::read_displays_jsonl(paths.dataset("epm_test_display.jsonl").string());
  out.listwise = epm::evaluate_epm(models.epm_model, epm_test);
  out.pointwise = epm::evaluate_pointwise(models.pointwise, epm_test);
  std::ostringstream mcsv;
  mcsv << "model,auc,pcoc,mean_pred,click_rate\n";
  mcsv << "listwise," << util::fmt_double(out.listwise.auc) << ','
       << util::fmt_double(out.listwise.pcoc) << ',' << util::fmt_double(out.listwise.mean_pred)
       << ',' << util::fmt_double(out.listwise.click_rate) << '\n';
  mcsv << "pointwise," << util::fmt_double(out.pointwise.auc) << ','
       << util::fmt_double(out.pointwise.pcoc) << ','
       << util::fmt_double(out.pointwise.mean_pred) << ','
       << util::fmt_double(out.pointwise.click_rate) << '\n';
  util::write_file(paths.report("model_eval.csv").string(), mcsv.str());
  std::cout << "evaluate: listwise auc=" << out.listwise.auc
            << " pointwise auc=" << out.pointwise.auc << "\n";

  write_manifest(cfg, "evaluate",
                 {paths.report("eval_report.csv"), paths.report("eval_report.json"),
                  paths.report("model_eval.csv")});
  return out;
}

void cmd_audit(const ExperimentConfig& cfg) {
  Paths paths(cfg);
  paths.ensure_dirs();
  require_file(paths.dataset("test_requests.jsonl"), "run `generate` first");
  const auto models = load_models(cfg, paths, kGspFixedPosition);
  const auto requests =
      data::read_requests_jsonl(paths.dataset("test_requests.jsonl").string());
  const auto set = make_mechanisms(cfg, models);

  std::ostringstream regret_csv;
  regret_csv << "mechanism,request_id,ad_id,truthful_utility,best_bid,best_utility,regret\n";
  json summary = json::object();
  for (const auto* mech : set.all()) {
    const auto ic = bench::ic_audit(*mech, requests, cfg.eval.ic_grid, *models.preds);
    const auto ir = bench::ir_audit(*mech, requests);
    for (const auto& row : ic.rows)
      regret_csv << mech->name() << ',' << row.request_id << ',' << row.ad_id << ','
                 << util::fmt_double(row.truthful_utility) << ','
                 << util::fmt_double(row.best_bid) << ','
                 << util::fmt_double(row.best_utility) << ','
                 << util::fmt_double(row.regret) << '\n';
    summary[mech->name()] = {{"ic_max_regret", ic.max_regret},
                             {"ic_mean_regret", ic.mean_regret},
                             {"ic_instances", ic.instances},
                             {"ir_violations", ir.violations},
                             {"negative_payments", ir.negative_payments},
                             {"outcomes", ir.outcomes}};
    std::cout << "audit: " << mech->name() << " max_regret=" << ic.max_regret
              << " ir_violations=" << ir.violations << "\n";
  }
  util::write_file(paths.report("audit_regret.csv").string(), regret_csv.str());
  util::write_file(paths.report("audit_summary.json").string(), summary.dump(2) + "\n");
  write_manifest(cfg, "audit",
                 {paths.report("audit_regret.csv"), paths.report("audit_summary.json")});
}

void cmd_serve_sim(const ExperimentConfig& cfg) {
  Paths paths(cfg);
  paths.ensure_dirs();
  require_file(paths.dataset("test_requests.jsonl"), "run `generate` first");
  const auto models = load_models(cfg, paths, kGspFixedPosition);
  const auto requests =
      data::read_requests_jsonl(paths.dataset("test_requests.jsonl").string());
  bench::MiaaMechanism miaa(models.mechanism, models.preds);

  std::ostringstream lines;
  std::vector<double> latency_us;
  latency_us.reserve(requests.size());
  for (const auto& r : requests) {
    // Steps: enumerate, predict, select, return winner and position.
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = miaa.run(r);
    const auto t1 = std::chrono::steady_clock::now();
    latency_us.push_back(
        std::chrono::duration<double, std::micro>(t1 - t0).count());
    json line = aam::outcome_to_json(out);
    line["request_id"] = r.request_id;
    lines << line.dump() << '\n';
  }
  util::write_file(paths.report("serve_outcomes.jsonl").string(), lines.str());

  // Latency summary goes to stdout only; report files stay deterministic.
  auto sorted = latency_us;
  std::sort(sorted.begin(), sorted.end());
  const auto pct = [&](double p) {
    return sorted[static_cast<std::size_t>(p * (sorted.size() - 1))];
  };
  std::cout << "serve-sim: " << requests.size() << " requests, latency us p50=" << pct(0.5)
            << " p95=" << pct(0.95) << " max=" << sorted.back() << "\n";
  write_manifest(cfg, "serve-sim", {paths.report("serve_outcomes.jsonl")});
}

void run_pipeline_for_seed(ExperimentConfig cfg, std::uint64_t seed, const fs::path& out) {
  cfg.seed = seed;
  cfg.out_dir = out.string();
  cmd_generate(cfg);
  cmd_train_epm(cfg);
  cmd_train_mechanism(cfg);
}

void cmd_compare(const ExperimentConfig& cfg) {
  Paths paths(cfg);
  paths.ensure_dirs();

  std::map<std::string, std::vector<bench::EvalReport>> by_mechanism;
  std::vector<double> auc_listwise, auc_pointwise, pcoc_listwise, auc_gap;
  for (const auto seed : cfg.seeds) {
    ExperimentConfig sub = cfg;
    sub.seed = seed;
    sub.out_dir = (paths.out / ("seed_" + std::to_string(seed))).string();
    std::cout << "compare: running pipeline for seed " << seed << "\n";
    run_pipeline_for_seed(sub, seed, sub.out_dir);
    const auto outputs = cmd_evaluate(sub);
    for (const auto& rep : outputs.mechanisms) by_mechanism[rep.mechanism].push_back(rep);
    auc_listwise.push_back(outputs.listwise.auc);
    auc_pointwise.push_back(outputs.pointwise.auc);
    pcoc_listwise.push_back(outputs.listwise.pcoc);
    auc_gap.push_back(outputs.listwise.auc - outputs.pointwise.auc);
  }

  json j;
  std::ostringstream csv;
  csv << "mechanism,objective_mean,objective_std,rpm_mean,rpm_std,gpm_mean,gpm_std,"
         "ic_max_regret,ir_violations,negative_payment_rate_mean\n";
  for (const auto& [name, reps] : by_mechanism) {
    std::vector<double> obj, rpmv, gpmv, negv;
    double ic_max = 0.0;
    std::int64_t ir = 0;
    for (const auto& r : reps) {
      obj.push_back(r.objective_expected);
      rpmv.push_back(r.rpm_expected);
      gpmv.push_back(r.gpm_expected);
      negv.push_back(r.negative_payment_rate);
      ic_max = std::max(ic_max, r.ic_max_regret);
      ir += r.ir_violations;
    }
    csv << name << ',' << util::fmt_double(util::mean(obj)) << ','
        << util::fmt_double(util::stddev(obj)) << ',' << util::fmt_double(util::mean(rpmv))
        << ',' << util::fmt_double(util::stddev(rpmv)) << ','
        << util::fmt_double(util::mean(gpmv)) << ',' << util::fmt_double(util::stddev(gpmv))
        << ',' << util::fmt_double(ic_max) << ',' << ir << ','
        << util::fmt_double(util::mean(negv)) << '\n';
    j[name] = {{"objective_mean", util::mean(obj)},
               {"objective_std", util::stddev(obj)},
               {"rpm_mean", util::mean(rpmv)},
               {"gpm_mean", util::mean(gpmv)},
               {"ic_max_regret", ic_max},
               {"ir_violations", ir}};
    std::cout << "compare: " << name << " objective=" << util::mean(obj) << " +- "
              << util::stddev(obj) << "\n";
  }
  j["models"] = {{"listwise_auc_mean", util::mean(auc_listwise)},
                 {"pointwise_auc_mean", util::mean(auc_pointwise)},
                 {"auc_gap_mean", util::mean(auc_gap)},
                 {"auc_gap_std", util::stddev(auc_gap)},
                 {"listwise_pcoc_mean", util::mean(pcoc_listwise)}};
  util::write_file(paths.report("compare_mechanisms.csv").string(), csv.str());

  std::ostringstream mcsv;
  mcsv << "metric,mean,std\n";
  mcsv << "listwise_auc," << util::fmt_double(util::mean(auc_listwise)) << ','
       << util::fmt_double(util::stddev(auc_listwise)) << '\n';
  mcsv << "pointwise_auc," << util::fmt_double(util::mean(auc_pointwise)) << ','
       << util::fmt_double(util::stddev(auc_pointwise)) << '\n';
  mcsv << "auc_gap," << util::fmt_double(util::mean(auc_gap)) << ','
       << util::fmt_double(util::stddev(auc_gap)) << '\n';
  mcsv << "listwise_pcoc," << util::fmt_double(util::mean(pcoc_listwise)) << ','
       << util::fmt_double(util::stddev(pcoc_listwise)) << '\n';
  util::write_file(paths.report("compare_models.csv").string(), mcsv.str());
  util::write_file(paths.report("compare.json").string(), j.dump(2) + "\n");
  write_manifest(cfg, "compare",
                 {paths.report("compare_mechanisms.csv"), paths.report("compare_models.csv"),
                  paths.report("compare.json")});
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"MIAA lab: integrated ad auction and allocation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
  std::optional<double> alpha_override;
  bool allow_no_ad = false;
  bool clamp_payment = false;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config JSON")->required();
    sub->add_option("--seed", seed_override, "override the active seed");
    sub->add_option("--out", out_override, "override the output directory");
    sub->add_option("--alpha", alpha_override, "override the revenue/GMV trade-off");
    sub->add_flag("--allow-no-ad", allow_no_ad, "enable the organic-only reserve option");
    sub->add_flag("--clamp-payment-at-zero", clamp_payment,
                  "clamp negative payments to zero (breaks exact IC)");
  };

  std::vector<std::string> verbs = {"generate",     "train-epm", "train-mechanism",
                                    "evaluate",     "audit",     "serve-sim",
                                    "compare"};
  for (const auto& v : verbs) add_common(app.add_subcommand(v));

  std::vector<std::string> argv_copy = args;
  std::vector<char*> argv;
  std::string prog = "miaa";
  argv.push_back(prog.data());
  for (auto& a : argv_copy) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    auto cfg = config::load_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (out_override) cfg.out_dir = *out_override;
    if (alpha_override) cfg.mechanism.alpha = *alpha_override;
    if (allow_no_ad) cfg.mechanism.allow_no_ad = true;
    if (clamp_payment) cfg.mechanism.clamp_payment_at_zero = true;
    cfg.validate();

    const std::string verb = app.get_subcommands().front()->get_name();
    if (verb == "generate")
      cmd_generate(cfg);
    else if (verb == "train-epm")
      cmd_train_epm(cfg);
    else if (verb == "train-mechanism")
      cmd_train_mechanism(cfg);
    else if (verb == "evaluate")
      cmd_evaluate(cfg);
    else if (verb == "audit")
      cmd_audit(cfg);
    else if (verb == "serve-sim")
      cmd_serve_sim(cfg);
    else if (verb == "compare")
      cmd_compare(cfg);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace miaa::cli
