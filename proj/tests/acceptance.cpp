// Acceptance suite: one case per criterion, each printing a PASS/FAIL
// line. Runs the full desk-scale experiment stack, so this binary is the
// slowest target in the tree (several minutes).
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "doctest.h"
#include "miaa/avito.hpp"
#include "miaa/bench.hpp"
#include "miaa/cli.hpp"
#include "miaa/dsm.hpp"
#include "miaa/simgen.hpp"
#include "miaa/util.hpp"

using namespace miaa;
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[criterion %2d] %s  %s\n", criterion, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
}

epm::EpmConfig small_epm_config(int m) {
  epm::EpmConfig cfg;
  cfg.num_positions = m;
  cfg.vocab_sizes = {50, 10, 10};
  cfg.embedding_dim = 4;
  cfg.position_dim = 2;
  cfg.hidden = {24, 12};
  return cfg;
}

aam::MechanismConfig small_mech_config(int m) {
  aam::MechanismConfig cfg;
  cfg.num_positions = m;
  cfg.mu_hidden = {8, 4};
  cfg.lambda_hidden = {16, 8};
  return cfg;
}

simgen::MarketConfig small_market(int n, int m) {
  simgen::MarketConfig cfg;
  cfg.n = n;
  cfg.m = m;
  cfg.vocab_sizes = {50, 10, 10};
  return cfg;
}

struct AuditCorpus {
  double max_regret = 0.0;
  std::int64_t instances = 0;
  std::int64_t ir_violations_miaa = 0;
  std::int64_t ir_violations_vcg = 0;
  std::int64_t outcomes = 0;
};

// Shared corpus for criteria 1 and 2: every (n, m) in {2..5}^2 with
// randomly initialized networks, plus one trained mechanism.
AuditCorpus run_ic_ir_corpus(int per_combo, int trained_requests, int grid) {
  AuditCorpus corpus;
  for (int n = 2; n <= 5; ++n) {
    for (int m = 2; m <= 5; ++m) {
      const auto market = small_market(n, m);
      const auto epm_model =
          epm::EpmModel::init(small_epm_config(m), 900 + static_cast<std::uint64_t>(n * 10 + m));
      const auto mech = aam::MechanismModel::init(
          small_mech_config(m), 7000 + static_cast<std::uint64_t>(n * 10 + m));
      auto preds = std::make_shared<bench::PredictionProvider>(epm_model);
      bench::MiaaMechanism miaa(mech, preds);
      bench::VcgMechanism vcg(preds);
      const auto requests =
          simgen::generate_dataset(market, per_combo,
                                   derive_seed(31, static_cast<std::uint64_t>(n * 100 + m)),
                                   "ic-")
              .requests;
      const auto audit = bench::ic_audit(miaa, requests, grid, *preds);
      corpus.max_regret = std::max(corpus.max_regret, audit.max_regret);
      corpus.instances += static_cast<std::int64_t>(requests.size());
      const auto ir_miaa = bench::ir_audit(miaa, requests);
      const auto ir_vcg = bench::ir_audit(vcg, requests);
      corpus.ir_violations_miaa += ir_miaa.violations;
      corpus.ir_violations_vcg += ir_vcg.violations;
      corpus.outcomes += ir_miaa.outcomes;
    }
  }
  // Trained-mechanism slice.
  {
    const auto market = small_market(3, 3);
    const auto ds = simgen::generate_dataset(market, trained_requests, 41, "ictr-");
    const auto epm_model = epm::EpmModel::init(small_epm_config(3), 42);
    dsm::MechTrainConfig tc;
    tc.epochs = 3;
    tc.seed = 43;
    const auto trained = dsm::train_mechanism(ds.requests, epm_model, small_mech_config(3), tc);
    auto preds = std::make_shared<bench::PredictionProvider>(epm_model);
    bench::MiaaMechanism miaa(trained, preds);
    bench::VcgMechanism vcg(preds);
    const auto requests = simgen::generate_dataset(market, trained_requests, 44, "ictst-").requests;
    const auto audit = bench::ic_audit(miaa, requests, grid, *preds);
    corpus.max_regret = std::max(corpus.max_regret, audit.max_regret);
    corpus.instances += static_cast<std::int64_t>(requests.size());
    corpus.ir_violations_miaa += bench::ir_audit(miaa, requests).violations;
    corpus.ir_violations_vcg += bench::ir_audit(vcg, requests).violations;
    corpus.outcomes += static_cast<std::int64_t>(requests.size());
  }
  return corpus;
}

AuditCorpus& shared_corpus() {
  static AuditCorpus corpus = run_ic_ir_corpus(640, 120, 50);
  return corpus;
}

// Multi-seed experiment shared by criteria 6 and 7.
struct SeedOutcome {
  double auc_listwise = 0.0;
  double auc_pointwise = 0.0;
  double pcoc_listwise = 0.0;
  double obj_miaa = 0.0;
  double obj_vcg = 0.0;
  double obj_gsp_fixed = 0.0;
  double obj_gsp_dynamic = 0.0;
};

struct Experiment {
  std::vector<SeedOutcome> seeds;
  double epm_seconds = 0.0;  // criterion 6 budget
};

Experiment& shared_experiment() {
  static Experiment exp = [] {
    Experiment e;
    // Strong context effects with a narrowed base-CTR band: the
    // externality channel carries a large share of the rankable signal,
    // which is the regime the list-wise model exists for.
    simgen::MarketConfig market;
    market.n = 3;
    market.m = 4;
    market.context_coefficient = 1.6;
    market.base_ctr_dist = {0.12, 0.38};
    market.position_multipliers = {1.0, 0.78, 0.6, 0.45};

    epm::EpmConfig ecfg;
    ecfg.num_positions = 4;

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SeedOutcome so;
      const auto train =
          simgen::generate_dataset(market, 9000, derive_seed(seed, 1000), "tr-");
      const auto test =
          simgen::generate_dataset(market, 700, derive_seed(seed, 2000), "te-");

      const auto t_epm = std::chrono::steady_clock::now();
      epm::TrainConfig etc;
      etc.epochs = 20;
      etc.seed = derive_seed(seed, 3000);
      const auto listwise = epm::train_epm(train, ecfg, etc);
      epm::TrainConfig ptc = etc;
      ptc.epochs = 12;
      ptc.seed = derive_seed(seed, 3500);
      const auto pointwise =
          epm::train_pointwise(train, ecfg, epm::PointwiseConfig{}, ptc);
      const auto lw_eval = epm::evaluate_epm(listwise, test);
      const auto pw_eval = epm::evaluate_pointwise(pointwise, test);
      e.epm_seconds += seconds_since(t_epm);
      so.auc_listwise = lw_eval.auc;
      so.auc_pointwise = pw_eval.auc;
      so.pcoc_listwise = lw_eval.pcoc;

      aam::MechanismConfig mcfg;
      mcfg.num_positions = 4;
      dsm::MechTrainConfig mtc;
      mtc.epochs = 20;
      mtc.tau_end = 0.05;
      mtc.learning_rate = 5e-3;
      mtc.seed = derive_seed(seed, 4000);
      const std::vector<core::Request> mech_train(train.requests.begin(),
                                                  train.requests.begin() + 6000);
      const auto mechanism = dsm::train_mechanism(mech_train, listwise, mcfg, mtc);

      auto preds = std::make_shared<bench::PredictionProvider>(listwise);
      auto pw = std::make_shared<bench::PointwiseProvider>(pointwise, 2);
      bench::MiaaMechanism miaa(mechanism, preds);
      bench::VcgMechanism vcg(preds);
      bench::GspFixedMechanism gsp_fixed(pw, 2);
      bench::GspDynamicMechanism gsp_dynamic(pw, preds, mcfg.alpha);

      bench::EvalOptions opts;
      opts.alpha = mcfg.alpha;
      opts.seed = derive_seed(seed, 5000);
      opts.market = market;
      opts.audit_sample = 0;  // criterion 1 handles the audits
      so.obj_miaa =
          bench::evaluate_mechanism(miaa, test.requests, *preds, opts).objective_expected;
      so.obj_vcg =
          bench::evaluate_mechanism(vcg, test.requests, *preds, opts).objective_expected;
      so.obj_gsp_fixed =
          bench::evaluate_mechanism(gsp_fixed, test.requests, *preds, opts).objective_expected;
      so.obj_gsp_dynamic = bench::evaluate_mechanism(gsp_dynamic, test.requests, *preds, opts)
                               .objective_expected;
      e.seeds.push_back(so);
    }
    return e;
  }();
  return exp;
}

}  // namespace

TEST_CASE("criterion 1: IC exactness on 10k+ instances inside 5 minutes") {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& corpus = shared_corpus();
  const double elapsed = seconds_since(t0);
  const bool pass =
      corpus.instances >= 10000 && corpus.max_regret <= 1e-9 && elapsed <= 300.0;
  report(1, pass,
         "instances=" + std::to_string(corpus.instances) +
             " max_regret=" + util::fmt_double(corpus.max_regret) +
             " runtime_s=" + util::fmt_double(elapsed));
  CHECK(corpus.instances >= 10000);
  CHECK(corpus.max_regret <= 1e-9);
  CHECK(elapsed <= 300.0);
}

TEST_CASE("criterion 2: IR exactness for the learned mechanism and VCG") {
  const auto& corpus = shared_corpus();
  const bool pass = corpus.ir_violations_miaa == 0 && corpus.ir_violations_vcg == 0;
  report(2, pass,
         "violations_miaa=" + std::to_string(corpus.ir_violations_miaa) +
             " violations_vcg=" + std::to_string(corpus.ir_violations_vcg) +
             " outcomes=" + std::to_string(corpus.outcomes));
  CHECK(corpus.ir_violations_miaa == 0);
  CHECK(corpus.ir_violations_vcg == 0);
}

TEST_CASE("criterion 3: VCG reduction matches an independent implementation bitwise") {
  Rng rng(61);
  std::int64_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(4));
    const int m = 1 + static_cast<int>(rng.uniform_int(5));
    core::Request r;
    r.request_id = "vcg";
    for (int i = 0; i < n; ++i) {
      core::AdCandidate ad;
      ad.ad_id = i + 1;
      ad.bid = rng.uniform(0.1, 2.0);
      r.ads.push_back(ad);
    }
    for (int j = 0; j < m - 1; ++j) r.organic.push_back({});
    const auto allocs = core::enumerate_allocations(r);
    std::vector<epm::EpmPrediction> preds(allocs.size());
    for (auto& p : preds)
      for (int j = 0; j < m; ++j) {
        p.pctr.push_back(rng.uniform(0.01, 0.9));
        p.pgmv_per_click.push_back(0.0);
      }
    const auto out = aam::run_auction(
        r, allocs, preds, aam::constant_scores(n, static_cast<int>(allocs.size())), {});

    // Independent welfare-difference VCG: welfare(a) = b_i q_sigma(a);
    // payment = [best welfare without i - welfare of others in a*] / q.
    std::size_t best = 0;
    double best_w = -1e300;
    for (std::size_t k = 0; k < allocs.size(); ++k) {
      const auto& a = allocs[k];
      const double w = r.ads[static_cast<std::size_t>(a.ad_index - 1)].bid *
                       preds[k].pctr[static_cast<std::size_t>(a.ad_position - 1)];
      if (w > best_w) {
        best_w = w;
        best = k;
      }
    }
    const auto& star = allocs[best];
    double cf = -1e300;
    for (std::size_t k = 0; k < allocs.size(); ++k)
      if (allocs[k].ad_index != star.ad_index) {
        const double w = r.ads[static_cast<std::size_t>(allocs[k].ad_index - 1)].bid *
                         preds[k].pctr[static_cast<std::size_t>(allocs[k].ad_position - 1)];
        cf = std::max(cf, w);
      }
    double others_in_star = 0.0;
    for (std::size_t j = 0; j < star.items.size(); ++j)
      if (static_cast<int>(j) + 1 != star.ad_position)
        others_in_star += 0.0 * preds[best].pctr[j];  // organic bids are zero
    const double payment = (cf - others_in_star) /
                           preds[best].pctr[static_cast<std::size_t>(star.ad_position - 1)];

    if (out.winner_ad_index != star.ad_index || out.position != star.ad_position ||
        out.payment_per_click != payment)
      ++mismatches;
  }

  // m=1 second-price special case.
  core::Request r;
  r.request_id = "vcg-m1";
  core::AdCandidate a1, a2;
  a1.ad_id = 1;
  a1.bid = 0.8;
  a2.ad_id = 2;
  a2.bid = 0.5;
  r.ads = {a1, a2};
  const auto allocs = core::enumerate_allocations(r);
  std::vector<epm::EpmPrediction> preds(2);
  for (auto& p : preds) {
    p.pctr = {1.0};
    p.pgmv_per_click = {0.0};
  }
  const auto out = aam::run_auction(r, allocs, preds, aam::constant_scores(2, 2), {});
  const bool second_price_ok =
      out.winner_ad_index == 1 && out.payment_per_click == 0.5;

  const bool pass = mismatches == 0 && second_price_ok;
  report(3, pass,
         "mismatches=" + std::to_string(mismatches) +
             " m1_payment=" + util::fmt_double(out.payment_per_click));
  CHECK(mismatches == 0);
  CHECK(second_price_ok);
}

TEST_CASE("criterion 4: winner equals the brute-force welfare argmax on 10k instances") {
  Rng rng(71);
  std::int64_t mismatches = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(4));
    const int m = 2 + static_cast<int>(rng.uniform_int(4));
    core::Request r;
    r.request_id = "argmax";
    for (int i = 0; i < n; ++i) {
      core::AdCandidate ad;
      ad.ad_id = i + 1;
      ad.bid = rng.uniform(0.1, 2.0);
      r.ads.push_back(ad);
    }
    for (int j = 0; j < m - 1; ++j) r.organic.push_back({});
    const auto allocs = core::enumerate_allocations(r);
    std::vector<epm::EpmPrediction> preds(allocs.size());
    for (auto& p : preds)
      for (int j = 0; j < m; ++j) {
        p.pctr.push_back(rng.uniform(0.01, 0.9));
        p.pgmv_per_click.push_back(rng.uniform(0.0, 4.0));
      }
    aam::ScoreSet scores;
    for (int i = 0; i < n; ++i) scores.mu.push_back(rng.uniform(0.05, 1.0));
    for (std::size_t k = 0; k < allocs.size(); ++k)
      scores.lambda.push_back(rng.uniform(-1.0, 1.0));
    const auto out = aam::run_auction(r, allocs, preds, scores, {});

    std::size_t best = 0;
    double best_sw = -1e300;
    for (std::size_t k = 0; k < allocs.size(); ++k) {
      const auto& a = allocs[k];
      const double sw =
          scores.mu[static_cast<std::size_t>(a.ad_index - 1)] *
              r.ads[static_cast<std::size_t>(a.ad_index - 1)].bid *
              preds[k].pctr[static_cast<std::size_t>(a.ad_position - 1)] +
          scores.lambda[k];
      if (sw > best_sw) {
        best_sw = sw;
        best = k;
      }
    }
    if (out.winner_ad_index != allocs[best].ad_index ||
        out.position != allocs[best].ad_position)
      ++mismatches;
  }
  report(4, mismatches == 0, "mismatches=" + std::to_string(mismatches) + " of 10000");
  CHECK(mismatches == 0);
}

TEST_CASE("criterion 5: gradient integrity of ce_loss and reward_loss") {
  // --- ce_loss path through the full list-wise model, width-4 trunk ---
  int ce_failures = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    simgen::MarketConfig market = small_market(1, 2);
    market.dense_dim = 2;
    Rng rng(derive_seed(500, trial));
    auto r = simgen::sample_request(market, rng, "g");
    epm::EpmConfig cfg;
    cfg.num_positions = 2;
    cfg.vocab_sizes = {5};
    cfg.embedding_dim = 2;
    cfg.position_dim = 2;
    cfg.dense_dim = 2;
    cfg.hidden = {4};
    // Items carry one sparse field in this configuration.
    r.ads[0].features.sparse_ids = {r.ads[0].features.sparse_ids[0] % 5};
    r.organic[0].features.sparse_ids = {r.organic[0].features.sparse_ids[0] % 5};
    r.ads[0].features.dense = {0.3, -0.2};
    r.organic[0].features.dense = {0.1, 0.5};
    auto model = epm::EpmModel::init(cfg, derive_seed(501, trial));
    const auto alloc = core::build_allocation(r, 1, 1 + static_cast<int>(trial % 2));
    const std::vector<int> clicks = {static_cast<int>(trial % 2),
                                     static_cast<int>((trial / 2) % 2)};

    auto loss_value = [&]() { return epm::ce_loss(model.predict(r, alloc), clicks); };
    model.params().zero_grad();
    {
      num::Tape tape;
      auto batch = num::stack_rows({model.alloc_row(tape, r, alloc)});
      const auto heads = model.forward_rows(tape, batch);
      num::Var loss = tape.leaf(num::Tensor::scalar(0.0));
      for (int j = 0; j < 2; ++j) {
        num::Var qc = num::clamp(heads.ctr[static_cast<std::size_t>(j)], 1e-7, 1.0 - 1e-7);
        num::Var term =
            clicks[static_cast<std::size_t>(j)]
                ? num::log_op(qc)
                : num::log_op(num::sub_from_const(1.0, qc));
        loss = num::sub(loss, num::sum(term));
      }
      tape.backward(loss);
    }
    const double h = 1e-5;
    bool ok = true;
    for (const auto& name : model.params().names()) {
      const num::Tensor analytic = model.params().grad(name);
      for (std::int64_t i = 0; i < analytic.size() && ok; ++i) {
        double& slot = model.params().value(name).at(i);
        const double keep = slot;
        slot = keep + h;
        const double up = loss_value();
        slot = keep - h;
        const double down = loss_value();
        slot = keep;
        const double fd = (up - down) / (2 * h);
        const double scale = std::max({1.0, std::abs(fd), std::abs(analytic.at(i))});
        if (std::abs(fd - analytic.at(i)) / scale > 1e-4) ok = false;
      }
      if (!ok) break;
    }
    if (!ok) ++ce_failures;
  }

  // --- reward_loss path through width-4 mu/lambda networks ---
  int reward_failures = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    simgen::MarketConfig market = small_market(2, 2);
    const auto ds =
        simgen::generate_dataset(market, 2, derive_seed(600, trial), "rg-");
    const auto epm_model = epm::EpmModel::init(small_epm_config(2), derive_seed(601, trial));
    aam::MechanismConfig mcfg;
    mcfg.num_positions = 2;
    mcfg.mu_hidden = {4};
    mcfg.lambda_hidden = {4};
    auto model = aam::MechanismModel::init(mcfg, derive_seed(602, trial));
    std::vector<dsm::RequestContext> contexts;
    for (const auto& r : ds.requests)
      contexts.push_back(dsm::make_context(r, epm_model, false));
    const double tau = 0.8;

    auto loss_value = [&]() {
      double acc = 0.0;
      for (const auto& ctx : contexts) {
        const auto scores =
            aam::neural_scores(model, ctx.request, ctx.allocations, ctx.predictions);
        std::vector<double> sw(ctx.allocations.size());
        for (std::size_t k = 0; k < ctx.allocations.size(); ++k) {
          const auto& a = ctx.allocations[k];
          sw[k] = aam::social_welfare(
              scores.mu[static_cast<std::size_t>(a.ad_index - 1)],
              ctx.request.ads[static_cast<std::size_t>(a.ad_index - 1)].bid,
              ctx.predictions[k].pctr[static_cast<std::size_t>(a.ad_position - 1)],
              scores.lambda[k]);
        }
        const auto obj = dsm::allocation_objectives(ctx.request, ctx.allocations,
                                                    ctx.predictions, scores);
        acc += dsm::reward_loss(dsm::winning_probs(sw, tau), obj.rev, obj.gmv, mcfg.alpha);
      }
      return acc;
    };

    model.mu_params().zero_grad();
    model.lambda_params().zero_grad();
    {
      num::Tape tape;
      std::vector<num::Var> losses;
      for (const auto& ctx : contexts) {
        std::vector<num::Var> mu_rows;
        for (int i = 1; i <= ctx.request.num_ads(); ++i)
          mu_rows.push_back(tape.leaf(num::Tensor::vector(
              aam::MechanismModel::mu_features(model.config(), ctx.request, i))));
        num::Var mu_vec = num::reshape(model.mu_forward(tape, num::stack_rows(mu_rows)),
                                       {ctx.request.num_ads()});
        std::vector<num::Var> lam_rows;
        for (std::size_t k = 0; k < ctx.allocations.size(); ++k)
          lam_rows.push_back(tape.leaf(num::Tensor::vector(
              aam::MechanismModel::lambda_features(model.config(), ctx.request,
                                                   ctx.allocations[k], ctx.predictions[k]))));
        num::Var lam_vec =
            num::reshape(model.lambda_forward(tape, num::stack_rows(lam_rows)),
                         {static_cast<std::int64_t>(ctx.allocations.size())});
        std::vector<num::Var> sw;
        std::vector<double> q_at, gmv;
        for (std::size_t k = 0; k < ctx.allocations.size(); ++k) {
          const auto& a = ctx.allocations[k];
          const double bid = ctx.request.ads[static_cast<std::size_t>(a.ad_index - 1)].bid;
          const double q =
              ctx.predictions[k].pctr[static_cast<std::size_t>(a.ad_position - 1)];
          q_at.push_back(q);
          double g = 0.0;
          for (std::size_t j = 0; j < ctx.predictions[k].pctr.size(); ++j)
            g += ctx.predictions[k].pctr[j] * ctx.predictions[k].pgmv_per_click[j];
          gmv.push_back(g);
          sw.push_back(num::add(num::scale(num::index1d(mu_vec, a.ad_index - 1), bid * q),
                                num::index1d(lam_vec, static_cast<std::int64_t>(k))));
        }
        std::vector<num::Var> cf(static_cast<std::size_t>(ctx.request.num_ads()));
        for (int i = 1; i <= ctx.request.num_ads(); ++i) {
          int best = -1;
          for (std::size_t k = 0; k < sw.size(); ++k) {
            if (ctx.allocations[k].ad_index == i) continue;
            if (best < 0 ||
                sw[k].value().at(0) > sw[static_cast<std::size_t>(best)].value().at(0))
              best = static_cast<int>(k);
          }
          cf[static_cast<std::size_t>(i - 1)] = sw[static_cast<std::size_t>(best)];
        }
        std::vector<num::Var> rev;
        for (std::size_t k = 0; k < ctx.allocations.size(); ++k) {
          const auto& a = ctx.allocations[k];
          const double bid = ctx.request.ads[static_cast<std::size_t>(a.ad_index - 1)].bid;
          num::Var payment = num::div(
              num::sub(cf[static_cast<std::size_t>(a.ad_index - 1)],
                       num::index1d(lam_vec, static_cast<std::int64_t>(k))),
              num::scale(num::index1d(mu_vec, a.ad_index - 1), q_at[k]));
          rev.push_back(num::scale(num::clamp(payment, 0.0, bid), q_at[k]));
        }
        num::Var pr = num::softmax1d(num::concat1d(sw), tau);
        num::Tensor ag({static_cast<std::int64_t>(gmv.size())});
        for (std::size_t k = 0; k < gmv.size(); ++k)
          ag.at(static_cast<std::int64_t>(k)) = mcfg.alpha * gmv[k];
        losses.push_back(
            num::neg(num::sum(num::mul(pr, num::add_const_t(num::concat1d(rev), ag)))));
      }
      tape.backward(num::sum(num::concat1d(losses)));
    }

    const double h = 1e-5;
    bool ok = true;
    for (auto* store : {&model.mu_params(), &model.lambda_params()}) {
      for (const auto& name : store->names()) {
        const num::Tensor analytic = store->grad(name);
        for (std::int64_t i = 0; i < analytic.size() && ok; ++i) {
          double& slot = store->value(name).at(i);
          const double keep = slot;
          slot = keep + h;
          const double up = loss_value();
          slot = keep - h;
          const double down = loss_value();
          slot = keep;
          const double fd = (up - down) / (2 * h);
          const double scale = std::max({1.0, std::abs(fd), std::abs(analytic.at(i))});
          if (std::abs(fd - analytic.at(i)) / scale > 1e-3) ok = false;
        }
        if (!ok) break;
      }
      if (!ok) break;
    }
    if (!ok) ++reward_failures;
  }

  const bool pass = ce_failures == 0 && reward_failures == 0;
  report(5, pass,
         "ce_failures=" + std::to_string(ce_failures) +
             " reward_failures=" + std::to_string(reward_failures) + " of 100 trials each");
  CHECK(ce_failures == 0);
  CHECK(reward_failures == 0);
}

TEST_CASE("criterion 6: list-wise beats point-wise on externality data") {
  const auto& exp = shared_experiment();
  std::vector<double> gaps, pcocs;
  for (const auto& s : exp.seeds) {
    gaps.push_back(s.auc_listwise - s.auc_pointwise);
    pcocs.push_back(s.pcoc_listwise);
  }
  const double gap_mean = util::mean(gaps);
  const double pcoc_mean = util::mean(pcocs);
  const bool pass =
      gap_mean >= 0.01 && std::abs(pcoc_mean - 1.0) <= 0.1 && exp.epm_seconds <= 900.0;
  report(6, pass,
         "auc_gap_mean=" + util::fmt_double(gap_mean) +
             " pcoc_mean=" + util::fmt_double(pcoc_mean) +
             " epm_runtime_s=" + util::fmt_double(exp.epm_seconds));
  CHECK(gap_mean >= 0.01);
  CHECK(std::abs(pcoc_mean - 1.0) <= 0.1);
  CHECK(exp.epm_seconds <= 900.0);
}

TEST_CASE("criterion 7: trained mechanism lift over the baselines") {
  const auto& exp = shared_experiment();
  std::vector<double> margin_fixed, miaa_v, vcg_v, dyn_v;
  for (const auto& s : exp.seeds) {
    margin_fixed.push_back(s.obj_miaa - s.obj_gsp_fixed);
    miaa_v.push_back(s.obj_miaa);
    vcg_v.push_back(s.obj_vcg);
    dyn_v.push_back(s.obj_gsp_dynamic);
  }
  const double mean_margin = util::mean(margin_fixed);
  const double std_margin = util::stddev(margin_fixed);
  const bool beats_fixed = mean_margin - std_margin > 0.0;
  const bool weakly_vcg = util::mean(miaa_v) >= util::mean(vcg_v) - 1e-9;
  const bool weakly_dyn = util::mean(miaa_v) >= util::mean(dyn_v) - 1e-9;
  const bool pass = beats_fixed && weakly_vcg && weakly_dyn;
  report(7, pass,
         "margin_vs_gsp_fixed=" + util::fmt_double(mean_margin) + "+-" +
             util::fmt_double(std_margin) + " miaa=" + util::fmt_double(util::mean(miaa_v)) +
             " vcg=" + util::fmt_double(util::mean(vcg_v)) +
             " gsp_dynamic=" + util::fmt_double(util::mean(dyn_v)));
  CHECK(beats_fixed);
  CHECK(weakly_vcg);
  CHECK(weakly_dyn);
}

TEST_CASE("criterion 8: session-recipe fidelity") {
  const double mu2 = avito::simulated_ctr2_mean(0.10, 0.02);
  const double mu6 = avito::simulated_ctr6_mean(0.10, 0.02);
  const bool means_ok = std::abs(mu2 - 0.084) < 1e-12 && std::abs(mu6 - 0.036) < 1e-12 &&
                        mu2 == 0.8 * 0.10 + 0.2 * 0.02 && mu6 == 0.2 * 0.10 + 0.8 * 0.02;

  // Exact corpus rates: click at position 1 every 10th session, at
  // position 7 every 50th.
  std::ostringstream tsv;
  tsv << "ID\tSearchID\tAdID\tPosition\tObjectType\tHistCTR\tIsClick\n";
  long id = 1;
  const int sessions = 1000;
  for (int s = 0; s < sessions; ++s)
    for (int pos : {1, 2, 6, 7, 8}) {
      tsv << id++ << '\t' << 100 + s << '\t' << 9000 + id << '\t' << pos << "\t3\t0.05\t";
      if (pos == 1)
        tsv << (s % 10 == 0 ? 1 : 0);
      else if (pos == 7)
        tsv << (s % 50 == 0 ? 1 : 0);
      tsv << '\n';
    }
  const std::string path = "acceptance_avito.tsv";
  util::write_file(path, tsv.str());
  const auto result = avito::ingest_avito_sessions(path, avito::AvitoConfig{});
  std::remove(path.c_str());

  bool split_ok = result.auction.size() == sessions;
  for (const auto& r : result.auction)
    split_ok = split_ok && r.ads.size() == 2 && r.organic.size() == 3;
  const bool corpus_ok = result.ctr1 == 0.1 && result.ctr7 == 0.02;
  const double got_mu2 = avito::simulated_ctr2_mean(result.ctr1, result.ctr7);
  const double got_mu6 = avito::simulated_ctr6_mean(result.ctr1, result.ctr7);
  const bool derived_ok =
      std::abs(got_mu2 - 0.084) < 1e-12 && std::abs(got_mu6 - 0.036) < 1e-12;

  const bool pass = means_ok && split_ok && corpus_ok && derived_ok;
  report(8, pass,
         "mu2=" + util::fmt_double(got_mu2) + " mu6=" + util::fmt_double(got_mu6) +
             " sessions=" + std::to_string(result.auction.size()));
  CHECK(means_ok);
  CHECK(split_ok);
  CHECK(corpus_ok);
  CHECK(derived_ok);
}

TEST_CASE("criterion 9: byte-identical reruns of every command") {
  const fs::path dir = "acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);
  nlohmann::json j = {
      {"market", {{"n", 2}, {"m", 3}}},
      {"data", {{"train_requests", 100}, {"test_requests", 30}}},
      {"epm", {{"embedding_dim", 4}, {"position_dim", 2}, {"hidden", {16, 8}}}},
      {"pointwise", {{"hidden", {12, 6}}}},
      {"epm_train", {{"epochs", 2}, {"batch_size", 32}}},
      {"mechanism", {{"mu_hidden", {6, 3}}, {"lambda_hidden", {8, 4}}}},
      {"mech_train", {{"epochs", 2}, {"batch_size", 16}}},
      {"eval", {{"audit_grid", 5}, {"audit_sample", 8}, {"ic_grid", 5}}},
      {"seed", 3},
  };
  bool pass = true;
  std::string detail;
  for (const char* run : {"a", "b"}) {
    j["out_dir"] = (dir / run).string();
    const auto cfg_path = (dir / (std::string("cfg_") + run + ".json")).string();
    util::write_file(cfg_path, j.dump(2));
    pass = pass && cli::run({"generate", "--config", cfg_path}) == 0;
    pass = pass && cli::run({"train-epm", "--config", cfg_path}) == 0;
    pass = pass && cli::run({"train-mechanism", "--config", cfg_path}) == 0;
    pass = pass && cli::run({"evaluate", "--config", cfg_path}) == 0;
    pass = pass && cli::run({"audit", "--config", cfg_path}) == 0;
    pass = pass && cli::run({"serve-sim", "--config", cfg_path}) == 0;
  }
  if (pass) {
    for (const auto* f :
         {"dataset/train_requests.jsonl", "dataset/epm_train_display.jsonl",
          "checkpoints/epm.ckpt", "checkpoints/pointwise.ckpt", "checkpoints/mechanism.ckpt",
          "reports/eval_report.csv", "reports/eval_report.json", "reports/model_eval.csv",
          "reports/audit_regret.csv", "reports/audit_summary.json",
          "reports/serve_outcomes.jsonl", "reports/epm_training.csv",
          "reports/mech_training.csv"}) {
      const auto a = util::read_file((dir / "a" / f).string());
      const auto b = util::read_file((dir / "b" / f).string());
      if (a != b) {
        pass = false;
        detail += std::string(" diff:") + f;
      }
    }
  }
  report(9, pass, detail.empty() ? "all artifacts byte-identical" : detail);
  CHECK(pass);
  fs::remove_all(dir);
}

TEST_CASE("criterion 10: GSP invariance vs the learned mechanism's responsiveness") {
  // gsp_dynamic: raising the winner's bid moves neither payment nor position.
  simgen::MarketConfig market = small_market(3, 4);
  const auto epm_model = epm::EpmModel::init(small_epm_config(4), 901);
  const auto pointwise =
      epm::PointwiseModel::init(small_epm_config(4), epm::PointwiseConfig{{16, 8}}, 902);
  auto preds = std::make_shared<bench::PredictionProvider>(epm_model);
  auto pw = std::make_shared<bench::PointwiseProvider>(pointwise, 2);
  bench::GspDynamicMechanism gsp_dynamic(pw, preds, 0.5);

  std::int64_t invariance_breaks = 0;
  const auto gsp_requests = simgen::generate_dataset(market, 300, 95, "inv-").requests;
  for (const auto& r : gsp_requests) {
    const auto before = gsp_dynamic.run(r);
    for (double factor : {1.5, 2.0, 4.0}) {
      auto raised = r;
      raised.ads[static_cast<std::size_t>(before.winner_ad_index - 1)].bid *= factor;
      const auto after = gsp_dynamic.run(raised);
      if (after.winner_ad_index != before.winner_ad_index ||
          after.payment_per_click != before.payment_per_click ||
          after.position != before.position)
        ++invariance_breaks;
    }
  }

  // Learned mechanism: the winner keeps winning when it raises its bid
  // (bid monotonicity), checked across 10k instances.
  std::int64_t monotonicity_breaks = 0;
  std::int64_t instances = 0;
  Rng rng(96);
  for (int n = 2; n <= 5; ++n)
    for (int m = 2; m <= 5; ++m) {
      const auto sub_market = small_market(n, m);
      const auto sub_epm =
          epm::EpmModel::init(small_epm_config(m), 910 + static_cast<std::uint64_t>(n));
      const auto mech = aam::MechanismModel::init(
          small_mech_config(m), 920 + static_cast<std::uint64_t>(m));
      auto sub_preds = std::make_shared<bench::PredictionProvider>(sub_epm);
      bench::MiaaMechanism miaa(mech, sub_preds);
      const auto requests =
          simgen::generate_dataset(sub_market, 625,
                                   derive_seed(97, static_cast<std::uint64_t>(n * 10 + m)),
                                   "mono-")
              .requests;
      for (const auto& r : requests) {
        const auto before = miaa.run(r);
        auto raised = r;
        raised.ads[static_cast<std::size_t>(before.winner_ad_index - 1)].bid *=
            1.0 + rng.uniform(0.05, 3.0);
        const auto after = miaa.run(raised);
        if (after.winner_ad_index != before.winner_ad_index) ++monotonicity_breaks;
        ++instances;
      }
    }

  const bool pass = invariance_breaks == 0 && monotonicity_breaks == 0 && instances >= 10000;
  report(10, pass,
         "gsp_invariance_breaks=" + std::to_string(invariance_breaks) +
             " monotonicity_breaks=" + std::to_string(monotonicity_breaks) +
             " instances=" + std::to_string(instances));
  CHECK(invariance_breaks == 0);
  CHECK(monotonicity_breaks == 0);
  CHECK(instances >= 10000);
}
