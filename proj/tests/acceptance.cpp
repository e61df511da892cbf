// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "airid/training.hpp"
#include "support/composed.hpp"
#include "support/fixtures.hpp"
#include "support/metric_oracle.hpp"
#include "support/op_table.hpp"
#include "support/pipeline.hpp"

using namespace airid;
using namespace airid::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

Outcome gradient_correctness() {
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_name;
  std::size_t checks = 0;
  std::mt19937_64 rng(20240611);
  for (const auto& op : op_table()) {
    for (int rep = 0; rep < 6; ++rep) {
      Case c = op.build(rng);
      const auto r = check_gradients(c.params, c.loss);
      ++checks;
      if (r.max_relative_error > worst) worst = r.max_relative_error, worst_name = op.name;
    }
  }
  for (std::uint64_t seed : {11u, 12u}) {
    for (const auto& named : composed_objective_checks(seed)) {
      ++checks;
      if (named.result.max_relative_error > worst) worst = named.result.max_relative_error, worst_name = named.name;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 1e-4 && secs < 60,
          std::to_string(checks) + " checks, max relative error " + fmt(worst) + " (" + worst_name + "), " +
              fmt(secs) + " s"};
}

Outcome analytic_losses() {
  auto half = [](Index n) { return Tensor<double>(Mat::Constant(n, 1, 0.5)); };
  double worst = std::fabs(adv_d_loss(half(16), half(16)).item() - 2 * std::log(2.0));
  worst = std::max(worst, std::fabs(adv_g_loss(half(16)).item() - std::log(2.0)));
  for (int k : {2, 10, 100}) {
    const std::vector<int> targets{0, k - 1, k / 2};
    const double ce = softmax_cross_entropy(Tensor<double>(Mat::Constant(3, k, 0.3)), std::span<const int>(targets)).item();
    worst = std::max(worst, std::fabs(ce - std::log(static_cast<double>(k))));
  }
  return {worst < 1e-9, "max deviation " + fmt(worst)};
}

Outcome metric_oracles() {
  const auto start = std::chrono::steady_clock::now();
  int ranking_bad = 0, cmc_bad = 0;
  double worst_map = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto t = run_metric_trial(seed);
    ranking_bad += t.ranking_matches ? 0 : 1;
    cmc_bad += t.cmc_matches ? 0 : 1;
    worst_map = std::max(worst_map, t.map_error);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ranking_bad == 0 && cmc_bad == 0 && worst_map <= 1e-12 && secs < 60,
          "100 instances, ranking mismatches " + std::to_string(ranking_bad) + ", CMC mismatches " +
              std::to_string(cmc_bad) + ", max mAP error " + fmt(worst_map) + ", " + fmt(secs) + " s"};
}

// Frozen protocol: default desk dataset, 30 pretraining and 60 joint epochs,
// training seeds 1 to 3, all other settings at their defaults.
Outcome directional_ablation() {
  const auto start = std::chrono::steady_clock::now();
  const auto split = make_split(AttributeSchema::desk_default(), SplitOptions{});
  const double chance = 1.0 / static_cast<double>(split.queries.size());
  const std::vector<Variant> variants{Variant::kFull, Variant::kNoAdv, Variant::kNoSc, Variant::kMmd, Variant::kCoral};
  std::map<Variant, std::vector<EvaluationReport>> reports;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TrainConfig c;
    c.seed = seed;
    c.pretrain_epochs = 30;
    c.joint_epochs = 60;
    const auto pre = pretrain<float>(split, c);
    std::cout << "  seed " << seed << ':';
    for (Variant v : variants) {
      auto vc = c;
      vc.variant = v;
      reports[v].push_back(run_experiment(split, vc, pre.checkpoint).report);
      const auto& r = reports[v].back();
      std::cout << ' ' << variant_name(v) << ' ' << fmt(r.rank1) << '/' << fmt(r.mean_ap) << std::flush;
    }
    std::cout << "  (rank1/mAP)" << std::endl;
  }
  auto mean_rank1 = [&](Variant v) {
    double s = 0;
    for (const auto& r : reports[v]) s += r.rank1;
    return s / static_cast<double>(reports[v].size());
  };
  double no_sc_worst = 0;
  for (const auto& r : reports[Variant::kNoSc]) no_sc_worst = std::max(no_sc_worst, r.rank1);
  int full_wins = 0;
  for (std::size_t i = 0; i < 3; ++i) full_wins += reports[Variant::kFull][i].rank1 > reports[Variant::kNoAdv][i].rank1;
  const bool a = no_sc_worst <= 2 * chance;
  const bool b = full_wins >= 2;
  const bool c = mean_rank1(Variant::kMmd) > mean_rank1(Variant::kNoAdv) &&
                 mean_rank1(Variant::kCoral) > mean_rank1(Variant::kNoAdv);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {a && b && c && secs < 600,
          std::string("(a) ") + (a ? "pass" : "fail") + ": no-sc rank1 max " + fmt(no_sc_worst) + " vs 2x chance " +
              fmt(2 * chance) + "; (b) " + (b ? "pass" : "fail") + ": full > no-adv in " + std::to_string(full_wins) +
              "/3 seeds; (c) " + (c ? "pass" : "fail") + ": mean rank1 mmd " + fmt(mean_rank1(Variant::kMmd)) +
              ", coral " + fmt(mean_rank1(Variant::kCoral)) + ", no-adv " + fmt(mean_rank1(Variant::kNoAdv)) +
              "; " + fmt(secs) + " s"};
}

template <typename S>
Snapshot<S> producers(JointModel<S>& m) {
  auto out = snapshot(m, "generator");
  out.merge(snapshot(m, "image"));
  out.merge(snapshot(m, "classifier"));
  return out;
}

template <typename S>
std::vector<Batch<S>> trace_batches(const TrainingData<S>& data, const TrainConfig& c, std::size_t count) {
  std::vector<Batch<S>> out;
  for (int epoch = 0; out.size() < count; ++epoch) {
    for (const auto& rows : epoch_batches(data.size(), c.batch_size, c.seed, kJointStage, epoch)) {
      if (out.size() < count) out.push_back(data.batch(rows));
    }
  }
  return out;
}

Outcome gradient_routing() {
  const auto split = tiny_split();
  const auto model = model_config_for(split, tiny_architecture());
  const auto data = TrainingData<float>::from_split(split);
  int violations = 0, steps = 0;
  for (Variant v : {Variant::kFull, Variant::kNoSc, Variant::kImg2a}) {
    JointModel<float> m(model, 2);
    const auto c = tiny_train_config(v);
    Trainer<float> t(m, c);
    for (const auto& batch : trace_batches(data, c, 10)) {
      const auto p0 = producers(m);
      const auto d0 = snapshot(m, "discriminator");
      t.discriminator_step(batch);
      const auto d1 = snapshot(m, "discriminator");
      violations += !bit_equal(p0, producers(m)) + !all_changed(d0, d1);
      t.generator_step(batch);
      violations += !bit_equal(d1, snapshot(m, "discriminator")) + !all_changed(p0, producers(m));
      steps += 2;
    }
  }
  return {violations == 0, std::to_string(steps) + " steps over full, no-sc and img2a, " +
                               std::to_string(violations) + " violations"};
}

Outcome determinism() {
  TempDir a("accept_a"), b("accept_b");
  write_json(a / "config.json", small_run_config());
  write_json(b / "config.json", small_run_config());
  const auto ra = run_pipeline(a.path(), a / "config.json");
  const auto rb = run_pipeline(b.path(), b / "config.json");
  if (ra.code != 0 || rb.code != 0) return {false, "pipeline failed: " + ra.err + rb.err};
  const auto ma = read_json(a / "run/report.json").at("metrics");
  const auto mb = read_json(b / "run/report.json").at("metrics");
  return {ma.dump() == mb.dump(), "metrics " + ma.dump() + " vs " + mb.dump()};
}

Outcome checkpoint_round_trip() {
  const auto split = tiny_split();
  const auto model = model_config_for(split, tiny_architecture());
  const auto data = TrainingData<float>::from_split(split);
  const auto c = tiny_train_config(Variant::kFull);
  const auto batches = trace_batches(data, c, 8);

  JointModel<float> a(model, 7);
  Trainer<float> ta(a, c);
  for (std::size_t i = 0; i < 3; ++i) ta.joint_step(batches[i]);
  TempDir dir("accept_ckpt");
  write_checkpoint(dir / "mid.airc", ta.checkpoint("joint", 0));

  JointModel<float> b(model, 99);
  Trainer<float> tb(b, c);
  tb.restore(read_checkpoint(dir / "mid.airc"));
  for (std::size_t i = 3; i < 8; ++i) {
    ta.joint_step(batches[i]);
    tb.joint_step(batches[i]);
  }
  const bool params = bit_equal(snapshot(a), snapshot(b));
  const bool state = encode_checkpoint(ta.checkpoint("joint", 0)) == encode_checkpoint(tb.checkpoint("joint", 0));
  return {params && state, std::string("parameters ") + (params ? "identical" : "differ") +
                               ", full trainer state " + (state ? "identical" : "differs")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 gradient correctness", gradient_correctness},
      {"2 analytic loss values", analytic_losses},
      {"3 metric oracle equivalence", metric_oracles},
      {"4 directional ablation", directional_ablation},
      {"5 gradient routing", gradient_routing},
      {"6 pipeline determinism", determinism},
      {"7 checkpoint round trip", checkpoint_round_trip},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
