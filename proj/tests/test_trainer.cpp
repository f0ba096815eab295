// SPDX-License-Identifier: MIT
#include <cfloat>
#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "femlab/errors.hpp"
#include "femlab/policy.hpp"
#include "femlab/presets.hpp"
#include "femlab/rng.hpp"
#include "femlab/samplers.hpp"
#include "femlab/trainer.hpp"

using namespace femlab;

namespace {

struct CapturedIteration {
  std::vector<SampleRecord> records;
  std::vector<std::size_t> update_order;
  double lr = 0.0;
  std::vector<double> params_after;
};

std::vector<CapturedIteration> run_and_capture(const Dataset& ds,
                                               const TaskShape& shape,
                                               const PolicyParams& init,
                                               const TrainConfig& cfg) {
  std::vector<CapturedIteration> captured;
  const IterationObserver observer = [&](const IterationTrace& trace) {
    CapturedIteration c;
    c.records = trace.records;
    c.update_order = trace.update_order;
    c.lr = trace.lr;
    c.params_after = trace.params_after.flatten();
    captured.push_back(std::move(c));
  };
  (void)fem_train(ds, shape, init, cfg, observer);
  return captured;
}

bool records_equal(const std::vector<SampleRecord>& a,
                   const std::vector<SampleRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].z_hat != b[i].z_hat || a[i].y_hat != b[i].y_hat ||
        a[i].reward != b[i].reward ||
        a[i].attempts_used != b[i].attempts_used ||
        a[i].datapoint_index != b[i].datapoint_index)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("learning-rate schedule hits both endpoints exactly") {
  TrainConfig cfg;
  cfg.iterations = 10;
  cfg.lr_start = 0.09;
  cfg.lr_end = 0.018;
  CHECK(lr_at(cfg, 1) == 0.09);
  CHECK(lr_at(cfg, 10) == 0.018);
  CHECK(lr_at(cfg, 5) == doctest::Approx(0.09 + (0.018 - 0.09) * 4.0 / 9.0)
                             .epsilon(1e-15));

  cfg.iterations = 1;
  CHECK(lr_at(cfg, 1) == 0.09);

  cfg.iterations = 3;
  cfg.lr_start = 0.1;
  cfg.lr_end = 0.05;
  CHECK(lr_at(cfg, 1) == 0.1);
  CHECK(lr_at(cfg, 3) == 0.05);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg.iterations = 5;
  cfg.lr_end = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg.lr_end = 0.2;  // above lr_start
  cfg.lr_start = 0.1;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg.lr_end = 0.1;  // constant schedule is allowed
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("training is bit-reproducible") {
  const TaskShape shape{3, 2, 3, true};
  const Dataset ds = generate_dataset(shape, 40, 60, 31);
  const PolicyParams init = make_base_policy(shape);
  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.scheme = SchemeSpec::pps(0.1);
  cfg.seed = 5;

  const auto [params_a, metrics_a] = fem_train(ds, shape, init, cfg);
  const auto [params_b, metrics_b] = fem_train(ds, shape, init, cfg);
  CHECK(params_a.flatten() == params_b.flatten());
  REQUIRE(metrics_a.size() == metrics_b.size());
  for (std::size_t k = 0; k < metrics_a.size(); ++k) {
    CHECK(metrics_a[k].iteration == metrics_b[k].iteration);
    CHECK(metrics_a[k].test_accuracy == metrics_b[k].test_accuracy);
    CHECK(metrics_a[k].data_utilization == metrics_b[k].data_utilization);
    CHECK(metrics_a[k].mean_rationale_len_accepted ==
          metrics_b[k].mean_rationale_len_accepted);
    CHECK(metrics_a[k].mean_rationale_len_decoded ==
          metrics_b[k].mean_rationale_len_decoded);
    CHECK(metrics_a[k].mean_attempts == metrics_b[k].mean_attempts);
    CHECK(metrics_a[k].train_marginal_loglik ==
          metrics_b[k].train_marginal_loglik);
  }
}

TEST_CASE("observer trace replays to bit-identical parameters") {
  // Reconstructing every iteration from its trace (records, update order,
  // learning rate) must land on exactly the parameters the trainer reports:
  // reward-0 records contribute nothing and accepted records apply
  // incremental gradients in the given order.
  const TaskShape shape{3, 2, 3, true};
  const Dataset ds = generate_dataset(shape, 25, 10, 37);
  const PolicyParams init = make_base_policy(shape);
  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.scheme = SchemeSpec::rs(2);
  cfg.seed = 11;

  const auto captured = run_and_capture(ds, shape, init, cfg);
  REQUIRE(captured.size() == 3);

  PolicyParams replay = init;
  for (const CapturedIteration& it : captured) {
    for (const std::size_t idx : it.update_order) {
      const SampleRecord& rec = it.records[idx];
      if (rec.reward == 0) continue;
      const std::vector<double> g =
          grad_log_joint(replay, shape, ds.train[rec.datapoint_index].x,
                         rec.z_hat, rec.y_hat);
      std::vector<double> flat = replay.flatten();
      for (std::size_t j = 0; j < flat.size(); ++j)
        flat[j] += it.lr * g[j];
      replay = PolicyParams::from_flat(replay.vocab, flat);
    }
    CHECK(replay.flatten() == it.params_after);
  }
}

TEST_CASE("sampling happens at the frozen snapshot, not mid-update") {
  // Changing the M-step update order (shuffle on/off) must not change what
  // the E-step drew in the first iteration.
  const TaskShape shape{3, 2, 3, true};
  const Dataset ds = generate_dataset(shape, 30, 5, 41);
  const PolicyParams init = make_base_policy(shape);

  TrainConfig shuffled;
  shuffled.iterations = 1;
  shuffled.scheme = SchemeSpec::pps(0.2);
  shuffled.seed = 13;
  shuffled.shuffle_updates = true;

  TrainConfig ordered = shuffled;
  ordered.shuffle_updates = false;

  const auto a = run_and_capture(ds, shape, init, shuffled);
  const auto b = run_and_capture(ds, shape, init, ordered);
  REQUIRE(a.size() == 1);
  REQUIRE(b.size() == 1);
  CHECK(records_equal(a[0].records, b[0].records));
  // And the unshuffled order is the identity permutation.
  for (std::size_t i = 0; i < b[0].update_order.size(); ++i)
    CHECK(b[0].update_order[i] == i);
}

TEST_CASE("freezing the gradient point changes only the M-step") {
  const TaskShape shape{3, 2, 3, true};
  const Dataset ds = generate_dataset(shape, 30, 5, 43);
  const PolicyParams init = make_base_policy(shape);

  TrainConfig moving;
  moving.iterations = 1;
  moving.scheme = SchemeSpec::pps(0.1);
  moving.seed = 17;

  TrainConfig frozen = moving;
  frozen.freeze_grad_point = true;

  const auto a = run_and_capture(ds, shape, init, moving);
  const auto b = run_and_capture(ds, shape, init, frozen);
  CHECK(records_equal(a[0].records, b[0].records));
  CHECK(a[0].update_order == b[0].update_order);
  // The applied updates differ once more than one record lands on the same
  // row, so the resulting parameters differ.
  CHECK(a[0].params_after != b[0].params_after);

  // Frozen-point replay: all gradients evaluated at the snapshot (init).
  PolicyParams replay = init;
  std::vector<double> flat = replay.flatten();
  for (const std::size_t idx : b[0].update_order) {
    const SampleRecord& rec = b[0].records[idx];
    if (rec.reward == 0) continue;
    const std::vector<double> g = grad_log_joint(
        init, shape, ds.train[rec.datapoint_index].x, rec.z_hat, rec.y_hat);
    for (std::size_t j = 0; j < flat.size(); ++j) flat[j] += b[0].lr * g[j];
  }
  CHECK(flat == b[0].params_after);
}

TEST_CASE("an iteration with no accepted samples leaves parameters unchanged") {
  const TaskShape shape{3, 2, 2, true};
  const Dataset ds = generate_dataset(shape, 30, 10, 47);
  const PolicyParams init = make_never_correct_params(shape);
  TrainConfig cfg;
  cfg.iterations = 2;
  cfg.scheme = SchemeSpec::rs(1);
  cfg.seed = 19;

  const auto [final_params, metrics] = fem_train(ds, shape, init, cfg);
  CHECK(final_params.flatten() == init.flatten());
  for (const IterationMetrics& m : metrics) {
    CHECK(m.data_utilization == 0.0);
    CHECK(m.mean_rationale_len_accepted == 0.0);  // sentinel: nothing accepted
    CHECK(m.mean_attempts == 1.0);
  }
}

TEST_CASE("one iteration on one datapoint unrolls by hand") {
  const TaskShape shape{3, 2, 3, true};
  Dataset ds;
  ds.train = {Datapoint{{1, 2}, 0}};
  ds.test = {Datapoint{{1, 2}, 0}};
  const PolicyParams init = make_base_policy(shape);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.scheme = SchemeSpec::exact_posterior();
  cfg.seed = 23;
  cfg.lr_start = 0.07;
  cfg.lr_end = 0.07;

  // The E-step stream for iteration 1, datapoint 0 is fixed by contract.
  Rng rng(derive_stream(cfg.seed, 1, 1, 0));
  const SampleRecord expected_rec =
      draw_sample(init, shape, ds.train[0], cfg.scheme, rng);
  REQUIRE(expected_rec.reward == 1);

  std::vector<double> expected = init.flatten();
  const std::vector<double> g =
      grad_log_joint(init, shape, ds.train[0].x, expected_rec.z_hat,
                     expected_rec.y_hat);
  for (std::size_t j = 0; j < expected.size(); ++j)
    expected[j] += 0.07 * g[j];

  const auto captured = run_and_capture(ds, shape, init, cfg);
  REQUIRE(captured.size() == 1);
  REQUIRE(captured[0].records.size() == 1);
  CHECK(captured[0].records[0].z_hat == expected_rec.z_hat);
  CHECK(captured[0].records[0].y_hat == expected_rec.y_hat);
  CHECK(captured[0].lr == 0.07);
  CHECK(captured[0].params_after == expected);
}

TEST_CASE("divergence aborts with the iteration and datapoint named") {
  const TaskShape shape{2, 1, 1, true};
  Dataset ds;
  for (int i = 0; i < 20; ++i) ds.train.push_back(Datapoint{{i % 2}, i % 2});
  ds.test = {Datapoint{{0}, 0}};
  const PolicyParams init = PolicyParams::zeros(2);
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.scheme = SchemeSpec::exact_posterior();
  cfg.seed = 29;
  cfg.lr_start = DBL_MAX;
  cfg.lr_end = DBL_MAX;
  cfg.freeze_grad_point = true;  // updates accumulate at full magnitude

  try {
    (void)fem_train(ds, shape, init, cfg);
    FAIL("expected TrainingDiverged");
  } catch (const TrainingDiverged& e) {
    const std::string msg = e.what();
    CHECK(msg.find("iteration 1") != std::string::npos);
    CHECK(msg.find("datapoint") != std::string::npos);
  }
}

TEST_CASE("evaluate reports exact accuracy for the optimal policy") {
  const TaskShape shape{5, 4, 4, true};
  const PolicyParams star = make_optimal_params(shape);
  const Dataset ds = generate_dataset(shape, 1, 300, 53);
  const auto [accuracy, mean_len] = evaluate(star, shape, ds.test);
  CHECK(accuracy == 1.0);
  CHECK(mean_len == 4.0);
}

TEST_CASE("utilization is the mean reward of a record batch") {
  std::vector<SampleRecord> records(4);
  records[0].reward = 1;
  records[1].reward = 0;
  records[2].reward = 1;
  records[3].reward = 1;
  CHECK(utilization(records) == 0.75);
  CHECK_THROWS_AS((void)utilization({}), ContractViolation);
}
