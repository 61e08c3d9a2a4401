#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dyndta/error.hpp"
#include "dyndta/train_eval.hpp"
#include "support/synthetic.hpp"

using namespace dyndta;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::InvalidArgument;
}

ModelParams single(double w0) {
  ModelParams p;
  p.add("w", Tensor::from({1}, {w0}, true));
  return p;
}

TrainConfig quick_train(std::size_t epochs = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 8;
  t.micro_batch = 4;
  t.seed = 7;
  return t;
}

ModelConfig tiny_model() {
  auto c = testing::small_model_config();
  c.embed_dim = 8;
  c.attention_heads = 2;
  c.head_hidden = {16};
  c.fusion_dim = 8;
  return c;
}

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("adam examples") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;

  SUBCASE("zero gradient leaves parameters unchanged and advances the step") {
    auto p = single(1.5);
    auto s = make_adam_state(p);
    Tensor w = p.get("w");
    w.mutable_grad()[0] = 0.0;
    adam_step(p, s, cfg);
    CHECK(p.get("w")[0] == 1.5);
    CHECK(s.step == 1);
  }

  SUBCASE("first step moves by learning_rate against the gradient sign") {
    ModelParams p;
    p.add("w", Tensor::from({4}, {0, 0, 0, 0}, true));
    auto s = make_adam_state(p);
    Tensor w = p.get("w");
    const std::vector<double> g = {3.0, -0.02, 1e-3, -250.0};
    for (std::size_t i = 0; i < 4; ++i) w.mutable_grad()[i] = g[i];
    adam_step(p, s, cfg);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(p.get("w")[i] == doctest::Approx(-cfg.learning_rate * (g[i] > 0 ? 1 : -1)).epsilon(1e-4));
  }

  SUBCASE("scalar descent on (w-3)^2") {
    auto p = single(0.0);
    auto s = make_adam_state(p);
    TrainConfig c;
    c.learning_rate = 0.1;
    for (int i = 0; i < 200; ++i) {
      p.zero_grad();
      Tape tape;
      const Tensor d = add(p.get("w"), Tensor::from({1}, {-3.0}));
      tape.backward(sum(mul(d, d)));
      adam_step(p, s, c);
    }
    CHECK(std::abs(p.get("w")[0] - 3.0) < 0.05);
  }

  SUBCASE("rescaling the loss keeps the step-1 sign pattern") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> x(16), g(16);
    for (auto& v : x) v = u(rng);
    for (double factor : {1e-3, 1.0, 250.0}) {
      ModelParams p;
      p.add("w", Tensor::from({16}, x, true));
      auto s = make_adam_state(p);
      {
        Tape tape;
        const Tensor w = p.get("w");
        tape.backward(scale(sum(mul(mul(w, w), w)), factor));
      }
      adam_step(p, s, cfg);
      for (std::size_t i = 0; i < 16; ++i) {
        const double moved = p.get("w")[i] - x[i];
        if (factor == 1e-3) g[i] = moved;
        CHECK((moved > 0) == (g[i] > 0));
      }
    }
  }

  SUBCASE("missing gradient") {
    auto p = single(1.0);
    auto s = make_adam_state(p);
    CHECK(code_of([&] { adam_step(p, s, cfg); }) == ErrorCode::MissingGradient);
  }
}

TEST_CASE("rmse and pearson examples") {
  const std::vector<double> y = {1, 2, 3, 4, 5.5};
  CHECK(rmse(y, y) == 0.0);
  CHECK(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == doctest::Approx(3.5355339).epsilon(1e-7));
  std::vector<double> yh = {1.5, 1.0, 3.3, 4.4, 5.0}, yh3(5);
  for (std::size_t i = 0; i < 5; ++i) yh3[i] = y[i] + 3.0 * (yh[i] - y[i]);
  CHECK(rmse(y, yh3) == doctest::Approx(3.0 * rmse(y, yh)).epsilon(1e-14));
  CHECK(pearson(y, y) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<double> neg(5), aff(5);
  for (std::size_t i = 0; i < 5; ++i) {
    neg[i] = -y[i];
    aff[i] = 2 * y[i] + 7;
  }
  CHECK(std::abs(pearson(y, neg) + 1.0) <= 1e-12);
  CHECK(std::abs(pearson(y, aff) - 1.0) <= 1e-12);
  CHECK(code_of([] { rmse(std::vector<double>{1}, std::vector<double>{1, 2}); }) == ErrorCode::LengthMismatch);
  CHECK(code_of([] { pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }) ==
        ErrorCode::ZeroVariance);
  CHECK(code_of([] { rmse(std::vector<double>{}, std::vector<double>{}); }) == ErrorCode::EmptyInput);
}

TEST_CASE("metrics match long-double brute force on 1000 random pairs") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(-20, 20);
  std::uniform_int_distribution<int> len(2, 300);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> y(static_cast<std::size_t>(len(rng))), p(y.size());
    for (auto& v : y) v = u(rng);
    for (auto& v : p) v = u(rng);
    long double sq = 0, my = 0, mp = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      sq += (static_cast<long double>(p[i]) - y[i]) * (static_cast<long double>(p[i]) - y[i]);
      my += y[i];
      mp += p[i];
    }
    my /= y.size();
    mp /= y.size();
    long double cov = 0, vy = 0, vp = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      cov += (y[i] - my) * (p[i] - mp);
      vy += (y[i] - my) * (y[i] - my);
      vp += (p[i] - mp) * (p[i] - mp);
    }
    CHECK(std::abs(rmse(y, p) - static_cast<double>(std::sqrt(sq / y.size()))) <= 1e-12);
    CHECK(std::abs(pearson(y, p) - static_cast<double>(cov / std::sqrt(vy * vp))) <= 1e-12);
  }
}

TEST_CASE("config text round-trip and mean_std") {
  TrainConfig t;
  CHECK(t.epochs == 1000);
  CHECK(t.batch_size == 512);
  CHECK(t.learning_rate == 5e-4);
  t.patience = 4;
  t.seed = 99;
  KeyValues kv = parse_key_values(to_text(t));
  CHECK(train_config_from(kv) == t);
  KeyValues bad = parse_key_values("learning_rate = 2");
  CHECK(code_of([&] { train_config_from(bad); }) == ErrorCode::InvalidValue);

  const std::vector<double> v = {1, 2, 3, 4};
  const auto [m, s] = mean_std(v);
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("normalization with a degenerate training range") {
  NormalizationStats s;
  s.min = {1, 5, 0, 0};
  s.max = {3, 5, 1, 1};
  const auto n = normalize_for_model({2, 5, 0.5, 2}, s);
  CHECK(n == std::array<double, 4>{0.5, 0.0, 0.5, 1.0});
}

TEST_CASE("training contracts") {
  const auto data = encode_dataset(testing::synthetic_dataset(12, 5), tiny_model());
  std::vector<std::size_t> idx(12);
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  SUBCASE("zero learning rate keeps the loss curve constant") {
    auto t = quick_train(3);
    t.learning_rate = 0.0;
    const auto r = train(data, idx, tiny_model(), t);
    REQUIRE(r.loss_curve.size() == 3);
    CHECK(r.loss_curve[1] == r.loss_curve[0]);
    CHECK(r.loss_curve[2] == r.loss_curve[0]);
    CHECK(r.steps == 6);
  }

  SUBCASE("same seed gives identical curves and parameters") {
    const auto a = train(data, idx, tiny_model(), quick_train(3));
    const auto b = train(data, idx, tiny_model(), quick_train(3));
    CHECK(a.loss_curve == b.loss_curve);
    for (std::size_t i = 0; i < a.params.size(); ++i)
      CHECK(vals(a.params.entries()[i].second) == vals(b.params.entries()[i].second));
    auto other = quick_train(3);
    other.seed = 8;
    CHECK(train(data, idx, tiny_model(), other).loss_curve != a.loss_curve);
  }

  SUBCASE("micro-batching does not change the result") {
    auto whole = quick_train(2);
    whole.micro_batch = 8;
    auto split = quick_train(2);
    split.micro_batch = 3;
    const auto a = train(data, idx, tiny_model(), whole);
    const auto b = train(data, idx, tiny_model(), split);
    for (std::size_t e = 0; e < 2; ++e) CHECK(a.loss_curve[e] == doctest::Approx(b.loss_curve[e]).epsilon(1e-9));
  }

  SUBCASE("early stopping keeps the best validation parameters") {
    auto t = quick_train(30);
    t.patience = 2;
    t.learning_rate = 0.05;
    const std::vector<std::size_t> tr(idx.begin(), idx.begin() + 8), va(idx.begin() + 8, idx.end());
    const auto r = train(data, tr, tiny_model(), t, va);
    CHECK(r.validation_curve.size() == r.epochs_run);
    CHECK(r.epochs_run <= 30);
  }
}

TEST_CASE("cross_validate protocol") {
  const auto model = tiny_model();
  const auto data = encode_dataset(testing::synthetic_dataset(23, 9), model);
  const auto t = quick_train(2);
  const auto report = cross_validate(data, model, t);
  REQUIRE(report.folds.size() == 5);
  std::vector<double> rm, rr;
  std::multiset<std::size_t> seen;
  for (const auto& f : report.folds) {
    rm.push_back(f.rmse);
    rr.push_back(f.pearson);
    CHECK(f.train_size + f.test_size == 23);
    CHECK(f.y.size() == f.test_size);
    CHECK(f.rmse == rmse(f.y, f.y_hat));
    seen.insert(f.test_indices.begin(), f.test_indices.end());
  }
  CHECK(seen.size() == 23);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 23);
  double mean = 0;
  for (double v : rm) mean += v / 5.0;
  CHECK(std::abs(mean - report.rmse_mean) <= 1e-12);
  double ss = 0;
  for (double v : rm) ss += (v - report.rmse_mean) * (v - report.rmse_mean);
  CHECK(std::abs(std::sqrt(ss / 4.0) - report.rmse_std) <= 1e-12);

  const auto again = cross_validate(data, model, t);
  for (std::size_t f = 0; f < 5; ++f) CHECK(again.folds[f].y_hat == report.folds[f].y_hat);

  CvOptions par;
  par.parallel_folds = true;
  const auto parallel = cross_validate(data, model, t, par);
  for (std::size_t f = 0; f < 5; ++f) CHECK(parallel.folds[f].y_hat == report.folds[f].y_hat);

  std::ostringstream out;
  write_fold_table(out, report);
  const std::string table = out.str();
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
}

TEST_CASE("test-fold values never reach training statistics or parameters") {
  const auto model = tiny_model();
  const auto base = encode_dataset(testing::synthetic_dataset(15, 21), model);
  const auto t = quick_train(2);
  const auto reference = cross_validate(base, model, t);

  // Plant an extreme descriptor and target in one record; it belongs to
  // exactly one test fold.
  const std::size_t sentinel = 6;
  auto planted = base;
  planted.descriptors[sentinel] = {1e6, -1e6, 1e6, -1e6};
  planted.targets[sentinel] = 1e4;
  const auto report = cross_validate(planted, model, t);

  std::size_t holding = 0;
  for (const auto& f : report.folds) {
    const bool in_test = std::find(f.test_indices.begin(), f.test_indices.end(), sentinel) != f.test_indices.end();
    const auto& ref = reference.folds[f.fold];
    if (in_test) {
      ++holding;
      CHECK(f.stats.max[0] < 1e6);
      CHECK(f.stats.min[1] > -1e6);
      CHECK(f.stats.max == ref.stats.max);
      CHECK(f.stats.min == ref.stats.min);
      CHECK(f.loss_curve == ref.loss_curve);
    } else {
      CHECK(f.stats.max[0] == 1e6);
    }
  }
  CHECK(holding == 1);
}

TEST_CASE("ablation and sweep harness") {
  const auto base = tiny_model();
  const auto comps = component_ablations(base);
  REQUIRE(comps.size() == 6);
  CHECK(comps[0].name == "w/o Dilated");
  CHECK_FALSE(comps[0].config.dilated);
  CHECK(comps[0].config.conv_dilation(2) == 1);
  CHECK(comps[1].config.descriptor_mask == std::array<bool, 4>{true, true, false, false});
  CHECK(comps[4].config.descriptor_mask == std::array<bool, 4>{false, true, true, true});
  CHECK(comps[5].config == base);

  ModelConfig all_masked = base;
  all_masked.descriptor_mask = {true, true, true, true};
  auto p = init_params(all_masked, 1);
  const auto zero_in = vector_encoder({0, 0, 0, 0}, p, all_masked);
  CHECK(vals(vector_encoder({0.3, 0.9, 0.1, 1.0}, p, all_masked)) == vals(zero_in));

  const auto fusions = fusion_ablations(base);
  REQUIRE(fusions.size() == 5);
  CHECK(fusions[3].name == "Hadamard product");
  CHECK(fusions[4].config.fusion == FusionVariant::Tfn);

  CHECK(sweep_grid(SweepParameter::P) == std::vector<double>{0.1, 0.2, 0.3, 0.4});
  CHECK(sweep_grid(SweepParameter::D) == std::vector<double>{2, 4, 6, 8});
  CHECK(sweep_grid(SweepParameter::H) == std::vector<double>{2, 4, 8, 16});
  CHECK(sweep_grid(SweepParameter::L) == std::vector<double>{1, 3, 5, 7});
  ModelConfig d64;
  for (double h : sweep_grid(SweepParameter::H)) CHECK(apply_sweep_value(d64, SweepParameter::H, h).attention_heads == h);
  CHECK(code_of([&] { apply_sweep_value(base, SweepParameter::H, 16); }) == ErrorCode::InvalidValue);
  CHECK(code_of([&] { apply_sweep_value(base, SweepParameter::P, 1.0); }) == ErrorCode::InvalidValue);
  CHECK(code_of([&] { apply_sweep_value(base, SweepParameter::L, 2.5); }) == ErrorCode::InvalidValue);
  CHECK(code_of([] { parse_sweep_parameter("Q"); }) == ErrorCode::InvalidValue);
  CHECK(parse_sweep_parameter("d") == SweepParameter::D);

  const auto data = encode_dataset(testing::synthetic_dataset(10, 2), base);
  const auto t = quick_train(1);
  const auto one = sweep(data, base, SweepParameter::P, {0.3}, t);
  REQUIRE(one.size() == 1);
  CHECK(one[0].configuration == "P=0.3");
  const auto plain = cross_validate(data, apply_sweep_value(base, SweepParameter::P, 0.3), t);
  CHECK(one[0].report.rmse_mean == plain.rmse_mean);
  CHECK(one[0].report.r_mean == plain.r_mean);

  std::ostringstream out;
  write_results_table(out, one);
  CHECK(out.str().rfind("configuration,rmse_mean,rmse_std,r_mean,r_std\nP=0.3,", 0) == 0);
}
