// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "s2ag/data.hpp"
#include "s2ag/error.hpp"
#include "s2ag/metrics.hpp"
#include "s2ag/pipeline.hpp"
#include "s2ag/training.hpp"
#include "test_util.hpp"

using namespace s2ag;
using namespace s2ag::diff;

namespace {

Dataset tiny_dataset(std::size_t records = 8) {
  SyntheticConfig sc;
  sc.speakers = 2;
  sc.records = records;
  sc.frames = 6;
  sc.sample_rate = 2000.0;
  sc.seed = 5;
  return generate_synthetic(sc);
}

ModelConfig tiny_model(const Dataset& ds) {
  ModelConfig c = model_config_for(ds);
  c.dims.mfcc = 4;
  c.dims.text = 4;
  c.dims.style = 3;
  c.dims.affective_level1 = 3;
  c.dims.affective_level2 = 3;
  c.dims.affective = 3;
  c.dims.generator_hidden = 8;
  c.dims.discriminator_hidden = 8;
  return c;
}

std::vector<std::size_t> all(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

Tensor values(std::initializer_list<double> v) {
  Tensor t({v.size()});
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

}  // namespace

TEST_CASE("huber penalty on hand-worked residuals") {
  Graph g;
  const Var target = g.constant(values({0.0, 0.0, 0.0, 0.0}));
  const Var pred = g.constant(values({0.5, -0.5, 3.0, -2.0}));
  // 0.125, 0.125, 2.5, 1.5
  CHECK(huber_loss(target, pred, 1.0).value()[0] == doctest::Approx(4.25 / 4.0));
  CHECK(huber_loss(target, target, 1.0).value()[0] == 0.0);
  // delta 2: 0.125, 0.125, 4.0, 2.0
  CHECK(huber_loss(target, pred, 2.0).value()[0] == doctest::Approx(6.25 / 4.0));
  CHECK_THROWS_AS(huber_loss(target, g.constant(Tensor({3})), 1.0), Error);
}

TEST_CASE("adversarial loss identities") {
  Graph g;
  const Var ones = g.constant(Tensor({4, 1}, 1.0));
  const Var zeros = g.constant(Tensor({4, 1}, 0.0));
  const Var half = g.constant(Tensor({4, 1}, 0.5));
  CHECK(discriminator_loss(ones, zeros).value()[0] < 1e-5);
  CHECK(discriminator_loss(half, half).value()[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(generator_adversarial_loss(half).value()[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::isfinite(generator_adversarial_loss(zeros).value()[0]));
  CHECK(generator_adversarial_loss(zeros).value()[0] == doctest::Approx(-std::log(kProbabilityClamp)));
}

TEST_CASE("diversity loss") {
  Graph g;
  Rng rng(1);
  const auto perm = random_derangement(4, rng);
  for (std::size_t i = 0; i < 4; ++i) CHECK(perm[i] != i);
  CHECK_THROWS_AS(random_derangement(1, rng), Error);

  Tensor styles({4, 2});
  for (double& v : styles.values()) v = rng.normal();
  // identical outputs: no diversity
  const Var same = g.constant(Tensor({4, 3}, 0.7));
  CHECK(diversity_loss(same, g.constant(styles), perm).value()[0] == 0.0);

  // output distance exactly twice the style distance for every pair
  Tensor out({4, 2});
  for (std::size_t i = 0; i < styles.size(); ++i) out[i] = 2.0 * styles[i];
  const double expect = [&] {
    double acc = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
      double dout = 0.0, dsty = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        dout += std::abs(out[i * 2 + k] - out[perm[i] * 2 + k]);
        dsty += std::abs(styles[i * 2 + k] - styles[perm[i] * 2 + k]);
      }
      acc += std::min(dout / (dsty + kDiversityEpsilon), kDiversityClamp);
    }
    return -acc / 4.0;
  }();
  const double got = diversity_loss(g.constant(out), g.constant(styles), perm).value()[0];
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  CHECK(got == doctest::Approx(-2.0).epsilon(1e-3));

  // larger output spread never raises the loss, and the clamp caps it
  double prev = 0.0;
  for (double k : {0.5, 1.0, 4.0, 20.0, 1000.0}) {
    Tensor o = out;
    for (double& v : o.values()) v *= k;
    const double l = diversity_loss(g.constant(o), g.constant(styles), perm).value()[0];
    CHECK(l <= prev);
    CHECK(l >= -kDiversityClamp);
    prev = l;
  }
  CHECK(prev == doctest::Approx(-kDiversityClamp));
  CHECK_THROWS_AS(diversity_loss(g.constant(Tensor({1, 2})), g.constant(Tensor({1, 2})), {0}), Error);
}

TEST_CASE("KL divergence to the standard normal") {
  Graph g;
  StyleDistribution d{g.constant(Tensor({3, 4}, 0.0)), g.constant(Tensor({3, 4}, 0.0))};
  CHECK(std::abs(kl_loss(d).value()[0]) < 1e-9);
  // unit mean in one dimension
  Tensor mu({3, 4}, 0.0);
  for (std::size_t b = 0; b < 3; ++b) mu[b * 4] = 1.0;
  StyleDistribution u{g.constant(mu), g.constant(Tensor({3, 4}, 0.0))};
  CHECK(std::abs(kl_loss(u).value()[0] - 0.5) < 1e-9);

  Rng rng(2);
  Tensor m({3, 4}), lv({3, 4});
  for (double& v : m.values()) v = rng.normal();
  for (double& v : lv.values()) v = rng.uniform(-2.0, 1.0);
  long double oracle = 0.0L;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const long double var = std::exp(static_cast<long double>(lv[i]));
    oracle += 0.5L * (var + m[i] * static_cast<long double>(m[i]) - 1.0L - lv[i]);
  }
  oracle /= 3.0L;
  StyleDistribution r{g.constant(m), g.constant(lv)};
  CHECK(kl_loss(r).value()[0] == doctest::Approx(static_cast<double>(oracle)).epsilon(1e-12));
}

TEST_CASE("train config JSON roundtrip and validation") {
  TrainConfig c;
  c.epochs = 3;
  c.batch_size = 5;
  c.weights.gen = 2.5;
  c.wall_clock = false;
  const TrainConfig d = TrainConfig::from_json(c.to_json());
  CHECK(d.to_json() == c.to_json());
  nlohmann::json bad = c.to_json();
  bad["batch_size"] = 0;
  CHECK_THROWS_AS(TrainConfig::from_json(bad), Error);
  bad = c.to_json();
  bad["lr_generator"] = -1.0;
  CHECK_THROWS_AS(TrainConfig::from_json(bad), Error);
}

TEST_CASE("logged terms recompose into the generator total") {
  const Dataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model(ds);
  const TrainingSet set = build_training_set(ds, all(8), mc, WordEmbeddingTable::hashed());
  GanModel model(mc);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  const auto hist = train(model, set, tc);
  REQUIRE(hist.size() == 3);
  for (const auto& h : hist) {
    const double recomposed = tc.weights.huber * h.huber + tc.weights.gen * h.gen + tc.weights.style * h.style +
                              tc.weights.kld * h.kld;
    CHECK(test::rel_err(recomposed, h.total_g) < 1e-6);
    CHECK(h.style <= 0.0);
    CHECK(h.kld >= 0.0);
    CHECK(h.disc > 0.0);
  }
  const std::string csv = history_csv(hist);
  CHECK(csv.rfind("epoch,L_Hub,L_gen,L_stl,L_KLD,L_G,L_D,wall_seconds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Dataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model(ds);
  const TrainingSet set = build_training_set(ds, all(8), mc, WordEmbeddingTable::hashed());
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.wall_clock = false;
  GanModel a(mc), b(mc);
  const std::string ha = history_csv(train(a, set, tc));
  const std::string hb = history_csv(train(b, set, tc));
  CHECK(ha == hb);
  const auto pa = predict_all(a, set), pb = predict_all(b, set);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].directions == pb[i].directions);
  tc.seed = 2;
  GanModel c(mc);
  CHECK(history_csv(train(c, set, tc)) != ha);
}

TEST_CASE("discriminator and generator updates stay isolated") {
  const Dataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model(ds);
  const TrainingSet set = build_training_set(ds, all(4), mc, WordEmbeddingTable::hashed());
  GanModel model(mc);
  std::vector<const SampleFeatures*> f;
  std::vector<const EdgeDirectionSequence*> s, t;
  for (std::size_t i = 0; i < 4; ++i) {
    f.push_back(&set.features[i]);
    s.push_back(&set.seeds[i]);
    t.push_back(&set.targets[i]);
  }
  const ModelInputs in = stack_inputs(f, s, mc);
  auto grad_norm = [](ParameterSet& ps) {
    double n = 0.0;
    ps.for_each([&](const Parameter& p) {
      for (double v : p.grad.values()) n += v * v;
    });
    return n;
  };

  // D loss on a detached fake leaves generator gradients untouched.
  Graph g;
  const GeneratorOutput out = model.generator()(g, in, Tensor({4, mc.dims.style}, 0.1));
  {
    Graph gd;
    gd.backward(discriminator_loss(model.discriminator()(gd.constant(stack_directions(t))),
                                   model.discriminator()(gd.constant(out.directions.value()))));
    CHECK(grad_norm(model.discriminator_params()) > 0.0);
    CHECK(grad_norm(model.generator_params()) == 0.0);
  }
  model.discriminator_params().zero_grad();

  // G adversarial loss with D frozen moves only the generator.
  g.freeze(model.discriminator_params());
  g.backward(generator_adversarial_loss(model.discriminator()(out.directions)));
  CHECK(grad_norm(model.generator_params()) > 0.0);
  CHECK(grad_norm(model.discriminator_params()) == 0.0);
}

TEST_CASE("non-finite terms are reported by name") {
  const Dataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model(ds);
  TrainingSet set = build_training_set(ds, all(4), mc, WordEmbeddingTable::hashed());
  set.targets[0].directions[0] = std::numeric_limits<double>::quiet_NaN();
  GanModel model(mc);
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  try {
    train(model, set, tc);
    FAIL("expected NonFinite");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFinite);
    const std::string what = e.what();
    CHECK((what.find("L_D") != std::string::npos || what.find("L_Hub") != std::string::npos));
  }
}

TEST_CASE("supervised-only training lowers MAJE on the training clips") {
  const Dataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model(ds);
  const auto idx = all(8);
  const TrainingSet set = build_training_set(ds, idx, mc, WordEmbeddingTable::hashed());
  GanModel model(mc);
  const double before = evaluate_model(model, ds, idx, set, nullptr).report.maje_mm;
  TrainConfig tc;
  tc.epochs = 40;
  tc.batch_size = 4;
  tc.weights.gen = 0.0;
  tc.weights.style = 0.0;
  const auto hist = train(model, set, tc);
  const double after = evaluate_model(model, ds, idx, set, nullptr).report.maje_mm;
  CHECK(after < 0.6 * before);
  CHECK(hist.back().huber < 0.5 * hist.front().huber);
}

TEST_CASE("short adversarial run on tiny data") {
  const Dataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model(ds);
  const TrainingSet set = build_training_set(ds, all(8), mc, WordEmbeddingTable::hashed());
  GanModel model(mc);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 4;
  const auto hist = train(model, set, tc);
  CHECK(hist.back().huber < hist.front().huber);
  const double acc = discriminator_accuracy(model, set);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("periodic checkpoints") {
  const auto dir = test::temp_dir("train_ckpt");
  const Dataset ds = tiny_dataset();
  const ModelConfig mc = tiny_model(ds);
  const TrainingSet set = build_training_set(ds, all(4), mc, WordEmbeddingTable::hashed());
  GanModel model(mc);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 4;
  tc.checkpoint_every = 2;
  std::size_t calls = 0;
  train(model, set, tc, {[&](const EpochLosses&) { ++calls; }, dir});
  CHECK(calls == 4);
  CHECK(std::filesystem::exists(dir / "checkpoint_epoch_0002.s2ck"));
  CHECK(std::filesystem::exists(dir / "checkpoint_epoch_0004.s2ck"));
  CHECK_FALSE(std::filesystem::exists(dir / "checkpoint_epoch_0003.s2ck"));
  const auto reloaded = GanModel::load(dir / "checkpoint_epoch_0004.s2ck");
  const auto a = predict_all(model, set), b = predict_all(*reloaded, set);
  CHECK(a[0].directions == b[0].directions);
}
