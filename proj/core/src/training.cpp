// SPDX-License-Identifier: Apache-2.0
#include "s2ag/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "s2ag/adam.hpp"
#include "s2ag/error.hpp"

namespace s2ag {

using namespace diff;
using nlohmann::json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorCode::ConfigInvalid, "batch_size must be at least 1");
  if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) {
    throw Error(ErrorCode::ConfigInvalid, "learning rates must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::ConfigInvalid, "Adam betas must lie in [0, 1)");
  }
  if (!(huber_delta > 0.0)) throw Error(ErrorCode::ConfigInvalid, "huber_delta must be positive");
  for (double w : {weights.huber, weights.gen, weights.style, weights.kld}) {
    if (!(w >= 0.0)) throw Error(ErrorCode::ConfigInvalid, "loss weights must be nonnegative");
  }
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"lr_generator", lr_generator},
          {"lr_discriminator", lr_discriminator},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epochs", epochs},
          {"seed", seed},
          {"huber_delta", huber_delta},
          {"warmup_epochs", warmup_epochs},
          {"checkpoint_every", checkpoint_every},
          {"wall_clock", wall_clock},
          {"weights", {{"huber", weights.huber}, {"gen", weights.gen}, {"style", weights.style}, {"kld", weights.kld}}}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_generator = j.value("lr_generator", c.lr_generator);
    c.lr_discriminator = j.value("lr_discriminator", c.lr_discriminator);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.huber_delta = j.value("huber_delta", c.huber_delta);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.wall_clock = j.value("wall_clock", c.wall_clock);
    if (j.contains("weights")) {
      const json& w = j["weights"];
      c.weights.huber = w.value("huber", c.weights.huber);
      c.weights.gen = w.value("gen", c.weights.gen);
      c.weights.style = w.value("style", c.weights.style);
      c.weights.kld = w.value("kld", c.weights.kld);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

Var huber_loss(Var target, Var pred, double delta) {
  if (target.shape() != pred.shape()) {
    throw Error(ErrorCode::ShapeMismatch,
                "huber_loss: " + shape_str(target.shape()) + " vs " + shape_str(pred.shape()));
  }
  return mean(huber(sub(pred, target), delta));
}

Var generator_adversarial_loss(Var c_fake) {
  return scale(mean(log(clamp(c_fake, kProbabilityClamp, 1.0 - kProbabilityClamp))), -1.0);
}

Var discriminator_loss(Var c_real, Var c_fake) {
  const Var real = mean(log(clamp(c_real, kProbabilityClamp, 1.0 - kProbabilityClamp)));
  const Var fake = mean(log(add_scalar(scale(clamp(c_fake, kProbabilityClamp, 1.0 - kProbabilityClamp), -1.0), 1.0)));
  return scale(add(real, fake), -1.0);
}

std::vector<std::size_t> random_derangement(std::size_t n, Rng& rng) {
  if (n < 2) throw Error(ErrorCode::BatchTooSmall, "a derangement needs at least 2 items");
  const std::size_t shift = 1 + rng.below(n - 1);
  std::vector<std::size_t> j(n);
  for (std::size_t i = 0; i < n; ++i) j[i] = (i + shift) % n;
  return j;
}

Var diversity_loss(Var outputs, Var styles, const std::vector<std::size_t>& derangement) {
  const std::size_t B = outputs.dim(0);
  if (B < 2) throw Error(ErrorCode::BatchTooSmall, "diversity loss needs a batch of at least 2");
  if (styles.dim(0) != B || derangement.size() != B) {
    throw Error(ErrorCode::ShapeMismatch, "diversity_loss: batch sizes differ");
  }
  for (std::size_t i = 0; i < B; ++i) {
    if (derangement[i] >= B || derangement[i] == i) {
      throw Error(ErrorCode::ShapeMismatch, "diversity_loss: pairing is not a derangement");
    }
  }
  const Var out_dist = sum_per_item(abs(sub(outputs, gather_items(outputs, derangement))));
  const Var style_dist = sum_per_item(abs(sub(styles, gather_items(styles, derangement))));
  const Var ratio = div(out_dist, add_scalar(style_dist, kDiversityEpsilon));
  return scale(mean(clamp(ratio, 0.0, kDiversityClamp)), -1.0);
}

Var kl_loss(const StyleDistribution& dist) {
  const Var lv = dist.log_var;
  const Var per = add_scalar(sub(add(exp(lv), square(dist.mean)), lv), -1.0);
  return scale(mean(sum_per_item(per)), 0.5);
}

namespace {

double checked(Var v, const char* term) {
  const double x = v.value()[0];
  if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, std::string("loss term ") + term + " is not finite");
  return x;
}

template <typename F>
Var term(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonFinite) throw;
    throw Error(ErrorCode::NonFinite, std::string("while computing ") + name + ": " + e.what());
  }
}

struct BatchView {
  std::vector<const SampleFeatures*> features;
  std::vector<const EdgeDirectionSequence*> seeds, targets;
};

BatchView view(const TrainingSet& data, const std::size_t* idx, std::size_t n) {
  BatchView v;
  for (std::size_t k = 0; k < n; ++k) {
    v.features.push_back(&data.features[idx[k]]);
    v.seeds.push_back(&data.seeds[idx[k]]);
    v.targets.push_back(&data.targets[idx[k]]);
  }
  return v;
}

}  // namespace

std::vector<EpochLosses> train(GanModel& model, const TrainingSet& data, const TrainConfig& cfg,
                               const TrainHooks& hooks) {
  cfg.validate();
  if (data.size() == 0) throw Error(ErrorCode::TooFewSamples, "training set is empty");
  if (data.seeds.size() != data.size() || data.targets.size() != data.size()) {
    throw Error(ErrorCode::ShapeMismatch, "training set columns differ in length");
  }
  const ModelConfig& mc = model.config();
  Adam opt_g(model.generator_params(), {cfg.lr_generator, cfg.beta1, cfg.beta2, 1e-8, true});
  Adam opt_d(model.discriminator_params(), {cfg.lr_discriminator, cfg.beta1, cfg.beta2, 1e-8, true});
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLosses> history;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    EpochLosses acc;
    acc.epoch = epoch;
    std::size_t batches = 0;
    const double w_gen = epoch > cfg.warmup_epochs ? cfg.weights.gen : 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - lo);
      const BatchView b = view(data, order.data() + lo, n);
      const ModelInputs in = stack_inputs(b.features, b.seeds, mc);
      const Tensor target = stack_directions(b.targets);
      Tensor noise({n, mc.dims.style});
      for (double& z : noise.values()) z = rng.normal();

      Graph g;
      const GeneratorOutput out = model.generator()(g, in, noise);

      // Discriminator step against the detached fake.
      double loss_d = 0.0;
      {
        Graph gd;
        const Var ld = term("L_D", [&] {
          const Var c_real = model.discriminator()(gd.constant(target));
          const Var c_fake = model.discriminator()(gd.constant(out.directions.value()));
          return discriminator_loss(c_real, c_fake);
        });
        loss_d = checked(ld, "L_D");
        gd.backward(ld);
        opt_d.step();
      }

      // Generator step with the discriminator frozen.
      g.freeze(model.discriminator_params());
      const Var l_hub = term("L_Hub", [&] { return huber_loss(g.constant(target), out.directions, cfg.huber_delta); });
      const Var l_gen = term("L_gen", [&] { return generator_adversarial_loss(model.discriminator()(out.directions)); });
      const Var l_kld = term("L_KLD", [&] { return kl_loss(out.style); });
      Var l_total = add(scale(l_hub, cfg.weights.huber), add(scale(l_gen, w_gen), scale(l_kld, cfg.weights.kld)));
      double style_value = 0.0;
      if (n >= 2) {
        const auto perm = random_derangement(n, rng);
        const Var l_stl = term("L_stl", [&] { return diversity_loss(out.directions, out.style_sample, perm); });
        style_value = checked(l_stl, "L_stl");
        l_total = add(l_total, scale(l_stl, cfg.weights.style));
      }
      acc.huber += checked(l_hub, "L_Hub");
      acc.gen += checked(l_gen, "L_gen");
      acc.kld += checked(l_kld, "L_KLD");
      acc.style += style_value;
      acc.total_g += checked(l_total, "L_G");
      acc.disc += loss_d;
      g.backward(l_total);
      opt_g.step();
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    for (double* v : {&acc.huber, &acc.gen, &acc.style, &acc.kld, &acc.total_g, &acc.disc}) *v *= inv;
    if (cfg.wall_clock) {
      acc.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    history.push_back(acc);
    if (hooks.on_epoch) hooks.on_epoch(acc);
    if (!hooks.checkpoint_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch_%04zu.s2ck", epoch);
      model.save(hooks.checkpoint_dir / name, {{"train", cfg.to_json()}, {"epoch", epoch}});
    }
  }
  return history;
}

std::string history_csv(const std::vector<EpochLosses>& history) {
  std::ostringstream out;
  out << "epoch,L_Hub,L_gen,L_stl,L_KLD,L_G,L_D,wall_seconds\n";
  out.precision(10);
  for (const auto& h : history) {
    out << h.epoch << ',' << h.huber << ',' << h.gen << ',' << h.style << ',' << h.kld << ',' << h.total_g << ','
        << h.disc << ',' << h.wall_seconds << '\n';
  }
  return out.str();
}

std::vector<EdgeDirectionSequence> predict_all(const GanModel& model, const TrainingSet& data, std::size_t batch_size) {
  std::vector<EdgeDirectionSequence> out;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - lo);
    const BatchView b = view(data, idx.data() + lo, n);
    const Tensor pred =
        predict(model, stack_inputs(b.features, b.seeds, model.config()), Tensor({n, model.config().dims.style}));
    for (std::size_t k = 0; k < n; ++k) out.push_back(unstack_directions(pred, k));
  }
  return out;
}

double discriminator_accuracy(const GanModel& model, const TrainingSet& data, std::size_t batch_size) {
  std::size_t correct = 0, total = 0;
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t lo = 0; lo < data.size(); lo += batch_size) {
    const std::size_t n = std::min(batch_size, data.size() - lo);
    const BatchView b = view(data, idx.data() + lo, n);
    Graph g;
    const GeneratorOutput fake =
        model.generator()(g, stack_inputs(b.features, b.seeds, model.config()), Tensor({n, model.config().dims.style}));
    const Var c_real = model.discriminator()(g.constant(stack_directions(b.targets)));
    const Var c_fake = model.discriminator()(fake.directions);
    for (std::size_t k = 0; k < n; ++k) {
      correct += c_real.value()[k] >= 0.5 ? 1 : 0;
      correct += c_fake.value()[k] < 0.5 ? 1 : 0;
      total += 2;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace s2ag
