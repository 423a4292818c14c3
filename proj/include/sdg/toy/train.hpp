#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "sdg/diffusion/codec.hpp"
#include "sdg/diffusion/model.hpp"
#include "sdg/nn/optim.hpp"
#include "sdg/toy/shapes.hpp"

namespace sdg::toy {

struct TrainConfig {
  std::size_t steps = 5000;
  std::size_t batch = 12;
  double lr = 2e-3;
  std::size_t warmup = 100;
  double final_lr_fraction = 0.1;  // cosine decay target
  double ema_decay = 0.995;        // 0 disables the moving average
  double cond_dropout = 0.1;
  double clip_norm = 1.0;
  std::size_t eval_batch = 64;
  std::size_t log_every = 100;
  std::uint64_t seed = 0;

  void validate() const {
    require(batch >= 1, ErrorCode::InvalidConfig, "batch must be >= 1");
    require(cond_dropout >= 0 && cond_dropout < 1, ErrorCode::InvalidConfig, "cond_dropout must be in [0, 1)");
    require(ema_decay >= 0 && ema_decay < 1, ErrorCode::InvalidConfig, "ema_decay must be in [0, 1)");
    require(lr > 0, ErrorCode::InvalidConfig, "lr must be positive");
  }

  double lr_at(std::size_t step) const {
    if (step < warmup) return lr * double(step + 1) / double(warmup);
    const double p = steps > warmup ? double(step - warmup) / double(steps - warmup) : 1.0;
    return lr * (final_lr_fraction + (1 - final_lr_fraction) * 0.5 * (1 + std::cos(std::numbers::pi * p)));
  }
};

struct TrainLogEntry {
  std::size_t step = 0;
  double train_loss = 0;  // mean over the last log window
  double eval_loss = 0;
};

struct TrainReport {
  double initial_eval_loss = 0;
  double final_eval_loss = 0;
  std::vector<TrainLogEntry> log;
};

/// Latents and token sequences of a dataset, computed once.
struct TrainingSet {
  std::vector<nn::Tensorf> latents;
  std::vector<prompt::TokenSequence> tokens;
};

inline TrainingSet prepare_training_set(const Dataset& d, const prompt::Vocabulary& vocab) {
  TrainingSet s;
  s.latents.resize(d.samples.size());
  s.tokens.resize(d.samples.size());
  const diffusion::LatentCodec codec;
  parallel_for(d.samples.size(), [&](std::size_t i) {
    s.latents[i] = codec.encode(render(d.config, d.samples[i].objects));
    s.tokens[i] = prompt::tokenize(d.samples[i].caption, vocab);
  });
  return s;
}

/// One noised example: which sample, timestep, noise, and whether the caption
/// is replaced by the empty prompt.
struct Draw {
  std::size_t index = 0;
  std::size_t t = 0;
  nn::Tensorf noise;
  bool drop = false;
};

inline Draw draw_example(Rng& rng, const TrainingSet& set, std::size_t train_steps, double dropout) {
  Draw d;
  d.index = rng.below(set.latents.size());
  d.t = rng.below(train_steps);
  d.noise = nn::Tensorf(set.latents[d.index].shape());
  for (auto& v : d.noise.values()) v = static_cast<float>(rng.normal());
  d.drop = dropout > 0 && rng.bernoulli(dropout);
  return d;
}

/// Builds the epsilon-prediction loss for one example on `g`.
inline nn::Var example_loss(nn::Graph& g, const diffusion::Model& m, const TrainingSet& set, const Draw& d,
                            const prompt::TokenSequence& empty) {
  const double ab = m.schedule.alpha_bars[d.t];
  const float a = static_cast<float>(std::sqrt(ab)), b = static_cast<float>(std::sqrt(1 - ab));
  const nn::Tensorf& z0 = set.latents[d.index];
  nn::Tensorf zt(z0.shape());
  for (std::size_t i = 0; i < zt.size(); ++i) zt[i] = a * z0[i] + b * d.noise[i];
  diffusion::UNetConditioning cond;
  cond.prompt = text::encode_graph(g, d.drop ? empty : set.tokens[d.index], m.encoder);
  const nn::Var pred = diffusion::unet_forward(g, m.unet, g.constant(std::move(zt)), d.t, cond);
  return g.mse(pred, d.noise);
}

inline double eval_loss(const diffusion::Model& m, const TrainingSet& set, const std::vector<Draw>& batch,
                        const prompt::TokenSequence& empty) {
  std::vector<double> losses(batch.size());
  parallel_for(batch.size(), [&](std::size_t i) {
    nn::Graph g(false);
    losses[i] = g.value(example_loss(g, m, set, batch[i], empty))[0];
  });
  double sum = 0;
  for (double l : losses) sum += l;
  return sum / double(batch.size());
}

/// Joint encoder + UNet training on the epsilon objective. With steps = 0 the
/// model is left untouched. With EMA enabled the averaged weights are copied
/// into the model at the end.
inline TrainReport train(diffusion::Model& model, const Dataset& data, const prompt::Vocabulary& vocab,
                         const TrainConfig& cfg,
                         const std::function<void(const TrainLogEntry&)>& on_log = {}) {
  cfg.validate();
  require(!data.samples.empty(), ErrorCode::InvalidConfig, "empty training set");
  const TrainingSet set = prepare_training_set(data, vocab);
  const auto empty = prompt::empty_sequence(vocab);

  Rng eval_rng(derive_seed(cfg.seed, 7));
  std::vector<Draw> eval_batch;
  for (std::size_t i = 0; i < cfg.eval_batch; ++i)
    eval_batch.push_back(draw_example(eval_rng, set, model.schedule.size(), 0.0));

  TrainReport report;
  report.initial_eval_loss = eval_loss(model, set, eval_batch, empty);
  report.final_eval_loss = report.initial_eval_loss;
  if (cfg.steps == 0) return report;

  const nn::ParamList params = model.params();
  nn::AdamConfig ac;
  ac.lr = cfg.lr;
  ac.clip_norm = cfg.clip_norm;
  nn::Adam adam(params, ac);
  nn::Ema ema(params);
  Rng rng(derive_seed(cfg.seed, 8));
  double window = 0;
  std::size_t window_n = 0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    params.zero_grad();
    double batch_loss = 0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const Draw d = draw_example(rng, set, model.schedule.size(), cfg.cond_dropout);
      nn::Graph g(true);
      const nn::Var loss = example_loss(g, model, set, d, empty);
      const double l = g.value(loss)[0];
      require(std::isfinite(l), ErrorCode::DivergedLoss, "training loss became non-finite at step " +
                                                             std::to_string(step));
      batch_loss += l;
      g.backward(loss, 1.0f / static_cast<float>(cfg.batch));
    }
    const double norm = adam.step(cfg.lr_at(step) / cfg.lr);
    require(std::isfinite(norm), ErrorCode::DivergedLoss, "non-finite gradient at step " + std::to_string(step));
    if (cfg.ema_decay > 0) ema.update(params, std::min(cfg.ema_decay, (1.0 + step) / (10.0 + step)));
    window += batch_loss / double(cfg.batch);
    ++window_n;
    const bool last = step + 1 == cfg.steps;
    if ((cfg.log_every && (step + 1) % cfg.log_every == 0) || last) {
      TrainLogEntry e{step + 1, window / double(window_n), 0.0};
      if (last && cfg.ema_decay > 0) ema.copy_to(params);
      e.eval_loss = eval_loss(model, set, eval_batch, empty);
      report.log.push_back(e);
      if (on_log) on_log(e);
      window = 0;
      window_n = 0;
    }
  }
  report.final_eval_loss = report.log.back().eval_loss;
  return report;
}

}  // namespace sdg::toy
