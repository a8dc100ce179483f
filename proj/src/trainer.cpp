#include "msclip/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "msclip/errors.hpp"
#include "msclip/loss.hpp"
#include "msclip/rng.hpp"

namespace msclip {

void TrainConfig::validate() const {
  if (peak_lr < 0.0 || !std::isfinite(peak_lr)) {
    throw InvalidConfigError("peak_lr must be a finite non-negative value");
  }
  if (warmup_steps < 1) throw InvalidConfigError("warmup_steps must be >= 1");
  if (total_steps <= warmup_steps) {
    throw InvalidConfigError("total_steps must exceed warmup_steps");
  }
  if (batch_size < 2) throw InvalidConfigError("batch_size must be at least 2");
  if (weight_decay < 0.0) throw InvalidConfigError("weight_decay must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw InvalidConfigError("betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidConfigError("eps must be positive");
  if (val_every < 1) throw InvalidConfigError("val_every must be >= 1");
  if (max_epochs < 1) throw InvalidConfigError("max_epochs must be >= 1");
}

double lr_schedule(int step, const TrainConfig& cfg) {
  if (step < 0 || step >= cfg.total_steps) {
    throw StepOutOfRangeError("step " + std::to_string(step) + " of " +
                              std::to_string(cfg.total_steps));
  }
  if (step < cfg.warmup_steps) {
    return cfg.peak_lr * static_cast<double>(step + 1) /
           static_cast<double>(cfg.warmup_steps);
  }
  const double progress = static_cast<double>(step - cfg.warmup_steps) /
                          static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.peak_lr * 0.5 * (1.0 + std::cos(progress * M_PI));
}

bool weight_decay_applies(const std::string& name) {
  if (name == "log_temperature") return false;
  if (name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0) {
    return false;
  }
  if (name.find(".ln") != std::string::npos) return false;
  return true;
}

void adamw_step(ModelParameters& params,
                const std::map<std::string, nn::Tensor>& grads,
                AdamWState& state, double lr, const TrainConfig& cfg,
                const std::map<std::string, bool>& trainable) {
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, state.t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, state.t);
  for (auto& [name, p] : params.tensors) {
    auto flag = trainable.find(name);
    if (flag == trainable.end() || !flag->second) continue;
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const nn::Tensor& g = git->second;
    if (g.shape != p.shape) throw ShapeMismatchError("gradient for " + name);
    if (!g.all_finite()) throw NonFiniteGradientError(name);

    nn::Tensor& m = state.m.try_emplace(name, nn::Tensor::zeros(p.shape))
                        .first->second;
    nn::Tensor& v = state.v.try_emplace(name, nn::Tensor::zeros(p.shape))
                        .first->second;
    const bool decay = cfg.weight_decay > 0.0 && weight_decay_applies(name);
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      if (decay) p.v[i] -= lr * cfg.weight_decay * p.v[i];
      m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * g.v[i];
      v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      p.v[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

std::vector<float> prepare_image(const MultispectralImage& image,
                                 const std::vector<BandId>& bands,
                                 std::size_t image_size,
                                 const NormalizationStats& stats) {
  MultispectralImage img = select_bands(image, bands);
  if (img.height != image_size || img.width != image_size) {
    img = resize_bicubic(img, image_size, image_size);
  }
  img = scale_values(img, 1e-4);
  img = normalize(img, stats);
  return std::move(img.values);
}

namespace {

MultispectralImage scaled_input(const MultispectralImage& image,
                                const std::vector<BandId>& bands,
                                std::size_t image_size) {
  MultispectralImage img = select_bands(image, bands);
  if (img.height != image_size || img.width != image_size) {
    img = resize_bicubic(img, image_size, image_size);
  }
  img = scale_values(img, 1e-4);
  return img;
}

ImageBatch make_image_batch(const std::vector<const PreparedExample*>& rows,
                            std::size_t c, std::size_t hw) {
  ImageBatch b;
  b.n = rows.size();
  b.c = c;
  b.h = hw;
  b.w = hw;
  b.v.reserve(b.n * b.image_stride());
  for (const PreparedExample* ex : rows) {
    for (float x : ex->image) b.v.push_back(static_cast<double>(x));
  }
  return b;
}

std::vector<std::vector<int>> make_token_batch(
    const std::vector<const PreparedExample*>& rows) {
  std::vector<std::vector<int>> out;
  out.reserve(rows.size());
  for (const PreparedExample* ex : rows) out.push_back(ex->tokens);
  return out;
}

double batch_loss_eval(const ModelParameters& params,
                       const std::vector<const PreparedExample*>& rows,
                       std::size_t hw) {
  ImageBatch ib = make_image_batch(rows, params.config.in_channels, hw);
  auto img = encode_image(params, ib);
  auto txt = encode_text(params, make_token_batch(rows));
  ContrastiveBatch cb;
  cb.image_embeddings = img.cast<double>();
  cb.text_embeddings = txt.cast<double>();
  cb.log_temperature = params.log_temperature();
  return info_nce(cb).loss;
}

}  // namespace

double split_loss(const ModelParameters& params,
                  const std::vector<PreparedExample>& split, int batch_size) {
  if (split.empty()) throw EmptyDatasetError("split has no rows to score");
  const std::size_t hw = static_cast<std::size_t>(params.config.image_size);
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  double total = 0.0;
  std::size_t start = 0;
  while (start < split.size()) {
    std::size_t end = std::min(split.size(), start + bs);
    std::vector<const PreparedExample*> rows;
    for (std::size_t i = start; i < end; ++i) rows.push_back(&split[i]);
    total += batch_loss_eval(params, rows, hw) *
             static_cast<double>(rows.size());
    start = end;
  }
  return total / static_cast<double>(split.size());
}

PreparedDataset prepare_dataset(const std::vector<SceneRecord>& records,
                                const std::vector<BandId>& bands,
                                const ModelConfig& model_cfg,
                                const std::optional<Vocabulary>& fixed_vocab) {
  model_cfg.validate();
  if (bands.size() != static_cast<std::size_t>(model_cfg.in_channels)) {
    throw InvalidConfigError("band count does not match model input channels");
  }
  PreparedDataset out;
  out.bands = bands;
  out.image_size = static_cast<std::size_t>(model_cfg.image_size);

  std::vector<const SceneRecord*> train_recs;
  for (const auto& r : records) {
    if (r.split == Split::Train) train_recs.push_back(&r);
  }
  if (train_recs.empty()) throw EmptyDatasetError("no training records");

  std::vector<MultispectralImage> train_scaled;
  train_scaled.reserve(train_recs.size());
  for (const auto* r : train_recs) {
    train_scaled.push_back(scaled_input(r->image, bands, out.image_size));
  }
  out.stats = compute_stats(train_scaled);

  if (fixed_vocab) {
    out.vocab = *fixed_vocab;
  } else {
    std::vector<std::string> captions;
    captions.reserve(train_recs.size());
    for (const auto* r : train_recs) captions.push_back(r->caption);
    out.vocab = build_vocab(captions,
                            static_cast<std::size_t>(model_cfg.vocab_size));
  }
  if (out.vocab.tokens.size() > static_cast<std::size_t>(model_cfg.vocab_size)) {
    throw InvalidConfigError("vocabulary exceeds model vocab_size");
  }

  for (const auto& r : records) {
    PreparedExample ex;
    ex.id = r.id;
    ex.image = prepare_image(r.image, bands, out.image_size, out.stats);
    ex.tokens = encode(r.caption, out.vocab,
                       static_cast<std::size_t>(model_cfg.context_length));
    ex.class_labels = r.class_labels;
    switch (r.split) {
      case Split::Train: out.train.push_back(std::move(ex)); break;
      case Split::Val: out.val.push_back(std::move(ex)); break;
      case Split::Test: out.test.push_back(std::move(ex)); break;
    }
  }
  return out;
}

std::string log_entry_to_json(const TrainLogEntry& entry) {
  nlohmann::ordered_json j;
  j["step"] = entry.step;
  j["epoch"] = entry.epoch;
  j["lr"] = entry.lr;
  if (entry.train_loss) j["train_loss"] = *entry.train_loss;
  if (entry.val_loss) j["val_loss"] = *entry.val_loss;
  j["grad_skipped"] = entry.grad_skipped;
  j["wall_ms"] = entry.wall_ms;
  return j.dump();
}

TrainResult train(const ModelParameters& init, const PreparedDataset& data,
                  const TrainConfig& cfg, const ValidationHook& on_validate) {
  cfg.validate();
  init.config.validate();
  if (data.bands.size() != static_cast<std::size_t>(init.config.in_channels)) {
    throw InvalidConfigError("prepared bands do not match model channels");
  }
  if (data.train.size() < static_cast<std::size_t>(cfg.batch_size)) {
    throw InvalidConfigError("training split smaller than one batch");
  }

  TrainResult result;
  ModelParameters params = init;
  const auto trainable = resolve_freeze(params, cfg.freeze);
  AdamWState opt;
  const std::size_t hw = static_cast<std::size_t>(params.config.image_size);
  const bool has_val = !data.val.empty();
  const auto run_start = std::chrono::steady_clock::now();

  auto validate_now = [&](TrainLogEntry& e) {
    if (!has_val) return;
    const double vl = split_loss(params, data.val, cfg.batch_size);
    e.val_loss = vl;
    if (!result.best_val_loss || vl < *result.best_val_loss) {
      result.best_val_loss = vl;
      result.best_step = e.step;
      result.best_params = params;
    }
    if (on_validate) on_validate(params, e.step, vl);
  };

  int step = 0;
  int bad_loss_streak = 0;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.max_epochs && step < cfg.total_steps;
       ++epoch) {
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffler(stream_key(cfg.seed, "epoch", epoch));
    shuffler.shuffle(order);

    for (std::size_t off = 0; off + bs <= order.size() && step < cfg.total_steps;
         off += bs) {
      std::vector<const PreparedExample*> rows;
      rows.reserve(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        rows.push_back(&data.train[order[off + i]]);
      }

      nn::GraphT<float> g;
      ParamVars<float> pv = make_param_vars(g, params);
      ImageBatch ib = make_image_batch(rows, params.config.in_channels, hw);
      nn::Var img = image_tower(g, pv, params.config, ib);
      nn::Var txt = text_tower(g, pv, params.config, make_token_batch(rows));
      nn::Var loss = info_nce_node(g, img, txt, pv.at("log_temperature"));
      const double loss_v = static_cast<double>(g.value(loss).v[0]);

      TrainLogEntry e;
      e.step = step + 1;
      e.epoch = epoch;
      e.lr = lr_schedule(step, cfg);

      if (!std::isfinite(loss_v)) {
        if (++bad_loss_streak >= 2) {
          throw DivergedLossError("non-finite loss at steps " +
                                  std::to_string(step) + " and " +
                                  std::to_string(step + 1));
        }
        e.grad_skipped = true;
      } else {
        bad_loss_streak = 0;
        e.train_loss = loss_v;
        g.backward(loss);

        std::map<std::string, nn::Tensor> grads;
        bool finite = true;
        for (const auto& [name, var] : pv.vars) {
          if (!trainable.at(name)) continue;
          nn::Tensor gd = g.grad(var).cast<double>();
          if (!gd.all_finite()) finite = false;
          grads[name] = std::move(gd);
        }
        if (!finite) {
          e.grad_skipped = true;
        } else {
          if (cfg.clip_grad_norm > 0.0) {
            double sq = 0.0;
            for (const auto& [name, gd] : grads) {
              for (double x : gd.v) sq += x * x;
            }
            const double norm = std::sqrt(sq);
            if (norm > cfg.clip_grad_norm) {
              const double scale = cfg.clip_grad_norm / norm;
              for (auto& [name, gd] : grads) {
                for (double& x : gd.v) x *= scale;
              }
            }
          }
          adamw_step(params, grads, opt, e.lr, cfg, trainable);
          params.clamp_log_temperature();
        }
      }

      ++step;
      if (step % cfg.val_every == 0 || step == cfg.total_steps) {
        validate_now(e);
      }
      result.log.push_back(std::move(e));
    }
  }

  // max_epochs can exhaust the data before total_steps; make sure the last
  // executed step still carries a validation score.
  if (!result.log.empty() && !result.log.back().val_loss) {
    validate_now(result.log.back());
  }

  result.steps_run = step;
  result.final_params = params;
  result.total_wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - run_start)
                             .count();
  if (!result.best_val_loss) {
    result.best_params = params;
    result.best_step = step;
  }
  return result;
}

}  // namespace msclip
