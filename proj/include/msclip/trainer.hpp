#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msclip/data.hpp"
#include "msclip/model.hpp"
#include "msclip/tokenizer.hpp"

namespace msclip {

struct TrainConfig {
  double peak_lr = 4e-5;
  int warmup_steps = 50;
  int total_steps = 500;
  int batch_size = 32;
  double weight_decay = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-6;
  double clip_grad_norm = 1.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  int val_every = 100;
  int max_epochs = 1000000;
  FreezePolicy freeze;

  void validate() const;  // throws InvalidConfigError
};

// Linear warmup to peak_lr over warmup_steps, then cosine decay to zero
// across the remaining steps. Valid for 0 <= step < total_steps.
double lr_schedule(int step, const TrainConfig& cfg);

// Decoupled weight decay: parameters shrink by lr * weight_decay before the
// Adam update; biases, norm parameters, and the temperature are exempt.
struct AdamWState {
  int t = 0;
  std::map<std::string, nn::Tensor> m;
  std::map<std::string, nn::Tensor> v;
};

void adamw_step(ModelParameters& params,
                const std::map<std::string, nn::Tensor>& grads,
                AdamWState& state, double lr, const TrainConfig& cfg,
                const std::map<std::string, bool>& trainable);

bool weight_decay_applies(const std::string& name);

// Image pixels are normalized floats in band-major layout; tokens are one
// fixed-length row per caption.
struct PreparedExample {
  std::string id;
  std::vector<float> image;
  std::vector<int> tokens;
  std::vector<std::string> class_labels;
};

struct PreparedDataset {
  std::vector<BandId> bands;
  std::size_t image_size = 0;
  NormalizationStats stats;
  Vocabulary vocab;
  std::vector<PreparedExample> train;
  std::vector<PreparedExample> val;
  std::vector<PreparedExample> test;
};

// Select bands -> resize to the model raster -> reflectance scale ->
// normalize with statistics from the training split. The vocabulary is
// built from training captions unless a fixed one is supplied (continued
// training must keep token ids stable).
PreparedDataset prepare_dataset(const std::vector<SceneRecord>& records,
                                const std::vector<BandId>& bands,
                                const ModelConfig& model_cfg,
                                const std::optional<Vocabulary>& fixed_vocab =
                                    std::nullopt);

// One normalized image ready for the tower, without dataset statistics
// recomputation; used by evaluation against checkpoint stats.
std::vector<float> prepare_image(const MultispectralImage& image,
                                 const std::vector<BandId>& bands,
                                 std::size_t image_size,
                                 const NormalizationStats& stats);

// One line per training step. val_loss is present on steps where the
// validation split was scored. train_loss is absent only when the step was
// skipped for a non-finite loss (logs hold finite numbers only). wall_ms is
// reserved and always written as 0 so repeated runs produce byte-identical
// logs; elapsed time lives in TrainResult.
struct TrainLogEntry {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  std::optional<double> train_loss;
  std::optional<double> val_loss;
  bool grad_skipped = false;
  double wall_ms = 0.0;
};

std::string log_entry_to_json(const TrainLogEntry& entry);

struct TrainResult {
  ModelParameters final_params;
  ModelParameters best_params;
  std::optional<double> best_val_loss;
  int best_step = 0;
  int steps_run = 0;
  double total_wall_ms = 0.0;
  std::vector<TrainLogEntry> log;
};

using ValidationHook =
    std::function<void(const ModelParameters&, int step, double val_loss)>;

// Deterministic loop: per-epoch shuffles keyed by (seed, epoch), validation
// every val_every steps and at the last step. A non-finite loss skips the
// update and two in a row abort; non-finite gradients skip the update and
// are flagged in the log. The best checkpoint is the one with the lowest
// validation loss (earliest wins ties); without a validation split the
// final parameters stand in.
TrainResult train(const ModelParameters& init, const PreparedDataset& data,
                  const TrainConfig& cfg,
                  const ValidationHook& on_validate = nullptr);

// Mean contrastive loss of the current model over a prepared split, batched
// and weighted by example count; covers every row, including a tail batch
// shorter than batch_size.
double split_loss(const ModelParameters& params,
                  const std::vector<PreparedExample>& split, int batch_size);

}  // namespace msclip
