#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spnet/augment.hpp"
#include "spnet/errors.hpp"
#include "spnet/loss.hpp"
#include "spnet/model.hpp"
#include "spnet/synthgen.hpp"

namespace spnet {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double max_lr = 1e-3;  // full-scale runs use 4e-5
  double div_factor = 25.0;
  double pct_start = 0.3;
  double final_div = 1e4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  LossWeights loss;
  bool stage2 = true;         // photometric augmentation at the start of each epoch
  double threshold = 0.5;     // decode threshold for validation metrics
  int eval_every = 1;         // epochs between validation passes (last epoch always)
  std::uint64_t seed = 0;
};

/// One-cycle learning rate: cosine rise from max/div to max over the first
/// pct_start of the steps, then cosine decay to max/final_div at the last step.
class OneCycleSchedule {
 public:
  OneCycleSchedule(double max_lr, long total_steps, double pct_start = 0.3, double div = 25.0,
                   double final_div = 1e4);
  double at(long step) const;
  long total_steps() const { return total_; }
  long peak_step() const { return peak_; }

 private:
  double max_, start_, end_;
  long total_, peak_;
};

/// Adam with decoupled weight decay on parameters flagged for decay.
class AdamW {
 public:
  AdamW(double beta1, double beta2, double eps, double weight_decay);
  void step(const std::vector<Parameter*>& params, double lr);
  long steps() const { return t_; }

  /// Moment estimates, flattened in parameter order (empty before the first step).
  std::vector<double> state() const;
  void set_state(long steps, std::span<const double> moments, std::size_t n_params);

 private:
  double beta1_, beta2_, eps_, wd_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

/// A frame ready for training: image plus its encoded grid target.
struct TrainSample {
  Image image;
  std::vector<Annotation> annotations;
  GridTensor target;
};

/// Encodes scenes against the model's grid. Frames that overflow a cell throw CellOverflow.
std::vector<TrainSample> make_samples(const std::vector<Scene>& scenes, const ModelConfig& model);

/// Stage-1 preprocessing: `cfg.stage1_copies` copies of every scene, copy 0
/// unchanged and the rest geometrically augmented. Draws that produce an
/// unencodable frame are redrawn a few times and otherwise replaced by the original.
std::vector<Scene> stage1_expand(const std::vector<Scene>& scenes, const AugmentConfig& cfg,
                                 const ModelConfig& model);

struct EpochRecord {
  int epoch = 0;  // 1-based, continuous across resumes
  double train_loss = 0.0;
  LossTerms train_terms;
  double val_loss = 0.0;
  double val_ring_acc = 0.0;
  double val_map = 0.0;
  double lr = 0.0;  // learning rate at the epoch's last step
};

std::string history_csv_header();
std::string history_csv_row(const EpochRecord& r);

/// Everything needed to resume: weights, running stats, optimizer moments.
struct Checkpoint {
  ModelConfig model;
  int epoch = 0;
  long adam_steps = 0;
  std::vector<double> parameters;
  std::vector<double> buffers;
  std::vector<double> adam_state;
};

Checkpoint make_checkpoint(Detector& model, const AdamW* opt, int epoch);
Detector restore_model(const Checkpoint& ckpt);

/// Binary layout (little-endian):
///   "SPNETCK1" | u32 version=1 | u32 n | n bytes model config text |
///   u64 epoch | u64 adam_steps | u64 P | P f64 parameters |
///   u64 B | B f64 buffers | u64 S | S f64 Adam moments (m then v)
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& file);
Checkpoint load_checkpoint(const std::filesystem::path& file);

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(int epoch, Checkpoint last_good)
      : Error("training diverged (non-finite loss) in epoch " + std::to_string(epoch)),
        last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  Checkpoint best;  // lowest validation loss (training loss when there is no val set)
  Checkpoint last;
};

using EpochCallback = std::function<void(const EpochRecord&, const Checkpoint& last)>;

/// Runs epochs [resume->epoch + 1, cfg.epochs]. Stage-2 augmentation is redrawn
/// at the start of every epoch. Throws TrainingDiverged carrying the last good
/// checkpoint when the loss becomes non-finite.
TrainResult train(Detector& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                  const AugmentConfig& aug, const Checkpoint* resume = nullptr,
                  const EpochCallback& on_epoch = {});

/// Forward pass without dropout; rows of the returned vector are grid tensors.
std::vector<std::vector<double>> predict(Detector& model, std::span<const Image> images,
                                         int batch_size = 16);

/// predict() followed by decode() per frame.
std::vector<std::vector<Detection>> infer(Detector& model, std::span<const Image> images,
                                          double threshold = 0.5,
                                          DecodeMode mode = DecodeMode::normalized);

}  // namespace spnet
