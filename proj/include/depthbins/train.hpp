#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "depthbins/config.hpp"
#include "depthbins/metrics.hpp"
#include "depthbins/model.hpp"
#include "depthbins/optim.hpp"

namespace depthbins {

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct HistoryEntry {
  int step = 0;
  double lr = 0;
  double loss = 0;
};

/// Everything needed to continue a run bit-for-bit.
struct Checkpoint {
  std::string config_text;
  int iteration = 0;
  std::int64_t optimizer_steps = 0;
  std::vector<HistoryEntry> history;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> first_moments;
  std::vector<NamedTensor> second_moments;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary file: magic, JSON header, raw float32 payload. Written to a
/// temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint parameters into a model built from the same config.
void restore_parameters(DepthModel& model, const Checkpoint& ckpt);

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<DepthModel> model;
};
LoadedModel load_model(const std::filesystem::path& checkpoint_path);

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int step, std::filesystem::path dump)
      : std::runtime_error(what), step(step), dump_dir(std::move(dump)) {}
  int step;
  std::filesystem::path dump_dir;  ///< empty when nothing was written
};

struct StepResult {
  int step = 0;  ///< index of the step just taken (0-based)
  double lr = 0;
  double loss = 0;             ///< batch mean of the weighted total
  LayerLosses terms;           ///< batch means per trace entry
  double grad_norm = 0;        ///< before clipping
};

/// Synthesizes or loads the training set described by cfg.data.
std::vector<ImageSample> load_training_data(const RunConfig& cfg);

class Trainer {
 public:
  Trainer(RunConfig cfg, std::vector<ImageSample> data);

  /// Dataset indices used at `step`: consecutive slices of a per-epoch
  /// permutation drawn from (seed, epoch).
  std::vector<int> batch_indices(int step) const;

  StepResult step();
  /// Steps until `until` iterations are done (default: total_iters). Writes
  /// one log line per (scale, layer) every log_every steps and checkpoints
  /// into output_dir every checkpoint_every steps and at the end.
  void run(std::ostream* log = nullptr, int until = -1);

  Checkpoint checkpoint() const;
  /// Restores parameters, optimizer state, iteration and history.
  void restore(const Checkpoint& ckpt);

  int iteration() const { return iteration_; }
  const RunConfig& config() const { return cfg_; }
  DepthModel& model() { return *model_; }
  const DepthModel& model() const { return *model_; }
  const std::vector<ImageSample>& data() const { return data_; }
  const std::vector<HistoryEntry>& history() const { return history_; }

 private:
  std::filesystem::path dump_batch(int step, const std::vector<int>& batch, const std::string& reason) const;

  RunConfig cfg_;
  std::vector<ImageSample> data_;
  std::unique_ptr<DepthModel> model_;
  AdamW optimizer_;
  int iteration_ = 0;
  std::vector<HistoryEntry> history_;
};

/// Writes "# step s l L_reg L_cls total" style lines for one step.
void write_step_log(std::ostream& out, const StepResult& r, int scales, int layers_per_scale);

/// Final-layer full-resolution depth of a model, as a predictor.
DepthPredictor make_predictor(const DepthModel& model);

}  // namespace depthbins
