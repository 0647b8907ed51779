#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depthbins/data.hpp"
#include "depthbins/model.hpp"
#include "depthbins/objectives.hpp"

namespace depthbins {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataConfig {
  /// Dataset directory; empty means "synthesize in memory".
  std::string root;
  int depth_scale = 1000;
  int count = 16;
  int height = 128;
  int width = 128;
  std::vector<Archetype> archetypes{Archetype::kNearField, Archetype::kFarField, Archetype::kCorridor,
                                    Archetype::kCluttered};
  std::uint64_t seed = 1;
  AugmentFlags augment;
};

struct OptimConfig {
  int batch_size = 8;
  double base_lr = 1e-4;
  int total_iters = 2000;
  double warmup_frac = 0.3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
  /// Global gradient-norm clip; 0 disables it.
  double clip_norm = 0.0;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  DataConfig data;
  OptimConfig optim;
  std::uint64_t seed = 0;
  int log_every = 50;
  int checkpoint_every = 0;  ///< 0: only at the end
  std::string output_dir = "run";

  void validate() const;
};

/// Flat `key = value` text, one entry per line; `#` starts a comment.
/// Unknown keys are rejected. List values are comma separated.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::filesystem::path& path);
/// Applies a single `key=value` override.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
/// Every key with its current value; parse_run_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);

Archetype parse_archetype(const std::string& text);

}  // namespace depthbins
