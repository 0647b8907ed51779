// Command-line entry point: train, eval, infer, sweep, viz, generate.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "depthbins/config.hpp"
#include "depthbins/image_io.hpp"
#include "depthbins/metrics.hpp"
#include "depthbins/sweep.hpp"
#include "depthbins/train.hpp"
#include "depthbins/viz.hpp"

using namespace depthbins;
namespace fs = std::filesystem;

namespace {

RunConfig build_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::vector<Archetype> parse_archetypes(const std::string& text) {
  std::vector<Archetype> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_archetype(item));
  if (out.empty()) throw ConfigError("no archetypes given");
  return out;
}

int cmd_train(const std::string& config, const std::vector<std::string>& overrides, const std::string& resume) {
  const RunConfig cfg = build_config(config, overrides);
  fs::create_directories(cfg.output_dir);
  write_text(fs::path(cfg.output_dir) / "config.txt", to_text(cfg));
  Trainer trainer(cfg, load_training_data(cfg));
  if (!resume.empty()) trainer.restore(load_checkpoint(resume));
  std::ofstream log(fs::path(cfg.output_dir) / "train.log", resume.empty() ? std::ios::trunc : std::ios::app);
  struct Tee : std::streambuf {
    std::streambuf *a, *b;
    Tee(std::streambuf* x, std::streambuf* y) : a(x), b(y) {}
    int overflow(int c) override {
      if (c == EOF) return !EOF;
      return (a->sputc(static_cast<char>(c)) == EOF || b->sputc(static_cast<char>(c)) == EOF) ? EOF : c;
    }
    int sync() override { return (a->pubsync() == 0 && b->pubsync() == 0) ? 0 : -1; }
  } tee(log.rdbuf(), std::cout.rdbuf());
  std::ostream out(&tee);
  try {
    trainer.run(&out);
  } catch (const TrainingDiverged& e) {
    std::cerr << "training aborted: " << e.what() << '\n';
    return 3;
  }
  const auto report =
      evaluate_dataset(make_predictor(trainer.model()), trainer.data(), CropSpec::none(), cfg.model.range);
  write_text(fs::path(cfg.output_dir) / "train_metrics.json", to_json(report.aggregate));
  std::cout << "training-set metrics:\n" << to_json(report.aggregate) << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& crop, int depth_scale,
             const std::string& out) {
  const LoadedModel m = load_model(ckpt);
  const int scale = depth_scale > 0 ? depth_scale : m.config.data.depth_scale;
  const auto manifest = read_manifest(data, scale, m.config.model.decoder.scene_classes);
  const auto dataset = load_dataset(manifest, m.config.model.range);
  const auto result = evaluate_dataset(make_predictor(*m.model), dataset, CropSpec::parse(crop), m.config.model.range);
  const std::string json = to_json(result.aggregate);
  if (!out.empty()) write_text(out, json + "\n");
  std::cout << json << '\n';
  if (result.skipped > 0) std::cerr << result.skipped << " image(s) had no valid pixels and were skipped\n";
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image, const std::string& out_dir) {
  const LoadedModel m = load_model(ckpt);
  const Tensor rgb = load_rgb(image);
  const auto& range = m.config.model.range;
  const Prediction p = m.model->predict(rgb);
  fs::create_directories(out_dir);
  const int h = rgb.dim(0), w = rgb.dim(1);
  std::vector<std::uint16_t> raw(p.output.depth.size());
  const int scale = m.config.data.depth_scale;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    raw[i] = static_cast<std::uint16_t>(std::clamp(std::lround(p.output.depth[i] * scale), 0L, 65535L));
  }
  write_png_gray16(fs::path(out_dir) / "depth16.png", w, h, raw);
  heat_map(p.output.depth, range.d_max).save(fs::path(out_dir) / "depth.png");
  heat_map(p.output.uncertainty, 0.5 * range.span()).save(fs::path(out_dir) / "uncertainty.png");
  std::cout << "wrote depth16.png (depth * " << scale << "), depth.png, uncertainty.png to " << out_dir << '\n';
  if (!p.scene_logits.empty()) {
    const auto best = std::max_element(p.scene_logits.begin(), p.scene_logits.end()) - p.scene_logits.begin();
    std::cout << "scene class " << best << '\n';
  }
  return 0;
}

int cmd_sweep(const std::string& config, const std::vector<std::string>& overrides, const std::string& axis_name,
              const std::vector<int>& values, int eval_count, const std::string& out_dir) {
  RunConfig cfg = build_config(config, overrides);
  cfg.output_dir = out_dir;
  const SweepAxis axis = parse_sweep_axis(axis_name);
  const auto train = load_training_data(cfg);
  RunConfig eval_cfg = cfg;
  eval_cfg.data.count = eval_count;
  eval_cfg.data.seed = mix_seed(cfg.data.seed, 0xe7a1);
  const auto eval = eval_count > 0 ? load_training_data(eval_cfg) : train;
  const auto result = ablation_sweep(cfg, axis, values, train, eval, {}, &std::cout);
  const std::string table = format_sweep_table(result);
  write_text(fs::path(out_dir) / (std::string("sweep_") + sweep_axis_name(axis) + ".md"), table);
  write_text(fs::path(out_dir) / (std::string("sweep_") + sweep_axis_name(axis) + ".json"), sweep_to_json(result));
  std::cout << table;
  return 0;
}

int cmd_viz(const std::string& ckpt, const std::vector<std::string>& what, const std::string& image,
            std::uint64_t sample_seed, const std::string& out_dir, int query) {
  const LoadedModel m = load_model(ckpt);
  Tensor rgb;
  if (!image.empty()) {
    rgb = load_rgb(image);
  } else {
    const auto& d = m.config.data;
    rgb = generate_synthetic_scene(SceneConfig::make(d.archetypes.front(), d.height, d.width, sample_seed)).rgb;
  }
  VizOptions opts;
  opts.query = query;
  for (const auto& w : what) {
    for (const auto& path : visualize(*m.model, rgb, parse_viz_kind(w), out_dir, opts)) {
      std::cout << path.string() << '\n';
    }
  }
  return 0;
}

int cmd_generate(const std::string& out_dir, int count, int height, int width, const std::string& archetypes,
                 std::uint64_t seed, int depth_scale, double d_max) {
  const DepthRange range{1e-3, d_max};
  const auto samples = synthesize_dataset(count, parse_archetypes(archetypes), height, width, range, seed);
  save_dataset(out_dir, samples, depth_scale);
  std::cout << "wrote " << samples.size() << " samples to " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-bins monocular depth estimation: training, evaluation and visualization"};
  app.require_subcommand(1);

  std::string config, resume, ckpt, data, crop = "none", out, image, axis = "num_queries";
  std::string archetypes = "near_field,far_field,corridor,cluttered";
  std::vector<std::string> overrides, what;
  std::vector<int> values;
  int depth_scale = 0, eval_count = 64, count = 16, height = 128, width = 128, query = -1;
  std::uint64_t seed = 1;
  double d_max = 10.0;

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--config", config, "Flat key = value config file");
  train->add_option("--set", overrides, "Override a config entry (key=value)");
  train->add_option("--resume", resume, "Continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
  eval->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", data, "Dataset root with manifest.csv")->required();
  eval->add_option("--crop", crop, "none | eigen_nyu | garg_kitti | custom:t,b,l,r");
  eval->add_option("--depth-scale", depth_scale, "Stored depth units per metre (default: from the checkpoint)");
  eval->add_option("--out", out, "Write the JSON report here");

  auto* infer = app.add_subcommand("infer", "Predict depth for one image");
  infer->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  infer->add_option("--image", image, "Input PNG (size divisible by 32)")->required();
  infer->add_option("--out", out, "Output directory")->default_val("infer_out");

  auto* sweep = app.add_subcommand("sweep", "Ablation over the number of queries or decoder scales");
  sweep->add_option("--config", config, "Base config file");
  sweep->add_option("--set", overrides, "Override a config entry (key=value)");
  sweep->add_option("--axis", axis, "num_queries | scales")->default_val("num_queries");
  sweep->add_option("--values", values, "Comma-separated axis values")->delimiter(',')->required();
  sweep->add_option("--eval-count", eval_count, "Held-out synthetic images (0: evaluate on the training set)");
  sweep->add_option("--out", out, "Output directory")->default_val("sweep_out");

  auto* viz = app.add_subcommand("viz", "Export visualizations");
  viz->add_option("--ckpt", ckpt, "Checkpoint file")->required();
  viz->add_option("--what", what, "bins, prob, uncertainty, attention, query_similarity, pointcloud, depth")
      ->delimiter(',')
      ->required();
  viz->add_option("--image", image, "Input PNG; default is a synthetic scene");
  viz->add_option("--seed", seed, "Seed of the synthetic scene when no image is given");
  viz->add_option("--query", query, "Bins query for query_similarity (default: last)");
  viz->add_option("--out", out, "Output directory")->default_val("viz_out");

  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset to disk");
  gen->add_option("--out", out, "Dataset root")->required();
  gen->add_option("--count", count, "Number of samples");
  gen->add_option("--height", height, "Image height (multiple of 32)");
  gen->add_option("--width", width, "Image width (multiple of 32)");
  gen->add_option("--archetypes", archetypes, "Comma-separated scene archetypes");
  gen->add_option("--seed", seed, "Base seed");
  gen->add_option("--depth-scale", depth_scale, "Stored units per metre")->default_val(1000);
  gen->add_option("--d-max", d_max, "Maximum depth in metres");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, overrides, resume);
    if (*eval) return cmd_eval(ckpt, data, crop, depth_scale, out);
    if (*infer) return cmd_infer(ckpt, image, out);
    if (*sweep) return cmd_sweep(config, overrides, axis, values, eval_count, out);
    if (*viz) return cmd_viz(ckpt, what, image, seed, out, query);
    if (*gen) return cmd_generate(out, count, height, width, archetypes, seed, depth_scale, d_max);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
