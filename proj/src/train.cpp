#include "depthbins/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>

#include "depthbins/ops.hpp"
#include "json.hpp"

namespace depthbins {

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes little-endian floats");

namespace {

constexpr char kMagic[8] = {'D', 'B', 'C', 'K', 'P', 'T', '0', '1'};

void write_tensors(std::ostream& out, const std::vector<NamedTensor>& ts) {
  for (const auto& t : ts) {
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(Scalar)));
  }
}

nlohmann::json describe(const std::vector<NamedTensor>& ts) {
  auto arr = nlohmann::json::array();
  for (const auto& t : ts) arr.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  return arr;
}

std::vector<NamedTensor> read_tensors(std::istream& in, const nlohmann::json& desc) {
  std::vector<NamedTensor> out;
  for (const auto& d : desc) {
    NamedTensor t{d.at("name").get<std::string>(), Tensor(d.at("shape").get<std::vector<int>>())};
    in.read(reinterpret_cast<char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * sizeof(Scalar)));
    if (!in) throw CheckpointError("checkpoint payload truncated at " + t.name);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> snapshot(const ParameterStore& store, const std::vector<Tensor>* moments = nullptr) {
  std::vector<NamedTensor> out;
  const auto params = store.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({params[i]->name, moments ? (*moments)[i] : params[i]->value});
  }
  return out;
}

void copy_into(const std::vector<NamedTensor>& src, const std::vector<Parameter*>& params,
               const std::function<Tensor&(std::size_t)>& dst) {
  if (src.size() != params.size()) throw CheckpointError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (src[i].name != params[i]->name || src[i].value.shape() != params[i]->value.shape()) {
      throw CheckpointError("checkpoint tensor " + src[i].name + " does not match model parameter " +
                            params[i]->name);
    }
    dst(i) = src[i].value;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["config"] = ckpt.config_text;
  header["iteration"] = ckpt.iteration;
  header["optimizer_steps"] = ckpt.optimizer_steps;
  auto hist = nlohmann::json::array();
  for (const auto& h : ckpt.history) hist.push_back({h.step, h.lr, h.loss});
  header["history"] = hist;
  header["params"] = describe(ckpt.params);
  header["first_moments"] = describe(ckpt.first_moments);
  header["second_moments"] = describe(ckpt.second_moments);
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    write_tensors(out, ckpt.params);
    write_tensors(out, ckpt.first_moments);
    write_tensors(out, ckpt.second_moments);
    out.flush();
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a checkpoint: " + path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 30)) throw CheckpointError("corrupt checkpoint header");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint c;
  c.config_text = header.at("config").get<std::string>();
  c.iteration = header.at("iteration").get<int>();
  c.optimizer_steps = header.at("optimizer_steps").get<std::int64_t>();
  for (const auto& h : header.at("history")) c.history.push_back({h[0].get<int>(), h[1].get<double>(), h[2].get<double>()});
  c.params = read_tensors(in, header.at("params"));
  c.first_moments = read_tensors(in, header.at("first_moments"));
  c.second_moments = read_tensors(in, header.at("second_moments"));
  return c;
}

void restore_parameters(DepthModel& model, const Checkpoint& ckpt) {
  auto params = model.parameters().all();
  copy_into(ckpt.params, params, [&](std::size_t i) -> Tensor& { return params[i]->value; });
}

LoadedModel load_model(const std::filesystem::path& checkpoint_path) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  LoadedModel out;
  out.config = parse_run_config(ckpt.config_text);
  out.model = std::make_unique<DepthModel>(out.config.model);
  restore_parameters(*out.model, ckpt);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ImageSample> load_training_data(const RunConfig& cfg) {
  if (cfg.data.root.empty()) {
    return synthesize_dataset(cfg.data.count, cfg.data.archetypes, cfg.data.height, cfg.data.width, cfg.model.range,
                              cfg.data.seed);
  }
  const auto manifest = read_manifest(cfg.data.root, cfg.data.depth_scale, cfg.model.decoder.scene_classes);
  return load_dataset(manifest, cfg.model.range);
}

Trainer::Trainer(RunConfig cfg, std::vector<ImageSample> data)
    : cfg_(std::move(cfg)),
      data_(std::move(data)),
      model_((cfg_.validate(), std::make_unique<DepthModel>(cfg_.model))),
      optimizer_(model_->parameters(), AdamWConfig{cfg_.optim.beta1, cfg_.optim.beta2, cfg_.optim.weight_decay,
                                                   cfg_.optim.eps}) {
  if (data_.empty()) throw std::invalid_argument("Trainer: empty training set");
}

std::vector<int> Trainer::batch_indices(int step) const {
  const std::int64_t n = static_cast<std::int64_t>(data_.size());
  const std::int64_t b = cfg_.optim.batch_size;
  std::vector<int> out;
  std::int64_t cached_epoch = -1;
  std::vector<int> perm;
  for (std::int64_t j = 0; j < b; ++j) {
    const std::int64_t pos = static_cast<std::int64_t>(step) * b + j;
    const std::int64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      perm.resize(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      std::mt19937_64 rng(mix_seed(mix_seed(cfg_.seed, 0xba7c4), static_cast<std::uint64_t>(epoch)));
      // Fisher-Yates with an explicit draw so the order does not depend on
      // the standard library's shuffle implementation.
      for (std::int64_t i = n - 1; i > 0; --i) {
        const auto k = static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(k)]);
      }
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(pos % n)]);
  }
  return out;
}

std::filesystem::path Trainer::dump_batch(int step, const std::vector<int>& batch, const std::string& reason) const {
  if (cfg_.output_dir.empty()) return {};
  try {
    const auto dir = std::filesystem::path(cfg_.output_dir) / ("nan_dump_step" + std::to_string(step));
    std::filesystem::create_directories(dir);
    std::ofstream info(dir / "diagnostics.txt");
    info << "step " << step << "\nreason " << reason << "\nbatch";
    for (int i : batch) info << ' ' << i;
    info << "\n";
    for (std::size_t j = 0; j < batch.size(); ++j) {
      ImageSample s = data_[static_cast<std::size_t>(batch[j])];
      s.scene_label = std::clamp(s.scene_label, 0, std::max(0, cfg_.model.decoder.scene_classes - 1));
      save_sample(dir, std::to_string(batch[j]), s, cfg_.data.depth_scale);
    }
    return dir;
  } catch (const std::exception&) {
    return {};
  }
}

StepResult Trainer::step() {
  if (iteration_ >= cfg_.optim.total_iters) throw std::logic_error("Trainer::step: run already finished");
  StepResult r;
  r.step = iteration_;
  r.lr = lr_schedule(iteration_, cfg_.optim.total_iters, cfg_.optim.base_lr, cfg_.optim.warmup_frac);
  const auto batch = batch_indices(iteration_);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool augmenting = cfg_.data.augment.hflip || cfg_.data.augment.color_jitter || cfg_.data.augment.random_crop;

  model_->parameters().zero_grad();
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const ImageSample& raw = data_[static_cast<std::size_t>(batch[j])];
    ImageSample aug;
    if (augmenting) aug = augment(raw, cfg_.data.augment, mix_seed(mix_seed(cfg_.seed, iteration_), j));
    const ImageSample& sample = augmenting ? aug : raw;

    Graph g(true);
    ForwardResult fwd = model_->forward(g, sample.rgb);
    SampleLoss loss = model_->loss(fwd, sample, cfg_.loss);
    const double value = loss.total->value[0];
    if (!std::isfinite(value)) {
      const auto dir = dump_batch(iteration_, batch, "non-finite loss on sample " + std::to_string(batch[j]));
      throw TrainingDiverged("non-finite loss at step " + std::to_string(iteration_) +
                                 (dir.empty() ? "" : "; batch dumped to " + dir.string()),
                             iteration_, dir);
    }
    r.loss += value * inv_b;
    if (r.terms.reg.empty()) {
      r.terms.reg.assign(loss.terms.reg.size(), 0.0);
      r.terms.cls.assign(loss.terms.cls.size(), 0.0);
    }
    for (std::size_t k = 0; k < loss.terms.reg.size(); ++k) r.terms.reg[k] += loss.terms.reg[k] * inv_b;
    for (std::size_t k = 0; k < loss.terms.cls.size(); ++k) r.terms.cls[k] += loss.terms.cls[k] * inv_b;
    g.backward(ops::scale(loss.total, static_cast<Scalar>(inv_b)));
  }

  r.grad_norm = clip_grad_norm(model_->parameters(), cfg_.optim.clip_norm);
  if (!std::isfinite(r.grad_norm)) {
    const auto dir = dump_batch(iteration_, batch, "non-finite gradient");
    throw TrainingDiverged("non-finite gradient at step " + std::to_string(iteration_), iteration_, dir);
  }
  optimizer_.step(r.lr);
  history_.push_back({iteration_, r.lr, r.loss});
  ++iteration_;
  return r;
}

void write_step_log(std::ostream& out, const StepResult& r, int scales, int layers_per_scale) {
  for (int s = 0; s < scales; ++s) {
    for (int l = 0; l < layers_per_scale; ++l) {
      const std::size_t k = static_cast<std::size_t>(s * layers_per_scale + l);
      out << r.step << ' ' << s + 1 << ' ' << l + 1 << ' ' << std::setprecision(6) << r.terms.reg.at(k) << ' '
          << (k < r.terms.cls.size() ? r.terms.cls[k] : 0.0) << ' ' << r.loss << '\n';
    }
  }
}

void Trainer::run(std::ostream* log, int until) {
  const int total = cfg_.optim.total_iters;
  if (until < 0) until = total;
  until = std::min(until, total);
  const auto ckpt_path = std::filesystem::path(cfg_.output_dir) / "checkpoint.bin";
  if (log && iteration_ == 0) *log << "# step s l L_reg L_cls total\n";
  while (iteration_ < until) {
    const StepResult r = step();
    if (log && cfg_.log_every > 0 && (r.step % cfg_.log_every == 0 || iteration_ == total)) {
      write_step_log(*log, r, cfg_.model.decoder.num_scales(), cfg_.model.decoder.layers_per_scale);
      log->flush();
    }
    if (!cfg_.output_dir.empty() && cfg_.checkpoint_every > 0 && iteration_ % cfg_.checkpoint_every == 0) {
      save_checkpoint(ckpt_path, checkpoint());
    }
  }
  if (!cfg_.output_dir.empty() && iteration_ == total) save_checkpoint(ckpt_path, checkpoint());
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = to_text(cfg_);
  c.iteration = iteration_;
  c.optimizer_steps = optimizer_.steps_taken();
  c.history = history_;
  c.params = snapshot(model_->parameters());
  c.first_moments = snapshot(model_->parameters(), &optimizer_.first_moments());
  c.second_moments = snapshot(model_->parameters(), &optimizer_.second_moments());
  return c;
}

void Trainer::restore(const Checkpoint& ckpt) {
  restore_parameters(*model_, ckpt);
  auto params = model_->parameters().all();
  copy_into(ckpt.first_moments, params, [&](std::size_t i) -> Tensor& { return optimizer_.first_moments()[i]; });
  copy_into(ckpt.second_moments, params, [&](std::size_t i) -> Tensor& { return optimizer_.second_moments()[i]; });
  optimizer_.set_steps_taken(ckpt.optimizer_steps);
  iteration_ = ckpt.iteration;
  history_ = ckpt.history;
}

DepthPredictor make_predictor(const DepthModel& model) {
  return [&model](const Tensor& rgb) { return model.predict(rgb).output.depth; };
}

}  // namespace depthbins
