#include "depthbins/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>

namespace depthbins {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof()) throw ConfigError(key + ": cannot parse '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::string format(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}
std::string format(int v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(const std::string& v) { return v; }

template <class T>
std::string join(const T& values, auto&& fmt) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    out += fmt(v);
  }
  return out;
}

void assign(const std::string& key, const std::string& text, double& v) { v = parse_number<double>(key, text); }
void assign(const std::string& key, const std::string& text, int& v) { v = parse_number<int>(key, text); }
void assign(const std::string& key, const std::string& text, std::uint64_t& v) {
  v = parse_number<std::uint64_t>(key, text);
}
void assign(const std::string& key, const std::string& text, bool& v) { v = parse_bool(key, text); }
void assign(const std::string&, const std::string& text, std::string& v) { v = text; }

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class Access>
Entry scalar(std::string key, Access access) {
  return {key, [access](const RunConfig& c) { return format(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, const std::string& text) { assign(key, text, access(c)); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    // model
    t.push_back(scalar("model.seed", [](RunConfig& c) -> std::uint64_t& { return c.model.seed; }));
    t.push_back(scalar("backbone.base_channels", [](RunConfig& c) -> int& { return c.model.backbone.base_channels; }));
    t.push_back({"backbone.stage_depths",
                 [](const RunConfig& c) { return join(c.model.backbone.stage_depths, [](int v) { return format(v); }); },
                 [](RunConfig& c, const std::string& text) {
                   auto items = split_list(text);
                   if (items.size() != 4) throw ConfigError("backbone.stage_depths needs 4 values");
                   for (std::size_t i = 0; i < 4; ++i) {
                     c.model.backbone.stage_depths[i] = parse_number<int>("backbone.stage_depths", items[i]);
                   }
                 }});
    t.push_back(scalar("backbone.d_model", [](RunConfig& c) -> int& { return c.model.backbone.d_model; }));
    t.push_back({"backbone.norm",
                 [](const RunConfig& c) {
                   return std::string(c.model.backbone.norm == FeatureNorm::kGroup ? "group" : "none");
                 },
                 [](RunConfig& c, const std::string& text) {
                   if (text == "group") {
                     c.model.backbone.norm = FeatureNorm::kGroup;
                   } else if (text == "none") {
                     c.model.backbone.norm = FeatureNorm::kNone;
                   } else {
                     throw ConfigError("backbone.norm: expected group or none");
                   }
                 }});
    t.push_back(scalar("backbone.norm_groups", [](RunConfig& c) -> int& { return c.model.backbone.norm_groups; }));
    t.push_back(scalar("decoder.num_queries", [](RunConfig& c) -> int& { return c.model.decoder.num_queries; }));
    t.push_back(
        scalar("decoder.layers_per_scale", [](RunConfig& c) -> int& { return c.model.decoder.layers_per_scale; }));
    t.push_back({"decoder.scales",
                 [](const RunConfig& c) { return join(c.model.decoder.scales_used, [](int v) { return format(v); }); },
                 [](RunConfig& c, const std::string& text) {
                   c.model.decoder.scales_used.clear();
                   for (const auto& s : split_list(text)) {
                     c.model.decoder.scales_used.push_back(parse_number<int>("decoder.scales", s));
                   }
                 }});
    t.push_back(scalar("decoder.num_heads", [](RunConfig& c) -> int& { return c.model.decoder.num_heads; }));
    t.push_back(scalar("decoder.ffn_mult", [](RunConfig& c) -> int& { return c.model.decoder.ffn_mult; }));
    t.push_back(scalar("decoder.scene_classes", [](RunConfig& c) -> int& { return c.model.decoder.scene_classes; }));
    t.push_back(scalar("decoder.query_pos_std", [](RunConfig& c) -> double& { return c.model.decoder.query_pos_std; }));
    t.push_back(scalar("decoder.isolate_scene_query",
                       [](RunConfig& c) -> bool& { return c.model.decoder.isolate_scene_query; }));
    t.push_back(scalar("range.d_min", [](RunConfig& c) -> double& { return c.model.range.d_min; }));
    t.push_back(scalar("range.d_max", [](RunConfig& c) -> double& { return c.model.range.d_max; }));
    t.push_back({"model.uncertainty",
                 [](const RunConfig& c) {
                   return std::string(c.model.uncertainty == UncertaintyKind::kStdDev ? "std" : "neg_max_prob");
                 },
                 [](RunConfig& c, const std::string& text) {
                   if (text == "std") {
                     c.model.uncertainty = UncertaintyKind::kStdDev;
                   } else if (text == "neg_max_prob") {
                     c.model.uncertainty = UncertaintyKind::kNegMaxProb;
                   } else {
                     throw ConfigError("model.uncertainty: expected std or neg_max_prob");
                   }
                 }});
    // loss
    t.push_back(scalar("loss.alpha", [](RunConfig& c) -> double& { return c.loss.alpha; }));
    t.push_back(scalar("loss.lambda", [](RunConfig& c) -> double& { return c.loss.lambda; }));
    t.push_back(scalar("loss.mu", [](RunConfig& c) -> double& { return c.loss.mu; }));
    t.push_back({"loss.scale_weights",
                 [](const RunConfig& c) { return join(c.loss.scale_weights, [](double v) { return format(v); }); },
                 [](RunConfig& c, const std::string& text) {
                   c.loss.scale_weights.clear();
                   for (const auto& s : split_list(text)) {
                     c.loss.scale_weights.push_back(parse_number<double>("loss.scale_weights", s));
                   }
                 }});
    t.push_back(
        scalar("loss.reverse_scale_weights", [](RunConfig& c) -> bool& { return c.loss.reverse_scale_weights; }));
    t.push_back(scalar("loss.scene_supervision", [](RunConfig& c) -> bool& { return c.loss.scene_supervision; }));
    t.push_back(scalar("loss.pred_floor", [](RunConfig& c) -> double& { return c.loss.pred_floor; }));
    // data
    t.push_back(scalar("data.root", [](RunConfig& c) -> std::string& { return c.data.root; }));
    t.push_back(scalar("data.depth_scale", [](RunConfig& c) -> int& { return c.data.depth_scale; }));
    t.push_back(scalar("data.count", [](RunConfig& c) -> int& { return c.data.count; }));
    t.push_back(scalar("data.height", [](RunConfig& c) -> int& { return c.data.height; }));
    t.push_back(scalar("data.width", [](RunConfig& c) -> int& { return c.data.width; }));
    t.push_back({"data.archetypes",
                 [](const RunConfig& c) {
                   return join(c.data.archetypes, [](Archetype a) { return std::string(archetype_name(a)); });
                 },
                 [](RunConfig& c, const std::string& text) {
                   c.data.archetypes.clear();
                   for (const auto& s : split_list(text)) c.data.archetypes.push_back(parse_archetype(s));
                 }});
    t.push_back(scalar("data.seed", [](RunConfig& c) -> std::uint64_t& { return c.data.seed; }));
    t.push_back(scalar("data.hflip", [](RunConfig& c) -> bool& { return c.data.augment.hflip; }));
    t.push_back(scalar("data.color_jitter", [](RunConfig& c) -> bool& { return c.data.augment.color_jitter; }));
    t.push_back(scalar("data.random_crop", [](RunConfig& c) -> bool& { return c.data.augment.random_crop; }));
    t.push_back(scalar("data.crop_height", [](RunConfig& c) -> int& { return c.data.augment.crop_height; }));
    t.push_back(scalar("data.crop_width", [](RunConfig& c) -> int& { return c.data.augment.crop_width; }));
    t.push_back(scalar("data.jitter_strength", [](RunConfig& c) -> double& { return c.data.augment.jitter_strength; }));
    // optimisation
    t.push_back(scalar("train.batch_size", [](RunConfig& c) -> int& { return c.optim.batch_size; }));
    t.push_back(scalar("train.base_lr", [](RunConfig& c) -> double& { return c.optim.base_lr; }));
    t.push_back(scalar("train.total_iters", [](RunConfig& c) -> int& { return c.optim.total_iters; }));
    t.push_back(scalar("train.warmup_frac", [](RunConfig& c) -> double& { return c.optim.warmup_frac; }));
    t.push_back(scalar("train.beta1", [](RunConfig& c) -> double& { return c.optim.beta1; }));
    t.push_back(scalar("train.beta2", [](RunConfig& c) -> double& { return c.optim.beta2; }));
    t.push_back(scalar("train.weight_decay", [](RunConfig& c) -> double& { return c.optim.weight_decay; }));
    t.push_back(scalar("train.eps", [](RunConfig& c) -> double& { return c.optim.eps; }));
    t.push_back(scalar("train.clip_norm", [](RunConfig& c) -> double& { return c.optim.clip_norm; }));
    t.push_back(scalar("train.seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
    t.push_back(scalar("train.log_every", [](RunConfig& c) -> int& { return c.log_every; }));
    t.push_back(scalar("train.checkpoint_every", [](RunConfig& c) -> int& { return c.checkpoint_every; }));
    t.push_back(scalar("train.output_dir", [](RunConfig& c) -> std::string& { return c.output_dir; }));
    return t;
  }();
  return table;
}

}  // namespace

Archetype parse_archetype(const std::string& text) {
  for (int i = 0; i < kNumArchetypes; ++i) {
    const auto a = static_cast<Archetype>(i);
    if (text == archetype_name(a) || text == std::to_string(i)) return a;
  }
  throw ConfigError("unknown archetype: " + text);
}

void RunConfig::validate() const {
  model.backbone.validate();
  model.decoder.validate();
  model.range.validate();
  loss.validate();
  if (optim.batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (optim.total_iters <= 0) throw ConfigError("train.total_iters must be positive");
  if (!(optim.warmup_frac >= 0.0 && optim.warmup_frac < 1.0)) throw ConfigError("train.warmup_frac must be in [0, 1)");
  if (!(optim.base_lr >= 0.0)) throw ConfigError("train.base_lr must be non-negative");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0) || !(optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("optimizer betas must be in [0, 1)");
  }
  if (!(optim.weight_decay >= 0.0) || !(optim.eps > 0.0) || !(optim.clip_norm >= 0.0)) {
    throw ConfigError("weight_decay and clip_norm must be >= 0 and eps > 0");
  }
  if (data.root.empty()) {
    if (data.count <= 0) throw ConfigError("data.count must be positive");
    if (data.archetypes.empty()) throw ConfigError("data.archetypes must not be empty");
    if (data.height % 32 != 0 || data.width % 32 != 0 || data.height <= 0 || data.width <= 0) {
      throw ConfigError("data.height and data.width must be positive multiples of 32");
    }
  }
  if (data.depth_scale <= 0) throw ConfigError("data.depth_scale must be positive");
  if (log_every < 0 || checkpoint_every < 0) throw ConfigError("log/checkpoint intervals must be >= 0");
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = entries();
  auto it = std::find_if(table.begin(), table.end(), [&](const Entry& e) { return e.key == key; });
  if (it == table.end()) throw ConfigError("unknown config key: " + key);
  it->set(cfg, value);
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  base.validate();
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(cfg) + "\n";
  return out;
}

}  // namespace depthbins
