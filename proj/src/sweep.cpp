#include "depthbins/sweep.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "depthbins/train.hpp"
#include "json.hpp"

namespace depthbins {

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "num_queries") return SweepAxis::kNumQueries;
  if (text == "scales" || text == "scales_used") return SweepAxis::kScales;
  throw std::invalid_argument("unknown sweep axis: " + text);
}

const char* sweep_axis_name(SweepAxis axis) {
  return axis == SweepAxis::kNumQueries ? "num_queries" : "scales";
}

std::vector<int> scales_for_count(int count) {
  if (count < 1 || count > 4) throw std::invalid_argument("scale count must be in [1, 4]");
  std::vector<int> out;
  for (int level = 4; level > 4 - count; --level) out.push_back(level);
  return out;
}

namespace {

std::string scales_label(const std::vector<int>& levels) {
  std::string s;
  for (auto it = levels.rbegin(); it != levels.rend(); ++it) {
    if (!s.empty()) s += ',';
    s += "f_" + std::to_string(*it);
  }
  return s;
}

}  // namespace

SweepResult ablation_sweep(const RunConfig& base, SweepAxis axis, const std::vector<int>& values,
                           const std::vector<ImageSample>& train, const std::vector<ImageSample>& eval,
                           const SweepOptions& opts, std::ostream* log) {
  if (values.empty()) throw std::invalid_argument("ablation_sweep: no axis values");
  SweepResult result;
  result.axis = axis;
  const double mid = 0.5 * (base.model.range.d_min + base.model.range.d_max);
  result.baseline = evaluate_dataset(
                        [mid](const Tensor& rgb) { return Tensor({rgb.dim(0), rgb.dim(1), 1}, static_cast<Scalar>(mid)); },
                        eval, CropSpec::none(), base.model.range)
                        .aggregate;

  for (int value : values) {
    RunConfig cfg = base;
    SweepRow row;
    row.value = value;
    if (axis == SweepAxis::kNumQueries) {
      cfg.model.decoder.num_queries = value;
      row.label = std::to_string(value);
    } else {
      cfg.model.decoder.scales_used = scales_for_count(value);
      row.label = scales_label(cfg.model.decoder.scales_used);
    }
    row.layers = cfg.model.decoder.num_scales() * cfg.model.decoder.layers_per_scale;
    if (!base.output_dir.empty()) {
      cfg.output_dir = base.output_dir + "/" + sweep_axis_name(axis) + "_" + std::to_string(value);
    }
    if (log) *log << "sweep " << sweep_axis_name(axis) << '=' << row.label << " layers=" << row.layers << '\n';

    Trainer trainer(cfg, train);
    try {
      trainer.run(nullptr);
      row.final_loss = trainer.history().back().loss;
      row.report = evaluate_dataset(make_predictor(trainer.model()), eval, CropSpec::none(), cfg.model.range).aggregate;
      if (row.report.delta1 < result.baseline.delta1 + opts.convergence_margin) {
        row.converged = false;
        row.note = "delta1 at the constant-prediction floor";
      }
    } catch (const TrainingDiverged& e) {
      row.converged = false;
      row.note = e.what();
    }
    if (log) {
      *log << "  delta1=" << row.report.delta1 << " abs_rel=" << row.report.abs_rel
           << (row.converged ? "" : " (not converged: " + row.note + ")") << '\n';
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::vector<std::string> sweep_table_columns(SweepAxis axis) {
  std::vector<std::string> cols;
  if (axis == SweepAxis::kNumQueries) {
    cols.push_back("# of queries");
  } else {
    cols.push_back("f^e");
    cols.push_back("# layers");
  }
  for (const char* c : {"δ1", "δ2", "δ3", "REL", "RMS", "log10"}) cols.emplace_back(c);
  return cols;
}

std::string format_sweep_table(const SweepResult& result) {
  const auto cols = sweep_table_columns(result.axis);
  std::ostringstream os;
  os << '|';
  for (const auto& c : cols) os << ' ' << c << " |";
  os << "\n|";
  for (std::size_t i = 0; i < cols.size(); ++i) os << "---|";
  os << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& r : result.rows) {
    os << "| " << r.label << " |";
    if (result.axis == SweepAxis::kScales) os << ' ' << r.layers << " |";
    if (!r.converged) {
      os << " Not Converge |";
      for (int i = 1; i < 6; ++i) os << " |";
    } else {
      const auto& m = r.report;
      for (double v : {m.delta1, m.delta2, m.delta3, m.abs_rel, m.rmse, m.log10}) os << ' ' << v << " |";
    }
    os << '\n';
  }
  return os.str();
}

std::string sweep_to_json(const SweepResult& result) {
  nlohmann::ordered_json j;
  j["axis"] = sweep_axis_name(result.axis);
  j["columns"] = sweep_table_columns(result.axis);
  j["baseline"] = nlohmann::ordered_json::parse(to_json(result.baseline));
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : result.rows) {
    nlohmann::ordered_json row;
    row["value"] = r.value;
    row["label"] = r.label;
    row["layers"] = r.layers;
    row["converged"] = r.converged;
    row["note"] = r.note;
    row["final_loss"] = std::isfinite(r.final_loss) ? nlohmann::ordered_json(r.final_loss) : nlohmann::ordered_json(nullptr);
    row["metrics"] = nlohmann::ordered_json::parse(to_json(r.report));
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump(2);
}

}  // namespace depthbins
