#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "depthbins/config.hpp"
#include "depthbins/metrics.hpp"

namespace depthbins {

enum class SweepAxis { kNumQueries, kScales };

/// "num_queries" or "scales".
SweepAxis parse_sweep_axis(const std::string& text);
const char* sweep_axis_name(SweepAxis axis);

/// Pyramid levels for a scale count k: {4}, {4, 3}, {4, 3, 2}, {4, 3, 2, 1}.
std::vector<int> scales_for_count(int count);

struct SweepRow {
  int value = 0;       ///< N, or the number of scales
  std::string label;   ///< "64", or "f_3,f_4"
  int layers = 0;      ///< decoder layers in the trace
  bool converged = true;
  std::string note;    ///< reason when not converged
  double final_loss = 0;
  MetricReport report;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::kNumQueries;
  MetricReport baseline;  ///< constant prediction at the range midpoint
  std::vector<SweepRow> rows;
};

struct SweepOptions {
  /// A run counts as converged when its delta1 beats the constant-midpoint
  /// baseline by at least this much and training stayed finite.
  double convergence_margin = 0.02;
};

/// Trains and evaluates one model per axis value. Throws std::invalid_argument
/// for an empty value list.
SweepResult ablation_sweep(const RunConfig& base, SweepAxis axis, const std::vector<int>& values,
                           const std::vector<ImageSample>& train, const std::vector<ImageSample>& eval,
                           const SweepOptions& opts = {}, std::ostream* log = nullptr);

/// Column headers of the emitted table for an axis.
std::vector<std::string> sweep_table_columns(SweepAxis axis);
/// Markdown table; non-converged rows read "Not Converge".
std::string format_sweep_table(const SweepResult& result);
std::string sweep_to_json(const SweepResult& result);

}  // namespace depthbins
