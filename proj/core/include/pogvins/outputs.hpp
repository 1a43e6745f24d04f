#pragma once

#include <string>
#include <vector>

#include "pogvins/kv_config.hpp"
#include "pogvins/metrics.hpp"

namespace pogvins {

/// report.txt contents: aggregate statistics plus caller-supplied entries.
KvConfig report_to_kv(const ErrorReport& report);

/// Writes trajectory.csv, truth.csv, errors.csv, cdf.csv, report.txt and plot.svg into
/// `dir` (created if missing). Throws IoError.
void emit_outputs(const std::string& dir, const std::vector<TrajectorySample>& estimate,
                  const std::vector<TrajectorySample>& truth, const ErrorReport& report,
                  const KvConfig& extra = {});

/// Reads errors.csv back into a report with recomputed aggregates (no normalization).
ErrorReport read_errors_csv(const std::string& path);

std::string render_svg(const std::vector<TrajectorySample>& estimate,
                       const std::vector<TrajectorySample>& truth, const ErrorReport& report,
                       const std::string& title);

/// Regenerates plot.svg from the CSVs of an output directory.
void plot_directory(const std::string& dir);

}  // namespace pogvins
