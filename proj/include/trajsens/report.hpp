#pragma once

// Tabular, JSON and SVG renderings of sensitivity sets. All output is a pure
// function of the sets, so identical analyses give byte-identical files.

#include <filesystem>
#include <span>
#include <string>

#include "trajsens/attribution.hpp"

namespace trajsens {

enum class ReportFormat { Table, TransformedTable, PlotData, Svg };

/// feature,kind,epsilon,n,q1,q2,q3,mean,zero_baseline_count
std::string attribution_records(std::span<const SensitivitySet> sets);

/// feature,kind,epsilon,n,q1,q2,q3,mean,lambda,outlier_count. Quartiles come
/// from the raw scores, or from the Yeo-Johnson transformed scores.
std::string report_table(std::span<const SensitivitySet> sets, bool transformed);

/// Raw and transformed boxplot summaries, outliers included.
std::string plot_data(std::span<const SensitivitySet> sets);

/// One horizontal boxplot row per set on the transformed scale.
std::string boxplot_svg(std::span<const SensitivitySet> sets, const std::string& title);

std::string render_report(std::span<const SensitivitySet> sets, ReportFormat format,
                          const std::string& title = "sensitivity");
void emit_report(std::span<const SensitivitySet> sets, const std::filesystem::path& path,
                 ReportFormat format, const std::string& title = "sensitivity");

/// Scores with their labels, for handing sets between runs.
std::string serialize_sets(std::span<const SensitivitySet> sets);
std::vector<SensitivitySet> parse_sets(const std::string& text);

/// Writes text to a file, throwing Error if the path is unwritable.
void write_text(const std::filesystem::path& path, const std::string& text);

/// Fixed "%.10g" rendering used by every emitted number.
std::string format_number(double v);

}  // namespace trajsens
