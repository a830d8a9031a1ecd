#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace uxai {

/// One data row of a report CSV.
struct ReportRow {
  std::string test;
  std::string uq;
  std::string explainer;
  std::string dataset;
  std::string stage;
  std::string metric;
  std::string value;
  std::string seed;
};

/// Parses a report CSV, skipping '#' comment lines. Throws FormatError on a
/// header or column-count mismatch and on a file without data rows.
std::vector<ReportRow> parse_report_csv(std::string_view text, const std::string& source);

/// Renderer-agnostic chart description. Weight tests become line charts
/// (one series per explanation statistic against randomized fraction), data
/// tests bar charts (true vs random labels per uq/explainer pair).
nlohmann::json plot_description(std::span<const ReportRow> rows);

std::string render_svg(const nlohmann::json& description);

/// One SVG per CSV, written to out_dir; returns the written paths.
std::vector<std::filesystem::path> plot_reports(std::span<const std::filesystem::path> csv_paths,
                                                const std::filesystem::path& out_dir);

}  // namespace uxai
