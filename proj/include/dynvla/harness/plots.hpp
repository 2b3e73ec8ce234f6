#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dynvla/world/render.hpp"

namespace dynvla::harness {

// Whitespace-separated telemetry with a header line of column names.
struct Telemetry {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  // Throws FormatError for an unknown column.
  std::vector<double> column(const std::string& name) const;
  static Telemetry parse(const std::string& text);
  static Telemetry read(const std::filesystem::path& path);
};

struct Series {
  std::string name;
  std::vector<double> x, y;
};

// Fixed-size SVG line chart; output depends only on the inputs.
std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<Series>& series);

struct Panel {
  std::string caption;
  world::Observation image;
};
// Panels side by side, one rect per pixel.
std::string panels_svg(const std::vector<Panel>& panels, int scale = 3);

// Transfer trial file written by the transfer demo: observations named
// current, transferred and future.
void write_transfer_trial(const std::filesystem::path& path, const world::Observation& current,
                          const world::Observation& transferred, const world::Observation& future);

struct PlotReport {
  std::vector<std::filesystem::path> written;
  std::vector<std::string> skipped;
};

// Reads <run>/tokenizer*/telemetry.txt, <run>/rft/telemetry.txt and
// <run>/transfer/trial_*.arrays; writes SVGs under <run>/plots.
PlotReport emit_plots(const std::filesystem::path& run_dir);

}  // namespace dynvla::harness
