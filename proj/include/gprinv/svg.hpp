#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gprinv::svg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotLabels {
  std::string title;
  std::string x;
  std::string y;
};

/// Polyline chart with a legend, autoscaled to the data.
std::string line_plot(const std::vector<Series>& series, const PlotLabels& labels);

/// Bars over the given bin edges; an optional vertical marker (NaN for none).
std::string histogram(const std::vector<double>& edges, const std::vector<std::size_t>& counts,
                      const PlotLabels& labels, double marker);

void write(const std::filesystem::path& path, const std::string& content);

}  // namespace gprinv::svg
