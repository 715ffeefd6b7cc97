#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace irisseg {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Figure {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  /// Fixed [0, 1] axes, for precision-recall plots.
  bool unit_axes = false;
};

/// Line chart with labeled axes and a legend, written as PNG. Throws
/// UserError for a figure without points and IoFailure when writing fails.
void render_figure(const Figure& figure, const std::filesystem::path& png);

/// Loss series from a CSV whose first column is `epoch`. A TrainLog file
/// (epoch,mean_loss,seconds) yields one series named `label` (file stem if
/// empty); a curves file (epoch,<arm>,...) yields one series per column.
/// Throws MalformedCsv.
std::vector<Series> read_loss_series(const std::filesystem::path& csv, const std::string& label = {});

/// Precision over recall from a threshold,precision,recall CSV. Throws
/// MalformedCsv.
Series read_pr_series(const std::filesystem::path& csv, const std::string& label = {});

}  // namespace irisseg
