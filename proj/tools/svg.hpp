#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "msnode/types.hpp"

namespace msnode::cli {

struct StatePlot {
  std::string title;
  Vec times;                      // all samples, train then test
  Vec measured;
  std::optional<Vec> ms;          // multiple-shooting rollout
  std::optional<Vec> ss;          // single-shooting rollout
  double divider = 0.0;           // end of the training window
};

// Measurements as dots, predictions as polylines and a dashed divider.
// Output depends only on the inputs.
std::string render_svg(const StatePlot& plot);
void write_svg(const StatePlot& plot, const std::filesystem::path& path);

}  // namespace msnode::cli
