#pragma once

#include <map>
#include <string>
#include <vector>

#include "subliminal/interp.hpp"
#include "subliminal/scaling.hpp"

namespace subliminal {

// Self-contained SVG figures. Output is a pure function of the inputs.

std::string svg_scaling_curves(const std::vector<ScalingCurve>& curves, const BreakingPoint& breaking_point);

std::string svg_crossover(const CrossoverReport& report);

/// The matrices side by side, sharing one color scale.
std::string svg_heatmaps(const std::vector<WeightDiffMatrix>& matrices);

std::string svg_pca(const PCATrajectory& trajectory, const std::map<std::string, TrajectoryLabel>& labels);

}  // namespace subliminal
