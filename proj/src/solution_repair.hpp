#pragma once

#include "lasrelay/scenario.hpp"

namespace lasrelay::detail {

// Pushes sub-tolerance constraint residuals of a candidate solution to zero
// by bounded monotone power rescales (relay powers for information causality,
// PB overage for the battery cap). Geometry is never touched. Returns true
// when the repaired point passes all checks at `tol`.
bool repair_solution(Trajectory& traj, PowerSchedule& pw, const Scenario& sc, double tol);

}  // namespace lasrelay::detail
