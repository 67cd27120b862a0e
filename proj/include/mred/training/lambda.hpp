#pragma once

#include "mred/training/config.hpp"

namespace mred::train {

/// Weight on the two-round loss at `step` of `total_steps`:
/// linear_down 1 - step/total, linear_up step/total, fixed v; always clamped to [0, 1].
double lambda_at(int step, int total_steps, const LambdaSchedule& schedule);

}  // namespace mred::train
