#include "mred/training/lambda.hpp"

#include <algorithm>

#include "mred/common/error.hpp"

namespace mred::train {

double lambda_at(int step, int total_steps, const LambdaSchedule& schedule) {
  if (total_steps <= 0) throw Error("total_steps must be positive");
  const double progress = std::clamp(static_cast<double>(step) / total_steps, 0.0, 1.0);
  switch (schedule.kind) {
    case LambdaSchedule::Kind::LinearDown:
      return 1.0 - progress;
    case LambdaSchedule::Kind::LinearUp:
      return progress;
    case LambdaSchedule::Kind::Fixed:
      return std::clamp(schedule.value, 0.0, 1.0);
  }
  return 0.0;
}

}  // namespace mred::train
