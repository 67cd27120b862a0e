#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mred/common/error.hpp"

#include "mred/diffusion/generator.hpp"
#include "mred/synthdata/triplet.hpp"
#include "mred/training/config.hpp"
#include "mred/training/dataset.hpp"
#include "mred/training/losses.hpp"

namespace mred::train {

struct StepRecord {
  int step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;

  /// {"step","epoch","lr","lambda","single","recon","multi","total"}
  nlohmann::json to_json() const;
};

/// Raised on a non-finite loss, a collapse-guard trip or a modified frozen base.
/// `last_good` names the newest checkpoint written before the failure (may be empty).
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, std::string last_good)
      : Error(what + (last_good.empty() ? "" : " (last good checkpoint: " + last_good + ")")),
        last_good_(std::move(last_good)) {}
  const std::string& last_good() const { return last_good_; }

 private:
  std::string last_good_;
};

struct TrainSummary {
  std::vector<StepRecord> log;
  int total_steps = 0;
  std::string last_checkpoint;
};

/// Stage base: all U-net and pose-branch weights, single + recon.
/// Stage finetune: requires a generator whose stage() is "base"; inserts LoRA,
/// freezes the base and optimises single + recon + lambda * multi.
/// AdamW with linear warm-up and cosine decay. When cfg.checkpoint_dir is set,
/// "<stage>_last.ckpt" there is rewritten after every epoch. One JSON line per
/// logged step goes to `metrics` if given.
TrainSummary train(diff::Generator& g, const FeatureBank& bank, const std::vector<synth::TripletSpec>& data,
                   const TrainConfig& cfg, std::ostream* metrics = nullptr,
                   const std::function<void(const StepRecord&)>& on_step = {});

}  // namespace mred::train
