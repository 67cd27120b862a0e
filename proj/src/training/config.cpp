#include "mred/training/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mred/common/error.hpp"

namespace mred::train {

std::string to_string(Stage s) { return s == Stage::Base ? "base" : "finetune"; }

Stage parse_stage(const std::string& s) {
  if (s == "base") return Stage::Base;
  if (s == "finetune") return Stage::Finetune;
  throw Error("unknown stage '" + s + "'");
}

LambdaSchedule LambdaSchedule::parse(const std::string& s) {
  LambdaSchedule l;
  if (s == "down" || s == "linear_down") {
    l.kind = Kind::LinearDown;
  } else if (s == "up" || s == "linear_up") {
    l.kind = Kind::LinearUp;
  } else if (s.starts_with("fix:") || s.starts_with("fixed:")) {
    l.kind = Kind::Fixed;
    try {
      l.value = std::stod(s.substr(s.find(':') + 1));
    } catch (const std::exception&) {
      throw Error("bad lambda value in '" + s + "'");
    }
    if (!(l.value >= 0.0 && l.value <= 1.0)) throw Error("fixed lambda must be in [0, 1]");
  } else {
    throw Error("unknown lambda schedule '" + s + "' (expected down, up or fix:V)");
  }
  return l;
}

std::string LambdaSchedule::to_string() const {
  switch (kind) {
    case Kind::LinearDown:
      return "down";
    case Kind::LinearUp:
      return "up";
    case Kind::Fixed: {
      std::ostringstream os;
      os << "fix:" << value;
      return os.str();
    }
  }
  return "down";
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"beta1", beta1},
          {"beta2", beta2},
          {"weight_decay", weight_decay},
          {"warmup_fraction", warmup_fraction},
          {"epochs", epochs},
          {"steps_per_epoch", steps_per_epoch},
          {"batch_size", batch_size},
          {"seed", seed},
          {"stage", train::to_string(stage)},
          {"lambda", lambda.to_string()},
          {"checkpoint_dir", checkpoint_dir},
          {"collapse_window", collapse_window},
          {"collapse_factor", collapse_factor},
          {"log_every", log_every},
          {"loss_weighting", loss_weighting}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.epochs = j.value("epochs", c.epochs);
  c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("stage")) c.stage = parse_stage(j.at("stage").get<std::string>());
  if (j.contains("lambda")) c.lambda = LambdaSchedule::parse(j.at("lambda").get<std::string>());
  c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir);
  c.collapse_window = j.value("collapse_window", c.collapse_window);
  c.collapse_factor = j.value("collapse_factor", c.collapse_factor);
  c.log_every = j.value("log_every", c.log_every);
  c.loss_weighting = j.value("loss_weighting", c.loss_weighting);
  if (c.batch_size < 1 || c.epochs < 1) throw Error("batch_size and epochs must be positive");
  if (c.warmup_fraction < 0.0 || c.warmup_fraction >= 1.0) throw Error("warmup_fraction must be in [0, 1)");
  return c;
}

TrainConfig TrainConfig::load(const std::string& path, TrainConfig defaults) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  return from_json(nlohmann::json::parse(in), std::move(defaults));
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::load(const std::string& path) { return load(path, TrainConfig{}); }

double learning_rate_at(int step, int total_steps, const TrainConfig& cfg) {
  const int warmup = static_cast<int>(std::ceil(cfg.warmup_fraction * total_steps));
  if (step < warmup) return cfg.learning_rate * static_cast<double>(step + 1) / warmup;
  const double t = static_cast<double>(step - warmup) / std::max(1, total_steps - warmup);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * std::min(1.0, t)));
}

}  // namespace mred::train
