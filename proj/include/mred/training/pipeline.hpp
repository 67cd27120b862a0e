#pragma once

// End-to-end configuration shared by the CLI and the acceptance suite, read
// from one JSON file. Sections (all optional, defaults in brackets):
//   data      {train [17500], test [2500], seed [0]}
//   codec     {epochs [60], batch_size [32], learning_rate [2e-3], seed [0]}
//   encoders  {steps [1500], batch_size [64], learning_rate [1e-3], seed [0]}
//   generator {channels, heads, cond_dim, time_dim, lora_rank, lora_alpha, timesteps, beta_start, beta_end}
//   base      TrainConfig keys (stage forced to base)
//   finetune  TrainConfig keys (stage forced to finetune)
//   eval      EvalConfig keys, with "sampling" {sampler, steps, tau_start, init_from_reference}

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mred/codec/codec.hpp"
#include "mred/diffusion/generator.hpp"
#include "mred/encoders/contrastive.hpp"
#include "mred/evalsuite/protocols.hpp"
#include "mred/synthdata/triplet.hpp"
#include "mred/training/config.hpp"

namespace mred::train {

struct DataConfig {
  std::size_t train = 17500;
  std::size_t test = 2500;
  std::uint64_t seed = 0;
};

struct PipelineConfig {
  DataConfig data;
  codec::CodecTrainConfig codec;
  enc::ContrastiveConfig encoders;
  diff::GeneratorConfig generator;
  TrainConfig base;
  TrainConfig finetune;
  eval::EvalConfig eval;

  static PipelineConfig from_json(const nlohmann::json& j);
  static PipelineConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

/// Train and test splits drawn from independent seed streams of data.seed.
std::vector<synth::TripletSpec> train_split(const DataConfig& d);
std::vector<synth::TripletSpec> test_split(const DataConfig& d);

/// Distinct images (references and targets) appearing in `specs`, in index order.
std::vector<int> distinct_image_indices(const std::vector<synth::TripletSpec>& specs);
std::vector<Image> render_indices(const std::vector<int>& indices);
std::vector<std::string> captions_of(const std::vector<int>& indices);

}  // namespace mred::train
