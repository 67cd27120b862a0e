#include "mred/training/pipeline.hpp"

#include <fstream>
#include <set>

#include "mred/common/error.hpp"
#include "mred/synthdata/render.hpp"

namespace mred::train {

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  PipelineConfig c;
  if (j.contains("data")) {
    const auto& d = j.at("data");
    c.data.train = d.value("train", c.data.train);
    c.data.test = d.value("test", c.data.test);
    c.data.seed = d.value("seed", c.data.seed);
  }
  if (j.contains("codec")) {
    const auto& d = j.at("codec");
    c.codec.epochs = d.value("epochs", c.codec.epochs);
    c.codec.batch_size = d.value("batch_size", c.codec.batch_size);
    c.codec.learning_rate = d.value("learning_rate", c.codec.learning_rate);
    c.codec.seed = d.value("seed", c.codec.seed);
  }
  if (j.contains("encoders")) {
    const auto& d = j.at("encoders");
    c.encoders.steps = d.value("steps", c.encoders.steps);
    c.encoders.batch_size = d.value("batch_size", c.encoders.batch_size);
    c.encoders.learning_rate = d.value("learning_rate", c.encoders.learning_rate);
    c.encoders.seed = d.value("seed", c.encoders.seed);
  }
  if (j.contains("generator")) c.generator = diff::GeneratorConfig::from_json(j.at("generator"));
  c.base = TrainConfig::from_json(j.value("base", nlohmann::json::object()));
  c.base.stage = Stage::Base;
  c.finetune = TrainConfig::from_json(j.value("finetune", nlohmann::json::object()));
  c.finetune.stage = Stage::Finetune;
  if (j.contains("eval")) c.eval = eval::EvalConfig::from_json(j.at("eval"));
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad config " + path + ": " + e.what());
  }
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"data", {{"train", data.train}, {"test", data.test}, {"seed", data.seed}}},
          {"codec",
           {{"epochs", codec.epochs},
            {"batch_size", codec.batch_size},
            {"learning_rate", codec.learning_rate},
            {"seed", codec.seed}}},
          {"encoders",
           {{"steps", encoders.steps},
            {"batch_size", encoders.batch_size},
            {"learning_rate", encoders.learning_rate},
            {"seed", encoders.seed}}},
          {"generator", generator.to_json()},
          {"base", base.to_json()},
          {"finetune", finetune.to_json()},
          {"eval", eval.to_json()}};
}

std::vector<synth::TripletSpec> train_split(const DataConfig& d) {
  return synth::generate_split(synth::derive_seed(d.seed, 0), d.train);
}

std::vector<synth::TripletSpec> test_split(const DataConfig& d) {
  return synth::generate_split(synth::derive_seed(d.seed, 1), d.test);
}

std::vector<int> distinct_image_indices(const std::vector<synth::TripletSpec>& specs) {
  std::set<int> s;
  for (const auto& t : specs) {
    s.insert(t.ref_attrs.index());
    s.insert(t.tgt_attrs.index());
  }
  return {s.begin(), s.end()};
}

std::vector<Image> render_indices(const std::vector<int>& indices) {
  std::vector<Image> out;
  for (int i : indices) out.push_back(synth::render_garment(synth::AttributeVector::from_index(i)).image);
  return out;
}

std::vector<std::string> captions_of(const std::vector<int>& indices) {
  std::vector<std::string> out;
  for (int i : indices) out.push_back(synth::caption(synth::AttributeVector::from_index(i)));
  return out;
}

}  // namespace mred::train
