// mred: command-line entry point for data generation, training, sampling,
// evaluation and serving.

#include <CLI11.hpp>
#include <torch/torch.h>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mred/common/png_io.hpp"
#include "mred/common/tensor_hash.hpp"
#include "mred/evalsuite/protocols.hpp"
#include "mred/service/server.hpp"
#include "mred/synthdata/manifest.hpp"
#include "mred/training/dataset.hpp"
#include "mred/training/pipeline.hpp"
#include "mred/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace mred;

namespace {

struct Common {
  std::string config;
  std::string data;
  std::string codec;
  std::string encoder;
  std::string model;
};

train::PipelineConfig load_config(const std::string& path) {
  return path.empty() ? train::PipelineConfig{} : train::PipelineConfig::load(path);
}

std::string sibling(const std::string& of, const std::string& name) {
  return (fs::path(of).parent_path() / name).string();
}

std::vector<synth::TripletSpec> split(const std::string& dir, const std::string& name) {
  return synth::read_manifest_specs((fs::path(dir) / (name + ".jsonl")).string());
}

synth::AttributeVector parse_attrs(const std::string& s) {
  synth::AttributeVector a;
  std::stringstream ss(s);
  std::string item;
  int seen = 0;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("attribute '" + item + "' must be field=value");
    const auto f = synth::parse_field(item.substr(0, eq));
    if (!f) throw Error("unknown field '" + item.substr(0, eq) + "'");
    const auto v = synth::parse_value(*f, item.substr(eq + 1));
    if (!v) throw Error("illegal value '" + item.substr(eq + 1) + "'");
    a.set(*f, *v);
    ++seen;
  }
  if (seen != synth::kNumFields) throw Error("--attrs needs all six fields");
  return a;
}

void train_generator(const Common& c, train::TrainConfig tc, diff::Generator& g, const std::string& out,
                     const std::string& metrics_path) {
  auto codec = codec::Codec::load(c.codec);
  auto encoder = enc::DualEncoder::load(c.encoder);
  train::FeatureBank bank(codec, encoder);
  const auto data = split(c.data, "train");
  std::ofstream metrics;
  if (!metrics_path.empty()) metrics.open(metrics_path);
  if (tc.checkpoint_dir.empty()) tc.checkpoint_dir = fs::path(out).parent_path().string();
  train::train(g, bank, data, tc, metrics_path.empty() ? nullptr : &metrics, [](const train::StepRecord& r) {
    if (r.step % 50 == 0)
      std::cout << "step " << r.step << " lr " << r.lr << " lambda " << r.loss.lambda << " total " << r.loss.total
                << std::endl;
  });
  g.save(out, {{"train_config", tc.to_json()}});
  std::cout << "wrote " << out << "\n";
}

std::atomic<svc::HttpServer*> g_server{nullptr};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-round text-guided garment editing"};
  app.require_subcommand(1);
  Common c;
  app.add_option("--config", c.config, "Pipeline JSON config");
  int threads = 0;
  app.add_option("--threads", threads, "Torch intra-op threads (0 = library default)");

  auto* gen = app.add_subcommand("gen-data", "Write train/test manifests and images");
  std::string out;
  std::size_t n_train = 0, n_test = 0;
  std::uint64_t seed = 0;
  gen->add_option("--out", out)->required();
  auto* o_train = gen->add_option("--train", n_train);
  auto* o_test = gen->add_option("--test", n_test);
  auto* o_seed = gen->add_option("--seed", seed);

  auto* tcodec = app.add_subcommand("train-codec", "Train the latent codec");
  tcodec->add_option("--data", c.data)->required();
  tcodec->add_option("--out", out)->required();
  int epochs = 0;
  auto* o_epochs = tcodec->add_option("--epochs", epochs);
  auto* o_cseed = tcodec->add_option("--seed", seed);

  auto* tenc = app.add_subcommand("train-encoders", "Contrastive pretraining of the dual encoder");
  tenc->add_option("--data", c.data)->required();
  tenc->add_option("--out", out)->required();
  int steps = 0;
  auto* o_steps = tenc->add_option("--steps", steps);
  auto* o_eseed = tenc->add_option("--seed", seed);

  std::string metrics, lambda, base;
  int stage_epochs = 0, steps_per_epoch = 0;
  double lr = 0.0;
  auto add_train_opts = [&](CLI::App* s) {
    s->add_option("--data", c.data)->required();
    s->add_option("--codec", c.codec)->required();
    s->add_option("--encoder", c.encoder)->required();
    s->add_option("--out", out)->required();
    s->add_option("--metrics", metrics, "JSONL metrics log");
    s->add_option("--epochs", stage_epochs);
    s->add_option("--steps-per-epoch", steps_per_epoch);
    s->add_option("--lr", lr);
    s->add_option("--seed", seed);
  };
  auto* tbase = app.add_subcommand("train-base", "Base generator stage (single + recon)");
  add_train_opts(tbase);
  auto* tft = app.add_subcommand("finetune", "LoRA fine-tuning with the two-round loss");
  add_train_opts(tft);
  tft->add_option("--base", base, "Base-stage generator checkpoint")->required();
  tft->add_option("--lambda", lambda, "down | up | fix:V");

  auto* samp = app.add_subcommand("sample", "Edit one image");
  std::string attrs, image_path, text, sampler;
  int silhouette = -1, sample_steps = 0, tau_start = 0;
  samp->add_option("--model", c.model)->required();
  samp->add_option("--codec", c.codec);
  samp->add_option("--encoder", c.encoder);
  samp->add_option("--attrs", attrs, "Reference as field=value,... (all six fields)");
  samp->add_option("--image", image_path, "Reference PNG (64x64 RGB)");
  samp->add_option("--text", text)->required();
  samp->add_option("--silhouette", silhouette, "Template id; default: the reference's shape (0 for --image)");
  samp->add_option("--seed", seed);
  samp->add_option("--sampler", sampler, "ddpm | ddim");
  samp->add_option("--steps", sample_steps);
  samp->add_option("--tau-start", tau_start);
  samp->add_option("--out", out)->required();

  auto* ev = app.add_subcommand("eval", "Full evaluation report");
  std::string report, compare;
  ev->add_option("--model", c.model)->required();
  ev->add_option("--data", c.data)->required();
  ev->add_option("--codec", c.codec);
  ev->add_option("--encoder", c.encoder);
  ev->add_option("--report", report)->required();
  ev->add_option("--compare", compare, "Baseline generator checkpoint");
  ev->add_option("--seed", seed);

  auto* serve = app.add_subcommand("serve", "HTTP editing service");
  svc::ServerConfig scfg;
  serve->add_option("--model", c.model)->required();
  serve->add_option("--codec", c.codec);
  serve->add_option("--encoder", c.encoder);
  serve->add_option("--port", scfg.port);
  serve->add_option("--host", scfg.host);
  serve->add_option("--max-body", scfg.max_body_bytes, "Upload limit in bytes");
  serve->add_option("--workers", scfg.workers);

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) torch::set_num_threads(threads);

  try {
    auto cfg = load_config(c.config);
    if (!c.model.empty()) {
      if (c.codec.empty()) c.codec = sibling(c.model, "codec.ckpt");
      if (c.encoder.empty()) c.encoder = sibling(c.model, "encoder.ckpt");
    }

    if (gen->parsed()) {
      if (o_train->count()) cfg.data.train = n_train;
      if (o_test->count()) cfg.data.test = n_test;
      if (o_seed->count()) cfg.data.seed = seed;
      fs::create_directories(out);
      synth::write_manifest(train::train_split(cfg.data), (fs::path(out) / "train.jsonl").string());
      synth::write_manifest(train::test_split(cfg.data), (fs::path(out) / "test.jsonl").string());
      std::cout << "wrote " << cfg.data.train << " train / " << cfg.data.test << " test triplets to " << out << "\n";
    } else if (tcodec->parsed()) {
      if (o_epochs->count()) cfg.codec.epochs = epochs;
      if (o_cseed->count()) cfg.codec.seed = seed;
      const auto idx = train::distinct_image_indices(split(c.data, "train"));
      auto codec = codec::train_codec(train::render_indices(idx), cfg.codec, nullptr, [](int e, double l) {
        std::cout << "epoch " << e << " loss " << l << std::endl;
      });
      const auto test_idx = train::distinct_image_indices(split(c.data, "test"));
      const auto test = train::render_indices(test_idx);
      int ok = 0;
      for (const auto& im : test) ok += codec::psnr(codec.decode_image(codec.encode(im)), im) >= 25.0;
      std::cout << "test images with PSNR >= 25 dB: " << ok << "/" << test.size() << "\n";
      codec.save(out);
    } else if (tenc->parsed()) {
      if (o_steps->count()) cfg.encoders.steps = steps;
      if (o_eseed->count()) cfg.encoders.seed = seed;
      const auto idx = train::distinct_image_indices(split(c.data, "train"));
      const auto imgs = train::render_indices(idx);
      const auto caps = train::captions_of(idx);
      auto e = enc::train_contrastive(imgs, caps, cfg.encoders, [](int s, double l) {
        if (s % 100 == 0) std::cout << "step " << s << " loss " << l << std::endl;
      });
      const auto r = enc::in_batch_retrieval(e, imgs, caps, 64, cfg.encoders.seed + 1, 20);
      std::cout << "in-batch top-1 at batch 64: " << r.mean_accuracy << "\n";
      e.save(out);
    } else if (tbase->parsed() || tft->parsed()) {
      const bool ft = tft->parsed();
      auto tc = ft ? cfg.finetune : cfg.base;
      if (stage_epochs > 0) tc.epochs = stage_epochs;
      if (steps_per_epoch > 0) tc.steps_per_epoch = steps_per_epoch;
      if (lr > 0.0) tc.learning_rate = lr;
      if (tbase->get_option("--seed")->count() || tft->get_option("--seed")->count()) tc.seed = seed;
      if (!lambda.empty()) tc.lambda = train::LambdaSchedule::parse(lambda);
      diff::Generator g = ft ? diff::Generator::load(base) : diff::Generator(cfg.generator, tc.seed);
      train_generator(c, tc, g, out, metrics);
    } else if (samp->parsed()) {
      auto codec = codec::Codec::load(c.codec);
      auto encoder = enc::DualEncoder::load(c.encoder);
      auto g = diff::Generator::load(c.model);
      g.freeze_all();
      auto so = cfg.eval.sampling;
      if (!sampler.empty()) so.sampler = diff::parse_sampler(sampler);
      if (sample_steps > 0) so.steps = sample_steps;
      if (tau_start > 0) so.tau_start = tau_start;
      Image ref;
      if (!image_path.empty()) {
        ref = read_png(image_path);
      } else if (!attrs.empty()) {
        const auto a = parse_attrs(attrs);
        ref = synth::render_garment(a).image;
        if (silhouette < 0) silhouette = a.shape_id();
      } else {
        throw Error("need --attrs or --image");
      }
      if (silhouette < 0) silhouette = 0;
      eval::DiffusionEditor ed(codec, encoder, g, so);
      auto img = ed.edit(to_tensor(ref).unsqueeze(0), {text}, {silhouette}, {seed});
      write_png(out, from_tensor(img[0]));
      std::cout << "wrote " << out << "\n";
    } else if (ev->parsed()) {
      auto codec = codec::Codec::load(c.codec);
      auto encoder = enc::DualEncoder::load(c.encoder);
      const auto test = split(c.data, "test");
      auto ecfg = cfg.eval;
      if (ev->get_option("--seed")->count()) ecfg.seed = seed;
      const auto embed = eval::global_embedder(encoder);
      eval::AttributeProbe probe(embed);
      auto run = [&](const std::string& path) {
        auto g = diff::Generator::load(path);
        g.freeze_all();
        eval::DiffusionEditor ed(codec, encoder, g, ecfg.sampling);
        return eval::run_full_eval(ed, embed, probe, test, ecfg);
      };
      const auto full = run(c.model);
      nlohmann::json j = full.to_json();
      if (!compare.empty()) j = eval::compare_reports(full, run(compare));
      std::ofstream(report) << j.dump(2) << "\n";
      std::cout << "wrote " << report << "\n";
    } else if (serve->parsed()) {
      auto codec = codec::Codec::load(c.codec);
      auto encoder = enc::DualEncoder::load(c.encoder);
      auto g = diff::Generator::load(c.model);
      g.freeze_all();
      const auto hash_before = g.hash();
      svc::SessionStore store(svc::data_root() / "sessions");
      auto factory = [&](const eval::SampleOptions& o) {
        return std::make_shared<const eval::DiffusionEditor>(codec, encoder, g, o);
      };
      svc::EditService service(store, factory, eval::global_embedder(encoder), cfg.eval.sampling,
                               hex64(hash_before));
      svc::HttpServer server(service, scfg);
      const int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, [](int) {
        if (auto* s = g_server.load()) s->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (auto* s = g_server.load()) s->stop();
      });
      std::cout << "listening on " << scfg.host << ":" << port << std::endl;
      server.run();
      g_server = nullptr;
      if (g.hash() != hash_before) {
        std::cerr << "error: model weights changed while serving\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
