#include "mred/service/service.hpp"

#include <chrono>
#include <random>

#include "mred/evalsuite/metrics.hpp"
#include "mred/synthdata/render.hpp"
#include "mred/synthdata/triplet.hpp"

namespace mred::svc {

namespace {

std::uint64_t fresh_seed() {
  static std::mutex mu;
  static std::mt19937_64 rng(std::random_device{}());
  std::lock_guard lock(mu);
  // Kept below 2^53 so it survives JSON clients that use doubles.
  return rng() >> 11;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

void check_silhouette(int id) {
  if (id < 0 || id >= synth::kNumShapeTemplates)
    throw ServiceError(400, "silhouette_id must be in [0, " + std::to_string(synth::kNumShapeTemplates) + ")");
}

}  // namespace

EditService::EditService(SessionStore& store, ModelFactory factory, eval::Embedder embed,
                         eval::SampleOptions defaults, std::string model_version)
    : store_(store),
      factory_(std::move(factory)),
      embed_(std::move(embed)),
      defaults_(defaults),
      model_version_(std::move(model_version)) {}

EditSession EditService::create_session(const Image& reference) { return store_.create(reference, model_version_); }

EditSession EditService::create_session(const synth::AttributeVector& attrs) {
  return store_.create(synth::render_garment(attrs).image, model_version_);
}

eval::SampleOptions EditService::resolve(const EditParams& p) const {
  auto o = defaults_;
  try {
    if (p.sampler) o.sampler = diff::parse_sampler(*p.sampler);
  } catch (const Error& e) {
    throw ServiceError(400, e.what());
  }
  if (p.steps) {
    if (*p.steps < 1 || *p.steps > 1000) throw ServiceError(400, "steps must be in [1, 1000]");
    o.steps = *p.steps;
  }
  if (p.init_from_reference) o.init_from_reference = *p.init_from_reference;
  return o;
}

Image EditService::generate(const Image& prev, const std::string& text, int silhouette, std::uint64_t seed,
                            const eval::SampleOptions& o) const {
  auto model = factory_(o);
  auto out = model->edit(to_tensor(prev).unsqueeze(0), {text}, {silhouette}, {seed});
  return quantize(from_tensor(out[0]));
}

Round EditService::apply_edit(const std::string& id, const EditParams& p) {
  const auto text = trim(p.text);
  if (text.empty()) throw ServiceError(400, "instruction text is empty");
  const auto opts = resolve(p);
  if (p.silhouette_id) check_silhouette(*p.silhouette_id);
  auto lease = store_.lock(id);
  auto session = store_.get(id);

  Round r;
  r.instruction = text;
  r.seed = p.seed ? *p.seed : fresh_seed();
  r.silhouette_id = p.silhouette_id ? *p.silhouette_id : static_cast<int>(fresh_seed() % synth::kNumShapeTemplates);
  r.sampler = diff::to_string(opts.sampler);
  r.steps = opts.steps;
  r.tau_start = opts.tau_start;
  r.init_from_reference = opts.init_from_reference;
  const auto t0 = std::chrono::steady_clock::now();
  r.image = generate(session.rounds.back().image, r.instruction, r.silhouette_id, r.seed, opts);
  r.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  session.rounds.push_back(r);
  store_.put(session);
  return r;
}

CompareResult EditService::compare_orders(const std::string& id, const std::string& t1, const std::string& t2,
                                          std::uint64_t seed, std::optional<int> silhouette_id) {
  const auto a = trim(t1), b = trim(t2);
  if (a.empty() || b.empty()) throw ServiceError(400, "both instructions are required");
  if (silhouette_id) check_silhouette(*silhouette_id);
  auto lease = store_.lock(id);
  const auto session = store_.get(id);
  CompareResult out;
  out.seed = seed;
  out.silhouette_id = silhouette_id ? *silhouette_id : static_cast<int>(seed % synth::kNumShapeTemplates);
  const auto s1 = seed, s2 = synth::derive_seed(seed, 1);
  const auto& start = session.rounds.back().image;
  out.image_a = generate(generate(start, a, out.silhouette_id, s1, defaults_), b, out.silhouette_id, s2, defaults_);
  out.image_b = generate(generate(start, b, out.silhouette_id, s1, defaults_), a, out.silhouette_id, s2, defaults_);
  const auto e = embed_(torch::stack({to_tensor(out.image_a), to_tensor(out.image_b)}));
  out.consistency = eval::paired_cosine(e.slice(0, 0, 1), e.slice(0, 1, 2)).at(0);
  return out;
}

EditSession EditService::undo(const std::string& id) {
  auto lease = store_.lock(id);
  auto session = store_.get(id);
  if (session.rounds.size() <= 1) throw ServiceError(400, "nothing to undo: only the reference remains");
  session.rounds.pop_back();
  store_.put(session);
  return session;
}

EditSession EditService::history(const std::string& id) const { return store_.get(id); }

Image EditService::replay(const std::string& id, std::size_t round) const {
  const auto session = store_.get(id);
  if (round < 1 || round >= session.rounds.size()) throw ServiceError(400, "no such round");
  const auto& r = session.rounds[round];
  auto o = defaults_;
  o.sampler = diff::parse_sampler(r.sampler);
  o.steps = r.steps;
  o.tau_start = r.tau_start;
  o.init_from_reference = r.init_from_reference;
  return generate(session.rounds[round - 1].image, r.instruction, r.silhouette_id, r.seed, o);
}

}  // namespace mred::svc
