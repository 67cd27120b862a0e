#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "mred/evalsuite/editor.hpp"
#include "mred/service/session.hpp"
#include "mred/synthdata/attributes.hpp"

namespace mred::svc {

/// Builds the edit model for one request's sampling options.
using ModelFactory = std::function<std::shared_ptr<const eval::EditModel>(const eval::SampleOptions&)>;

struct EditParams {
  std::string text;
  std::optional<int> silhouette_id;   // default: random template, recorded
  std::optional<std::uint64_t> seed;  // default: fresh random, recorded
  std::optional<std::string> sampler;
  std::optional<int> steps;
  std::optional<bool> init_from_reference;
};

struct CompareResult {
  Image image_a;  // t1 then t2
  Image image_b;  // t2 then t1
  double consistency = 0.0;
  std::uint64_t seed = 0;
  int silhouette_id = 0;
};

class EditService {
 public:
  /// `defaults` supplies sampler, steps and tau_start when a request leaves them out.
  EditService(SessionStore& store, ModelFactory factory, eval::Embedder embed, eval::SampleOptions defaults,
              std::string model_version);

  EditSession create_session(const Image& reference);
  EditSession create_session(const synth::AttributeVector& attrs);

  /// Appends a round generated from the latest image. 404 unknown session,
  /// 400 empty text or bad options, 409 when another edit on the session runs.
  Round apply_edit(const std::string& id, const EditParams& p);

  /// Both two-round chains from the latest image; the session is not modified.
  CompareResult compare_orders(const std::string& id, const std::string& t1, const std::string& t2,
                               std::uint64_t seed, std::optional<int> silhouette_id = std::nullopt);

  /// Drops the last round; 400 when only round 0 remains.
  EditSession undo(const std::string& id);
  EditSession history(const std::string& id) const;

  /// Regenerates `round` (>= 1) of a stored session from its recorded fields.
  Image replay(const std::string& id, std::size_t round) const;

  const std::string& model_version() const { return model_version_; }
  const eval::SampleOptions& defaults() const { return defaults_; }

 private:
  eval::SampleOptions resolve(const EditParams& p) const;
  Image generate(const Image& prev, const std::string& text, int silhouette, std::uint64_t seed,
                 const eval::SampleOptions& o) const;

  SessionStore& store_;
  ModelFactory factory_;
  eval::Embedder embed_;
  eval::SampleOptions defaults_;
  std::string model_version_;
};

}  // namespace mred::svc
