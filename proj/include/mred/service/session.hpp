#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mred/common/error.hpp"
#include "mred/common/image.hpp"

namespace mred::svc {

/// Error carrying an HTTP-style status (400 validation, 404 unknown session,
/// 409 busy, 413 oversized upload).
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

/// One stored generation. Round 0 holds the reference with empty instruction.
struct Round {
  std::string instruction;
  std::uint64_t seed = 0;
  std::string sampler;
  int steps = 0;
  int silhouette_id = -1;
  int tau_start = 0;
  bool init_from_reference = true;
  Image image;
  double latency_ms = 0.0;

  /// Image as base64 PNG under "image".
  nlohmann::json to_json() const;
  static Round from_json(const nlohmann::json& j);
};

struct EditSession {
  std::string id;
  std::vector<Round> rounds;
  std::string created_at;  // ISO-8601 UTC
  std::string model_version;

  nlohmann::json to_json() const;
  static EditSession from_json(const nlohmann::json& j);
};

/// Sessions as <dir>/<id>.json. Every public call is safe across threads; a
/// session can be held exclusively through lock(), which fails fast when busy.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir);

  EditSession create(const Image& reference, const std::string& model_version);
  /// Throws ServiceError(404) for unknown ids.
  EditSession get(const std::string& id) const;
  void put(const EditSession& s);

  class Lease {
   public:
    explicit Lease(std::unique_lock<std::mutex> l) : lock_(std::move(l)) {}

   private:
    std::unique_lock<std::mutex> lock_;
  };
  /// Exclusive hold on one session; throws ServiceError(409) if already held,
  /// ServiceError(404) if unknown.
  Lease lock(const std::string& id);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path path_of(const std::string& id) const;
  std::mutex& mutex_of(const std::string& id);

  std::filesystem::path dir_;
  mutable std::mutex io_;
  std::mutex table_mu_;
  std::unordered_map<std::string, std::unique_ptr<std::mutex>> locks_;
};

/// Round-trips an image through 8-bit quantization, as stored on disk.
Image quantize(const Image& img);

/// Root for persistent data: $MRED_DATA_DIR, else "./mred-data".
std::filesystem::path data_root();

}  // namespace mred::svc
