#include "mred/service/session.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "mred/common/base64.hpp"
#include "mred/common/png_io.hpp"

namespace mred::svc {

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string new_id() {
  static std::mutex mu;
  static std::mt19937_64 rng(std::random_device{}() ^
                             static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count()));
  std::lock_guard lock(mu);
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << rng() << std::setw(16) << rng();
  return os.str();
}

bool valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id)
    if (!std::isalnum(static_cast<unsigned char>(c))) return false;
  return true;
}

}  // namespace

nlohmann::json Round::to_json() const {
  return {{"instruction", instruction},
          {"seed", seed},
          {"sampler", sampler},
          {"steps", steps},
          {"silhouette_id", silhouette_id},
          {"tau_start", tau_start},
          {"init_from_reference", init_from_reference},
          {"latency_ms", latency_ms},
          {"image", base64_encode(encode_png(image))}};
}

Round Round::from_json(const nlohmann::json& j) {
  Round r;
  r.instruction = j.at("instruction").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.sampler = j.at("sampler").get<std::string>();
  r.steps = j.at("steps").get<int>();
  r.silhouette_id = j.at("silhouette_id").get<int>();
  r.tau_start = j.value("tau_start", 0);
  r.init_from_reference = j.value("init_from_reference", true);
  r.latency_ms = j.value("latency_ms", 0.0);
  r.image = decode_png(base64_decode(j.at("image").get<std::string>()));
  return r;
}

nlohmann::json EditSession::to_json() const {
  nlohmann::json rounds_j = nlohmann::json::array();
  for (const auto& r : rounds) rounds_j.push_back(r.to_json());
  return {{"id", id}, {"created_at", created_at}, {"model_version", model_version}, {"rounds", rounds_j}};
}

EditSession EditSession::from_json(const nlohmann::json& j) {
  EditSession s;
  s.id = j.at("id").get<std::string>();
  s.created_at = j.at("created_at").get<std::string>();
  s.model_version = j.at("model_version").get<std::string>();
  for (const auto& r : j.at("rounds")) s.rounds.push_back(Round::from_json(r));
  return s;
}

SessionStore::SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::filesystem::path SessionStore::path_of(const std::string& id) const {
  if (!valid_id(id)) throw ServiceError(404, "unknown session '" + id + "'");
  return dir_ / (id + ".json");
}

EditSession SessionStore::create(const Image& reference, const std::string& model_version) {
  EditSession s;
  s.id = new_id();
  s.created_at = now_iso();
  s.model_version = model_version;
  Round r0;
  r0.image = quantize(reference);
  s.rounds.push_back(std::move(r0));
  put(s);
  return s;
}

EditSession SessionStore::get(const std::string& id) const {
  const auto p = path_of(id);
  std::lock_guard lock(io_);
  std::ifstream in(p);
  if (!in) throw ServiceError(404, "unknown session '" + id + "'");
  return EditSession::from_json(nlohmann::json::parse(in));
}

void SessionStore::put(const EditSession& s) {
  const auto p = path_of(s.id);
  const auto tmp = p.string() + ".tmp";
  std::lock_guard lock(io_);
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << s.to_json().dump();
  }
  std::filesystem::rename(tmp, p);
}

std::mutex& SessionStore::mutex_of(const std::string& id) {
  std::lock_guard lock(table_mu_);
  auto& m = locks_[id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

SessionStore::Lease SessionStore::lock(const std::string& id) {
  if (!std::filesystem::exists(path_of(id))) throw ServiceError(404, "unknown session '" + id + "'");
  std::unique_lock l(mutex_of(id), std::try_to_lock);
  if (!l.owns_lock()) throw ServiceError(409, "session '" + id + "' is busy");
  return Lease(std::move(l));
}

Image quantize(const Image& img) {
  Image out = img;
  for (auto& v : out.pixels) v = from_byte(to_byte(v));
  return out;
}

std::filesystem::path data_root() {
  if (const char* env = std::getenv("MRED_DATA_DIR"); env && *env) return env;
  return "mred-data";
}

}  // namespace mred::svc
