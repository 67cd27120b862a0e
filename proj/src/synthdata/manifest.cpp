#include "mred/synthdata/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mred/common/error.hpp"
#include "mred/common/png_io.hpp"

namespace fs = std::filesystem;

namespace mred::synth {

nlohmann::json attrs_to_json(const AttributeVector& a) {
  nlohmann::json j = nlohmann::json::object();
  for (auto f : kAllFields) j[std::string(field_name(f))] = std::string(value_name(f, a.get(f)));
  return j;
}

AttributeVector attrs_from_json(const nlohmann::json& j) {
  AttributeVector a;
  for (auto f : kAllFields) {
    const auto name = j.at(std::string(field_name(f))).get<std::string>();
    const auto v = parse_value(f, name);
    if (!v) throw Error("unknown value '" + name + "' for " + std::string(field_name(f)));
    a.set(f, *v);
  }
  return a;
}

nlohmann::json instruction_to_json(const Instruction& instr) {
  nlohmann::json clauses = nlohmann::json::array();
  for (const auto& c : instr.clauses)
    clauses.push_back({{"attribute", std::string(field_name(c.attribute))},
                       {"value", std::string(value_name(c.attribute, c.value))},
                       {"phrase", c.phrase}});
  return {{"text", instr.text}, {"clauses", clauses}};
}

Instruction instruction_from_json(const nlohmann::json& j) {
  std::vector<Clause> clauses;
  for (const auto& c : j.at("clauses")) {
    const auto fname = c.at("attribute").get<std::string>();
    const auto f = parse_field(fname);
    if (!f) throw Error("unknown attribute '" + fname + "'");
    const auto vname = c.at("value").get<std::string>();
    const auto v = parse_value(*f, vname);
    if (!v) throw Error("unknown value '" + vname + "'");
    clauses.push_back({*f, *v, c.at("phrase").get<std::string>()});
  }
  auto instr = make_instruction(clauses);
  if (instr.text != j.at("text").get<std::string>()) throw Error("instruction text does not match its clauses");
  return instr;
}

namespace {

std::string image_key(const Image& img) {
  std::uint64_t h = 1469598103934665603ull;
  for (float v : img.pixels) {
    h ^= to_byte(v);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

class ManifestWriter {
 public:
  explicit ManifestWriter(const std::string& path) : root_(fs::path(path).parent_path()), out_(path) {
    if (root_.empty()) root_ = ".";
    fs::create_directories(root_ / "images");
    fs::create_directories(root_ / "silhouettes");
    if (!out_) throw Error("cannot write manifest " + path);
  }

  void write(const Image& ref, const Image& tgt, const SilhouetteMask& sil, const TripletSpec& spec) {
    nlohmann::json rec;
    rec["seed"] = spec.seed;
    rec["reference"] = store(ref);
    rec["target"] = store(tgt);
    rec["silhouette"] = store(sil);
    rec["silhouette_id"] = sil.template_id;
    rec["instruction"] = instruction_to_json(spec.instruction);
    rec["ref_attrs"] = attrs_to_json(spec.ref_attrs);
    rec["tgt_attrs"] = attrs_to_json(spec.tgt_attrs);
    out_ << rec.dump() << '\n';
  }

 private:
  std::string store(const Image& img) {
    const std::string rel = "images/" + image_key(img) + ".png";
    if (written_.insert(rel).second) write_png((root_ / rel).string(), img);
    return rel;
  }

  std::string store(const SilhouetteMask& m) {
    char name[32];
    std::snprintf(name, sizeof(name), "silhouettes/s%02d.png", m.template_id);
    const std::string rel = name;
    if (written_.insert(rel).second) {
      std::vector<std::uint8_t> gray(m.mask.size());
      for (size_t i = 0; i < gray.size(); ++i) gray[i] = m.mask[i] ? 255 : 0;
      write_gray_png((root_ / rel).string(), gray, kImageSize, kImageSize);
    }
    return rel;
  }

  fs::path root_;
  std::ofstream out_;
  std::set<std::string> written_;
};

template <typename Fn>
void for_each_record(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path);
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw ParseError(std::string("malformed manifest record: ") + e.what(), lineno);
    }
  }
}

TripletSpec spec_from_record(const nlohmann::json& rec) {
  TripletSpec s;
  s.seed = rec.at("seed").get<std::uint64_t>();
  s.instruction = instruction_from_json(rec.at("instruction"));
  s.ref_attrs = attrs_from_json(rec.at("ref_attrs"));
  s.tgt_attrs = attrs_from_json(rec.at("tgt_attrs"));
  return s;
}

}  // namespace

void write_manifest(const std::vector<Triplet>& triplets, const std::string& path) {
  ManifestWriter w(path);
  for (const auto& t : triplets) w.write(t.reference, t.target, t.silhouette, t.spec());
}

void write_manifest(const std::vector<TripletSpec>& specs, const std::string& path) {
  ManifestWriter w(path);
  std::map<int, Rendered> cache;
  auto render = [&](const AttributeVector& a) -> const Rendered& {
    auto it = cache.find(a.index());
    if (it == cache.end()) it = cache.emplace(a.index(), render_garment(a)).first;
    return it->second;
  };
  for (const auto& s : specs) {
    const auto& tgt = render(s.tgt_attrs);
    w.write(render(s.ref_attrs).image, tgt.image, tgt.silhouette, s);
  }
}

std::vector<TripletSpec> read_manifest_specs(const std::string& path) {
  std::vector<TripletSpec> out;
  for_each_record(path, [&](const nlohmann::json& rec) { out.push_back(spec_from_record(rec)); });
  return out;
}

std::vector<Triplet> read_manifest(const std::string& path) {
  fs::path root = fs::path(path).parent_path();
  if (root.empty()) root = ".";
  std::map<std::string, Image> images;
  std::map<std::string, std::vector<std::uint8_t>> masks;
  auto image = [&](const std::string& rel) -> const Image& {
    auto it = images.find(rel);
    if (it == images.end()) it = images.emplace(rel, read_png((root / rel).string())).first;
    return it->second;
  };
  std::vector<Triplet> out;
  for_each_record(path, [&](const nlohmann::json& rec) {
    const auto spec = spec_from_record(rec);
    Triplet t;
    t.ref_attrs = spec.ref_attrs;
    t.tgt_attrs = spec.tgt_attrs;
    t.instruction = spec.instruction;
    t.seed = spec.seed;
    t.reference = image(rec.at("reference").get<std::string>());
    t.target = image(rec.at("target").get<std::string>());
    const auto mrel = rec.at("silhouette").get<std::string>();
    auto it = masks.find(mrel);
    if (it == masks.end()) {
      int w = 0, h = 0;
      auto gray = read_gray_png((root / mrel).string(), w, h);
      if (w != kImageSize || h != kImageSize) throw Error("silhouette must be 64x64");
      for (auto& v : gray) v = v > 127 ? 1 : 0;
      it = masks.emplace(mrel, std::move(gray)).first;
    }
    t.silhouette.mask = it->second;
    t.silhouette.template_id = rec.at("silhouette_id").get<int>();
    out.push_back(std::move(t));
  });
  return out;
}

}  // namespace mred::synth
