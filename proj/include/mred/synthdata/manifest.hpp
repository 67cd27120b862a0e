#pragma once

// JSONL dataset manifest. One record per line:
//
//   {"seed": 123,
//    "reference": "images/<hash>.png", "target": "images/<hash>.png",
//    "silhouette": "silhouettes/s07.png", "silhouette_id": 7,
//    "instruction": {"text": "make it red and have long sleeves",
//                    "clauses": [{"attribute": "color", "value": "red", "phrase": "make it red"}, ...]},
//    "ref_attrs": {"category": "dress", "color": "blue", ...},
//    "tgt_attrs": {...}}
//
// Paths are relative to the manifest's directory. Images are 8-bit RGB PNGs
// stored once per distinct content; silhouettes are 8-bit gray (0 / 255).

#include <string>
#include <vector>

#include <json.hpp>

#include "mred/synthdata/triplet.hpp"

namespace mred::synth {

void write_manifest(const std::vector<Triplet>& triplets, const std::string& path);
/// Renders canonical images for each spec on the fly.
void write_manifest(const std::vector<TripletSpec>& specs, const std::string& path);

/// Throws mred::ParseError carrying the 1-based line number of the first bad record.
std::vector<Triplet> read_manifest(const std::string& path);
std::vector<TripletSpec> read_manifest_specs(const std::string& path);

nlohmann::json attrs_to_json(const AttributeVector& a);
AttributeVector attrs_from_json(const nlohmann::json& j);
nlohmann::json instruction_to_json(const Instruction& instr);
Instruction instruction_from_json(const nlohmann::json& j);

}  // namespace mred::synth
