#ifndef REID_CONFIG_HPP_
#define REID_CONFIG_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "reid/data.hpp"
#include "reid/eval.hpp"
#include "reid/training.hpp"

namespace reid {

using Json = nlohmann::ordered_json;

Json to_json(const SynthConfig& c);
Json to_json(const TrainConfig& c);
Json to_json(const RerankConfig& c);
Json to_json(const QueryExpansionConfig& c);

// Each parser overlays `j` on the defaults. Keys absent from the defaults
// are rejected with a UsageError naming the dotted path.
SynthConfig synth_config_from_json(const Json& j);
TrainConfig train_config_from_json(const Json& j);
RerankConfig rerank_config_from_json(const Json& j);
QueryExpansionConfig qe_config_from_json(const Json& j);

// defaults merged with user; throws UsageError on keys the defaults lack.
Json overlay_config(const Json& defaults, const Json& user);

// Extracts the "config" member when j is a run manifest, else returns j.
Json config_section(const Json& j);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);

// Applies "a.b.c=value" to j. The value is parsed as JSON when possible
// (numbers, booleans, arrays) and taken as a string otherwise.
void apply_override(Json& j, const std::string& assignment);
void apply_overrides(Json& j, const std::vector<std::string>& assignments);

}  // namespace reid

#endif  // REID_CONFIG_HPP_
