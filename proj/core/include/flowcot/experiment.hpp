#pragma once

#include <string>

#include <json.hpp>

#include "flowcot/inference.hpp"
#include "flowcot/toyworld.hpp"
#include "flowcot/trainer.hpp"

namespace flowcot {

inline constexpr const char* kToolVersion = "0.1.0";

// Config JSON mirrors the struct field names verbatim; missing fields take
// the struct defaults, unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
WorldSpec world_spec_from_json(const nlohmann::json& j);
nlohmann::json world_spec_to_json(const WorldSpec& spec);
InferenceConfig inference_config_from_json(const nlohmann::json& j);
nlohmann::json inference_config_to_json(const InferenceConfig& cfg);

nlohmann::json load_json_file(const std::string& path);

// FNV-1a 64 over the raw file bytes, hex-encoded.
std::string file_hash_hex(const std::string& path);

void run_make_world(const std::string& spec_path, const std::string& out_path,
                    std::uint64_t seed);

struct TrainOutputs {
    std::string metrics_path;
    std::string checkpoint_path;
    std::string manifest_path;
};

// Trains and writes metrics.csv, checkpoint.json, and manifest.json into
// out_dir. The manifest snapshot (config + world hash + seed) fully
// determines a rerun.
TrainOutputs run_train(const std::string& world_path, const TrainConfig& cfg,
                       const std::string& out_dir);

// Rerun from a manifest; verifies the world hash before training.
TrainOutputs run_train_from_manifest(const std::string& manifest_path,
                                     const std::string& out_dir);

nlohmann::json run_eval(const std::string& world_path, const std::string& checkpoint_path,
                        int instance_id, int max_rationale_len);

nlohmann::json run_rank(const std::string& world_path, const std::string& checkpoint_path,
                        int instance_id, const InferenceConfig& cfg, const std::string& mode);

// Verification report: oracle checks runnable on any world (and optionally a
// checkpoint), emitted as JSON for CI.
nlohmann::json run_oracle(const std::string& world_path, const std::string& checkpoint_path,
                          int instance_id, int max_rationale_len, std::uint64_t seed);

}  // namespace flowcot
