#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nasr/ablation.hpp"
#include "nasr/asr.hpp"
#include "nasr/preprocess.hpp"
#include "nasr/synth.hpp"
#include "nasr/trainer.hpp"

namespace nasr {

using json = nlohmann::json;

// Every reader below throws ParseError (malformed documents) or ConfigError
// (well-formed documents with unknown keys or invalid values).

json read_json_file(const std::filesystem::path& path);
void write_json_file(const json& doc, const std::filesystem::path& path);

json to_json(const AsrModel& model);
AsrModel asr_model_from_json(const json& doc);

json to_json(const ChannelStats& stats);
ChannelStats channel_stats_from_json(const json& doc);

json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& doc);

json to_json(const HarnessConfig& cfg);
HarnessConfig harness_config_from_json(const json& doc);

json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const json& doc);

/// Table row of a variant as emitted for inspection and golden tests.
json variant_config_json(Variant v);

json to_json(const Metrics& m);

/// Trained model plus what is needed to apply it to a new recording.
struct Checkpoint {
    Variant variant = Variant::m02;
    ModelParams params;
    std::optional<AsrModel> asr;
    std::optional<ChannelStats> stats;
    std::vector<std::string> channel_labels;
    HarnessConfig harness;
};

/// Top-level keys k, l, scaling_w, k_offset, plus decoder and context.
json to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const json& doc);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);
std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path);

/// Window labels and artifact events of a synthetic recording.
struct TruthSidecar {
    std::size_t window = kDefaultWindow;
    std::size_t hop = kDefaultHop;
    std::vector<int> labels;
    std::vector<ArtifactEvent> events;
};

json to_json(const TruthSidecar& truth);
TruthSidecar truth_from_json(const json& doc);
std::filesystem::path truth_path(const std::filesystem::path& header);

/// One line of C characters '0'/'1' per window.
void write_masks(const std::vector<std::vector<std::uint8_t>>& masks, const std::filesystem::path& path);
std::vector<std::vector<std::uint8_t>> read_masks(const std::filesystem::path& path);

}  // namespace nasr
