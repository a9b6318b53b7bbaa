#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dali/data.hpp"
#include "dali/evaluation.hpp"
#include "dali/training.hpp"

namespace dali {

/// Invalid or unknown configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Complete declarative description of a run.
///
/// JSON schema (every key optional, unknown keys rejected):
///
///     {
///       "seed": 0,
///       "output_dir": "run",
///       "dataset":  {"num_ids", "train_per_id", "eval_per_id", "size", "jitter",
///                    "probe_only_ids", "gallery_only_ids",
///                    "generator": {"min_blobs", "max_blobs", "blob_sigma_min", "blob_sigma_max",
///                                  "blob_amplitude_min", "blob_amplitude_max", "wave_frequency_min",
///                                  "wave_frequency_max", "wave_amplitude", "max_rotation_deg",
///                                  "max_translation", "min_scale", "max_scale", "max_brightness",
///                                  "noise_sigma"}},
///       "distortion": {"levels": [{"warp_rms", "corr_len", "blur_sigma"} x 5]},
///       "schedule": {"total_steps", "initial_weights": [6 numbers]},
///       "train": {"mode": "face"|"reid", "epochs", "P", "K", "batches_per_epoch",
///                 "embedding_dim", "hidden", "leaky_slope", "ema_enabled", "ema_beta",
///                 "proxies_per_class", "negatives",
///                 "margin": {"mode": "fixed"|"adaptive", "tau", "m1", "m2", "m", "s",
///                            "clip", "std_epsilon", "lambda"},
///                 "optimizer": {"kind": "sgd"|"adam", "momentum", "beta1", "beta2", "eps",
///                               "weight_decay",
///                               "lr": {"kind": "constant"|"polynomial"|"step", "base_lr",
///                                      "power", "milestones", "factor"}}},
///       "fusion": {"enabled", "standardization": "off"|"gallery_mean"}
///     }
///
/// Mode-dependent defaults (margins, optimizer, EMA) come from "train.mode";
/// the distortion table defaults to the dataset image size.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "run";
    DatasetConfig dataset;
    int probe_only_ids = 0;
    int gallery_only_ids = 0;
    TrainConfig train = TrainConfig::defaults(TrainMode::face);
    FusionConfig fusion;

    static RunConfig defaults(TrainMode mode = TrainMode::face);

    /// Throws ConfigError.
    void validate() const;
    /// Hash of every field except output_dir.
    std::uint64_t hash() const;
    /// Training config carrying the seed and hash.
    TrainConfig train_config() const;
    /// Planned optimizer updates (epochs x batches per epoch).
    std::int64_t planned_steps() const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
/// Canonical JSON with every default materialized.
std::string config_json(const RunConfig& cfg);

}  // namespace dali
