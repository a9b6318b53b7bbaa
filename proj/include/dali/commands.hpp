#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dali/checkpoint.hpp"
#include "dali/config.hpp"
#include "dali/data.hpp"
#include "dali/evaluation.hpp"
#include "dali/training.hpp"

namespace dali {

/// Synthetic dataset for the config, quantized to 8 bits so that the
/// in-memory copy equals what load_dataset reads back.
IdentityDataset make_dataset(const RunConfig& cfg);

/// Writes the dataset tree and run_config.json into dir.
void gen_data(const RunConfig& cfg, const std::filesystem::path& dir);

/// Distorts every .pgm/.ppm under in_dir into the same relative path under
/// out_dir; other files are copied verbatim. Level 0 copies image bytes too.
/// Without explicit params each image uses the default table for its size.
void distort_directory(const std::filesystem::path& in_dir, const std::filesystem::path& out_dir, DistortionLevel level,
                       std::uint64_t seed, const DistortionParams* params = nullptr);

/// Trains one backbone, writing checkpoint.dck after every epoch plus
/// epoch_log.csv and run_config.json into out_dir. When resuming, log rows up
/// to the checkpoint's epoch are kept.
TrainResult train_to_directory(const RunConfig& cfg, TrainKind kind, const IdentityDataset& ds,
                               const std::filesystem::path& out_dir, const Checkpoint* resume = nullptr,
                               int stop_after_epoch = -1);

enum class EvalProtocolKind { cmc, map, verify, tarfar, tpirfpir };

EvalProtocolKind parse_protocol(const std::string& s);
const char* protocol_name(EvalProtocolKind p);

/// Query images at the requested level; stream per sample index.
std::vector<Image> query_images(const IdentityDataset& ds, std::span<const std::size_t> queries, DistortionLevel level,
                                const DistortionParams& params, std::uint64_t seed);

struct EvalRequest {
    EvalProtocolKind protocol = EvalProtocolKind::cmc;
    DistortionLevel query_level;
    int probe_only_ids = 0;
    int gallery_only_ids = 0;
    bool fuse = false;
    FusionConfig fusion;
    DistortionParams distortion = DistortionParams::defaults(32, 32);
    std::uint64_t seed = 0;
};

/// Metrics for the protocol from a distance matrix (similarity = -distance).
MetricReport protocol_metrics(EvalProtocolKind protocol, const DistanceMatrix& d, std::span<const int> query_labels,
                              std::span<const int> gallery_labels);

struct EvalOutput {
    MetricReport report;
    FeatureStore features;
};

/// Evaluates checkpoint a (and b when fusing) on the dataset.
EvalOutput evaluate(const Checkpoint& a, const Checkpoint* b, const IdentityDataset& ds, const EvalRequest& req);

/// Weight curves: rows step,level,weight for 101 evenly spaced steps
/// (endpoints included) and every level.
std::string schedule_csv(const WeightSchedule& sched);

/// Entry point of the dali executable. Exit codes: 0 success, 1 other
/// failure, 2 usage or config error, 3 I/O or file format error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dali
