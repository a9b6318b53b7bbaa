#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dali/data.hpp"
#include "dali/distortion.hpp"
#include "dali/losses.hpp"
#include "dali/model.hpp"
#include "dali/proxies.hpp"
#include "dali/schedule.hpp"

namespace dali {

enum class TrainMode { face, reid };
enum class TrainKind { clean, adaptive };

const char* mode_name(TrainMode m);
const char* kind_name(TrainKind k);

struct TrainConfig {
    TrainMode mode = TrainMode::face;
    int epochs = 30;
    BatchSpec batch;
    int batches_per_epoch = 0;  // 0: ceil(train images / batch size)
    std::size_t embedding_dim = 64;
    std::vector<std::size_t> hidden{256, 256};
    double leaky_slope = 0.01;
    WeightSchedule schedule;  // total_steps <= 0 is replaced by the planned update count
    MarginConfig margin;
    bool ema_enabled = false;
    double ema_beta = 0.999;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    DistortionParams distortion = DistortionParams::defaults(32, 32);
    std::size_t proxies_per_class = 5;
    std::size_t negatives = 50;
    std::uint64_t config_hash = 0;

    /// Face: 15 epochs, SGD momentum 0.9, wd 5e-4, lr 0.02 with linear
    /// decay, adaptive margins, EMA off. Reid: 30 epochs, Adam lr 3.5e-4,
    /// wd 5e-4, lr / 10 at 40% and 80% of training, tau 0.05, lambda 0.4,
    /// EMA on with beta 0.99.
    static TrainConfig defaults(TrainMode mode);

    std::int64_t steps_per_epoch(const IdentityDataset& ds) const;
    void validate() const;
};

struct Checkpoint {
    static constexpr std::uint32_t kFormatVersion = 1;

    ModelParams student;
    ModelParams teacher;
    ClassCenters centers;
    OptimizerState optimizer;
    std::int64_t step = 0;
    int epoch = 0;  // completed epochs
    std::uint64_t config_hash = 0;
    bool use_teacher = false;

    /// Parameters used for evaluation and proxy extraction.
    const ModelParams& eval_params() const { return use_teacher ? teacher : student; }
};

struct EpochLog {
    int epoch = 0;
    std::int64_t step = 0;  // updates completed at epoch end
    double mean_loss = 0.0;
    std::array<double, DistortionLevel::kMax + 1> mean_weight{};
    double learning_rate = 0.0;
};

std::string epoch_log_csv(std::span<const EpochLog> log);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<EpochLog> log;
};

/// Thrown when the loss or a gradient becomes non-finite. Carries the
/// checkpoint from the end of the last completed epoch.
class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, Checkpoint last_good)
        : NumericError(what), last_good_(std::move(last_good)) {}
    const Checkpoint& last_good() const { return last_good_; }

private:
    Checkpoint last_good_;
};

struct TrainOptions {
    const Checkpoint* resume = nullptr;
    int stop_after_epoch = -1;  // stop once this many epochs are complete
    std::function<void(const Checkpoint&, const EpochLog&)> on_epoch;
};

/// Fresh student/teacher/centers for the config (shared across kinds).
Checkpoint initial_checkpoint(const TrainConfig& cfg, const IdentityDataset& ds);

TrainResult train(const TrainConfig& cfg, const IdentityDataset& ds, TrainKind kind, const TrainOptions& opts = {});
TrainResult train_clean(const TrainConfig& cfg, const IdentityDataset& ds);
TrainResult train_distortion_adaptive(const TrainConfig& cfg, const IdentityDataset& ds);

/// Flattens images into encoder inputs (intensity - 0.5).
std::vector<double> stack_inputs(std::span<const Image> images);

/// Total objective and its gradients for one frozen batch.
struct ObjectiveResult {
    double value = 0.0;
    ParamGrads param_grads;
    std::vector<double> center_grads;
};

struct ObjectiveInputs {
    std::span<const Image> images;
    std::span<const int> labels;
    std::span<const DistortionLevel> levels;
    std::int64_t step = 0;
    bool scheduled_weights = true;          // false: every weight is 1
    const ProxyBank* bank = nullptr;        // proxy term used when set and lambda > 0
    const std::vector<Margins>* margins = nullptr;  // frozen margins; computed from the batch when null
};

ObjectiveResult evaluate_objective(const TrainConfig& cfg, const ModelParams& params, const ClassCenters& centers,
                                   const ObjectiveInputs& in);

/// Proxy bank over the clean training images, embedded with `params`.
ProxyBank rebuild_bank(const ModelParams& params, const IdentityDataset& ds, std::size_t per_class, SeedStream rng);

}  // namespace dali
