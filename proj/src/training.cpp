#include "dali/training.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace dali {

namespace {
// Derivation indices under the master seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kBatchStream = 2;
constexpr std::uint64_t kProxyStream = 3;
}  // namespace

const char* mode_name(TrainMode m) { return m == TrainMode::face ? "face" : "reid"; }
const char* kind_name(TrainKind k) { return k == TrainKind::clean ? "clean" : "adaptive"; }

TrainConfig TrainConfig::defaults(TrainMode mode) {
    TrainConfig c;
    c.mode = mode;
    c.schedule.total_steps = 0;
    if (mode == TrainMode::face) {
        c.epochs = 15;
        c.margin = MarginConfig::face();
        c.ema_enabled = false;
        c.optimizer.kind = OptimizerKind::sgd_momentum;
        c.optimizer.momentum = 0.9;
        c.optimizer.weight_decay = 5e-4;
        c.optimizer.lr.kind = LrScheduleKind::polynomial;
        c.optimizer.lr.base_lr = 0.02;
        c.optimizer.lr.power = 1.0;
    } else {
        c.epochs = 30;
        c.margin = MarginConfig::reid();
        c.ema_enabled = true;
        c.ema_beta = 0.99;
        c.optimizer.kind = OptimizerKind::adam;
        c.optimizer.weight_decay = 5e-4;
        c.optimizer.lr.kind = LrScheduleKind::step;
        c.optimizer.lr.base_lr = 3.5e-4;
        c.optimizer.lr.factor = 0.1;
    }
    return c;
}

std::int64_t TrainConfig::steps_per_epoch(const IdentityDataset& ds) const {
    if (batches_per_epoch > 0) return batches_per_epoch;
    const auto n = static_cast<std::int64_t>(ds.indices(Split::train).size());
    const auto b = static_cast<std::int64_t>(batch.batch_size());
    return std::max<std::int64_t>(1, (n + b - 1) / b);
}

void TrainConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("train config: epochs must be >= 0");
    batch.validate();
    if (embedding_dim == 0) throw std::invalid_argument("train config: embedding dim must be positive");
    for (auto h : hidden)
        if (h == 0) throw std::invalid_argument("train config: hidden sizes must be positive");
    margin.validate();
    if (!(ema_beta >= 0.0 && ema_beta <= 1.0)) throw std::invalid_argument("train config: ema beta must lie in [0,1]");
    if (schedule.total_steps > 0) schedule.validate();
    distortion.validate();
    if (proxies_per_class == 0) throw std::invalid_argument("train config: proxies per class must be positive");
    if (!(optimizer.lr.base_lr >= 0)) throw std::invalid_argument("train config: learning rate must be >= 0");
}

std::string epoch_log_csv(std::span<const EpochLog> log) {
    std::string out = "epoch,step,mean_loss,w_l0,w_l1,w_l2,w_l3,w_l4,w_l5,lr\n";
    char buf[64];
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + "," + std::to_string(e.step);
        std::snprintf(buf, sizeof buf, ",%.12g", e.mean_loss);
        out += buf;
        for (double w : e.mean_weight) {
            std::snprintf(buf, sizeof buf, ",%.12g", w);
            out += buf;
        }
        std::snprintf(buf, sizeof buf, ",%.12g\n", e.learning_rate);
        out += buf;
    }
    return out;
}

std::vector<double> stack_inputs(std::span<const Image> images) {
    std::vector<double> out;
    if (!images.empty()) out.reserve(images.size() * images.front().pixels.size());
    for (const auto& img : images)
        for (double p : img.pixels) out.push_back(p - 0.5);
    return out;
}

Checkpoint initial_checkpoint(const TrainConfig& cfg, const IdentityDataset& ds) {
    if (ds.samples.empty()) throw std::invalid_argument("train: empty dataset");
    const SeedStream root(cfg.seed);
    const auto init = root.derive(kInitStream);
    const auto& first = ds.samples.front().image;
    const std::size_t input_dim = first.pixels.size();
    Checkpoint ck;
    ck.student = ModelParams::init(input_dim, cfg.hidden, cfg.embedding_dim, init.derive(0), cfg.leaky_slope);
    ck.teacher = ck.student;
    ck.centers = ClassCenters::random(static_cast<std::size_t>(ds.num_ids), cfg.embedding_dim, init.derive(1));
    ck.optimizer = OptimizerState(cfg.optimizer);
    ck.config_hash = cfg.config_hash;
    ck.use_teacher = cfg.ema_enabled;
    return ck;
}

ProxyBank rebuild_bank(const ModelParams& params, const IdentityDataset& ds, std::size_t per_class, SeedStream rng) {
    std::vector<Image> images;
    std::vector<int> labels;
    for (const auto& s : ds.samples) {
        if (s.split != Split::train) continue;
        images.push_back(s.image);
        labels.push_back(s.label);
    }
    const auto emb = embed_images(params, images);
    std::vector<UnitVector> dirs;
    dirs.reserve(emb.size());
    for (const auto& e : emb) dirs.push_back(e.direction);
    return build_proxy_bank(dirs, labels, static_cast<std::size_t>(ds.num_ids), per_class, rng);
}

ObjectiveResult evaluate_objective(const TrainConfig& cfg, const ModelParams& params, const ClassCenters& centers,
                                   const ObjectiveInputs& in) {
    const std::size_t n = in.images.size();
    if (in.labels.size() != n || in.levels.size() != n) throw std::invalid_argument("objective: batch misaligned");
    const auto inputs = stack_inputs(in.images);
    const auto cache = forward_batch(params, inputs, n);

    std::vector<RealVector> features;
    std::vector<double> magnitudes;
    features.reserve(n);
    for (const auto& e : cache.embeddings) {
        features.push_back(e.direction.vector());
        magnitudes.push_back(e.magnitude);
    }
    const BatchWeights weights = in.scheduled_weights ? batch_weights(in.levels, in.step, cfg.schedule) : unit_weights(n);
    const std::vector<Margins> margins = in.margins ? *in.margins : batch_margins(magnitudes, cfg.margin);
    const double scale = cfg.margin.logit_scale();

    BatchLoss total = distortion_loss(features, in.labels, weights, centers, margins, scale);
    if (in.bank && cfg.margin.lambda > 0.0) {
        std::vector<ProxyContext> contexts(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto own = static_cast<std::size_t>(in.labels[i]);
            for (std::size_t s = 0; s < in.bank->per_class(); ++s) contexts[i].positives.push_back(in.bank->proxy(own, s));
            const auto neg = mine_negatives(features[i], *in.bank, own, cfg.negatives);
            for (const auto& r : neg.proxies) contexts[i].negatives.push_back(in.bank->proxy(r.cls, r.slot));
        }
        const BatchLoss proxy = proxy_loss(features, weights, contexts, margins, scale);
        total = combined_loss(total, proxy, cfg.margin.lambda);
    }
    ObjectiveResult out;
    out.value = total.value;
    if (!std::isfinite(out.value)) return out;
    out.param_grads = backward(params, cache, total.grad_features);
    out.center_grads = std::move(total.grad_centers);
    return out;
}

TrainResult train(const TrainConfig& cfg_in, const IdentityDataset& ds, TrainKind kind, const TrainOptions& opts) {
    TrainConfig cfg = cfg_in;
    cfg.validate();
    ds.validate();
    const std::int64_t per_epoch = cfg.steps_per_epoch(ds);
    const std::int64_t planned = per_epoch * cfg.epochs;
    if (cfg.schedule.total_steps <= 0) cfg.schedule.total_steps = std::max<std::int64_t>(1, planned);
    cfg.schedule.validate();
    auto& lr = cfg.optimizer.lr;
    if (lr.kind == LrScheduleKind::polynomial) lr.total_steps = std::max<std::int64_t>(1, planned);
    if (lr.kind == LrScheduleKind::step && lr.milestones.empty())
        lr.milestones = {static_cast<std::int64_t>(std::llround(0.4 * cfg.epochs)) * per_epoch,
                         static_cast<std::int64_t>(std::llround(0.8 * cfg.epochs)) * per_epoch};

    TrainResult result;
    Checkpoint& ck = result.checkpoint;
    if (opts.resume) {
        ck = *opts.resume;
        if (ck.config_hash != cfg.config_hash)
            throw std::invalid_argument("train: checkpoint config hash does not match the run configuration");
    } else {
        ck = initial_checkpoint(cfg, ds);
    }
    ck.optimizer.config = cfg.optimizer;

    const SeedStream root(cfg.seed);
    const auto batch_rng = root.derive(kBatchStream);
    const auto proxy_rng = root.derive(kProxyStream);
    BatchSpec spec = cfg.batch;
    spec.distort = kind == TrainKind::adaptive;
    const bool use_proxies = cfg.mode == TrainMode::reid && cfg.margin.lambda > 0.0;
    const bool scheduled = kind == TrainKind::adaptive;

    Checkpoint last_good = ck;
    const int last_epoch = opts.stop_after_epoch >= 0 ? std::min(opts.stop_after_epoch, cfg.epochs) : cfg.epochs;
    for (int epoch = ck.epoch; epoch < last_epoch; ++epoch) {
        ProxyBank bank;
        if (use_proxies)
            bank = rebuild_bank(ck.eval_params(), ds, cfg.proxies_per_class, proxy_rng.derive(static_cast<std::uint64_t>(epoch)));

        EpochLog log;
        log.epoch = epoch + 1;
        log.learning_rate = cfg.optimizer.lr.at(ck.step);
        double loss_sum = 0.0;
        for (std::int64_t s = 0; s < per_epoch; ++s) {
            const std::int64_t step = ck.step;
            auto batch = sample_batch(ds, spec, step, cfg.distortion, batch_rng);
            std::vector<Image> images;
            std::vector<int> labels;
            std::vector<DistortionLevel> levels;
            for (auto& e : batch) {
                images.push_back(std::move(e.image));
                labels.push_back(e.label);
                levels.push_back(e.level);
            }
            ObjectiveInputs in{images, labels, levels, step, scheduled, use_proxies ? &bank : nullptr, nullptr};
            ObjectiveResult obj;
            try {
                obj = evaluate_objective(cfg, ck.student, ck.centers, in);
            } catch (const NumericError& e) {
                throw TrainingDiverged(e.what(), last_good);
            }
            if (!std::isfinite(obj.value))
                throw TrainingDiverged("training diverged: non-finite loss at step " + std::to_string(step), last_good);
            loss_sum += obj.value;
            for (int l = 0; l <= DistortionLevel::kMax; ++l)
                log.mean_weight[static_cast<std::size_t>(l)] +=
                    scheduled ? weight(DistortionLevel(l), step, cfg.schedule) : 1.0;

            std::vector<ParamSlot> slots;
            for (std::size_t t = 0; t < ck.student.tensors.size(); ++t)
                slots.push_back({ck.student.tensors[t].data, obj.param_grads[t], 1.0});
            slots.push_back({ck.centers.data(), obj.center_grads, 0.0});
            try {
                optimizer_step(ck.optimizer, slots);
            } catch (const NumericError& e) {
                throw TrainingDiverged(e.what(), last_good);
            }
            ck.centers.renormalize();
            if (cfg.ema_enabled) ema_update(ck.teacher, ck.student, cfg.ema_beta);
            ++ck.step;
        }
        ck.epoch = epoch + 1;
        if (!cfg.ema_enabled) ck.teacher = ck.student;
        log.step = ck.step;
        log.mean_loss = loss_sum / static_cast<double>(per_epoch);
        for (double& w : log.mean_weight) w /= static_cast<double>(per_epoch);
        result.log.push_back(log);
        last_good = ck;
        if (opts.on_epoch) opts.on_epoch(ck, log);
    }
    return result;
}

TrainResult train_clean(const TrainConfig& cfg, const IdentityDataset& ds) { return train(cfg, ds, TrainKind::clean); }

TrainResult train_distortion_adaptive(const TrainConfig& cfg, const IdentityDataset& ds) {
    return train(cfg, ds, TrainKind::adaptive);
}

}  // namespace dali
