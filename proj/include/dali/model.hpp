#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dali/image.hpp"
#include "dali/numerics.hpp"

namespace dali {

/// Dense row-major tensor.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::uint32_t> s, double fill = 0.0);
    std::size_t size() const { return data.size(); }
    friend bool operator==(const Tensor&, const Tensor&) = default;
};

enum class Activation { identity, leaky_relu };

/// Fully connected encoder. Layer l owns tensors[2l] (weight, in x out,
/// input-major) and tensors[2l+1] (bias, out). Hidden layers use a leaky
/// rectifier; the head is linear and its output is L2-normalized.
struct ModelParams {
    std::vector<Tensor> tensors;
    std::vector<Activation> activations;
    double leaky_slope = 0.01;

    /// Uniform fan-in initialization (bound sqrt(6 / fan_in)), zero biases.
    static ModelParams init(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                            SeedStream rng, double leaky_slope = 0.01);

    std::size_t layers() const { return activations.size(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    const Tensor& weight(std::size_t l) const { return tensors[2 * l]; }
    const Tensor& bias(std::size_t l) const { return tensors[2 * l + 1]; }
    std::size_t parameter_count() const;
    /// Throws std::invalid_argument on incompatible layer shapes.
    void validate() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Gradients aligned with ModelParams::tensors.
using ParamGrads = std::vector<std::vector<double>>;

ParamGrads zero_grads(const ModelParams& params);

/// Activations saved by forward_batch for backward.
struct ForwardCache {
    std::size_t batch = 0;
    std::vector<std::vector<double>> layer_inputs;  // per layer, batch x in
    std::vector<std::vector<double>> pre_act;       // per layer, batch x out
    std::vector<double> raw;                        // batch x D head output
    std::vector<Embedding> embeddings;
};

/// Forward pass over `batch` stacked row-major inputs.
ForwardCache forward_batch(const ModelParams& params, std::span<const double> inputs, std::size_t batch);

Embedding forward(const ModelParams& params, const Image& img);
std::vector<Embedding> embed_images(const ModelParams& params, std::span<const Image> images, std::size_t chunk = 128);

/// Reverse-mode gradients given dL/du for every sample's unit direction u.
/// The normalization Jacobian (I - u u^T)/|x| is applied first.
ParamGrads backward(const ModelParams& params, const ForwardCache& cache, std::span<const RealVector> grad_directions);

enum class OptimizerKind { sgd_momentum, adam };
enum class LrScheduleKind { constant, polynomial, step };

struct LrSchedule {
    LrScheduleKind kind = LrScheduleKind::constant;
    double base_lr = 0.1;
    double power = 1.0;                    // polynomial: base * (1 - t/T)^power
    std::int64_t total_steps = 1;          // polynomial horizon
    std::vector<std::int64_t> milestones;  // step: multiply by factor at each
    double factor = 0.1;

    double at(std::int64_t step) const;
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::sgd_momentum;
    LrSchedule lr;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
};

/// Buffers are keyed by the position of the tensor in the update call.
struct OptimizerState {
    OptimizerConfig config;
    std::int64_t step = 0;
    std::vector<std::vector<double>> first;   // momentum or Adam m
    std::vector<std::vector<double>> second;  // Adam v

    explicit OptimizerState(OptimizerConfig cfg = {}) : config(std::move(cfg)) {}
};

/// One tensor taking part in an optimizer update.
struct ParamSlot {
    std::span<double> values;
    std::span<const double> grad;
    double weight_decay_scale = 1.0;  // multiplies config.weight_decay
};

/// SGD-momentum or Adam with decoupled weight decay. Non-finite gradients
/// throw NumericError naming the slot and element.
void optimizer_step(OptimizerState& opt, std::span<ParamSlot> slots);

/// teacher <- beta * teacher + (1 - beta) * student, element-wise.
void ema_update(ModelParams& teacher, const ModelParams& student, double beta);

}  // namespace dali
