#include "dali/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dali/parallel.hpp"

namespace dali {

Tensor::Tensor(std::vector<std::uint32_t> s, double fill) : shape(std::move(s)) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    data.assign(n, fill);
}

ModelParams ModelParams::init(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                              SeedStream rng, double leaky_slope) {
    ModelParams p;
    p.leaky_slope = leaky_slope;
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output_dim);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const auto in = static_cast<std::uint32_t>(dims[l]);
        const auto out = static_cast<std::uint32_t>(dims[l + 1]);
        Tensor w({in, out});
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        auto layer_rng = rng.derive(l);
        for (double& v : w.data) v = layer_rng.uniform(-bound, bound);
        p.tensors.push_back(std::move(w));
        p.tensors.emplace_back(std::vector<std::uint32_t>{out});
        p.activations.push_back(l + 2 < dims.size() ? Activation::leaky_relu : Activation::identity);
    }
    return p;
}

std::size_t ModelParams::input_dim() const { return tensors.empty() ? 0 : tensors.front().shape[0]; }

std::size_t ModelParams::output_dim() const { return tensors.empty() ? 0 : tensors[tensors.size() - 2].shape[1]; }

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

void ModelParams::validate() const {
    if (activations.empty() || tensors.size() != 2 * activations.size())
        throw std::invalid_argument("model: tensor/layer count mismatch");
    for (std::size_t l = 0; l < layers(); ++l) {
        const auto& w = weight(l);
        const auto& b = bias(l);
        if (w.shape.size() != 2 || b.shape.size() != 1 || b.shape[0] != w.shape[1])
            throw std::invalid_argument("model: malformed layer " + std::to_string(l));
        if (l > 0 && weight(l - 1).shape[1] != w.shape[0])
            throw std::invalid_argument("model: layer " + std::to_string(l) + " input does not match previous output");
    }
}

ParamGrads zero_grads(const ModelParams& params) {
    ParamGrads g;
    g.reserve(params.tensors.size());
    for (const auto& t : params.tensors) g.emplace_back(t.size(), 0.0);
    return g;
}

namespace {

double activate(Activation a, double z, double slope) {
    return a == Activation::leaky_relu && z < 0.0 ? slope * z : z;
}

double activate_grad(Activation a, double z, double slope) {
    return a == Activation::leaky_relu && z < 0.0 ? slope : 1.0;
}

}  // namespace

ForwardCache forward_batch(const ModelParams& params, std::span<const double> inputs, std::size_t batch) {
    const std::size_t in_dim = params.input_dim();
    if (batch == 0 || inputs.size() != batch * in_dim)
        throw std::invalid_argument("forward: input size does not match the first layer");
    ForwardCache cache;
    cache.batch = batch;
    std::vector<double> x(inputs.begin(), inputs.end());
    for (std::size_t l = 0; l < params.layers(); ++l) {
        const auto& w = params.weight(l);
        const auto& b = params.bias(l);
        const std::size_t in = w.shape[0];
        const std::size_t out = w.shape[1];
        std::vector<double> z(batch * out);
        parallel_for(batch, [&](std::size_t i) {
            double* zi = z.data() + i * out;
            std::copy(b.data.begin(), b.data.end(), zi);
            const double* xi = x.data() + i * in;
            for (std::size_t k = 0; k < in; ++k) {
                const double a = xi[k];
                if (a == 0.0) continue;
                const double* wk = w.data.data() + k * out;
                for (std::size_t j = 0; j < out; ++j) zi[j] += a * wk[j];
            }
        });
        std::vector<double> y(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) y[i] = activate(params.activations[l], z[i], params.leaky_slope);
        cache.layer_inputs.push_back(std::move(x));
        cache.pre_act.push_back(std::move(z));
        x = std::move(y);
    }
    const std::size_t d = params.output_dim();
    cache.raw = std::move(x);
    cache.embeddings.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i)
        cache.embeddings.push_back(l2_normalize(std::span<const double>(cache.raw).subspan(i * d, d)));
    return cache;
}

namespace {
std::vector<double> image_input(const Image& img) {
    std::vector<double> v(img.pixels.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] - 0.5;
    return v;
}
}  // namespace

Embedding forward(const ModelParams& params, const Image& img) {
    const auto in = image_input(img);
    return forward_batch(params, in, 1).embeddings.front();
}

std::vector<Embedding> embed_images(const ModelParams& params, std::span<const Image> images, std::size_t chunk) {
    std::vector<Embedding> out;
    out.reserve(images.size());
    const std::size_t in_dim = params.input_dim();
    for (std::size_t start = 0; start < images.size(); start += chunk) {
        const std::size_t n = std::min(chunk, images.size() - start);
        std::vector<double> stacked;
        stacked.reserve(n * in_dim);
        for (std::size_t i = 0; i < n; ++i) {
            if (images[start + i].pixels.size() != in_dim)
                throw std::invalid_argument("embed_images: image size does not match the first layer");
            for (double p : images[start + i].pixels) stacked.push_back(p - 0.5);
        }
        auto cache = forward_batch(params, stacked, n);
        for (auto& e : cache.embeddings) out.push_back(std::move(e));
    }
    return out;
}

ParamGrads backward(const ModelParams& params, const ForwardCache& cache, std::span<const RealVector> grad_directions) {
    const std::size_t batch = cache.batch;
    const std::size_t d = params.output_dim();
    if (grad_directions.size() != batch) throw std::invalid_argument("backward: gradient batch mismatch");

    // Through the normalization: dL/dx = (g - u (u.g)) / |x|.
    std::vector<double> g(batch * d);
    for (std::size_t i = 0; i < batch; ++i) {
        const auto& e = cache.embeddings[i];
        const auto& gu = grad_directions[i];
        if (gu.size() != d) throw std::invalid_argument("backward: gradient dimension mismatch");
        const double ug = dot(e.direction.values(), gu);
        for (std::size_t j = 0; j < d; ++j) g[i * d + j] = (gu[j] - e.direction[j] * ug) / e.magnitude;
    }

    ParamGrads grads = zero_grads(params);
    for (std::size_t l = params.layers(); l-- > 0;) {
        const auto& w = params.weight(l);
        const std::size_t in = w.shape[0];
        const std::size_t out = w.shape[1];
        const auto& z = cache.pre_act[l];
        const auto& x = cache.layer_inputs[l];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activate_grad(params.activations[l], z[i], params.leaky_slope);

        auto& gw = grads[2 * l];
        parallel_for(in, [&](std::size_t k) {
            double* gwk = gw.data() + k * out;
            for (std::size_t i = 0; i < batch; ++i) {
                const double a = x[i * in + k];
                if (a == 0.0) continue;
                const double* gi = g.data() + i * out;
                for (std::size_t j = 0; j < out; ++j) gwk[j] += a * gi[j];
            }
        });
        auto& gb = grads[2 * l + 1];
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t j = 0; j < out; ++j) gb[j] += g[i * out + j];

        if (l == 0) break;
        std::vector<double> gin(batch * in);
        parallel_for(batch, [&](std::size_t i) {
            const std::span<const double> gi(g.data() + i * out, out);
            for (std::size_t k = 0; k < in; ++k)
                gin[i * in + k] = dot(std::span<const double>(w.data.data() + k * out, out), gi);
        });
        g = std::move(gin);
    }
    return grads;
}

double LrSchedule::at(std::int64_t step) const {
    switch (kind) {
        case LrScheduleKind::constant:
            return base_lr;
        case LrScheduleKind::polynomial: {
            const double t = std::clamp(static_cast<double>(step) / static_cast<double>(std::max<std::int64_t>(1, total_steps)), 0.0, 1.0);
            return base_lr * std::pow(1.0 - t, power);
        }
        case LrScheduleKind::step: {
            double lr = base_lr;
            for (auto m : milestones)
                if (step >= m) lr *= factor;
            return lr;
        }
    }
    return base_lr;
}

void optimizer_step(OptimizerState& opt, std::span<ParamSlot> slots) {
    const auto& cfg = opt.config;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        if (slots[s].values.size() != slots[s].grad.size())
            throw std::invalid_argument("optimizer: gradient shape mismatch in slot " + std::to_string(s));
        for (std::size_t i = 0; i < slots[s].grad.size(); ++i)
            if (!std::isfinite(slots[s].grad[i]))
                throw NumericError("optimizer: non-finite gradient in slot " + std::to_string(s) + " element " +
                                   std::to_string(i) + " at step " + std::to_string(opt.step));
    }
    if (opt.first.size() != slots.size()) {
        opt.first.clear();
        opt.second.clear();
        for (const auto& sl : slots) {
            opt.first.emplace_back(sl.values.size(), 0.0);
            if (cfg.kind == OptimizerKind::adam) opt.second.emplace_back(sl.values.size(), 0.0);
        }
    }
    const double lr = cfg.lr.at(opt.step);
    ++opt.step;
    const double t = static_cast<double>(opt.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        auto& sl = slots[s];
        auto& m = opt.first[s];
        if (m.size() != sl.values.size()) throw std::invalid_argument("optimizer: buffer shape mismatch");
        const double wd = cfg.weight_decay * sl.weight_decay_scale;
        for (std::size_t i = 0; i < sl.values.size(); ++i) {
            const double gi = sl.grad[i];
            double update;
            if (cfg.kind == OptimizerKind::sgd_momentum) {
                m[i] = cfg.momentum * m[i] + gi;
                update = m[i];
            } else {
                auto& v = opt.second[s];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
            }
            sl.values[i] -= lr * (update + wd * sl.values[i]);
        }
    }
}

void ema_update(ModelParams& teacher, const ModelParams& student, double beta) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("ema: beta must lie in [0,1]");
    if (teacher.tensors.size() != student.tensors.size()) throw std::invalid_argument("ema: shape mismatch");
    for (std::size_t t = 0; t < teacher.tensors.size(); ++t) {
        auto& a = teacher.tensors[t].data;
        const auto& b = student.tensors[t].data;
        if (a.size() != b.size()) throw std::invalid_argument("ema: shape mismatch");
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = beta * a[i] + (1.0 - beta) * b[i];
    }
}

}  // namespace dali
