#include "dali/config.hpp"

#include <json.hpp>

#include <set>
#include <stdexcept>

#include "dali/image.hpp"

namespace dali {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config: '" + where() + "' must be an object");
    }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <class T>
    void number(const std::string& key, T& out) {
        const json* v = get(key);
        if (!v) return;
        if constexpr (std::is_integral_v<T>) {
            if (!v->is_number_integer()) throw ConfigError("config: '" + name(key) + "' must be an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v->is_number_unsigned()) out = static_cast<T>(v->get<std::uint64_t>());
                else if (v->get<std::int64_t>() < 0) throw ConfigError("config: '" + name(key) + "' must be >= 0");
                else out = static_cast<T>(v->get<std::int64_t>());
            } else {
                out = static_cast<T>(v->get<std::int64_t>());
            }
        } else {
            if (!v->is_number()) throw ConfigError("config: '" + name(key) + "' must be a number");
            out = v->get<double>();
        }
    }

    void boolean(const std::string& key, bool& out) {
        const json* v = get(key);
        if (!v) return;
        if (!v->is_boolean()) throw ConfigError("config: '" + name(key) + "' must be true or false");
        out = v->get<bool>();
    }

    const json* string(const std::string& key) {
        const json* v = get(key);
        if (v && !v->is_string()) throw ConfigError("config: '" + name(key) + "' must be a string");
        return v;
    }

    const json* array(const std::string& key) {
        const json* v = get(key);
        if (v && !v->is_array()) throw ConfigError("config: '" + name(key) + "' must be an array");
        return v;
    }

    std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("config: unknown key '" + name(it.key()) + "'");
    }

private:
    std::string where() const { return path_.empty() ? "<root>" : path_; }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

TrainMode parse_mode(const std::string& s) {
    if (s == "face") return TrainMode::face;
    if (s == "reid") return TrainMode::reid;
    throw ConfigError("config: train.mode must be \"face\" or \"reid\", got \"" + s + "\"");
}

void read_margin(const json& j, MarginConfig& m) {
    ObjectReader r(j, "train.margin");
    if (const json* v = r.string("mode")) {
        const auto s = v->get<std::string>();
        if (s == "fixed") m.mode = MarginMode::fixed;
        else if (s == "adaptive") m.mode = MarginMode::adaptive;
        else throw ConfigError("config: train.margin.mode must be \"fixed\" or \"adaptive\"");
    }
    r.number("tau", m.tau);
    r.number("m1", m.m1);
    r.number("m2", m.m2);
    r.number("m", m.m);
    r.number("s", m.s);
    r.number("clip", m.clip);
    r.number("std_epsilon", m.std_epsilon);
    r.number("lambda", m.lambda);
    r.finish();
}

void read_optimizer(const json& j, OptimizerConfig& o) {
    ObjectReader r(j, "train.optimizer");
    if (const json* v = r.string("kind")) {
        const auto s = v->get<std::string>();
        if (s == "sgd") o.kind = OptimizerKind::sgd_momentum;
        else if (s == "adam") o.kind = OptimizerKind::adam;
        else throw ConfigError("config: train.optimizer.kind must be \"sgd\" or \"adam\"");
    }
    r.number("momentum", o.momentum);
    r.number("beta1", o.beta1);
    r.number("beta2", o.beta2);
    r.number("eps", o.eps);
    r.number("weight_decay", o.weight_decay);
    if (const json* lj = r.get("lr")) {
        ObjectReader lr(*lj, "train.optimizer.lr");
        if (const json* v = lr.string("kind")) {
            const auto s = v->get<std::string>();
            if (s == "constant") o.lr.kind = LrScheduleKind::constant;
            else if (s == "polynomial") o.lr.kind = LrScheduleKind::polynomial;
            else if (s == "step") o.lr.kind = LrScheduleKind::step;
            else throw ConfigError("config: train.optimizer.lr.kind must be constant, polynomial or step");
        }
        lr.number("base_lr", o.lr.base_lr);
        lr.number("power", o.lr.power);
        lr.number("factor", o.lr.factor);
        if (const json* m = lr.array("milestones")) {
            o.lr.milestones.clear();
            for (const auto& e : *m) {
                if (!e.is_number_integer()) throw ConfigError("config: lr milestones must be integers");
                o.lr.milestones.push_back(e.get<std::int64_t>());
            }
        }
        lr.finish();
    }
    r.finish();
}

void read_train(const json& j, TrainConfig& t) {
    ObjectReader r(j, "train");
    r.get("mode");  // consumed before defaults are built
    r.number("epochs", t.epochs);
    r.number("P", t.batch.P);
    r.number("K", t.batch.K);
    r.number("batches_per_epoch", t.batches_per_epoch);
    r.number("embedding_dim", t.embedding_dim);
    if (const json* h = r.array("hidden")) {
        t.hidden.clear();
        for (const auto& e : *h) {
            if (!e.is_number_unsigned()) throw ConfigError("config: train.hidden entries must be positive integers");
            t.hidden.push_back(e.get<std::size_t>());
        }
    }
    r.number("leaky_slope", t.leaky_slope);
    r.boolean("ema_enabled", t.ema_enabled);
    r.number("ema_beta", t.ema_beta);
    r.number("proxies_per_class", t.proxies_per_class);
    r.number("negatives", t.negatives);
    if (const json* m = r.get("margin")) read_margin(*m, t.margin);
    if (const json* o = r.get("optimizer")) read_optimizer(*o, t.optimizer);
    r.finish();
}

void read_generator(const json& j, GeneratorParams& g) {
    ObjectReader r(j, "dataset.generator");
    r.number("min_blobs", g.min_blobs);
    r.number("max_blobs", g.max_blobs);
    r.number("blob_sigma_min", g.blob_sigma_min);
    r.number("blob_sigma_max", g.blob_sigma_max);
    r.number("blob_amplitude_min", g.blob_amplitude_min);
    r.number("blob_amplitude_max", g.blob_amplitude_max);
    r.number("wave_frequency_min", g.wave_frequency_min);
    r.number("wave_frequency_max", g.wave_frequency_max);
    r.number("wave_amplitude", g.wave_amplitude);
    r.number("max_rotation_deg", g.max_rotation_deg);
    r.number("max_translation", g.max_translation);
    r.number("min_scale", g.min_scale);
    r.number("max_scale", g.max_scale);
    r.number("max_brightness", g.max_brightness);
    r.number("noise_sigma", g.noise_sigma);
    r.finish();
}

void read_distortion(const json& j, DistortionParams& d) {
    ObjectReader r(j, "distortion");
    if (const json* levels = r.array("levels")) {
        if (levels->size() != d.levels.size())
            throw ConfigError("config: distortion.levels must list " + std::to_string(d.levels.size()) + " levels");
        for (std::size_t i = 0; i < d.levels.size(); ++i) {
            ObjectReader lr((*levels)[i], "distortion.levels[" + std::to_string(i) + "]");
            lr.number("warp_rms", d.levels[i].warp_rms);
            lr.number("corr_len", d.levels[i].corr_len);
            lr.number("blur_sigma", d.levels[i].blur_sigma);
            lr.finish();
        }
    }
    r.finish();
}

void read_schedule(const json& j, WeightSchedule& s) {
    ObjectReader r(j, "schedule");
    r.number("total_steps", s.total_steps);
    if (const json* w = r.array("initial_weights")) {
        if (w->size() != s.initial_weights.size())
            throw ConfigError("config: schedule.initial_weights must have " + std::to_string(s.initial_weights.size()) +
                              " entries");
        for (std::size_t i = 0; i < w->size(); ++i) {
            if (!(*w)[i].is_number()) throw ConfigError("config: schedule.initial_weights must be numbers");
            s.initial_weights[i] = (*w)[i].get<double>();
        }
    }
    r.finish();
}

const char* lr_kind_name(LrScheduleKind k) {
    switch (k) {
        case LrScheduleKind::constant: return "constant";
        case LrScheduleKind::polynomial: return "polynomial";
        case LrScheduleKind::step: return "step";
    }
    return "constant";
}

json to_json(const RunConfig& c, bool with_output_dir) {
    const auto& t = c.train;
    json levels = json::array();
    for (const auto& l : t.distortion.levels)
        levels.push_back({{"warp_rms", l.warp_rms}, {"corr_len", l.corr_len}, {"blur_sigma", l.blur_sigma}});
    json j;
    j["seed"] = c.seed;
    if (with_output_dir) j["output_dir"] = c.output_dir;
    j["dataset"] = {{"num_ids", c.dataset.num_ids},         {"train_per_id", c.dataset.train_per_id},
                    {"eval_per_id", c.dataset.eval_per_id}, {"size", c.dataset.size},
                    {"jitter", c.dataset.jitter},           {"probe_only_ids", c.probe_only_ids},
                    {"gallery_only_ids", c.gallery_only_ids}};
    const auto& g = c.dataset.generator;
    j["dataset"]["generator"] = {{"min_blobs", g.min_blobs},
                                 {"max_blobs", g.max_blobs},
                                 {"blob_sigma_min", g.blob_sigma_min},
                                 {"blob_sigma_max", g.blob_sigma_max},
                                 {"blob_amplitude_min", g.blob_amplitude_min},
                                 {"blob_amplitude_max", g.blob_amplitude_max},
                                 {"wave_frequency_min", g.wave_frequency_min},
                                 {"wave_frequency_max", g.wave_frequency_max},
                                 {"wave_amplitude", g.wave_amplitude},
                                 {"max_rotation_deg", g.max_rotation_deg},
                                 {"max_translation", g.max_translation},
                                 {"min_scale", g.min_scale},
                                 {"max_scale", g.max_scale},
                                 {"max_brightness", g.max_brightness},
                                 {"noise_sigma", g.noise_sigma}};
    j["distortion"] = {{"levels", levels}};
    j["schedule"] = {{"total_steps", t.schedule.total_steps},
                     {"initial_weights", std::vector<double>(t.schedule.initial_weights.begin(),
                                                             t.schedule.initial_weights.end())}};
    const auto& m = t.margin;
    const auto& o = t.optimizer;
    j["train"] = {
        {"mode", mode_name(t.mode)},
        {"epochs", t.epochs},
        {"P", t.batch.P},
        {"K", t.batch.K},
        {"batches_per_epoch", t.batches_per_epoch},
        {"embedding_dim", t.embedding_dim},
        {"hidden", t.hidden},
        {"leaky_slope", t.leaky_slope},
        {"ema_enabled", t.ema_enabled},
        {"ema_beta", t.ema_beta},
        {"proxies_per_class", t.proxies_per_class},
        {"negatives", t.negatives},
        {"margin",
         {{"mode", m.mode == MarginMode::adaptive ? "adaptive" : "fixed"},
          {"tau", m.tau},
          {"m1", m.m1},
          {"m2", m.m2},
          {"m", m.m},
          {"s", m.s},
          {"clip", m.clip},
          {"std_epsilon", m.std_epsilon},
          {"lambda", m.lambda}}},
        {"optimizer",
         {{"kind", o.kind == OptimizerKind::adam ? "adam" : "sgd"},
          {"momentum", o.momentum},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"eps", o.eps},
          {"weight_decay", o.weight_decay},
          {"lr",
           {{"kind", lr_kind_name(o.lr.kind)},
            {"base_lr", o.lr.base_lr},
            {"power", o.lr.power},
            {"milestones", o.lr.milestones},
            {"factor", o.lr.factor}}}}}};
    j["fusion"] = {{"enabled", c.fusion.enabled},
                   {"standardization",
                    c.fusion.standardization == MagnitudeStandardization::gallery_mean ? "gallery_mean" : "off"}};
    return j;
}

}  // namespace

RunConfig RunConfig::defaults(TrainMode mode) {
    RunConfig c;
    c.train = TrainConfig::defaults(mode);
    c.train.distortion = DistortionParams::defaults(c.dataset.size, c.dataset.size);
    return c;
}

void RunConfig::validate() const {
    if (dataset.num_ids < 2) throw ConfigError("config: dataset.num_ids must be >= 2");
    if (dataset.train_per_id < 1) throw ConfigError("config: dataset.train_per_id must be >= 1");
    if (dataset.eval_per_id < 2) throw ConfigError("config: dataset.eval_per_id must be >= 2");
    if (dataset.size < 4) throw ConfigError("config: dataset.size must be >= 4");
    if (probe_only_ids < 0 || gallery_only_ids < 0 || probe_only_ids + gallery_only_ids >= dataset.num_ids)
        throw ConfigError("config: distractor identity counts must leave shared identities");
    if (train.batch.P > dataset.num_ids) throw ConfigError("config: train.P exceeds dataset.num_ids");
    if (output_dir.empty()) throw ConfigError("config: output_dir must not be empty");
    try {
        dataset.generator.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_json(*this, false).dump()); }

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    t.config_hash = hash();
    return t;
}

std::int64_t RunConfig::planned_steps() const {
    const auto n = static_cast<std::int64_t>(dataset.num_ids) * dataset.train_per_id;
    const auto b = static_cast<std::int64_t>(train.batch.batch_size());
    const std::int64_t per_epoch = train.batches_per_epoch > 0 ? train.batches_per_epoch : std::max<std::int64_t>(1, (n + b - 1) / b);
    return per_epoch * train.epochs;
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    try {
        ObjectReader root(j, "");
        TrainMode mode = TrainMode::face;
        if (const json* t = root.get("train")) {
            if (!t->is_object()) throw ConfigError("config: 'train' must be an object");
            if (auto it = t->find("mode"); it != t->end()) {
                if (!it->is_string()) throw ConfigError("config: 'train.mode' must be a string");
                mode = parse_mode(it->get<std::string>());
            }
        }
        RunConfig c = RunConfig::defaults(mode);
        root.number("seed", c.seed);
        if (const json* v = root.string("output_dir")) c.output_dir = v->get<std::string>();
        if (const json* d = root.get("dataset")) {
            ObjectReader r(*d, "dataset");
            r.number("num_ids", c.dataset.num_ids);
            r.number("train_per_id", c.dataset.train_per_id);
            r.number("eval_per_id", c.dataset.eval_per_id);
            r.number("size", c.dataset.size);
            r.boolean("jitter", c.dataset.jitter);
            r.number("probe_only_ids", c.probe_only_ids);
            r.number("gallery_only_ids", c.gallery_only_ids);
            if (const json* g = r.get("generator")) read_generator(*g, c.dataset.generator);
            r.finish();
        }
        c.train.distortion = DistortionParams::defaults(c.dataset.size, c.dataset.size);
        if (const json* d = root.get("distortion")) read_distortion(*d, c.train.distortion);
        if (const json* s = root.get("schedule")) read_schedule(*s, c.train.schedule);
        if (const json* t = root.get("train")) read_train(*t, c.train);
        if (const json* f = root.get("fusion")) {
            ObjectReader r(*f, "fusion");
            r.boolean("enabled", c.fusion.enabled);
            if (const json* v = r.string("standardization")) {
                const auto s = v->get<std::string>();
                if (s == "off") c.fusion.standardization = MagnitudeStandardization::off;
                else if (s == "gallery_mean") c.fusion.standardization = MagnitudeStandardization::gallery_mean;
                else throw ConfigError("config: fusion.standardization must be \"off\" or \"gallery_mean\"");
            }
            r.finish();
        }
        root.finish();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return parse_config(text);
}

std::string config_json(const RunConfig& cfg) { return to_json(cfg, true).dump(2) + "\n"; }

}  // namespace dali
