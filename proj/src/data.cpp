#include "dali/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "dali/parallel.hpp"

namespace dali {

using nlohmann::json;

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::gallery: return "gallery";
        case Split::query: return "query";
    }
    return "train";
}

Split parse_split(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "gallery") return Split::gallery;
    if (s == "query") return Split::query;
    throw std::invalid_argument("unknown split tag: " + s);
}

void GeneratorParams::validate() const {
    auto range = [](double lo, double hi, const char* what) {
        if (!(lo >= 0 && lo <= hi)) throw std::invalid_argument(std::string("generator: invalid ") + what + " range");
    };
    if (min_blobs < 0 || min_blobs > max_blobs) throw std::invalid_argument("generator: invalid blob count range");
    range(blob_sigma_min, blob_sigma_max, "blob sigma");
    if (!(blob_sigma_min > 0)) throw std::invalid_argument("generator: blob sigma must be positive");
    range(blob_amplitude_min, blob_amplitude_max, "blob amplitude");
    range(wave_frequency_min, wave_frequency_max, "wave frequency");
    range(min_scale, max_scale, "scale");
    if (!(min_scale > 0)) throw std::invalid_argument("generator: scale must be positive");
    if (!(wave_amplitude >= 0 && max_rotation_deg >= 0 && max_translation >= 0 && max_brightness >= 0 &&
          noise_sigma >= 0))
        throw std::invalid_argument("generator: amplitudes and jitter bounds must be non-negative");
}

PrototypeDescriptor draw_prototype(SeedStream& rng, const GeneratorParams& g) {
    constexpr double pi = std::numbers::pi;
    PrototypeDescriptor p;
    p.base = 0.5;
    const auto count =
        g.min_blobs + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(g.max_blobs - g.min_blobs + 1)));
    for (int i = 0; i < count; ++i) {
        Blob b;
        b.cx = rng.uniform(0.2, 0.8);
        b.cy = rng.uniform(0.2, 0.8);
        b.sigma_u = rng.uniform(g.blob_sigma_min, g.blob_sigma_max);
        b.sigma_v = rng.uniform(g.blob_sigma_min, g.blob_sigma_max);
        b.angle = rng.uniform(0.0, pi);
        b.amplitude = rng.uniform(g.blob_amplitude_min, g.blob_amplitude_max) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        p.blobs.push_back(b);
    }
    p.wave.frequency = rng.uniform(g.wave_frequency_min, g.wave_frequency_max);
    p.wave.phase = rng.uniform(0.0, 2 * pi);
    p.wave.angle = rng.uniform(0.0, pi);
    p.wave.amplitude = g.wave_amplitude;
    return p;
}

Jitter draw_jitter(SeedStream& rng, const GeneratorParams& g) {
    Jitter j;
    j.rotation = rng.uniform(-g.max_rotation_deg, g.max_rotation_deg) * std::numbers::pi / 180.0;
    j.tx = rng.uniform(-g.max_translation, g.max_translation);
    j.ty = rng.uniform(-g.max_translation, g.max_translation);
    j.scale = rng.uniform(g.min_scale, g.max_scale);
    j.brightness = rng.uniform(-g.max_brightness, g.max_brightness);
    j.noise_sigma = g.noise_sigma;
    return j;
}

Image render_prototype(const PrototypeDescriptor& proto, int size, const Jitter& jitter, SeedStream& rng) {
    Image img(size, size, 1);
    const double cr = std::cos(-jitter.rotation);
    const double sr = std::sin(-jitter.rotation);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            // Pixel center in the unit square, mapped back through the jitter.
            const double px = (x + 0.5) / size - 0.5 - jitter.tx;
            const double py = (y + 0.5) / size - 0.5 - jitter.ty;
            const double u = (cr * px - sr * py) / jitter.scale + 0.5;
            const double v = (sr * px + cr * py) / jitter.scale + 0.5;
            double val = proto.base;
            for (const auto& b : proto.blobs) {
                const double dx = u - b.cx;
                const double dy = v - b.cy;
                const double ca = std::cos(b.angle);
                const double sa = std::sin(b.angle);
                const double a = (ca * dx + sa * dy) / b.sigma_u;
                const double c = (-sa * dx + ca * dy) / b.sigma_v;
                val += b.amplitude * std::exp(-0.5 * (a * a + c * c));
            }
            const auto& w = proto.wave;
            const double proj = u * std::cos(w.angle) + v * std::sin(w.angle);
            val += w.amplitude * std::sin(2 * std::numbers::pi * w.frequency * proj + w.phase);
            val = std::clamp(val, 0.0, 1.0) + jitter.brightness;
            if (jitter.noise_sigma > 0) val += jitter.noise_sigma * rng.normal();
            img.at(x, y) = std::clamp(val, 0.0, 1.0);
        }
    return img;
}

std::vector<std::vector<std::size_t>> IdentityDataset::train_by_label() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(num_ids));
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == Split::train) out[static_cast<std::size_t>(samples[i].label)].push_back(i);
    return out;
}

std::vector<std::size_t> IdentityDataset::indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].split == s) out.push_back(i);
    return out;
}

void IdentityDataset::validate() const {
    if (num_ids < 2) throw std::invalid_argument("dataset: need at least 2 identities");
    for (const auto& s : samples)
        if (s.label < 0 || s.label >= num_ids) throw std::invalid_argument("dataset: label outside 0..num_ids-1");
    const auto by = train_by_label();
    for (std::size_t l = 0; l < by.size(); ++l)
        if (by[l].empty()) throw std::invalid_argument("dataset: label " + std::to_string(l) + " has no training sample");
}

IdentityDataset generate_dataset(const DatasetConfig& cfg, SeedStream rng) {
    if (cfg.num_ids < 2) throw std::invalid_argument("generate_dataset: num_ids must be >= 2");
    if (cfg.train_per_id < 1 || cfg.eval_per_id < 0 || cfg.size < 4)
        throw std::invalid_argument("generate_dataset: invalid sample counts or size");
    cfg.generator.validate();
    IdentityDataset ds;
    ds.num_ids = cfg.num_ids;
    ds.size = cfg.size;
    ds.prototypes.resize(static_cast<std::size_t>(cfg.num_ids));
    const int per_id = cfg.train_per_id + cfg.eval_per_id;
    std::vector<std::vector<Sample>> by_id(static_cast<std::size_t>(cfg.num_ids));
    parallel_for(by_id.size(), [&](std::size_t id) {
        auto id_rng = rng.derive(id);
        auto proto_rng = id_rng.derive(0);
        ds.prototypes[id] = draw_prototype(proto_rng, cfg.generator);
        for (int j = 0; j < per_id; ++j) {
            auto s_rng = id_rng.derive(static_cast<std::uint64_t>(j) + 1);
            const Jitter jit = cfg.jitter ? draw_jitter(s_rng, cfg.generator) : Jitter{};
            Sample s;
            s.label = static_cast<int>(id);
            s.image = render_prototype(ds.prototypes[id], cfg.size, jit, s_rng);
            if (j < cfg.train_per_id)
                s.split = Split::train;
            else
                s.split = (j - cfg.train_per_id) < cfg.eval_per_id / 2 ? Split::gallery : Split::query;
            by_id[id].push_back(std::move(s));
        }
    });
    for (auto& v : by_id)
        for (auto& s : v) ds.samples.push_back(std::move(s));
    return ds;
}

void BatchSpec::validate() const {
    if (P < 2) throw std::invalid_argument("batch spec: P must be >= 2");
    if (K < 1) throw std::invalid_argument("batch spec: K must be >= 1");
}

namespace {

// k distinct picks from [0, n) when possible, with replacement otherwise.
std::vector<std::size_t> pick(std::size_t n, std::size_t k, SeedStream& rng) {
    std::vector<std::size_t> out;
    if (n >= k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + rng.uniform_index(n - i);
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
    } else {
        for (std::size_t i = 0; i < k; ++i) out.push_back(rng.uniform_index(n));
    }
    return out;
}

}  // namespace

std::vector<BatchEntry> sample_batch(const IdentityDataset& ds, const BatchSpec& spec, std::int64_t step,
                                     const DistortionParams& params, const SeedStream& rng) {
    spec.validate();
    if (spec.P > ds.num_ids) throw std::invalid_argument("sample_batch: fewer identities than P");
    const auto by_label = ds.train_by_label();
    auto step_rng = rng.derive(static_cast<std::uint64_t>(step));
    auto id_rng = step_rng.derive(0);
    const auto ids = pick(static_cast<std::size_t>(ds.num_ids), static_cast<std::size_t>(spec.P), id_rng);

    const auto k = static_cast<std::size_t>(spec.K);
    std::vector<BatchEntry> batch;
    batch.reserve(spec.batch_size());
    for (std::size_t p = 0; p < ids.size(); ++p) {
        const auto& pool = by_label[ids[p]];
        auto sample_rng = step_rng.derive(1 + p);
        const auto clean = pick(pool.size(), k, sample_rng);
        const auto dist = pick(pool.size(), k, sample_rng);
        for (auto c : clean) batch.push_back({pool[c], static_cast<int>(ids[p]), DistortionLevel(0), {}});
        for (auto c : dist) {
            const int level = spec.distort ? 1 + static_cast<int>(sample_rng.uniform_index(DistortionLevel::kMax)) : 0;
            batch.push_back({pool[c], static_cast<int>(ids[p]), DistortionLevel(level), {}});
        }
    }
    auto distort_rng = step_rng.derive(0xD157);
    parallel_for(batch.size(), [&](std::size_t i) {
        auto& e = batch[i];
        e.image = distort(ds.samples[e.sample].image, e.level, params, distort_rng.derive(i));
    });
    return batch;
}

std::string manifest_json(const IdentityDataset& ds) {
    json m;
    m["version"] = 1;
    m["num_ids"] = ds.num_ids;
    m["size"] = ds.size;
    json list = json::array();
    std::vector<int> counters(static_cast<std::size_t>(ds.num_ids), 0);
    for (const auto& s : ds.samples) {
        const int n = counters[static_cast<std::size_t>(s.label)]++;
        const std::string ext = s.image.channels == 3 ? ".ppm" : ".pgm";
        list.push_back({{"label", s.label},
                        {"path", "id_" + std::to_string(s.label) + "/img_" + std::to_string(n) + ext},
                        {"split", split_name(s.split)}});
    }
    m["samples"] = std::move(list);
    return m.dump(2) + "\n";
}

void save_dataset(const IdentityDataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create dataset directory " + dir.string() + ": " + ec.message());
    const std::string manifest = manifest_json(ds);
    const auto entries = json::parse(manifest)["samples"];
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto rel = std::filesystem::path(entries[i]["path"].get<std::string>());
        std::filesystem::create_directories(dir / rel.parent_path(), ec);
        if (ec) throw IoError("cannot create " + (dir / rel.parent_path()).string() + ": " + ec.message());
        save_image(dir / rel, ds.samples[i].image);
    }
    write_file(dir / "manifest.json", manifest);
}

IdentityDataset load_dataset(const std::filesystem::path& dir) {
    json m;
    try {
        m = json::parse(read_file(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
    }
    IdentityDataset ds;
    try {
        ds.num_ids = m.at("num_ids").get<int>();
        ds.size = m.at("size").get<int>();
        for (const auto& e : m.at("samples")) {
            Sample s;
            s.label = e.at("label").get<int>();
            s.split = parse_split(e.at("split").get<std::string>());
            s.image = load_image(dir / e.at("path").get<std::string>());
            ds.samples.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw IoError("malformed manifest in " + dir.string() + ": " + e.what());
    }
    ds.validate();
    return ds;
}

EvalProtocol build_protocol(const IdentityDataset& ds, int probe_only_ids, int gallery_only_ids) {
    if (probe_only_ids < 0 || gallery_only_ids < 0 || probe_only_ids + gallery_only_ids >= ds.num_ids)
        throw std::invalid_argument("build_protocol: distractor counts leave no shared identities");
    // The last probe_only_ids labels have no gallery entry; the ones before
    // them are gallery-only.
    const int probe_only_from = ds.num_ids - probe_only_ids;
    const int gallery_only_from = probe_only_from - gallery_only_ids;
    EvalProtocol p;
    std::vector<bool> have_gallery(static_cast<std::size_t>(ds.num_ids), false);
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        if (s.split == Split::gallery && s.label < probe_only_from && !have_gallery[static_cast<std::size_t>(s.label)]) {
            have_gallery[static_cast<std::size_t>(s.label)] = true;
            p.gallery.push_back(i);
        }
        const bool gallery_only = s.label >= gallery_only_from && s.label < probe_only_from;
        if (s.split == Split::query && !gallery_only) p.queries.push_back(i);
    }
    return p;
}

}  // namespace dali
