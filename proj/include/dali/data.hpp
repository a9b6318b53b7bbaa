#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dali/distortion.hpp"
#include "dali/image.hpp"
#include "dali/numerics.hpp"

namespace dali {

enum class Split { train, gallery, query };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct Blob {
    double cx = 0, cy = 0;          // center, unit square
    double sigma_u = 0, sigma_v = 0;  // principal std devs, unit square
    double angle = 0;
    double amplitude = 0;  // signed
};

struct Wave {
    double frequency = 0;  // cycles per image side
    double phase = 0;
    double angle = 0;
    double amplitude = 0;
};

/// Seeded renderer parameters of one synthetic identity.
struct PrototypeDescriptor {
    double base = 0.5;
    std::vector<Blob> blobs;
    Wave wave;
};

/// Intra-class variation applied when rendering a sample.
struct Jitter {
    double rotation = 0;     // radians
    double tx = 0, ty = 0;   // fraction of the image side
    double scale = 1;
    double brightness = 0;
    double noise_sigma = 0;
};

/// Ranges the prototype and jitter draws are taken from.
struct GeneratorParams {
    int min_blobs = 4;
    int max_blobs = 8;
    double blob_sigma_min = 0.08;  // fraction of the image side
    double blob_sigma_max = 0.2;
    double blob_amplitude_min = 0.25;
    double blob_amplitude_max = 0.5;
    double wave_frequency_min = 1.0;  // cycles per image side
    double wave_frequency_max = 3.0;
    double wave_amplitude = 0.12;
    double max_rotation_deg = 10.0;
    double max_translation = 0.07;  // fraction of the image side
    double min_scale = 0.93;
    double max_scale = 1.07;
    double max_brightness = 0.1;
    double noise_sigma = 0.02;

    /// Throws std::invalid_argument on empty or negative ranges.
    void validate() const;
};

PrototypeDescriptor draw_prototype(SeedStream& rng, const GeneratorParams& g = {});
Jitter draw_jitter(SeedStream& rng, const GeneratorParams& g = {});
/// Renders the prototype under the inverse of the jitter's affine map, adds
/// brightness and pixel noise (drawn from rng), and clamps to [0,1].
Image render_prototype(const PrototypeDescriptor& proto, int size, const Jitter& jitter, SeedStream& rng);

struct Sample {
    int label = 0;
    Split split = Split::train;
    Image image;
};

struct IdentityDataset {
    int num_ids = 0;
    int size = 0;
    std::vector<PrototypeDescriptor> prototypes;  // empty when loaded from disk
    std::vector<Sample> samples;

    /// Sample indices of each label's training images.
    std::vector<std::vector<std::size_t>> train_by_label() const;
    std::vector<std::size_t> indices(Split s) const;
    /// Labels contiguous from 0, each with >= 1 training sample.
    void validate() const;
};

struct DatasetConfig {
    int num_ids = 64;
    int train_per_id = 20;
    int eval_per_id = 8;
    int size = 32;
    bool jitter = true;
    GeneratorParams generator;
};

/// Per identity a prototype is drawn and each sample renders it with its own
/// jitter. Eval images split half gallery, half query.
IdentityDataset generate_dataset(const DatasetConfig& cfg, SeedStream rng);

struct BatchSpec {
    int P = 16;  // identities per batch
    int K = 4;   // clean (and distorted) images per identity
    bool distort = true;

    std::size_t batch_size() const { return static_cast<std::size_t>(P) * 2 * K; }
    void validate() const;
};

struct BatchEntry {
    std::size_t sample = 0;
    int label = 0;
    DistortionLevel level;
    Image image;
};

/// P identities without replacement; per identity K clean entries then K
/// entries distorted at levels uniform over 1..5 (level 0 when distortion is
/// off). Identities with fewer than K images are sampled with replacement.
std::vector<BatchEntry> sample_batch(const IdentityDataset& ds, const BatchSpec& spec, std::int64_t step,
                                     const DistortionParams& params, const SeedStream& rng);

/// id_<label>/img_<n>.pgm tree plus manifest.json.
void save_dataset(const IdentityDataset& ds, const std::filesystem::path& dir);
IdentityDataset load_dataset(const std::filesystem::path& dir);
std::string manifest_json(const IdentityDataset& ds);

/// Gallery: first gallery image of each identity not reserved as a
/// probe-only distractor. Queries: every query image of identities that are
/// not gallery-only.
struct EvalProtocol {
    std::vector<std::size_t> gallery;
    std::vector<std::size_t> queries;
};

EvalProtocol build_protocol(const IdentityDataset& ds, int probe_only_ids = 0, int gallery_only_ids = 0);

}  // namespace dali
