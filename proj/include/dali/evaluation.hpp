#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dali/numerics.hpp"

namespace dali {

/// 1 - cos between the two directions, in [0, 2].
double pair_distance(const Embedding& a, const Embedding& b);

enum class MagnitudeStandardization { off, gallery_mean };

struct FusionConfig {
    bool enabled = true;
    MagnitudeStandardization standardization = MagnitudeStandardization::off;
};

/// Magnitude-weighted cross-domain distance:
///   W_cl = max(|q_cl|, |g_cl|) / scale_cl,  W_da = max(|q_da|, |g_da|) / scale_da
///   d = (W_cl D_cl + W_da D_da) / (W_cl + W_da)
/// Throws NumericError when W_cl + W_da = 0.
double fused_distance(const Embedding& q_cl, const Embedding& g_cl, const Embedding& q_da, const Embedding& g_da,
                      double scale_cl = 1.0, double scale_da = 1.0);

/// Row-major queries x gallery matrix.
struct DistanceMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double operator()(std::size_t q, std::size_t g) const { return values[q * cols + g]; }
    double& operator()(std::size_t q, std::size_t g) { return values[q * cols + g]; }
    friend bool operator==(const DistanceMatrix&, const DistanceMatrix&) = default;
};

DistanceMatrix distance_matrix(std::span<const Embedding> queries, std::span<const Embedding> gallery);

/// Fused matrix; with gallery_mean standardization each backbone's
/// magnitudes are divided by that backbone's mean gallery magnitude.
DistanceMatrix fused_distance_matrix(std::span<const Embedding> q_cl, std::span<const Embedding> g_cl,
                                     std::span<const Embedding> q_da, std::span<const Embedding> g_da,
                                     const FusionConfig& cfg);

/// Gallery order for one query: ascending distance, ties by gallery index.
std::vector<std::size_t> ranked_gallery(const DistanceMatrix& d, std::size_t query);

struct CmcResult {
    std::vector<std::size_t> ranks;
    std::vector<double> accuracy;  // aligned with ranks
    std::size_t evaluated = 0;
    std::size_t excluded = 0;  // queries without a gallery mate
};

CmcResult cmc(const DistanceMatrix& d, std::span<const int> query_labels, std::span<const int> gallery_labels,
              std::span<const std::size_t> ranks);

/// Mean over queries with at least one positive of AP = mean over positive
/// ranks r of (positives at <= r) / r.
double mean_average_precision(const DistanceMatrix& d, std::span<const int> query_labels,
                              std::span<const int> gallery_labels);

struct ScoredPair {
    double score = 0.0;  // similarity; higher means same identity
    bool genuine = false;
};

/// Best-threshold accuracy (folds = 1) or k-fold cross-validated accuracy.
/// Pairs are split into contiguous folds in the given order. Pairs are
/// accepted when score > threshold; thresholds are -inf, midpoints of
/// consecutive distinct scores, and +inf.
double verification_accuracy(std::span<const ScoredPair> pairs, std::size_t folds);

/// Default fold count: 10 when there are at least 100 pairs, else 1.
std::size_t default_verification_folds(std::size_t pairs);

struct TarFarRow {
    double far_target = 0.0;
    double tar = 0.0;
    double far = 0.0;
    double threshold = 0.0;
    bool below_resolution = false;  // target < 1 / |impostors|
};

/// Pairs are accepted when score >= threshold. The threshold is the lowest
/// observed score (or +inf) whose empirical FAR does not exceed the target.
std::vector<TarFarRow> tar_at_far(std::span<const double> genuine, std::span<const double> impostor,
                                  std::span<const double> far_targets);

struct TpirRow {
    double fpir_target = 0.0;
    double tpir = 0.0;
    double fpir = 0.0;
    double threshold = 0.0;
};

/// Open-set identification on a distance matrix (similarity = -distance).
/// Probes whose label is absent from the gallery are distractors. A probe
/// "exceeds" threshold t when its best similarity is > t.
std::vector<TpirRow> tpir_at_fpir(const DistanceMatrix& d, std::span<const int> probe_labels,
                                  std::span<const int> gallery_labels, std::span<const double> fpir_targets);

enum class BackboneTag : std::uint8_t { clean = 0, adaptive = 1 };

struct FeatureRecord {
    std::uint32_t sample_id = 0;
    std::uint32_t label = 0;
    BackboneTag tag = BackboneTag::clean;
    Embedding embedding;
};

/// Feature records keyed by (sample id, backbone tag).
///
/// Binary layout (little-endian): "DFS1", u32 version, u32 count, u32 dim,
/// then per record u32 sample id, u32 label, u8 tag, f32 magnitude,
/// dim x f32 direction.
class FeatureStore {
public:
    static constexpr std::uint32_t kVersion = 1;

    void add(FeatureRecord r);
    const std::vector<FeatureRecord>& records() const { return records_; }
    const FeatureRecord* find(std::uint32_t sample_id, BackboneTag tag) const;
    std::size_t dim() const { return records_.empty() ? 0 : records_.front().embedding.direction.size(); }

    std::string encode() const;
    static FeatureStore decode(std::string_view bytes);

private:
    std::vector<FeatureRecord> records_;
};

struct MetricReport {
    std::vector<std::pair<std::string, double>> values;  // metric name -> value in [0,1]

    void add(std::string name, double v) { values.emplace_back(std::move(name), v); }
    std::string to_csv() const;
    std::string to_text() const;
};

}  // namespace dali
