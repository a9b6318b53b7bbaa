#include "dali/evaluation.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "dali/image.hpp"
#include "dali/parallel.hpp"

namespace dali {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

double pair_distance(const Embedding& a, const Embedding& b) { return 1.0 - cosine(a.direction, b.direction); }

double fused_distance(const Embedding& q_cl, const Embedding& g_cl, const Embedding& q_da, const Embedding& g_da,
                      double scale_cl, double scale_da) {
    const double w_cl = std::max(q_cl.magnitude, g_cl.magnitude) / scale_cl;
    const double w_da = std::max(q_da.magnitude, g_da.magnitude) / scale_da;
    const double total = w_cl + w_da;
    if (!(total > 0.0) || !std::isfinite(total))
        throw NumericError("fused_distance: magnitude weights sum to zero (degenerate features)");
    const double d_cl = pair_distance(q_cl, g_cl);
    const double d_da = pair_distance(q_da, g_da);
    const double alpha = w_da / total;
    const double fused = d_cl + alpha * (d_da - d_cl);
    return std::clamp(fused, std::min(d_cl, d_da), std::max(d_cl, d_da));
}

DistanceMatrix distance_matrix(std::span<const Embedding> queries, std::span<const Embedding> gallery) {
    DistanceMatrix d{queries.size(), gallery.size(), std::vector<double>(queries.size() * gallery.size())};
    parallel_for(queries.size(), [&](std::size_t q) {
        for (std::size_t g = 0; g < gallery.size(); ++g) d(q, g) = pair_distance(queries[q], gallery[g]);
    });
    return d;
}

DistanceMatrix fused_distance_matrix(std::span<const Embedding> q_cl, std::span<const Embedding> g_cl,
                                     std::span<const Embedding> q_da, std::span<const Embedding> g_da,
                                     const FusionConfig& cfg) {
    if (q_cl.size() != q_da.size() || g_cl.size() != g_da.size())
        throw std::invalid_argument("fused_distance_matrix: backbone feature counts differ");
    if (!cfg.enabled) return distance_matrix(q_cl, g_cl);
    double scale_cl = 1.0;
    double scale_da = 1.0;
    if (cfg.standardization == MagnitudeStandardization::gallery_mean) {
        if (g_cl.empty()) throw std::invalid_argument("fused_distance_matrix: empty gallery");
        scale_cl = scale_da = 0.0;
        for (const auto& e : g_cl) scale_cl += e.magnitude;
        for (const auto& e : g_da) scale_da += e.magnitude;
        scale_cl /= static_cast<double>(g_cl.size());
        scale_da /= static_cast<double>(g_da.size());
    }
    DistanceMatrix d{q_cl.size(), g_cl.size(), std::vector<double>(q_cl.size() * g_cl.size())};
    parallel_for(q_cl.size(), [&](std::size_t q) {
        for (std::size_t g = 0; g < g_cl.size(); ++g)
            d(q, g) = fused_distance(q_cl[q], g_cl[g], q_da[q], g_da[g], scale_cl, scale_da);
    });
    return d;
}

std::vector<std::size_t> ranked_gallery(const DistanceMatrix& d, std::size_t query) {
    std::vector<std::size_t> order(d.cols);
    for (std::size_t g = 0; g < d.cols; ++g) order[g] = g;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double da = d(query, a);
        const double db = d(query, b);
        return da < db || (da == db && a < b);
    });
    return order;
}

namespace {
void check_labels(const DistanceMatrix& d, std::span<const int> ql, std::span<const int> gl) {
    if (ql.size() != d.rows || gl.size() != d.cols)
        throw std::invalid_argument("metric: label counts do not match the distance matrix");
}
}  // namespace

CmcResult cmc(const DistanceMatrix& d, std::span<const int> query_labels, std::span<const int> gallery_labels,
              std::span<const std::size_t> ranks) {
    check_labels(d, query_labels, gallery_labels);
    const std::set<int> present(gallery_labels.begin(), gallery_labels.end());
    CmcResult r;
    r.ranks.assign(ranks.begin(), ranks.end());
    std::vector<std::size_t> hits(ranks.size(), 0);
    for (std::size_t q = 0; q < d.rows; ++q) {
        if (!present.count(query_labels[q])) {
            ++r.excluded;
            continue;
        }
        ++r.evaluated;
        const auto order = ranked_gallery(d, q);
        std::size_t first = 0;
        while (gallery_labels[order[first]] != query_labels[q]) ++first;
        for (std::size_t k = 0; k < ranks.size(); ++k)
            if (first < ranks[k]) ++hits[k];
    }
    for (auto h : hits) r.accuracy.push_back(r.evaluated ? static_cast<double>(h) / static_cast<double>(r.evaluated) : 0.0);
    return r;
}

double mean_average_precision(const DistanceMatrix& d, std::span<const int> query_labels,
                              std::span<const int> gallery_labels) {
    check_labels(d, query_labels, gallery_labels);
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t q = 0; q < d.rows; ++q) {
        const auto order = ranked_gallery(d, q);
        std::size_t positives = 0;
        double ap = 0.0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (gallery_labels[order[r]] != query_labels[q]) continue;
            ++positives;
            ap += static_cast<double>(positives) / static_cast<double>(r + 1);
        }
        if (positives == 0) continue;
        sum += ap / static_cast<double>(positives);
        ++counted;
    }
    return counted ? sum / static_cast<double>(counted) : 0.0;
}

namespace {

struct ThresholdFit {
    double threshold = -kInf;
    double accuracy = 0.0;
};

// Best accept-if-score>t threshold over the given pairs.
ThresholdFit fit_threshold(std::vector<ScoredPair> pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& a, const ScoredPair& b) { return a.score < b.score; });
    const std::size_t n = pairs.size();
    std::size_t genuine_total = 0;
    for (const auto& p : pairs) genuine_total += p.genuine ? 1 : 0;
    // Cut at i: pairs[0..i) rejected, pairs[i..n) accepted.
    std::size_t impostor_below = 0;
    std::size_t genuine_below = 0;
    ThresholdFit best{-kInf, static_cast<double>(genuine_total) / static_cast<double>(n)};
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && pairs[j].score == pairs[i].score) {
            (pairs[j].genuine ? genuine_below : impostor_below) += 1;
            ++j;
        }
        const double acc =
            static_cast<double>(impostor_below + (genuine_total - genuine_below)) / static_cast<double>(n);
        if (acc > best.accuracy) best = {j < n ? 0.5 * (pairs[i].score + pairs[j].score) : kInf, acc};
        i = j;
    }
    return best;
}

double accuracy_at(std::span<const ScoredPair> pairs, double threshold) {
    std::size_t correct = 0;
    for (const auto& p : pairs) correct += ((p.score > threshold) == p.genuine) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace

double verification_accuracy(std::span<const ScoredPair> pairs, std::size_t folds) {
    if (pairs.size() < 2) throw std::invalid_argument("verification: need at least 2 pairs");
    if (folds == 0 || pairs.size() < folds) throw std::invalid_argument("verification: fewer pairs than folds");
    if (folds == 1) return fit_threshold({pairs.begin(), pairs.end()}).accuracy;
    const std::size_t n = pairs.size();
    double total = 0.0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t lo = f * n / folds;
        const std::size_t hi = (f + 1) * n / folds;
        std::vector<ScoredPair> train(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(lo));
        train.insert(train.end(), pairs.begin() + static_cast<std::ptrdiff_t>(hi), pairs.end());
        const double t = fit_threshold(std::move(train)).threshold;
        total += accuracy_at(pairs.subspan(lo, hi - lo), t);
    }
    return total / static_cast<double>(folds);
}

std::size_t default_verification_folds(std::size_t pairs) { return pairs >= 100 ? 10 : 1; }

std::vector<TarFarRow> tar_at_far(std::span<const double> genuine, std::span<const double> impostor,
                                  std::span<const double> far_targets) {
    if (impostor.empty()) throw std::invalid_argument("tar_at_far: empty impostor set");
    std::vector<double> imp(impostor.begin(), impostor.end());
    std::vector<double> gen(genuine.begin(), genuine.end());
    std::sort(imp.begin(), imp.end());
    std::sort(gen.begin(), gen.end());
    std::vector<double> cands(imp);
    cands.insert(cands.end(), gen.begin(), gen.end());
    cands.push_back(kInf);
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

    auto count_at_least = [](const std::vector<double>& sorted, double t) {
        return static_cast<std::size_t>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
    };
    std::vector<TarFarRow> rows;
    for (double target : far_targets) {
        TarFarRow row;
        row.far_target = target;
        row.below_resolution = target < 1.0 / static_cast<double>(imp.size());
        // FAR is non-increasing in t: the first feasible candidate is the most permissive.
        for (double t : cands) {
            const double far = static_cast<double>(count_at_least(imp, t)) / static_cast<double>(imp.size());
            if (far <= target) {
                row.threshold = t;
                row.far = far;
                row.tar = gen.empty() ? 0.0
                                      : static_cast<double>(count_at_least(gen, t)) / static_cast<double>(gen.size());
                break;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<TpirRow> tpir_at_fpir(const DistanceMatrix& d, std::span<const int> probe_labels,
                                  std::span<const int> gallery_labels, std::span<const double> fpir_targets) {
    check_labels(d, probe_labels, gallery_labels);
    if (d.cols == 0) throw std::invalid_argument("tpir_at_fpir: empty gallery");
    const std::set<int> present(gallery_labels.begin(), gallery_labels.end());
    std::vector<double> mate_sims;     // best similarity of in-gallery probes whose top match is correct
    std::size_t mated = 0;
    std::vector<double> distractor_sims;
    for (std::size_t q = 0; q < d.rows; ++q) {
        std::size_t best = 0;
        for (std::size_t g = 1; g < d.cols; ++g)
            if (d(q, g) < d(q, best)) best = g;
        const double sim = -d(q, best);
        if (present.count(probe_labels[q])) {
            ++mated;
            if (gallery_labels[best] == probe_labels[q]) mate_sims.push_back(sim);
        } else {
            distractor_sims.push_back(sim);
        }
    }
    if (mated == 0) throw std::invalid_argument("tpir_at_fpir: no in-gallery probes");
    if (distractor_sims.empty()) throw std::invalid_argument("tpir_at_fpir: no out-of-gallery probes; FPIR undefined");
    std::sort(mate_sims.begin(), mate_sims.end());
    std::sort(distractor_sims.begin(), distractor_sims.end());
    std::vector<double> cands{-kInf};
    cands.insert(cands.end(), mate_sims.begin(), mate_sims.end());
    cands.insert(cands.end(), distractor_sims.begin(), distractor_sims.end());
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());

    auto count_above = [](const std::vector<double>& sorted, double t) {
        return static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
    };
    std::vector<TpirRow> rows;
    for (double target : fpir_targets) {
        TpirRow row;
        row.fpir_target = target;
        for (double t : cands) {
            const double fpir =
                static_cast<double>(count_above(distractor_sims, t)) / static_cast<double>(distractor_sims.size());
            if (fpir <= target) {
                row.threshold = t;
                row.fpir = fpir;
                row.tpir = static_cast<double>(count_above(mate_sims, t)) / static_cast<double>(mated);
                break;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

void FeatureStore::add(FeatureRecord r) {
    if (!(r.embedding.magnitude > 0)) throw std::invalid_argument("feature store: magnitude must be positive");
    if (!records_.empty() && r.embedding.direction.size() != dim())
        throw std::invalid_argument("feature store: dimension mismatch");
    if (find(r.sample_id, r.tag)) throw std::invalid_argument("feature store: duplicate (sample id, backbone) record");
    records_.push_back(std::move(r));
}

const FeatureRecord* FeatureStore::find(std::uint32_t sample_id, BackboneTag tag) const {
    for (const auto& r : records_)
        if (r.sample_id == sample_id && r.tag == tag) return &r;
    return nullptr;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

class Reader {
public:
    explicit Reader(std::string_view b) : b_(b) {}
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(b_[pos_++]);
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
    void need(std::size_t n) const {
        if (b_.size() - pos_ < n) throw ParseError(pos_, "truncated feature store");
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == b_.size(); }

private:
    std::string_view b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string FeatureStore::encode() const {
    std::string out = "DFS1";
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(records_.size()));
    put_u32(out, static_cast<std::uint32_t>(dim()));
    for (const auto& r : records_) {
        put_u32(out, r.sample_id);
        put_u32(out, r.label);
        out.push_back(static_cast<char>(r.tag));
        put_f32(out, r.embedding.magnitude);
        for (double v : r.embedding.direction.values()) put_f32(out, v);
    }
    return out;
}

FeatureStore FeatureStore::decode(std::string_view bytes) {
    if (bytes.substr(0, 4) != "DFS1") throw ParseError(0, "bad feature store magic (expected DFS1)");
    Reader r(bytes.substr(4));
    const auto version = r.u32();
    if (version > kVersion)
        throw ParseError(4, "unsupported feature store version " + std::to_string(version) + " (this build reads <= " +
                                std::to_string(kVersion) + ")");
    const auto count = r.u32();
    const auto dim = r.u32();
    FeatureStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        rec.sample_id = r.u32();
        rec.label = r.u32();
        const auto tag = r.u8();
        if (tag > 1) throw ParseError(4 + r.pos() - 1, "unknown backbone tag");
        rec.tag = static_cast<BackboneTag>(tag);
        rec.embedding.magnitude = r.f32();
        RealVector dir(dim);
        for (auto& v : dir) v = r.f32();
        rec.embedding.direction = UnitVector::unchecked(std::move(dir));
        store.add(std::move(rec));
    }
    if (!r.done()) throw ParseError(4 + r.pos(), "trailing bytes after feature records");
    return store;
}

std::string MetricReport::to_csv() const {
    std::string out = "metric,value\n";
    char buf[64];
    for (const auto& [name, v] : values) {
        std::snprintf(buf, sizeof buf, "%.10f", v);
        out += name + "," + buf + "\n";
    }
    return out;
}

std::string MetricReport::to_text() const {
    std::string out;
    char buf[128];
    for (const auto& [name, v] : values) {
        std::snprintf(buf, sizeof buf, "%-24s %8.4f\n", name.c_str(), v);
        out += buf;
    }
    return out;
}

}  // namespace dali
