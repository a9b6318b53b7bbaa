#pragma once

// Brute-force reference implementations used by the tests. They are written
// for clarity, not speed, and share no code with the library beyond types.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <set>
#include <span>
#include <vector>

#include "dali/evaluation.hpp"
#include "dali/numerics.hpp"

namespace oracle {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline std::vector<double> random_unit(dali::SeedStream& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    for (auto& x : v) {
        x = rng.normal();
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

/// Central difference of f at x for every coordinate.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-6) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

/// |a - b| / max(|a|, |b|) over whole vectors; 0 when both vanish.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale < 1e-300 ? 0.0 : std::sqrt(diff) / scale;
}

/// Margin cross-entropy straight from the definition with the angle taken
/// explicitly: log(1 + sum_{j != pos} exp(z_j - z_pos)).
inline double ce_value(std::span<const double> f, const std::vector<std::vector<double>>& cands, std::size_t pos,
                       double m1, double m2, double scale) {
    std::vector<double> z(cands.size());
    for (std::size_t j = 0; j < cands.size(); ++j) {
        const double c = std::clamp(dot(f, cands[j]), -1.0, 1.0);
        z[j] = j == pos ? scale * (std::cos(std::acos(c) + m1) - m2) : scale * c;
    }
    double rest = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j)
        if (j != pos) rest += std::exp(z[j] - z[pos]);
    return std::log1p(rest);
}

/// Farthest-point selection recomputing every sample's distance to the
/// chosen set from scratch at each step.
inline std::vector<std::size_t> greedy_fps(const std::vector<std::vector<double>>& x, std::size_t k,
                                           std::size_t first) {
    auto dist = [&](std::size_t a, std::size_t b) { return 1.0 - std::clamp(dot(x[a], x[b]), -1.0, 1.0); };
    std::vector<std::size_t> chosen{first};
    while (chosen.size() < std::min(k, x.size())) {
        std::size_t best = x.size();
        double best_d = -1.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
            double d = kInf;
            for (std::size_t c : chosen) d = std::min(d, dist(c, j));
            if (d > best_d) {
                best_d = d;
                best = j;
            }
        }
        chosen.push_back(best);
    }
    return chosen;
}

/// 1-based rank of gallery item g for query q: items strictly closer, or
/// equally close with a lower index, come first.
inline std::size_t rank_of(const dali::DistanceMatrix& d, std::size_t q, std::size_t g) {
    std::size_t r = 1;
    for (std::size_t o = 0; o < d.cols; ++o)
        if (d(q, o) < d(q, g) || (d(q, o) == d(q, g) && o < g)) ++r;
    return r;
}

inline std::vector<double> cmc(const dali::DistanceMatrix& d, std::span<const int> ql, std::span<const int> gl,
                               std::span<const std::size_t> ranks) {
    std::vector<std::size_t> hits(ranks.size(), 0);
    std::size_t evaluated = 0;
    for (std::size_t q = 0; q < d.rows; ++q) {
        std::size_t best = 0;
        for (std::size_t g = 0; g < d.cols; ++g)
            if (gl[g] == ql[q]) {
                const auto r = rank_of(d, q, g);
                if (best == 0 || r < best) best = r;
            }
        if (best == 0) continue;
        ++evaluated;
        for (std::size_t k = 0; k < ranks.size(); ++k)
            if (best <= ranks[k]) ++hits[k];
    }
    std::vector<double> acc;
    for (auto h : hits) acc.push_back(evaluated ? static_cast<double>(h) / static_cast<double>(evaluated) : 0.0);
    return acc;
}

inline double mean_ap(const dali::DistanceMatrix& d, std::span<const int> ql, std::span<const int> gl) {
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t q = 0; q < d.rows; ++q) {
        std::vector<std::size_t> pos_ranks;
        for (std::size_t g = 0; g < d.cols; ++g)
            if (gl[g] == ql[q]) pos_ranks.push_back(rank_of(d, q, g));
        if (pos_ranks.empty()) continue;
        double ap = 0.0;
        for (auto r : pos_ranks) {
            std::size_t at_or_before = 0;
            for (auto o : pos_ranks) at_or_before += o <= r ? 1 : 0;
            ap += static_cast<double>(at_or_before) / static_cast<double>(r);
        }
        sum += ap / static_cast<double>(pos_ranks.size());
        ++counted;
    }
    return counted ? sum / static_cast<double>(counted) : 0.0;
}

inline double accuracy_at(std::span<const dali::ScoredPair> pairs, double t) {
    std::size_t correct = 0;
    for (const auto& p : pairs) correct += ((p.score > t) == p.genuine) ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

/// Best accuracy over -inf, +inf and every midpoint of distinct scores.
inline double best_verification(std::span<const dali::ScoredPair> pairs) {
    std::set<double> scores;
    for (const auto& p : pairs) scores.insert(p.score);
    std::vector<double> ts{-kInf, kInf};
    for (auto it = scores.begin(); std::next(it) != scores.end(); ++it) ts.push_back(0.5 * (*it + *std::next(it)));
    double best = 0.0;
    for (double t : ts) best = std::max(best, accuracy_at(pairs, t));
    return best;
}

struct TarFar {
    double tar = 0, far = 0, threshold = 0;
};

/// Lowest observed score (or +inf) whose FAR (score >= t) is within target.
inline TarFar tar_at_far(std::span<const double> gen, std::span<const double> imp, double target) {
    std::vector<double> ts(gen.begin(), gen.end());
    ts.insert(ts.end(), imp.begin(), imp.end());
    ts.push_back(kInf);
    auto frac = [](std::span<const double> xs, double t) {
        std::size_t c = 0;
        for (double x : xs) c += x >= t ? 1 : 0;
        return xs.empty() ? 0.0 : static_cast<double>(c) / static_cast<double>(xs.size());
    };
    TarFar best{0, 0, kInf};
    bool found = false;
    for (double t : ts) {
        if (frac(imp, t) > target) continue;
        if (!found || t < best.threshold) {
            best = {frac(gen, t), frac(imp, t), t};
            found = true;
        }
    }
    return best;
}

struct Tpir {
    double tpir = 0, fpir = 0, threshold = 0;
};

inline Tpir tpir_at_fpir(const dali::DistanceMatrix& d, std::span<const int> pl, std::span<const int> gl,
                         double target) {
    std::vector<double> best_sim(d.rows);
    std::vector<bool> correct(d.rows), mated(d.rows);
    for (std::size_t q = 0; q < d.rows; ++q) {
        std::size_t top = 0;
        for (std::size_t g = 0; g < d.cols; ++g)
            if (rank_of(d, q, g) == 1) top = g;
        best_sim[q] = -d(q, top);
        correct[q] = gl[top] == pl[q];
        mated[q] = std::find(gl.begin(), gl.end(), pl[q]) != gl.end();
    }
    std::vector<double> ts{-kInf};
    ts.insert(ts.end(), best_sim.begin(), best_sim.end());
    Tpir best{0, 0, kInf};
    bool found = false;
    for (double t : ts) {
        std::size_t fp = 0, nd = 0, tp = 0, nm = 0;
        for (std::size_t q = 0; q < d.rows; ++q) {
            if (mated[q]) {
                ++nm;
                tp += (correct[q] && best_sim[q] > t) ? 1 : 0;
            } else {
                ++nd;
                fp += best_sim[q] > t ? 1 : 0;
            }
        }
        const double fpir = static_cast<double>(fp) / static_cast<double>(nd);
        if (fpir > target) continue;
        if (!found || t < best.threshold) {
            best = {static_cast<double>(tp) / static_cast<double>(nm), fpir, t};
            found = true;
        }
    }
    return best;
}

/// Half-cosine ramp from w0 to 1 over T steps.
inline double schedule_weight(double w0, double t, double T) {
    const double pi = std::acos(-1.0);
    const double tc = std::min(t, T);
    return 1.0 - (1.0 - w0) * (1.0 + std::cos(pi * tc / T)) / 2.0;
}

}  // namespace oracle
