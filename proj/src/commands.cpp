#include "dali/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <sstream>

#include "dali/parallel.hpp"

namespace dali {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDataStream = 10;
constexpr std::uint64_t kQueryStream = 11;

const double kFarTargets[] = {1e-1, 1e-2, 1e-3, 1e-4};
const double kFpirTargets[] = {0.01, 0.1, 0.2};

void make_dirs(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string target_name(const char* prefix, double t) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%.0e", prefix, t);
    return buf;
}

std::vector<int> labels_of(const IdentityDataset& ds, std::span<const std::size_t> idx) {
    std::vector<int> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(ds.samples[i].label);
    return out;
}

std::vector<Image> images_of(const IdentityDataset& ds, std::span<const std::size_t> idx) {
    std::vector<Image> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(ds.samples[i].image);
    return out;
}

}  // namespace

IdentityDataset make_dataset(const RunConfig& cfg) {
    auto ds = generate_dataset(cfg.dataset, SeedStream(cfg.seed).derive(kDataStream));
    for (auto& s : ds.samples) s.image = quantize(s.image);
    return ds;
}

void gen_data(const RunConfig& cfg, const fs::path& dir) {
    cfg.validate();
    make_dirs(dir);
    save_dataset(make_dataset(cfg), dir);
    write_file(dir / "run_config.json", config_json(cfg));
}

void distort_directory(const fs::path& in_dir, const fs::path& out_dir, DistortionLevel level, std::uint64_t seed,
                       const DistortionParams* params) {
    std::error_code ec;
    if (!fs::is_directory(in_dir, ec)) throw IoError("input directory not found: " + in_dir.string());
    if (fs::exists(out_dir, ec) && fs::equivalent(in_dir, out_dir, ec))
        throw IoError("output directory must differ from the input directory");
    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(in_dir, ec); !ec && it != fs::recursive_directory_iterator();
         it.increment(ec))
        if (it->is_regular_file()) files.push_back(fs::relative(it->path(), in_dir));
    if (ec) throw IoError("cannot list " + in_dir.string() + ": " + ec.message());
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });

    const SeedStream root(seed);
    for (const auto& rel : files) {
        const auto bytes = read_file(in_dir / rel);
        const auto ext = rel.extension().string();
        make_dirs((out_dir / rel).parent_path());
        if (level.clean() || (ext != ".pgm" && ext != ".ppm")) {
            write_file(out_dir / rel, bytes);
            continue;
        }
        const Image img = decode_pnm(bytes);
        const DistortionParams p = params ? *params : DistortionParams::defaults(img.width, img.height);
        write_file(out_dir / rel, encode_pnm(distort(img, level, p, root.derive(fnv1a64(rel.generic_string())))));
    }
}

TrainResult train_to_directory(const RunConfig& cfg, TrainKind kind, const IdentityDataset& ds, const fs::path& out_dir,
                               const Checkpoint* resume, int stop_after_epoch) {
    cfg.validate();
    make_dirs(out_dir);
    write_file(out_dir / "run_config.json", config_json(cfg));

    const auto log_path = out_dir / "epoch_log.csv";
    std::string log_text = epoch_log_csv({});
    if (resume && fs::exists(log_path)) {
        std::istringstream in(read_file(log_path));
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (std::atoi(line.c_str()) <= resume->epoch) log_text += line + "\n";
        }
    }

    TrainOptions opts;
    opts.resume = resume;
    opts.stop_after_epoch = stop_after_epoch;
    opts.on_epoch = [&](const Checkpoint& ck, const EpochLog& log) {
        save_checkpoint(out_dir / "checkpoint.dck", ck);
        const std::string row = epoch_log_csv(std::span(&log, 1));
        log_text += row.substr(row.find('\n') + 1);
        write_file(log_path, log_text);
    };
    auto result = train(cfg.train_config(), ds, kind, opts);
    if (result.log.empty()) {
        save_checkpoint(out_dir / "checkpoint.dck", result.checkpoint);
        write_file(log_path, log_text);
    }
    return result;
}

EvalProtocolKind parse_protocol(const std::string& s) {
    if (s == "cmc") return EvalProtocolKind::cmc;
    if (s == "map") return EvalProtocolKind::map;
    if (s == "verify") return EvalProtocolKind::verify;
    if (s == "tarfar") return EvalProtocolKind::tarfar;
    if (s == "tpirfpir") return EvalProtocolKind::tpirfpir;
    throw ConfigError("unknown protocol '" + s + "' (expected cmc, map, verify, tarfar or tpirfpir)");
}

const char* protocol_name(EvalProtocolKind p) {
    switch (p) {
        case EvalProtocolKind::cmc: return "cmc";
        case EvalProtocolKind::map: return "map";
        case EvalProtocolKind::verify: return "verify";
        case EvalProtocolKind::tarfar: return "tarfar";
        case EvalProtocolKind::tpirfpir: return "tpirfpir";
    }
    return "cmc";
}

std::vector<Image> query_images(const IdentityDataset& ds, std::span<const std::size_t> queries, DistortionLevel level,
                                const DistortionParams& params, std::uint64_t seed) {
    const auto root = SeedStream(seed).derive(kQueryStream).derive(static_cast<std::uint64_t>(level.value()));
    std::vector<Image> out;
    out.reserve(queries.size());
    for (auto i : queries) {
        const Image& img = ds.samples[i].image;
        out.push_back(level.clean() ? img : quantize(distort(img, level, params, root.derive(i))));
    }
    return out;
}

MetricReport protocol_metrics(EvalProtocolKind protocol, const DistanceMatrix& d, std::span<const int> ql,
                              std::span<const int> gl) {
    MetricReport r;
    switch (protocol) {
        case EvalProtocolKind::cmc:
        case EvalProtocolKind::map: {
            std::vector<std::size_t> ranks;
            for (std::size_t k : {1, 5, 10})
                if (k <= d.cols) ranks.push_back(k);
            const auto c = cmc(d, ql, gl, ranks);
            if (protocol == EvalProtocolKind::map) {
                r.add("mAP", mean_average_precision(d, ql, gl));
                r.add("rank1", c.accuracy.front());
            } else {
                for (std::size_t i = 0; i < ranks.size(); ++i) r.add("rank" + std::to_string(ranks[i]), c.accuracy[i]);
            }
            break;
        }
        case EvalProtocolKind::verify: {
            // One genuine pair and one impostor pair (next gallery entry) per query.
            std::vector<ScoredPair> pairs;
            for (std::size_t q = 0; q < d.rows; ++q) {
                const auto it = std::find(gl.begin(), gl.end(), ql[q]);
                if (it == gl.end()) continue;
                const auto g = static_cast<std::size_t>(it - gl.begin());
                pairs.push_back({-d(q, g), true});
                pairs.push_back({-d(q, (g + 1) % d.cols), false});
            }
            if (pairs.empty()) throw std::invalid_argument("verify: no query has a gallery mate");
            r.add("verification_accuracy", verification_accuracy(pairs, default_verification_folds(pairs.size())));
            break;
        }
        case EvalProtocolKind::tarfar: {
            std::vector<double> genuine, impostor;
            for (std::size_t q = 0; q < d.rows; ++q)
                for (std::size_t g = 0; g < d.cols; ++g) (ql[q] == gl[g] ? genuine : impostor).push_back(-d(q, g));
            for (const auto& row : tar_at_far(genuine, impostor, kFarTargets)) r.add(target_name("tar@far=", row.far_target), row.tar);
            break;
        }
        case EvalProtocolKind::tpirfpir:
            for (const auto& row : tpir_at_fpir(d, ql, gl, kFpirTargets)) r.add(target_name("tpir@fpir=", row.fpir_target), row.tpir);
            break;
    }
    return r;
}

EvalOutput evaluate(const Checkpoint& a, const Checkpoint* b, const IdentityDataset& ds, const EvalRequest& req) {
    if (req.fuse && !b) throw ConfigError("fusion needs a second checkpoint");
    int probe_only = req.probe_only_ids;
    if (req.protocol == EvalProtocolKind::tpirfpir && probe_only == 0) probe_only = std::max(1, ds.num_ids / 8);
    const auto protocol = build_protocol(ds, probe_only, req.gallery_only_ids);
    const auto gallery_images = images_of(ds, protocol.gallery);
    const auto probes = query_images(ds, protocol.queries, req.query_level, req.distortion, req.seed);
    const auto gl = labels_of(ds, protocol.gallery);
    const auto ql = labels_of(ds, protocol.queries);

    EvalOutput out;
    auto record = [&](const std::vector<Embedding>& g, const std::vector<Embedding>& q, BackboneTag tag) {
        for (std::size_t i = 0; i < g.size(); ++i)
            out.features.add({static_cast<std::uint32_t>(protocol.gallery[i]), static_cast<std::uint32_t>(gl[i]), tag, g[i]});
        for (std::size_t i = 0; i < q.size(); ++i)
            out.features.add({static_cast<std::uint32_t>(protocol.queries[i]), static_cast<std::uint32_t>(ql[i]), tag, q[i]});
    };
    const auto ga = embed_images(a.eval_params(), gallery_images);
    const auto qa = embed_images(a.eval_params(), probes);
    record(ga, qa, BackboneTag::clean);
    DistanceMatrix d;
    if (req.fuse) {
        const auto gb = embed_images(b->eval_params(), gallery_images);
        const auto qb = embed_images(b->eval_params(), probes);
        record(gb, qb, BackboneTag::adaptive);
        d = fused_distance_matrix(qa, ga, qb, gb, req.fusion);
    } else {
        d = distance_matrix(qa, ga);
    }
    out.report = protocol_metrics(req.protocol, d, ql, gl);
    return out;
}

std::string schedule_csv(const WeightSchedule& sched) {
    sched.validate();
    std::string out = "step,level,weight\n";
    std::int64_t prev = -1;
    char buf[96];
    for (int j = 0; j <= 100; ++j) {
        const auto t = static_cast<std::int64_t>(std::llround(static_cast<double>(j) * static_cast<double>(sched.total_steps) / 100.0));
        if (t == prev) continue;
        prev = t;
        for (int l = 0; l <= DistortionLevel::kMax; ++l) {
            std::snprintf(buf, sizeof buf, "%lld,%d,%.12f\n", static_cast<long long>(t), l,
                          weight(DistortionLevel(l), t, sched));
            out += buf;
        }
    }
    return out;
}

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 0;
};

RunConfig resolve_config(const GlobalFlags& g) {
    RunConfig cfg = g.config.empty() ? RunConfig::defaults() : load_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    cfg.validate();
    return cfg;
}

void apply_threads(const GlobalFlags& g) {
    std::size_t n = 1;
    if (g.threads > 0) {
        n = static_cast<std::size_t>(g.threads);
    } else if (const char* env = std::getenv("DALI_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = static_cast<std::size_t>(v);
    }
    set_thread_count(n);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Distortion-adaptive identification toolkit", "dali"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalFlags g;
    app.add_option("--config", g.config, "Run configuration (JSON)");
    app.add_option("--seed", g.seed, "Master seed (overrides the config)");
    app.add_option("--out", g.out, "Output path");
    app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")->check(CLI::NonNegativeNumber);

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic identity dataset");

    auto* dis = app.add_subcommand("distort", "Write distorted copies of a directory of images");
    std::string dis_in;
    int dis_level = 0;
    dis->add_option("--in", dis_in, "Input directory")->required();
    dis->add_option("--level", dis_level, "Distortion level 0..5")->required();

    auto* tr = app.add_subcommand("train", "Train a backbone");
    std::string tr_mode = "clean", tr_dataset, tr_resume;
    int tr_stop = -1;
    tr->add_option("--mode", tr_mode, "clean or adaptive")->check(CLI::IsMember({"clean", "adaptive"}));
    tr->add_option("--dataset", tr_dataset, "Dataset directory (default <output_dir>/dataset)");
    tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
    tr->add_option("--stop-after", tr_stop, "Stop once this many epochs are complete");

    auto* ev = app.add_subcommand("eval", "Evaluate one backbone or the fused pair");
    std::string ev_a, ev_b, ev_dataset, ev_protocol = "cmc", ev_features;
    bool ev_fuse = false;
    int ev_level = 0, ev_distractors = 0;
    ev->add_option("--checkpoint", ev_a, "Checkpoint (clean backbone when fusing)")->required();
    ev->add_option("--checkpoint-b", ev_b, "Second checkpoint (distortion-adaptive backbone)");
    ev->add_option("--dataset", ev_dataset, "Dataset directory")->required();
    ev->add_option("--protocol", ev_protocol, "cmc, map, verify, tarfar or tpirfpir");
    ev->add_flag("--fuse", ev_fuse, "Fuse both backbones");
    ev->add_option("--query-level", ev_level, "Distortion level applied to queries");
    ev->add_option("--distractors", ev_distractors, "Probe-only identities (0: config, or num_ids/8 for tpirfpir)");
    ev->add_option("--features", ev_features, "Write the feature store here");

    auto* sp = app.add_subcommand("schedule-plot", "Write the weight schedule as CSV");

    std::vector<const char*> argv{"dali"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_threads(g);
        const RunConfig cfg = resolve_config(g);
        const fs::path base = cfg.output_dir;
        if (gen->parsed()) {
            const fs::path dir = g.out.empty() ? base / "dataset" : fs::path(g.out);
            gen_data(cfg, dir);
            out << "dataset written to " << dir.string() << "\n";
        } else if (dis->parsed()) {
            if (dis_level < 0 || dis_level > DistortionLevel::kMax) {
                err << "error: --level must be in 0..5\n";
                return 2;
            }
            if (g.out.empty()) {
                err << "error: distort needs --out\n";
                return 2;
            }
            const DistortionParams* params = g.config.empty() ? nullptr : &cfg.train.distortion;
            distort_directory(dis_in, g.out, DistortionLevel(dis_level), cfg.seed, params);
        } else if (tr->parsed()) {
            const TrainKind kind = tr_mode == "adaptive" ? TrainKind::adaptive : TrainKind::clean;
            const fs::path dir = g.out.empty() ? base / kind_name(kind) : fs::path(g.out);
            const auto ds = load_dataset(tr_dataset.empty() ? base / "dataset" : fs::path(tr_dataset));
            std::optional<Checkpoint> resume;
            if (!tr_resume.empty()) resume = load_checkpoint(tr_resume);
            const auto result = train_to_directory(cfg, kind, ds, dir, resume ? &*resume : nullptr, tr_stop);
            out << kind_name(kind) << " backbone: " << result.checkpoint.epoch << " epochs, " << result.checkpoint.step
                << " steps, checkpoint in " << dir.string() << "\n";
        } else if (ev->parsed()) {
            if (ev_fuse && ev_b.empty()) {
                err << "error: --fuse requires --checkpoint-b\n";
                return 2;
            }
            if (ev_level < 0 || ev_level > DistortionLevel::kMax) {
                err << "error: --query-level must be in 0..5\n";
                return 2;
            }
            EvalRequest req;
            req.protocol = parse_protocol(ev_protocol);
            req.query_level = DistortionLevel(ev_level);
            req.probe_only_ids = ev_distractors > 0 ? ev_distractors : cfg.probe_only_ids;
            req.gallery_only_ids = cfg.gallery_only_ids;
            req.fuse = ev_fuse;
            req.fusion = cfg.fusion;
            req.seed = cfg.seed;
            const auto ds = load_dataset(ev_dataset);
            req.distortion = g.config.empty() ? DistortionParams::defaults(ds.size, ds.size) : cfg.train.distortion;
            const auto a = load_checkpoint(ev_a);
            std::optional<Checkpoint> b;
            if (!ev_b.empty()) b = load_checkpoint(ev_b);
            const auto result = evaluate(a, b ? &*b : nullptr, ds, req);
            if (!ev_features.empty()) write_file(ev_features, result.features.encode());
            if (g.out.empty()) out << result.report.to_csv();
            else write_file(g.out, result.report.to_csv());
            if (!g.out.empty()) out << result.report.to_text();
        } else if (sp->parsed()) {
            WeightSchedule s = cfg.train.schedule;
            if (s.total_steps <= 0) s.total_steps = std::max<std::int64_t>(1, cfg.planned_steps());
            const auto csv = schedule_csv(s);
            if (g.out.empty()) out << csv;
            else write_file(g.out, csv);
        }
        return 0;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace dali
