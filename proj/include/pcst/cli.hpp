#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dependency_filter.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "manifest.hpp"
#include "mini_denoiser.hpp"
#include "model_io.hpp"
#include "netpbm.hpp"
#include "noise.hpp"
#include "parallel.hpp"
#include "patch_craft.hpp"
#include "rng.hpp"
#include "scene.hpp"
#include "stats_verify.hpp"
#include "tensor_io.hpp"

namespace pcst::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// A check ran to completion and its result violates the expected invariant.
class invariant_failure : public std::runtime_error {
public:
    invariant_failure(std::string what, json summary) : std::runtime_error(std::move(what)), summary_(std::move(summary)) {}
    const json& summary() const noexcept { return summary_; }

private:
    json summary_;
};

enum exit_status : int { ok = 0, failed = 1, usage = 2 };

namespace detail {

inline std::string indexed(const char* prefix, std::size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%02zu%s", prefix, i, ext);
    return buf;
}

inline bool has_ext(const fs::path& p, std::initializer_list<const char*> exts) {
    const std::string e = p.extension().string();
    return std::any_of(exts.begin(), exts.end(), [&](const char* x) { return e == x; });
}

inline Image load_frame(const fs::path& p) {
    if (has_ext(p, {".pcrf"})) return to_image(load_tensor(p));
    return load_image(p);
}

/// Regular files in `dir` whose name starts with `prefix` and has one of `exts`, sorted by name.
inline std::vector<fs::path> list_files(const fs::path& dir, const std::string& prefix,
                                        std::initializer_list<const char*> exts) {
    if (!fs::is_directory(dir)) throw io_error("not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && has_ext(e.path(), exts)) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::optional<json> read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) return std::nullopt;
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw format_error(p.string() + ": " + e.what(), 0);
    }
}

inline void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + p.string());
    out << text;
}

inline std::string relative_to(const fs::path& p, const fs::path& base) {
    return fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(base).lexically_normal()).generic_string();
}

inline fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
}

inline fs::path manifest_dir(const fs::path& manifest) {
    return manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
}

inline json noise_json(const NoiseModel& m) {
    json j = {{"sigma", m.sigma}};
    if (std::holds_alternative<noise_kind::Iid>(m.kind)) j["kind"] = "iid";
    if (auto* f = std::get_if<noise_kind::FlatKernel>(&m.kind)) {
        j["kind"] = "flat";
        j["k"] = f->k;
    }
    if (auto* b = std::get_if<noise_kind::BilinearDecay>(&m.kind)) {
        j["kind"] = "bilinear";
        j["theta"] = b->theta;
    }
    return j;
}

/// Noisy frames of a burst directory: noisy_*.pcrf if present, otherwise
/// every *.pgm / *.ppm / *.pcrf file in name order.
inline std::vector<fs::path> burst_frames(const fs::path& dir) {
    auto frames = list_files(dir, "noisy_", {".pcrf"});
    if (frames.empty()) frames = list_files(dir, "", {".pgm", ".ppm", ".pcrf"});
    if (frames.size() < 2) throw io_error("burst directory needs at least two frames: " + dir.string());
    return frames;
}

inline std::size_t burst_input_index(const fs::path& dir, int requested, std::size_t frames) {
    std::size_t idx = frames / 2;
    if (requested >= 0) {
        idx = static_cast<std::size_t>(requested);
    } else if (auto meta = read_json_file(dir / "burst.json"); meta && meta->contains("input_index")) {
        idx = meta->at("input_index").get<std::size_t>();
    }
    if (idx >= frames) throw std::invalid_argument("input index " + std::to_string(idx) + " out of range");
    return idx;
}

/// Tabulated patch size when the burst was synthesized with flat-kernel noise, else 19.
inline int burst_patch_size(const fs::path& dir) {
    auto meta = read_json_file(dir / "burst.json");
    if (meta && meta->contains("noise")) {
        const json& n = meta->at("noise");
        if (n.value("kind", "") == "flat" && n.value("k", 1) >= 2) return default_patch_size(n.at("sigma").get<double>(), n.at("k").get<int>());
    }
    return 19;
}

inline std::vector<fs::path> burst_dirs(const fs::path& root) {
    std::vector<fs::path> dirs;
    if (!fs::is_directory(root)) throw io_error("not a directory: " + root.string());
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "burst.json")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

inline json moments_json(const SampleMoments& m) {
    return {{"count", m.count},       {"mean", m.mean},
            {"variance", m.variance}, {"skewness", m.skewness},
            {"excess_kurtosis", m.excess_kurtosis}, {"se_mean", m.se_mean},
            {"se_variance", m.se_variance}};
}

inline json threshold_json(const ThresholdResult& t) {
    json j;
    j["s_min"] = t.s_min ? json(*t.s_min) : json(nullptr);
    j["retained_fraction"] = t.retained_fraction;
    j["peak_location"] = t.peak_location;
    j["retained_mean"] = t.retained_mean;
    j["bin_width"] = t.bin_width;
    j["full_mean"] = t.full_mean;
    return j;
}

inline json nan_safe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// --- synth -------------------------------------------------------------------

struct SynthOptions {
    std::string out_dir;
    std::string clean_dir;
    std::size_t scenes = 1;
    SceneConfig scene;
    double sigma = 0.0;
    int kernel_size = 0;
    double theta = 0.0;
    std::uint64_t seed = 0;
};

inline NoiseModel noise_from_flags(double sigma, int kernel_size, double theta) {
    NoiseModel m{sigma, noise_kind::Iid{}};
    if (theta > 0.0)
        m.kind = noise_kind::BilinearDecay{theta};
    else if (kernel_size > 0)
        m.kind = noise_kind::FlatKernel{kernel_size};
    m.validate();
    return m;
}

inline json cmd_synth(const SynthOptions& o) {
    const NoiseModel model = noise_from_flags(o.sigma, o.kernel_size, o.theta);
    const fs::path out(o.out_dir);
    const bool from_disk = !o.clean_dir.empty();
    const std::size_t count = from_disk ? 1 : o.scenes;
    if (count == 0) throw std::invalid_argument("synth: --scenes must be positive");

    double psnr_total = 0.0;
    for (std::size_t b = 0; b < count; ++b) {
        Burst clean;
        const char* ext = ".pgm";
        if (from_disk) {
            for (const auto& p : list_files(o.clean_dir, "", {".pgm", ".ppm"})) clean.frames.push_back(load_image(p));
            if (clean.frames.empty()) throw io_error("no PGM/PPM frames in " + o.clean_dir);
            clean.input_index = clean.frames.size() / 2;
        } else {
            Rng scene_rng(derive_seed(o.seed, "scene", b));
            clean = synthetic_clean_burst(o.scene, scene_rng);
        }
        clean.validate();
        if (clean.input().channels() == 3) ext = ".ppm";

        const Rng noise_rng(derive_seed(o.seed, "noise", b));
        const Burst noisy = synth_burst(clean, model, noise_rng);
        const fs::path dir = out / indexed("burst", b, "");
        fs::create_directories(dir);
        for (std::size_t j = 0; j < clean.frames.size(); ++j) {
            save_image(clean.frames[j], dir / indexed("clean", j, ext));
            save_tensor(to_tensor(noisy.frames[j]), dir / indexed("noisy", j, ".pcrf"));
        }
        json meta = {{"frames", clean.frames.size()},
                     {"input_index", clean.input_index},
                     {"noise", noise_json(model)},
                     {"seed", o.seed},
                     {"noise_seed", noise_rng.seed()}};
        write_text(dir / "burst.json", meta.dump(2) + "\n");
        psnr_total += psnr(noisy.input(), clean.input());
    }
    return {{"bursts", count}, {"noise", noise_json(model)}, {"mean_input_psnr", psnr_total / static_cast<double>(count)}};
}

// --- craft -------------------------------------------------------------------

struct CraftOptions {
    std::vector<std::string> burst_dirs;
    std::vector<std::string> bursts_roots;
    int input_index = -1;
    int patch_size = 0;
    int search_box = 65;
    int knn = 1;
    std::uint64_t seed = 0;
    std::size_t targets = 1;
    std::string out;
    std::string manifest;
};

inline json cmd_craft(const CraftOptions& o) {
    std::vector<fs::path> dirs(o.burst_dirs.begin(), o.burst_dirs.end());
    for (const auto& root : o.bursts_roots)
        for (auto& d : burst_dirs(root)) dirs.push_back(d);
    if (dirs.empty()) throw std::invalid_argument("craft: give --burst-dir or --bursts-root");
    if (o.targets == 0) throw std::invalid_argument("craft: --targets must be positive");
    if (!o.out.empty() && (dirs.size() != 1 || o.targets != 1))
        throw std::invalid_argument("craft: --out needs exactly one burst and one target");

    const fs::path mdir = o.manifest.empty() ? fs::path(".") : manifest_dir(o.manifest);
    std::vector<PairRecord> records;
    double distance_total = 0.0;
    std::size_t index = 0;
    for (const auto& dir : dirs) {
        const auto frame_paths = burst_frames(dir);
        Burst burst;
        for (const auto& p : frame_paths) burst.frames.push_back(load_frame(p));
        burst.input_index = burst_input_index(dir, o.input_index, burst.frames.size());

        CraftParams params;
        params.patch_size = o.patch_size > 0 ? o.patch_size : burst_patch_size(dir);
        params.search_box = o.search_box;
        params.knn = o.knn;
        params.seed = o.seed;

        for (std::size_t t = 0; t < o.targets; ++t, ++index) {
            const std::uint64_t derived = derive_seed(o.seed, "craft", index);
            Rng rng(derived);
            const PatchCraft craft = sample_target(burst, params, rng);
            const CraftSummary s = summarize(craft, burst.input_index);
            if (!s.input_excluded) throw std::logic_error("craft: input frame used as a neighbour");

            const fs::path target = o.out.empty() ? dir / indexed("target", t, ".pcrf") : fs::path(o.out);
            save_tensor(to_tensor(craft.image), target);
            json usage = json::object();
            for (const auto& [frame, n] : s.frame_usage) usage[std::to_string(frame)] = n;
            json meta = {{"input", relative_to(frame_paths[burst.input_index], fs::absolute(target).parent_path())},
                         {"input_index", burst.input_index},
                         {"patch_size", params.patch_size},
                         {"search_box", params.search_box},
                         {"knn", params.knn},
                         {"offset", {craft.row_offset, craft.col_offset}},
                         {"patches", s.patches},
                         {"mean_distance", s.mean_distance},
                         {"min_distance", s.min_distance},
                         {"max_distance", s.max_distance},
                         {"frame_usage", usage},
                         {"input_excluded", s.input_excluded},
                         {"seed_trail", {o.seed, derived}}};
            write_text(fs::path(target).replace_extension(".json"), meta.dump(2) + "\n");
            distance_total += s.mean_distance;

            PairRecord r;
            r.input = relative_to(frame_paths[burst.input_index], mdir);
            r.targets = {relative_to(target, mdir)};
            r.offset_used = Coord{craft.row_offset, craft.col_offset};
            r.seed_trail = {o.seed, derived};
            records.push_back(std::move(r));
        }
    }
    if (!o.manifest.empty()) write_manifest(o.manifest, records);
    return {{"targets", records.size()}, {"mean_patch_distance", distance_total / static_cast<double>(records.size())}};
}

// --- cov / threshold / filter --------------------------------------------------

inline json cmd_cov(const std::string& manifest, const std::string& out) {
    auto records = read_manifest(manifest);
    const fs::path base = manifest_dir(manifest);
    parallel_for(records.size(), [&](std::size_t i) {
        PairRecord& r = records[i];
        if (r.targets.empty()) throw format_error("manifest record " + std::to_string(i) + " has no targets", 0);
        const Image y = load_frame(resolve(base, r.input));
        double total = 0.0;
        for (const auto& t : r.targets) total += cov_syr(y, residual(load_frame(resolve(base, t)), y));
        r.s_yr = total / static_cast<double>(r.targets.size());
    });
    const std::string dest = out.empty() ? manifest : out;
    if (!out.empty()) {
        // Paths stay valid only if the output manifest lives next to the input one.
        const fs::path obase = manifest_dir(dest);
        for (auto& r : records) {
            r.input = relative_to(resolve(base, r.input), obase);
            for (auto& t : r.targets) t = relative_to(resolve(base, t), obase);
        }
    }
    write_manifest(dest, records);
    double mean = 0.0;
    for (const auto& r : records) mean += *r.s_yr;
    return {{"records", records.size()}, {"mean_s_yr", records.empty() ? json(nullptr) : json(mean / static_cast<double>(records.size()))}};
}

inline std::vector<double> manifest_syr(const std::vector<PairRecord>& records) {
    std::vector<double> s;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].s_yr)
            throw invariant_failure("record " + std::to_string(i) + " has no s_yr; run cov first",
                                    {{"error", "missing s_yr"}, {"record", i}});
        s.push_back(*records[i].s_yr);
    }
    return s;
}

inline json cmd_threshold(const std::string& manifest, const std::string& hist_csv) {
    const auto s = manifest_syr(read_manifest(manifest));
    const ThresholdResult t = find_smin(s);
    if (!hist_csv.empty()) {
        const Histogram h = build_histogram(s);
        std::string csv = "bin_center,count\n";
        for (std::size_t i = 0; i < h.counts.size(); ++i) {
            char line[96];
            std::snprintf(line, sizeof line, "%.17g,%zu\n", h.bin_center(i), h.counts[i]);
            csv += line;
        }
        write_text(hist_csv, csv);
    }
    json j = threshold_json(t);
    j["records"] = s.size();
    return j;
}

inline json cmd_filter(const std::string& manifest, std::optional<double> s_min, const std::string& out) {
    auto records = read_manifest(manifest);
    const auto s = manifest_syr(records);
    std::optional<double> cut = s_min;
    if (!cut) cut = find_smin(s).s_min;
    records = filter_pairs(std::move(records), cut);
    std::size_t kept = 0;
    for (const auto& r : records) kept += *r.retained ? 1 : 0;
    const std::string dest = out.empty() ? manifest : out;
    if (!out.empty()) {
        const fs::path base = manifest_dir(manifest), obase = manifest_dir(dest);
        for (auto& r : records) {
            r.input = relative_to(resolve(base, r.input), obase);
            for (auto& t : r.targets) t = relative_to(resolve(base, t), obase);
        }
    }
    write_manifest(dest, records);
    return {{"records", records.size()}, {"retained", kept}, {"s_min", cut ? json(*cut) : json(nullptr)}};
}

// --- train / eval / lemma1 ------------------------------------------------------

struct TrainOptions {
    std::string manifest;
    std::string out;
    bool all = false;
    TrainConfig cfg;
};

inline json cmd_train(const TrainOptions& o) {
    const auto records = read_manifest(o.manifest);
    const fs::path base = manifest_dir(o.manifest);
    const bool any_flag = std::any_of(records.begin(), records.end(), [](const PairRecord& r) { return r.retained.has_value(); });
    std::vector<TrainingPair> pairs;
    for (const auto& r : records) {
        if (!o.all && any_flag && !r.retained.value_or(false)) continue;
        const Image y = load_frame(resolve(base, r.input));
        for (const auto& t : r.targets) pairs.push_back({y, load_frame(resolve(base, t))});
    }
    if (pairs.empty()) throw invariant_failure("no retained training pairs", {{"error", "no retained training pairs"}});
    const TrainResult res = sgd_train(pairs, o.cfg);
    save_model(res.model, o.out);
    return {{"pairs", pairs.size()},
            {"epochs", o.cfg.epochs},
            {"epoch_loss", res.epoch_loss},
            {"final_loss", res.epoch_loss.back()}};
}

/// (noisy, clean) pairs below `dir`. A directory with burst.json contributes
/// its input frame; other directories contribute every noisy_XX.pcrf that has
/// a clean_XX.pgm/.ppm sibling.
inline std::vector<std::pair<fs::path, fs::path>> eval_pairs(const fs::path& dir) {
    std::vector<fs::path> dirs = {dir};
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<std::pair<fs::path, fs::path>> out;
    for (const auto& d : dirs) {
        auto noisy = list_files(d, "noisy_", {".pcrf"});
        if (auto meta = read_json_file(d / "burst.json"); meta && meta->contains("input_index")) {
            const auto idx = meta->at("input_index").get<std::size_t>();
            const fs::path keep = d / indexed("noisy", idx, ".pcrf");
            noisy.erase(std::remove_if(noisy.begin(), noisy.end(), [&](const fs::path& p) { return p != keep; }), noisy.end());
        }
        for (const auto& n : noisy) {
            const std::string suffix = n.stem().string().substr(6);
            for (const char* ext : {".pgm", ".ppm"}) {
                const fs::path c = d / ("clean_" + suffix + ext);
                if (fs::exists(c)) {
                    out.emplace_back(n, c);
                    break;
                }
            }
        }
    }
    return out;
}

inline json cmd_eval(const std::string& model_path, const std::string& pairs_dir, const std::string& csv) {
    const MiniDenoiser model = load_model(model_path);
    const auto files = eval_pairs(pairs_dir);
    if (files.empty()) throw io_error("no noisy/clean pairs under " + pairs_dir);
    std::vector<EvalPair> pairs;
    for (const auto& [n, c] : files) pairs.push_back({load_frame(n), load_image(c)});
    const EvalReport r = evaluate(model, pairs);
    if (!csv.empty()) {
        std::string text = "file,psnr_before,psnr_after\n";
        for (std::size_t i = 0; i < files.size(); ++i) {
            char line[64];
            std::snprintf(line, sizeof line, ",%.6f,%.6f\n", r.before[i], r.after[i]);
            text += relative_to(files[i].first, pairs_dir) + line;
        }
        write_text(csv, text);
    }
    return {{"pairs", pairs.size()}, {"psnr_before", r.psnr_before}, {"psnr_after", r.psnr_after}, {"gain", r.gain()}};
}

struct Lemma1Options {
    int size = 12;
    int channels = 1;
    int filters = 4;
    std::size_t draws = 10000;
    double sigma = 10.0;
    double w_sigma = 25.0;
    double w_mean = 0.0;
    int kernel_size = 1;
    std::uint64_t seed = 0;
};

inline json cmd_lemma1(const Lemma1Options& o) {
    if (o.size < 3) throw std::invalid_argument("lemma1: --size must be >= 3");
    const double scale = 1.0 / 255.0;
    Rng rng(derive_seed(o.seed, "lemma1", 0));
    SceneConfig sc;
    sc.channels = o.channels;
    sc.height = sc.width = o.size;
    sc.shapes = 3;
    const Planes clean = to_planes(synthetic_scene(sc, rng), scale);
    const auto shape = std::vector<std::uint32_t>{static_cast<std::uint32_t>(o.channels),
                                                  static_cast<std::uint32_t>(o.size), static_cast<std::uint32_t>(o.size)};
    const NoiseModel zmodel = noise_from_flags(o.sigma, o.kernel_size, 0.0);
    Planes z = clean;
    const Tensor zt = synthesize_noise(shape, zmodel, rng);
    for (std::size_t i = 0; i < z.v.size(); ++i) z.v[i] = zt.data[i] * scale;
    const MiniDenoiser model = random_model(o.channels, o.filters, std::sqrt(2.0 / (9.0 * o.channels)), 0.1, rng);

    const NoiseModel wmodel = noise_from_flags(o.w_sigma, o.kernel_size, 0.0);
    const double w_mean = o.w_mean;
    const NoiseSampler sampler = [&](Rng& r, std::span<double> w) {
        const Tensor t = synthesize_noise(shape, wmodel, r);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = (t.data[i] + w_mean) * scale;
    };
    const Lemma1Report rep = lemma1_check(model, clean, z, o.draws, sampler, rng);
    const bool unbiased = rep.max_standardized_deviation < 4.0;
    const bool expect_unbiased = w_mean == 0.0;
    json j = {{"draws", rep.draws},
              {"parameters", rep.parameters},
              {"max_standardized_deviation", nan_safe(rep.max_standardized_deviation)},
              {"worst_parameter", rep.worst_parameter},
              {"mean_standardized_deviation", nan_safe(rep.mean_standardized_deviation)},
              {"w_mean", w_mean},
              {"within_4se", unbiased},
              {"passed", unbiased == expect_unbiased}};
    if (unbiased != expect_unbiased)
        throw invariant_failure(expect_unbiased ? "averaged gradient deviates from the supervised gradient"
                                                : "biased target noise was not detected",
                                j);
    return j;
}

// --- verify ----------------------------------------------------------------------

struct VerifyOptions {
    std::string check = "all";
    int n = 0;
    std::size_t trials = 0;
    std::size_t pairs = 0;
    int side = 256;
    double sigma = 10.0;
    std::uint64_t seed = 0;
    std::string report;
    std::string csv;
};

struct Row {
    std::string check;
    std::string config;
    double value = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline std::string config_string(std::initializer_list<std::pair<const char*, double>> kv) {
    std::string s;
    for (const auto& [k, v] : kv) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s%s=%g", s.empty() ? "" : ";", k, v);
        s += buf;
    }
    return s;
}

inline void verify_rho(std::vector<Row>& rows, int max_n) {
    for (int n = 1; n <= max_n; ++n) {
        const double one = rho_report(n, 1.0).rho_exact;
        rows.push_back({"rho", config_string({{"n", n}, {"theta", 1}}), one, 1.0, 1e-9, std::abs(one - 1.0) <= 1e-9});
        const double full = rho_report(n, n).rho_exact;
        const double expect = 0.25 * (n + 1.0 / n) * (n + 1.0 / n);
        rows.push_back({"rho", config_string({{"n", n}, {"theta", n}}), full, expect, 1e-9, std::abs(full - expect) <= 1e-9});
    }
}

inline void verify_bound(std::vector<Row>& rows, int max_n) {
    for (int n = 1; n <= max_n; ++n)
        for (int theta = 1; theta <= max_n; ++theta) {
            const RhoReport r = rho_report(n, theta);
            rows.push_back({"bound", config_string({{"n", n}, {"theta", theta}}), r.rho_exact, r.rho_bound, 1e-9,
                            r.bound_satisfied});
        }
}

inline double verify_lemma11(std::vector<Row>& rows, int n_fixed, std::size_t trials, std::uint64_t seed) {
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(derive_seed(seed, "lemma11", t));
        const int n = n_fixed > 0 ? n_fixed : 1 + static_cast<int>(rng.uniform_index(32));
        std::vector<double> values(static_cast<std::size_t>(2 * n - 1));
        for (double& v : values) v = rng.normal();
        const double d = toeplitz_identity_check(n, [&](int tau) { return values[static_cast<std::size_t>(tau + n - 1)]; });
        worst = std::max(worst, d);
        rows.push_back({"lemma11", config_string({{"n", n}, {"trial", static_cast<double>(t)}}), d, 0.0, 1e-10, d < 1e-10});
    }
    return worst;
}

inline void verify_delta(std::vector<Row>& rows, int n, double sigma, std::size_t trials, std::uint64_t seed) {
    const Tensor zero(std::vector<std::uint32_t>{static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n)});
    for (int theta : {1, 2, 4}) {
        const DeltaMCReport r = mc_delta(n, theta, sigma, zero, trials, derive_seed(seed, "delta", static_cast<std::uint64_t>(theta)));
        rows.push_back({"delta_bias", config_string({{"n", n}, {"theta", theta}}), r.bias_est, r.bias_expected,
                        3.0 * r.bias_se, std::abs(r.bias_est - r.bias_expected) <= 3.0 * r.bias_se});
        rows.push_back({"delta_var", config_string({{"n", n}, {"theta", theta}}), r.var_est, r.var_bound,
                        0.05 * r.var_bound, std::abs(r.var_est - r.var_bound) <= 0.05 * r.var_bound});

        Rng rng(derive_seed(seed, "delta_x", static_cast<std::uint64_t>(theta)));
        Tensor diff = zero;
        for (float& d : diff.data) d = static_cast<float>(sigma * rng.normal());
        const DeltaMCReport q = mc_delta(n, theta, sigma, diff, trials, derive_seed(seed, "delta_nz", static_cast<std::uint64_t>(theta)));
        rows.push_back({"delta_var_nonzero", config_string({{"n", n}, {"theta", theta}, {"delta_x", q.delta_x}}),
                        q.var_est, q.var_bound, 3.0 * q.var_se, q.var_est >= q.var_bound - 3.0 * q.var_se});
    }
}

inline void verify_syr(std::vector<Row>& rows, json& extra, int side, double sigma, std::size_t pairs, std::uint64_t seed) {
    const double var = sigma * sigma;
    const std::pair<SyrScenario, double> cases[] = {
        {SyrScenario::independent, 0.0}, {SyrScenario::type1, 0.3 * var}, {SyrScenario::type2, -0.5 * var}};
    for (const auto& [scenario, cross] : cases) {
        const SyrReport r = mc_syr_scenarios(scenario, side, sigma, pairs,
                                             derive_seed(seed, "syr", static_cast<std::uint64_t>(scenario)), cross);
        const std::string cfg = std::string("scenario=") + to_string(scenario) + ";" +
                                config_string({{"side", side}, {"cross_cov", cross}});
        const SampleMoments& m = r.stats;
        rows.push_back({"syr_mean", cfg, m.mean, r.expected_mean, 3.0 * m.se_mean,
                        std::abs(m.mean - r.expected_mean) <= 3.0 * m.se_mean});
        rows.push_back({"syr_skewness", cfg, m.skewness, 0.0, 0.1, std::abs(m.skewness) < 0.1});
        rows.push_back({"syr_excess_kurtosis", cfg, m.excess_kurtosis, 0.0, 0.2, std::abs(m.excess_kurtosis) < 0.2});
        extra[to_string(scenario)] = moments_json(m);
    }
}

inline json cmd_verify(const VerifyOptions& o) {
    static const std::vector<std::string> known = {"rho", "bound", "lemma11", "delta", "syr", "all"};
    if (std::find(known.begin(), known.end(), o.check) == known.end())
        throw std::invalid_argument("verify: unknown check '" + o.check + "'");
    const auto want = [&](const char* c) { return o.check == "all" || o.check == c; };

    std::vector<Row> rows;
    json extra = json::object();
    if (want("rho")) verify_rho(rows, o.n > 0 ? o.n : 32);
    if (want("bound")) verify_bound(rows, o.n > 0 ? o.n : 16);
    if (want("lemma11")) extra["max_discrepancy"] = verify_lemma11(rows, o.n, o.trials > 0 ? o.trials : 1000, o.seed);
    if (want("delta")) verify_delta(rows, o.n > 0 ? o.n : 8, o.sigma, o.trials > 0 ? o.trials : 100000, o.seed);
    if (want("syr")) {
        json syr = json::object();
        verify_syr(rows, syr, o.side, o.sigma, o.pairs > 0 ? o.pairs : 10000, o.seed);
        extra["syr"] = syr;
    }

    std::size_t failures = 0;
    json results = json::array();
    std::string csv = "check,config,value,expected,tolerance,pass\n";
    for (const auto& r : rows) {
        failures += r.pass ? 0 : 1;
        results.push_back({{"check", r.check}, {"config", r.config}, {"value", r.value},
                           {"expected", r.expected}, {"tolerance", r.tolerance}, {"pass", r.pass}});
        char buf[160];
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%d\n", r.value, r.expected, r.tolerance, r.pass ? 1 : 0);
        csv += r.check + "," + r.config + buf;
    }
    json summary = {{"check", o.check}, {"configurations", rows.size()}, {"failures", failures}, {"passed", failures == 0}};
    for (auto it = extra.begin(); it != extra.end(); ++it)
        if (!it.value().is_object()) summary[it.key()] = it.value();
    if (!o.report.empty()) {
        json report = summary;
        report["details"] = extra;
        report["results"] = results;
        write_text(o.report, report.dump(2) + "\n");
    }
    if (!o.csv.empty()) write_text(o.csv, csv);
    if (failures > 0) throw invariant_failure(std::to_string(failures) + " verification checks failed", summary);
    return summary;
}

} // namespace detail

/// Runs one subcommand. Prints a single JSON summary line to `out` and
/// diagnostics to `err`. Returns 0 on success, 1 when an invariant fails or
/// an input cannot be processed, 2 on a usage error.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using namespace detail;
    CLI::App app{"Patch-craft target synthesis and verification toolkit", "pcst"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    SynthOptions synth;
    auto* s_synth = app.add_subcommand("synth", "Generate clean bursts (or load them) and add synthetic noise");
    s_synth->add_option("--out-dir", synth.out_dir, "Output root")->required();
    s_synth->add_option("--clean-dir", synth.clean_dir, "Directory of clean PGM/PPM frames forming one burst");
    s_synth->add_option("--scenes", synth.scenes, "Number of synthetic bursts");
    s_synth->add_option("--frames", synth.scene.frames, "Frames per synthetic burst")->check(CLI::Range(2, 64));
    s_synth->add_option("--height", synth.scene.height)->check(CLI::Range(4, 1 << 14));
    s_synth->add_option("--width", synth.scene.width)->check(CLI::Range(4, 1 << 14));
    s_synth->add_option("--channels", synth.scene.channels)->check(CLI::IsMember({1, 3}));
    s_synth->add_option("--shapes", synth.scene.shapes)->check(CLI::NonNegativeNumber);
    s_synth->add_option("--max-shift", synth.scene.max_shift, "Camera jitter bound in pixels")->check(CLI::NonNegativeNumber);
    s_synth->add_option("--object-motion", synth.scene.object_motion, "Per-frame drift of moving shapes");
    s_synth->add_option("--moving-fraction", synth.scene.moving_fraction)->check(CLI::Range(0.0, 1.0));
    s_synth->add_option("--sigma", synth.sigma, "Noise standard deviation (0..255 scale)")->required();
    s_synth->add_option("--kernel-size", synth.kernel_size, "Flat kernel size k");
    s_synth->add_option("--theta", synth.theta, "Bilinear decay width (integer)");
    s_synth->add_option("--seed", synth.seed);

    CraftOptions craft;
    auto* s_craft = app.add_subcommand("craft", "Build patch-craft targets for bursts");
    s_craft->add_option("--burst-dir", craft.burst_dirs, "Burst directory (repeatable)");
    s_craft->add_option("--bursts-root", craft.bursts_roots, "Process every burst directory below this root (repeatable)");
    s_craft->add_option("--input-index", craft.input_index, "Input frame index (default: burst.json or middle)");
    s_craft->add_option("--patch-size", craft.patch_size, "Patch size n (default: tabulated for the noise level)");
    s_craft->add_option("--search-box", craft.search_box, "Search box side B (odd)");
    s_craft->add_option("--knn", craft.knn, "Number of nearest neighbours K");
    s_craft->add_option("--seed", craft.seed);
    s_craft->add_option("--targets", craft.targets, "Targets per burst");
    s_craft->add_option("--out", craft.out, "Target file (single burst, single target)");
    s_craft->add_option("--manifest", craft.manifest, "Write pair records to this JSONL manifest");

    std::string cov_manifest, cov_out;
    auto* s_cov = app.add_subcommand("cov", "Compute s_yr for every manifest record");
    s_cov->add_option("--manifest", cov_manifest)->required();
    s_cov->add_option("--out", cov_out, "Output manifest (default: overwrite)");

    std::string thr_manifest, thr_csv;
    auto* s_thr = app.add_subcommand("threshold", "Locate the s_yr cut-off");
    s_thr->add_option("--manifest", thr_manifest)->required();
    s_thr->add_option("--hist-csv", thr_csv, "Histogram CSV (bin_center,count)");

    std::string flt_manifest, flt_out;
    std::optional<double> flt_smin;
    auto* s_flt = app.add_subcommand("filter", "Mark records with s_yr >= s_min as retained");
    s_flt->add_option("--manifest", flt_manifest)->required();
    s_flt->add_option("--s-min", flt_smin, "Cut-off (default: computed as in threshold)");
    s_flt->add_option("--out", flt_out, "Output manifest (default: overwrite)");

    TrainOptions train;
    auto* s_train = app.add_subcommand("train", "Train the small residual denoiser");
    s_train->add_option("--manifest", train.manifest)->required();
    s_train->add_option("--out", train.out, "Model header path (.json)")->required();
    s_train->add_flag("--all", train.all, "Ignore the retained flag");
    s_train->add_option("--epochs", train.cfg.epochs);
    s_train->add_option("--lr", train.cfg.learning_rate);
    s_train->add_option("--lr-step", train.cfg.lr_step, "Halve the learning rate every N epochs");
    s_train->add_option("--batch", train.cfg.batch);
    s_train->add_option("--crop", train.cfg.crop);
    s_train->add_option("--crops-per-pair", train.cfg.crops_per_pair);
    s_train->add_option("--filters", train.cfg.filters);
    s_train->add_option("--seed", train.cfg.seed);

    std::string ev_model, ev_dir, ev_csv;
    auto* s_eval = app.add_subcommand("eval", "PSNR of a trained model on noisy/clean pairs");
    s_eval->add_option("--model", ev_model)->required();
    s_eval->add_option("--pairs-dir", ev_dir)->required();
    s_eval->add_option("--csv", ev_csv);

    Lemma1Options l1;
    auto* s_l1 = app.add_subcommand("lemma1", "Compare noisy-target and clean-target gradients");
    s_l1->add_option("--size", l1.size);
    s_l1->add_option("--channels", l1.channels)->check(CLI::IsMember({1, 3}));
    s_l1->add_option("--filters", l1.filters)->check(CLI::PositiveNumber);
    s_l1->add_option("--draws", l1.draws);
    s_l1->add_option("--sigma", l1.sigma, "Input noise sigma (0..255 scale)");
    s_l1->add_option("--w-sigma", l1.w_sigma, "Target noise sigma");
    s_l1->add_option("--w-mean", l1.w_mean, "Target noise mean; nonzero is a negative control");
    s_l1->add_option("--kernel-size", l1.kernel_size);
    s_l1->add_option("--seed", l1.seed);

    VerifyOptions ver;
    auto* s_ver = app.add_subcommand("verify", "Numerical and Monte Carlo checks");
    s_ver->add_option("--check", ver.check)->check(CLI::IsMember({"rho", "bound", "lemma11", "delta", "syr", "all"}));
    s_ver->add_option("--n", ver.n, "Patch size (rho/bound: largest n)");
    s_ver->add_option("--trials", ver.trials);
    s_ver->add_option("--pairs", ver.pairs);
    s_ver->add_option("--side", ver.side, "Field side for syr");
    s_ver->add_option("--sigma", ver.sigma);
    s_ver->add_option("--seed", ver.seed);
    s_ver->add_option("--report", ver.report, "JSON report path");
    s_ver->add_option("--csv", ver.csv, "Per-configuration CSV path");

    std::vector<std::string> argv_store = args;
    argv_store.insert(argv_store.begin(), "pcst");
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    std::string command;
    const auto emit = [&](json j) {
        json line = {{"command", command}};
        line.update(j);
        out << line.dump() << std::endl;
    };
    if (!args.empty() && !args.front().empty() && args.front().front() != '-' &&
        app.get_subcommand_no_throw(args.front()) == nullptr) {
        err << "pcst: unknown subcommand: " << args.front() << "\n";
        emit({{"status", "usage_error"}, {"message", "unknown subcommand: " + args.front()}});
        return usage;
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e, out, err);
            return ok;
        }
        err << "pcst: " << e.what() << "\n";
        command = app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name();
        emit({{"status", "usage_error"}, {"message", e.what()}});
        return usage;
    }

    command = app.get_subcommands().front()->get_name();
    try {
        json summary;
        if (command == "synth") summary = cmd_synth(synth);
        if (command == "craft") summary = cmd_craft(craft);
        if (command == "cov") summary = cmd_cov(cov_manifest, cov_out);
        if (command == "threshold") summary = cmd_threshold(thr_manifest, thr_csv);
        if (command == "filter") summary = cmd_filter(flt_manifest, flt_smin, flt_out);
        if (command == "train") summary = cmd_train(train);
        if (command == "eval") summary = cmd_eval(ev_model, ev_dir, ev_csv);
        if (command == "lemma1") summary = cmd_lemma1(l1);
        if (command == "verify") summary = cmd_verify(ver);
        summary["status"] = "ok";
        emit(summary);
        return ok;
    } catch (const invariant_failure& e) {
        err << "pcst " << command << ": " << e.what() << "\n";
        json j = e.summary();
        j["status"] = "failed";
        j["message"] = e.what();
        emit(j);
        return failed;
    } catch (const std::invalid_argument& e) {
        err << "pcst " << command << ": " << e.what() << "\n";
        emit({{"status", "usage_error"}, {"message", e.what()}});
        return usage;
    } catch (const std::exception& e) {
        err << "pcst " << command << ": " << e.what() << "\n";
        emit({{"status", "error"}, {"message", e.what()}});
        return failed;
    }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

} // namespace pcst::cli
