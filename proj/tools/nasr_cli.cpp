#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nasr/ablation.hpp"
#include "nasr/bench.hpp"
#include "nasr/config.hpp"
#include "nasr/error.hpp"
#include "nasr/recording_io.hpp"
#include "nasr/synth.hpp"

namespace fs = std::filesystem;
using namespace nasr;

namespace {

HarnessConfig load_harness(const std::string& path) {
    return path.empty() ? HarnessConfig{} : harness_config_from_json(read_json_file(path));
}

struct LabeledRecording {
    EegRecording rec;
    std::vector<int> labels;
};

LabeledRecording load_labeled(const fs::path& header) {
    LabeledRecording out{read_recording(header), {}};
    const auto truth = truth_path(header);
    if (!fs::exists(truth)) throw IoError("missing label sidecar " + truth.string());
    out.labels = truth_from_json(read_json_file(truth)).labels;
    return out;
}

int cmd_synth(const std::string& spec_path, const fs::path& out, std::uint64_t seed, std::optional<double> duration) {
    SynthSpec spec = spec_path.empty() ? SynthSpec::standard() : synth_spec_from_json(read_json_file(spec_path));
    if (duration) spec.duration_s = *duration;
    const auto res = synth_generate(spec, seed);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_recording(res.recording, out);
    TruthSidecar truth{spec.window, spec.hop, res.window_labels, res.events};
    write_json_file(to_json(truth), truth_path(out));
    std::cout << "wrote " << out.string() << " (" << res.recording.channels() << " channels, "
              << res.recording.samples() << " samples, " << res.window_labels.size() << " windows, "
              << res.events.size() << " artifact events)\n";
    return 0;
}

int cmd_train(const std::string& variant_id, const std::string& config_path, const fs::path& data,
              const fs::path& run_dir, std::optional<std::uint64_t> seed, std::optional<int> epochs) {
    const Variant v = parse_variant(variant_id);
    HarnessConfig cfg = load_harness(config_path);
    if (seed) cfg.train.seed = *seed;
    if (epochs) cfg.train.epochs_max = *epochs;
    const auto input = load_labeled(data);
    const Experiment ex = prepare_experiment(input.rec, input.labels, cfg);
    const AblationRun run = run_ablation(v, ex, cfg);

    fs::create_directories(run_dir);
    Checkpoint ckpt{v, run.params, run.asr, ex.stats, input.rec.channel_labels, cfg};
    save_checkpoint(ckpt, run_dir / "checkpoint.json");
    write_history_csv(run.training.history, run_dir / "history.csv");
    write_masks(run.masks, run_dir / "masks.txt");
    json summary = {{"variant", to_string(v)},
                    {"config", variant_config_json(v)},
                    {"recording", fs::absolute(data).string()},
                    {"epochs_run", run.training.history.size()},
                    {"best_epoch", run.training.best_epoch},
                    {"best_val_loss", run.training.best_val_loss},
                    {"stopped_early", run.training.stopped_early},
                    {"skipped_steps", run.training.skipped_steps},
                    {"k", run.params.nasr.k},
                    {"l", run.params.nasr.l},
                    {"flagged_fraction", flagged_fraction(run.masks)},
                    {"metrics",
                     {{"train", to_json(run.metrics.train)},
                      {"val", to_json(run.metrics.val)},
                      {"test", to_json(run.metrics.test)}}}};
    write_json_file(summary, run_dir / "run.json");
    std::cout << summary.dump(2) << '\n';
    return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data) {
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const auto input = load_labeled(data);
    Experiment ex = prepare_experiment(input.rec, input.labels, ckpt.harness);
    if (ckpt.stats) {
        // Apply the checkpoint's reference statistics rather than this recording's.
        WindowBatch raw = make_windows(ex.filtered, ckpt.harness.window, ckpt.harness.hop);
        raw.labels = input.labels;
        ex.stats = *ckpt.stats;
        ex.normalized = zscore_normalize(raw, *ckpt.stats);
    }
    const PipelineSpec spec = pipeline_for(ckpt.variant, ex, ckpt.harness);
    if (spec.cleaning == CleaningStage::asr && !ckpt.asr) throw ConfigError("checkpoint has no ASR model");
    const PreparedData prepared = prepare_data(spec, ex.normalized, ckpt.asr ? &*ckpt.asr : nullptr);
    std::vector<std::size_t> all(prepared.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    json out = {{"variant", to_string(ckpt.variant)},
                {"all", to_json(evaluate(spec, ckpt.params, prepared, all))},
                {"train", to_json(evaluate(spec, ckpt.params, prepared, ex.split.train))},
                {"val", to_json(evaluate(spec, ckpt.params, prepared, ex.split.val))},
                {"test", to_json(evaluate(spec, ckpt.params, prepared, ex.split.test))},
                {"loss", dataset_loss(spec, ckpt.params, prepared, all)}};
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_clean(const std::string& method, const std::string& params_path, const std::string& config_path,
              const fs::path& data, const fs::path& out) {
    if (method != "asr" && method != "nasr") throw UsageError("--method must be asr or nasr");
    std::optional<Checkpoint> ckpt;
    if (!params_path.empty()) ckpt = load_checkpoint(params_path);
    HarnessConfig cfg = ckpt ? ckpt->harness : load_harness(config_path);
    if (!config_path.empty()) cfg = load_harness(config_path);

    const EegRecording rec = read_recording(data);
    const EegRecording filtered = bandpass_filter(rec, cfg.band_low_hz, cfg.band_high_hz, cfg.filter_order);
    const WindowBatch windows = make_windows(filtered, cfg.window, cfg.hop);
    const ChannelStats stats = ckpt && ckpt->stats ? *ckpt->stats
                                                   : compute_reference_stats(windows, detect_clean_windows(windows));
    WindowBatch norm = zscore_normalize(windows, stats);

    std::size_t flagged = 0;
    if (method == "asr") {
        AsrModel model;
        if (ckpt && ckpt->asr) {
            model = *ckpt->asr;
        } else {
            Experiment ex;
            ex.filtered = filtered;
            ex.normalized = norm;
            ex.stats = stats;
            ex.clean = detect_clean_windows(windows);
            model = calibrate_asr(ex, cfg);
        }
        for (auto& w : norm.windows) {
            auto r = asr_transform_detailed(model, w);
            for (auto v : r.rejected) flagged += v;
            w = std::move(r.cleaned);
        }
    } else {
        ModelParams params = ckpt ? ckpt->params : ModelParams::initial(rec.channels());
        const Variant v = ckpt && ckpt->variant != Variant::m01 && ckpt->variant != Variant::control ? ckpt->variant
                                                                                                     : Variant::m02;
        Experiment ex;
        ex.montage = montage_for(rec.channel_labels, cfg);
        ex.adjacency = build_adjacency(ex.montage, cfg.neighbor_radius);
        const PipelineSpec spec = pipeline_for(v, ex, cfg);
        for (auto& w : norm.windows) {
            auto r = forward_window(w, params.nasr, spec.nasr);
            for (auto m : r.noise_hard) flagged += m;
            w = spec.weighted ? weighted_reconstruction(r.recon, r.noise_hard, params.scaling) : std::move(r.recon);
        }
    }
    const WindowBatch denorm = zscore_denormalize(norm, stats);
    EegRecording cleaned = filtered;
    const Matrix stitched = stitch_windows(denorm);
    for (std::size_t c = 0; c < cleaned.channels(); ++c)
        for (std::size_t t = 0; t < stitched.cols(); ++t) cleaned.data(c, t) = stitched(c, t);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_recording(cleaned, out);
    std::cout << "wrote " << out.string() << " (" << norm.size() << " windows, " << flagged
              << (method == "asr" ? " rejected components" : " reconstructed channel cells") << ")\n";
    return 0;
}

int cmd_bench(const std::string& variant_id, const std::string& ckpt_path, const std::string& config_path,
              const std::string& data, std::uint64_t seed, std::size_t warmup, std::size_t measure) {
    const Variant v = parse_variant(variant_id);
    std::optional<Checkpoint> ckpt;
    if (!ckpt_path.empty()) ckpt = load_checkpoint(ckpt_path);
    const HarnessConfig cfg = ckpt ? ckpt->harness : load_harness(config_path);

    LabeledRecording input;
    if (data.empty()) {
        SynthSpec spec = SynthSpec::standard();
        spec.duration_s = 120.0;
        auto res = synth_generate(spec, seed);
        input = {std::move(res.recording), std::move(res.window_labels)};
    } else {
        input = load_labeled(data);
    }
    const Experiment ex = prepare_experiment(input.rec, input.labels, cfg);
    const AsrModel asr = ckpt && ckpt->asr ? *ckpt->asr : calibrate_asr(ex, cfg);
    ModelParams params = ckpt ? ckpt->params : ModelParams::initial(ex.normalized.channels());

    const PipelineSpec spec = pipeline_for(v, ex, cfg);
    const auto lat = bench_pipeline(spec, params, ex.normalized.windows, &asr, warmup, measure);
    const PipelineSpec asr_spec = pipeline_for(Variant::m01, ex, cfg);
    const auto asr_lat = bench_pipeline(asr_spec, params, ex.normalized.windows, &asr, warmup, measure);

    auto stats_json = [](const LatencyStats& s) {
        return json{{"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}, {"n", s.n}};
    };
    json out = {{"variant", to_string(v)},
                {"channels", ex.normalized.channels()},
                {"window", ex.normalized.length()},
                {"cleaning", stats_json(lat.cleaning)},
                {"decoder", stats_json(lat.decoder)},
                {"total", stats_json(lat.total)},
                {"asr_reference_cleaning", stats_json(asr_lat.cleaning)},
                {"asr_over_variant_cleaning_ratio",
                 lat.cleaning.median_ms > 0.0 ? asr_lat.cleaning.median_ms / lat.cleaning.median_ms : 0.0}};
    std::cout << out.dump(2) << '\n';
    return 0;
}

int cmd_noisemap(const fs::path& run_dir, const std::string& out_path) {
    const auto masks = read_masks(run_dir / "masks.txt");
    const fs::path out = out_path.empty() ? run_dir / "noisemap.csv" : fs::path(out_path);
    export_noisemap(masks, out);
    std::cout << "wrote " << out.string() << " (" << (masks.empty() ? 0 : masks.front().size()) << " channels x "
              << masks.size() << " windows, flagged fraction " << flagged_fraction(masks) << ")\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nASR: trainable channel-level EEG artifact rejection"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string spec_path, out, config, data, variant = "m02", ckpt, method, params, run_dir;
    std::optional<double> duration;
    std::optional<int> epochs;
    std::size_t warmup = 100, measure = 1000;

    auto* synth = app.add_subcommand("synth", "generate a synthetic recording with labels and artifact truth");
    synth->add_option("--spec", spec_path, "synthetic spec JSON (default: standard spec)");
    synth->add_option("--out", out, "output header path (binary and truth sidecar are written beside it)")
        ->required();
    synth->add_option("--duration", duration, "override duration in seconds");
    synth->add_option("--seed", seed, "random seed");

    auto* clean = app.add_subcommand("clean", "clean a recording window by window");
    clean->add_option("--method", method, "asr or nasr")->required()->check(CLI::IsMember({"asr", "nasr"}));
    clean->add_option("--params", params, "checkpoint JSON");
    clean->add_option("--config", config, "harness config JSON");
    clean->add_option("--data", data, "input recording header")->required();
    clean->add_option("--out", out, "output recording header")->required();
    clean->add_option("--seed", seed, "unused; accepted for uniformity");

    auto* train = app.add_subcommand("train", "train one ablation variant");
    train->add_option("--variant", variant, "m01..m05 or control")->required();
    train->add_option("--config", config, "harness config JSON");
    train->add_option("--data", data, "labeled recording header")->required();
    train->add_option("--out", run_dir, "run directory")->required();
    train->add_option("--epochs", epochs, "override epochs_max");
    std::optional<std::uint64_t> train_seed;
    train->add_option("--seed", train_seed, "override train.seed");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a labeled recording");
    eval->add_option("--ckpt", ckpt, "checkpoint JSON")->required();
    eval->add_option("--data", data, "labeled recording header")->required();
    eval->add_option("--seed", seed, "unused; accepted for uniformity");

    auto* bench = app.add_subcommand("bench", "per-window streaming latency");
    bench->add_option("--variant", variant, "m01..m05 or control")->required();
    bench->add_option("--ckpt", ckpt, "checkpoint JSON (default: initial parameters)");
    bench->add_option("--config", config, "harness config JSON");
    bench->add_option("--data", data, "labeled recording header (default: synthetic)");
    bench->add_option("--warmup", warmup, "untimed calls")->check(CLI::Range(std::size_t{100}, std::size_t{1} << 30));
    bench->add_option("--measure", measure, "timed calls")->check(CLI::Range(std::size_t{1000}, std::size_t{1} << 30));
    bench->add_option("--seed", seed, "seed of the synthetic input");

    auto* noisemap = app.add_subcommand("noisemap", "export the channel x window mask of a run");
    noisemap->add_option("--run-dir", run_dir, "run directory written by train")->required();
    noisemap->add_option("--out", out, "output CSV (default: <run-dir>/noisemap.csv)");
    noisemap->add_option("--seed", seed, "unused; accepted for uniformity");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(spec_path, out, seed, duration);
        if (clean->parsed()) return cmd_clean(method, params, config, data, out);
        if (train->parsed()) return cmd_train(variant, config, data, run_dir, train_seed, epochs);
        if (eval->parsed()) return cmd_eval(ckpt, data);
        if (bench->parsed()) return cmd_bench(variant, ckpt, config, data, seed, warmup, measure);
        if (noisemap->parsed()) return cmd_noisemap(run_dir, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
