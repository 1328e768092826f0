#include "nasr/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "nasr/error.hpp"

namespace nasr {

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return it.key() == a; }))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

template <class T>
void get_opt(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(where + "." + key + ": " + e.what());
    }
}

template <class T>
T get_req(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ParseError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(where + "." + key + ": " + e.what());
    }
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ParseError(where + ": expected a non-empty nested array");
    const auto first = j.front().get<std::vector<double>>();
    Matrix m(j.size(), first.size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        const auto row = j[r].get<std::vector<double>>();
        if (row.size() != m.cols()) throw ParseError(where + ": ragged matrix");
        std::copy(row.begin(), row.end(), m.row(r).begin());
    }
    return m;
}

std::string solver_name(EigenSolver s) { return s == EigenSolver::jacobi ? "jacobi" : "ql"; }

EigenSolver parse_solver(const std::string& s) {
    if (s == "jacobi") return EigenSolver::jacobi;
    if (s == "ql") return EigenSolver::tridiagonal_ql;
    throw ConfigError("unknown eigen solver '" + s + "' (expected jacobi or ql)");
}

std::string reference_name(ReferenceDenominator r) { return r == ReferenceDenominator::c ? "c" : "c_plus_one"; }

ReferenceDenominator parse_reference(const std::string& s) {
    if (s == "c") return ReferenceDenominator::c;
    if (s == "c_plus_one") return ReferenceDenominator::c_plus_one;
    throw ConfigError("unknown reference denominator '" + s + "' (expected c or c_plus_one)");
}

}  // namespace

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------

json to_json(const AsrModel& m) {
    return {{"v0", matrix_to_json(m.v0)}, {"comp_mu", m.comp_mu}, {"comp_sigma", m.comp_sigma}, {"cutoff", m.cutoff}};
}

AsrModel asr_model_from_json(const json& j) {
    const std::string where = "asr_model";
    check_keys(j, {"v0", "comp_mu", "comp_sigma", "cutoff"}, where);
    AsrModel m;
    if (!j.contains("v0")) throw ParseError(where + ": missing key 'v0'");
    m.v0 = matrix_from_json(j.at("v0"), where + ".v0");
    m.comp_mu = get_req<std::vector<double>>(j, "comp_mu", where);
    m.comp_sigma = get_req<std::vector<double>>(j, "comp_sigma", where);
    m.cutoff = get_req<double>(j, "cutoff", where);
    const std::size_t c = m.v0.rows();
    if (m.v0.cols() != c || m.comp_mu.size() != c || m.comp_sigma.size() != c)
        throw ParseError(where + ": inconsistent dimensions");
    return m;
}

json to_json(const ChannelStats& s) { return {{"mu", s.mu}, {"sigma", s.sigma}}; }

ChannelStats channel_stats_from_json(const json& j) {
    check_keys(j, {"mu", "sigma"}, "stats");
    ChannelStats s{get_req<std::vector<double>>(j, "mu", "stats"), get_req<std::vector<double>>(j, "sigma", "stats")};
    if (s.mu.size() != s.sigma.size()) throw ParseError("stats: mu and sigma lengths differ");
    return s;
}

json to_json(const TrainConfig& c) {
    return {{"lr", c.lr},
            {"clipnorm", c.clipnorm},
            {"epochs_max", c.epochs_max},
            {"batch", c.batch},
            {"plateau_patience", c.plateau_patience},
            {"plateau_factor", c.plateau_factor},
            {"lr_floor", c.lr_floor},
            {"early_stop_patience", c.early_stop_patience},
            {"split", {c.train_fraction, c.val_fraction, c.test_fraction}},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j) {
    const std::string w = "train";
    check_keys(j, {"lr", "clipnorm", "epochs_max", "batch", "plateau_patience", "plateau_factor", "lr_floor",
                   "early_stop_patience", "split", "seed"},
               w);
    TrainConfig c;
    get_opt(j, "lr", c.lr, w);
    get_opt(j, "clipnorm", c.clipnorm, w);
    get_opt(j, "epochs_max", c.epochs_max, w);
    get_opt(j, "batch", c.batch, w);
    get_opt(j, "plateau_patience", c.plateau_patience, w);
    get_opt(j, "plateau_factor", c.plateau_factor, w);
    get_opt(j, "lr_floor", c.lr_floor, w);
    get_opt(j, "early_stop_patience", c.early_stop_patience, w);
    get_opt(j, "seed", c.seed, w);
    if (j.contains("split")) {
        std::vector<double> s;
        get_opt(j, "split", s, w);
        if (s.size() != 3) throw ConfigError("train.split: expected [train, val, test]");
        c.train_fraction = s[0];
        c.val_fraction = s[1];
        c.test_fraction = s[2];
    }
    c.validate();
    return c;
}

json to_json(const HarnessConfig& c) {
    return {{"filter", {{"low_hz", c.band_low_hz}, {"high_hz", c.band_high_hz}, {"order", c.filter_order}}},
            {"window", c.window},
            {"hop", c.hop},
            {"asr", {{"cutoff", c.asr_cutoff}, {"calib_seconds", c.asr_calib_seconds},
                     {"calib_repeats", c.asr_calib_repeats}}},
            {"neighbor_radius", c.neighbor_radius},
            {"solver", solver_name(c.solver)},
            {"reference", reference_name(c.reference)},
            {"montage", c.montage_path},
            {"train", to_json(c.train)}};
}

HarnessConfig harness_config_from_json(const json& j) {
    const std::string w = "config";
    check_keys(j, {"filter", "window", "hop", "asr", "neighbor_radius", "solver", "reference", "montage", "train"}, w);
    HarnessConfig c;
    if (j.contains("filter")) {
        const auto& f = j.at("filter");
        check_keys(f, {"low_hz", "high_hz", "order"}, w + ".filter");
        get_opt(f, "low_hz", c.band_low_hz, w + ".filter");
        get_opt(f, "high_hz", c.band_high_hz, w + ".filter");
        get_opt(f, "order", c.filter_order, w + ".filter");
    }
    get_opt(j, "window", c.window, w);
    get_opt(j, "hop", c.hop, w);
    if (j.contains("asr")) {
        const auto& a = j.at("asr");
        check_keys(a, {"cutoff", "calib_seconds", "calib_repeats"}, w + ".asr");
        get_opt(a, "cutoff", c.asr_cutoff, w + ".asr");
        get_opt(a, "calib_seconds", c.asr_calib_seconds, w + ".asr");
        get_opt(a, "calib_repeats", c.asr_calib_repeats, w + ".asr");
    }
    get_opt(j, "neighbor_radius", c.neighbor_radius, w);
    if (j.contains("solver")) c.solver = parse_solver(get_req<std::string>(j, "solver", w));
    if (j.contains("reference")) c.reference = parse_reference(get_req<std::string>(j, "reference", w));
    get_opt(j, "montage", c.montage_path, w);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (c.window == 0 || c.hop == 0 || c.hop > c.window) throw ConfigError("config: need 0 < hop <= window");
    if (!(c.neighbor_radius > 0.0)) throw ConfigError("config: neighbor_radius must be positive");
    if (c.asr_calib_repeats < 1) throw ConfigError("config: asr.calib_repeats must be >= 1");
    return c;
}

json to_json(const SynthSpec& s) {
    json arts = json::array();
    for (const auto& a : s.artifacts)
        arts.push_back({{"kind", to_string(a.kind)},
                        {"rate_per_min", a.rate_per_min},
                        {"amp_min", a.amp_min},
                        {"amp_max", a.amp_max},
                        {"dur_min_s", a.dur_min_s},
                        {"dur_max_s", a.dur_max_s},
                        {"channels", a.channels},
                        {"channels_per_event", a.channels_per_event}});
    return {{"fs", s.fs},
            {"duration_s", s.duration_s},
            {"channels", s.channels},
            {"noise_amplitude", s.noise_amplitude},
            {"shared_fraction", s.shared_fraction},
            {"shared_sources", s.shared_sources},
            {"shared_spread_m", s.shared_spread_m},
            {"mu_sources", s.mu_sources},
            {"mu_amplitude", s.mu_amplitude},
            {"mu_low_hz", s.mu_low_hz},
            {"mu_high_hz", s.mu_high_hz},
            {"mu_spread_m", s.mu_spread_m},
            {"erd_depth", s.erd_depth},
            {"block_min_s", s.block_min_s},
            {"block_max_s", s.block_max_s},
            {"window", s.window},
            {"hop", s.hop},
            {"min_cover", s.min_cover},
            {"artifacts", arts}};
}

SynthSpec synth_spec_from_json(const json& j) {
    const std::string w = "synth";
    check_keys(j, {"fs", "duration_s", "channels", "noise_amplitude", "shared_fraction", "shared_sources",
                   "shared_spread_m", "mu_sources", "mu_amplitude", "mu_low_hz", "mu_high_hz", "mu_spread_m",
                   "erd_depth", "block_min_s", "block_max_s", "window", "hop", "min_cover", "artifacts"},
               w);
    SynthSpec s;
    get_opt(j, "fs", s.fs, w);
    get_opt(j, "duration_s", s.duration_s, w);
    get_opt(j, "channels", s.channels, w);
    get_opt(j, "noise_amplitude", s.noise_amplitude, w);
    get_opt(j, "shared_fraction", s.shared_fraction, w);
    get_opt(j, "shared_sources", s.shared_sources, w);
    get_opt(j, "shared_spread_m", s.shared_spread_m, w);
    get_opt(j, "mu_sources", s.mu_sources, w);
    get_opt(j, "mu_amplitude", s.mu_amplitude, w);
    get_opt(j, "mu_low_hz", s.mu_low_hz, w);
    get_opt(j, "mu_high_hz", s.mu_high_hz, w);
    get_opt(j, "mu_spread_m", s.mu_spread_m, w);
    get_opt(j, "erd_depth", s.erd_depth, w);
    get_opt(j, "block_min_s", s.block_min_s, w);
    get_opt(j, "block_max_s", s.block_max_s, w);
    get_opt(j, "window", s.window, w);
    get_opt(j, "hop", s.hop, w);
    get_opt(j, "min_cover", s.min_cover, w);
    if (j.contains("artifacts")) {
        const auto& arr = j.at("artifacts");
        if (!arr.is_array()) throw ParseError(w + ".artifacts: expected an array");
        for (const auto& a : arr) {
            const std::string aw = w + ".artifacts[]";
            check_keys(a, {"kind", "rate_per_min", "amp_min", "amp_max", "dur_min_s", "dur_max_s", "channels",
                           "channels_per_event"},
                       aw);
            const ArtifactKind kind = parse_artifact_kind(get_req<std::string>(a, "kind", aw));
            ArtifactSpec spec = kind == ArtifactKind::blink       ? ArtifactSpec::blink(0.0)
                                : kind == ArtifactKind::emg_burst ? ArtifactSpec::emg_burst(0.0)
                                                                  : ArtifactSpec::electrode_pop(0.0);
            get_opt(a, "rate_per_min", spec.rate_per_min, aw);
            get_opt(a, "amp_min", spec.amp_min, aw);
            get_opt(a, "amp_max", spec.amp_max, aw);
            get_opt(a, "dur_min_s", spec.dur_min_s, aw);
            get_opt(a, "dur_max_s", spec.dur_max_s, aw);
            get_opt(a, "channels", spec.channels, aw);
            get_opt(a, "channels_per_event", spec.channels_per_event, aw);
            s.artifacts.push_back(std::move(spec));
        }
    }
    return s;
}

json variant_config_json(Variant v) {
    const VariantFlags f = variant_flags(v);
    return {{"variant", to_string(v)},
            {"cleaning", v == Variant::control ? "none" : f.asr ? "asr" : "nasr"},
            {"reconstruct_neighbors", f.neighbors},
            {"covariance_full_window", f.full_window_covariance},
            {"weighted_reconstruction", f.weighted}};
}

json to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"balanced_accuracy", m.balanced_accuracy}, {"f1", m.f1}, {"n", m.n}};
}

// ---------------------------------------------------------------------------

json to_json(const Checkpoint& c) {
    json j = {{"k", c.params.nasr.k},
              {"l", c.params.nasr.l},
              {"scaling_w", c.params.scaling.w},
              {"k_offset", c.params.nasr.k_offset},
              {"decoder", {{"weights", c.params.decoder.weights}, {"bias", c.params.decoder.bias},
                           {"dropout", c.params.decoder.dropout}}},
              {"variant", to_string(c.variant)},
              {"channel_labels", c.channel_labels},
              {"harness", to_json(c.harness)}};
    if (c.asr) j["asr_model"] = to_json(*c.asr);
    if (c.stats) j["stats"] = to_json(*c.stats);
    return j;
}

Checkpoint checkpoint_from_json(const json& j) {
    const std::string w = "checkpoint";
    check_keys(j, {"k", "l", "scaling_w", "k_offset", "decoder", "variant", "channel_labels", "harness",
                   "asr_model", "stats"},
               w);
    Checkpoint c;
    c.params.nasr.k = get_req<double>(j, "k", w);
    c.params.nasr.l = get_req<double>(j, "l", w);
    c.params.nasr.k_offset = get_req<double>(j, "k_offset", w);
    c.params.scaling.w = get_req<std::vector<double>>(j, "scaling_w", w);
    try {
        c.params.nasr.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(w + ": " + e.what());
    }
    const std::size_t ch = c.params.scaling.w.size();
    if (j.contains("decoder")) {
        const auto& d = j.at("decoder");
        check_keys(d, {"weights", "bias", "dropout"}, w + ".decoder");
        c.params.decoder.weights = get_req<std::vector<double>>(d, "weights", w + ".decoder");
        c.params.decoder.bias = get_req<double>(d, "bias", w + ".decoder");
        get_opt(d, "dropout", c.params.decoder.dropout, w + ".decoder");
        if (c.params.decoder.weights.size() != ch) throw ParseError(w + ": decoder width differs from scaling_w");
    } else {
        c.params.decoder = Decoder::zeros(ch);
    }
    if (j.contains("variant")) c.variant = parse_variant(get_req<std::string>(j, "variant", w));
    get_opt(j, "channel_labels", c.channel_labels, w);
    if (j.contains("harness")) c.harness = harness_config_from_json(j.at("harness"));
    if (j.contains("asr_model")) c.asr = asr_model_from_json(j.at("asr_model"));
    if (j.contains("stats")) c.stats = channel_stats_from_json(j.at("stats"));
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_json_file(to_json(ckpt), path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    try {
        return checkpoint_from_json(read_json_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "epoch,train_loss,val_loss,lr,k,l\n";
    char buf[256];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_loss, r.lr,
                      r.k, r.l);
        out << buf;
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "epoch,train_loss,val_loss,lr,k,l")
        throw ParseError(path.string() + ": bad history header");
    std::vector<EpochRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        EpochRecord r;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.train_loss, &r.val_loss, &r.lr, &r.k,
                        &r.l) != 6)
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": malformed row");
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------

json to_json(const TruthSidecar& t) {
    json events = json::array();
    for (const auto& e : t.events)
        events.push_back({{"kind", to_string(e.kind)},
                          {"onset", e.onset},
                          {"length", e.length},
                          {"channels", e.channels},
                          {"amplitude", e.amplitude},
                          {"windows", e.windows}});
    return {{"window", t.window}, {"hop", t.hop}, {"labels", t.labels}, {"events", events}};
}

TruthSidecar truth_from_json(const json& j) {
    const std::string w = "truth";
    check_keys(j, {"window", "hop", "labels", "events"}, w);
    TruthSidecar t;
    t.window = get_req<std::size_t>(j, "window", w);
    t.hop = get_req<std::size_t>(j, "hop", w);
    t.labels = get_req<std::vector<int>>(j, "labels", w);
    if (j.contains("events")) {
        for (const auto& e : j.at("events")) {
            ArtifactEvent ev;
            ev.kind = parse_artifact_kind(get_req<std::string>(e, "kind", w + ".events[]"));
            ev.onset = get_req<std::size_t>(e, "onset", w + ".events[]");
            ev.length = get_req<std::size_t>(e, "length", w + ".events[]");
            ev.channels = get_req<std::vector<std::size_t>>(e, "channels", w + ".events[]");
            ev.amplitude = get_req<double>(e, "amplitude", w + ".events[]");
            ev.windows = get_req<std::vector<std::size_t>>(e, "windows", w + ".events[]");
            t.events.push_back(std::move(ev));
        }
    }
    return t;
}

std::filesystem::path truth_path(const std::filesystem::path& header) {
    auto p = header;
    p.replace_extension(".truth.json");
    return p;
}

void write_masks(const std::vector<std::vector<std::uint8_t>>& masks, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& m : masks) {
        for (auto v : m) out << (v ? '1' : '0');
        out << '\n';
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::vector<std::uint8_t>> read_masks(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::vector<std::uint8_t>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::uint8_t> m(line.size());
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] != '0' && line[i] != '1')
                throw ParseError(path.string() + " line " + std::to_string(line_no) + ": expected 0/1");
            m[i] = line[i] == '1';
        }
        if (!out.empty() && m.size() != out.front().size())
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": ragged mask row");
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace nasr
