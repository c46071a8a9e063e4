#include "experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "frame_io.hpp"
#include "parallel.hpp"

namespace tgi {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& ctx, const std::set<std::string>& allowed) {
    require(j.is_object(), ctx + ": expected a JSON object");
    for (const auto& [key, _] : j.items())
        require(allowed.count(key) != 0, ctx + ": unknown key '" + key + "'");
}

const json& need(const json& j, const std::string& ctx, const std::string& key) {
    require(j.contains(key), ctx + ": missing required key '" + key + "'");
    return j.at(key);
}

double need_number(const json& j, const std::string& ctx, const std::string& key) {
    const json& v = need(j, ctx, key);
    require(v.is_number(), ctx + ": '" + key + "' must be a number");
    return v.get<double>();
}

Envelope envelope_from_json(const json& j) {
    const std::string ctx = "config.source.envelope";
    const std::string type = need(j, ctx, "type").get<std::string>();
    if (type == "flat") {
        check_keys(j, ctx, {"type"});
        return Envelope::flat();
    }
    if (type == "gaussian") {
        check_keys(j, ctx, {"type", "center_x", "center_y", "sigma_x", "sigma_y"});
        return Envelope::gaussian(need_number(j, ctx, "center_x"), need_number(j, ctx, "center_y"),
                                  need_number(j, ctx, "sigma_x"), need_number(j, ctx, "sigma_y"));
    }
    fail_validation(ctx + ": type must be 'flat' or 'gaussian'");
}

json envelope_to_json(const Envelope& e) {
    if (e.kind == Envelope::Kind::flat) return json{{"type", "flat"}};
    return json{{"type", "gaussian"},
                {"center_x", e.center_x},
                {"center_y", e.center_y},
                {"sigma_x", e.sigma_x},
                {"sigma_y", e.sigma_y}};
}

std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t trial,
                                 std::size_t step, const char* arm) {
    char name[96];
    std::snprintf(name, sizeof(name), "trial%06zu_step%02zu_%s.tgif", trial, step, arm);
    return dir / name;
}
std::filesystem::path integrated_path(const std::filesystem::path& dir, std::size_t trial) {
    char name[96];
    std::snprintf(name, sizeof(name), "trial%06zu_integrated.tgif", trial);
    return dir / name;
}

// Pixel-count accumulation over trials, chunked so each worker owns a partial
// and the merge order is fixed.
struct CountAccumulator {
    explicit CountAccumulator(std::size_t pixels) : total(pixels, 0) {}
    std::vector<std::uint64_t> total;
    void merge(const std::vector<std::uint64_t>& part) {
        for (std::size_t i = 0; i < total.size(); ++i) total[i] += part[i];
    }
};

struct TrialFrames {
    PhotonFrame integrated;
    std::vector<PhotonFrame> idlers;
};

TrialFrames generate_trial(const ExperimentConfig& config, std::size_t trial) {
    const std::size_t steps = config.signal.steps();
    std::vector<PhotonFrame> signals;
    signals.reserve(steps);
    TrialFrames out{PhotonFrame::zeros(config.geometry), {}};
    out.idlers.reserve(steps);
    for (std::size_t n = 0; n < steps; ++n) {
        StepFrames sf = generate_step(config.geometry, config.source, config.signal.levels[n],
                                      step_seed(config.master_seed, trial, n), n);
        signals.push_back(std::move(sf.signal_frame));
        out.idlers.push_back(std::move(sf.idler_frame));
    }
    out.integrated = integrate_signal(signals);
    return out;
}

TrialFrames read_trial(const std::filesystem::path& frames_dir, std::size_t trial,
                       std::size_t steps) {
    TrialFrames out{read_frame(integrated_path(frames_dir, trial)), {}};
    out.idlers.reserve(steps);
    for (std::size_t n = 0; n < steps; ++n)
        out.idlers.push_back(read_frame(frame_path(frames_dir, trial, n, "idler")));
    return out;
}

json manifest_json(const ExperimentConfig& config) {
    json m;
    m["format"] = "tgi-manifest";
    m["version"] = 1;
    m["config"] = json::parse(config.to_json_text());
    m["config_hash"] = config.hash();
    m["trials"] = config.trials;
    m["steps"] = config.signal.steps();
    m["frame_naming"] = "trial%06zu_step%02zu_{signal,idler}.tgif; trial%06zu_integrated.tgif";
    return m;
}

ExperimentConfig config_from_manifest(const std::filesystem::path& frames_dir) {
    const auto path = frames_dir / "manifest.json";
    std::ifstream in(path);
    if (!in) fail_io("cannot open manifest: " + path.string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        fail_io("bad manifest json: " + std::string(e.what()));
    }
    require(m.value("format", "") == "tgi-manifest", "manifest: wrong format marker");
    require(m.value("version", 0) == 1, "manifest: unsupported version");
    ExperimentConfig config = ExperimentConfig::from_json_text(m.at("config").dump());
    require(m.at("config_hash").get<std::uint64_t>() == config.hash(),
            "manifest: config hash mismatch (manifest edited?)");
    return config;
}

}  // namespace

void CalibrationConfig::validate() const {
    require(pairs >= 2, "calibration: pairs must be >= 2");
    require(window_extent_x >= 1 && window_extent_y >= 1, "calibration: window extents must be >= 1");
    require(max_shift_x >= 1 && max_shift_y >= 1, "calibration: max shifts must be >= 1");
    require(static_cast<int>(window_extent_x) <= 2 * max_shift_x + 1 &&
                static_cast<int>(window_extent_y) <= 2 * max_shift_y + 1,
            "calibration: window larger than the searched displacement range");
}

void ExperimentConfig::validate() const {
    geometry.validate();
    source.validate();
    signal.validate();
    require(trials >= 1, "config: trials must be >= 1");
    calibration.validate();
    if (trials < 2) {
        require(method == MeanMethod::gaussian_fit && decode == DecodeMode::blind,
                "config: trials=1 requires method=gaussian and decode=blind "
                "(ensemble statistics need at least 2 trials)");
    }
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail_validation("config: invalid JSON: " + std::string(e.what()));
    }
    check_keys(j, "config",
               {"geometry", "source", "signal_levels", "trials", "seed", "calibration", "method",
                "decode", "output"});

    ExperimentConfig c;
    const json& g = need(j, "config", "geometry");
    check_keys(g, "config.geometry", {"width", "height"});
    c.geometry.width_px = static_cast<std::uint32_t>(need_number(g, "config.geometry", "width"));
    c.geometry.height_px = static_cast<std::uint32_t>(need_number(g, "config.geometry", "height"));

    const json& s = need(j, "config", "source");
    check_keys(s, "config.source",
               {"pair_rate", "transmission_signal", "transmission_idler", "jitter_sigma_x",
                "jitter_sigma_y", "background_signal", "background_idler", "envelope"});
    c.source.pair_rate = need_number(s, "config.source", "pair_rate");
    c.source.transmission_signal = need_number(s, "config.source", "transmission_signal");
    c.source.transmission_idler = need_number(s, "config.source", "transmission_idler");
    c.source.jitter_sigma_x = need_number(s, "config.source", "jitter_sigma_x");
    c.source.jitter_sigma_y = need_number(s, "config.source", "jitter_sigma_y");
    c.source.background_signal = need_number(s, "config.source", "background_signal");
    c.source.background_idler = need_number(s, "config.source", "background_idler");
    c.source.envelope = envelope_from_json(need(s, "config.source", "envelope"));

    const json& lv = need(j, "config", "signal_levels");
    require(lv.is_array(), "config: signal_levels must be an array");
    for (const auto& v : lv) {
        require(v.is_number_integer(), "config: signal_levels entries must be integers");
        const auto b = v.get<int>();
        require(b == 0 || b == 1, "config: signal_levels entries must be 0 or 1");
        c.signal.levels.push_back(static_cast<std::uint8_t>(b));
    }

    const json& tr = need(j, "config", "trials");
    require(tr.is_number_integer() && tr.get<std::int64_t>() >= 1, "config: trials must be >= 1");
    c.trials = tr.get<std::size_t>();

    const json& seed = need(j, "config", "seed");  // mandatory: runs must replay
    require(seed.is_number_unsigned() || seed.is_number_integer(),
            "config: seed must be an integer");
    c.master_seed = seed.get<std::uint64_t>();

    if (j.contains("calibration")) {
        const json& cal = j.at("calibration");
        check_keys(cal, "config.calibration",
                   {"pairs", "min_pairs", "window_extent_x", "window_extent_y", "max_shift_x",
                    "max_shift_y"});
        if (cal.contains("pairs")) c.calibration.pairs = cal.at("pairs").get<std::size_t>();
        if (cal.contains("min_pairs"))
            c.calibration.min_pairs = cal.at("min_pairs").get<std::size_t>();
        if (cal.contains("window_extent_x"))
            c.calibration.window_extent_x = cal.at("window_extent_x").get<std::uint32_t>();
        if (cal.contains("window_extent_y"))
            c.calibration.window_extent_y = cal.at("window_extent_y").get<std::uint32_t>();
        if (cal.contains("max_shift_x"))
            c.calibration.max_shift_x = cal.at("max_shift_x").get<int>();
        if (cal.contains("max_shift_y"))
            c.calibration.max_shift_y = cal.at("max_shift_y").get<int>();
    }

    if (j.contains("method")) {
        const std::string m = j.at("method").get<std::string>();
        if (m == "ensemble")
            c.method = MeanMethod::ensemble;
        else if (m == "gaussian")
            c.method = MeanMethod::gaussian_fit;
        else
            fail_validation("config: method must be 'ensemble' or 'gaussian'");
    }
    if (j.contains("decode")) {
        const std::string d = j.at("decode").get<std::string>();
        if (d == "ensemble")
            c.decode = DecodeMode::ensemble;
        else if (d == "blind")
            c.decode = DecodeMode::blind;
        else
            fail_validation("config: decode must be 'ensemble' or 'blind'");
    }
    if (j.contains("output")) c.output = j.at("output").get<std::string>();

    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail_io("cannot open config: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string ExperimentConfig::to_json_text() const {
    json j;
    j["geometry"] = {{"width", geometry.width_px}, {"height", geometry.height_px}};
    j["source"] = {{"pair_rate", source.pair_rate},
                   {"transmission_signal", source.transmission_signal},
                   {"transmission_idler", source.transmission_idler},
                   {"jitter_sigma_x", source.jitter_sigma_x},
                   {"jitter_sigma_y", source.jitter_sigma_y},
                   {"background_signal", source.background_signal},
                   {"background_idler", source.background_idler},
                   {"envelope", envelope_to_json(source.envelope)}};
    j["signal_levels"] = signal.levels;
    j["trials"] = trials;
    j["seed"] = master_seed;
    j["calibration"] = {{"pairs", calibration.pairs},
                        {"min_pairs", calibration.min_pairs},
                        {"window_extent_x", calibration.window_extent_x},
                        {"window_extent_y", calibration.window_extent_y},
                        {"max_shift_x", calibration.max_shift_x},
                        {"max_shift_y", calibration.max_shift_y}};
    j["method"] = method == MeanMethod::ensemble ? "ensemble" : "gaussian";
    j["decode"] = decode == DecodeMode::ensemble ? "ensemble" : "blind";
    if (!output.empty()) j["output"] = output;
    return j.dump(2);
}

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json_text()); }

ExperimentConfig load_manifest_config(const std::filesystem::path& frames_dir) {
    return config_from_manifest(frames_dir);
}

// ---- calibrate --------------------------------------------------------------

namespace {

CalibrationProfile calibrate_from_pairs(const DetectorGeometry& geom,
                                        const std::vector<PhotonFrame>& signals,
                                        const std::vector<PhotonFrame>& idlers,
                                        const CalibrationConfig& cal, MeanMethod method,
                                        std::uint64_t config_hash, int jobs) {
    if (signals.size() < cal.min_pairs)
        fail_insufficient("calibration: " + std::to_string(signals.size()) + " pairs found, " +
                          std::to_string(cal.min_pairs) + " required");
    EtaAnalysis analysis =
        analyze_twin_ensemble(signals, idlers, cal.max_shift_x, cal.max_shift_y, method, jobs);
    CalibrationProfile profile;
    profile.geometry = geom;
    profile.window = locate_peak(analysis.averaged, cal.window_extent_x, cal.window_extent_y);
    profile.eta_full = analysis.full;
    profile.eta_window = window_eta(analysis, profile.window).eta;
    profile.capture_fraction =
        analysis.full.eta > 0.0 ? profile.eta_window / analysis.full.eta : 1.0;
    profile.mean_signal = estimate_mean_shape(signals);
    profile.mean_idler = estimate_mean_shape(idlers);
    profile.mean_flux_signal = profile.mean_signal.image.mean();
    profile.mean_flux_idler = profile.mean_idler.image.mean();
    profile.method = method == MeanMethod::ensemble ? "ensemble" : "gaussian";
    profile.config_hash = config_hash;
    return profile;
}

}  // namespace

CalibrationProfile run_calibrate(const ExperimentConfig& config, int jobs) {
    config.validate();
    const std::size_t n = config.calibration.pairs;
    if (n < config.calibration.min_pairs)
        fail_insufficient("calibration: config requests fewer pairs than min_pairs");

    // Twin pairs at transmission one: same source, T_n = 1, dedicated seeds.
    std::vector<PhotonFrame> signals(n, PhotonFrame()), idlers(n, PhotonFrame());
    parallel_for(n, jobs, [&](std::size_t k) {
        StepFrames sf = generate_step(config.geometry, config.source, 1,
                                      calibration_pair_seed(config.master_seed, k), 0);
        signals[k] = std::move(sf.signal_frame);
        idlers[k] = std::move(sf.idler_frame);
    });
    return calibrate_from_pairs(config.geometry, signals, idlers, config.calibration,
                                config.method, config.hash(), jobs);
}

CalibrationProfile run_calibrate_frames(const std::filesystem::path& frames_dir,
                                        std::optional<std::size_t> min_pairs_override, int jobs) {
    const ExperimentConfig config = config_from_manifest(frames_dir);
    const std::size_t steps = config.signal.steps();
    std::vector<std::size_t> one_steps;
    for (std::size_t nstep = 0; nstep < steps; ++nstep)
        if (config.signal.levels[nstep] == 1) one_steps.push_back(nstep);

    std::vector<PhotonFrame> signals, idlers;
    signals.reserve(config.trials * one_steps.size());
    idlers.reserve(config.trials * one_steps.size());
    const auto dir = frames_dir / "frames";
    for (std::size_t t = 0; t < config.trials; ++t)
        for (const std::size_t nstep : one_steps) {
            signals.push_back(read_frame(frame_path(dir, t, nstep, "signal")));
            idlers.push_back(read_frame(frame_path(dir, t, nstep, "idler")));
        }
    CalibrationConfig cal = config.calibration;
    if (min_pairs_override) cal.min_pairs = *min_pairs_override;
    return calibrate_from_pairs(config.geometry, signals, idlers, cal, config.method,
                                config.hash(), jobs);
}

// ---- simulate ---------------------------------------------------------------

void run_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir, int jobs) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "frames", ec);
    if (ec) fail_io("cannot create output directory: " + (out_dir / "frames").string());

    const std::size_t steps = config.signal.steps();
    parallel_for(config.trials, jobs, [&](std::size_t t) {
        std::vector<PhotonFrame> signals;
        signals.reserve(steps);
        for (std::size_t n = 0; n < steps; ++n) {
            StepFrames sf = generate_step(config.geometry, config.source, config.signal.levels[n],
                                          step_seed(config.master_seed, t, n), n);
            write_frame(sf.signal_frame, frame_path(out_dir / "frames", t, n, "signal"));
            write_frame(sf.idler_frame, frame_path(out_dir / "frames", t, n, "idler"));
            signals.push_back(std::move(sf.signal_frame));
        }
        write_frame(integrate_signal(signals), integrated_path(out_dir / "frames", t));
    });

    std::ofstream out(out_dir / "manifest.json", std::ios::trunc);
    if (!out) fail_io("cannot write manifest: " + (out_dir / "manifest.json").string());
    out << manifest_json(config).dump(2) << "\n";
    if (!out) fail_io("manifest write failed");
}

// ---- reconstruct ------------------------------------------------------------

namespace {

ReconstructionRun reconstruct_impl(const ExperimentConfig& config,
                                   const CalibrationProfile& profile, int jobs,
                                   const std::function<TrialFrames(std::size_t)>& trial_source) {
    require(profile.geometry == config.geometry,
            "reconstruct: calibration profile geometry does not match the frames");
    const std::size_t steps = config.signal.steps();
    const std::size_t trials = config.trials;
    const std::size_t pixels = config.geometry.pixel_count();

    // Pass 1: deterministic-shape estimation.  Integer per-pixel counts are
    // accumulated per chunk and merged in chunk order, so worker count never
    // changes the result.
    const std::size_t chunk_count = std::min<std::size_t>(trials, std::max(1, jobs));
    std::vector<std::vector<std::uint64_t>> part_int(chunk_count),
        part_idl(chunk_count);
    parallel_for(chunk_count, jobs, [&](std::size_t chunk) {
        auto& pint = part_int[chunk];
        auto& pidl = part_idl[chunk];
        pint.assign(pixels, 0);
        pidl.assign(pixels, 0);
        const std::size_t lo = trials * chunk / chunk_count;
        const std::size_t hi = trials * (chunk + 1) / chunk_count;
        for (std::size_t t = lo; t < hi; ++t) {
            const TrialFrames tf = trial_source(t);
            const auto& ip = tf.integrated.pixels();
            for (std::size_t i = 0; i < pixels; ++i) pint[i] += ip[i];
            for (const auto& idler : tf.idlers) {
                const auto& px = idler.pixels();
                for (std::size_t i = 0; i < pixels; ++i) pidl[i] += px[i];
            }
        }
    });
    CountAccumulator acc_int(pixels), acc_idl(pixels);
    for (std::size_t c = 0; c < chunk_count; ++c) {
        acc_int.merge(part_int[c]);
        acc_idl.merge(part_idl[c]);
    }
    std::vector<double> mean_int(pixels), mean_idl(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
        mean_int[i] = static_cast<double>(acc_int.total[i]) / static_cast<double>(trials);
        mean_idl[i] = static_cast<double>(acc_idl.total[i]) / static_cast<double>(trials * steps);
    }
    MeanImage ensemble_mean_signal{RealImage(config.geometry, std::move(mean_int)), trials};
    MeanImage ensemble_mean_idler{RealImage(config.geometry, std::move(mean_idl)), trials * steps};

    ReconstructionRun run;
    run.mean_signal_flux = ensemble_mean_signal.image.mean();
    run.mean_idler_flux = ensemble_mean_idler.image.mean();

    // Pass 2: per-trial coincidence series.
    run.series.assign(trials, CoincidenceSeries{});
    if (config.method == MeanMethod::ensemble) {
        const WindowedCorrelator correlator(ensemble_mean_signal, ensemble_mean_idler,
                                            profile.window);
        parallel_for(trials, jobs, [&](std::size_t t) {
            const TrialFrames tf = trial_source(t);
            run.series[t] = reconstruct_series(tf.integrated, tf.idlers, correlator, t);
        });
    } else {
        parallel_for(trials, jobs, [&](std::size_t t) {
            const TrialFrames tf = trial_source(t);
            const GaussianShape shape_s = fit_gaussian_shape(
                MeanImage{RealImage(config.geometry,
                                    std::vector<double>(tf.integrated.pixels().begin(),
                                                        tf.integrated.pixels().end())),
                          1});
            std::vector<double> eval_s(pixels);
            for (std::uint32_t y = 0; y < config.geometry.height_px; ++y)
                for (std::uint32_t x = 0; x < config.geometry.width_px; ++x)
                    eval_s[static_cast<std::size_t>(y) * config.geometry.width_px + x] =
                        shape_s.evaluate(x, y);
            MeanImage fitted_s{RealImage(config.geometry, std::move(eval_s)), 1};

            CoincidenceSeries series;
            series.window = profile.window;
            series.trial = t;
            for (const auto& idler : tf.idlers) {
                const GaussianShape shape_i = fit_gaussian_shape(
                    MeanImage{RealImage(config.geometry,
                                        std::vector<double>(idler.pixels().begin(),
                                                            idler.pixels().end())),
                              1});
                std::vector<double> eval_i(pixels);
                for (std::uint32_t y = 0; y < config.geometry.height_px; ++y)
                    for (std::uint32_t x = 0; x < config.geometry.width_px; ++x)
                        eval_i[static_cast<std::size_t>(y) * config.geometry.width_px + x] =
                            shape_i.evaluate(x, y);
                const WindowedCorrelator correlator(
                    fitted_s, MeanImage{RealImage(config.geometry, std::move(eval_i)), 1},
                    profile.window);
                series.counts.push_back(correlator.coincidences(tf.integrated, idler));
            }
            run.series[t] = std::move(series);
        });
    }

    // Decode.
    run.decoded.assign(trials, DecodedSignal{});
    if (config.decode == DecodeMode::ensemble) {
        double one_level = 0.0;
        std::size_t ones = 0;
        for (std::size_t n = 0; n < steps; ++n) {
            if (config.signal.levels[n] != 1) continue;
            for (const auto& s : run.series) one_level += s.counts[n];
            ++ones;
        }
        require(ones >= 1, "reconstruct: ensemble decode needs at least one '1' step in truth");
        one_level /= static_cast<double>(ones * trials);
        require(one_level > 0.0,
                "reconstruct: measured '1' level is not positive; cannot place threshold");
        for (std::size_t t = 0; t < trials; ++t)
            run.decoded[t] = threshold_decode(run.series[t], one_level);
    } else {
        for (std::size_t t = 0; t < trials; ++t) {
            const auto& c = run.series[t].counts;
            const double level = *std::max_element(c.begin(), c.end());
            if (level > 0.0) {
                run.decoded[t] = threshold_decode(run.series[t], level);
            } else {
                // No step stands out; decode everything to 0.
                DecodedSignal d;
                d.threshold = 0.0;
                d.bits.assign(c.size(), 0);
                d.margins.assign(c.size(), 0.0);
                run.decoded[t] = std::move(d);
            }
        }
    }

    // Ensemble metrics + predictions.
    run.noise.pixel_count = pixels;
    run.noise.bin_count = static_cast<double>(profile.window.bin_count());
    run.noise.mean_signal = run.mean_signal_flux;
    run.noise.mean_idler = run.mean_idler_flux;
    run.noise.eta = std::clamp(profile.eta_window, 0.0, 1.0);
    if (trials >= 2) {
        run.metrics = evaluate_ensemble(run.series, run.decoded, config.signal);
        run.metrics.predicted =
            predicted_snr(1, run.noise, std::max<std::size_t>(1, config.signal.ones_count()));
        run.metrics.snr_required = required_snr(config.signal.level_count, 1);
        run.metrics_valid = true;
    }
    return run;
}

}  // namespace

ReconstructionRun run_reconstruct(const ExperimentConfig& config,
                                  const CalibrationProfile& profile, int jobs) {
    config.validate();
    return reconstruct_impl(config, profile, jobs,
                            [&](std::size_t t) { return generate_trial(config, t); });
}

ReconstructionRun run_reconstruct_frames(const std::filesystem::path& frames_dir,
                                         const CalibrationProfile& profile, int jobs) {
    const ExperimentConfig config = config_from_manifest(frames_dir);
    const auto dir = frames_dir / "frames";
    return reconstruct_impl(config, profile, jobs, [&, dir](std::size_t t) {
        return read_trial(dir, t, config.signal.steps());
    });
}

void write_reconstruction_csvs(const ReconstructionRun& run, const TimeSignal& truth,
                               const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) fail_io("cannot create output directory: " + out_dir.string());

    const auto trials_path = out_dir / "trials.csv";
    std::FILE* f = std::fopen(trials_path.string().c_str(), "w");
    if (!f) fail_io("cannot open for writing: " + trials_path.string());
    std::fprintf(f, "trial,step,c_n,bit,truth\n");
    for (std::size_t t = 0; t < run.series.size(); ++t)
        for (std::size_t n = 0; n < run.series[t].counts.size(); ++n)
            std::fprintf(f, "%zu,%zu,%.17g,%u,%u\n", t, n, run.series[t].counts[n],
                         run.decoded[t].bits[n], truth.levels[n]);
    if (std::fclose(f) != 0) fail_io("write failed: " + trials_path.string());

    if (!run.metrics_valid) return;
    const auto& m = run.metrics;
    const auto summary_path = out_dir / "summary.csv";
    f = std::fopen(summary_path.string().c_str(), "w");
    if (!f) fail_io("cannot open for writing: " + summary_path.string());
    std::fprintf(f,
                 "step,truth,mean_c,std_c,snr_step,snr_measured,error_rate,"
                 "snr_predicted_full,snr_predicted_approx,snr_required,threshold\n");
    for (std::size_t n = 0; n < m.step_mean.size(); ++n)
        std::fprintf(f, "%zu,%u,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", n,
                     truth.levels[n], m.step_mean[n], m.step_std[n], m.step_snr[n], m.snr_measured,
                     m.error_rate, m.predicted.full, m.predicted.approx, m.snr_required,
                     m.mean_one_level / 2.0);
    if (std::fclose(f) != 0) fail_io("write failed: " + summary_path.string());
}

// ---- sweep ------------------------------------------------------------------

void SweepSpec::validate() const {
    static const std::set<std::string> known = {"eta-equivalent", "m_i", "B", "M", "N_steps", "D"};
    require(known.count(parameter) != 0, "sweep: unknown parameter name '" + parameter + "'");
    require(!values.empty(), "sweep: value list must be nonempty");
    require(replicates >= 1, "sweep: replicates must be >= 1");
}

SweepSpec SweepSpec::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail_validation("sweep: invalid JSON: " + std::string(e.what()));
    }
    check_keys(j, "sweep", {"parameter", "values", "replicates"});
    SweepSpec spec;
    spec.parameter = need(j, "sweep", "parameter").get<std::string>();
    const json& vals = need(j, "sweep", "values");
    require(vals.is_array(), "sweep: values must be an array");
    for (const auto& v : vals) {
        require(v.is_number(), "sweep: values must be numbers");
        spec.values.push_back(v.get<double>());
    }
    if (j.contains("replicates")) spec.replicates = j.at("replicates").get<std::size_t>();
    spec.validate();
    return spec;
}

SweepSpec SweepSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail_io("cannot open sweep spec: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& base, const std::string& parameter,
                                   double value) {
    ExperimentConfig c = base;
    if (parameter == "eta-equivalent") {
        const double pair_idler = c.source.pair_rate * c.source.transmission_idler;
        require(pair_idler > 0.0, "sweep eta-equivalent: source has no paired idler flux");
        const double tau_s =
            value * (pair_idler + c.source.background_idler) / pair_idler;
        require(tau_s >= 0.0 && tau_s <= 1.0,
                "sweep eta-equivalent: requested value needs transmission_signal outside [0,1]");
        c.source.transmission_signal = tau_s;
    } else if (parameter == "m_i") {
        require(value > 0.0 && value < 1.0, "sweep m_i: value must be in (0,1)");
        const double rate = -std::log1p(-value) - c.source.background_idler;
        require(rate > 0.0, "sweep m_i: background already exceeds the requested mean");
        require(c.source.transmission_idler > 0.0, "sweep m_i: transmission_idler is zero");
        c.source.pair_rate = rate / c.source.transmission_idler;
    } else if (parameter == "B") {
        const auto b = static_cast<std::uint64_t>(value);
        require(static_cast<double>(b) == value && b >= 1, "sweep B: values must be integers >= 1");
        const std::uint32_t bx = static_cast<std::uint32_t>(std::min<std::uint64_t>(16, b));
        require(b % bx == 0, "sweep B: value must factor as (min(16,B)) x (B/min(16,B))");
        c.calibration.window_extent_x = bx;
        c.calibration.window_extent_y = static_cast<std::uint32_t>(b / bx);
    } else if (parameter == "M") {
        const auto m = static_cast<std::size_t>(value);
        require(static_cast<double>(m) == value && m >= 1, "sweep M: values must be integers >= 1");
        require(m <= base.signal.steps(), "sweep M: more ones than steps");
        for (std::size_t n = 0; n < c.signal.levels.size(); ++n)
            c.signal.levels[n] = n < m ? 1 : 0;
    } else if (parameter == "N_steps") {
        const auto n = static_cast<std::size_t>(value);
        require(static_cast<double>(n) == value && n >= 1,
                "sweep N_steps: values must be integers >= 1");
        const std::size_t m = base.signal.ones_count();
        require(m <= n, "sweep N_steps: base signal has more ones than requested steps");
        c.signal.levels.assign(n, 0);
        for (std::size_t i = 0; i < m; ++i) c.signal.levels[i] = 1;
    } else if (parameter == "D") {
        const auto d = static_cast<std::uint64_t>(value);
        const auto side = static_cast<std::uint32_t>(std::llround(std::sqrt(value)));
        require(static_cast<double>(d) == value && static_cast<std::uint64_t>(side) * side == d,
                "sweep D: values must be perfect squares");
        const double scale = static_cast<double>(side) / base.geometry.width_px;
        c.geometry = DetectorGeometry{side, side};
        if (c.source.envelope.kind == Envelope::Kind::gaussian) {
            c.source.envelope.center_x = (side - 1) / 2.0;
            c.source.envelope.center_y = (side - 1) / 2.0;
            c.source.envelope.sigma_x *= scale;
            c.source.envelope.sigma_y *= scale;
        }
    } else {
        fail_validation("sweep: unknown parameter name '" + parameter + "'");
    }
    c.validate();
    return c;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const SweepSpec& spec, int jobs) {
    base.validate();
    spec.validate();
    std::vector<SweepRow> rows;
    rows.reserve(spec.values.size());
    for (std::size_t point = 0; point < spec.values.size(); ++point) {
        ExperimentConfig config = apply_sweep_value(base, spec.parameter, spec.values[point]);
        SweepRow row;
        row.value = spec.values[point];
        row.replicates = spec.replicates;
        row.snr_min = std::numeric_limits<double>::infinity();
        row.snr_max = -std::numeric_limits<double>::infinity();
        std::size_t wrong = 0, total = 0;
        double acc_std = 0.0;
        for (std::size_t rep = 0; rep < spec.replicates; ++rep) {
            config.master_seed = sweep_replicate_seed(base.master_seed, point, rep);
            const CalibrationProfile profile = run_calibrate(config, jobs);
            const ReconstructionRun run = run_reconstruct(config, profile, jobs);
            require(run.metrics_valid, "sweep: points need trials >= 2 for metrics");
            row.snr_mean += run.metrics.snr_measured;
            row.snr_min = std::min(row.snr_min, run.metrics.snr_measured);
            row.snr_max = std::max(row.snr_max, run.metrics.snr_measured);
            wrong += run.metrics.wrong_bits;
            total += run.metrics.total_bits;
            row.snr_pred_full += run.metrics.predicted.full;
            row.snr_pred_approx += run.metrics.predicted.approx;
            row.eta_window += profile.eta_window;
            row.capture_fraction += profile.capture_fraction;
            double zero_std = 0.0;
            std::size_t zeros = 0;
            for (std::size_t n = 0; n < config.signal.steps(); ++n)
                if (config.signal.levels[n] == 0) {
                    zero_std += run.metrics.step_std[n];
                    ++zeros;
                }
            acc_std += zeros > 0 ? zero_std / static_cast<double>(zeros) : 0.0;
        }
        const double inv = 1.0 / static_cast<double>(spec.replicates);
        row.snr_mean *= inv;
        row.snr_pred_full *= inv;
        row.snr_pred_approx *= inv;
        row.eta_window *= inv;
        row.capture_fraction *= inv;
        row.accidental_std_measured = acc_std * inv;
        row.error_rate = total > 0 ? static_cast<double>(wrong) / static_cast<double>(total) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

void write_sweep_csv(const SweepSpec& spec, const std::vector<SweepRow>& rows,
                     const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) fail_io("cannot open for writing: " + path.string());
    std::fprintf(f,
                 "parameter,value,replicates,snr_measured_mean,snr_measured_min,snr_measured_max,"
                 "error_rate,snr_predicted_full,snr_predicted_approx,eta_window,capture_fraction,"
                 "accidental_std_measured\n");
    for (const auto& r : rows)
        std::fprintf(f, "%s,%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                     spec.parameter.c_str(), r.value, r.replicates, r.snr_mean, r.snr_min,
                     r.snr_max, r.error_rate, r.snr_pred_full, r.snr_pred_approx, r.eta_window,
                     r.capture_fraction, r.accidental_std_measured);
    if (std::fclose(f) != 0) fail_io("write failed: " + path.string());
}

PredictReport predict_report(const NoiseModelParams& params, int level_count,
                             std::size_t ones_count, std::uint8_t t_level) {
    PredictReport rep;
    rep.coincidences = predicted_coincidences(t_level, params);
    rep.accidental_sigma = accidental_std(params);
    const SnrPrediction snr = predicted_snr(t_level, params, ones_count);
    rep.snr_full = snr.full;
    rep.snr_approx = snr.approx;
    rep.snr_required = required_snr(level_count, t_level);
    rep.low_flux = params.low_flux();
    return rep;
}

}  // namespace tgi
