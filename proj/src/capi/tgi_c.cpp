#include "tgi/tgi.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "../core/experiment.hpp"
#include "../core/frame_io.hpp"

namespace {

thread_local std::string g_last_error;

tgi_status to_status(tgi::ErrorCode code) {
    switch (code) {
        case tgi::ErrorCode::validation: return TGI_ERR_VALIDATION;
        case tgi::ErrorCode::io: return TGI_ERR_IO;
        case tgi::ErrorCode::insufficient_stats: return TGI_ERR_INSUFFICIENT_STATS;
    }
    return TGI_ERR_UNKNOWN;
}

template <typename Fn>
tgi_status guarded(Fn&& fn) {
    try {
        fn();
        return TGI_OK;
    } catch (const tgi::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return TGI_ERR_UNKNOWN;
    } catch (...) {
        g_last_error = "unknown error";
        return TGI_ERR_UNKNOWN;
    }
}

void fill_buffer(char* buffer, size_t size, const std::string& text) {
    if (!buffer || size == 0) return;
    const size_t n = std::min(size - 1, text.size());
    std::memcpy(buffer, text.data(), n);
    buffer[n] = '\0';
}

tgi::DetectorGeometry to_geom(tgi_geometry g) { return tgi::DetectorGeometry{g.width, g.height}; }
tgi_geometry from_geom(const tgi::DetectorGeometry& g) {
    return tgi_geometry{g.width_px, g.height_px};
}

tgi::SourceParams to_source(const tgi_source_params& s) {
    tgi::SourceParams out;
    out.pair_rate = s.pair_rate;
    out.transmission_signal = s.transmission_signal;
    out.transmission_idler = s.transmission_idler;
    out.jitter_sigma_x = s.jitter_sigma_x;
    out.jitter_sigma_y = s.jitter_sigma_y;
    out.background_signal = s.background_signal;
    out.background_idler = s.background_idler;
    out.envelope = s.envelope == TGI_ENVELOPE_GAUSSIAN
                       ? tgi::Envelope::gaussian(s.envelope_center_x, s.envelope_center_y,
                                                 s.envelope_sigma_x, s.envelope_sigma_y)
                       : tgi::Envelope::flat();
    return out;
}

tgi::PeakWindow to_window(const tgi_window& w) {
    return tgi::PeakWindow{w.center_dx, w.center_dy, w.extent_x, w.extent_y};
}
tgi_window from_window(const tgi::PeakWindow& w) {
    return tgi_window{w.center_dx, w.center_dy, w.extent_x, w.extent_y};
}

tgi::NoiseModelParams to_noise(const tgi_noise_params& p) {
    tgi::NoiseModelParams out;
    out.pixel_count = static_cast<std::size_t>(p.pixel_count);
    out.bin_count = p.bin_count;
    out.mean_signal = p.mean_signal;
    out.mean_idler = p.mean_idler;
    out.eta = p.eta;
    return out;
}

std::string reconstruction_summary(const tgi::ReconstructionRun& run) {
    char line[512];
    if (!run.metrics_valid) {
        std::snprintf(line, sizeof(line), "trials=%zu m_s=%.6g m_i=%.6g (single trial, no ensemble metrics)",
                      run.series.size(), run.mean_signal_flux, run.mean_idler_flux);
        return line;
    }
    const auto& m = run.metrics;
    std::snprintf(line, sizeof(line),
                  "trials=%zu snr_measured=%.4g snr_predicted_full=%.4g snr_predicted_approx=%.4g "
                  "snr_required=%.4g error_rate=%.6g m_s=%.6g m_i=%.6g eta_window=%.4g",
                  m.trials, m.snr_measured, m.predicted.full, m.predicted.approx, m.snr_required,
                  m.error_rate, run.mean_signal_flux, run.mean_idler_flux, run.noise.eta);
    return line;
}

std::string profile_summary(const tgi::CalibrationProfile& p) {
    char line[512];
    std::snprintf(line, sizeof(line),
                  "pairs=%zu eta=%.4g eta_window=%.4g capture_fraction=%.4g window=%ux%u@(%d,%d) "
                  "m_s=%.6g m_i=%.6g",
                  p.eta_full.frames_used, p.eta_full.eta, p.eta_window, p.capture_fraction,
                  p.window.extent_x, p.window.extent_y, p.window.center_dx, p.window.center_dy,
                  p.mean_flux_signal, p.mean_flux_idler);
    return line;
}

}  // namespace

struct tgi_frame {
    tgi::PhotonFrame frame;
};
struct tgi_image {
    tgi::RealImage image;
};
struct tgi_map {
    tgi::CorrelationMap map;
};
struct tgi_profile {
    tgi::CalibrationProfile profile;
};

extern "C" {

const char* tgi_version(void) { return "1.0.0"; }

const char* tgi_last_error(void) { return g_last_error.c_str(); }

/* ---- frames ---------------------------------------------------------------- */

tgi_status tgi_frame_load(const char* path, tgi_frame** out) {
    return guarded([&] {
        tgi::require(path && out, "tgi_frame_load: null argument");
        *out = new tgi_frame{tgi::read_frame(path)};
    });
}

tgi_status tgi_frame_save(const tgi_frame* frame, const char* path) {
    return guarded([&] {
        tgi::require(frame && path, "tgi_frame_save: null argument");
        tgi::write_frame(frame->frame, path);
    });
}

tgi_geometry tgi_frame_geometry(const tgi_frame* frame) {
    return frame ? from_geom(frame->frame.geometry()) : tgi_geometry{0, 0};
}

uint64_t tgi_frame_detected_count(const tgi_frame* frame) {
    return frame ? frame->frame.detected_count() : 0;
}

const uint8_t* tgi_frame_pixels(const tgi_frame* frame) {
    return frame ? frame->frame.pixels().data() : nullptr;
}

void tgi_frame_free(tgi_frame* frame) { delete frame; }

/* ---- generation ------------------------------------------------------------ */

uint64_t tgi_step_seed(uint64_t master, uint64_t trial, uint64_t step) {
    return tgi::step_seed(master, trial, step);
}

tgi_status tgi_generate_step(tgi_geometry geometry, const tgi_source_params* source, int t_level,
                             uint64_t seed, tgi_frame** signal_out, tgi_frame** idler_out) {
    return guarded([&] {
        tgi::require(source && signal_out && idler_out, "tgi_generate_step: null argument");
        tgi::require(t_level == 0 || t_level == 1, "tgi_generate_step: T_n must be 0 or 1");
        tgi::StepFrames sf = tgi::generate_step(to_geom(geometry), to_source(*source),
                                                static_cast<std::uint8_t>(t_level), seed);
        *signal_out = new tgi_frame{std::move(sf.signal_frame)};
        *idler_out = new tgi_frame{std::move(sf.idler_frame)};
    });
}

tgi_status tgi_integrate_signal(const tgi_frame* const* frames, size_t count, tgi_frame** out) {
    return guarded([&] {
        tgi::require(frames && out, "tgi_integrate_signal: null argument");
        std::vector<tgi::PhotonFrame> input;
        input.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            tgi::require(frames[i] != nullptr, "tgi_integrate_signal: null frame");
            input.push_back(frames[i]->frame);
        }
        *out = new tgi_frame{tgi::integrate_signal(input)};
    });
}

/* ---- images & correlation --------------------------------------------------- */

tgi_status tgi_mean_shape(const tgi_frame* const* frames, size_t count, tgi_image** out) {
    return guarded([&] {
        tgi::require(frames && out, "tgi_mean_shape: null argument");
        std::vector<tgi::PhotonFrame> input;
        input.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            tgi::require(frames[i] != nullptr, "tgi_mean_shape: null frame");
            input.push_back(frames[i]->frame);
        }
        *out = new tgi_image{tgi::estimate_mean_shape(input).image};
    });
}

tgi_status tgi_subtract_shape(const tgi_frame* frame, const tgi_image* shape,
                              tgi_image** residual_out) {
    return guarded([&] {
        tgi::require(frame && shape && residual_out, "tgi_subtract_shape: null argument");
        tgi::MeanImage mean{shape->image, 1};
        *residual_out = new tgi_image{tgi::subtract_shape(frame->frame, mean).image};
    });
}

tgi_geometry tgi_image_geometry(const tgi_image* image) {
    return image ? from_geom(image->image.geometry()) : tgi_geometry{0, 0};
}

const double* tgi_image_values(const tgi_image* image) {
    return image ? image->image.values().data() : nullptr;
}

tgi_status tgi_image_save(const tgi_image* image, const char* path) {
    return guarded([&] {
        tgi::require(image && path, "tgi_image_save: null argument");
        tgi::write_real_image(image->image, path);
    });
}

tgi_status tgi_image_load(const char* path, tgi_image** out) {
    return guarded([&] {
        tgi::require(path && out, "tgi_image_load: null argument");
        *out = new tgi_image{tgi::read_real_image(path)};
    });
}

void tgi_image_free(tgi_image* image) { delete image; }

tgi_status tgi_cross_covariance_map(const tgi_image* signal_residual,
                                    const tgi_image* idler_residual, int max_dx, int max_dy,
                                    int normalized, tgi_map** out) {
    return guarded([&] {
        tgi::require(signal_residual && idler_residual && out,
                     "tgi_cross_covariance_map: null argument");
        tgi::ResidualImage rs{signal_residual->image};
        tgi::ResidualImage ri{idler_residual->image};
        *out = new tgi_map{tgi::cross_covariance_map(rs, ri, max_dx, max_dy, normalized != 0)};
    });
}

tgi_status tgi_map_value(const tgi_map* map, int dx, int dy, double* out) {
    return guarded([&] {
        tgi::require(map && out, "tgi_map_value: null argument");
        tgi::require(map->map.contains(dx, dy), "tgi_map_value: shift outside map range");
        *out = map->map.at(dx, dy);
    });
}

tgi_status tgi_map_export_csv(const tgi_map* map, const char* path) {
    return guarded([&] {
        tgi::require(map && path, "tgi_map_export_csv: null argument");
        tgi::export_map_csv(map->map, path);
    });
}

tgi_status tgi_binned_coincidences(const tgi_map* map, const tgi_window* window, double* out) {
    return guarded([&] {
        tgi::require(map && window && out, "tgi_binned_coincidences: null argument");
        *out = tgi::binned_coincidences(map->map, to_window(*window));
    });
}

tgi_status tgi_locate_peak(const tgi_map* map, uint32_t extent_x, uint32_t extent_y,
                           tgi_window* out) {
    return guarded([&] {
        tgi::require(map && out, "tgi_locate_peak: null argument");
        *out = from_window(tgi::locate_peak(map->map, extent_x, extent_y));
    });
}

void tgi_map_free(tgi_map* map) { delete map; }

tgi_status tgi_estimate_eta(const tgi_frame* const* signals, const tgi_frame* const* idlers,
                            size_t pairs, const tgi_window* support, int max_dx, int max_dy,
                            double* eta_out) {
    return guarded([&] {
        tgi::require(signals && idlers && eta_out, "tgi_estimate_eta: null argument");
        std::vector<tgi::PhotonFrame> s, i;
        s.reserve(pairs);
        i.reserve(pairs);
        for (size_t k = 0; k < pairs; ++k) {
            tgi::require(signals[k] && idlers[k], "tgi_estimate_eta: null frame");
            s.push_back(signals[k]->frame);
            i.push_back(idlers[k]->frame);
        }
        std::optional<tgi::PeakWindow> win;
        if (support) win = to_window(*support);
        *eta_out = tgi::estimate_eta(s, i, win, max_dx, max_dy).eta;
    });
}

/* ---- predictors -------------------------------------------------------------- */

tgi_status tgi_accidental_std(const tgi_noise_params* params, double* out) {
    return guarded([&] {
        tgi::require(params && out, "tgi_accidental_std: null argument");
        *out = tgi::accidental_std(to_noise(*params));
    });
}

tgi_status tgi_predicted_coincidences(int t_level, const tgi_noise_params* params, double* out) {
    return guarded([&] {
        tgi::require(params && out, "tgi_predicted_coincidences: null argument");
        tgi::require(t_level == 0 || t_level == 1, "tgi_predicted_coincidences: T_n must be 0 or 1");
        *out = tgi::predicted_coincidences(static_cast<std::uint8_t>(t_level), to_noise(*params));
    });
}

tgi_status tgi_predicted_snr(int t_level, const tgi_noise_params* params, uint64_t ones_count,
                             double* full_out, double* approx_out) {
    return guarded([&] {
        tgi::require(params && full_out && approx_out, "tgi_predicted_snr: null argument");
        tgi::require(t_level == 0 || t_level == 1, "tgi_predicted_snr: T_n must be 0 or 1");
        const tgi::SnrPrediction p = tgi::predicted_snr(static_cast<std::uint8_t>(t_level),
                                                        to_noise(*params),
                                                        static_cast<std::size_t>(ones_count));
        *full_out = p.full;
        *approx_out = p.approx;
    });
}

tgi_status tgi_required_snr(int level_count, int t_level, double* out) {
    return guarded([&] {
        tgi::require(out, "tgi_required_snr: null argument");
        tgi::require(t_level == 0 || t_level == 1, "tgi_required_snr: T_n must be 0 or 1");
        *out = tgi::required_snr(level_count, static_cast<std::uint8_t>(t_level));
    });
}

/* ---- profiles ----------------------------------------------------------------- */

tgi_status tgi_profile_load(const char* path, tgi_profile** out) {
    return guarded([&] {
        tgi::require(path && out, "tgi_profile_load: null argument");
        *out = new tgi_profile{tgi::load_profile(path)};
    });
}

tgi_status tgi_profile_save(const tgi_profile* profile, const char* path) {
    return guarded([&] {
        tgi::require(profile && path, "tgi_profile_save: null argument");
        tgi::save_profile(profile->profile, path);
    });
}

double tgi_profile_eta(const tgi_profile* profile) {
    return profile ? profile->profile.eta_full.eta : 0.0;
}
double tgi_profile_eta_window(const tgi_profile* profile) {
    return profile ? profile->profile.eta_window : 0.0;
}
double tgi_profile_capture_fraction(const tgi_profile* profile) {
    return profile ? profile->profile.capture_fraction : 0.0;
}
tgi_window tgi_profile_window(const tgi_profile* profile) {
    return profile ? from_window(profile->profile.window) : tgi_window{0, 0, 0, 0};
}
void tgi_profile_free(tgi_profile* profile) { delete profile; }

/* ---- whole-pipeline runs -------------------------------------------------------- */

tgi_status tgi_config_override(const char* config_json, int has_seed, uint64_t seed,
                               const char* method_or_null, char** out_json) {
    return guarded([&] {
        tgi::require(config_json && out_json, "tgi_config_override: null argument");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(config_json);
        } catch (const nlohmann::json::exception& e) {
            tgi::fail_validation("config: invalid JSON: " + std::string(e.what()));
        }
        if (has_seed) j["seed"] = seed;
        if (method_or_null) j["method"] = std::string(method_or_null);
        const std::string text = j.dump(2);
        char* copy = new char[text.size() + 1];
        std::memcpy(copy, text.c_str(), text.size() + 1);
        *out_json = copy;
    });
}

void tgi_string_free(char* text) { delete[] text; }

tgi_status tgi_run_simulate(const char* config_json, const char* out_dir, int jobs) {
    return guarded([&] {
        tgi::require(config_json && out_dir, "tgi_run_simulate: null argument");
        const auto config = tgi::ExperimentConfig::from_json_text(config_json);
        tgi::run_simulate(config, out_dir, jobs);
    });
}

tgi_status tgi_run_calibrate(const char* config_json, const char* profile_path, int jobs,
                             char* summary, size_t summary_size) {
    return guarded([&] {
        tgi::require(config_json && profile_path, "tgi_run_calibrate: null argument");
        const auto config = tgi::ExperimentConfig::from_json_text(config_json);
        const auto profile = tgi::run_calibrate(config, jobs);
        tgi::save_profile(profile, profile_path);
        fill_buffer(summary, summary_size, profile_summary(profile));
    });
}

tgi_status tgi_run_calibrate_frames(const char* frames_dir, const char* profile_path, int jobs,
                                    char* summary, size_t summary_size) {
    return guarded([&] {
        tgi::require(frames_dir && profile_path, "tgi_run_calibrate_frames: null argument");
        const auto profile = tgi::run_calibrate_frames(frames_dir, std::nullopt, jobs);
        tgi::save_profile(profile, profile_path);
        fill_buffer(summary, summary_size, profile_summary(profile));
    });
}

tgi_status tgi_run_reconstruct(const char* config_json, const char* profile_path,
                               const char* out_dir, int jobs, char* summary,
                               size_t summary_size) {
    return guarded([&] {
        tgi::require(config_json && profile_path && out_dir, "tgi_run_reconstruct: null argument");
        const auto config = tgi::ExperimentConfig::from_json_text(config_json);
        const auto profile = tgi::load_profile(profile_path);
        const auto run = tgi::run_reconstruct(config, profile, jobs);
        tgi::write_reconstruction_csvs(run, config.signal, out_dir);
        fill_buffer(summary, summary_size, reconstruction_summary(run));
    });
}

tgi_status tgi_run_reconstruct_frames(const char* frames_dir, const char* profile_path,
                                      const char* out_dir, int jobs, char* summary,
                                      size_t summary_size) {
    return guarded([&] {
        tgi::require(frames_dir && profile_path && out_dir,
                     "tgi_run_reconstruct_frames: null argument");
        const auto profile = tgi::load_profile(profile_path);
        const auto run = tgi::run_reconstruct_frames(frames_dir, profile, jobs);
        // Truth comes from the manifest inside the frames directory.
        const auto config = tgi::load_manifest_config(frames_dir);
        tgi::write_reconstruction_csvs(run, config.signal, out_dir);
        fill_buffer(summary, summary_size, reconstruction_summary(run));
    });
}

tgi_status tgi_run_sweep(const char* config_json, const char* sweep_json, const char* csv_path,
                         int jobs) {
    return guarded([&] {
        tgi::require(config_json && sweep_json && csv_path, "tgi_run_sweep: null argument");
        const auto config = tgi::ExperimentConfig::from_json_text(config_json);
        const auto spec = tgi::SweepSpec::from_json_text(sweep_json);
        const auto rows = tgi::run_sweep(config, spec, jobs);
        tgi::write_sweep_csv(spec, rows, csv_path);
    });
}

tgi_status tgi_predict_text(const tgi_noise_params* params, int level_count, uint64_t ones_count,
                            int t_level, char* buffer, size_t buffer_size) {
    return guarded([&] {
        tgi::require(params && buffer, "tgi_predict_text: null argument");
        tgi::require(t_level == 0 || t_level == 1, "tgi_predict_text: T_n must be 0 or 1");
        const tgi::PredictReport rep =
            tgi::predict_report(to_noise(*params), level_count, static_cast<std::size_t>(ones_count),
                                static_cast<std::uint8_t>(t_level));
        char text[512];
        std::snprintf(text, sizeof(text),
                      "coincidences=%.6g\naccidental_std=%.6g\nsnr_full=%.6g\nsnr_approx=%.6g\n"
                      "snr_required=%.6g\nlow_flux=%s\n",
                      rep.coincidences, rep.accidental_sigma, rep.snr_full, rep.snr_approx,
                      rep.snr_required, rep.low_flux ? "yes" : "no (closed forms assume m << 1)");
        fill_buffer(buffer, buffer_size, text);
    });
}

}  // extern "C"
