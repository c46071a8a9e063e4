#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "calibration.hpp"
#include "generator.hpp"
#include "reconstruction.hpp"

namespace tgi {

struct CalibrationConfig {
    std::size_t pairs = 900;      // twin pairs acquired at transmission 1
    std::size_t min_pairs = 900;  // acquisition floor
    std::uint32_t window_extent_x = 16;
    std::uint32_t window_extent_y = 5;
    int max_shift_x = 24;
    int max_shift_y = 12;

    void validate() const;
};

enum class DecodeMode { ensemble, blind };

struct ExperimentConfig {
    DetectorGeometry geometry;
    SourceParams source;
    TimeSignal signal;
    std::size_t trials = 1;
    std::uint64_t master_seed = 0;
    CalibrationConfig calibration;
    MeanMethod method = MeanMethod::ensemble;
    DecodeMode decode = DecodeMode::ensemble;
    std::string output;  // optional default output directory

    void validate() const;
    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig load(const std::filesystem::path& path);
    std::string to_json_text() const;  // canonical (sorted keys)
    std::uint64_t hash() const;        // FNV-1a over the canonical text
};

// Seed discipline: experiment frames draw from step_seed(master, trial, step);
// calibration pairs from step_seed(master, 2^63 + pair, 0); sweep replicates
// re-derive a master per (point, replicate).  All streams are independent of
// worker count and scheduling.
inline std::uint64_t calibration_pair_seed(std::uint64_t master, std::uint64_t pair) {
    return step_seed(master, 0x8000000000000000ULL + pair, 0);
}
inline std::uint64_t sweep_replicate_seed(std::uint64_t master, std::size_t point,
                                          std::size_t replicate) {
    std::uint64_t h = splitmix64(master ^ 0x5EEDBA5EDB16C0DEULL);
    h = splitmix64(h ^ point);
    return splitmix64(h ^ (replicate << 20));
}

std::uint64_t fnv1a64(std::string_view text);

// Reads back the config embedded in a simulate() output manifest (and checks
// the recorded hash).
ExperimentConfig load_manifest_config(const std::filesystem::path& frames_dir);

// ---- calibrate ------------------------------------------------------------

CalibrationProfile run_calibrate(const ExperimentConfig& config, int jobs);
// Builds the profile from an existing simulate() output directory, using all
// (trial, step) pairs whose step transmits (T_n = 1).  The acquisition floor
// comes from the manifest config unless overridden.
CalibrationProfile run_calibrate_frames(const std::filesystem::path& frames_dir,
                                        std::optional<std::size_t> min_pairs_override, int jobs);

// ---- simulate -------------------------------------------------------------

// Writes TGIF frames for every (trial, step, arm), the integrated signal
// frame per trial, and manifest.json.  Reruns are byte-identical.
void run_simulate(const ExperimentConfig& config, const std::filesystem::path& out_dir, int jobs);

// ---- reconstruct ----------------------------------------------------------

struct ReconstructionRun {
    std::vector<CoincidenceSeries> series;
    std::vector<DecodedSignal> decoded;
    EnsembleMetrics metrics;      // valid when trials >= 2
    bool metrics_valid = false;
    double mean_signal_flux = 0;  // measured mean of integrated signal frames
    double mean_idler_flux = 0;   // measured mean of idler frames
    NoiseModelParams noise;       // parameters behind metrics.predicted
};

ReconstructionRun run_reconstruct(const ExperimentConfig& config,
                                  const CalibrationProfile& profile, int jobs);
ReconstructionRun run_reconstruct_frames(const std::filesystem::path& frames_dir,
                                         const CalibrationProfile& profile, int jobs);

void write_reconstruction_csvs(const ReconstructionRun& run, const TimeSignal& truth,
                               const std::filesystem::path& out_dir);

// ---- sweep ----------------------------------------------------------------

struct SweepSpec {
    std::string parameter;  // eta-equivalent | m_i | B | M | N_steps | D
    std::vector<double> values;
    std::size_t replicates = 1;

    void validate() const;
    static SweepSpec from_json_text(const std::string& text);
    static SweepSpec load(const std::filesystem::path& path);
};

struct SweepRow {
    double value = 0;
    std::size_t replicates = 0;
    double snr_mean = 0, snr_min = 0, snr_max = 0;
    double error_rate = 0;
    double snr_pred_full = 0, snr_pred_approx = 0;
    double eta_window = 0, capture_fraction = 0;
    double accidental_std_measured = 0;  // pooled std of the "0" steps
};

ExperimentConfig apply_sweep_value(const ExperimentConfig& base, const std::string& parameter,
                                   double value);
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const SweepSpec& spec, int jobs);
void write_sweep_csv(const SweepSpec& spec, const std::vector<SweepRow>& rows,
                     const std::filesystem::path& path);

// ---- predict --------------------------------------------------------------

struct PredictReport {
    double coincidences = 0;
    double accidental_sigma = 0;
    double snr_full = 0;
    double snr_approx = 0;
    double snr_required = 0;
    bool low_flux = true;
};
PredictReport predict_report(const NoiseModelParams& params, int level_count,
                             std::size_t ones_count, std::uint8_t t_level);

}  // namespace tgi
