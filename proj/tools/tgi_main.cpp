// tgi command-line front end: simulate / calibrate / reconstruct / sweep /
// predict over JSON experiment configs.  All functionality lives behind the
// shared-library C API.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "tgi/tgi.h"

namespace {

int fail_with(tgi_status status) {
    std::fprintf(stderr, "tgi: error: %s\n", tgi_last_error());
    return static_cast<int>(status);
}

bool read_text_file(const std::string& path, std::string& out) {
    std::ifstream in(path);
    if (!in) return false;
    std::ostringstream ss;
    ss << in.rdbuf();
    out = ss.str();
    return true;
}

struct ConfigText {
    std::string text;
    bool ok = false;
};

// Loads the config file and applies --seed/--method overrides through the API.
ConfigText load_config(const std::string& path, bool has_seed, std::uint64_t seed,
                       const std::string& method) {
    ConfigText out;
    std::string raw;
    if (!read_text_file(path, raw)) {
        std::fprintf(stderr, "tgi: error: cannot read config file: %s\n", path.c_str());
        return out;
    }
    if (!has_seed && method.empty()) {
        out.text = std::move(raw);
        out.ok = true;
        return out;
    }
    char* patched = nullptr;
    const tgi_status status = tgi_config_override(raw.c_str(), has_seed ? 1 : 0, seed,
                                                  method.empty() ? nullptr : method.c_str(),
                                                  &patched);
    if (status != TGI_OK) {
        std::fprintf(stderr, "tgi: error: %s\n", tgi_last_error());
        return out;
    }
    out.text = patched;
    tgi_string_free(patched);
    out.ok = true;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tgi - twin-photon temporal ghost imaging simulator"};
    app.require_subcommand(1);

    std::string config_path, frames_dir, profile_path, out_dir, sweep_path, method;
    std::uint64_t seed = 0;
    bool has_seed = false;
    int jobs = 1;

    auto add_common = [&](CLI::App* cmd, bool with_method) {
        cmd->add_option("--jobs", jobs, "worker threads (results are identical for any value)")
            ->check(CLI::Range(1, 1024));
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](const std::uint64_t& v) { seed = v; has_seed = true; },
               "override the master seed from the config");
        if (with_method)
            cmd->add_option("--method", method, "mean-shape removal: ensemble|gaussian")
                ->check(CLI::IsMember({"ensemble", "gaussian"}));
    };

    auto* sim = app.add_subcommand("simulate", "generate frames and a manifest");
    sim->add_option("--config", config_path, "experiment config (JSON)")->required();
    sim->add_option("--out", out_dir, "output directory")->required();
    add_common(sim, true);

    auto* cal = app.add_subcommand("calibrate", "estimate mean shapes, peak window and eta");
    cal->add_option("--config", config_path, "experiment config (JSON)");
    cal->add_option("--frames", frames_dir, "simulate output directory to calibrate from");
    cal->add_option("--profile", profile_path, "output calibration profile (TGIP)")->required();
    add_common(cal, true);

    auto* rec = app.add_subcommand("reconstruct", "recover the time signal and write CSVs");
    rec->add_option("--config", config_path, "experiment config (JSON)");
    rec->add_option("--frames", frames_dir, "simulate output directory to reconstruct from");
    rec->add_option("--profile", profile_path, "calibration profile (TGIP)")->required();
    rec->add_option("--out", out_dir, "output directory")->required();
    add_common(rec, true);

    auto* swp = app.add_subcommand("sweep", "replicate runs across a parameter grid");
    swp->add_option("--config", config_path, "base experiment config (JSON)")->required();
    swp->add_option("--sweep", sweep_path, "sweep spec (JSON)")->required();
    swp->add_option("--out", out_dir, "output directory")->required();
    add_common(swp, false);

    auto* pre = app.add_subcommand("predict", "evaluate the closed-form coincidence/SNR model");
    std::uint64_t p_pixels = 0, p_ones = 4;
    double p_bins = 80.0, p_ms = 0.0, p_mi = 0.0, p_eta = 0.0;
    int p_levels = 2, p_t = 1;
    pre->add_option("--pixels", p_pixels, "pixel count D")->required();
    pre->add_option("--bins", p_bins, "binning size B");
    pre->add_option("--mean-signal", p_ms, "integrated signal mean m_s")->required();
    pre->add_option("--mean-idler", p_mi, "idler mean per step m_i")->required();
    pre->add_option("--eta", p_eta, "equivalent quantum efficiency (window-adjusted)")->required();
    pre->add_option("--levels", p_levels, "signal level count L");
    pre->add_option("--ones", p_ones, "number of '1' steps M");
    pre->add_option("--t", p_t, "step transmission T_n (0 or 1)");

    CLI11_PARSE(app, argc, argv);

    char summary[512] = {0};

    if (sim->parsed()) {
        const ConfigText cfg = load_config(config_path, has_seed, seed, method);
        if (!cfg.ok) return 2;
        const tgi_status status = tgi_run_simulate(cfg.text.c_str(), out_dir.c_str(), jobs);
        if (status != TGI_OK) return fail_with(status);
        std::printf("simulate: wrote frames and manifest to %s\n", out_dir.c_str());
        return 0;
    }

    if (cal->parsed()) {
        if (config_path.empty() == frames_dir.empty()) {
            std::fprintf(stderr, "tgi: error: calibrate needs exactly one of --config/--frames\n");
            return 2;
        }
        tgi_status status;
        if (!config_path.empty()) {
            const ConfigText cfg = load_config(config_path, has_seed, seed, method);
            if (!cfg.ok) return 2;
            status = tgi_run_calibrate(cfg.text.c_str(), profile_path.c_str(), jobs, summary,
                                       sizeof(summary));
        } else {
            status = tgi_run_calibrate_frames(frames_dir.c_str(), profile_path.c_str(), jobs,
                                              summary, sizeof(summary));
        }
        if (status != TGI_OK) return fail_with(status);
        std::printf("calibrate: %s\nprofile written to %s\n", summary, profile_path.c_str());
        return 0;
    }

    if (rec->parsed()) {
        if (config_path.empty() == frames_dir.empty()) {
            std::fprintf(stderr, "tgi: error: reconstruct needs exactly one of --config/--frames\n");
            return 2;
        }
        tgi_status status;
        if (!config_path.empty()) {
            const ConfigText cfg = load_config(config_path, has_seed, seed, method);
            if (!cfg.ok) return 2;
            status = tgi_run_reconstruct(cfg.text.c_str(), profile_path.c_str(), out_dir.c_str(),
                                         jobs, summary, sizeof(summary));
        } else {
            status = tgi_run_reconstruct_frames(frames_dir.c_str(), profile_path.c_str(),
                                                out_dir.c_str(), jobs, summary, sizeof(summary));
        }
        if (status != TGI_OK) return fail_with(status);
        std::printf("reconstruct: %s\nCSV results written to %s\n", summary, out_dir.c_str());
        return 0;
    }

    if (swp->parsed()) {
        const ConfigText cfg = load_config(config_path, has_seed, seed, method);
        if (!cfg.ok) return 2;
        std::string sweep_text;
        if (!read_text_file(sweep_path, sweep_text)) {
            std::fprintf(stderr, "tgi: error: cannot read sweep spec: %s\n", sweep_path.c_str());
            return 2;
        }
        const std::string csv = out_dir + "/sweep.csv";
        const tgi_status status =
            tgi_run_sweep(cfg.text.c_str(), sweep_text.c_str(), csv.c_str(), jobs);
        if (status != TGI_OK) return fail_with(status);
        std::printf("sweep: table written to %s\n", csv.c_str());
        return 0;
    }

    if (pre->parsed()) {
        tgi_noise_params params{p_pixels, p_bins, p_ms, p_mi, p_eta};
        char text[512] = {0};
        const tgi_status status =
            tgi_predict_text(&params, p_levels, p_ones, p_t, text, sizeof(text));
        if (status != TGI_OK) return fail_with(status);
        std::fputs(text, stdout);
        return 0;
    }

    return 2;
}
