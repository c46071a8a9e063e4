/* tgi — twin-photon temporal ghost imaging simulator, C API.
 *
 * All functions returning tgi_status report TGI_OK on success; on failure a
 * per-thread message is available through tgi_last_error().  Objects returned
 * through out-parameters are owned by the caller and released with the
 * matching *_free function.  Nonzero status values match the CLI exit codes.
 */
#ifndef TGI_H
#define TGI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef TGI_API
#if defined(_WIN32)
#define TGI_API
#else
#define TGI_API __attribute__((visibility("default")))
#endif
#endif

typedef enum tgi_status {
    TGI_OK = 0,
    TGI_ERR_VALIDATION = 2,
    TGI_ERR_IO = 3,
    TGI_ERR_INSUFFICIENT_STATS = 4,
    TGI_ERR_UNKNOWN = 9
} tgi_status;

TGI_API const char* tgi_version(void);
TGI_API const char* tgi_last_error(void);

/* ---- plain data ---------------------------------------------------------- */

typedef struct tgi_geometry {
    uint32_t width;
    uint32_t height;
} tgi_geometry;

typedef enum tgi_envelope_kind { TGI_ENVELOPE_FLAT = 0, TGI_ENVELOPE_GAUSSIAN = 1 } tgi_envelope_kind;

typedef struct tgi_source_params {
    double pair_rate;            /* mean photon pairs per pixel per step */
    double transmission_signal;  /* signal-arm detection probability at T_n=1 */
    double transmission_idler;   /* idler-arm detection probability */
    double jitter_sigma_x;       /* twin position offset spread, pixels */
    double jitter_sigma_y;
    double background_signal;    /* uncorrelated singles per pixel per step */
    double background_idler;
    tgi_envelope_kind envelope;
    double envelope_center_x;    /* gaussian envelope only */
    double envelope_center_y;
    double envelope_sigma_x;
    double envelope_sigma_y;
} tgi_source_params;

typedef struct tgi_window {
    int32_t center_dx;
    int32_t center_dy;
    uint32_t extent_x;
    uint32_t extent_y;
} tgi_window;

typedef struct tgi_noise_params {
    uint64_t pixel_count; /* D */
    double bin_count;     /* B */
    double mean_signal;   /* m_s of the integrated signal image */
    double mean_idler;    /* m_i per idler image */
    double eta;           /* equivalent quantum efficiency (window-adjusted) */
} tgi_noise_params;

/* ---- opaque handles ------------------------------------------------------ */

typedef struct tgi_frame tgi_frame;     /* binary photon-counting frame */
typedef struct tgi_image tgi_image;     /* per-pixel real image */
typedef struct tgi_map tgi_map;         /* cross-covariance map */
typedef struct tgi_profile tgi_profile; /* calibration profile */

/* ---- frames (TGIF v1 files) ---------------------------------------------- */

TGI_API tgi_status tgi_frame_load(const char* path, tgi_frame** out);
TGI_API tgi_status tgi_frame_save(const tgi_frame* frame, const char* path);
TGI_API tgi_geometry tgi_frame_geometry(const tgi_frame* frame);
TGI_API uint64_t tgi_frame_detected_count(const tgi_frame* frame);
/* Row-major, one byte per pixel, 0x00/0x01; valid until tgi_frame_free. */
TGI_API const uint8_t* tgi_frame_pixels(const tgi_frame* frame);
TGI_API void tgi_frame_free(tgi_frame* frame);

/* ---- generation ----------------------------------------------------------- */

/* Stream seed for (trial, step) under a master seed. */
TGI_API uint64_t tgi_step_seed(uint64_t master, uint64_t trial, uint64_t step);

TGI_API tgi_status tgi_generate_step(tgi_geometry geometry, const tgi_source_params* source,
                                     int t_level, uint64_t seed, tgi_frame** signal_out,
                                     tgi_frame** idler_out);
/* Pixelwise OR of the per-step signal frames. */
TGI_API tgi_status tgi_integrate_signal(const tgi_frame* const* frames, size_t count,
                                        tgi_frame** out);

/* ---- mean shapes, residuals, correlation ---------------------------------- */

TGI_API tgi_status tgi_mean_shape(const tgi_frame* const* frames, size_t count, tgi_image** out);
TGI_API tgi_status tgi_subtract_shape(const tgi_frame* frame, const tgi_image* shape,
                                      tgi_image** residual_out);
TGI_API tgi_geometry tgi_image_geometry(const tgi_image* image);
/* Row-major doubles; valid until tgi_image_free. */
TGI_API const double* tgi_image_values(const tgi_image* image);
TGI_API tgi_status tgi_image_save(const tgi_image* image, const char* path); /* TGIM v1 */
TGI_API tgi_status tgi_image_load(const char* path, tgi_image** out);
TGI_API void tgi_image_free(tgi_image* image);

/* Coincidence counts at every shift |dx|<=max_dx, |dy|<=max_dy; pass nonzero
 * `normalized` for the Pearson-coefficient variant. */
TGI_API tgi_status tgi_cross_covariance_map(const tgi_image* signal_residual,
                                            const tgi_image* idler_residual, int max_dx,
                                            int max_dy, int normalized, tgi_map** out);
TGI_API tgi_status tgi_map_value(const tgi_map* map, int dx, int dy, double* out);
TGI_API tgi_status tgi_map_export_csv(const tgi_map* map, const char* path);
TGI_API tgi_status tgi_binned_coincidences(const tgi_map* map, const tgi_window* window,
                                           double* out);
TGI_API tgi_status tgi_locate_peak(const tgi_map* map, uint32_t extent_x, uint32_t extent_y,
                                   tgi_window* out);
TGI_API void tgi_map_free(tgi_map* map);

/* Integrated-peak equivalent quantum efficiency from twin pairs; pass NULL
 * support for a full search.  Needs at least 2 pairs. */
TGI_API tgi_status tgi_estimate_eta(const tgi_frame* const* signals,
                                    const tgi_frame* const* idlers, size_t pairs,
                                    const tgi_window* support, int max_dx, int max_dy,
                                    double* eta_out);

/* ---- closed-form predictors ------------------------------------------------ */

TGI_API tgi_status tgi_accidental_std(const tgi_noise_params* params, double* out);
TGI_API tgi_status tgi_predicted_coincidences(int t_level, const tgi_noise_params* params,
                                              double* out);
TGI_API tgi_status tgi_predicted_snr(int t_level, const tgi_noise_params* params,
                                     uint64_t ones_count, double* full_out, double* approx_out);
TGI_API tgi_status tgi_required_snr(int level_count, int t_level, double* out);

/* ---- calibration profiles (TGIP v1 files) ---------------------------------- */

TGI_API tgi_status tgi_profile_load(const char* path, tgi_profile** out);
TGI_API tgi_status tgi_profile_save(const tgi_profile* profile, const char* path);
TGI_API double tgi_profile_eta(const tgi_profile* profile);
TGI_API double tgi_profile_eta_window(const tgi_profile* profile);
TGI_API double tgi_profile_capture_fraction(const tgi_profile* profile);
TGI_API tgi_window tgi_profile_window(const tgi_profile* profile);
TGI_API void tgi_profile_free(tgi_profile* profile);

/* ---- whole-pipeline runs ---------------------------------------------------
 * Configs and sweep specs are JSON text (see the CLI reference for the
 * schema; unknown keys are rejected).  `jobs` bounds worker threads; results
 * are identical for any value.  Optional `summary` buffers receive a short
 * human-readable report. */

TGI_API tgi_status tgi_config_override(const char* config_json, int has_seed, uint64_t seed,
                                       const char* method_or_null, char** out_json);
TGI_API void tgi_string_free(char* text);

TGI_API tgi_status tgi_run_simulate(const char* config_json, const char* out_dir, int jobs);
TGI_API tgi_status tgi_run_calibrate(const char* config_json, const char* profile_path, int jobs,
                                     char* summary, size_t summary_size);
TGI_API tgi_status tgi_run_calibrate_frames(const char* frames_dir, const char* profile_path,
                                            int jobs, char* summary, size_t summary_size);
TGI_API tgi_status tgi_run_reconstruct(const char* config_json, const char* profile_path,
                                       const char* out_dir, int jobs, char* summary,
                                       size_t summary_size);
TGI_API tgi_status tgi_run_reconstruct_frames(const char* frames_dir, const char* profile_path,
                                              const char* out_dir, int jobs, char* summary,
                                              size_t summary_size);
TGI_API tgi_status tgi_run_sweep(const char* config_json, const char* sweep_json,
                                 const char* csv_path, int jobs);
TGI_API tgi_status tgi_predict_text(const tgi_noise_params* params, int level_count,
                                    uint64_t ones_count, int t_level, char* buffer,
                                    size_t buffer_size);

#ifdef __cplusplus
}
#endif

#endif /* TGI_H */
