#include "calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "frame_io.hpp"
#include "parallel.hpp"

namespace tgi {

MeanImage estimate_mean_shape(std::span<const PhotonFrame> frames) {
    require(!frames.empty(), "estimate_mean_shape: empty frame sequence");
    const DetectorGeometry geom = frames.front().geometry();
    std::vector<std::uint64_t> counts(geom.pixel_count(), 0);
    for (const auto& f : frames) {
        require(f.geometry() == geom, "estimate_mean_shape: geometry mismatch");
        const auto& px = f.pixels();
        for (std::size_t i = 0; i < px.size(); ++i) counts[i] += px[i];
    }
    std::vector<double> mean(counts.size());
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (std::size_t i = 0; i < counts.size(); ++i) mean[i] = static_cast<double>(counts[i]) * inv;
    return MeanImage{RealImage(geom, std::move(mean)), frames.size()};
}

namespace {

// 6x6 normal-equation solve by Cholesky; returns false if not positive definite.
bool solve6(std::array<double, 36>& a, std::array<double, 6>& b) {
    std::array<double, 36> l{};
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[i * 6 + j];
            for (int k = 0; k < j; ++k) s -= l[i * 6 + k] * l[j * 6 + k];
            if (i == j) {
                if (s <= 0.0) return false;
                l[i * 6 + i] = std::sqrt(s);
            } else {
                l[i * 6 + j] = s / l[j * 6 + j];
            }
        }
    }
    std::array<double, 6> y{};
    for (int i = 0; i < 6; ++i) {
        double s = b[i];
        for (int k = 0; k < i; ++k) s -= l[i * 6 + k] * y[k];
        y[i] = s / l[i * 6 + i];
    }
    for (int i = 5; i >= 0; --i) {
        double s = y[i];
        for (int k = i + 1; k < 6; ++k) s -= l[k * 6 + i] * b[k];
        b[i] = s / l[i * 6 + i];
    }
    return true;
}

double fit_cost(const RealImage& img, const GaussianShape& g) {
    double cost = 0.0;
    for (std::uint32_t y = 0; y < img.height(); ++y)
        for (std::uint32_t x = 0; x < img.width(); ++x) {
            const double r = g.evaluate(x, y) - img.at(x, y);
            cost += r * r;
        }
    return cost;
}

GaussianShape flat_fit(const MeanImage& mean) {
    GaussianShape g;
    g.amplitude = 0.0;
    g.offset = mean.image.mean();
    g.center_x = (mean.image.width() - 1) / 2.0;
    g.center_y = (mean.image.height() - 1) / 2.0;
    g.sigma_x = g.sigma_y = static_cast<double>(std::max(mean.image.width(), mean.image.height()));
    g.degenerate = true;
    return g;
}

}  // namespace

GaussianShape fit_gaussian_shape(const MeanImage& mean) {
    const RealImage& img = mean.image;
    require(img.size() >= 1, "fit_gaussian_shape: empty image");
    double vmin = img.values()[0], vmax = vmin, total = 0.0;
    for (double v : img.values()) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        total += v;
    }
    require(total > 0.0, "fit_gaussian_shape: image has zero total intensity");
    if (vmax - vmin <= 1e-12 * std::max(1.0, std::abs(vmax))) return flat_fit(mean);

    // Moment seed above the floor value.
    const std::uint32_t w = img.width(), h = img.height();
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            const double m = img.at(x, y) - vmin;
            mass += m;
            mx += m * x;
            my += m * y;
        }
    if (mass <= 0.0) return flat_fit(mean);
    const double cx0 = mx / mass, cy0 = my / mass;
    double vx = 0.0, vy = 0.0;
    for (std::uint32_t y = 0; y < h; ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            const double m = img.at(x, y) - vmin;
            vx += m * (x - cx0) * (x - cx0);
            vy += m * (y - cy0) * (y - cy0);
        }
    GaussianShape g;
    g.amplitude = vmax - vmin;
    g.center_x = cx0;
    g.center_y = cy0;
    g.sigma_x = std::max(0.5, std::sqrt(vx / mass));
    g.sigma_y = std::max(0.5, std::sqrt(vy / mass));
    g.offset = vmin;
    g.degenerate = false;

    // Levenberg-Marquardt on (A, cx, cy, sx, sy, o).
    double lambda = 1e-3;
    double cost = fit_cost(img, g);
    for (int iter = 0; iter < 200; ++iter) {
        std::array<double, 36> jtj{};
        std::array<double, 6> jtr{};
        for (std::uint32_t y = 0; y < h; ++y)
            for (std::uint32_t x = 0; x < w; ++x) {
                const double ux = (x - g.center_x) / g.sigma_x;
                const double uy = (y - g.center_y) / g.sigma_y;
                const double e = std::exp(-0.5 * (ux * ux + uy * uy));
                const double r = g.amplitude * e + g.offset - img.at(x, y);
                const std::array<double, 6> j = {
                    e,
                    g.amplitude * e * ux / g.sigma_x,
                    g.amplitude * e * uy / g.sigma_y,
                    g.amplitude * e * ux * ux / g.sigma_x,
                    g.amplitude * e * uy * uy / g.sigma_y,
                    1.0,
                };
                for (int a = 0; a < 6; ++a) {
                    jtr[a] += j[a] * r;
                    for (int b = 0; b <= a; ++b) jtj[a * 6 + b] += j[a] * j[b];
                }
            }
        for (int a = 0; a < 6; ++a)
            for (int b = a + 1; b < 6; ++b) jtj[a * 6 + b] = jtj[b * 6 + a];

        bool improved = false;
        for (int attempt = 0; attempt < 12 && !improved; ++attempt) {
            std::array<double, 36> damped = jtj;
            for (int a = 0; a < 6; ++a) damped[a * 6 + a] *= 1.0 + lambda;
            std::array<double, 6> step = jtr;
            if (!solve6(damped, step)) {
                lambda *= 10.0;
                continue;
            }
            GaussianShape cand = g;
            cand.amplitude -= step[0];
            cand.center_x -= step[1];
            cand.center_y -= step[2];
            cand.sigma_x -= step[3];
            cand.sigma_y -= step[4];
            cand.offset -= step[5];
            if (cand.sigma_x <= 1e-3 || cand.sigma_y <= 1e-3) {
                lambda *= 10.0;
                continue;
            }
            const double cand_cost = fit_cost(img, cand);
            if (cand_cost < cost) {
                const double gain = (cost - cand_cost) / std::max(cost, 1e-300);
                g = cand;
                cost = cand_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                improved = true;
                if (gain < 1e-14) iter = 200;
            } else {
                lambda *= 10.0;
            }
        }
        if (!improved) break;
    }

    // Never report a fit worse than the best flat fit.
    const GaussianShape flat = flat_fit(mean);
    if (g.amplitude < 0.0 || fit_cost(img, flat) < cost) return flat;
    return g;
}

ResidualImage subtract_shape(const PhotonFrame& frame, const MeanImage& shape) {
    require(frame.geometry() == shape.geometry(), "subtract_shape: geometry mismatch");
    std::vector<double> out(frame.size());
    const auto& px = frame.pixels();
    const auto& mv = shape.image.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(px[i]) - mv[i];
    return ResidualImage{RealImage(frame.geometry(), std::move(out))};
}

ResidualImage subtract_shape(const PhotonFrame& frame, const GaussianShape& shape) {
    std::vector<double> out(frame.size());
    const auto& px = frame.pixels();
    const std::uint32_t w = frame.width();
    for (std::uint32_t y = 0; y < frame.height(); ++y)
        for (std::uint32_t x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            out[i] = static_cast<double>(px[i]) - shape.evaluate(x, y);
        }
    return ResidualImage{RealImage(frame.geometry(), std::move(out))};
}

namespace {

std::size_t overlap_count(const DetectorGeometry& geom, int dx, int dy) {
    const std::int64_t w = geom.width_px - std::abs(dx);
    const std::int64_t h = geom.height_px - std::abs(dy);
    return static_cast<std::size_t>(std::max<std::int64_t>(w, 0) * std::max<std::int64_t>(h, 0));
}

}  // namespace

EtaAnalysis analyze_twin_ensemble(std::span<const PhotonFrame> signals,
                                  std::span<const PhotonFrame> idlers, int max_dx, int max_dy,
                                  MeanMethod method, int jobs) {
    require(signals.size() == idlers.size(), "twin ensemble: arm lengths differ");
    if (signals.size() < 2) fail_insufficient("twin ensemble: need at least 2 pairs");
    const std::size_t n = signals.size();
    const DetectorGeometry geom = signals.front().geometry();

    const MeanImage mean_s = estimate_mean_shape(signals);
    const MeanImage mean_i = estimate_mean_shape(idlers);
    for (const auto& f : idlers)
        require(f.geometry() == geom, "twin ensemble: geometry mismatch across arms");

    const double ms = mean_s.image.mean();
    const double mi = mean_i.image.mean();
    if (ms <= 0.0 || mi <= 0.0) fail_insufficient("twin ensemble: an arm has no detections");
    if (ms >= 1.0 || mi >= 1.0) fail_insufficient("twin ensemble: an arm is saturated");
    const double rate_i = -std::log1p(-mi);
    const double norm = rate_i * (1.0 - ms) * (1.0 - mi);

    // Per-pair count maps, folded in pair order for bit-stable averages.
    std::vector<CorrelationMap> maps(n);
    parallel_for(n, jobs, [&](std::size_t k) {
        ResidualImage rs = method == MeanMethod::ensemble
                               ? subtract_shape(signals[k], mean_s)
                               : subtract_shape(signals[k], fit_gaussian_shape(MeanImage{
                                     RealImage(geom, std::vector<double>(
                                         signals[k].pixels().begin(), signals[k].pixels().end())),
                                     1}));
        ResidualImage ri = method == MeanMethod::ensemble
                               ? subtract_shape(idlers[k], mean_i)
                               : subtract_shape(idlers[k], fit_gaussian_shape(MeanImage{
                                     RealImage(geom, std::vector<double>(
                                         idlers[k].pixels().begin(), idlers[k].pixels().end())),
                                     1}));
        maps[k] = cross_covariance_map(rs, ri, max_dx, max_dy, false);
    });

    EtaAnalysis out;
    out.averaged = maps.front();
    std::fill(out.averaged.values.begin(), out.averaged.values.end(), 0.0);
    for (const auto& m : maps)
        for (std::size_t i = 0; i < m.values.size(); ++i) out.averaged.values[i] += m.values[i];
    out.averaged.normalized = true;
    for (int dy = -max_dy; dy <= max_dy; ++dy)
        for (int dx = -max_dx; dx <= max_dx; ++dx) {
            const double ov = static_cast<double>(overlap_count(geom, dx, dy));
            out.averaged.at(dx, dy) /= static_cast<double>(n) * ov * norm;
        }

    // Peak/background separation: pixels above background mean + 5 std, with
    // background statistics re-estimated away from the first-pass support,
    // then a 2 px dilation to pick up the peak skirts.
    const auto& vals = out.averaged.values;
    const int nx = out.averaged.nx(), ny = out.averaged.ny();
    auto stats_over = [&](const std::vector<std::uint8_t>& exclude) {
        double sum = 0.0, sum2 = 0.0;
        std::size_t count = 0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            if (!exclude.empty() && exclude[i]) continue;
            sum += vals[i];
            sum2 += vals[i] * vals[i];
            ++count;
        }
        const double mean = sum / static_cast<double>(count);
        const double var = std::max(0.0, sum2 / static_cast<double>(count) - mean * mean);
        return std::pair<double, double>(mean, std::sqrt(var));
    };
    auto dilate = [&](const std::vector<std::uint8_t>& mask, int radius) {
        std::vector<std::uint8_t> grown(mask.size(), 0);
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                if (!mask[static_cast<std::size_t>(y) * nx + x]) continue;
                for (int yy = std::max(0, y - radius); yy <= std::min(ny - 1, y + radius); ++yy)
                    for (int xx = std::max(0, x - radius); xx <= std::min(nx - 1, x + radius); ++xx)
                        grown[static_cast<std::size_t>(yy) * nx + xx] = 1;
            }
        return grown;
    };

    auto [m1, s1] = stats_over({});
    std::vector<std::uint8_t> first(vals.size(), 0);
    for (std::size_t i = 0; i < vals.size(); ++i) first[i] = vals[i] > m1 + 5.0 * s1 ? 1 : 0;
    const auto excluded = dilate(first, 2);
    auto [m2, s2] = stats_over(excluded);
    std::vector<std::uint8_t> core(vals.size(), 0);
    for (std::size_t i = 0; i < vals.size(); ++i) core[i] = vals[i] > m2 + 5.0 * s2 ? 1 : 0;
    out.support = dilate(core, 2);
    out.background_mean = m2;
    out.background_std = s2;

    double integral = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i)
        if (out.support[i]) integral += vals[i] - m2;
    out.full.peak_integral = integral;
    out.full.eta = std::clamp(integral, 0.0, 1.0);
    out.full.frames_used = n;
    return out;
}

EtaEstimate window_eta(const EtaAnalysis& analysis, const PeakWindow& window) {
    window.validate();
    const auto& map = analysis.averaged;
    require(map.contains(window.x_lo(), window.y_lo()) &&
                map.contains(window.x_hi(), window.y_hi()),
            "window_eta: window outside analyzed displacement range");
    double integral = 0.0;
    for (int dy = window.y_lo(); dy <= window.y_hi(); ++dy)
        for (int dx = window.x_lo(); dx <= window.x_hi(); ++dx)
            integral += map.at(dx, dy) - analysis.background_mean;
    EtaEstimate est;
    est.peak_integral = integral;
    est.eta = std::clamp(integral, 0.0, 1.0);
    est.frames_used = analysis.full.frames_used;
    return est;
}

EtaEstimate estimate_eta(std::span<const PhotonFrame> signals,
                         std::span<const PhotonFrame> idlers,
                         std::optional<PeakWindow> support, int max_dx, int max_dy,
                         MeanMethod method) {
    const EtaAnalysis analysis = analyze_twin_ensemble(signals, idlers, max_dx, max_dy, method);
    return support ? window_eta(analysis, *support) : analysis.full;
}

PeakWindow locate_peak(const CorrelationMap& avg_map, std::uint32_t extent_x,
                       std::uint32_t extent_y) {
    require(extent_x >= 1 && extent_y >= 1, "locate_peak: extents must be >= 1");
    require(avg_map.nx() >= static_cast<int>(extent_x) && avg_map.ny() >= static_cast<int>(extent_y),
            "locate_peak: map smaller than requested extent");
    int best_dx = avg_map.dx_min, best_dy = avg_map.dy_min;
    double best = -std::numeric_limits<double>::infinity();
    for (int dx = avg_map.dx_min; dx <= avg_map.dx_max; ++dx)
        for (int dy = avg_map.dy_min; dy <= avg_map.dy_max; ++dy) {
            const double v = avg_map.at(dx, dy);
            if (v > best) {
                best = v;
                best_dx = dx;
                best_dy = dy;
            }
        }
    PeakWindow window{best_dx, best_dy, extent_x, extent_y};
    require(avg_map.contains(window.x_lo(), window.y_lo()) &&
                avg_map.contains(window.x_hi(), window.y_hi()),
            "locate_peak: centered window does not fit inside the map");
    return window;
}

void save_profile(const CalibrationProfile& profile, const std::filesystem::path& path) {
    nlohmann::json j;
    j["geometry"] = {{"width", profile.geometry.width_px}, {"height", profile.geometry.height_px}};
    j["window"] = {{"center_dx", profile.window.center_dx},
                   {"center_dy", profile.window.center_dy},
                   {"extent_x", profile.window.extent_x},
                   {"extent_y", profile.window.extent_y}};
    j["eta"] = {{"eta", profile.eta_full.eta},
                {"peak_integral", profile.eta_full.peak_integral},
                {"frames_used", profile.eta_full.frames_used}};
    j["eta_window"] = profile.eta_window;
    j["capture_fraction"] = profile.capture_fraction;
    j["mean_flux_signal"] = profile.mean_flux_signal;
    j["mean_flux_idler"] = profile.mean_flux_idler;
    j["mean_samples_signal"] = profile.mean_signal.sample_count;
    j["mean_samples_idler"] = profile.mean_idler.sample_count;
    j["method"] = profile.method;
    j["config_hash"] = profile.config_hash;
    const std::string header = j.dump();

    const auto blob_s = encode_real_image(profile.mean_signal.image);
    const auto blob_i = encode_real_image(profile.mean_idler.image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_io("cannot open for writing: " + path.string());
    out << "TGIP v1\n" << header.size() << "\n" << header;
    out.write(reinterpret_cast<const char*>(blob_s.data()), static_cast<std::streamsize>(blob_s.size()));
    out.write(reinterpret_cast<const char*>(blob_i.data()), static_cast<std::streamsize>(blob_i.size()));
    if (!out) fail_io("write failed: " + path.string());
}

CalibrationProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail_io("cannot open profile: " + path.string());
    std::string magic_line;
    if (!std::getline(in, magic_line) || magic_line != "TGIP v1")
        fail_io("bad profile magic: " + path.string());
    std::string len_line;
    if (!std::getline(in, len_line)) fail_io("truncated profile header: " + path.string());
    std::size_t header_len = 0;
    try {
        header_len = std::stoul(len_line);
    } catch (const std::exception&) {
        fail_io("bad profile header length: " + path.string());
    }
    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) fail_io("truncated profile header: " + path.string());

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        fail_io("bad profile header json: " + std::string(e.what()));
    }

    CalibrationProfile p;
    try {
        p.geometry = DetectorGeometry{j.at("geometry").at("width").get<std::uint32_t>(),
                                      j.at("geometry").at("height").get<std::uint32_t>()};
        p.window = PeakWindow{j.at("window").at("center_dx").get<int>(),
                              j.at("window").at("center_dy").get<int>(),
                              j.at("window").at("extent_x").get<std::uint32_t>(),
                              j.at("window").at("extent_y").get<std::uint32_t>()};
        p.eta_full = EtaEstimate{j.at("eta").at("eta").get<double>(),
                                 j.at("eta").at("peak_integral").get<double>(),
                                 j.at("eta").at("frames_used").get<std::size_t>()};
        p.eta_window = j.at("eta_window").get<double>();
        p.capture_fraction = j.at("capture_fraction").get<double>();
        p.mean_flux_signal = j.at("mean_flux_signal").get<double>();
        p.mean_flux_idler = j.at("mean_flux_idler").get<double>();
        p.method = j.at("method").get<std::string>();
        p.config_hash = j.at("config_hash").get<std::uint64_t>();
        const auto samples_s = j.at("mean_samples_signal").get<std::size_t>();
        const auto samples_i = j.at("mean_samples_idler").get<std::size_t>();

        const std::size_t blob_size = 13 + p.geometry.pixel_count() * 8;
        std::vector<std::uint8_t> blob(blob_size);
        in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_size));
        if (!in) fail_io("truncated mean raster: " + path.string());
        p.mean_signal = MeanImage{decode_real_image(blob.data(), blob.size()), samples_s};
        in.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(blob_size));
        if (!in) fail_io("truncated mean raster: " + path.string());
        p.mean_idler = MeanImage{decode_real_image(blob.data(), blob.size()), samples_i};
    } catch (const nlohmann::json::exception& e) {
        fail_io("bad profile field: " + std::string(e.what()));
    }
    require(p.mean_signal.geometry() == p.geometry && p.mean_idler.geometry() == p.geometry,
            "profile: mean raster geometry mismatch");
    return p;
}

}  // namespace tgi
