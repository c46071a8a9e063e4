#include "correlation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <mutex>

namespace tgi {
namespace {

std::mutex& fftw_plan_mutex() {
    static std::mutex m;
    return m;
}

// Smallest 5-smooth integer >= n; FFTW is fastest on these sizes.
int good_fft_size(int n) {
    for (int c = n;; ++c) {
        int r = c;
        for (int f : {2, 3, 5})
            while (r % f == 0) r /= f;
        if (r == 1) return c;
    }
}

// Per-shift overlap rectangle in the signal image: x in [x0,x1), y in [y0,y1).
struct Overlap {
    int x0, x1, y0, y1;
};
Overlap overlap_rect(int w, int h, int dx, int dy) {
    return Overlap{std::max(0, -dx), w - std::max(0, dx), std::max(0, -dy), h - std::max(0, dy)};
}

// Prefix sums for O(1) rectangle sums of x*x (normalization support).
class PrefixSquares {
public:
    PrefixSquares(const std::vector<double>& v, int w, int h) : w_(w) {
        p_.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double sq = v[static_cast<std::size_t>(y) * w + x] *
                                  v[static_cast<std::size_t>(y) * w + x];
                at(x + 1, y + 1) = sq + at(x, y + 1) + at(x + 1, y) - at(x, y);
            }
    }
    // Sum over [x0,x1) x [y0,y1).
    double rect(int x0, int x1, int y0, int y1) const {
        return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
    }

private:
    double& at(int x, int y) { return p_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
    double at(int x, int y) const { return p_[static_cast<std::size_t>(y) * (w_ + 1) + x]; }
    int w_;
    std::vector<double> p_;
};

void fill_direct(const std::vector<double>& s, const std::vector<double>& i, int w, int h,
                 CorrelationMap& map) {
    for (int dy = map.dy_min; dy <= map.dy_max; ++dy) {
        for (int dx = map.dx_min; dx <= map.dx_max; ++dx) {
            const Overlap ov = overlap_rect(w, h, dx, dy);
            double sum = 0.0;
            for (int y = ov.y0; y < ov.y1; ++y) {
                const double* sp = s.data() + static_cast<std::size_t>(y) * w;
                const double* ip = i.data() + static_cast<std::size_t>(y + dy) * w + dx;
                for (int x = ov.x0; x < ov.x1; ++x) sum += sp[x] * ip[x];
            }
            map.at(dx, dy) = sum;
        }
    }
}

void fill_fft(const std::vector<double>& s, const std::vector<double>& i, int w, int h,
              CorrelationMap& map) {
    const int nx = good_fft_size(w + map.dx_max - std::min(0, map.dx_min));
    const int ny = good_fft_size(h + map.dy_max - std::min(0, map.dy_min));
    const std::size_t real_n = static_cast<std::size_t>(nx) * ny;
    const std::size_t cplx_n = static_cast<std::size_t>(ny) * (nx / 2 + 1);

    std::vector<double> a(real_n, 0.0), b(real_n, 0.0);
    std::vector<std::complex<double>> fa(cplx_n), fb(cplx_n);
    for (int y = 0; y < h; ++y) {
        std::copy_n(s.data() + static_cast<std::size_t>(y) * w, w,
                    a.data() + static_cast<std::size_t>(y) * nx);
        std::copy_n(i.data() + static_cast<std::size_t>(y) * w, w,
                    b.data() + static_cast<std::size_t>(y) * nx);
    }

    fftw_plan pf_a, pf_b, pinv;
    {
        // FFTW planning is not thread-safe; execution is.
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        pf_a = fftw_plan_dft_r2c_2d(ny, nx, a.data(),
                                    reinterpret_cast<fftw_complex*>(fa.data()), FFTW_ESTIMATE);
        pf_b = fftw_plan_dft_r2c_2d(ny, nx, b.data(),
                                    reinterpret_cast<fftw_complex*>(fb.data()), FFTW_ESTIMATE);
        pinv = fftw_plan_dft_c2r_2d(ny, nx, reinterpret_cast<fftw_complex*>(fa.data()), a.data(),
                                    FFTW_ESTIMATE);
    }
    fftw_execute(pf_a);
    fftw_execute(pf_b);
    const double scale = 1.0 / (static_cast<double>(nx) * ny);
    for (std::size_t k = 0; k < cplx_n; ++k) fa[k] = std::conj(fa[k]) * fb[k] * scale;
    fftw_execute(pinv);
    {
        std::lock_guard<std::mutex> lock(fftw_plan_mutex());
        fftw_destroy_plan(pf_a);
        fftw_destroy_plan(pf_b);
        fftw_destroy_plan(pinv);
    }

    // Circular lag (kx,ky) holds sum a(x,y) b(x+kx, y+ky); negative lags wrap.
    for (int dy = map.dy_min; dy <= map.dy_max; ++dy)
        for (int dx = map.dx_min; dx <= map.dx_max; ++dx) {
            const int kx = dx >= 0 ? dx : nx + dx;
            const int ky = dy >= 0 ? dy : ny + dy;
            map.at(dx, dy) = a[static_cast<std::size_t>(ky) * nx + kx];
        }
}

}  // namespace

CorrelationMap cross_covariance_map(const ResidualImage& sig, const ResidualImage& idl,
                                    int max_dx, int max_dy, bool normalized) {
    require(sig.geometry() == idl.geometry(), "cross_covariance_map: geometry mismatch");
    const int w = static_cast<int>(sig.geometry().width_px);
    const int h = static_cast<int>(sig.geometry().height_px);
    require(max_dx >= 0 && max_dy >= 0, "cross_covariance_map: negative shift range");
    require(max_dx < w && max_dy < h, "cross_covariance_map: shift range exceeds frame size");

    CorrelationMap map;
    map.dx_min = -max_dx;
    map.dx_max = max_dx;
    map.dy_min = -max_dy;
    map.dy_max = max_dy;
    map.pixel_count = sig.geometry().pixel_count();
    map.normalized = normalized;
    map.values.assign(static_cast<std::size_t>(map.nx()) * map.ny(), 0.0);

    const auto& s = sig.image.values();
    const auto& i = idl.image.values();
    const double direct_cost =
        static_cast<double>(map.values.size()) * static_cast<double>(map.pixel_count);
    if (direct_cost <= 2.0e6)
        fill_direct(s, i, w, h, map);
    else
        fill_fft(s, i, w, h, map);

    if (normalized) {
        const PrefixSquares ps(s, w, h), pi(i, w, h);
        for (int dy = map.dy_min; dy <= map.dy_max; ++dy)
            for (int dx = map.dx_min; dx <= map.dx_max; ++dx) {
                const Overlap ov = overlap_rect(w, h, dx, dy);
                const double es = ps.rect(ov.x0, ov.x1, ov.y0, ov.y1);
                const double ei = pi.rect(ov.x0 + dx, ov.x1 + dx, ov.y0 + dy, ov.y1 + dy);
                const double denom = std::sqrt(es * ei);
                map.at(dx, dy) = denom > 0.0 ? map.at(dx, dy) / denom : 0.0;
            }
    }
    return map;
}

double binned_coincidences(const CorrelationMap& map, const PeakWindow& window) {
    window.validate();
    require(map.contains(window.x_lo(), window.y_lo()) && map.contains(window.x_hi(), window.y_hi()),
            "binned_coincidences: window outside map range");
    double sum = 0.0;
    for (int dy = window.y_lo(); dy <= window.y_hi(); ++dy)
        for (int dx = window.x_lo(); dx <= window.x_hi(); ++dx) sum += map.at(dx, dy);
    return sum;
}

WindowedCorrelator::WindowedCorrelator(const MeanImage& mean_signal, const MeanImage& mean_idler,
                                       const PeakWindow& window)
    : geom_(mean_signal.geometry()), window_(window) {
    window_.validate();
    require(mean_idler.geometry() == geom_, "windowed correlator: geometry mismatch");
    const int w = static_cast<int>(geom_.width_px);
    const int h = static_cast<int>(geom_.height_px);
    require(window_.x_hi() - window_.x_lo() < w && window_.y_hi() - window_.y_lo() < h,
            "windowed correlator: window larger than frame");

    // Clipped box sums of each mean image over the window (and the reversed
    // window), via inclusion-exclusion on prefix sums.
    const auto box = [&](const RealImage& img, bool reversed) {
        std::vector<double> prefix(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
        auto pref = [&](int x, int y) -> double& {
            return prefix[static_cast<std::size_t>(y) * (w + 1) + x];
        };
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                pref(x + 1, y + 1) = img.at(x, y) + pref(x, y + 1) + pref(x + 1, y) - pref(x, y);
        auto rect = [&](int x0, int x1, int y0, int y1) {  // half-open, clipped
            x0 = std::max(x0, 0);
            y0 = std::max(y0, 0);
            x1 = std::min(x1, w);
            y1 = std::min(y1, h);
            if (x0 >= x1 || y0 >= y1) return 0.0;
            return pref(x1, y1) - pref(x0, y1) - pref(x1, y0) + pref(x0, y0);
        };
        const int xl = reversed ? -window_.x_hi() : window_.x_lo();
        const int xh = reversed ? -window_.x_lo() : window_.x_hi();
        const int yl = reversed ? -window_.y_hi() : window_.y_lo();
        const int yh = reversed ? -window_.y_lo() : window_.y_hi();
        std::vector<double> out(static_cast<std::size_t>(w) * h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out[static_cast<std::size_t>(y) * w + x] =
                    rect(x + xl, x + xh + 1, y + yl, y + yh + 1);
        return out;
    };
    box_mean_idler_ = box(mean_idler.image, false);
    box_mean_signal_ = box(mean_signal.image, true);

    double cross = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            cross += mean_signal.image.at(x, y) * box_mean_idler_[static_cast<std::size_t>(y) * w + x];
    mean_cross_term_ = cross;
}

double WindowedCorrelator::coincidences(const PhotonFrame& signal, const PhotonFrame& idler) const {
    require(signal.geometry() == geom_ && idler.geometry() == geom_,
            "windowed correlator: frame geometry mismatch");
    const int w = static_cast<int>(geom_.width_px);
    const int h = static_cast<int>(geom_.height_px);

    // Idler rows as bitmaps for windowed popcounts.
    const int words_per_row = (w + 63) / 64;
    std::vector<std::uint64_t> rows(static_cast<std::size_t>(words_per_row) * h, 0);
    const auto& ipx = idler.pixels();
    double sum_box_signal = 0.0;
    for (int y = 0; y < h; ++y) {
        std::uint64_t* row = rows.data() + static_cast<std::size_t>(y) * words_per_row;
        const std::uint8_t* src = ipx.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x)
            if (src[x]) {
                row[x >> 6] |= 1ULL << (x & 63);
                sum_box_signal += box_mean_signal_[static_cast<std::size_t>(y) * w + x];
            }
    }

    auto window_count = [&](int y, int x0, int x1) -> std::uint64_t {  // inclusive, clipped
        x0 = std::max(x0, 0);
        x1 = std::min(x1, w - 1);
        if (x0 > x1) return 0;
        const std::uint64_t* row = rows.data() + static_cast<std::size_t>(y) * words_per_row;
        const int w0 = x0 >> 6, w1 = x1 >> 6;
        std::uint64_t count = 0;
        for (int wi = w0; wi <= w1; ++wi) {
            std::uint64_t word = row[wi];
            if (wi == w0) word &= ~0ULL << (x0 & 63);
            if (wi == w1) {
                const int top = x1 & 63;
                if (top < 63) word &= (1ULL << (top + 1)) - 1;
            }
            count += static_cast<std::uint64_t>(std::popcount(word));
        }
        return count;
    };

    std::uint64_t event_pairs = 0;
    double sum_box_idler = 0.0;
    const auto& spx = signal.pixels();
    for (int y = 0; y < h; ++y) {
        const std::uint8_t* src = spx.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) {
            if (!src[x]) continue;
            sum_box_idler += box_mean_idler_[static_cast<std::size_t>(y) * w + x];
            for (int dy = window_.y_lo(); dy <= window_.y_hi(); ++dy) {
                const int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                event_pairs += window_count(yy, x + window_.x_lo(), x + window_.x_hi());
            }
        }
    }

    return static_cast<double>(event_pairs) - sum_box_idler - sum_box_signal + mean_cross_term_;
}

void NoiseModelParams::validate() const {
    require(pixel_count >= 1, "noise model: pixel_count must be >= 1");
    require(bin_count >= 1.0, "noise model: bin_count must be >= 1");
    require(mean_signal >= 0.0 && mean_signal <= 1.0, "noise model: mean_signal must be in [0,1]");
    require(mean_idler >= 0.0 && mean_idler <= 1.0, "noise model: mean_idler must be in [0,1]");
    require(eta >= 0.0 && eta <= 1.0, "noise model: eta must be in [0,1]");
}

double accidental_std(const NoiseModelParams& p) {
    p.validate();
    return std::sqrt(static_cast<double>(p.pixel_count) * p.bin_count * p.mean_signal *
                     p.mean_idler);
}

double predicted_coincidences(std::uint8_t t_level, const NoiseModelParams& p) {
    p.validate();
    require(t_level <= 1, "predicted_coincidences: T_n must be 0 or 1");
    return static_cast<double>(t_level) * static_cast<double>(p.pixel_count) *
           (p.eta * p.mean_idler - p.mean_idler * p.mean_idler);
}

SnrPrediction predicted_snr(std::uint8_t t_level, const NoiseModelParams& p,
                            std::size_t ones_count) {
    p.validate();
    require(t_level <= 1, "predicted_snr: T_n must be 0 or 1");
    require(ones_count >= 1, "predicted_snr: ones_count must be >= 1");
    const double d = static_cast<double>(p.pixel_count);
    const double t = static_cast<double>(t_level);
    SnrPrediction out;
    const double variance = t * d * p.eta * p.mean_idler + d * p.bin_count * p.mean_signal * p.mean_idler;
    out.full = variance > 0.0
                   ? t * d * (p.eta * p.mean_idler - p.mean_idler * p.mean_idler) / std::sqrt(variance)
                   : 0.0;
    out.approx = t * p.eta * std::sqrt(d / (p.bin_count * static_cast<double>(ones_count)));
    return out;
}

double required_snr(int level_count, std::uint8_t t_level) {
    require(level_count >= 2, "required_snr: level count must be >= 2");
    require(t_level <= 1, "required_snr: T_n must be 0 or 1");
    return 2.45 * static_cast<double>(level_count) * static_cast<double>(t_level);
}

void export_map_csv(const CorrelationMap& map, const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (!f) fail_io("cannot open for writing: " + path.string());
    std::fprintf(f, "dx,dy,%s\n", map.normalized ? "normalized_coefficient" : "coincidence_count");
    for (int dy = map.dy_min; dy <= map.dy_max; ++dy)
        for (int dx = map.dx_min; dx <= map.dx_max; ++dx)
            std::fprintf(f, "%d,%d,%.17g\n", dx, dy, map.at(dx, dy));
    if (std::fclose(f) != 0) fail_io("write failed: " + path.string());
}

}  // namespace tgi
