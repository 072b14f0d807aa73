#include "tlsim/lamp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>

#include <fftw3.h>

#include "tlsim/core.hpp"
#include "tlsim/csv.hpp"
#include "tlsim/fit.hpp"

namespace tlsim::lamp {

namespace {

using cplx = std::complex<double>;

// FFTW planning is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

/// In-place complex DFT of a buffer, unnormalized.
class Dft {
  public:
    Dft(std::vector<cplx>& data, int sign) {
        std::lock_guard lock(planner_mutex());
        auto* p = reinterpret_cast<fftw_complex*>(data.data());
        plan_ = fftw_plan_dft_1d(static_cast<int>(data.size()), p, p, sign, FFTW_ESTIMATE);
        if (!plan_) throw GuardError("FFTW planning failed");
    }
    Dft(const Dft&) = delete;
    Dft& operator=(const Dft&) = delete;
    ~Dft() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    void run() { fftw_execute(plan_); }

  private:
    fftw_plan plan_;
};

void forward(std::vector<cplx>& v) { Dft(v, FFTW_FORWARD).run(); }
void backward(std::vector<cplx>& v) { Dft(v, FFTW_BACKWARD).run(); }

// Smallest 2^a 3^b 5^c >= n.
std::size_t fast_size(std::size_t n) {
    std::size_t best = 1;
    while (best < n) best *= 2;
    for (std::size_t p5 = 1; p5 < best; p5 *= 5)
        for (std::size_t p35 = p5; p35 < best; p35 *= 3) {
            std::size_t v = p35;
            while (v < n) v *= 2;
            best = std::min(best, v);
        }
    return best;
}

// Linear (zero-padded) autocorrelation sum_i conj(x_i) x_{i+k}, k = 0..max_k.
std::vector<cplx> autocorrelation(const std::vector<cplx>& x, std::size_t max_k) {
    std::vector<cplx> buf(fast_size(x.size() + max_k + 1), cplx{});
    std::copy(x.begin(), x.end(), buf.begin());
    forward(buf);
    for (auto& v : buf) v = std::norm(v);
    backward(buf);
    const double scale = 1.0 / static_cast<double>(buf.size());
    std::vector<cplx> out(max_k + 1);
    for (std::size_t k = 0; k <= max_k; ++k) out[k] = buf[k] * scale;
    return out;
}

std::size_t max_lag_index(const FieldTrace& trace, double max_lag_ns) {
    if (trace.amplitudes.size() < 2 || !(trace.dt > 0.0)) throw ConfigError("field trace: need dt > 0 and >= 2 samples");
    if (!(max_lag_ns >= 0.0) || max_lag_ns > trace.duration() / 10.0)
        throw GuardError("max_lag " + csv::number(max_lag_ns) + " ns exceeds a tenth of the trace length (" +
                         csv::number(trace.duration() / 10.0) + " ns)");
    return static_cast<std::size_t>(std::floor(max_lag_ns / trace.dt + 1e-9));
}

} // namespace

std::vector<double> FieldTrace::intensity() const {
    std::vector<double> out(amplitudes.size());
    for (std::size_t i = 0; i < amplitudes.size(); ++i) out[i] = std::norm(amplitudes[i]);
    return out;
}

FieldTrace synthesize_field(double tau_corr_ns, double dt_ns, std::size_t n, const RngStream& rng) {
    if (!(tau_corr_ns > 0.0) || !(dt_ns > 0.0)) throw ConfigError("synthesize_field: tau_corr and dt must be > 0");
    if (dt_ns > tau_corr_ns / 20.0)
        throw GuardError("synthesize_field: dt must be <= tau_corr/20 = " + csv::number(tau_corr_ns / 20.0) + " ns");
    if (static_cast<double>(n) * dt_ns < 50.0 * tau_corr_ns)
        throw GuardError("synthesize_field: trace must span >= 50 tau_corr; need n >= " +
                         std::to_string(static_cast<std::size_t>(std::ceil(50.0 * tau_corr_ns / dt_ns))));

    const auto discard = static_cast<std::size_t>(std::ceil(5.0 * tau_corr_ns / dt_ns));
    const std::size_t total = fast_size(n + discard);
    RngStream stream = rng;
    std::vector<cplx> buf(total);
    for (auto& v : buf) {
        const double re = stream.normal();
        const double im = stream.normal();
        v = cplx(re, im) * std::numbers::sqrt2 * 0.5;
    }
    forward(buf);
    const double df = 1.0 / (static_cast<double>(total) * dt_ns);
    for (std::size_t k = 0; k < total; ++k) {
        const double kk = k < (total + 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(total);
        const double f = kk * df;
        buf[k] *= std::exp(-std::numbers::pi * tau_corr_ns * tau_corr_ns * f * f);
    }
    backward(buf);

    FieldTrace trace;
    trace.dt = dt_ns;
    trace.amplitudes.assign(buf.begin() + static_cast<std::ptrdiff_t>(discard),
                            buf.begin() + static_cast<std::ptrdiff_t>(discard + n));
    double mean = 0.0;
    for (const auto& a : trace.amplitudes) mean += std::norm(a);
    mean /= static_cast<double>(n);
    const double scale = 1.0 / std::sqrt(mean);
    for (auto& a : trace.amplitudes) a *= scale;
    return trace;
}

CorrelationCurve estimate_g1(const FieldTrace& trace, double max_lag_ns) {
    const std::size_t kmax = max_lag_index(trace, max_lag_ns);
    const auto r = autocorrelation(trace.amplitudes, kmax);
    CorrelationCurve out;
    for (std::size_t k = 0; k <= kmax; ++k) {
        out.lags_ns.push_back(static_cast<double>(k) * trace.dt);
        out.values.push_back(k == 0 ? 1.0 : std::abs(r[k]) / r[0].real());
    }
    return out;
}

CorrelationCurve estimate_g2(const FieldTrace& trace, double max_lag_ns) {
    const std::size_t kmax = max_lag_index(trace, max_lag_ns);
    const auto intensity = trace.intensity();
    const auto n = static_cast<double>(intensity.size());
    double mean = 0.0;
    for (double v : intensity) mean += v;
    mean /= n;
    std::vector<cplx> as_complex(intensity.begin(), intensity.end());
    const auto r = autocorrelation(as_complex, kmax);
    CorrelationCurve out;
    for (std::size_t k = 0; k <= kmax; ++k) {
        out.lags_ns.push_back(static_cast<double>(k) * trace.dt);
        out.values.push_back(r[k].real() / (n - static_cast<double>(k)) / (mean * mean));
    }
    return out;
}

GaussianFit fit_gaussian_g2(const CorrelationCurve& curve) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t k = 0; k < curve.lags_ns.size(); ++k) {
        if (curve.lags_ns[k] < 0.0) continue;
        xs.push_back(curve.lags_ns[k]);
        ys.push_back(curve.values[k]);
    }
    if (xs.size() < 4) throw ConfigError("fit_gaussian_g2: need at least 4 non-negative lags");

    // Start from the zero-lag excess and the lag where it falls to e^{-pi/4},
    // which is tau_corr/2 for the model.
    const double a0 = ys.front() - 1.0;
    double tau0 = xs.back();
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (std::abs(ys[k] - 1.0) < std::abs(a0) * std::exp(-std::numbers::pi / 4.0)) {
            tau0 = 2.0 * std::max(xs[k], xs[1]);
            break;
        }
    }

    const Model model = [](double tau, std::span<const double> q) {
        const double r = tau / q[1];
        return 1.0 + q[0] * std::exp(-std::numbers::pi * r * r);
    };

    GaussianFit out;
    // A flat curve has no decay to locate.
    double spread = 0.0;
    for (double y : ys) spread = std::max(spread, std::abs(y - 1.0));
    if (spread < 1e-12) {
        out.converged = true;
        out.identifiable = false;
        out.tau_corr = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    if (xs.back() < 3.0 * tau0)
        throw GuardError("fit_gaussian_g2: curve must span at least 3x the correlation-time guess");

    const FitResult fit = least_squares(model, xs, ys, {a0, tau0});
    out.amplitude = fit.params[0];
    out.tau_corr = std::abs(fit.params[1]);
    out.amplitude_se = fit.std_errors[0];
    out.tau_corr_se = fit.std_errors[1];
    out.rms_residual = fit.rms_residual;
    out.converged = fit.converged;
    out.identifiable = fit.converged && std::isfinite(out.amplitude_se) &&
                       std::abs(out.amplitude) > 3.0 * out.amplitude_se && std::abs(out.amplitude) > 1e-3 &&
                       std::isfinite(out.tau_corr_se) && out.tau_corr_se < 0.5 * out.tau_corr;
    return out;
}

double spectral_fwhm_ghz(const FieldTrace& trace, std::size_t segment_length) {
    const std::size_t n = trace.amplitudes.size();
    if (segment_length < 16 || segment_length > n) throw ConfigError("spectral_fwhm: bad segment length");
    std::vector<double> power(segment_length, 0.0);
    std::vector<cplx> buf(segment_length);
    for (std::size_t start = 0; start + segment_length <= n; start += segment_length) {
        std::copy_n(trace.amplitudes.begin() + static_cast<std::ptrdiff_t>(start), segment_length, buf.begin());
        forward(buf);
        for (std::size_t k = 0; k < segment_length; ++k) power[k] += std::norm(buf[k]);
    }
    // Reorder to ascending frequency, centered on zero.
    const std::size_t half = segment_length / 2;
    std::vector<double> centered(segment_length);
    for (std::size_t k = 0; k < segment_length; ++k) centered[k] = power[(k + segment_length - half) % segment_length];
    const auto peak_it = std::max_element(centered.begin(), centered.end());
    const double half_max = *peak_it / 2.0;
    const auto peak = static_cast<std::size_t>(peak_it - centered.begin());
    auto crossing = [&](int dir) {
        std::size_t k = peak;
        while (true) {
            const std::size_t next = dir > 0 ? k + 1 : k - 1;
            if ((dir > 0 && next >= segment_length) || (dir < 0 && k == 0))
                throw GuardError("spectral_fwhm: half maximum not reached");
            if (centered[next] < half_max) {
                const double frac = (centered[k] - half_max) / (centered[k] - centered[next]);
                return static_cast<double>(k) + dir * frac;
            }
            k = next;
        }
    };
    const double width_bins = crossing(+1) - crossing(-1);
    return width_bins / (static_cast<double>(segment_length) * trace.dt);
}

void write_field_csv(std::ostream& out, const FieldTrace& trace, std::size_t stride) {
    csv::header(out, "t_ns,re,im,intensity");
    stride = std::max<std::size_t>(stride, 1);
    for (std::size_t i = 0; i < trace.amplitudes.size(); i += stride) {
        const auto a = trace.amplitudes[i];
        csv::row(out, {static_cast<double>(i) * trace.dt, a.real(), a.imag(), std::norm(a)});
    }
}

void write_correlation_csv(std::ostream& out, const CorrelationCurve& curve) {
    csv::header(out, "lag_ns,value");
    for (std::size_t k = 0; k < curve.lags_ns.size(); ++k) csv::row(out, {curve.lags_ns[k], curve.values[k]});
}

} // namespace tlsim::lamp
