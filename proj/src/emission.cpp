#include "tlsim/emission.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "tlsim/bloch.hpp"
#include "tlsim/csv.hpp"
#include "tlsim/parallel.hpp"
#include "tlsim/quadrature.hpp"

namespace tlsim::emission {

FrequencyGrid FrequencyGrid::symmetric(double half_span_ghz, double step_ghz) {
    if (!(half_span_ghz > 0.0) || !(step_ghz > 0.0))
        throw ConfigError("frequency grid: span and step must be > 0");
    const auto half = static_cast<std::size_t>(std::llround(half_span_ghz / step_ghz));
    return {-static_cast<double>(half) * step_ghz, step_ghz, 2 * half + 1};
}

double Spectrum::grid_power() const {
    double sum = 0.0;
    for (double v : incoherent) sum += v;
    return sum * step() + coherent_weight;
}

BlochGenerator BlochGenerator::make(const TlsParams& p, double omega, double detuning) {
    const cplx i{0.0, 1.0};
    const double g1 = p.gamma1();
    const double g2 = p.gamma2();
    BlochGenerator gen;
    gen.m = {{{i * detuning - g2, 0.0, 0.5 * i * omega},
              {0.0, -i * detuning - g2, -0.5 * i * omega},
              {i * omega, -i * omega, -g1}}};
    gen.b = {0.0, 0.0, -g1};
    return gen;
}

std::array<cplx, 3> BlochGenerator::resolve(cplx s, const std::array<cplx, 3>& rhs) const {
    Eigen::Matrix3cd a;
    Eigen::Vector3cd r;
    for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 3; ++col) a(row, col) = (row == col ? s : cplx{}) - m[row][col];
        r[row] = rhs[row];
    }
    const Eigen::Vector3cd x = a.partialPivLu().solve(r);
    return {x[0], x[1], x[2]};
}

std::array<cplx, 3> BlochGenerator::steady_state() const { return resolve(0.0, b); }

namespace {

void check_spectral_grid(const TlsParams& p, const FrequencyGrid& grid) {
    if (grid.count < 3 || !(grid.step_ghz > 0.0)) throw ConfigError("frequency grid: need >= 3 points");
    const double limit = to_ghz(2.0 / p.t2()) / 10.0;
    if (grid.step_ghz > limit)
        throw GuardError("frequency grid step " + csv::number(grid.step_ghz) +
                         " GHz cannot resolve the 2/T2 linewidth; use step <= " + csv::number(limit) + " GHz");
}

// Unchecked spectrum evaluation shared by the coherent and chaotic paths.
Spectrum spectrum_at(const TlsParams& p, double omega, double detuning, const FrequencyGrid& grid) {
    const BlochGenerator gen = BlochGenerator::make(p, omega, detuning);
    const auto y = gen.steady_state();
    const cplx s_minus = y[0];
    const cplx s_plus = y[1];
    const double rho11 = 0.5 * (y[2].real() + 1.0);
    const double coherent = std::norm(s_minus);
    // Fluctuation correlations <d sigma+ O> for O = sigma-, sigma+, sigma_z.
    const std::array<cplx, 3> z0 = {rho11 - coherent, -s_plus * s_plus, -s_plus - s_plus * y[2]};

    Spectrum spec;
    spec.freqs_ghz.resize(grid.count);
    spec.incoherent.resize(grid.count);
    spec.coherent_weight = coherent * p.gamma1();
    spec.coherent_freq_ghz = to_ghz(detuning);
    spec.incoherent_total = (rho11 - coherent) * p.gamma1();
    if (omega == 0.0) {
        for (std::size_t k = 0; k < grid.count; ++k) spec.freqs_ghz[k] = grid.at(k);
        return spec;
    }
    const cplx i{0.0, 1.0};
    double peak = 0.0;
    for (std::size_t k = 0; k < grid.count; ++k) {
        const double nu = grid.at(k);
        const double w = from_ghz(nu) - detuning; // relative to the laser
        const auto x = gen.resolve(-i * w, z0);
        // (1/pi) Re[...] per rad/ns, times 2 pi per GHz, times the 1/T1 emission rate.
        const double v = 2.0 * p.gamma1() * x[0].real();
        spec.freqs_ghz[k] = nu;
        spec.incoherent[k] = v;
        peak = std::max(peak, v);
    }
    for (double& v : spec.incoherent) {
        if (v >= 0.0) continue;
        if (-v > 1e-9 * peak) throw GuardError("qrt_spectrum: negative spectral density beyond rounding");
        v = 0.0;
    }
    return spec;
}

} // namespace

Spectrum qrt_spectrum(const TlsParams& p, double omega, double detuning, const FrequencyGrid& grid) {
    if (!(omega >= 0.0)) throw ConfigError("qrt_spectrum: omega must be >= 0");
    check_spectral_grid(p, grid);
    return spectrum_at(p, omega, detuning, grid);
}

namespace {

Spectrum average_spectrum(const TlsParams& p, double mean_omega, double detuning,
                          const FrequencyGrid& grid, int order, unsigned workers) {
    const LaguerreRule rule = exponential_average_rule(saturation_parameter(mean_omega, p), order);
    const std::size_t n = rule.nodes.size();
    std::vector<Spectrum> per_node(n);
    for_each_chunk(make_chunks(n, 8), workers, [&](std::size_t, ChunkRange r) {
        for (std::size_t k = r.begin; k < r.end; ++k) {
            if (rule.weights[k] < 1e-300) continue;
            per_node[k] = spectrum_at(p, mean_omega * std::sqrt(rule.nodes[k]), detuning, grid);
        }
    });
    Spectrum avg;
    avg.freqs_ghz.resize(grid.count);
    for (std::size_t k = 0; k < grid.count; ++k) avg.freqs_ghz[k] = grid.at(k);
    avg.incoherent.assign(grid.count, 0.0);
    avg.coherent_freq_ghz = to_ghz(detuning);
    for (std::size_t k = 0; k < n; ++k) {
        if (per_node[k].incoherent.empty()) continue;
        const double w = rule.weights[k];
        for (std::size_t j = 0; j < grid.count; ++j) avg.incoherent[j] += w * per_node[k].incoherent[j];
        avg.coherent_weight += w * per_node[k].coherent_weight;
        avg.incoherent_total += w * per_node[k].incoherent_total;
    }
    return avg;
}

} // namespace

Spectrum chaotic_spectrum(const TlsParams& p, double mean_omega, const FrequencyGrid& grid, int order,
                          double detuning, unsigned workers) {
    if (!(mean_omega >= 0.0)) throw ConfigError("chaotic_spectrum: mean_omega must be >= 0");
    check_spectral_grid(p, grid);
    if (mean_omega == 0.0) return spectrum_at(p, 0.0, detuning, grid);
    const Spectrum coarse = average_spectrum(p, mean_omega, detuning, grid, order, workers);
    Spectrum fine = average_spectrum(p, mean_omega, detuning, grid, 2 * order, workers);
    double peak = 0.0;
    double diff = 0.0;
    for (std::size_t j = 0; j < grid.count; ++j) {
        peak = std::max(peak, fine.incoherent[j]);
        diff = std::max(diff, std::abs(fine.incoherent[j] - coarse.incoherent[j]));
    }
    const double total = fine.total_power();
    if (diff > 1e-4 * peak || std::abs(fine.coherent_weight - coarse.coherent_weight) > 1e-4 * total)
        throw GuardError("chaotic_spectrum: Gauss-Laguerre order " + std::to_string(order) +
                         " not converged (relative change " + csv::number(diff / peak) + ")");
    return fine;
}

Spectrum convolve_lorentzian(const Spectrum& spec, double fwhm_ghz) {
    if (!(fwhm_ghz >= 0.0)) throw ConfigError("convolve_lorentzian: fwhm must be >= 0");
    const std::size_t n = spec.freqs_ghz.size();
    if (n < 2) throw ConfigError("convolve_lorentzian: spectrum grid too small");
    const double d = spec.step();
    const double span = d * static_cast<double>(n);
    if (span < 10.0 * fwhm_ghz)
        throw GuardError("convolve_lorentzian: grid span " + csv::number(span) + " GHz is below 10 x FWHM");

    Spectrum out = spec;
    out.coherent_weight = 0.0;
    out.incoherent_total = spec.incoherent_total + spec.coherent_weight;
    out.incoherent.assign(n, 0.0);

    const double lo = spec.freqs_ghz.front() - 0.5 * d;
    const double hi = spec.freqs_ghz.back() + 0.5 * d;
    double leaked = spec.leaked_power;

    if (fwhm_ghz == 0.0) {
        out.incoherent = spec.incoherent;
        if (spec.coherent_weight > 0.0) {
            const double pos = (spec.coherent_freq_ghz - lo) / d;
            if (pos >= 0.0 && pos < static_cast<double>(n))
                out.incoherent[static_cast<std::size_t>(pos)] += spec.coherent_weight / d;
            else
                leaked += spec.coherent_weight;
        }
        out.leaked_power = leaked;
        return out;
    }

    const double gamma = 0.5 * fwhm_ghz;
    // Fraction of a point source at x that lands in [a, b].
    auto cell = [gamma](double a, double b, double x) {
        return (std::atan((b - x) / gamma) - std::atan((a - x) / gamma)) / std::numbers::pi;
    };
    // Source and target cells share the grid, so the kernel depends on i - j.
    std::vector<double> kernel(2 * n - 1);
    for (std::size_t k = 0; k < kernel.size(); ++k) {
        const double off = (static_cast<double>(k) - static_cast<double>(n - 1)) * d;
        kernel[k] = cell(off - 0.5 * d, off + 0.5 * d, 0.0);
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double mass = spec.incoherent[j] * d;
        if (mass == 0.0) continue;
        for (std::size_t i = 0; i < n; ++i) out.incoherent[i] += mass * kernel[i + n - 1 - j];
        leaked += mass * (1.0 - cell(lo, hi, spec.freqs_ghz[j]));
    }
    if (spec.coherent_weight > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            const double f = spec.freqs_ghz[i];
            out.incoherent[i] += spec.coherent_weight * cell(f - 0.5 * d, f + 0.5 * d, spec.coherent_freq_ghz);
        }
        leaked += spec.coherent_weight * (1.0 - cell(lo, hi, spec.coherent_freq_ghz));
    }
    for (double& v : out.incoherent) v /= d;
    out.leaked_power = leaked;
    return out;
}

EmissionG2 qrt_g2(const TlsParams& p, double omega, double detuning, const std::vector<double>& lags_ns) {
    if (!(omega > 0.0)) throw ConfigError("qrt_g2: omega must be > 0 (no emission without drive)");
    const double rho_ss = bloch::steady_state_population(p, omega, detuning);
    const double h_max = bloch::max_step(p, omega) / 4.0;

    std::vector<std::size_t> order(lags_ns.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(lags_ns[a]) < std::abs(lags_ns[b]); });

    EmissionG2 out{lags_ns, std::vector<double>(lags_ns.size(), 0.0)};
    const DrivePulse drive = DrivePulse::cw(omega, detuning);
    bloch::BlochState y = bloch::BlochState::ground();
    double t = 0.0;
    for (std::size_t idx : order) {
        const double target = std::abs(lags_ns[idx]);
        const double gap = target - t;
        if (gap > 0.0) {
            const int steps = static_cast<int>(std::ceil(gap / h_max));
            const auto seg = bloch::integrate_substepped(p, drive, gap, gap, steps, y);
            y = seg.samples.back();
            t = target;
        }
        out.values[idx] = target == 0.0 ? 0.0 : y.rho11 / rho_ss;
    }
    return out;
}

EmissionG2 qrt_g2_expm(const TlsParams& p, double omega, double detuning, const std::vector<double>& lags_ns) {
    if (!(omega > 0.0)) throw ConfigError("qrt_g2: omega must be > 0 (no emission without drive)");
    const double rho_ss = bloch::steady_state_population(p, omega, detuning);
    const double g1 = p.gamma1();
    const double g2 = p.gamma2();
    // Affine Bloch system on (rho11, Re rho01, Im rho01, 1).
    Eigen::Matrix4d a;
    a << -g1, 0.0, omega, 0.0,
         0.0, -g2, detuning, 0.0,
         -omega, -detuning, -g2, 0.5 * omega,
         0.0, 0.0, 0.0, 0.0;
    EmissionG2 out{lags_ns, std::vector<double>(lags_ns.size(), 0.0)};
    for (std::size_t k = 0; k < lags_ns.size(); ++k) {
        const double tau = std::abs(lags_ns[k]);
        if (tau == 0.0) continue;
        const Eigen::Matrix4d prop = (a * tau).exp();
        out.values[k] = prop(0, 3) / rho_ss;
    }
    return out;
}

namespace {

std::vector<double> chaotic_g2_at_order(const TlsParams& p, double mean_omega,
                                        const std::vector<double>& lags, int order) {
    const LaguerreRule rule = exponential_average_rule(saturation_parameter(mean_omega, p), order);
    std::vector<double> num(lags.size(), 0.0);
    double mean_intensity = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
        const double w = rule.weights[k];
        if (w < 1e-25) continue;
        const double omega = mean_omega * std::sqrt(rule.nodes[k]);
        const double intensity = bloch::steady_state_population(p, omega);
        mean_intensity += w * intensity;
        const EmissionG2 g = qrt_g2(p, omega, 0.0, lags);
        for (std::size_t j = 0; j < lags.size(); ++j) num[j] += w * intensity * intensity * g.values[j];
    }
    for (double& v : num) v /= mean_intensity * mean_intensity;
    return num;
}

} // namespace

EmissionG2 chaotic_g2(const TlsParams& p, double mean_omega, const std::vector<double>& lags_ns, int order,
                      double tau_corr_ns) {
    if (!(mean_omega > 0.0)) throw ConfigError("chaotic_g2: mean_omega must be > 0");
    if (!(tau_corr_ns > 0.0)) throw ConfigError("chaotic_g2: tau_corr must be > 0");
    const auto coarse = chaotic_g2_at_order(p, mean_omega, lags_ns, order);
    auto fine = chaotic_g2_at_order(p, mean_omega, lags_ns, 2 * order);
    for (std::size_t j = 0; j < fine.size(); ++j) {
        if (std::abs(fine[j] - coarse[j]) > 1e-4 * std::max(1.0, std::abs(fine[j])))
            throw GuardError("chaotic_g2: Gauss-Laguerre order " + std::to_string(order) + " not converged");
    }
    EmissionG2 out{lags_ns, std::move(fine)};
    out.valid_up_to_ns = tau_corr_ns / 10.0;
    return out;
}

EmissionG2 blinking_envelope(const EmissionG2& g2, double on_fraction, double tau_blink_ns) {
    if (!(on_fraction > 0.0 && on_fraction <= 1.0)) throw ConfigError("blinking: on fraction must be in (0, 1]");
    if (!(tau_blink_ns > 0.0)) throw ConfigError("blinking: tau_blink must be > 0");
    EmissionG2 out = g2;
    const double amp = (1.0 - on_fraction) / on_fraction;
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] *= 1.0 + amp * std::exp(-std::abs(out.lags_ns[k]) / tau_blink_ns);
    return out;
}

EmissionG2 convolve_gaussian(const EmissionG2& g2, double fwhm_ns) {
    if (!(fwhm_ns >= 0.0)) throw ConfigError("convolve_gaussian: fwhm must be >= 0");
    if (fwhm_ns == 0.0) return g2;
    const std::size_t n = g2.lags_ns.size();
    if (n < 2) throw ConfigError("convolve_gaussian: need at least two lags");
    const double step = g2.lags_ns[1] - g2.lags_ns[0];
    for (std::size_t k = 1; k < n; ++k) {
        if (std::abs(g2.lags_ns[k] - g2.lags_ns[k - 1] - step) > 1e-9 * std::abs(step) + 1e-15)
            throw ConfigError("convolve_gaussian: lag grid must be uniform");
    }
    if (!(step > 0.0)) throw ConfigError("convolve_gaussian: lags must be ascending");
    if (step > fwhm_ns / 5.0)
        throw GuardError("convolve_gaussian: lag step " + csv::number(step) + " ns is coarser than fwhm/5 = " +
                         csv::number(fwhm_ns / 5.0) + " ns");
    const double sigma = fwhm_ns / kGaussFwhmPerSigma;
    const auto reach = static_cast<std::ptrdiff_t>(std::ceil(6.0 * sigma / step));
    std::vector<double> kernel(2 * reach + 1);
    for (std::ptrdiff_t k = -reach; k <= reach; ++k) {
        const double x = static_cast<double>(k) * step / sigma;
        kernel[k + reach] = std::exp(-0.5 * x * x);
    }
    EmissionG2 out = g2;
    const auto sn = static_cast<std::ptrdiff_t>(n);
    for (std::ptrdiff_t i = 0; i < sn; ++i) {
        double acc = 0.0;
        double norm = 0.0;
        for (std::ptrdiff_t k = -reach; k <= reach; ++k) {
            const std::ptrdiff_t j = i - k;
            if (j < 0 || j >= sn) continue;
            acc += kernel[k + reach] * g2.values[j];
            norm += kernel[k + reach];
        }
        out.values[i] = acc / norm;
    }
    return out;
}

std::vector<double> symmetric_lags(double max_lag_ns, double step_ns) {
    if (!(max_lag_ns > 0.0) || !(step_ns > 0.0)) throw ConfigError("lag grid: max lag and step must be > 0");
    const auto half = std::llround(max_lag_ns / step_ns);
    std::vector<double> lags;
    lags.reserve(2 * half + 1);
    for (long long k = -half; k <= half; ++k) lags.push_back(static_cast<double>(k) * step_ns);
    return lags;
}

void write_spectrum_csv(std::ostream& out, const Spectrum& raw, const Spectrum& after_irf) {
    if (raw.freqs_ghz.size() != after_irf.freqs_ghz.size())
        throw ConfigError("write_spectrum_csv: spectra must share a grid");
    csv::header(out, "freq_ghz,incoherent,total_after_irf");
    for (std::size_t k = 0; k < raw.freqs_ghz.size(); ++k)
        csv::row(out, {raw.freqs_ghz[k], raw.incoherent[k], after_irf.incoherent[k]});
}

void write_g2_csv(std::ostream& out, const EmissionG2& g2) {
    csv::header(out, "lag_ns,g2");
    for (std::size_t k = 0; k < g2.lags_ns.size(); ++k) csv::row(out, {g2.lags_ns[k], g2.values[k]});
}

} // namespace tlsim::emission
