#include "tlsim/bloch.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#include "tlsim/csv.hpp"
#include "tlsim/parallel.hpp"
#include "tlsim/photonstat.hpp"
#include "tlsim/quadrature.hpp"

namespace tlsim::bloch {

bool BlochState::is_physical(double tol) const {
    if (!(rho11 >= -tol && rho11 <= 1.0 + tol)) return false;
    const double c2 = rho01_re * rho01_re + rho01_im * rho01_im;
    return c2 <= rho11 * (1.0 - rho11) + tol;
}

std::vector<double> BlochTrace::population() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.rho11);
    return out;
}

BlochState bloch_derivative(const BlochState& s, const TlsParams& p, double omega_t,
                            double detuning) {
    const double inversion = 2.0 * s.rho11 - 1.0; // rho11 - rho00
    const double g2 = p.gamma2();
    BlochState d;
    d.rho11 = omega_t * s.rho01_im - s.rho11 * p.gamma1();
    // -(i D + g2)(re + i im) - i (W/2) w
    d.rho01_re = -g2 * s.rho01_re + detuning * s.rho01_im;
    d.rho01_im = -g2 * s.rho01_im - detuning * s.rho01_re - 0.5 * omega_t * inversion;
    return d;
}

double max_step(const TlsParams& p, double peak_omega) {
    double scale = p.t2();
    if (peak_omega > 0.0) scale = std::min(scale, kTwoPi / peak_omega);
    return scale / 50.0;
}

namespace {

BlochState axpy(const BlochState& y, double h, const BlochState& k) {
    return {y.rho11 + h * k.rho11, y.rho01_re + h * k.rho01_re, y.rho01_im + h * k.rho01_im};
}

BlochState rk4_step(const BlochState& y, const TlsParams& p, double omega, double detuning,
                    double h) {
    const BlochState k1 = bloch_derivative(y, p, omega, detuning);
    const BlochState k2 = bloch_derivative(axpy(y, 0.5 * h, k1), p, omega, detuning);
    const BlochState k3 = bloch_derivative(axpy(y, 0.5 * h, k2), p, omega, detuning);
    const BlochState k4 = bloch_derivative(axpy(y, h, k3), p, omega, detuning);
    return {y.rho11 + h / 6.0 * (k1.rho11 + 2.0 * k2.rho11 + 2.0 * k3.rho11 + k4.rho11),
            y.rho01_re + h / 6.0 * (k1.rho01_re + 2.0 * k2.rho01_re + 2.0 * k3.rho01_re + k4.rho01_re),
            y.rho01_im + h / 6.0 * (k1.rho01_im + 2.0 * k2.rho01_im + 2.0 * k3.rho01_im + k4.rho01_im)};
}

std::size_t step_count(double t_end, double dt) {
    return static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
}

} // namespace

BlochTrace integrate_substepped(const TlsParams& p, const DrivePulse& pulse, double t_end,
                                double dt, int substeps, const BlochState& initial) {
    const std::size_t n = step_count(t_end, dt);
    const double h = dt / substeps;
    BlochTrace trace{0.0, dt, {}};
    trace.samples.reserve(n + 1);
    trace.samples.push_back(initial);
    BlochState y = initial;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = dt * static_cast<double>(i);
        for (int k = 0; k < substeps; ++k) {
            const double omega = pulse.rabi_at(t + (k + 0.5) * h);
            y = rk4_step(y, p, omega, pulse.detuning, h);
        }
        trace.samples.push_back(y);
    }
    return trace;
}

BlochTrace integrate(const TlsParams& p, const DrivePulse& pulse, double t_end, double dt,
                     const BlochState& initial) {
    pulse.validate();
    if (!(t_end > 0.0)) throw ConfigError("integrate: t_end must be > 0");
    if (!(dt > 0.0)) throw ConfigError("integrate: dt must be > 0");
    if (!initial.is_physical()) throw ConfigError("integrate: initial state is not a density matrix");
    const double limit = max_step(p, pulse.rabi * pulse.peak_amplitude());
    if (dt > limit)
        throw GuardError("integrate: dt = " + csv::number(dt) + " ns exceeds the resolution limit; use dt <= " +
                         csv::number(limit) + " ns");
    return integrate_substepped(p, pulse, t_end, dt, 1, initial);
}

BlochState steady_state(const TlsParams& p, double omega, double detuning) {
    const double g2 = p.gamma2();
    const double b = detuning * detuning + g2 * g2;
    const double rho11 = steady_state_population(p, omega, detuning);
    const double inversion = 2.0 * rho11 - 1.0;
    // rho01 = -i (W/2) w / (i D + g2) = -(W/2) w (D + i g2) / b
    const double scale = -0.5 * omega * inversion / b;
    return {rho11, scale * detuning, scale * g2};
}

double steady_state_population(const TlsParams& p, double omega, double detuning) {
    if (!(omega >= 0.0)) throw ConfigError("steady_state_population: omega must be >= 0");
    const double g2 = p.gamma2();
    const double drive = omega * omega * p.t1() / p.t2();
    if (drive == 0.0) return 0.0;
    if (!std::isfinite(drive)) return 0.5;
    return 0.5 * drive / (detuning * detuning + g2 * g2 + drive);
}

double population_from_saturation(double s) {
    if (!(s >= 0.0)) throw ConfigError("population_from_saturation: S must be >= 0");
    if (std::isinf(s)) return 0.5;
    return s / (2.0 * (1.0 + s));
}

double exp1(double x) {
    if (!(x > 0.0)) throw ConfigError("exp1: argument must be > 0");
    if (x <= 1.0) {
        // -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!)
        double sum = 0.0;
        double term = 1.0;
        for (int k = 1; k < 100; ++k) {
            term *= -x / k;
            const double add = -term / k;
            sum += add;
            if (std::abs(add) < 1e-17 * std::abs(sum)) break;
        }
        return -std::numbers::egamma - std::log(x) + sum;
    }
    return std::exp(-x) * exp1_scaled(x);
}

double exp1_scaled(double x) {
    if (!(x > 0.0)) throw ConfigError("exp1: argument must be > 0");
    if (x <= 1.0) return std::exp(x) * exp1(x);
    // Modified Lentz evaluation of the continued fraction
    // E1(x) e^x = 1/(x+1- 1/(x+3- 4/(x+5- ...)))
    constexpr double tiny = 1e-300;
    double b = x + 1.0;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -static_cast<double>(i) * i;
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        const double del = c * d;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16) return h;
    }
    throw GuardError("exp1: continued fraction did not converge");
}

namespace {

// Mean effective saturation parameter: detuning rescales Omega^2 T1 T2 by
// 1 / (1 + Delta^2 T2^2).
double effective_saturation(const TlsParams& p, double mean_omega, double detuning) {
    const double s = saturation_parameter(mean_omega, p);
    return s / (1.0 + detuning * detuning * p.t2() * p.t2());
}

} // namespace

double chaotic_steady_state(const TlsParams& p, double mean_omega, double detuning) {
    if (!(mean_omega >= 0.0)) throw ConfigError("chaotic_steady_state: mean_omega must be >= 0");
    const double s = effective_saturation(p, mean_omega, detuning);
    if (s == 0.0) return 0.0;
    if (s < 1e-3) {
        // 1 - y e^y E1(y) for y = 1/s, asymptotic series in s.
        double term = 1.0;
        double sum = 0.0;
        for (int k = 1; k <= 6; ++k) {
            term *= (k == 1 ? s : -k * s);
            sum += term;
        }
        return 0.5 * sum;
    }
    const double y = 1.0 / s;
    return 0.5 * (1.0 - y * exp1_scaled(y));
}

double chaotic_steady_state_quadrature(const TlsParams& p, double mean_omega, double detuning) {
    if (!(mean_omega >= 0.0)) throw ConfigError("chaotic_steady_state: mean_omega must be >= 0");
    if (mean_omega == 0.0) return 0.0;
    // Integrate over u = Omega^2 / mean^2 with weight e^{-u}.
    auto f = [&](double u) {
        return steady_state_population(p, mean_omega * std::sqrt(u), detuning) * std::exp(-u);
    };
    const double v50 = integrate_adaptive(f, 0.0, 50.0, 1e-13);
    const double v100 = v50 + integrate_adaptive(f, 50.0, 100.0, 1e-13);
    if (std::abs(v100 - v50) > 1e-9 * std::max(v100, 1e-300))
        throw GuardError("chaotic_steady_state_quadrature: cutoff not converged");
    return v50;
}

EnsembleTrace chaotic_transient(const TlsParams& p, const DrivePulse& pulse,
                                const TransientOptions& opts, const RngStream& rng) {
    pulse.validate();
    if (opts.n_samples < 100) throw ConfigError("chaotic_transient: n_samples must be >= 100");
    if (!(opts.t_end > 0.0) || !(opts.dt > 0.0))
        throw ConfigError("chaotic_transient: t_end and dt must be > 0");

    EnsembleTrace result;
    double duration = opts.t_end;
    if (!pulse.envelope.empty()) duration = pulse.envelope.back().stop - pulse.envelope.front().start;
    if (duration > opts.tau_corr / 10.0)
        result.warnings.push_back("pulse duration " + csv::number(duration) +
                                  " ns exceeds tau_corr/10; the quasi-static field assumption is broken");

    const std::size_t n_t = step_count(opts.t_end, opts.dt) + 1;
    const double mean_sq = pulse.rabi * pulse.rabi;

    // Per-chunk Welford accumulators, merged in chunk order.
    struct Accum {
        std::size_t count = 0;
        std::vector<BlochState> mean;
        std::vector<double> m2;
    };
    const auto chunks = make_chunks(opts.n_samples, 256);
    std::vector<Accum> partial(chunks.size());

    for_each_chunk(chunks, opts.workers, [&](std::size_t c, ChunkRange range) {
        Accum acc;
        acc.mean.assign(n_t, BlochState{0.0, 0.0, 0.0});
        acc.m2.assign(n_t, 0.0);
        for (std::size_t i = range.begin; i < range.end; ++i) {
            RngStream stream = rng.split(i);
            DrivePulse sample = pulse;
            sample.rabi = std::sqrt(photonstat::sample_chaotic_intensity(stream, mean_sq));
            sample.statistics = Statistics::Coherent;
            const double limit = max_step(p, sample.rabi * sample.peak_amplitude());
            const int sub = std::max(1, static_cast<int>(std::ceil(opts.dt / limit - 1e-12)));
            const BlochTrace tr = integrate_substepped(p, sample, opts.t_end, opts.dt, sub, BlochState::ground());
            ++acc.count;
            const double inv = 1.0 / static_cast<double>(acc.count);
            for (std::size_t k = 0; k < n_t; ++k) {
                const BlochState& s = tr.samples[k];
                BlochState& m = acc.mean[k];
                const double delta = s.rho11 - m.rho11;
                m.rho11 += delta * inv;
                acc.m2[k] += delta * (s.rho11 - m.rho11);
                m.rho01_re += (s.rho01_re - m.rho01_re) * inv;
                m.rho01_im += (s.rho01_im - m.rho01_im) * inv;
            }
        }
        partial[c] = std::move(acc);
    });

    Accum total = std::move(partial.front());
    for (std::size_t c = 1; c < partial.size(); ++c) {
        const Accum& b = partial[c];
        const double na = static_cast<double>(total.count);
        const double nb = static_cast<double>(b.count);
        const double n = na + nb;
        for (std::size_t k = 0; k < n_t; ++k) {
            BlochState& m = total.mean[k];
            const double delta = b.mean[k].rho11 - m.rho11;
            m.rho11 += delta * nb / n;
            total.m2[k] += b.m2[k] + delta * delta * na * nb / n;
            m.rho01_re += (b.mean[k].rho01_re - m.rho01_re) * nb / n;
            m.rho01_im += (b.mean[k].rho01_im - m.rho01_im) * nb / n;
        }
        total.count += b.count;
    }

    const double n = static_cast<double>(total.count);
    result.mean = BlochTrace{0.0, opts.dt, std::move(total.mean)};
    result.stderr_rho11.resize(n_t);
    for (std::size_t k = 0; k < n_t; ++k)
        result.stderr_rho11[k] = std::sqrt(total.m2[k] / (n - 1.0) / n);
    return result;
}

void write_trace_csv(std::ostream& out, const BlochTrace& trace, const std::vector<double>* stderr_rho11) {
    csv::header(out, stderr_rho11 ? "t_ns,rho11,rho01_re,rho01_im,stderr" : "t_ns,rho11,rho01_re,rho01_im");
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        const auto& s = trace.samples[i];
        if (stderr_rho11)
            csv::row(out, {trace.time(i), s.rho11, s.rho01_re, s.rho01_im, (*stderr_rho11)[i]});
        else
            csv::row(out, {trace.time(i), s.rho11, s.rho01_re, s.rho01_im});
    }
}

} // namespace tlsim::bloch
