#include "tlsim/trajectory.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "tlsim/csv.hpp"
#include "tlsim/fit.hpp"
#include "tlsim/parallel.hpp"
#include "tlsim/photonstat.hpp"

namespace tlsim::trajectory {

namespace {

using cplx = std::complex<double>;
using Ket = std::array<cplx, 2>;

constexpr double kInf = std::numeric_limits<double>::infinity();

// Stream indices reserved for the independent random processes.
constexpr std::uint64_t kSegmentStreams = 1;
constexpr std::uint64_t kChaosStream = 2;
constexpr std::uint64_t kTelegraphStream = 3;

/// exp(-i H_eff tau) for H_eff = -(Delta + i Gamma/2)|1><1| + (Omega/2) sigma_x,
/// written as e^{-i a tau} [cos(l tau) - i sin(l tau)/l B] with B traceless.
class NoJumpPropagator {
  public:
    NoJumpPropagator(double omega, double detuning, double gamma) {
        a_ = 0.5 * cplx(-detuning, -0.5 * gamma);
        off_ = 0.5 * omega;
        lambda_ = std::sqrt(a_ * a_ + off_ * off_);
    }

    Ket apply(const Ket& psi, double tau) const {
        const cplx i{0.0, 1.0};
        const cplx phase = std::exp(-i * a_ * tau);
        const cplx lt = lambda_ * tau;
        const cplx c = std::cos(lt);
        const cplx s = std::abs(lt) < 1e-6 ? tau * (1.0 - lt * lt / 6.0) : std::sin(lt) / lambda_;
        const cplx b0 = -a_ * psi[0] + off_ * psi[1];
        const cplx b1 = off_ * psi[0] + a_ * psi[1];
        return {phase * (c * psi[0] - i * s * b0), phase * (c * psi[1] - i * s * b1)};
    }

  private:
    cplx a_;
    double off_;
    cplx lambda_;
};

double norm2(const Ket& k) { return std::norm(k[0]) + std::norm(k[1]); }

/// Telegraph on/off path over [0, duration], precomputed so that all
/// segments see one consistent process.
class Telegraph {
  public:
    Telegraph() = default;
    Telegraph(const Blinking& b, double duration, RngStream rng) {
        if (!(b.on_fraction > 0.0 && b.on_fraction <= 1.0)) throw ConfigError("blinking: on_fraction must be in (0, 1]");
        if (!(b.tau_blink > 0.0)) throw ConfigError("blinking: tau_blink must be > 0");
        enabled_ = true;
        initial_on_ = rng.uniform() < b.on_fraction;
        if (b.on_fraction == 1.0) {
            initial_on_ = true;
            return;
        }
        const double rate_off = (1.0 - b.on_fraction) / b.tau_blink; // on -> off
        const double rate_on = b.on_fraction / b.tau_blink;          // off -> on
        bool on = initial_on_;
        double t = 0.0;
        while (true) {
            t += rng.exponential() / (on ? rate_off : rate_on);
            if (t > duration) break;
            switches_.push_back(t);
            on = !on;
        }
    }

    bool on(double t) const {
        if (!enabled_) return true;
        const auto n = std::upper_bound(switches_.begin(), switches_.end(), t) - switches_.begin();
        return (n % 2 == 0) == initial_on_;
    }

  private:
    bool enabled_ = false;
    bool initial_on_ = true;
    std::vector<double> switches_;
};

/// Piecewise-constant Rabi frequency: envelope times, for chaotic drive, a
/// per-block amplitude drawn from the exponential intensity law.
class DriveSchedule {
  public:
    DriveSchedule(const DrivePulse& pulse, double tau_corr, const RngStream& chaos)
        : pulse_(pulse), edges_(pulse.edges()), tau_corr_(tau_corr), chaos_(chaos) {
        chaotic_ = pulse.statistics == Statistics::Chaotic;
        if (chaotic_ && !(tau_corr > 0.0)) throw ConfigError("chaotic drive needs tau_corr > 0");
    }

    double omega_at(double t) const {
        double base = pulse_.rabi;
        if (chaotic_) {
            RngStream s = chaos_.split(static_cast<std::uint64_t>(block_of(t)));
            base = std::sqrt(photonstat::sample_chaotic_intensity(s, pulse_.rabi * pulse_.rabi));
        }
        return base * pulse_.amplitude_at(t);
    }

    double next_change(double t) const {
        double next = kInf;
        auto it = std::upper_bound(edges_.begin(), edges_.end(), t);
        if (it != edges_.end()) next = *it;
        if (chaotic_) next = std::min(next, static_cast<double>(block_of(t) + 1) * tau_corr_);
        return next;
    }

    // Index of the block [k tau, (k+1) tau) holding t, robust to rounding of t / tau.
    std::int64_t block_of(double t) const {
        auto k = static_cast<std::int64_t>(std::floor(t / tau_corr_));
        while (static_cast<double>(k + 1) * tau_corr_ <= t) ++k;
        while (static_cast<double>(k) * tau_corr_ > t) --k;
        return k;
    }

    double detuning() const { return pulse_.detuning; }

  private:
    DrivePulse pulse_;
    std::vector<double> edges_;
    double tau_corr_;
    RngStream chaos_;
    bool chaotic_ = false;
};

/// Runs one trajectory from the ground state over [t_start, t_end) and
/// reports every radiative jump at or after t_keep.
void run_trajectory(const TlsParams& p, const DriveSchedule& drive, double t_start, double t_keep, double t_end,
                    RngStream& rng, const std::function<void(double)>& on_emit) {
    const double gamma = p.gamma1();
    const double flip_rate = 0.5 * p.pure_dephasing();
    const double cap = 10.0 * p.t1();

    Ket psi{1.0, 0.0};
    double threshold = rng.uniform();
    double next_flip = flip_rate > 0.0 ? t_start + rng.exponential() / flip_rate : kInf;
    double t = t_start;

    while (t < t_end) {
        const double breakpoint = std::min(drive.next_change(t), t_end);
        const NoJumpPropagator prop(drive.omega_at(t), drive.detuning(), gamma);
        while (t < breakpoint) {
            const bool to_flip = next_flip <= std::min(breakpoint, t + cap);
            const double end = to_flip ? next_flip : std::min(breakpoint, t + cap);
            const Ket cand = prop.apply(psi, end - t);
            if (norm2(cand) > threshold) {
                psi = cand;
                t = end;
                if (to_flip) {
                    psi[1] = -psi[1];
                    next_flip = t + rng.exponential() / flip_rate;
                }
                continue;
            }
            // The norm decreases monotonically; locate the crossing by
            // safeguarded Newton iteration.
            double lo = 0.0;
            double hi = end - t;
            double x = 0.5 * hi;
            for (int it = 0; it < 100 && hi - lo > 1e-12; ++it) {
                const Ket k = prop.apply(psi, x);
                const double f = norm2(k) - threshold;
                if (f > 0.0)
                    lo = x;
                else
                    hi = x;
                const double deriv = -gamma * std::norm(k[1]);
                double nx = deriv < 0.0 ? x - f / deriv : 0.5 * (lo + hi);
                if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
                if (std::abs(nx - x) < 1e-13) {
                    x = nx;
                    break;
                }
                x = nx;
            }
            const double jump_time = t + x;
            if (jump_time >= t_keep) on_emit(jump_time);
            psi = {1.0, 0.0};
            threshold = rng.uniform();
            t = jump_time;
        }
    }
}

} // namespace

std::size_t TagStream::count(int channel) const {
    return static_cast<std::size_t>(
        std::count_if(tags.begin(), tags.end(), [channel](const Tag& t) { return t.channel == channel; }));
}

std::vector<double> simulate_emissions(const TlsParams& p, const DrivePulse& pulse, double duration,
                                       const RngStream& rng) {
    pulse.validate();
    if (!(duration > 0.0)) throw ConfigError("simulate_emissions: duration must be > 0");
    const DriveSchedule drive(pulse, 901.8, rng.split(kChaosStream));
    RngStream stream = rng.split(kSegmentStreams).split(0);
    std::vector<double> out;
    run_trajectory(p, drive, 0.0, 0.0, duration, stream, [&](double t) { out.push_back(t); });
    return out;
}

TagStream simulate_tags(const TlsParams& p, const DrivePulse& pulse, const TagOptions& opts, const RngStream& rng) {
    pulse.validate();
    if (!(opts.duration > 0.0)) throw ConfigError("simulate_tags: duration must be > 0");
    if (!(opts.efficiency > 0.0 && opts.efficiency <= 1.0)) throw ConfigError("simulate_tags: efficiency must be in (0, 1]");
    if (!(opts.segment_length > 0.0) || !(opts.burn_in >= 0.0)) throw ConfigError("simulate_tags: bad segmentation");

    const DriveSchedule drive(pulse, opts.tau_corr, rng.split(kChaosStream));
    const Telegraph telegraph =
        opts.blinking ? Telegraph(*opts.blinking, opts.duration, rng.split(kTelegraphStream)) : Telegraph();

    const auto n_seg = static_cast<std::size_t>(std::ceil(opts.duration / opts.segment_length));
    std::vector<std::vector<Tag>> per_segment(n_seg);
    for_each_chunk(make_chunks(n_seg, 1), opts.workers, [&](std::size_t, ChunkRange r) {
        for (std::size_t s = r.begin; s < r.end; ++s) {
            const double keep = static_cast<double>(s) * opts.segment_length;
            const double end = std::min(opts.duration, keep + opts.segment_length);
            const double start = s == 0 ? 0.0 : keep - opts.burn_in;
            RngStream stream = rng.split(kSegmentStreams).split(s);
            auto& out = per_segment[s];
            run_trajectory(p, drive, start, keep, end, stream, [&](double t) {
                const bool detected = stream.uniform() < opts.efficiency;
                const std::uint8_t channel = stream.uniform() < 0.5 ? 1 : 2;
                if (detected && telegraph.on(t)) out.push_back({t, channel});
            });
        }
    });

    TagStream result;
    result.duration = opts.duration;
    std::size_t total = 0;
    for (const auto& seg : per_segment) total += seg.size();
    result.tags.reserve(total);
    for (const auto& seg : per_segment) result.tags.insert(result.tags.end(), seg.begin(), seg.end());
    return result;
}

TagStream apply_detector(const TagStream& stream, const DetectorOptions& det, const RngStream& rng) {
    if (!(det.pair_jitter_fwhm >= 0.0) || !(det.dark_rate >= 0.0) || !(det.dead_time >= 0.0))
        throw ConfigError("apply_detector: jitter, dark rate and dead time must be >= 0");
    RngStream jitter_rng = rng.split(0);
    TagStream out;
    out.duration = stream.duration;
    out.tags.reserve(stream.tags.size());
    const double sigma = det.pair_jitter_fwhm / std::sqrt(2.0) / kGaussFwhmPerSigma;
    for (const Tag& tag : stream.tags) {
        const double t = sigma > 0.0 ? tag.time + sigma * jitter_rng.normal() : tag.time;
        if (t >= 0.0 && t <= stream.duration) out.tags.push_back({t, tag.channel});
    }
    if (det.dark_rate > 0.0) {
        for (std::uint8_t ch = 1; ch <= 2; ++ch) {
            RngStream dark = rng.split(ch);
            double t = dark.exponential() / det.dark_rate;
            while (t <= stream.duration) {
                out.tags.push_back({t, ch});
                t += dark.exponential() / det.dark_rate;
            }
        }
    }
    std::sort(out.tags.begin(), out.tags.end(), [](const Tag& a, const Tag& b) {
        return a.time < b.time || (a.time == b.time && a.channel < b.channel);
    });
    if (det.dead_time > 0.0) {
        std::array<double, 3> last{-kInf, -kInf, -kInf};
        std::vector<Tag> kept;
        kept.reserve(out.tags.size());
        for (const Tag& tag : out.tags) {
            if (tag.time - last[tag.channel] >= det.dead_time) {
                kept.push_back(tag);
                last[tag.channel] = tag.time;
            }
        }
        out.tags = std::move(kept);
    }
    return out;
}

std::vector<double> CoincidenceHistogram::c_norm_stderr() const {
    std::vector<double> se(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double c = std::max<double>(1.0, static_cast<double>(counts[k]));
        se[k] = c_norm[k] == 0.0 ? std::sqrt(c) * (c_norm.empty() ? 0.0 : 1.0) : c_norm[k] / std::sqrt(c);
    }
    // Empty bins: scale one count by the normalization factor.
    const double norm = static_cast<double>(n1) * static_cast<double>(n2) * bin_width / duration;
    for (std::size_t k = 0; k < counts.size(); ++k)
        if (counts[k] == 0) se[k] = 1.0 / norm;
    return se;
}

CoincidenceHistogram correlate(const TagStream& stream, double bin_width, double max_lag) {
    if (!(bin_width > 0.0)) throw ConfigError("correlate: bin width must be > 0");
    if (!(max_lag > 0.0) || max_lag > stream.duration / 10.0)
        throw ConfigError("correlate: max_lag must lie in (0, duration/10]");
    std::vector<double> starts;
    std::vector<double> stops;
    for (const Tag& t : stream.tags) (t.channel == 1 ? starts : stops).push_back(t.time);
    if (starts.empty() || stops.empty()) throw ConfigError("correlate: both channels need at least one tag");

    CoincidenceHistogram h;
    const auto half = std::llround(max_lag / bin_width);
    const std::size_t nb = static_cast<std::size_t>(2 * half + 1);
    h.bin_width = bin_width;
    h.max_lag = static_cast<double>(half) * bin_width;
    h.counts.assign(nb, 0);
    for (long long k = -half; k <= half; ++k) h.lags.push_back(static_cast<double>(k) * bin_width);
    h.n1 = starts.size();
    h.n2 = stops.size();
    h.duration = stream.duration;

    const double lo = -(static_cast<double>(half) + 0.5) * bin_width;
    const double hi = (static_cast<double>(half) + 0.5) * bin_width;
    std::size_t first = 0;
    for (double t1 : starts) {
        while (first < stops.size() && stops[first] - t1 < lo) ++first;
        for (std::size_t j = first; j < stops.size(); ++j) {
            const double d = stops[j] - t1;
            if (d >= hi) break;
            const auto bin = static_cast<std::size_t>(std::floor((d - lo) / bin_width));
            if (bin < nb) ++h.counts[bin];
        }
    }
    // R1 R2 w T with R_i = N_i / T.
    const double norm = static_cast<double>(h.n1) * static_cast<double>(h.n2) * bin_width / stream.duration;
    h.c_norm.resize(nb);
    for (std::size_t k = 0; k < nb; ++k) h.c_norm[k] = static_cast<double>(h.counts[k]) / norm;
    return h;
}

ExponentialFit fit_bidirectional_exponential(const CoincidenceHistogram& hist, double min_abs_lag) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (std::size_t k = 0; k < hist.lags.size(); ++k) {
        if (std::abs(hist.lags[k]) < min_abs_lag) continue;
        xs.push_back(hist.lags[k]);
        ys.push_back(hist.c_norm[k]);
    }
    if (xs.size() < 6) throw ConfigError("fit_bidirectional_exponential: too few bins beyond min_abs_lag");
    // Outer tenth of the lag range fixes the baseline guess.
    double base = 0.0;
    double peak = 0.0;
    std::size_t nbase = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (std::abs(xs[k]) > 0.9 * hist.max_lag) {
            base += ys[k];
            ++nbase;
        }
        if (std::abs(xs[k]) < min_abs_lag + 2.0 * hist.bin_width) peak = std::max(peak, ys[k]);
    }
    base = nbase ? base / static_cast<double>(nbase) : 1.0;
    const Model model = [](double tau, std::span<const double> q) {
        return q[0] + q[1] * std::exp(-std::abs(tau) / q[2]);
    };
    const FitResult fit = least_squares(model, xs, ys, {base, peak - base, hist.max_lag / 5.0});
    return {fit.params[0], fit.params[1], std::abs(fit.params[2]), fit.std_errors[2], fit.converged};
}

void write_tags_csv(std::ostream& out, const TagStream& stream) {
    csv::header(out, "time_ns,channel");
    for (const Tag& t : stream.tags) out << csv::number(t.time) << ',' << static_cast<int>(t.channel) << '\n';
}

TagStream read_tags_csv(std::istream& in, double duration) {
    std::string line;
    if (!std::getline(in, line) || line != "time_ns,channel") throw ConfigError("tag file: missing header time_ns,channel");
    TagStream s;
    s.duration = duration;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto comma = line.find(',');
        double t = 0.0;
        int ch = 0;
        try {
            if (comma == std::string::npos) throw std::invalid_argument("no comma");
            t = std::stod(line.substr(0, comma));
            ch = std::stoi(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw ConfigError("tag file line " + std::to_string(lineno) + ": cannot parse '" + line + "'");
        }
        if (ch != 1 && ch != 2) throw ConfigError("tag file line " + std::to_string(lineno) + ": channel must be 1 or 2");
        if (t < 0.0 || t > duration) throw ConfigError("tag file line " + std::to_string(lineno) + ": time outside [0, T]");
        if (!s.tags.empty() && t < s.tags.back().time)
            throw ConfigError("tag file line " + std::to_string(lineno) + ": tags not sorted");
        s.tags.push_back({t, static_cast<std::uint8_t>(ch)});
    }
    return s;
}

void write_histogram_csv(std::ostream& out, const CoincidenceHistogram& hist) {
    csv::header(out, "lag_ns,counts,c_norm");
    for (std::size_t k = 0; k < hist.lags.size(); ++k)
        out << csv::number(hist.lags[k]) << ',' << hist.counts[k] << ',' << csv::number(hist.c_norm[k]) << '\n';
}

} // namespace tlsim::trajectory
