#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tlsim/bloch.hpp"
#include "tlsim/csv.hpp"
#include "tlsim/emission.hpp"
#include "tlsim/lamp.hpp"
#include "tlsim/photonstat.hpp"
#include "tlsim/trajectory.hpp"

namespace tlsim::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kCommands = {"saturation", "rabi", "mollow", "g2", "lamp", "linewidth", "tags", "validate"};

json blinking_defaults() { return {{"enabled", false}, {"on_fraction", 0.5}, {"tau_blink_ns", 405.0}}; }

} // namespace

json default_config() {
    return {
        {"parameter_set", "paper-qd"},
        {"parameter_file", ""},
        {"t1_ns", nullptr},
        {"t2_ns", nullptr},
        {"fpi_fwhm_ghz", nullptr},
        {"detector_fwhm_ns", nullptr},
        {"seed", 20240601u},
        {"workers", 1u},
        {"saturation", {{"s_min", 0.01}, {"s_max", 100.0}, {"points", 41u}, {"include_zero", true}}},
        {"rabi",
         {{"omegas", {5.2, 6.6, 7.2}},
          {"pulse_ns", 2.0},
          {"t_end_ns", 2.5},
          {"dt_ns", 0.005},
          {"samples", 10000u},
          {"tau_corr_ns", 901.8}}},
        {"mollow", {{"omegas", {5.2, 6.6, 7.2}}, {"half_span_ghz", 4.0}, {"step_ghz", 0.005}, {"order", 96u}}},
        {"g2",
         {{"omega", 1.7},
          {"statistics", "coherent"},
          {"max_lag_ns", 5.0},
          {"step_ns", 0.01},
          {"irf", true},
          {"blinking", blinking_defaults()},
          {"tau_corr_ns", 901.8},
          {"tags", 1000000u},
          {"efficiency", 1.0},
          {"bin_ns", 0.25}}},
        {"lamp",
         {{"tau_corr_ns", 901.8}, {"dt_ns", 20.0}, {"samples", 1048576u}, {"max_lag_ns", 4000.0}, {"field_stride", 100u}}},
        {"linewidth", {{"s_min", 0.01}, {"s_max", 100.0}, {"points", 41u}}},
        {"tags",
         {{"omega", 1.7},
          {"statistics", "coherent"},
          {"tags", 1000000u},
          {"efficiency", 1.0},
          {"blinking", blinking_defaults()},
          {"tau_corr_ns", 901.8},
          {"segment_ns", 1e5},
          {"jitter_fwhm_ns", nullptr},
          {"dark_rate_per_ns", 0.0},
          {"dead_time_ns", 0.0},
          {"bin_ns", 0.25},
          {"max_lag_ns", 10.0}}},
    };
}

json preset(const std::string& name) {
    if (name == "fig2") return {{"saturation", {{"s_min", 0.01}, {"s_max", 100.0}, {"points", 41u}}}};
    if (name == "fig3")
        return {{"rabi", {{"omegas", {5.2, 6.6, 7.2}}, {"pulse_ns", 2.0}, {"t_end_ns", 2.5}, {"samples", 10000u}}}};
    if (name == "fig4") return {{"mollow", {{"omegas", {5.2, 6.6, 7.2}}, {"half_span_ghz", 4.0}, {"step_ghz", 0.005}}}};
    if (name == "fig5")
        return {{"g2", {{"omega", 1.7}, {"statistics", "coherent"}, {"max_lag_ns", 5.0}, {"tags", 1000000u}}}};
    if (name == "figS2") return {{"linewidth", {{"s_min", 0.01}, {"s_max", 100.0}, {"points", 41u}}}};
    if (name == "figS3")
        return {{"g2",
                 {{"omega", 1.7},
                  {"statistics", "coherent"},
                  {"max_lag_ns", 4000.0},
                  {"step_ns", 1.0},
                  {"irf", false},
                  {"blinking", {{"enabled", true}, {"on_fraction", 0.5}, {"tau_blink_ns", 405.0}}},
                  {"tags", 1000000u},
                  {"bin_ns", 20.0}}}};
    if (name == "fig1c") return {{"lamp", {{"tau_corr_ns", 901.8}, {"samples", 1048576u}}}};
    throw ConfigError("unknown preset '" + name + "' (expected fig2|fig3|fig4|fig5|figS2|figS3|fig1c)");
}

std::string preset_command(const std::string& name) {
    static const std::map<std::string, std::string> m = {{"fig2", "saturation"}, {"fig3", "rabi"},    {"fig4", "mollow"},
                                                         {"fig5", "g2"},         {"figS2", "linewidth"}, {"figS3", "g2"},
                                                         {"fig1c", "lamp"}};
    const auto it = m.find(name);
    if (it == m.end()) preset(name); // throws
    return it->second;
}

void merge_config(json& base, const json& patch, const std::string& path) {
    const std::string where = path.empty() ? "/" : path;
    if (base.is_object()) {
        if (!patch.is_object()) throw ConfigError("config " + where + ": expected an object");
        for (auto it = patch.begin(); it != patch.end(); ++it) {
            const std::string key_path = path + "/" + it.key();
            if (!base.contains(it.key())) throw ConfigError("config " + key_path + ": unknown key");
            merge_config(base[it.key()], it.value(), key_path);
        }
        return;
    }
    auto type_error = [&](const std::string& what) { throw ConfigError("config " + where + ": expected " + what); };
    if (base.is_null()) {
        if (!patch.is_null() && !patch.is_number()) type_error("a number or null");
    } else if (base.is_boolean()) {
        if (!patch.is_boolean()) type_error("true or false");
    } else if (base.is_string()) {
        if (!patch.is_string()) type_error("a string");
    } else if (base.is_number_unsigned()) {
        if (!patch.is_number_integer() || (patch.is_number_integer() && patch.get<std::int64_t>() < 0 && !patch.is_number_unsigned()))
            type_error("a non-negative integer");
    } else if (base.is_number()) {
        if (!patch.is_number()) type_error("a number");
    } else if (base.is_array()) {
        if (!patch.is_array()) type_error("an array of numbers");
        for (const auto& v : patch)
            if (!v.is_number()) type_error("an array of numbers");
    }
    base = patch;
}

json parse_config(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // Translate the byte offset into line and column.
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON (" +
                          e.what() + ")");
    }
}

namespace {

// ---------------------------------------------------------------------------
// Effective run state

struct Context {
    json config;
    ParameterSet params;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    fs::path out_dir;
    std::ostream* log = nullptr;
    json report = json::object();
    std::vector<std::string> outputs;

    RngStream rng(std::uint64_t stream) const { return RngStream(seed).split(stream); }

    std::ofstream open(const std::string& name) {
        std::ofstream f(out_dir / name, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + (out_dir / name).string());
        outputs.push_back(name);
        return f;
    }
};

double positive(const json& section, const char* key, const std::string& where) {
    const double v = section.at(key).get<double>();
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("config /" + where + "/" + key + ": must be > 0");
    return v;
}

double non_negative(const json& section, const char* key, const std::string& where) {
    const double v = section.at(key).get<double>();
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("config /" + where + "/" + key + ": must be >= 0");
    return v;
}

std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
        out[i] = std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
    }
    return out;
}

std::vector<double> s_grid(const json& sec, const std::string& where) {
    const double lo = positive(sec, "s_min", where);
    const double hi = positive(sec, "s_max", where);
    const auto n = sec.at("points").get<std::size_t>();
    if (hi < lo || n < 2) throw ConfigError("config /" + where + ": need s_min <= s_max and points >= 2");
    return log_grid(lo, hi, n);
}

std::vector<double> omega_list(const json& sec, const std::string& where) {
    auto v = sec.at("omegas").get<std::vector<double>>();
    if (v.empty()) throw ConfigError("config /" + where + "/omegas: must not be empty");
    for (double w : v)
        if (!(w >= 0.0)) throw ConfigError("config /" + where + "/omegas: values must be >= 0");
    return v;
}

std::optional<trajectory::Blinking> blinking_of(const json& b, const std::string& where) {
    if (!b.at("enabled").get<bool>()) return std::nullopt;
    const double beta = b.at("on_fraction").get<double>();
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("config /" + where + "/blinking/on_fraction: must be in (0, 1]");
    return trajectory::Blinking{beta, positive(b, "tau_blink_ns", where + "/blinking")};
}

Statistics statistics_of(const json& sec, const std::string& where) {
    try {
        return statistics_from_string(sec.at("statistics").get<std::string>());
    } catch (const ConfigError& e) {
        throw ConfigError("config /" + where + "/statistics: " + e.what());
    }
}

std::string label(double x) { return csv::number(x); }

// Expected detected tag rate for a CW drive, before channel splitting.
double expected_rate(const TlsParams& p, double omega, Statistics stats, double efficiency,
                     const std::optional<trajectory::Blinking>& blink) {
    const double pop = stats == Statistics::Chaotic ? bloch::chaotic_steady_state(p, omega)
                                                    : bloch::steady_state_population(p, omega);
    return efficiency * pop / p.t1() * (blink ? blink->on_fraction : 1.0);
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_saturation(Context& ctx) {
    const json& sec = ctx.config["saturation"];
    const TlsParams& p = ctx.params.tls;
    auto grid = s_grid(sec, "saturation");
    if (sec.at("include_zero").get<bool>()) grid.insert(grid.begin(), 0.0);
    auto f = ctx.open("saturation.csv");
    csv::header(f, "S,coherent_rho11,chaotic_rho11");
    for (double s : grid) {
        const double w = omega_from_saturation(s, p);
        csv::row(f, {s, bloch::steady_state_population(p, w), bloch::chaotic_steady_state(p, w)});
    }
    return kOk;
}

int cmd_rabi(Context& ctx) {
    const json& sec = ctx.config["rabi"];
    const TlsParams& p = ctx.params.tls;
    const double pulse_ns = positive(sec, "pulse_ns", "rabi");
    bloch::TransientOptions opts;
    opts.t_end = positive(sec, "t_end_ns", "rabi");
    opts.dt = positive(sec, "dt_ns", "rabi");
    opts.n_samples = sec.at("samples").get<std::size_t>();
    opts.tau_corr = positive(sec, "tau_corr_ns", "rabi");
    opts.workers = ctx.workers;
    json warnings = json::array();
    for (std::size_t k = 0; auto omega : omega_list(sec, "rabi")) {
        const auto coh = DrivePulse::square(omega, 0.0, pulse_ns);
        // Sample the RK4 grid finely enough for the guard, record at dt.
        const int sub = std::max(1, static_cast<int>(std::ceil(opts.dt / bloch::max_step(p, omega) - 1e-12)));
        const auto trace = bloch::integrate_substepped(p, coh, opts.t_end, opts.dt, sub, bloch::BlochState::ground());
        auto fc = ctx.open("rabi_coherent_" + label(omega) + ".csv");
        bloch::write_trace_csv(fc, trace);

        const auto cha = DrivePulse::square(omega, 0.0, pulse_ns, Statistics::Chaotic);
        const auto ens = bloch::chaotic_transient(p, cha, opts, ctx.rng(k++));
        auto fx = ctx.open("rabi_chaotic_" + label(omega) + ".csv");
        bloch::write_trace_csv(fx, ens.mean, &ens.stderr_rho11);
        for (const auto& w : ens.warnings) {
            warnings.push_back(w);
            *ctx.log << "warning: " << w << '\n';
        }
    }
    ctx.report["warnings"] = warnings;
    return kOk;
}

int cmd_mollow(Context& ctx) {
    const json& sec = ctx.config["mollow"];
    const TlsParams& p = ctx.params.tls;
    const auto grid = emission::FrequencyGrid::symmetric(positive(sec, "half_span_ghz", "mollow"),
                                                         positive(sec, "step_ghz", "mollow"));
    const int order = sec.at("order").get<int>();
    const double fpi = ctx.params.irf.fpi_fwhm_ghz;
    for (double omega : omega_list(sec, "mollow")) {
        const auto coh = emission::qrt_spectrum(p, omega, 0.0, grid);
        auto fc = ctx.open("mollow_coherent_" + label(omega) + ".csv");
        emission::write_spectrum_csv(fc, coh, emission::convolve_lorentzian(coh, fpi));
        const auto cha = emission::chaotic_spectrum(p, omega, grid, order, 0.0, ctx.workers);
        auto fx = ctx.open("mollow_chaotic_" + label(omega) + ".csv");
        emission::write_spectrum_csv(fx, cha, emission::convolve_lorentzian(cha, fpi));
    }
    return kOk;
}

int cmd_g2(Context& ctx) {
    const json& sec = ctx.config["g2"];
    const TlsParams& p = ctx.params.tls;
    const double omega = positive(sec, "omega", "g2");
    const Statistics stats = statistics_of(sec, "g2");
    const double max_lag = positive(sec, "max_lag_ns", "g2");
    const double step = positive(sec, "step_ns", "g2");
    const double tau_corr = positive(sec, "tau_corr_ns", "g2");
    const auto blink = blinking_of(sec.at("blinking"), "g2");
    const bool irf = sec.at("irf").get<bool>();
    const double jitter = ctx.params.irf.detector_fwhm_ns;

    const auto lags = emission::symmetric_lags(max_lag, step);
    auto g = stats == Statistics::Chaotic ? emission::chaotic_g2(p, omega, lags, 64, tau_corr)
                                          : emission::qrt_g2(p, omega, 0.0, lags);
    {
        auto f = ctx.open("g2_analytic.csv");
        emission::write_g2_csv(f, g);
    }
    if (blink) g = emission::blinking_envelope(g, blink->on_fraction, blink->tau_blink);
    if (irf) g = emission::convolve_gaussian(g, jitter);
    {
        auto f = ctx.open("g2_model.csv");
        emission::write_g2_csv(f, g);
    }

    const auto n_tags = sec.at("tags").get<std::uint64_t>();
    if (n_tags == 0) return kOk;
    const double eff = sec.at("efficiency").get<double>();
    trajectory::TagOptions opts;
    opts.efficiency = eff;
    opts.blinking = blink;
    opts.tau_corr = tau_corr;
    opts.workers = ctx.workers;
    opts.duration = std::max(static_cast<double>(n_tags) / expected_rate(p, omega, stats, eff, blink), 10.0 * max_lag);
    const auto pulse = DrivePulse::cw(omega, 0.0, stats);
    auto stream = trajectory::simulate_tags(p, pulse, opts, ctx.rng(0));
    if (irf) stream = trajectory::apply_detector(stream, jitter, ctx.rng(1));
    const auto hist = trajectory::correlate(stream, positive(sec, "bin_ns", "g2"), max_lag);
    auto f = ctx.open("g2_tags.csv");
    trajectory::write_histogram_csv(f, hist);
    ctx.report["tags"] = {{"duration_ns", opts.duration}, {"n1", hist.n1}, {"n2", hist.n2}};
    if (blink) {
        const auto fit = trajectory::fit_bidirectional_exponential(hist, std::max(10.0 * p.t1(), hist.bin_width));
        ctx.report["bidirectional_fit"] = {{"baseline", fit.baseline},
                                           {"amplitude", fit.amplitude},
                                           {"tau_ns", fit.tau},
                                           {"tau_se_ns", fit.tau_se},
                                           {"converged", fit.converged}};
    }
    return kOk;
}

int cmd_lamp(Context& ctx) {
    const json& sec = ctx.config["lamp"];
    const double tau = positive(sec, "tau_corr_ns", "lamp");
    const double dt = positive(sec, "dt_ns", "lamp");
    const auto n = sec.at("samples").get<std::size_t>();
    const auto field = lamp::synthesize_field(tau, dt, n, ctx.rng(0));
    const double max_lag = positive(sec, "max_lag_ns", "lamp");
    const auto g1 = lamp::estimate_g1(field, max_lag);
    const auto g2 = lamp::estimate_g2(field, max_lag);
    const auto fit = lamp::fit_gaussian_g2(g2);
    {
        auto f = ctx.open("lamp_field.csv");
        lamp::write_field_csv(f, field, sec.at("field_stride").get<std::size_t>());
    }
    {
        auto f = ctx.open("lamp_g1.csv");
        lamp::write_correlation_csv(f, g1);
    }
    {
        auto f = ctx.open("lamp_g2.csv");
        lamp::write_correlation_csv(f, g2);
    }
    double siegert = 0.0;
    for (std::size_t k = 0; k < g1.values.size(); ++k)
        siegert = std::max(siegert, std::abs(g2.values[k] - photonstat::g2_from_g1(g1.values[k])));
    ctx.report["fit"] = {{"amplitude", fit.amplitude},     {"tau_corr_ns", fit.tau_corr},
                         {"amplitude_se", fit.amplitude_se}, {"tau_corr_se_ns", fit.tau_corr_se},
                         {"rms_residual", fit.rms_residual}, {"converged", fit.converged},
                         {"identifiable", fit.identifiable}};
    ctx.report["g2_zero"] = g2.values.front();
    ctx.report["max_siegert_residual"] = siegert;
    // Two linewidth conventions: periodogram FWHM and the Gaussian-pair value.
    ctx.report["spectral_fwhm_analytic_mhz"] = 1e3 * 0.664 / tau;
    ctx.report["spectral_fwhm_periodogram_mhz"] = nullptr;
    const std::size_t segment = std::min<std::size_t>(4096, n / 8);
    if (segment >= 16) {
        try {
            ctx.report["spectral_fwhm_periodogram_mhz"] = 1e3 * lamp::spectral_fwhm_ghz(field, segment);
        } catch (const GuardError& e) {
            *ctx.log << "warning: " << e.what() << '\n';
        }
    }
    return kOk;
}

// Detuning FWHM of the steady-state population, located by bisection.
double scanned_fwhm(const TlsParams& p, double omega) {
    const double half = 0.5 * bloch::steady_state_population(p, omega);
    double lo = 0.0;
    double hi = 1.0 / p.t2();
    while (bloch::steady_state_population(p, omega, hi) > half) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
        const double mid = 0.5 * (lo + hi);
        (bloch::steady_state_population(p, omega, mid) > half ? lo : hi) = mid;
    }
    return 2.0 * 0.5 * (lo + hi);
}

int cmd_linewidth(Context& ctx) {
    const json& sec = ctx.config["linewidth"];
    const TlsParams& p = ctx.params.tls;
    auto f = ctx.open("linewidth.csv");
    csv::header(f, "S,fwhm_ghz,fwhm_scan_ghz");
    csv::row(f, {0.0, to_ghz(power_linewidth(0.0, p)), to_ghz(2.0 / p.t2())});
    for (double s : s_grid(sec, "linewidth")) {
        const double w = omega_from_saturation(s, p);
        csv::row(f, {s, to_ghz(power_linewidth(w, p)), to_ghz(scanned_fwhm(p, w))});
    }
    return kOk;
}

int cmd_tags(Context& ctx) {
    const json& sec = ctx.config["tags"];
    const TlsParams& p = ctx.params.tls;
    const double omega = positive(sec, "omega", "tags");
    const Statistics stats = statistics_of(sec, "tags");
    const auto blink = blinking_of(sec.at("blinking"), "tags");
    const double eff = sec.at("efficiency").get<double>();
    const auto n_tags = sec.at("tags").get<std::uint64_t>();
    if (n_tags == 0) throw ConfigError("config /tags/tags: must be > 0");
    const double max_lag = positive(sec, "max_lag_ns", "tags");

    trajectory::TagOptions opts;
    opts.efficiency = eff;
    opts.blinking = blink;
    opts.tau_corr = positive(sec, "tau_corr_ns", "tags");
    opts.segment_length = positive(sec, "segment_ns", "tags");
    opts.workers = ctx.workers;
    opts.duration = std::max(static_cast<double>(n_tags) / expected_rate(p, omega, stats, eff, blink), 10.0 * max_lag);

    trajectory::DetectorOptions det;
    det.pair_jitter_fwhm =
        sec.at("jitter_fwhm_ns").is_null() ? ctx.params.irf.detector_fwhm_ns : sec.at("jitter_fwhm_ns").get<double>();
    det.dark_rate = non_negative(sec, "dark_rate_per_ns", "tags");
    det.dead_time = non_negative(sec, "dead_time_ns", "tags");

    const auto raw = trajectory::simulate_tags(p, DrivePulse::cw(omega, 0.0, stats), opts, ctx.rng(0));
    const auto stream = trajectory::apply_detector(raw, det, ctx.rng(1));
    {
        auto f = ctx.open("tags.csv");
        trajectory::write_tags_csv(f, stream);
    }
    const auto hist = trajectory::correlate(stream, positive(sec, "bin_ns", "tags"), max_lag);
    {
        auto f = ctx.open("tags_histogram.csv");
        trajectory::write_histogram_csv(f, hist);
    }
    ctx.report["duration_ns"] = stream.duration;
    ctx.report["n1"] = stream.count(1);
    ctx.report["n2"] = stream.count(2);
    ctx.report["detector"] = {{"pair_jitter_fwhm_ns", det.pair_jitter_fwhm},
                              {"per_detector_jitter_fwhm_ns", det.pair_jitter_fwhm / std::sqrt(2.0)},
                              {"dark_rate_per_ns", det.dark_rate},
                              {"dead_time_ns", det.dead_time}};
    return kOk;
}

// Cross-module oracle checks at reduced scale.
int cmd_validate(Context& ctx) {
    const TlsParams& p = ctx.params.tls;
    bool all = true;
    json checks = json::array();
    auto record = [&](const std::string& name, bool ok, double value, double tol) {
        *ctx.log << (ok ? "PASS " : "FAIL ") << name << " value=" << csv::number(value) << " tol=" << csv::number(tol)
                 << '\n';
        checks.push_back({{"name", name}, {"pass", ok}, {"value", value}, {"tolerance", tol}});
        all = all && ok;
    };

    {
        double worst = 0.0;
        for (double s : {0.01, 0.1, 1.0, 10.0, 100.0}) {
            const double w = omega_from_saturation(s, p);
            const auto tr = bloch::integrate(p, DrivePulse::cw(w), 20.0 * p.t1() + 10.0 * p.t2(), bloch::max_step(p, w));
            worst = std::max(worst, std::abs(tr.samples.back().rho11 - bloch::steady_state_population(p, w)));
        }
        record("steady_state_vs_rk4", worst < 1e-6, worst, 1e-6);
    }
    {
        double worst = 0.0;
        for (double s : {0.01, 0.1, 1.0, 10.0, 100.0}) {
            const double w = omega_from_saturation(s, p);
            const double a = bloch::chaotic_steady_state(p, w);
            worst = std::max(worst, std::abs(a - bloch::chaotic_steady_state_quadrature(p, w)) / a);
        }
        record("chaotic_closed_form_vs_quadrature", worst < 1e-6, worst, 1e-6);
    }
    {
        const double tau = 10.0;
        const auto field = lamp::synthesize_field(tau, 0.25, 1 << 18, ctx.rng(10));
        const auto g1 = lamp::estimate_g1(field, 3.0 * tau);
        const auto g2 = lamp::estimate_g2(field, 3.0 * tau);
        double worst = 0.0;
        for (std::size_t k = 0; k < g1.values.size(); ++k)
            worst = std::max(worst, std::abs(g2.values[k] - photonstat::g2_from_g1(g1.values[k])));
        record("siegert_relation", worst < 0.05, worst, 0.05);
    }
    {
        const double omega = omega_from_saturation(0.6, p);
        const double jitter = ctx.params.irf.detector_fwhm_ns;
        trajectory::TagOptions opts;
        opts.duration = 2e5 / expected_rate(p, omega, Statistics::Coherent, 1.0, std::nullopt);
        opts.workers = ctx.workers;
        const auto raw = trajectory::simulate_tags(p, DrivePulse::cw(omega), opts, ctx.rng(11));
        const auto hist = trajectory::correlate(trajectory::apply_detector(raw, jitter, ctx.rng(12)), 0.5, 5.0);
        const auto se = hist.c_norm_stderr();
        const double fine = 0.01;
        const auto model = emission::convolve_gaussian(
            emission::qrt_g2(p, omega, 0.0, emission::symmetric_lags(8.0, fine)), jitter);
        double worst = 0.0;
        for (std::size_t k = 0; k < hist.lags.size(); ++k) {
            double avg = 0.0;
            int n = 0;
            for (std::size_t j = 0; j < model.lags_ns.size(); ++j) {
                if (std::abs(model.lags_ns[j] - hist.lags[k]) < 0.5 * hist.bin_width - 1e-9) {
                    avg += model.values[j];
                    ++n;
                }
            }
            worst = std::max(worst, std::abs(hist.c_norm[k] - avg / n) / se[k]);
        }
        record("tag_correlator_vs_analytic_g2", worst < 3.0, worst, 3.0);
    }
    ctx.report["checks"] = checks;
    return all ? kOk : kValidationFailed;
}

const std::map<std::string, std::function<int(Context&)>>& handlers() {
    static const std::map<std::string, std::function<int(Context&)>> h = {
        {"saturation", cmd_saturation}, {"rabi", cmd_rabi}, {"mollow", cmd_mollow}, {"g2", cmd_g2},
        {"lamp", cmd_lamp}, {"linewidth", cmd_linewidth}, {"tags", cmd_tags}, {"validate", cmd_validate}};
    return h;
}

ParameterSet resolve_parameters(const json& cfg) {
    ParamRegistry reg;
    const auto file = cfg.at("parameter_file").get<std::string>();
    if (!file.empty()) reg.load_file(file);
    ParameterSet set = reg.get(cfg.at("parameter_set").get<std::string>());
    const double t1 = cfg.at("t1_ns").is_null() ? set.tls.t1() : cfg.at("t1_ns").get<double>();
    const double t2 = cfg.at("t2_ns").is_null() ? set.tls.t2() : cfg.at("t2_ns").get<double>();
    set.tls = TlsParams::make(t1, t2);
    if (!cfg.at("fpi_fwhm_ghz").is_null()) set.irf.fpi_fwhm_ghz = cfg.at("fpi_fwhm_ghz").get<double>();
    if (!cfg.at("detector_fwhm_ns").is_null()) set.irf.detector_fwhm_ns = cfg.at("detector_fwhm_ns").get<double>();
    set.irf.validate();
    return set;
}

void apply_samples(json& cfg, const std::string& command, std::uint64_t samples) {
    if (command == "rabi")
        cfg["rabi"]["samples"] = samples;
    else if (command == "lamp")
        cfg["lamp"]["samples"] = samples;
    else if (command == "g2")
        cfg["g2"]["tags"] = samples;
    else if (command == "tags")
        cfg["tags"]["tags"] = samples;
    else
        throw ConfigError("--samples does not apply to '" + command + "'");
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-level emitter under coherent and chaotic drive: simulations and oracle checks", "tlsim"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string config_path;
    std::string preset_name;
    std::optional<std::uint64_t> seed;
    std::string out_path = ".";
    std::optional<std::uint64_t> samples;
    std::optional<unsigned> workers;
    bool validate_flag = false;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--preset", preset_name, "fig2|fig3|fig4|fig5|figS2|figS3|fig1c");
    app.add_option("--seed", seed, "random seed (u64)");
    app.add_option("--out", out_path, "output directory");
    app.add_option("--samples", samples, "Monte Carlo sample or tag count of the command");
    app.add_option("--workers", workers, "worker threads (results do not depend on it)");
    app.add_flag("--validate", validate_flag, "run the cross-module oracle suite");
    for (const auto& c : kCommands) app.add_subcommand(c);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        std::string command;
        for (const auto* sub : app.get_subcommands()) command = sub->get_name();
        if (validate_flag) {
            if (!command.empty() && command != "validate") throw ConfigError("--validate conflicts with '" + command + "'");
            command = "validate";
        }
        if (!preset_name.empty()) {
            const std::string owner = preset_command(preset_name);
            if (command.empty()) command = owner;
            if (command != owner)
                throw ConfigError("preset '" + preset_name + "' belongs to '" + owner + "', not '" + command + "'");
        }
        if (command.empty()) throw ConfigError("no subcommand given (" + app.help() + ")");

        json cfg = default_config();
        if (!preset_name.empty()) merge_config(cfg, preset(preset_name));
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("cannot open config '" + config_path + "'");
            std::stringstream buf;
            buf << in.rdbuf();
            merge_config(cfg, parse_config(buf.str(), config_path));
        }
        if (seed) cfg["seed"] = *seed;
        if (workers) cfg["workers"] = *workers;
        if (samples) apply_samples(cfg, command, *samples);

        Context ctx;
        ctx.config = cfg;
        ctx.params = resolve_parameters(cfg);
        ctx.seed = cfg.at("seed").get<std::uint64_t>();
        ctx.workers = std::max(1u, cfg.at("workers").get<unsigned>());
        ctx.out_dir = out_path;
        ctx.log = &err;
        fs::create_directories(ctx.out_dir);

        const int code = handlers().at(command)(ctx);

        json sidecar = {{"command", command},
                        {"preset", preset_name},
                        {"seed", ctx.seed},
                        {"parameters",
                         {{"t1_ns", ctx.params.tls.t1()},
                          {"t2_ns", ctx.params.tls.t2()},
                          {"fpi_fwhm_ghz", ctx.params.irf.fpi_fwhm_ghz},
                          {"detector_fwhm_ns", ctx.params.irf.detector_fwhm_ns}}},
                        {"config", cfg},
                        {"outputs", ctx.outputs},
                        {"results", ctx.report}};
        std::ofstream side(ctx.out_dir / (command + ".json"));
        side << sidecar.dump(2) << '\n';
        out << "seed " << ctx.seed << '\n';
        for (const auto& o : ctx.outputs) out << (ctx.out_dir / o).string() << '\n';
        return code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const GuardError& e) {
        err << "numerical guard: " << e.what() << '\n';
        return kGuardError;
    } catch (const nlohmann::json::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}

} // namespace tlsim::cli
