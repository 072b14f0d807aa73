#include "tlsim/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tlsim {

TlsParams TlsParams::make(double t1_ns, double t2_ns) {
    if (!(t1_ns > 0.0) || !(t2_ns > 0.0) || !std::isfinite(t1_ns) || !std::isfinite(t2_ns))
        throw ConfigError("TlsParams: t1 and t2 must be positive and finite");
    if (t2_ns > 2.0 * t1_ns)
        throw ConfigError("TlsParams: t2 must not exceed 2*t1 (negative pure dephasing)");
    return TlsParams(t1_ns, t2_ns);
}

double TlsParams::pure_dephasing() const {
    return std::max(0.0, 1.0 / t2_ - 0.5 / t1_);
}

TlsParams paper_qd() { return TlsParams::make(0.641, 0.325); }

std::string to_string(Statistics s) {
    return s == Statistics::Coherent ? "coherent" : "chaotic";
}

Statistics statistics_from_string(const std::string& s) {
    if (s == "coherent") return Statistics::Coherent;
    if (s == "chaotic") return Statistics::Chaotic;
    throw ConfigError("unknown photon statistics '" + s + "' (expected coherent|chaotic)");
}

DrivePulse DrivePulse::cw(double rabi, double detuning, Statistics stats) {
    DrivePulse p;
    p.rabi = rabi;
    p.detuning = detuning;
    p.statistics = stats;
    return p;
}

DrivePulse DrivePulse::square(double rabi, double start, double stop, Statistics stats) {
    DrivePulse p;
    p.rabi = rabi;
    p.envelope.push_back({start, stop, 1.0});
    p.statistics = stats;
    return p;
}

void DrivePulse::validate() const {
    if (!(rabi >= 0.0) || !std::isfinite(rabi))
        throw ConfigError("DrivePulse: rabi must be >= 0");
    if (!std::isfinite(detuning))
        throw ConfigError("DrivePulse: detuning must be finite");
    for (std::size_t i = 0; i < envelope.size(); ++i) {
        const auto& seg = envelope[i];
        if (!(seg.stop > seg.start))
            throw ConfigError("DrivePulse: envelope segment with stop <= start");
        if (!(seg.amplitude >= 0.0))
            throw ConfigError("DrivePulse: negative envelope amplitude");
        if (i > 0 && seg.start < envelope[i - 1].stop)
            throw ConfigError("DrivePulse: envelope segments overlap or are unsorted");
    }
}

double DrivePulse::amplitude_at(double t) const {
    if (envelope.empty()) return 1.0;
    auto it = std::upper_bound(envelope.begin(), envelope.end(), t,
                               [](double x, const EnvelopeSegment& s) { return x < s.start; });
    if (it == envelope.begin()) return 0.0;
    --it;
    return t < it->stop ? it->amplitude : 0.0;
}

double DrivePulse::peak_amplitude() const {
    if (envelope.empty()) return 1.0;
    double m = 0.0;
    for (const auto& s : envelope) m = std::max(m, s.amplitude);
    return m;
}

std::vector<double> DrivePulse::edges() const {
    std::vector<double> e;
    for (const auto& s : envelope) {
        e.push_back(s.start);
        e.push_back(s.stop);
    }
    return e;
}

void InstrumentResponse::validate() const {
    if (!(fpi_fwhm_ghz > 0.0) || !(detector_fwhm_ns > 0.0))
        throw ConfigError("InstrumentResponse: both widths must be > 0");
}

ParamRegistry::ParamRegistry() { sets_.emplace("paper-qd", ParameterSet{}); }

void ParamRegistry::load_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("parameter registry: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("parameter registry: top level must be an object");
    for (const auto& [name, entry] : doc.items()) {
        if (!entry.is_object())
            throw ConfigError("parameter registry: entry '" + name + "' must be an object");
        for (const auto& [key, _] : entry.items()) {
            if (key != "t1_ns" && key != "t2_ns" && key != "fpi_fwhm_ghz" && key != "detector_fwhm_ns")
                throw ConfigError("parameter registry: unknown key '" + key + "' in '" + name + "'");
        }
        if (!entry.contains("t1_ns") || !entry.contains("t2_ns"))
            throw ConfigError("parameter registry: '" + name + "' needs t1_ns and t2_ns");
        try {
            ParameterSet set{TlsParams::make(entry.at("t1_ns").get<double>(),
                                             entry.at("t2_ns").get<double>()),
                             InstrumentResponse{}};
            if (entry.contains("fpi_fwhm_ghz")) set.irf.fpi_fwhm_ghz = entry["fpi_fwhm_ghz"].get<double>();
            if (entry.contains("detector_fwhm_ns"))
                set.irf.detector_fwhm_ns = entry["detector_fwhm_ns"].get<double>();
            set.irf.validate();
            sets_.insert_or_assign(name, set);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("parameter registry: '" + name + "': " + e.what());
        }
    }
}

void ParamRegistry::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open parameter registry '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    load_json(ss.str());
}

const ParameterSet& ParamRegistry::get(const std::string& name) const {
    auto it = sets_.find(name);
    if (it == sets_.end()) throw ConfigError("unknown parameter set '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [k, _] : sets_) out.push_back(k);
    return out;
}

double saturation_parameter(double omega, const TlsParams& p) {
    return omega * omega * p.t1() * p.t2();
}

double omega_from_saturation(double s, const TlsParams& p) {
    if (s < 0.0) throw ConfigError("saturation parameter must be >= 0");
    return std::sqrt(s / (p.t1() * p.t2()));
}

double power_linewidth(double omega, const TlsParams& p) {
    return (2.0 / p.t2()) * std::sqrt(1.0 + saturation_parameter(omega, p));
}

} // namespace tlsim
