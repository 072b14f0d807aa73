// Minimal CSV output. Numbers use the shortest round-trip representation
// (std::to_chars), so identical values always produce identical bytes.
#pragma once

#include <charconv>
#include <initializer_list>
#include <ostream>
#include <string>
#include <string_view>

namespace tlsim::csv {

inline std::string number(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, end);
}

inline void header(std::ostream& out, std::string_view line) { out << line << '\n'; }

inline void row(std::ostream& out, std::initializer_list<double> values) {
    bool first = true;
    for (double v : values) {
        if (!first) out << ',';
        out << number(v);
        first = false;
    }
    out << '\n';
}

} // namespace tlsim::csv
