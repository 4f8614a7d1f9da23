#pragma once

#include <cstdio>
#include <cstdlib>
#include <string>

namespace ptpmx {

// Decimal scaling done on the printed text instead of the double, so unit
// conversion never rounds: a seconds value written as microseconds
// (shift +6) parses back to the identical bits.
inline std::string format_scaled(double value, int decimal_shift) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17e", value);
    std::string s(buf);
    const auto e = s.find('e');
    const int exp = std::stoi(s.substr(e + 1)) + decimal_shift;
    char out[80];
    std::snprintf(out, sizeof(out), "%se%+03d", s.substr(0, e).c_str(), exp);
    return out;
}

inline double parse_scaled(const std::string& text, int decimal_shift) {
    const auto e = text.find_first_of("eE");
    std::string t;
    if (e == std::string::npos) {
        t = text + "e" + std::to_string(-decimal_shift);
    } else {
        const int exp = std::stoi(text.substr(e + 1)) - decimal_shift;
        t = text.substr(0, e) + "e" + std::to_string(exp);
    }
    return std::strtod(t.c_str(), nullptr);
}

}  // namespace ptpmx
