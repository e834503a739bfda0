#pragma once

#include <stdexcept>
#include <string>

namespace moeprune {

enum class Side { encoder, decoder };

inline const char* side_name(Side s) {
    return s == Side::encoder ? "encoder" : "decoder";
}

inline Side side_from_name(const std::string& s) {
    if (s == "encoder") return Side::encoder;
    if (s == "decoder") return Side::decoder;
    throw std::invalid_argument("unknown side: " + s);
}

}  // namespace moeprune
