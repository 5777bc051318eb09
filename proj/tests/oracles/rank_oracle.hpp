#pragma once

// Arbitrary-precision reference for the page ranks.

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <optional>

namespace wayfinder::oracle {

using boost::multiprecision::cpp_int;

inline cpp_int pcr_exact(std::uint64_t inputs, std::uint64_t actions, std::uint64_t links, std::uint64_t iw,
                         std::uint64_t aw, std::uint64_t lw) {
    return ((cpp_int(inputs) * iw + actions) * aw + links) * lw;
}

inline cpp_int pacr_exact(std::uint64_t prio, std::uint64_t inputs, std::uint64_t actions, std::uint64_t links,
                          std::uint64_t pw, std::uint64_t iw, std::uint64_t aw, std::uint64_t lw) {
    return (((cpp_int(prio) * pw + inputs) * iw + actions) * aw + links) * lw;
}

/// The value when it fits in 64 bits.
inline std::optional<std::uint64_t> fit64(const cpp_int& v) {
    if (v > cpp_int(UINT64_MAX)) return std::nullopt;
    return v.convert_to<std::uint64_t>();
}

}  // namespace wayfinder::oracle
