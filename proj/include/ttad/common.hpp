#pragma once

#include <charconv>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace ttad {

// splitmix64; used to derive independent rng streams from a run seed so that
// resuming at epoch k replays the exact draw sequence without storing engine state.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = mix64(base);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

inline std::mt19937_64 make_rng(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return std::mt19937_64(derive_seed(base, a, b, c));
}

// Uniform in [0, 1) with 53 random bits; independent of library distribution
// internals so draws are stable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Locale-independent fixed-point formatting (text generation must not depend
// on the global locale).
inline std::string format_fixed(double v, int precision) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    if (res.ec != std::errc()) throw std::runtime_error("format_fixed: value out of range");
    std::string s(buf, res.ptr);
    if (s == "-0." + std::string(static_cast<size_t>(precision), '0')) s.erase(0, 1);
    return s;
}

// Shortest round-trip representation; emitted CSV/JSON must reload bit-identically.
inline std::string format_roundtrip(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc()) throw std::runtime_error("format_roundtrip: out of range");
    return std::string(buf, res.ptr);
}

}  // namespace ttad
