#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <vector>

#include "thintime/errors.hpp"

namespace thintime {

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
    double confidence_multiplier = 3.0;

    double z_score(double reference) const { return se > 0.0 ? (mean - reference) / se : 0.0; }
    bool within(double reference, double extra_allowance = 0.0) const {
        return std::abs(mean - reference) <= confidence_multiplier * se + extra_allowance;
    }
};

// Mean and standard error in fixed (index) order, independent of scheduling.
inline Estimate estimate_mean(const std::vector<double>& x) {
    Estimate e;
    e.n = x.size();
    if (x.empty()) return e;
    double sum = 0.0;
    for (double v : x) sum += v;
    e.mean = sum / static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - e.mean) * (v - e.mean);
    if (x.size() > 1) e.se = std::sqrt(ss / (static_cast<double>(x.size() - 1) * static_cast<double>(x.size())));
    return e;
}

template <typename F>
Estimate estimate_mean_of(std::size_t n, F&& value_at) {
    std::vector<double> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = value_at(i);
    return estimate_mean(buf);
}

// FNV-1a over the byte image of doubles/ints, in the order supplied.
class Digest {
  public:
    void add(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        add_bits(bits);
    }
    void add(std::uint64_t bits) { add_bits(bits); }
    void add_bytes(const void* data, std::size_t len) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) step(p[i]);
    }
    std::uint64_t value() const { return h_; }

  private:
    void add_bits(std::uint64_t bits) {
        for (int b = 0; b < 8; ++b) step(static_cast<unsigned char>(bits >> (8 * b)));
    }
    void step(unsigned char byte) {
        h_ ^= byte;
        h_ *= 0x100000001B3ULL;
    }
    std::uint64_t h_ = 0xCBF29CE484222325ULL;
};

}  // namespace thintime
