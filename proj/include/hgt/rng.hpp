#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace hgt {

// Counter-based generator: output i is a pure function of (key, i), so streams
// can be split per subsystem and replayed independently of draw order.
class CounterRng {
public:
    explicit CounterRng(uint64_t key) : key_(key) {}

    uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    // uniform in [0, 1) with 53 bits of mantissa
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Box-Muller; one draw per call keeps the stream position predictable.
    double next_normal() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Derive an independent stream for a named subsystem of a root seed.
    static CounterRng split(uint64_t root, std::string_view domain) {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : domain) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return CounterRng(mix(root ^ h));
    }

    static CounterRng split(uint64_t root, std::string_view domain, uint64_t index) {
        CounterRng base = split(root, domain);
        return CounterRng(mix(base.key_ + 0x9E3779B97F4A7C15ULL * (index + 1)));
    }

private:
    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ULL;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return z;
    }

    uint64_t key_;
    uint64_t counter_ = 0;
};

}  // namespace hgt
