#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace wavecast {

// Counter-based PRNG: output i is splitmix64_mix(key + i*GAMMA), so a stream
// is fully determined by its 64-bit key and position.  Streams are split by
// hashing a label into a child key, which keeps every generator in a run
// reproducible from one master seed regardless of evaluation order.
// Gaussian draws use the Box-Muller transform (no rejection step, so the
// number of counter increments per draw is fixed).
class Rng {
public:
    explicit Rng(std::uint64_t key) : key_(mix(key ^ 0x9e3779b97f4a7c15ull)) {}

    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0xd1342543de82ef95ull); }

    // uniform in (0, 1]
    double next_unit() {
        return (double((next_u64() >> 11)) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double rad = std::sqrt(-2.0 * std::log(u1));
        const double ang = 6.283185307179586476925286766559 * u2;
        spare_ = rad * std::sin(ang);
        have_spare_ = true;
        return rad * std::cos(ang);
    }

    std::vector<double> gaussian_vec(std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = gaussian();
        return v;
    }

    Rng split(std::uint64_t label) const { return Rng(mix(key_ ^ mix(label))); }

    Rng split(std::string_view label) const {
        // FNV-1a over the label bytes
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const char c : label) {
            h ^= std::uint64_t(static_cast<unsigned char>(c));
            h *= 0x100000001b3ull;
        }
        return split(h);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace wavecast
