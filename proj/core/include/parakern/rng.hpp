#ifndef PARAKERN_RNG_HPP
#define PARAKERN_RNG_HPP

#include <cmath>
#include <cstdint>

namespace parakern {

// Counter-based pseudorandom stream (SplitMix64 core).  A stream is fully
// determined by (master_seed, stream_index): the same pair reproduces the
// same sequence bit-for-bit, and distinct stream indices give statistically
// independent sequences.  Streams are cheap to construct, so simulations
// create one per path; results are then independent of thread scheduling.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
        : state_(derive_seed(master_seed, stream_index)) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform on (0, 1]
    double uniform_pos() { return 1.0 - uniform(); }

    // standard normal via Box-Muller; the spare value is cached
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDULL;
        z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ULL;
        return z ^ (z >> 33);
    }
    static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
        return mix(seed ^ mix(index + 0x9E3779B97F4A7C15ULL));
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace parakern

#endif
