#ifndef NOISYRL_RNG_HPP
#define NOISYRL_RNG_HPP

#include <cstdint>
#include <limits>

namespace nrl {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic child seed for (base, a, b); used for per-run and per-replica streams.
inline constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b + 0x632be59bd9b4e019ULL));
}

// Counter-based stream: draw n is a keyed hash of n, so streams can be split
// and jumped without shared state.
class Rng {
  public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0)
        : key_(derive_seed(seed, stream, 0x5851f42d4c957f2dULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return splitmix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    // uniform on [0,1) with 53 random bits
    double uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

    bool bernoulli(double prob) { return uniform() < prob; }

    Rng split(std::uint64_t i) const {
        Rng r;
        r.key_ = derive_seed(key_, counter_, i);
        return r;
    }

    void discard(std::uint64_t n) { counter_ += n; }
    std::uint64_t position() const { return counter_; }

  private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace nrl

#endif
