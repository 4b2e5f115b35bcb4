#pragma once
#include <cmath>
#include <cstdint>
#include <random>

namespace wm {

// splitmix64; used to derive independent stream seeds from (base, index)
// pairs so parallel episode workers never share generator state.
inline uint64_t mix_seed(uint64_t base, uint64_t stream) {
    uint64_t z = base + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// mt19937_64 is bit-exact across conforming implementations; the transforms
// below are hand-rolled because std distributions are not.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t u64() { return gen_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller without caching the second value: every call consumes
    // exactly two uniforms, which keeps draw order trivially reproducible.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // modulo bias is < 2^-32 for n below ~1e9; acceptable for batch sampling
    int uniform_int(int n) { return static_cast<int>(u64() % static_cast<uint64_t>(n)); }

  private:
    std::mt19937_64 gen_;
};

} // namespace wm
