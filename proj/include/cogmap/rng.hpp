#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace cogmap {

// Deterministic random source. All draws go through explicit bit-to-double
// conversions so that replaying a seed reproduces output byte for byte,
// independent of the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // uniform in [0, 1)
    double uniform();
    double uniform(double lo, double hi);

    // standard normal via Box-Muller
    double normal();
    double normal(double mean, double sigma);

    // unbiased integer in [0, n), rejection sampled
    uint64_t below(uint64_t n);
    // inclusive range
    int uniform_int(int lo, int hi);

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<int> permutation(int n);

    // Independent child stream; derivation depends only on the constructor
    // seed and the tag, not on how many draws were made, so per-scene streams
    // are order independent.
    Rng child(uint64_t tag) const;

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// splitmix64 finalizer, used for seed mixing and stable content hashes
uint64_t mix64(uint64_t x);

} // namespace cogmap
