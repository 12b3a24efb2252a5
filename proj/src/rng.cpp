#include "cogmap/rng.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cogmap {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : seed_(seed), gen_(mix64(seed)) {}

uint64_t Rng::next_u64() { return gen_(); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
}

double Rng::normal(double mean, double sigma) {
    return mean + sigma * normal();
}

uint64_t Rng::below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    uint64_t rem = std::numeric_limits<uint64_t>::max() % n;
    uint64_t limit = std::numeric_limits<uint64_t>::max() - rem;
    uint64_t x;
    do {
        x = next_u64();
    } while (x > limit);
    return x % n;
}

int Rng::uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("Rng::uniform_int: empty range");
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo) + 1));
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    shuffle(p);
    return p;
}

Rng Rng::child(uint64_t tag) const {
    return Rng(mix64(seed_ ^ mix64(tag + 0x51cc2815e2f1b0d7ULL)));
}

} // namespace cogmap
