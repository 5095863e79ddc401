#ifndef ORTHOGRAD_RNG_HPP
#define ORTHOGRAD_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

namespace orthograd
{

//
// SplitMix64 (Steele, Lea & Flood 2014). A single 64-bit state advanced by a
// Weyl increment; `split` derives an independent child stream from the
// current state and a stream id, so every consumer (parameter init, batch
// order per epoch, synthetic data) gets its own reproducible sequence.
//
// The uniform and normal draws are implemented here rather than through
// <random> distributions, whose output is implementation-defined.
//
class Rng
{
  public:
    static constexpr const char* algorithm = "splitmix64";

    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64()
    {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        return mix(z);
    }

    /// Child generator keyed on `stream`; does not advance this generator.
    Rng split(std::uint64_t stream) const
    {
        return Rng(mix(state_ ^ mix(stream + 0x632be59bd9b4e019ULL)));
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n) by rejection (no modulo bias).
    std::uint64_t below(std::uint64_t n)
    {
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        std::uint64_t x;
        do
        {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal via Box-Muller; caches the second variate.
    double normal()
    {
        if (has_spare_)
        {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do
        {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r  = std::sqrt(-2.0 * std::log(u1));
        const double a  = 2.0 * std::numbers::pi * u2;
        spare_          = r * std::sin(a);
        has_spare_      = true;
        return r * std::cos(a);
    }

    /// Fisher-Yates permutation of [0, n).
    std::vector<std::size_t> permutation(std::size_t n)
    {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t{0});
        for (std::size_t i = n; i > 1; --i)
        {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(p[i - 1], p[j]);
        }
        return p;
    }

  private:
    static std::uint64_t mix(std::uint64_t z)
    {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double spare_   = 0.0;
    bool has_spare_ = false;
};

} // namespace orthograd

#endif // ORTHOGRAD_RNG_HPP
