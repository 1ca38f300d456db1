#pragma once

// Counter-based random numbers (Philox4x32-10).
//
// Every draw is a pure function of (key, counter). The particle code keys the
// generator by the run seed and uses (step index, particle index) as the
// counter, so particle i sees the same noise regardless of N, thread count, or
// the order in which particles are processed.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace rmv::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

namespace detail {

inline constexpr std::uint32_t kMulA = 0xD2511F53u;
inline constexpr std::uint32_t kMulB = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeylA = 0x9E3779B9u;
inline constexpr std::uint32_t kWeylB = 0xBB67AE85u;

constexpr void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

constexpr Counter round(const Counter& c, const Key& k) {
    std::uint32_t hi0 = 0, lo0 = 0, hi1 = 0, lo1 = 0;
    mulhilo(kMulA, c[0], hi0, lo0);
    mulhilo(kMulB, c[2], hi1, lo1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

}  // namespace detail

/// Philox4x32 with 10 rounds; matches the Random123 reference outputs.
constexpr Counter philox4x32(Counter ctr, Key key) {
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            key[0] += detail::kWeylA;
            key[1] += detail::kWeylB;
        }
        ctr = detail::round(ctr, key);
    }
    return ctr;
}

/// Stream domains keep the initial-sample draws disjoint from the per-step noise.
enum class Domain : std::uint32_t { step_noise = 0, initial_sample = 1, aux = 2 };

/// Keyed generator: `seed` selects the key, (domain, index, stream) the counter.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    constexpr Counter block(Domain domain, std::uint64_t index, std::uint64_t stream) const noexcept {
        const std::uint32_t dom = static_cast<std::uint32_t>(domain) << 28;
        Counter c{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                  static_cast<std::uint32_t>(stream),
                  static_cast<std::uint32_t>(stream >> 32) ^ dom};
        return philox4x32(c, key_);
    }

    /// Two uniforms on (0,1], 53 bits each.
    std::array<double, 2> uniform2(Domain domain, std::uint64_t index, std::uint64_t stream) const noexcept {
        const Counter b = block(domain, index, stream);
        return {to_unit(b[0], b[1]), to_unit(b[2], b[3])};
    }

    /// Two independent standard normals (Box-Muller) from one Philox block.
    std::array<double, 2> normal2(Domain domain, std::uint64_t index, std::uint64_t pair) const noexcept {
        const auto [u1, u2] = uniform2(domain, index, pair);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        return {r * std::cos(a), r * std::sin(a)};
    }

    /// Standard normal for `stream`; streams 2k and 2k+1 share the block of normal2(.., k).
    double normal(Domain domain, std::uint64_t index, std::uint64_t stream) const noexcept {
        return normal2(domain, index, stream >> 1)[stream & 1];
    }

    constexpr Key key() const noexcept { return key_; }

private:
    static constexpr double to_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
        const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
        // (bits + 1) / 2^53 lies in (0, 1], safe for log().
        return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
    }

    Key key_;
};

}  // namespace rmv::rng
