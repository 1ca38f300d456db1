#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace rmv {

/// Minimal exact fraction over int64, enough for the small-N geometry identities.
class Rational {
public:
    constexpr Rational() = default;
    constexpr Rational(std::int64_t n) : num_{n}, den_{1} {}  // NOLINT(implicit)
    constexpr Rational(std::int64_t n, std::int64_t d) : num_{n}, den_{d} {
        if (d == 0) throw std::domain_error("Rational: zero denominator");
        normalize();
    }

    constexpr std::int64_t num() const { return num_; }
    constexpr std::int64_t den() const { return den_; }

    friend constexpr Rational operator+(Rational a, Rational b) {
        return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_};
    }
    friend constexpr Rational operator-(Rational a, Rational b) {
        return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_};
    }
    friend constexpr Rational operator*(Rational a, Rational b) {
        return {a.num_ * b.num_, a.den_ * b.den_};
    }
    friend constexpr Rational operator/(Rational a, Rational b) {
        return {a.num_ * b.den_, a.den_ * b.num_};
    }
    constexpr Rational operator-() const { return {-num_, den_}; }
    constexpr Rational& operator+=(Rational b) { return *this = *this + b; }

    friend constexpr bool operator==(const Rational&, const Rational&) = default;
    friend constexpr std::strong_ordering operator<=>(Rational a, Rational b) {
        return a.num_ * b.den_ <=> b.num_ * a.den_;
    }

    explicit constexpr operator double() const {
        return static_cast<double>(num_) / static_cast<double>(den_);
    }

    friend std::ostream& operator<<(std::ostream& os, Rational r) {
        return os << r.num_ << '/' << r.den_;
    }

private:
    constexpr void normalize() {
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const std::int64_t g = std::gcd(num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

}  // namespace rmv
