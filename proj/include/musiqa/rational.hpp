#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace musiqa {

// Exact rational number, always stored in lowest terms with a positive
// denominator. Used for every note length and measure capacity so that
// rhythm checks never round.
class Rational {
public:
    constexpr Rational() = default;
    constexpr Rational(std::int64_t value) : num_(value), den_(1) {}  // NOLINT(implicit)
    Rational(std::int64_t num, std::int64_t den) : num_(num), den_(den) {
        if (den_ == 0) throw std::domain_error("rational with zero denominator");
        normalize();
    }

    constexpr std::int64_t num() const { return num_; }
    constexpr std::int64_t den() const { return den_; }

    Rational& operator+=(const Rational& o) {
        // a/b + c/d = (a*(l/b) + c*(l/d)) / l  with l = lcm(b, d)
        const std::int64_t g = std::gcd(den_, o.den_);
        const std::int64_t lhs = checked_mul(num_, o.den_ / g);
        const std::int64_t rhs = checked_mul(o.num_, den_ / g);
        num_ = checked_add(lhs, rhs);
        den_ = checked_mul(den_, o.den_ / g);
        normalize();
        return *this;
    }
    Rational& operator-=(const Rational& o) { return *this += -o; }
    Rational& operator*=(const Rational& o) {
        const std::int64_t g1 = std::gcd(num_, o.den_);
        const std::int64_t g2 = std::gcd(o.num_, den_);
        const std::int64_t a = g1 ? num_ / g1 : num_;
        const std::int64_t d = g1 ? o.den_ / g1 : o.den_;
        const std::int64_t c = g2 ? o.num_ / g2 : o.num_;
        const std::int64_t b = g2 ? den_ / g2 : den_;
        num_ = checked_mul(a, c);
        den_ = checked_mul(b, d);
        normalize();
        return *this;
    }
    Rational& operator/=(const Rational& o) {
        if (o.num_ == 0) throw std::domain_error("rational division by zero");
        return *this *= Rational(o.den_, o.num_);
    }

    friend Rational operator-(Rational a) {
        a.num_ = -a.num_;
        return a;
    }
    friend Rational operator+(Rational a, const Rational& b) { return a += b; }
    friend Rational operator-(Rational a, const Rational& b) { return a -= b; }
    friend Rational operator*(Rational a, const Rational& b) { return a *= b; }
    friend Rational operator/(Rational a, const Rational& b) { return a /= b; }

    friend bool operator==(const Rational&, const Rational&) = default;
    friend std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
        // Cross-multiplication in 128 bits cannot overflow for 64-bit operands.
        __extension__ using wide = __int128;
        const wide lhs = static_cast<wide>(a.num_) * b.den_;
        const wide rhs = static_cast<wide>(b.num_) * a.den_;
        if (lhs < rhs) return std::strong_ordering::less;
        if (lhs > rhs) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }

    bool is_integer() const { return den_ == 1; }

    // "p/q", or "p" for integers.
    std::string str() const {
        if (den_ == 1) return std::to_string(num_);
        return std::to_string(num_) + "/" + std::to_string(den_);
    }

    friend std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

private:
    static std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
        std::int64_t out = 0;
        if (__builtin_mul_overflow(a, b, &out)) throw std::overflow_error("rational overflow");
        return out;
    }
    static std::int64_t checked_add(std::int64_t a, std::int64_t b) {
        std::int64_t out = 0;
        if (__builtin_add_overflow(a, b, &out)) throw std::overflow_error("rational overflow");
        return out;
    }
    void normalize() {
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        const std::int64_t g = std::gcd(num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
        if (num_ == 0) den_ = 1;
    }

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

// A note length or measure capacity. Values are in units of a whole note
// unless stated otherwise (event durations are in units of the tune's L:).
using Duration = Rational;

inline bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace musiqa
