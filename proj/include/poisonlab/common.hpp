#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace poisonlab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using AgentId = std::size_t;

// -------------------------------------------------------------------------- //
// Errors

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A robust aggregator was asked to trim more inputs than it can afford.
class AggregatorBreakdown : public Error {
public:
    using Error::Error;
};

/// An iterative numerical routine failed to reach its tolerance.
class NotConverged : public Error {
public:
    using Error::Error;
};

// -------------------------------------------------------------------------- //
// Exact rationals for contamination rates

/// Normalized fraction num/den with den > 0.
class Rational {
public:
    constexpr Rational() = default;
    Rational(long long num, long long den) : num_(num), den_(den) {
        if (den_ == 0)
            throw InvalidArgument("Rational: zero denominator");
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        auto const g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
    }

    [[nodiscard]] constexpr long long num() const noexcept { return num_; }
    [[nodiscard]] constexpr long long den() const noexcept { return den_; }
    [[nodiscard]] double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    friend bool operator==(Rational const& a, Rational const& b) noexcept { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend bool operator<(Rational const& a, Rational const& b) noexcept {
        return static_cast<__int128>(a.num_) * b.den_ < static_cast<__int128>(b.num_) * a.den_;
    }
    friend bool operator>(Rational const& a, Rational const& b) noexcept { return b < a; }
    friend bool operator<=(Rational const& a, Rational const& b) noexcept { return !(b < a); }

    friend Rational operator+(Rational const& a, Rational const& b) {
        auto const g = std::gcd(a.den_, b.den_);
        __int128 const num = static_cast<__int128>(a.num_) * (b.den_ / g) + static_cast<__int128>(b.num_) * (a.den_ / g);
        __int128 const den = static_cast<__int128>(a.den_ / g) * b.den_;
        return from_wide(num, den);
    }
    friend Rational operator-(Rational const& a, Rational const& b) { return a + Rational(-b.num_, b.den_); }

    [[nodiscard]] std::string str() const { return std::to_string(num_) + "/" + std::to_string(den_); }
    friend std::ostream& operator<<(std::ostream& os, Rational const& r) { return os << r.str(); }

private:
    static Rational from_wide(__int128 num, __int128 den) {
        __int128 a = num < 0 ? -num : num, b = den;
        while (b != 0) {
            auto const t = a % b;
            a = b;
            b = t;
        }
        if (a > 1) {
            num /= a;
            den /= a;
        }
        constexpr auto lim = static_cast<__int128>(std::numeric_limits<long long>::max());
        if (num > lim || -num > lim || den > lim)
            throw InvalidArgument("Rational: overflow");
        return {static_cast<long long>(num), static_cast<long long>(den)};
    }

    long long num_ = 0;
    long long den_ = 1;
};

// -------------------------------------------------------------------------- //
// Formatting

/// Shortest round-trip-safe rendering used by every CSV writer.
inline std::string format_double(double x) {
    if (std::isnan(x))
        return "nan";
    if (std::isinf(x))
        return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace poisonlab
