/**
 * \file rational.hpp
 * \brief Exact rational numbers for orders and dilation exponents.
 */
#pragma once

#include <cstdint>
#include <compare>
#include <ostream>
#include <string>

namespace qlab {

/**
 * \brief A normalized fraction num/den with den > 0.
 *
 * Orders k and all q-exponents are kept exact so that dilation exponents can
 * be tested for grid alignment without floating drift.
 */
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }
  bool is_integer() const noexcept { return den_ == 1; }

  /// Parses "p", "p/q" or a decimal literal with at most 9 fractional digits.
  static Rational parse(const std::string& text);
  std::string str() const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);
  Rational operator-() const { return Rational(-num_, den_); }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

std::ostream& operator<<(std::ostream& os, const Rational& r);

/// Least common multiple of two positive integers.
std::int64_t lcm(std::int64_t a, std::int64_t b);

}  // namespace qlab
