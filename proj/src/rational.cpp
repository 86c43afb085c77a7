#include "qlab/rational.hpp"

#include <cmath>
#include <numeric>

#include "qlab/error.hpp"

namespace qlab {

namespace {

// Products are formed in 128 bits so overflow is detected instead of wrapping.
std::int64_t checked(__int128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw RangeError("rational arithmetic overflow", 0);
  return static_cast<std::int64_t>(v);
}

}  // namespace

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw DomainError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  num_ = g ? num / g : 0;
  den_ = g ? den / g : 1;
}

Rational Rational::parse(const std::string& text) {
  try {
    const auto slash = text.find('/');
    if (slash != std::string::npos) {
      std::size_t used_n = 0, used_d = 0;
      const auto n = std::stoll(text.substr(0, slash), &used_n);
      const auto d = std::stoll(text.substr(slash + 1), &used_d);
      if (used_n != slash || used_d != text.size() - slash - 1) throw InputError("bad rational '" + text + "'");
      return Rational(n, d);
    }
    const auto dot = text.find('.');
    if (dot == std::string::npos) {
      std::size_t used = 0;
      const auto n = std::stoll(text, &used);
      if (used != text.size()) throw InputError("bad rational '" + text + "'");
      return Rational(n);
    }
    const std::string frac = text.substr(dot + 1);
    if (frac.size() > 9 || frac.find_first_not_of("0123456789") != std::string::npos)
      throw InputError("bad rational '" + text + "'");
    std::int64_t scale = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
    const std::string whole = text.substr(0, dot);
    const bool negative = !whole.empty() && whole[0] == '-';
    const std::int64_t w = whole.empty() || whole == "-" || whole == "+" ? 0 : std::stoll(whole);
    const std::int64_t f = frac.empty() ? 0 : std::stoll(frac);
    const std::int64_t mag = std::llabs(w) * scale + f;
    return Rational(negative ? -mag : mag, scale);
  } catch (const std::logic_error&) {
    throw InputError("bad rational '" + text + "'");
  }
}

std::string Rational::str() const {
  return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_);
}

Rational operator+(const Rational& a, const Rational& b) {
  return Rational(checked(__int128(a.num_) * b.den_ + __int128(b.num_) * a.den_), checked(__int128(a.den_) * b.den_));
}

Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }

Rational operator*(const Rational& a, const Rational& b) {
  return Rational(checked(__int128(a.num_) * b.num_), checked(__int128(a.den_) * b.den_));
}

Rational operator/(const Rational& a, const Rational& b) {
  if (b.num_ == 0) throw DomainError("rational division by zero");
  return Rational(checked(__int128(a.num_) * b.den_), checked(__int128(a.den_) * b.num_));
}

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  const __int128 lhs = __int128(a.num_) * b.den_;
  const __int128 rhs = __int128(b.num_) * a.den_;
  return lhs <=> rhs;
}

std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.str(); }

std::int64_t lcm(std::int64_t a, std::int64_t b) { return std::lcm(a, b); }

}  // namespace qlab
