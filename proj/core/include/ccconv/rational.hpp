#pragma once

#include <cstdint>
#include <string>

namespace ccconv {

// Exact fraction, always stored in lowest terms with positive denominator.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Rational() = default;
  Rational(std::int64_t n, std::int64_t d);

  static Rational from_int(std::int64_t n) { return Rational(n, 1); }

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool positive() const { return num > 0; }

  Rational operator+(const Rational& o) const;
  Rational operator-(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  Rational operator/(const Rational& o) const;
  bool operator==(const Rational& o) const { return num == o.num && den == o.den; }
  bool operator!=(const Rational& o) const { return !(*this == o); }
  bool operator<(const Rational& o) const;

  bool is_integer() const { return den == 1; }

  // floor(num/den) as an integer, exact for negatives too.
  std::int64_t floor() const;
  std::int64_t ceil() const;

  // Fractional part in [0,1): *this - floor().
  Rational frac() const;

  std::string str() const;
};

// ceil(a*b/c) in exact integer arithmetic.
std::int64_t ceil_mul_div(std::int64_t a, std::int64_t b, std::int64_t c);

}  // namespace ccconv
