#include "ccconv/rational.hpp"

#include <numeric>
#include <stdexcept>

#include "ccconv/errors.hpp"

namespace ccconv {

namespace {
std::int64_t gcd64(std::int64_t a, std::int64_t b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  return std::gcd(a, b);
}
}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) {
  if (d == 0) throw SpecError("rational: zero denominator");
  if (d < 0) {
    n = -n;
    d = -d;
  }
  std::int64_t g = gcd64(n, d);
  if (g == 0) g = 1;
  num = n / g;
  den = d / g;
}

Rational Rational::operator+(const Rational& o) const {
  return Rational(num * o.den + o.num * den, den * o.den);
}

Rational Rational::operator-(const Rational& o) const {
  return Rational(num * o.den - o.num * den, den * o.den);
}

Rational Rational::operator*(const Rational& o) const {
  // Reduce cross factors before multiplying to delay overflow.
  std::int64_t g1 = gcd64(num, o.den);
  std::int64_t g2 = gcd64(o.num, den);
  return Rational((num / g1) * (o.num / g2), (den / g2) * (o.den / g1));
}

Rational Rational::operator/(const Rational& o) const {
  if (o.num == 0) throw SpecError("rational: division by zero");
  return *this * Rational(o.den, o.num);
}

bool Rational::operator<(const Rational& o) const {
  return num * o.den < o.num * den;
}

std::int64_t Rational::floor() const {
  std::int64_t q = num / den;
  if (num % den != 0 && num < 0) --q;
  return q;
}

std::int64_t Rational::ceil() const {
  std::int64_t q = num / den;
  if (num % den != 0 && num > 0) ++q;
  return q;
}

Rational Rational::frac() const { return *this - Rational::from_int(floor()); }

std::string Rational::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

std::int64_t ceil_mul_div(std::int64_t a, std::int64_t b, std::int64_t c) {
  if (c <= 0) throw SpecError("ceil_mul_div: non-positive divisor");
  std::int64_t p = a * b;
  std::int64_t q = p / c;
  if (p % c != 0 && p > 0) ++q;
  return q;
}

}  // namespace ccconv
