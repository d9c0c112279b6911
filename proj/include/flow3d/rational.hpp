#pragma once

#include <compare>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>

namespace flow3d {

/// Exact rational number with a normalized int64 numerator/denominator.
///
/// Intermediate products are computed in 128-bit precision and reduced; a
/// result that cannot be represented in 64 bits after reduction throws
/// std::overflow_error. The denominator is always positive.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::int64_t num, std::int64_t den = 1);  // NOLINT(google-explicit-constructor)

  [[nodiscard]] std::int64_t num() const { return num_; }
  [[nodiscard]] std::int64_t den() const { return den_; }

  [[nodiscard]] bool is_zero() const { return num_ == 0; }
  [[nodiscard]] bool is_integer() const { return den_ == 1; }

  /// Smallest integer >= this value.
  [[nodiscard]] std::int64_t ceil() const;
  /// Largest integer <= this value.
  [[nodiscard]] std::int64_t floor() const;
  [[nodiscard]] double to_double() const;
  /// "n" for integers, "n/d" otherwise.
  [[nodiscard]] std::string to_string() const;

  /// Accepts "n", "n/d" or a finite decimal such as "3.25".
  static Rational parse(std::string_view text);

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

  friend bool operator==(const Rational& a, const Rational& b) = default;
  friend std::strong_ordering operator<=>(const Rational& a, const Rational& b);

 private:
  static Rational from_wide(__int128 num, __int128 den);

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

inline std::ostream& operator<<(std::ostream& os, const Rational& r) { return os << r.to_string(); }

inline const Rational& min(const Rational& a, const Rational& b) { return b < a ? b : a; }
inline const Rational& max(const Rational& a, const Rational& b) { return a < b ? b : a; }

/// Integer ceiling division for non-negative numerators and positive divisors.
constexpr std::int64_t ceil_div(std::int64_t num, std::int64_t den) {
  return num / den + ((num % den) != 0 ? 1 : 0);
}

}  // namespace flow3d
