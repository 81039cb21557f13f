#pragma once

#include <cstdint>
#include <istream>
#include <vector>

namespace bode {

/// One row of a Joe-Kuo direction-number file: `d s a m_1 ... m_s`.
struct PrimitivePolynomial {
  int degree = 0;              // s
  std::uint32_t coeffs = 0;    // a, interior coefficients c_1..c_{s-1}
  std::vector<std::uint32_t> initial;  // m_1..m_s
};

/// Direction-number table. Dimension 1 is implicit (all m_k = 1); row i of
/// `rows` describes dimension i + 2.
class DirectionTable {
 public:
  static DirectionTable parse(std::istream& in);
  /// The table shipped with the library (first 64 dimensions of new-joe-kuo-6).
  static const DirectionTable& bundled();

  int max_dimension() const { return static_cast<int>(rows_.size()) + 1; }
  const PrimitivePolynomial& row(int dimension) const { return rows_.at(dimension - 2); }

 private:
  std::vector<PrimitivePolynomial> rows_;
};

enum class SobolOrder {
  gray_code,     // x_n from x_{n-1} by one XOR; same order as Bratley-Fox / scipy
  direct_binary  // x_n = XOR of V_m over the set bits b_m of n
};

/// Unscrambled base-2 Sobol sequence with 30-bit direction numbers.
class SobolGenerator {
 public:
  static constexpr int kMaxBits = 30;

  SobolGenerator(int dimension, std::uint64_t seed_skip = 0,
                 SobolOrder order = SobolOrder::gray_code,
                 const DirectionTable& table = DirectionTable::bundled());

  int dimension() const { return dimension_; }
  std::uint64_t counter() const { return counter_; }
  SobolOrder order() const { return order_; }

  /// Scaled direction numbers V_{d,j} * 2^(30-j) for dimension d (1-based), j = 1..30.
  const std::vector<std::uint32_t>& direction_numbers(int d) const { return v_.at(d - 1); }

  /// Emits x_counter and advances. Coordinates are in [0, 1).
  std::vector<double> next_point();
  /// Integer form of next_point(); coordinate = value * 2^-30.
  std::vector<std::uint32_t> next_integers();

  void skip(std::uint64_t n);

 private:
  int dimension_;
  SobolOrder order_;
  std::uint64_t counter_ = 0;
  std::vector<std::vector<std::uint32_t>> v_;
  std::vector<std::uint32_t> state_;  // gray-code running XOR for index counter_
};

}  // namespace bode
