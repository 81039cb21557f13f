#include "bode/quasirand.hpp"

#include <bit>
#include <sstream>
#include <string>

#include "bode/error.hpp"

namespace bode {

extern const char* const kBundledDirectionNumbers;  // generated from data/

DirectionTable DirectionTable::parse(std::istream& in) {
  DirectionTable table;
  std::string line;
  int expected = 2;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == 'd' || line[0] == '#') continue;
    std::istringstream row(line);
    int d = 0;
    PrimitivePolynomial p;
    if (!(row >> d >> p.degree >> p.coeffs)) throw InvalidArgument("malformed direction-number row: " + line);
    if (d != expected) throw InvalidArgument("direction-number rows out of order at d=" + std::to_string(d));
    if (p.degree < 1 || p.degree > SobolGenerator::kMaxBits)
      throw InvalidArgument("bad polynomial degree at d=" + std::to_string(d));
    p.initial.resize(p.degree);
    for (int k = 0; k < p.degree; ++k) {
      if (!(row >> p.initial[k])) throw InvalidArgument("missing m_i at d=" + std::to_string(d));
      // m_k must be odd and < 2^k
      if ((p.initial[k] & 1u) == 0 || p.initial[k] >= (1u << (k + 1)))
        throw InvalidArgument("invalid initial direction number at d=" + std::to_string(d));
    }
    table.rows_.push_back(std::move(p));
    ++expected;
  }
  return table;
}

const DirectionTable& DirectionTable::bundled() {
  static const DirectionTable table = [] {
    std::istringstream in(kBundledDirectionNumbers);
    return parse(in);
  }();
  return table;
}

SobolGenerator::SobolGenerator(int dimension, std::uint64_t seed_skip, SobolOrder order,
                               const DirectionTable& table)
    : dimension_(dimension), order_(order) {
  if (dimension < 1 || dimension > table.max_dimension())
    throw InvalidArgument("unsupported Sobol dimension " + std::to_string(dimension) +
                          " (bundled table covers 1.." + std::to_string(table.max_dimension()) + ")");
  constexpr int B = kMaxBits;
  v_.assign(dimension, std::vector<std::uint32_t>(B));
  for (int j = 0; j < B; ++j) v_[0][j] = 1u << (B - 1 - j);
  for (int d = 2; d <= dimension; ++d) {
    const auto& p = table.row(d);
    const int s = p.degree;
    auto& v = v_[d - 1];
    for (int j = 0; j < s && j < B; ++j) v[j] = p.initial[j] << (B - 1 - j);
    // m_j = 2 a_1 m_{j-1} ^ 4 a_2 m_{j-2} ^ ... ^ 2^s m_{j-s} ^ m_{j-s}, in scaled form
    for (int j = s; j < B; ++j) {
      std::uint32_t x = v[j - s] ^ (v[j - s] >> s);
      for (int k = 1; k < s; ++k) {
        if ((p.coeffs >> (s - 1 - k)) & 1u) x ^= v[j - k];
      }
      v[j] = x;
    }
  }
  state_.assign(dimension, 0u);
  skip(seed_skip);
}

void SobolGenerator::skip(std::uint64_t n) {
  const std::uint64_t target = counter_ + n;
  if (order_ == SobolOrder::gray_code) {
    // state for index n is the XOR of V_m over the set bits of gray(n)
    const std::uint64_t g = target ^ (target >> 1);
    for (int d = 0; d < dimension_; ++d) {
      std::uint32_t x = 0;
      for (int m = 0; m < kMaxBits; ++m)
        if ((g >> m) & 1u) x ^= v_[d][m];
      state_[d] = x;
    }
  }
  counter_ = target;
}

std::vector<std::uint32_t> SobolGenerator::next_integers() {
  std::vector<std::uint32_t> out(dimension_);
  const std::uint64_t n = counter_;
  if (order_ == SobolOrder::gray_code) {
    out = state_;
    const int c = std::countr_one(n);  // bit that flips going from gray(n) to gray(n+1)
    if (c < kMaxBits)
      for (int d = 0; d < dimension_; ++d) state_[d] ^= v_[d][c];
  } else {
    for (int d = 0; d < dimension_; ++d) {
      std::uint32_t x = 0;
      for (int m = 0; m < kMaxBits; ++m)
        if ((n >> m) & 1u) x ^= v_[d][m];
      out[d] = x;
    }
  }
  ++counter_;
  return out;
}

std::vector<double> SobolGenerator::next_point() {
  auto ints = next_integers();
  std::vector<double> x(ints.size());
  for (std::size_t i = 0; i < ints.size(); ++i) x[i] = static_cast<double>(ints[i]) * 0x1.0p-30;
  return x;
}

}  // namespace bode
