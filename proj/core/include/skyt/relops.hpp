#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "skyt/matrix.hpp"

namespace skyt {

enum class Comparator { lt, le, gt, ge, eq, ne };

std::string_view to_string(Comparator op);

// Single-column comparison against a float literal. NaN values satisfy only `!=`.
struct Predicate {
  std::string column;
  Comparator op = Comparator::gt;
  double literal = 0;

  bool holds(double value) const;
  // Text form "<column> <op> <literal>"; the literal round-trips exactly.
  std::string to_string() const;
  static Predicate parse(std::string_view text);

  friend bool operator==(const Predicate& a, const Predicate& b) {
    // Literal compared bitwise so -0.0 / NaN literals survive round-trips.
    return a.column == b.column && a.op == b.op &&
           std::bit_cast<std::uint64_t>(a.literal) == std::bit_cast<std::uint64_t>(b.literal);
  }
};

struct Projection {
  std::vector<std::string> columns;

  // Throws on empty or duplicate column lists.
  void validate() const;

  friend bool operator==(const Projection&, const Projection&) = default;
};

struct SelectResult {
  Table table;
  double selectivity = 0;  // surviving / total; 0 for an empty input
};

SelectResult select(const Table& table, const Predicate& p);
Table project(const Table& table, const Projection& pr);

}  // namespace skyt
