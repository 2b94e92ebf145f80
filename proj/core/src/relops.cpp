#include "skyt/relops.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace skyt {

std::string_view to_string(Comparator op) {
  switch (op) {
    case Comparator::lt: return "<";
    case Comparator::le: return "<=";
    case Comparator::gt: return ">";
    case Comparator::ge: return ">=";
    case Comparator::eq: return "=";
    case Comparator::ne: return "!=";
  }
  return "?";
}

namespace {

Comparator parse_comparator(std::string_view s) {
  if (s == "<") return Comparator::lt;
  if (s == "<=" || s == "≤") return Comparator::le;
  if (s == ">") return Comparator::gt;
  if (s == ">=" || s == "≥") return Comparator::ge;
  if (s == "=" || s == "==") return Comparator::eq;
  if (s == "!=" || s == "≠") return Comparator::ne;
  throw Error(ErrorCode::parse, "unknown comparator '" + std::string(s) + "'");
}

}  // namespace

bool Predicate::holds(double v) const {
  if (std::isnan(v)) return op == Comparator::ne;
  switch (op) {
    case Comparator::lt: return v < literal;
    case Comparator::le: return v <= literal;
    case Comparator::gt: return v > literal;
    case Comparator::ge: return v >= literal;
    case Comparator::eq: return v == literal;
    case Comparator::ne: return v != literal;
  }
  return false;
}

std::string Predicate::to_string() const {
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), literal);
  return column + " " + std::string(skyt::to_string(op)) + " " +
         std::string(buf, static_cast<std::size_t>(ptr - buf));
}

Predicate Predicate::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string column, op, literal, extra;
  if (!(in >> column >> op >> literal) || (in >> extra)) {
    throw Error(ErrorCode::parse, "predicate must be '<column> <op> <literal>': '" +
                                      std::string(text) + "'");
  }
  Predicate p;
  p.column = column;
  p.op = parse_comparator(op);
  // from_chars rejects a leading '+', strtod accepts inf/nan spellings too.
  char* end = nullptr;
  p.literal = std::strtod(literal.c_str(), &end);
  if (end != literal.c_str() + literal.size()) {
    throw Error(ErrorCode::parse, "bad predicate literal '" + literal + "'");
  }
  return p;
}

void Projection::validate() const {
  if (columns.empty()) throw Error(ErrorCode::invalid_argument, "projection is empty");
  std::set<std::string_view> seen;
  for (const auto& c : columns) {
    if (!seen.insert(c).second) {
      throw Error(ErrorCode::duplicate_id, "projection repeats column '" + c + "'");
    }
  }
}

SelectResult select(const Table& table, const Predicate& p) {
  const auto col = table.column_index(p.column);
  SelectResult out;
  out.table.columns = table.columns;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.row(r);
    if (!p.holds(row[col])) continue;
    out.table.row_ids.push_back(table.row_ids[r]);
    out.table.values.insert(out.table.values.end(), row.begin(), row.end());
  }
  out.selectivity = table.rows() == 0
                        ? 0.0
                        : static_cast<double>(out.table.rows()) / static_cast<double>(table.rows());
  return out;
}

Table project(const Table& table, const Projection& pr) {
  pr.validate();
  const auto idx = table.column_indices(pr.columns);
  Table out;
  out.columns = pr.columns;
  out.row_ids = table.row_ids;
  out.values.reserve(table.rows() * idx.size());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.row(r);
    for (auto c : idx) out.values.push_back(row[c]);
  }
  return out;
}

}  // namespace skyt
