#include "skyt/matrix.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace skyt {
namespace {

void check_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(ids.size());
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw Error(ErrorCode::duplicate_id, std::string(what) + " id '" + id + "' repeated");
    }
  }
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

double parse_double(std::string_view field, std::size_t line_no) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": bad value '" +
                                      std::string(field) + "'");
  }
  return v;
}

std::size_t max_id_length(std::span<const std::string> ids) {
  std::size_t longest = 0;
  for (const auto& id : ids) longest = std::max(longest, id.size());
  return longest;
}

}  // namespace

void ExprMatrix::validate() const {
  if (values.size() != gene_ids.size() * cell_ids.size()) {
    throw Error(ErrorCode::invalid_argument,
                "values hold " + std::to_string(values.size()) + " cells, expected " +
                    std::to_string(gene_ids.size()) + "x" + std::to_string(cell_ids.size()));
  }
  check_unique(gene_ids, "gene");
  check_unique(cell_ids, "cell");
}

ExprMatrix ingest_matrix(std::istream& in, const std::string& domain) {
  ExprMatrix m;
  m.domain = domain;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (!have_header) {
      if (fields.front() != "gene") {
        throw Error(ErrorCode::parse, "line 1: header must start with 'gene'");
      }
      for (std::size_t i = 1; i < fields.size(); ++i) m.cell_ids.emplace_back(fields[i]);
      check_unique(m.cell_ids, "cell");
      have_header = true;
      continue;
    }
    if (fields.size() != m.cell_ids.size() + 1) {
      throw Error(ErrorCode::parse, "line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(m.cell_ids.size() + 1) + " fields, got " +
                                        std::to_string(fields.size()));
    }
    m.gene_ids.emplace_back(fields[0]);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      m.values.push_back(parse_double(fields[i], line_no));
    }
  }
  if (!have_header) throw Error(ErrorCode::parse, "empty input: missing header");
  check_unique(m.gene_ids, "gene");
  return m;
}

void write_matrix_tsv(std::ostream& out, const ExprMatrix& m) {
  out << "gene";
  for (const auto& c : m.cell_ids) out << '\t' << c;
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << m.gene_ids[r];
    for (double v : m.row(r)) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      out << '\t' << std::string_view(buf, static_cast<std::size_t>(ptr - buf));
    }
    out << '\n';
  }
}

std::string slice_key_name(const std::string& partition_key, std::uint32_t slice_index) {
  if (slice_index > kMaxSliceIndex) {
    throw Error(ErrorCode::index_overflow,
                "slice index " + std::to_string(slice_index) + " exceeds 5-digit suffix");
  }
  char suffix[8];
  std::snprintf(suffix, sizeof(suffix), ".%05u", slice_index);
  return partition_key + suffix;
}

std::string meta_key_name(const std::string& partition_key) { return partition_key + ".meta"; }

std::string stripe_key_name(const std::string& slice_key, unsigned chunk) {
  return slice_key + ".s" + std::to_string(chunk);
}

std::size_t encoded_slice_size(std::span<const std::string> gene_ids, std::size_t cols) {
  std::size_t size = kSliceHeaderBytes;
  for (const auto& id : gene_ids) size += 4 + id.size();
  return size + gene_ids.size() * cols * sizeof(double);
}

Bytes encode_slice(const Slice& s) {
  if (s.values.size() != s.rows() * s.cols) {
    throw Error(ErrorCode::invalid_argument, "slice values do not match rows x cols");
  }
  Bytes out;
  out.reserve(encoded_slice_size(s.gene_ids, s.cols));
  ByteWriter w(out);
  w.raw(std::string_view("SKYT"));
  w.u16_le(kSliceFormatVersion);
  w.u32_le(s.slice_index);
  w.u32_le(static_cast<std::uint32_t>(s.rows()));
  w.u32_le(s.cols);
  for (const auto& id : s.gene_ids) {
    w.u32_le(static_cast<std::uint32_t>(id.size()));
    w.raw(id);
  }
  for (double v : s.values) w.f64_le(v);
  return out;
}

Slice decode_slice(ByteView bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || to_string(bytes.first(4)) != "SKYT") {
    throw Error(ErrorCode::format, "bad slice magic");
  }
  r.raw(4);
  auto version = r.u16_le();
  if (version != kSliceFormatVersion) {
    throw Error(ErrorCode::format, "unsupported slice format version " + std::to_string(version));
  }
  Slice s;
  s.slice_index = r.u32_le();
  auto rows = r.u32_le();
  s.cols = r.u32_le();
  // Each id needs at least its length prefix; reject absurd counts before allocating.
  if (rows > r.remaining() / 4 + 1) throw Error(ErrorCode::truncated, "row count exceeds payload");
  s.gene_ids.reserve(rows);
  for (std::uint32_t i = 0; i < rows; ++i) {
    auto len = r.u32_le();
    s.gene_ids.push_back(r.str(len));
  }
  auto cells = std::uint64_t{rows} * s.cols;
  if (cells * sizeof(double) > r.remaining()) {
    throw Error(ErrorCode::truncated, "payload holds " + std::to_string(r.remaining()) +
                                          " bytes, need " + std::to_string(cells * sizeof(double)));
  }
  s.values.reserve(cells);
  for (std::uint64_t i = 0; i < cells; ++i) s.values.push_back(r.f64_le());
  if (!r.done()) throw Error(ErrorCode::format, "trailing bytes after slice payload");
  return s;
}

Partition slice_partition(const ExprMatrix& m, const std::string& partition_key,
                          const SlicingOptions& options) {
  m.validate();
  if (options.max_kv_bytes == 0 || options.stripe_factor == 0) {
    throw Error(ErrorCode::invalid_argument, "max_kv_bytes and stripe_factor must be positive");
  }
  const std::size_t budget = options.max_kv_bytes * options.stripe_factor;
  const std::size_t cols = m.cols();
  const std::size_t worst_row = 4 + max_id_length(m.gene_ids) + cols * sizeof(double);

  std::size_t height = 0;
  if (budget > kSliceHeaderBytes) height = (budget - kSliceHeaderBytes) / worst_row;
  if (options.slice_height) {
    if (*options.slice_height == 0) {
      throw Error(ErrorCode::invalid_argument, "slice_height must be positive");
    }
    height = *options.slice_height;
  } else if (height == 0) {
    throw Error(ErrorCode::row_too_wide, "one encoded row needs " + std::to_string(worst_row) +
                                             " bytes, budget is " + std::to_string(budget));
  }
  height = std::min(height, std::max<std::size_t>(m.rows(), 1));

  Partition p;
  p.partition_key = partition_key;
  p.schema = m.cell_ids;
  const std::size_t count = m.rows() == 0 ? 0 : (m.rows() + height - 1) / height;
  if (count > std::size_t{kMaxSliceIndex} + 1) {
    throw Error(ErrorCode::index_overflow, std::to_string(count) + " slices exceed naming range");
  }
  p.slices.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t begin = i * height;
    const std::size_t end = std::min(begin + height, m.rows());
    Slice s;
    s.slice_index = static_cast<std::uint32_t>(i);
    s.cols = static_cast<std::uint32_t>(cols);
    s.gene_ids.assign(m.gene_ids.begin() + begin, m.gene_ids.begin() + end);
    s.values.assign(m.values.begin() + begin * cols, m.values.begin() + end * cols);
    if (options.slice_height && encoded_slice_size(s.gene_ids, cols) > budget) {
      throw Error(ErrorCode::row_too_wide,
                  "slice " + std::to_string(i) + " of height " + std::to_string(height) +
                      " encodes to " + std::to_string(encoded_slice_size(s.gene_ids, cols)) +
                      " bytes, budget is " + std::to_string(budget));
    }
    IndexHint hint{s.slice_index, 0, 0};
    if (!s.values.empty()) {
      auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
      hint.min = *lo;
      hint.max = *hi;
    }
    p.meta.index_hints.push_back(hint);
    p.slices.push_back(std::move(s));
  }
  p.meta.cell_ids = m.cell_ids;
  p.meta.gene_ids = m.gene_ids;
  p.meta.slice_count = static_cast<std::uint32_t>(count);
  p.meta.slice_height = static_cast<std::uint32_t>(height);
  p.meta.domain = m.domain;
  p.meta.app_metadata = m.metadata;
  return p;
}

ExprMatrix reassemble(std::span<const Slice> slices, const MetadataSlice& meta) {
  std::vector<bool> present(meta.slice_count, false);
  for (const auto& s : slices) {
    if (s.slice_index >= meta.slice_count) {
      throw Error(ErrorCode::invalid_argument,
                  "slice index " + std::to_string(s.slice_index) + " beyond slice_count");
    }
    present[s.slice_index] = true;
  }
  std::string missing;
  for (std::uint32_t i = 0; i < meta.slice_count; ++i) {
    if (!present[i]) missing += (missing.empty() ? "" : ",") + std::to_string(i);
  }
  if (!missing.empty()) throw Error(ErrorCode::missing_slice, "absent slice indices: " + missing);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (slices[i].slice_index != i) {
      throw Error(ErrorCode::invalid_argument, "slices must be given in index order");
    }
  }

  ExprMatrix m;
  m.cell_ids = meta.cell_ids;
  m.domain = meta.domain;
  m.metadata = meta.app_metadata;
  for (const auto& s : slices) {
    if (s.cols != meta.cell_ids.size()) {
      throw Error(ErrorCode::schema_mismatch, "slice " + std::to_string(s.slice_index) +
                                                  " width differs from schema");
    }
    m.gene_ids.insert(m.gene_ids.end(), s.gene_ids.begin(), s.gene_ids.end());
    m.values.insert(m.values.end(), s.values.begin(), s.values.end());
  }
  return m;
}

Bytes encode_metadata(const MetadataSlice& meta) {
  nlohmann::json j;
  j["cell_ids"] = meta.cell_ids;
  j["gene_ids"] = meta.gene_ids;
  j["slice_count"] = meta.slice_count;
  j["slice_height"] = meta.slice_height;
  j["domain"] = meta.domain;
  j["app_metadata"] = meta.app_metadata;
  auto hints = nlohmann::json::array();
  for (const auto& h : meta.index_hints) hints.push_back({h.slice_index, h.min, h.max});
  j["index_hints"] = std::move(hints);
  auto text = j.dump();
  return Bytes(text.begin(), text.end());
}

MetadataSlice decode_metadata(ByteView bytes) {
  try {
    auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    MetadataSlice meta;
    j.at("cell_ids").get_to(meta.cell_ids);
    j.at("gene_ids").get_to(meta.gene_ids);
    j.at("slice_count").get_to(meta.slice_count);
    j.at("slice_height").get_to(meta.slice_height);
    j.at("domain").get_to(meta.domain);
    j.at("app_metadata").get_to(meta.app_metadata);
    for (const auto& h : j.at("index_hints")) {
      meta.index_hints.push_back({h.at(0).get<std::uint32_t>(), h.at(1).get<double>(),
                                  h.at(2).get<double>()});
    }
    return meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::format, std::string("metadata slice: ") + e.what());
  }
}

std::size_t Table::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw Error(ErrorCode::unknown_column, "no column '" + name + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

std::vector<std::size_t> Table::column_indices(std::span<const std::string> names) const {
  std::vector<std::size_t> out;
  out.reserve(names.size());
  if (names.size() <= 8) {
    for (const auto& name : names) out.push_back(column_index(name));
    return out;
  }
  // Wide lists: index the schema once instead of scanning it per name.
  std::unordered_map<std::string_view, std::size_t> index;
  index.reserve(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) index.emplace(columns[c], c);
  for (const auto& name : names) {
    auto it = index.find(name);
    if (it == index.end()) throw Error(ErrorCode::unknown_column, "no column '" + name + "'");
    out.push_back(it->second);
  }
  return out;
}

Table to_table(const Slice& s, const std::vector<std::string>& schema) {
  if (s.cols != schema.size()) {
    throw Error(ErrorCode::schema_mismatch, "slice width " + std::to_string(s.cols) +
                                                " differs from schema width " +
                                                std::to_string(schema.size()));
  }
  return Table{schema, s.gene_ids, s.values};
}

Table to_table(const ExprMatrix& m) { return Table{m.cell_ids, m.gene_ids, m.values}; }

}  // namespace skyt
