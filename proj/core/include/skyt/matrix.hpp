#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "skyt/bytes.hpp"

namespace skyt {

using Metadata = std::map<std::string, std::string>;

// Genes x cells expression matrix, dense and row-major.
struct ExprMatrix {
  std::vector<std::string> gene_ids;
  std::vector<std::string> cell_ids;
  std::vector<double> values;
  std::string domain;
  Metadata metadata;

  std::size_t rows() const { return gene_ids.size(); }
  std::size_t cols() const { return cell_ids.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols(), cols());
  }

  // Throws on dimension mismatch or duplicate ids.
  void validate() const;

  friend bool operator==(const ExprMatrix&, const ExprMatrix&) = default;
};

// A band of whole rows; the smallest storage unit of a partition.
struct Slice {
  std::uint32_t slice_index = 0;
  std::vector<std::string> gene_ids;
  std::uint32_t cols = 0;
  std::vector<double> values;

  std::size_t rows() const { return gene_ids.size(); }

  friend bool operator==(const Slice&, const Slice&) = default;
};

struct IndexHint {
  std::uint32_t slice_index = 0;
  double min = 0;
  double max = 0;

  friend bool operator==(const IndexHint&, const IndexHint&) = default;
};

struct MetadataSlice {
  std::vector<std::string> cell_ids;
  std::vector<std::string> gene_ids;
  std::uint32_t slice_count = 0;
  std::uint32_t slice_height = 0;
  std::string domain;
  Metadata app_metadata;
  std::vector<IndexHint> index_hints;

  friend bool operator==(const MetadataSlice&, const MetadataSlice&) = default;
};

struct Partition {
  std::string partition_key;
  std::vector<std::string> schema;
  std::vector<Slice> slices;
  MetadataSlice meta;
};

struct SlicingOptions {
  std::size_t max_kv_bytes = 1u << 20;
  unsigned stripe_factor = 1;
  // Forces a row count per slice; must still fit the budget.
  std::optional<std::size_t> slice_height;
};

// Tab-separated text: header "gene<TAB>cell..." then "gene_id<TAB>value...".
ExprMatrix ingest_matrix(std::istream& in, const std::string& domain = {});
void write_matrix_tsv(std::ostream& out, const ExprMatrix& m);

Partition slice_partition(const ExprMatrix& m, const std::string& partition_key,
                          const SlicingOptions& options = {});

ExprMatrix reassemble(std::span<const Slice> slices, const MetadataSlice& meta);

inline constexpr std::uint32_t kMaxSliceIndex = 99999;

std::string slice_key_name(const std::string& partition_key, std::uint32_t slice_index);
std::string meta_key_name(const std::string& partition_key);
std::string stripe_key_name(const std::string& slice_key, unsigned chunk);

// Self-describing slice container: "SKYT", u16 version, u32 index, u32 rows,
// u32 cols, (u32 len + bytes) per gene id, then row-major f64. Little-endian.
inline constexpr std::uint16_t kSliceFormatVersion = 1;
inline constexpr std::size_t kSliceHeaderBytes = 18;

Bytes encode_slice(const Slice& s);
Slice decode_slice(ByteView bytes);
std::size_t encoded_slice_size(std::span<const std::string> gene_ids, std::size_t cols);

Bytes encode_metadata(const MetadataSlice& meta);
MetadataSlice decode_metadata(ByteView bytes);

// Named-column view of slice-shaped data, used by the relational operators and
// the engine.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::string> row_ids;
  std::vector<double> values;

  std::size_t rows() const { return row_ids.size(); }
  std::size_t cols() const { return columns.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols(), cols());
  }
  // Throws unknown_column.
  std::size_t column_index(const std::string& name) const;
  std::vector<std::size_t> column_indices(std::span<const std::string> names) const;

  friend bool operator==(const Table&, const Table&) = default;
};

Table to_table(const Slice& s, const std::vector<std::string>& schema);
Table to_table(const ExprMatrix& m);

}  // namespace skyt
