#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "skyt/bytes.hpp"
#include "skyt/config.hpp"
#include "skyt/matrix.hpp"

namespace skyt {

struct KvConfig {
  std::size_t max_kv_bytes = 1u << 20;
  unsigned stripe_factor = 1;
  // When set, every write is mirrored to one file per key under this directory.
  std::optional<std::filesystem::path> backing_dir;

  static KvConfig from(const Config& cfg);
};

struct WriteBatch {
  std::vector<std::pair<std::string, Bytes>> writes;
  // Version 0 means "key must be absent".
  std::vector<std::pair<std::string, std::uint64_t>> expected_versions;
};

// Device-local flat namespace. Per-key operations are linearizable and a
// WriteBatch is applied all-or-nothing under a single exclusive lock.
class KvNamespace {
 public:
  explicit KvNamespace(KvConfig config = {});

  KvNamespace(const KvNamespace&) = delete;
  KvNamespace& operator=(const KvNamespace&) = delete;

  std::uint64_t put(std::string_view key, Bytes value);
  Bytes get(std::string_view key) const;
  std::optional<Bytes> try_get(std::string_view key) const;
  void del(std::string_view key);
  std::vector<std::string> scan_prefix(std::string_view prefix) const;

  // Current version of a present key; 0 when absent.
  std::uint64_t version(std::string_view key) const;

  // Throws ErrorCode::conflict naming the first mismatched key; nothing is
  // written in that case.
  void atomic_multi_put(const WriteBatch& batch);

  std::size_t size() const;
  const KvConfig& config() const { return config_; }

 private:
  struct Entry {
    Bytes value;
    std::uint64_t version = 0;
  };

  void check_size(std::string_view key, std::size_t n) const;
  std::uint64_t store_locked(const std::string& key, Bytes value);
  void mirror_write(const std::string& key, const Bytes& value) const;
  void mirror_delete(const std::string& key) const;
  void load_backing();

  KvConfig config_;
  mutable std::shared_mutex mu_;
  std::map<std::string, Entry, std::less<>> entries_;
  // Last version ever issued per key, kept across deletes so versions never regress.
  std::map<std::string, std::uint64_t, std::less<>> issued_;
};

std::string percent_encode_key(std::string_view key);
std::string percent_decode_key(std::string_view name);

// Slice-level access honoring the namespace's stripe factor: a slice encoding
// is split into stripe_factor equal chunks "<slice key>.s<j>".
void put_slice(KvNamespace& ns, const std::string& partition_key, const Slice& slice);
Slice get_slice(const KvNamespace& ns, const std::string& partition_key, std::uint32_t index);
std::vector<Bytes> split_stripes(const Bytes& encoding, unsigned stripe_factor);

void put_partition(KvNamespace& ns, const Partition& partition);
MetadataSlice get_metadata(const KvNamespace& ns, const std::string& partition_key);

}  // namespace skyt
