#include "skyt/kvstore.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <mutex>
#include <set>

namespace skyt {

KvConfig KvConfig::from(const Config& cfg) {
  KvConfig out;
  auto max_kv = cfg.get_int("max_kv_bytes", static_cast<long long>(out.max_kv_bytes));
  auto stripe = cfg.get_int("stripe_factor", out.stripe_factor);
  if (max_kv <= 0 || stripe <= 0) {
    throw Error(ErrorCode::invalid_argument, "max_kv_bytes and stripe_factor must be positive");
  }
  out.max_kv_bytes = static_cast<std::size_t>(max_kv);
  out.stripe_factor = static_cast<unsigned>(stripe);
  if (cfg.has("backing_dir")) out.backing_dir = cfg.get("backing_dir", "");
  return out;
}

std::string percent_encode_key(std::string_view key) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    auto c = static_cast<unsigned char>(key[i]);
    bool plain = std::isalnum(c) || c == '-' || c == '_' || (c == '.' && i != 0);
    if (plain) {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(kHex[c >> 4]);
      out.push_back(kHex[c & 0xF]);
    }
  }
  return out;
}

std::string percent_decode_key(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    if (name[i] == '%' && i + 2 < name.size()) {
      out.push_back(static_cast<char>(std::stoi(std::string(name.substr(i + 1, 2)), nullptr, 16)));
      i += 2;
    } else {
      out.push_back(name[i]);
    }
  }
  return out;
}

KvNamespace::KvNamespace(KvConfig config) : config_(std::move(config)) {
  if (config_.max_kv_bytes == 0 || config_.stripe_factor == 0) {
    throw Error(ErrorCode::invalid_argument, "max_kv_bytes and stripe_factor must be positive");
  }
  if (config_.backing_dir) load_backing();
}

void KvNamespace::load_backing() {
  std::error_code ec;
  std::filesystem::create_directories(*config_.backing_dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + config_.backing_dir->string());
  for (const auto& file : std::filesystem::directory_iterator(*config_.backing_dir)) {
    if (!file.is_regular_file()) continue;
    std::ifstream in(file.path(), std::ios::binary);
    Bytes value((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto key = percent_decode_key(file.path().filename().string());
    issued_[key] = 1;
    entries_[key] = Entry{std::move(value), 1};
  }
}

void KvNamespace::mirror_write(const std::string& key, const Bytes& value) const {
  if (!config_.backing_dir) return;
  auto path = *config_.backing_dir / percent_encode_key(key);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(value.data()), static_cast<std::streamsize>(value.size()));
  if (!out) throw Error(ErrorCode::io, "write-through failed for " + path.string());
}

void KvNamespace::mirror_delete(const std::string& key) const {
  if (!config_.backing_dir) return;
  std::error_code ec;
  std::filesystem::remove(*config_.backing_dir / percent_encode_key(key), ec);
}

void KvNamespace::check_size(std::string_view key, std::size_t n) const {
  if (n > config_.max_kv_bytes) {
    throw Error(ErrorCode::value_too_large, "value for '" + std::string(key) + "' has " +
                                                std::to_string(n) + " bytes, limit " +
                                                std::to_string(config_.max_kv_bytes));
  }
}

std::uint64_t KvNamespace::store_locked(const std::string& key, Bytes value) {
  auto version = ++issued_[key];
  mirror_write(key, value);
  entries_[key] = Entry{std::move(value), version};
  return version;
}

std::uint64_t KvNamespace::put(std::string_view key, Bytes value) {
  check_size(key, value.size());
  std::unique_lock lock(mu_);
  return store_locked(std::string(key), std::move(value));
}

std::optional<Bytes> KvNamespace::try_get(std::string_view key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

Bytes KvNamespace::get(std::string_view key) const {
  auto v = try_get(key);
  if (!v) throw Error(ErrorCode::not_found, "key '" + std::string(key) + "'");
  return std::move(*v);
}

void KvNamespace::del(std::string_view key) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(ErrorCode::not_found, "key '" + std::string(key) + "'");
  mirror_delete(it->first);
  entries_.erase(it);
}

std::vector<std::string> KvNamespace::scan_prefix(std::string_view prefix) const {
  std::shared_lock lock(mu_);
  std::vector<std::string> keys;
  for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    keys.push_back(it->first);
  }
  return keys;
}

std::uint64_t KvNamespace::version(std::string_view key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.version;
}

std::size_t KvNamespace::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

void KvNamespace::atomic_multi_put(const WriteBatch& batch) {
  std::set<std::string_view> keys;
  for (const auto& [key, value] : batch.writes) {
    if (!keys.insert(key).second) {
      throw Error(ErrorCode::invalid_argument, "duplicate key '" + key + "' in batch");
    }
    check_size(key, value.size());
  }
  std::unique_lock lock(mu_);
  for (const auto& [key, expected] : batch.expected_versions) {
    auto it = entries_.find(key);
    std::uint64_t current = it == entries_.end() ? 0 : it->second.version;
    if (current != expected) {
      throw Error(ErrorCode::conflict, "key '" + key + "' at version " + std::to_string(current) +
                                           ", expected " + std::to_string(expected));
    }
  }
  for (const auto& [key, value] : batch.writes) store_locked(key, value);
}

std::vector<Bytes> split_stripes(const Bytes& encoding, unsigned stripe_factor) {
  if (stripe_factor == 0) throw Error(ErrorCode::invalid_argument, "stripe_factor must be positive");
  const std::size_t chunk = (encoding.size() + stripe_factor - 1) / stripe_factor;
  std::vector<Bytes> chunks;
  chunks.reserve(stripe_factor);
  for (unsigned j = 0; j < stripe_factor; ++j) {
    auto begin = std::min(encoding.size(), j * chunk);
    auto end = std::min(encoding.size(), begin + chunk);
    chunks.emplace_back(encoding.begin() + static_cast<std::ptrdiff_t>(begin),
                        encoding.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return chunks;
}

void put_slice(KvNamespace& ns, const std::string& partition_key, const Slice& slice) {
  auto key = slice_key_name(partition_key, slice.slice_index);
  auto encoding = encode_slice(slice);
  const unsigned f = ns.config().stripe_factor;
  WriteBatch batch;
  if (f == 1) {
    batch.writes.emplace_back(key, std::move(encoding));
  } else {
    auto chunks = split_stripes(encoding, f);
    for (unsigned j = 0; j < f; ++j) batch.writes.emplace_back(stripe_key_name(key, j), std::move(chunks[j]));
  }
  ns.atomic_multi_put(batch);
}

Slice get_slice(const KvNamespace& ns, const std::string& partition_key, std::uint32_t index) {
  auto key = slice_key_name(partition_key, index);
  const unsigned f = ns.config().stripe_factor;
  if (f == 1) return decode_slice(ns.get(key));
  Bytes encoding;
  for (unsigned j = 0; j < f; ++j) {
    auto chunk = ns.try_get(stripe_key_name(key, j));
    if (!chunk) {
      throw Error(ErrorCode::corruption, "stripe chunk " + std::to_string(j) + " of '" + key +
                                             "' is missing");
    }
    encoding.insert(encoding.end(), chunk->begin(), chunk->end());
  }
  return decode_slice(encoding);
}

void put_partition(KvNamespace& ns, const Partition& partition) {
  for (const auto& s : partition.slices) put_slice(ns, partition.partition_key, s);
  ns.put(meta_key_name(partition.partition_key), encode_metadata(partition.meta));
}

MetadataSlice get_metadata(const KvNamespace& ns, const std::string& partition_key) {
  return decode_metadata(ns.get(meta_key_name(partition_key)));
}

}  // namespace skyt
