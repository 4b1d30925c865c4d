#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "dct/datagen.hpp"
#include "dct/training.hpp"

namespace dct {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& p);

// Binary layouts are little-endian. Every file ends with the SHA-256 of all
// preceding bytes; readers reject files whose digest does not match.
//
// Dataset:  "DCTDATA1" u32 version | u32 d | u64 n | u64 K | u64 prior_hash |
//           u64 seed | u8 truncated | n x (u64 unique_id, u8 tag, params,
//           u64 rows, rows*d f64 row-major) | 32-byte digest
// Model:    "DCTMODL1" u32 version | dimension header | u32 param count |
//           (name, u64 rows, u64 cols, f64 row-major) per parameter |
//           centroids | 32-byte digest

std::string serialize_dataset(const Dataset& d);
Dataset deserialize_dataset(std::string_view bytes);
void save_dataset(const Dataset& d, const std::filesystem::path& p);
Dataset load_dataset(const std::filesystem::path& p);

std::string serialize_paired(const PairedDataset& d);
PairedDataset deserialize_paired(std::string_view bytes);

std::string serialize_model(TransportModel& m);
TransportModel deserialize_model(std::string_view bytes);
void save_model(TransportModel& m, const std::filesystem::path& p);
TransportModel load_model(const std::filesystem::path& p);

std::string read_file(const std::filesystem::path& p);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& p, std::string_view bytes);

}  // namespace dct
