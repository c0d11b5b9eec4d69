#pragma once

// Flat binary checkpoint ("IMCF"):
//
//   magic "IMCF" | u32 version | u32 entry count |
//   entries { u32 name length, UTF-8 name, u8 dtype, u32 ndim, u64 dims[ndim],
//             raw little-endian payload } |
//   u32 CRC-32 of every preceding byte
//
// Entry order is insertion order, so identical content gives identical bytes.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "imc/tensor.hpp"

namespace imc {

enum class DType : std::uint8_t { F64 = 0, I64 = 1, U8 = 2, I8 = 3 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

class Checkpoint {
 public:
  struct Entry {
    std::string name;
    DType dtype;
    std::vector<std::uint64_t> shape;
    std::vector<std::uint8_t> payload;  // already little-endian
  };

  void put(const std::string& name, const Tensor& t);
  void put_f64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const double> v);
  void put_i64(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::int64_t> v);
  void put_u8(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::uint8_t> v);
  void put_i8(const std::string& name, std::vector<std::uint64_t> shape, std::span<const std::int8_t> v);
  void put_scalar(const std::string& name, double v) { put_f64(name, {}, std::span<const double>(&v, 1)); }
  void put_int(const std::string& name, std::int64_t v) { put_i64(name, {}, std::span<const std::int64_t>(&v, 1)); }
  void put_string(const std::string& name, const std::string& s);

  bool has(const std::string& name) const;
  const Entry& entry(const std::string& name) const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  Tensor tensor(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::vector<std::int64_t> i64(const std::string& name) const;
  std::vector<std::uint8_t> u8(const std::string& name) const;
  std::vector<std::int8_t> i8(const std::string& name) const;
  double scalar(const std::string& name) const;
  std::int64_t integer(const std::string& name) const;
  std::string string(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint parse(std::span<const std::uint8_t> bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  void add(Entry e);
  std::vector<Entry> entries_;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace imc
