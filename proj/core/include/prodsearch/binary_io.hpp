#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace prodsearch {

/// Little-endian encoder used by the model and index file formats.
class BinaryWriter {
 public:
  void put_bytes(std::string_view bytes) { buffer_.append(bytes); }
  void put_u8(std::uint8_t v) { buffer_.push_back(static_cast<char>(v)); }
  void put_u32(std::uint32_t v);
  void put_u64(std::uint64_t v);
  void put_i64(std::int64_t v) { put_u64(static_cast<std::uint64_t>(v)); }
  void put_f64(double v);
  /// u32 length prefix followed by the raw bytes.
  void put_string(std::string_view s);

  const std::string& bytes() const { return buffer_; }
  std::size_t size() const { return buffer_.size(); }

  void write_file(const std::filesystem::path& path) const;

 private:
  std::string buffer_;
};

/// Bounds-checked little-endian decoder. Every read past the end raises
/// DataError naming `what` so truncated files produce a useful diagnostic.
class BinaryReader {
 public:
  BinaryReader(std::string data, std::string what)
      : data_(std::move(data)), what_(std::move(what)) {}

  static BinaryReader from_file(const std::filesystem::path& path, std::string what);

  /// Reads `magic.size()` bytes and fails unless they equal `magic`.
  void expect_magic(std::string_view magic);
  std::uint8_t get_u8();
  std::uint32_t get_u32();
  std::uint64_t get_u64();
  std::int64_t get_i64() { return static_cast<std::int64_t>(get_u64()); }
  double get_f64();
  std::string get_string();

  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::string& data() const { return data_; }
  /// Fails if unread bytes remain.
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::string data_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace prodsearch
