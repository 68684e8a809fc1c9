#include "prodsearch/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "prodsearch/errors.hpp"

namespace prodsearch {

void BinaryWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>(v >> (8 * i)));
}

void BinaryWriter::put_u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>(v >> (8 * i)));
}

void BinaryWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::put_string(std::string_view s) {
  put_u32(static_cast<std::uint32_t>(s.size()));
  buffer_.append(s);
}

void BinaryWriter::write_file(const std::filesystem::path& path) const {
  write_file_bytes(path, buffer_);
}

BinaryReader BinaryReader::from_file(const std::filesystem::path& path, std::string what) {
  return BinaryReader(read_file_bytes(path), std::move(what));
}

void BinaryReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) {
    throw DataError(what_ + ": truncated file (needed " + std::to_string(n) +
                    " bytes at offset " + std::to_string(pos_) + ", " +
                    std::to_string(data_.size() - pos_) + " left)");
  }
}

void BinaryReader::expect_magic(std::string_view magic) {
  if (data_.size() - pos_ < magic.size() ||
      std::string_view(data_).substr(pos_, magic.size()) != magic) {
    throw DataError(what_ + ": bad header, expected magic string \"" +
                    std::string(magic.substr(0, magic.find('\0'))) + "\"");
  }
  pos_ += magic.size();
}

std::uint8_t BinaryReader::get_u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t BinaryReader::get_u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::get_u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

double BinaryReader::get_f64() { return std::bit_cast<double>(get_u64()); }

std::string BinaryReader::get_string() {
  const std::uint32_t n = get_u32();
  need(n);
  std::string s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

void BinaryReader::expect_end() const {
  if (pos_ != data_.size()) {
    throw DataError(what_ + ": " + std::to_string(data_.size() - pos_) +
                    " trailing bytes after end of data");
  }
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace prodsearch
