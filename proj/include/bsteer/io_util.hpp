#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "bsteer/errors.hpp"

namespace bsteer::detail {

// All on-disk multi-byte values are little-endian. Serialization goes through
// explicit byte packing so the formats are stable across hosts.

template <class T>
inline void store_le(char* dst, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<char>(bytes[sizeof(T) - 1 - i]);
  } else {
    std::memcpy(dst, bytes, sizeof(T));
  }
}

template <class T>
inline T load_le(const char* src) {
  unsigned char bytes[sizeof(T)];
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>(src[sizeof(T) - 1 - i]);
  } else {
    std::memcpy(bytes, src, sizeof(T));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path + "' for writing");
  }

  template <class T>
  void put(T value) {
    char buf[sizeof(T)];
    store_le(buf, value);
    out_.write(buf, sizeof(T));
  }

  void put_bytes(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

  void finish() {
    out_.flush();
    if (!out_) throw IoError("write to '" + path_ + "' failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

// Tracks the byte offset so corruption errors can point at where the stream
// broke.
class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path + "' for reading");
    in_.seekg(0, std::ios::end);
    auto end = in_.tellg();
    size_ = end < 0 ? 0 : static_cast<std::size_t>(end);
    in_.seekg(0, std::ios::beg);
  }

  template <class T>
  T get(const char* what) {
    char buf[sizeof(T)];
    in_.read(buf, sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T)))
      throw CorruptionError(std::string("truncated while reading ") + what, offset_);
    offset_ += sizeof(T);
    return load_le<T>(buf);
  }

  void get_bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw CorruptionError(std::string("truncated while reading ") + what, offset_);
    offset_ += n;
  }

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  std::size_t offset() const { return offset_; }

  // Bytes between the cursor and the end of the file. Lets readers reject a
  // header whose declared shape cannot possibly fit before allocating for it.
  std::size_t remaining() const { return size_ > offset_ ? size_ - offset_ : 0; }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
  std::size_t size_ = 0;
};

}  // namespace bsteer::detail
