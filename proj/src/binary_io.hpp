#pragma once

// Little-endian byte buffers shared by the CVEB / CVES / CVWT codecs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cvote::detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

class ByteWriter {
 public:
  void magic(std::string_view m);
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void f32(float v);
  std::vector<std::uint8_t>& bytes() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

// Reader errors are data errors naming the byte offset and the file.
class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, std::string source) : buf_(buf), source_(std::move(source)) {}

  void expect_magic(std::string_view m);
  std::uint8_t u8();
  std::uint32_t u32();
  float f32();
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }
  void expect_end();
  [[noreturn]] void error(const std::string& msg, std::size_t at) const;

 private:
  void need(std::size_t n);
  const std::vector<std::uint8_t>& buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace cvote::detail
