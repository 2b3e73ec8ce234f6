#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dynvla::io {

enum class DType { F32, F64, U8, I32, I64 };

std::string_view dtype_name(DType t);
std::size_t dtype_size(DType t);

struct NamedArray {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<std::uint8_t> bytes;  // little-endian payload

  std::int64_t numel() const;
};

// Container of named little-endian arrays behind a plain-text header:
//
//   DYNVLA-ARRAYS 1
//   meta <key> <value>
//   array <name> <dtype> <d0>x<d1>x... <offset> <nbytes>
//   end
//   <payload>
//
// Offsets are relative to the first byte after the "end" line. Arrays and
// metadata are written in insertion order, so identical content serialises to
// identical bytes.
class ArrayFile {
 public:
  void set_meta(const std::string& key, const std::string& value);
  std::optional<std::string> meta(const std::string& key) const;
  const std::vector<std::pair<std::string, std::string>>& metadata() const { return meta_; }

  void add_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> values);
  void add_f64(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> values);
  void add_u8(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::uint8_t> values);
  void add_i64(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int64_t> values);

  bool has(const std::string& name) const;
  const NamedArray& get(const std::string& name) const;
  const std::vector<NamedArray>& arrays() const { return arrays_; }

  std::vector<float> f32(const std::string& name) const;
  std::vector<double> f64(const std::string& name) const;
  std::vector<std::uint8_t> u8(const std::string& name) const;
  std::vector<std::int64_t> i64(const std::string& name) const;

  std::string serialize() const;
  static ArrayFile parse(std::string_view bytes);

  void write(const std::filesystem::path& path) const;
  static ArrayFile read(const std::filesystem::path& path);

 private:
  void add_raw(const std::string& name, DType dtype, std::vector<std::int64_t> shape, const void* data,
               std::size_t count);
  template <typename T>
  std::vector<T> typed(const std::string& name, DType expected) const;

  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<NamedArray> arrays_;
};

}  // namespace dynvla::io
