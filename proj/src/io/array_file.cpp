#include "dynvla/io/array_file.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dynvla/common/error.hpp"

namespace dynvla::io {

namespace {

constexpr std::string_view kMagic = "DYNVLA-ARRAYS 1";

void to_little_endian(std::uint8_t* data, std::size_t count, std::size_t elem) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) std::reverse(data + i * elem, data + (i + 1) * elem);
  }
}

DType parse_dtype(std::string_view s) {
  for (DType t : {DType::F32, DType::F64, DType::U8, DType::I32, DType::I64}) {
    if (dtype_name(t) == s) return t;
  }
  throw FormatError("unknown dtype: " + std::string(s));
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::vector<std::int64_t> parse_shape(const std::string& s) {
  std::vector<std::int64_t> shape;
  if (s == "scalar") return shape;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, 'x')) shape.push_back(std::stoll(part));
  return shape;
}

}  // namespace

std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::U8: return "u8";
    case DType::I32: return "i32";
    case DType::I64: return "i64";
  }
  return "?";
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::F32: case DType::I32: return 4;
    case DType::F64: case DType::I64: return 8;
    case DType::U8: return 1;
  }
  return 0;
}

std::int64_t NamedArray::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>());
}

void ArrayFile::set_meta(const std::string& key, const std::string& value) {
  DYNVLA_EXPECT(key.find_first_of(" \n") == std::string::npos, "meta key must not contain spaces");
  DYNVLA_EXPECT(value.find('\n') == std::string::npos, "meta value must be a single line");
  for (auto& kv : meta_) {
    if (kv.first == key) {
      kv.second = value;
      return;
    }
  }
  meta_.emplace_back(key, value);
}

std::optional<std::string> ArrayFile::meta(const std::string& key) const {
  for (const auto& kv : meta_) {
    if (kv.first == key) return kv.second;
  }
  return std::nullopt;
}

void ArrayFile::add_raw(const std::string& name, DType dtype, std::vector<std::int64_t> shape, const void* data,
                        std::size_t count) {
  DYNVLA_EXPECT(!name.empty() && name.find_first_of(" \n") == std::string::npos, "bad array name");
  DYNVLA_EXPECT(!has(name), "duplicate array name: " + name);
  NamedArray a{name, dtype, std::move(shape), {}};
  DYNVLA_EXPECT(static_cast<std::size_t>(a.numel()) == count, "array '" + name + "' shape/value count mismatch");
  a.bytes.resize(count * dtype_size(dtype));
  if (count) std::memcpy(a.bytes.data(), data, a.bytes.size());
  to_little_endian(a.bytes.data(), count, dtype_size(dtype));
  arrays_.push_back(std::move(a));
}

void ArrayFile::add_f32(const std::string& name, std::vector<std::int64_t> shape, std::span<const float> v) {
  add_raw(name, DType::F32, std::move(shape), v.data(), v.size());
}
void ArrayFile::add_f64(const std::string& name, std::vector<std::int64_t> shape, std::span<const double> v) {
  add_raw(name, DType::F64, std::move(shape), v.data(), v.size());
}
void ArrayFile::add_u8(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::uint8_t> v) {
  add_raw(name, DType::U8, std::move(shape), v.data(), v.size());
}
void ArrayFile::add_i64(const std::string& name, std::vector<std::int64_t> shape, std::span<const std::int64_t> v) {
  add_raw(name, DType::I64, std::move(shape), v.data(), v.size());
}

bool ArrayFile::has(const std::string& name) const {
  return std::any_of(arrays_.begin(), arrays_.end(), [&](const NamedArray& a) { return a.name == name; });
}

const NamedArray& ArrayFile::get(const std::string& name) const {
  for (const NamedArray& a : arrays_) {
    if (a.name == name) return a;
  }
  throw FormatError("missing array: " + name);
}

template <typename T>
std::vector<T> ArrayFile::typed(const std::string& name, DType expected) const {
  const NamedArray& a = get(name);
  if (a.dtype != expected) {
    throw FormatError("array '" + name + "' has dtype " + std::string(dtype_name(a.dtype)));
  }
  std::vector<T> out(static_cast<std::size_t>(a.numel()));
  std::vector<std::uint8_t> tmp = a.bytes;
  to_little_endian(tmp.data(), out.size(), sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), tmp.data(), tmp.size());
  return out;
}

std::vector<float> ArrayFile::f32(const std::string& name) const { return typed<float>(name, DType::F32); }
std::vector<double> ArrayFile::f64(const std::string& name) const { return typed<double>(name, DType::F64); }
std::vector<std::uint8_t> ArrayFile::u8(const std::string& name) const { return typed<std::uint8_t>(name, DType::U8); }
std::vector<std::int64_t> ArrayFile::i64(const std::string& name) const {
  return typed<std::int64_t>(name, DType::I64);
}

std::string ArrayFile::serialize() const {
  std::ostringstream header;
  header << kMagic << '\n';
  for (const auto& [k, v] : meta_) header << "meta " << k << ' ' << v << '\n';
  std::size_t offset = 0;
  for (const NamedArray& a : arrays_) {
    header << "array " << a.name << ' ' << dtype_name(a.dtype) << ' ' << shape_string(a.shape) << ' ' << offset << ' '
           << a.bytes.size() << '\n';
    offset += a.bytes.size();
  }
  header << "end\n";
  std::string out = header.str();
  out.reserve(out.size() + offset);
  for (const NamedArray& a : arrays_) out.append(reinterpret_cast<const char*>(a.bytes.data()), a.bytes.size());
  return out;
}

ArrayFile ArrayFile::parse(std::string_view bytes) {
  ArrayFile file;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) throw FormatError("truncated header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return line;
  };
  if (next_line() != kMagic) throw FormatError("not a DYNVLA-ARRAYS file");
  struct Entry {
    NamedArray array;
    std::size_t offset;
    std::size_t nbytes;
  };
  std::vector<Entry> entries;
  for (;;) {
    const std::string line = next_line();
    if (line == "end") break;
    std::istringstream ss(line);
    std::string kind;
    ss >> kind;
    if (kind == "meta") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      file.meta_.emplace_back(key, value);
    } else if (kind == "array") {
      std::string name, dtype, shape;
      std::size_t offset = 0, nbytes = 0;
      if (!(ss >> name >> dtype >> shape >> offset >> nbytes)) throw FormatError("bad array line: " + line);
      entries.push_back({NamedArray{name, parse_dtype(dtype), parse_shape(shape), {}}, offset, nbytes});
    } else {
      throw FormatError("unexpected header line: " + line);
    }
  }
  const std::string_view payload = bytes.substr(pos);
  for (Entry& e : entries) {
    if (e.offset + e.nbytes > payload.size()) throw FormatError("array '" + e.array.name + "' out of bounds");
    if (static_cast<std::size_t>(e.array.numel()) * dtype_size(e.array.dtype) != e.nbytes) {
      throw FormatError("array '" + e.array.name + "' size does not match its shape");
    }
    e.array.bytes.assign(payload.begin() + e.offset, payload.begin() + e.offset + e.nbytes);
    file.arrays_.push_back(std::move(e.array));
  }
  return file;
}

void ArrayFile::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  const std::string data = serialize();
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

ArrayFile ArrayFile::read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace dynvla::io
