#include "depthnet/container.hpp"

#include <cstring>
#include <fstream>

namespace depthnet {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(uint8_t((v >> (8 * i)) & 0xff));
}

struct Cursor {
  const uint8_t* p;
  size_t remaining;

  void need(size_t n) {
    if (remaining < n)
      throw ContainerError(ContainerError::Kind::truncated,
                           "container truncated: needed " + std::to_string(n) + " more bytes, " +
                               std::to_string(remaining) + " available");
  }
  uint8_t u8() {
    need(1);
    --remaining;
    return *p++;
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(p[0]) | uint16_t(p[1]) << 8;
    p += 2;
    remaining -= 2;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[i]) << (8 * i);
    p += 8;
    remaining -= 8;
    return v;
  }
  const uint8_t* bytes(size_t n) {
    need(n);
    const uint8_t* q = p;
    p += n;
    remaining -= n;
    return q;
  }
};

template <typename T>
void put_payload(std::vector<uint8_t>& out, const std::vector<T>& data) {
  using Bits = std::conditional_t<sizeof(T) == 4, uint32_t, uint64_t>;
  for (T v : data) {
    Bits bits;
    std::memcpy(&bits, &v, sizeof(T));
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(uint8_t((bits >> (8 * i)) & 0xff));
  }
}

template <typename T>
std::vector<T> read_payload(Cursor& c, size_t n) {
  using Bits = std::conditional_t<sizeof(T) == 4, uint32_t, uint64_t>;
  const uint8_t* raw = c.bytes(n * sizeof(T));
  std::vector<T> out(n);
  for (size_t i = 0; i < n; ++i) {
    Bits bits = 0;
    for (size_t b = 0; b < sizeof(T); ++b) bits |= Bits(raw[i * sizeof(T) + b]) << (8 * b);
    std::memcpy(&out[i], &bits, sizeof(T));
  }
  return out;
}

}  // namespace

void Container::check_name(const std::string& name) const {
  if (name.empty() || name.size() > 0xffff)
    throw ValueError("container entry name must be 1..65535 bytes");
  for (const auto& e : entries_)
    if (e.name == name)
      throw ContainerError(ContainerError::Kind::duplicate_name,
                           "duplicate container entry: " + name);
}

void Container::add(const std::string& name, Shape shape, std::vector<float> data) {
  check_name(name);
  if (int64_t(data.size()) != numel(shape))
    throw ShapeError("container entry " + name + ": data length " +
                     std::to_string(data.size()) + " does not match " + shape_str(shape));
  entries_.push_back(ContainerEntry{name, std::move(shape), std::move(data)});
}

void Container::add(const std::string& name, Shape shape, std::vector<double> data) {
  check_name(name);
  if (int64_t(data.size()) != numel(shape))
    throw ShapeError("container entry " + name + ": data length " +
                     std::to_string(data.size()) + " does not match " + shape_str(shape));
  entries_.push_back(ContainerEntry{name, std::move(shape), std::move(data)});
}

const ContainerEntry* Container::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

const ContainerEntry& Container::at(const std::string& name) const {
  const ContainerEntry* e = find(name);
  if (!e)
    throw ContainerError(ContainerError::Kind::missing_entry, "container has no entry " + name);
  return *e;
}

std::vector<uint8_t> Container::serialize() const {
  if (entries_.size() > 0xffff) throw ValueError("too many container entries");
  std::vector<uint8_t> out;
  out.insert(out.end(), {'D', 'T', 'E', 'N'});
  put_u16(out, kVersion);
  put_u16(out, uint16_t(entries_.size()));
  for (const auto& e : entries_) {
    put_u16(out, uint16_t(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(e.is_double() ? 1 : 0);
    out.push_back(uint8_t(e.shape.size()));
    for (int ext : e.shape) put_u64(out, uint64_t(ext));
    if (e.is_double())
      put_payload(out, e.f64());
    else
      put_payload(out, e.f32());
  }
  return out;
}

Container Container::parse(const std::vector<uint8_t>& bytes) {
  Cursor c{bytes.data(), bytes.size()};
  c.need(4);
  if (std::memcmp(c.bytes(4), "DTEN", 4) != 0)
    throw ContainerError(ContainerError::Kind::bad_magic, "bad container magic");
  const uint16_t version = c.u16();
  if (version != kVersion)
    throw ContainerError(ContainerError::Kind::bad_version,
                         "unsupported container version " + std::to_string(version));
  const uint16_t count = c.u16();
  Container out;
  for (uint16_t i = 0; i < count; ++i) {
    const uint16_t name_len = c.u16();
    const uint8_t* name_bytes = c.bytes(name_len);
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const uint8_t dtype = c.u8();
    if (dtype > 1)
      throw ContainerError(ContainerError::Kind::unknown_dtype,
                           "unknown dtype code " + std::to_string(int(dtype)) + " for entry " +
                               name);
    const uint8_t rank = c.u8();
    Shape shape(rank);
    uint64_t n = 1;
    for (uint8_t r = 0; r < rank; ++r) {
      const uint64_t ext = c.u64();
      if (ext > uint64_t(INT32_MAX))
        throw ContainerError(ContainerError::Kind::truncated,
                             "entry " + name + " extent overflows");
      shape[r] = int(ext);
      n *= ext;
    }
    if (out.find(name))
      throw ContainerError(ContainerError::Kind::duplicate_name,
                           "duplicate container entry: " + name);
    if (dtype == 0)
      out.entries_.push_back(ContainerEntry{name, shape, read_payload<float>(c, size_t(n))});
    else
      out.entries_.push_back(ContainerEntry{name, shape, read_payload<double>(c, size_t(n))});
  }
  if (c.remaining != 0)
    throw ContainerError(ContainerError::Kind::trailing_bytes,
                         std::to_string(c.remaining) + " unexpected trailing bytes");
  return out;
}

void Container::write(const std::string& path) const {
  const std::vector<uint8_t> bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContainerError(ContainerError::Kind::io, "cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw ContainerError(ContainerError::Kind::io, "failed writing " + path);
}

Container Container::read(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError(ContainerError::Kind::io, "cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw ContainerError(ContainerError::Kind::io, "failed reading " + path);
  return parse(bytes);
}

}  // namespace depthnet
