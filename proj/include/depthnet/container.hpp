// On-disk tensor container (".dten").
//
// Layout, all multi-byte integers little-endian:
//   magic   "DTEN" (4 bytes)
//   version u16 (currently 1)
//   count   u16
//   entry*  { name_len u16, name bytes, dtype u8 (0 = f32, 1 = f64),
//             rank u8, extents u64 each, payload row-major }
// Round trips are bit-exact.
#pragma once

#include <cstdint>
#include <variant>

#include "depthnet/common.hpp"

namespace depthnet {

class ContainerError : public Error {
 public:
  enum class Kind {
    io,
    bad_magic,
    bad_version,
    truncated,
    duplicate_name,
    unknown_dtype,
    trailing_bytes,
    missing_entry,
  };

  ContainerError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct ContainerEntry {
  std::string name;
  Shape shape;
  std::variant<std::vector<float>, std::vector<double>> payload;

  bool is_double() const { return payload.index() == 1; }
  const std::vector<float>& f32() const { return std::get<0>(payload); }
  const std::vector<double>& f64() const { return std::get<1>(payload); }
};

class Container {
 public:
  static constexpr uint16_t kVersion = 1;

  void add(const std::string& name, Shape shape, std::vector<float> data);
  void add(const std::string& name, Shape shape, std::vector<double> data);

  const ContainerEntry* find(const std::string& name) const;
  const ContainerEntry& at(const std::string& name) const;
  const std::vector<ContainerEntry>& entries() const { return entries_; }
  size_t count() const { return entries_.size(); }

  std::vector<uint8_t> serialize() const;
  static Container parse(const std::vector<uint8_t>& bytes);

  void write(const std::string& path) const;
  static Container read(const std::string& path);

 private:
  void check_name(const std::string& name) const;
  std::vector<ContainerEntry> entries_;
};

}  // namespace depthnet
