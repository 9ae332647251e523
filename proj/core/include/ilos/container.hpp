/*
 * Copyright 2026 The ILOS Forecast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// The ILOS1 binary container: a magic tag, a format version, a kind string
// and a list of named byte sections. All integers are little-endian.
//
//   "ILOS1" | u16 version | str kind | u32 n | n x (str name | u64 len | bytes)
//
// where str = u32 length followed by UTF-8 bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "ilos/errors.hpp"

namespace ilos {

static_assert(std::endian::native == std::endian::little,
              "the ILOS1 container is written in host order on little-endian hosts only");

inline constexpr std::string_view kContainerMagic = "ILOS1";
inline constexpr std::uint16_t kContainerVersion = 1;

class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.append(p, sizeof(T));
  }
  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.append(s);
  }
  template <class T>
    requires std::is_arithmetic_v<T>
  void put_span(std::span<const T> values) {
    put<std::uint64_t>(values.size());
    bytes_.append(reinterpret_cast<const char*>(values.data()), values.size_bytes());
  }

  void put_raw(std::string_view raw) { bytes_.append(raw); }

  const std::string& bytes() const { return bytes_; }
  std::string release() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string context)
      : bytes_(bytes), context_(std::move(context)) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  template <class T>
    requires std::is_arithmetic_v<T>
  std::vector<T> get_vector() {
    const auto n = get<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(T)) fail("vector length exceeds section");
    std::vector<T> out(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(T));
    pos_ += n * sizeof(T);
    return out;
  }
  std::string_view get_raw(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated section");
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(context_, 0, what); }

  std::string_view bytes_;
  std::string context_;
  std::size_t pos_ = 0;
};

struct Container {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> sections;

  void add(std::string name, std::string bytes) {
    sections.emplace_back(std::move(name), std::move(bytes));
  }
  bool has(std::string_view name) const;
  // Throws ParseError naming the section when absent.
  const std::string& section(std::string_view name) const;
  ByteReader reader(std::string_view name) const {
    return ByteReader(section(name), kind + "/" + std::string(name));
  }
};

std::string serialize_container(const Container& c);
Container parse_container(std::string_view bytes, const std::string& context);

void write_container(const std::filesystem::path& path, const Container& c);
// Throws MissingArtifact if the file is absent and ParseError on a bad magic,
// unsupported version, or an unexpected kind (when expected_kind is non-empty).
Container read_container(const std::filesystem::path& path, std::string_view expected_kind = {});

}  // namespace ilos
