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

#include "ilos/container.hpp"

#include <fstream>
#include <sstream>

namespace ilos {

bool Container::has(std::string_view name) const {
  for (const auto& [n, _] : sections) {
    if (n == name) return true;
  }
  return false;
}

const std::string& Container::section(std::string_view name) const {
  for (const auto& [n, bytes] : sections) {
    if (n == name) return bytes;
  }
  throw ParseError(kind, 0, "missing section '" + std::string(name) + "'");
}

std::string serialize_container(const Container& c) {
  ByteWriter w;
  w.put_raw(kContainerMagic);
  w.put<std::uint16_t>(kContainerVersion);
  w.put_string(c.kind);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.sections.size()));
  for (const auto& [name, bytes] : c.sections) {
    w.put_string(name);
    w.put<std::uint64_t>(bytes.size());
    w.put_raw(bytes);
  }
  return w.release();
}

Container parse_container(std::string_view bytes, const std::string& context) {
  if (bytes.substr(0, kContainerMagic.size()) != kContainerMagic) {
    throw ParseError(context, 0, "bad magic, not an ILOS1 container");
  }
  ByteReader r(bytes.substr(kContainerMagic.size()), context);
  const auto version = r.get<std::uint16_t>();
  if (version != kContainerVersion) {
    throw ParseError(context, 0, "unsupported container version " + std::to_string(version));
  }
  Container c;
  c.kind = r.get_string();
  const auto n = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = r.get_string();
    const auto len = r.get<std::uint64_t>();
    c.add(std::move(name), std::string(r.get_raw(static_cast<std::size_t>(len))));
  }
  if (!r.done()) throw ParseError(context, 0, "trailing bytes after last section");
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  const auto bytes = serialize_container(c);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

Container read_container(const std::filesystem::path& path, std::string_view expected_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("missing artifact " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  auto c = parse_container(ss.str(), path.string());
  if (!expected_kind.empty() && c.kind != expected_kind) {
    throw ParseError(path.string(), 0,
                     "expected container kind '" + std::string(expected_kind) + "', found '" +
                         c.kind + "'");
  }
  return c;
}

}  // namespace ilos
