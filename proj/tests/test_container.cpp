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

#include <gtest/gtest.h>

#include "ilos/container.hpp"
#include "ilos/date.hpp"
#include "ilos/errors.hpp"
#include "ilos/hash.hpp"
#include "test_util.hpp"

namespace ilos {
namespace {

TEST(Date, ParsesAndFormats) {
  const auto d = parse_iso_date("2020-03-01");
  ASSERT_TRUE(d.has_value());
  EXPECT_EQ(to_iso_date(*d), "2020-03-01");
  EXPECT_EQ(parse_iso_date("1970-01-01")->serial, 0);
  EXPECT_EQ(*parse_iso_date("2020-03-01") - *parse_iso_date("2020-02-28"), 2);
}

TEST(Date, RejectsMalformed) {
  for (const char* bad : {"2021-02-29", "2021-13-01", "2021-1-01", "20210101", "2021-01-01x", ""}) {
    EXPECT_FALSE(parse_iso_date(bad).has_value()) << bad;
  }
}

TEST(Hash, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Container, RoundTrip) {
  const auto dir = testing::temp_dir("container");
  Container c;
  c.kind = "test-kind";
  ByteWriter w;
  w.put<double>(1.5);
  w.put_string("hello");
  w.put_span<std::int32_t>(std::vector<std::int32_t>{1, 2, 3});
  c.add("body", w.release());
  c.add("empty", "");
  write_container(dir / "c.ilos", c);

  const auto back = read_container(dir / "c.ilos", "test-kind");
  EXPECT_EQ(back.kind, "test-kind");
  ASSERT_TRUE(back.has("empty"));
  auto r = back.reader("body");
  EXPECT_EQ(r.get<double>(), 1.5);
  EXPECT_EQ(r.get_string(), "hello");
  EXPECT_EQ(r.get_vector<std::int32_t>(), (std::vector<std::int32_t>{1, 2, 3}));
  EXPECT_TRUE(r.done());
  EXPECT_EQ(testing::read_text(dir / "c.ilos").substr(0, 5), "ILOS1");
}

TEST(Container, Errors) {
  const auto dir = testing::temp_dir("container");
  EXPECT_THROW(read_container(dir / "absent.ilos"), MissingArtifact);
  testing::write_text(dir / "bad.ilos", "NOPE!garbage");
  EXPECT_THROW(read_container(dir / "bad.ilos"), ParseError);

  Container c;
  c.kind = "a";
  c.add("s", "xyz");
  write_container(dir / "a.ilos", c);
  EXPECT_THROW(read_container(dir / "a.ilos", "b"), ParseError);
  EXPECT_THROW(read_container(dir / "a.ilos").section("missing"), ParseError);

  const auto bytes = serialize_container(c);
  EXPECT_THROW(parse_container(bytes.substr(0, bytes.size() - 1), "cut"), ParseError);
  EXPECT_THROW(parse_container(bytes + "x", "long"), ParseError);
}

TEST(Container, ReaderRejectsOverrun) {
  ByteWriter w;
  w.put<std::uint32_t>(100);
  ByteReader r(w.bytes(), "ctx");
  EXPECT_THROW(r.get_string(), ParseError);
}

}  // namespace
}  // namespace ilos
