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

#include <algorithm>
#include <map>
#include <random>
#include <tuple>

#include <gtest/gtest.h>

#include "ilos/errors.hpp"
#include "ilos/ingest.hpp"
#include "test_util.hpp"

namespace ilos {
namespace {

Day day(const char* iso) { return *parse_iso_date(iso); }

PmRecord rec(std::string port, std::string fac, const char* date, std::string pm, double v,
             std::string net = "net1") {
  return PmRecord{std::move(net), std::move(port), std::move(fac), day(date), std::move(pm), v};
}

TEST(ParsePmCsv, LineMapsFields) {
  const auto r = parse_pm_line("net1,p7,OTM,2020-03-01,UAS,3612", "x.csv", 2);
  EXPECT_EQ(r, rec("p7", "OTM", "2020-03-01", "UAS", 3612.0));
}

TEST(ParsePmCsv, ErrorsNameTheLine) {
  const auto dir = testing::temp_dir("ingest");
  testing::write_text(dir / "a.csv", std::string(kPmCsvHeader) +
                                         "\nnet1,p1,OTM,2020-03-01,UAS,1\n"
                                         "net1,p1,OTM,2020-03-02,UAS,abc\n");
  try {
    parse_pm_csv(dir / "a.csv");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3U);
    EXPECT_NE(std::string(e.what()).find("abc"), std::string::npos);
  }
  EXPECT_THROW(parse_pm_line("net1,p1,OTM,2020-02-30,UAS,1", "x", 1), ParseError);
  EXPECT_THROW(parse_pm_line("net1,p1,OTM,2020-02-01,UAS", "x", 1), ParseError);
  EXPECT_THROW(parse_pm_csv(dir / "absent.csv"), ParseError);
}

TEST(ParsePmCsv, KeepsOrderAndCount) {
  const auto dir = testing::temp_dir("ingest");
  const std::vector<PmRecord> recs = {rec("p2", "ETH", "2020-03-02", "QAVG", 1.25),
                                      rec("p1", "OTM", "2020-03-01", "UAS", 0.0),
                                      rec("p1", "OTM", "2020-03-01", "HCCS", 17.0)};
  write_pm_csv(dir / "a.csv", recs);
  EXPECT_EQ(parse_pm_csv(dir / "a.csv"), recs);
}

TEST(ParsePmCsv, SchemaHintRestrictsFacilities) {
  FeatureSchema hint;
  hint.facilities = {"OTM"};
  EXPECT_NO_THROW(parse_pm_line("n,p,OTM,2020-03-01,UAS,1", "x", 1, &hint));
  EXPECT_THROW(parse_pm_line("n,p,ETH,2020-03-01,UAS,1", "x", 1, &hint), ParseError);
}

TEST(BuildSchema, UnionAndAutoInclude) {
  const std::vector<PmRecord> recs = {rec("p1", "OTM", "2020-03-01", "QAVG", 1),
                                      rec("p1", "ETH", "2020-03-01", "UAS", 1),
                                      rec("p2", "OTM", "2020-03-01", "QAVG", 2)};
  const auto s = build_schema(recs, {});
  EXPECT_EQ(s.numeric, (std::vector<std::string>{"HCCS", "QAVG", "UAS"}));
  EXPECT_EQ(s.facilities, (std::vector<std::string>{"ETH", "OTM"}));
  EXPECT_EQ(s.width(), 5U);
}

TEST(BuildSchema, IndicatorsKeptOnlyWhenObserved) {
  const std::vector<PmRecord> recs = {rec("p1", "OTM", "2020-03-01", "UP", 1)};
  const std::vector<std::string> ind = {"UP", "NEVER"};
  const auto s = build_schema(recs, ind);
  EXPECT_EQ(s.protocol_indicators, (std::vector<std::string>{"UP"}));
  EXPECT_THROW(build_schema(std::vector<PmRecord>{}, ind), DataError);
}

TEST(BuildSchema, UnionSizeBound) {
  std::vector<PmRecord> recs;
  for (int i = 0; i < 76; ++i) recs.push_back(rec("p", "A", "2020-01-01", "F" + std::to_string(i), 1, "a"));
  for (int i = 34; i < 125; ++i) recs.push_back(rec("p", "A", "2020-01-01", "F" + std::to_string(i), 1, "b"));
  // 76 + 91 - 42 names, plus UAS and HCCS.
  EXPECT_EQ(build_schema(recs, {}).numeric_count(), 127U);
}

TEST(Merge, MaxAcrossFacilities) {
  const std::vector<PmRecord> recs = {rec("p1", "OTM", "2020-03-01", "UAS", 3),
                                      rec("p1", "ETH", "2020-03-01", "UAS", 10),
                                      rec("p1", "OTM", "2020-03-01", "QAVG", 12.0),
                                      rec("p1", "ETH", "2020-03-03", "HCCS", 0)};
  const auto schema = build_schema(recs, {});
  const auto series = merge_to_port_level(recs, schema);
  ASSERT_EQ(series.size(), 1U);
  const auto& s = series[0];
  const auto uas = schema.uas_index();
  const auto qavg = *schema.numeric_index("QAVG");
  EXPECT_EQ(s.days(), 3U);
  EXPECT_EQ(s.get(0, uas), 10.0);
  EXPECT_EQ(s.get(0, qavg), 12.0);
  for (std::size_t c = 0; c < schema.numeric_count(); ++c) EXPECT_FALSE(s.is_present(1, c));
  EXPECT_EQ(s.get(2, schema.hccs_index()), 0.0);
  EXPECT_EQ(s.onehot, (std::vector<std::uint8_t>{1, 1}));
}

TEST(Merge, RandomisedDominanceContinuityIdempotence) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PmRecord> recs;
    std::map<std::tuple<std::string, int, std::string>, double> best;
    const int n = std::uniform_int_distribution<int>(1, 60)(rng);
    for (int i = 0; i < n; ++i) {
      const std::string port = "p" + std::to_string(rng() % 3);
      const int d = static_cast<int>(rng() % 10);
      const std::string pm = rng() % 2 ? "QAVG" : "UAS";
      const std::string fac = rng() % 2 ? "OTM" : "ETH";
      const double v = std::uniform_real_distribution<double>(-5, 5)(rng);
      recs.push_back(PmRecord{"n", port, fac, Day{100 + d}, pm, v});
      auto key = std::make_tuple(port, d, pm);
      best[key] = best.contains(key) ? std::max(best[key], v) : v;
    }
    const auto schema = build_schema(recs, {});
    const auto series = merge_to_port_level(recs, schema);
    std::size_t present = 0;
    for (const auto& s : series) {
      for (std::size_t t = 0; t < s.days(); ++t) {
        EXPECT_EQ(s.day_at(t) - s.start, static_cast<int>(t));
        for (std::size_t c = 0; c < schema.numeric_count(); ++c) {
          const auto key = std::make_tuple(s.port_id, s.day_at(t).serial - 100, schema.numeric[c]);
          const auto it = best.find(key);
          ASSERT_EQ(s.is_present(t, c), it != best.end());
          if (it != best.end()) {
            EXPECT_EQ(s.value(t, c), it->second);
            ++present;
          }
        }
      }
      // Merging a port-level series again changes nothing.
      const auto again = merge_to_port_level(series_to_records(s, schema), schema);
      ASSERT_EQ(again.size(), 1U);
      EXPECT_EQ(again[0], s);
    }
    EXPECT_EQ(present, best.size());
  }
}

TEST(Merge, UnknownPmIsAnError) {
  const std::vector<PmRecord> recs = {rec("p1", "OTM", "2020-03-01", "QAVG", 1)};
  auto schema = build_schema(recs, {});
  const std::vector<PmRecord> other = {rec("p1", "OTM", "2020-03-01", "OPR", 1)};
  EXPECT_THROW(merge_to_port_level(other, schema), DataError);
}

TEST(Series, ContainerRoundTrip) {
  const auto dir = testing::temp_dir("ingest");
  const std::vector<PmRecord> recs = {rec("p1", "OTM", "2020-03-01", "UAS", 3),
                                      rec("p2", "ETH", "2020-03-04", "QAVG", -1.5)};
  SeriesSet set{build_schema(recs, {}), {}};
  set.series = merge_to_port_level(recs, set.schema);
  write_series(dir / "s.ilos", set);
  const auto back = read_series(dir / "s.ilos");
  EXPECT_EQ(back.schema, set.schema);
  EXPECT_EQ(back.series, set.series);
}

TEST(Schema, JsonRoundTripAndValidation) {
  FeatureSchema s;
  s.numeric = {"HCCS", "UAS", "UP"};
  s.facilities = {"OTM"};
  s.protocol_indicators = {"UP"};
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(FeatureSchema::from_json(s.to_json()), s);
  s.numeric = {"HCCS", "UP"};
  EXPECT_THROW(s.validate(), DataError);
}

}  // namespace
}  // namespace ilos
