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
#include <cstring>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "ilos/errors.hpp"
#include "ilos/synthgen.hpp"
#include "ilos/transfer.hpp"
#include "oracles.hpp"

namespace ilos {
namespace {

std::vector<WindowDataset> small_networks() {
  GenConfig g;
  g.seed = 77;
  g.ports = {10, 12};
  g.days = 60;
  const auto nets = generate_records(g);
  std::vector<WindowDataset> out;
  const std::vector<std::string> indicators{"PROTO_ETH_UP", "PROTO_OTN_UP"};
  for (const auto& n : nets) {
    SeriesSet set{build_schema(n.records, indicators), {}};
    set.series = merge_to_port_level(n.records, set.schema);
    out.push_back(build_window_dataset(set).dataset);
  }
  return out;
}

class MegaTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    sources_ = new std::vector<WindowDataset>(small_networks());
    mega_ = new MegaDataset(build_mega_dataset(*sources_));
  }
  static void TearDownTestSuite() {
    delete mega_;
    delete sources_;
  }
  static std::vector<WindowDataset>* sources_;
  static MegaDataset* mega_;
};
std::vector<WindowDataset>* MegaTest::sources_ = nullptr;
MegaDataset* MegaTest::mega_ = nullptr;

TEST_F(MegaTest, UnionSchemaAndColumnMap) {
  const auto& schema = mega_->data.schema;
  std::set<std::string> names;
  for (const auto& s : *sources_) names.insert(s.schema.numeric.begin(), s.schema.numeric.end());
  EXPECT_EQ(schema.numeric, std::vector<std::string>(names.begin(), names.end()));
  ASSERT_EQ(mega_->column_map.size(), 2U);
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& src = (*sources_)[s].schema;
    for (std::size_t c = 0; c < src.numeric_count(); ++c) {
      EXPECT_EQ(schema.numeric[mega_->column_map[s][c]], src.numeric[c]);
    }
    for (std::size_t f = 0; f < src.onehot_count(); ++f) {
      EXPECT_EQ(schema.facilities[mega_->column_map[s][src.numeric_count() + f] -
                                  schema.numeric_count()],
                src.facilities[f]);
    }
  }
  EXPECT_GT(schema.numeric_count(), (*sources_)[0].schema.numeric_count());
}

TEST_F(MegaTest, MissingColumnsAreAbsentAndTagsAreOpaque) {
  const auto& d = mega_->data;
  std::size_t n1 = 0;
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    const auto& s = d.samples[i];
    ASSERT_EQ(s.port_id.rfind(s.network_id + "/", 0), 0U) << s.port_id;
    const auto src = s.network_id == "net1" ? 0U : 1U;
    const auto& own = (*sources_)[src].schema;
    for (std::size_t c = 0; c < d.schema.numeric_count(); ++c) {
      if (own.numeric_index(d.schema.numeric[c])) continue;
      for (std::size_t t = 0; t < kInputDays; ++t) ASSERT_FALSE(s.is_observed(t, c));
    }
    n1 += src == 0;
    if (i > 0) EXPECT_LE(d.samples[i - 1].present_day, s.present_day);
  }
  EXPECT_EQ(n1, (*sources_)[0].samples.size());
  EXPECT_EQ(d.samples.size(), (*sources_)[0].samples.size() + (*sources_)[1].samples.size());
  EXPECT_GE(numeric_missing_rate(d),
            std::max(numeric_missing_rate((*sources_)[0]), numeric_missing_rate((*sources_)[1])));
  const auto manifest = mega_->manifest();
  EXPECT_EQ(manifest["samples"], d.samples.size());
  EXPECT_TRUE(manifest["per_network"].contains("net2"));
}

TEST_F(MegaTest, SplitsKeepSourceTags) {
  const auto& d = mega_->data;
  for (std::size_t s = 0; s < 2; ++s) {
    const auto& src = (*sources_)[s];
    for (auto split : {Split::kTrain, Split::kValidation, Split::kTest}) {
      EXPECT_EQ(d.indices(split, src.networks.front()).size(), src.indices(split).size());
    }
  }
}

TEST_F(MegaTest, ProjectionRecoversSourceMask) {
  const auto& d = mega_->data;
  std::map<std::pair<std::string, int>, const WindowSample*> by_key;
  for (const auto& s : (*sources_)[1].samples) by_key[{s.port_id, s.present_day.serial}] = &s;
  std::size_t checked = 0;
  for (const auto& s : d.samples) {
    if (s.network_id != "net2") continue;
    const auto back = project_to_source(s, *mega_, 1);
    const auto bare = s.port_id.substr(s.port_id.find('/') + 1);
    const auto* orig = by_key.at({bare, s.present_day.serial});
    EXPECT_EQ(back.observed, orig->observed);
    EXPECT_EQ(back.width, orig->width);
    EXPECT_EQ(back.label, orig->label);
    if (++checked == 50) break;
  }
  EXPECT_EQ(checked, 50U);
}

TEST(Mega, InputErrors) {
  auto nets = small_networks();
  EXPECT_THROW(build_mega_dataset(std::span(nets).first(1)), DataError);
  nets[1].networks = nets[0].networks;
  for (auto& s : nets[1].samples) s.network_id = nets[0].networks.front();
  EXPECT_THROW(build_mega_dataset(nets), DataError);
}

struct FineTuneFixture {
  std::vector<WindowSample> train = oracle::random_windows(32, 4, 0.5, 31);
  std::vector<WindowSample> val = oracle::random_windows(8, 4, 0.5, 32);
  SequenceSet train_set, val_set;
  BritsModel pretrained = BritsModel::init(4, 5, 33);
  TrainSchedule base;

  FineTuneFixture() {
    for (const auto& w : train) train_set.samples.push_back(&w);
    for (const auto& w : val) val_set.samples.push_back(&w);
    base.batch_size = 8;
    base.phase2_max_epochs = 3;
    base.patience = 10;
    base.seed = 34;
  }
};

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

TEST(FineTune, ScheduleDefaults) {
  const auto s = finetune_schedule(TrainSchedule{}, FineTuneStrategy::kClassifierOnly);
  EXPECT_EQ(s.learning_rate, 5e-4);
  EXPECT_EQ(kPretrainLearningRate, 1e-3);
  EXPECT_EQ(s.phase1_max_epochs, 0);
  for (std::size_t b = 0; b < kRitsBlockCount; ++b) EXPECT_EQ(s.trainable[b], is_classifier_block(b));
  const auto e = finetune_schedule(TrainSchedule{}, FineTuneStrategy::kEntirety);
  for (bool t : e.trainable) EXPECT_TRUE(t);
  EXPECT_EQ(parse_strategy(strategy_name(FineTuneStrategy::kEntirety)), FineTuneStrategy::kEntirety);
  EXPECT_THROW(parse_strategy("decoder"), ConfigError);
}

TEST(FineTune, ClassifierOnlyFreezesEverythingElse) {
  FineTuneFixture f;
  TrainHistory h;
  const auto tuned = finetune(f.pretrained, f.train_set, f.val_set,
                              FineTuneStrategy::kClassifierOnly, f.base, &h);
  EXPECT_EQ(h.steps, 12);
  for (std::size_t b = 0; b < kRitsBlockCount; ++b) {
    const bool same = bit_equal(tuned.forward.blocks[b], f.pretrained.forward.blocks[b]) &&
                      bit_equal(tuned.backward.blocks[b], f.pretrained.backward.blocks[b]);
    EXPECT_EQ(same, !is_classifier_block(b)) << rits_block_name(b);
  }
}

TEST(FineTune, EntiretyUpdatesImputer) {
  FineTuneFixture f;
  const auto tuned =
      finetune(f.pretrained, f.train_set, f.val_set, FineTuneStrategy::kEntirety, f.base);
  EXPECT_FALSE(bit_equal(tuned.forward.blocks[kHistoryW], f.pretrained.forward.blocks[kHistoryW]));
}

TEST(FineTune, StrategiesCoincideWithZeroedImputerGradients) {
  FineTuneFixture f;
  f.base.gradient_hook = [](BritsGradients& g) {
    for (std::size_t b = 0; b < kRitsBlockCount; ++b) {
      if (is_classifier_block(b)) continue;
      g.forward.blocks[b].setZero();
      g.backward.blocks[b].setZero();
    }
  };
  const auto a =
      finetune(f.pretrained, f.train_set, f.val_set, FineTuneStrategy::kClassifierOnly, f.base);
  const auto b = finetune(f.pretrained, f.train_set, f.val_set, FineTuneStrategy::kEntirety, f.base);
  EXPECT_EQ(a, b);
}

TEST(FineTune, ZeroStepsAndEmptySubset) {
  FineTuneFixture f;
  f.base.phase2_max_epochs = 0;
  EXPECT_EQ(finetune(f.pretrained, f.train_set, f.val_set, FineTuneStrategy::kEntirety, f.base),
            f.pretrained);
  EXPECT_THROW(finetune(f.pretrained, SequenceSet{}, f.val_set, FineTuneStrategy::kEntirety, f.base),
               DataError);
}

}  // namespace
}  // namespace ilos
