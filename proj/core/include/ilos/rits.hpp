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

// Recurrent imputation and classification: one directional RITS network
// (temporal decay, history and feature regressions, learned combination,
// LSTM cell, logistic head) and the bidirectional BRITS pair with
// hand-written backpropagation through time.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ilos/dataset.hpp"

namespace ilos {

inline constexpr int kDefaultHiddenSize = 256;
inline constexpr double kLogitClamp = 15.0;

enum RitsBlock : std::size_t {
  kDecayHiddenW,  // H x F
  kDecayHiddenB,  // H x 1
  kDecayInputW,   // F x 1, diagonal decay of the input gaps
  kDecayInputB,   // F x 1
  kHistoryW,      // F x H
  kHistoryB,      // F x 1
  kFeatureW,      // F x F, zero diagonal
  kFeatureB,      // F x 1
  kCombineW,      // F x 2F over [input decay; mask]
  kCombineB,      // F x 1
  kLstmInputW,    // 4H x 2F over [complement; mask], gates i, f, g, o
  kLstmHiddenW,   // 4H x H
  kLstmB,         // 4H x 1
  kClassifierW,   // 1 x H
  kClassifierB,   // 1 x 1
  kRitsBlockCount
};

std::string_view rits_block_name(std::size_t block);
bool is_classifier_block(std::size_t block);

struct RitsParams {
  int features = 0;
  int hidden = 0;
  std::array<Eigen::MatrixXd, kRitsBlockCount> blocks;

  // Weights uniform in +-1/sqrt(H), forget-gate bias 1, zero feature
  // regression diagonal.
  static RitsParams init(int features, int hidden, std::uint64_t seed);
  static RitsParams zeros_like(const RitsParams& other);
  bool all_finite() const;
  friend bool operator==(const RitsParams& a, const RitsParams& b);
};

struct LossWeights {
  double estimation = 1.0;
  double consistency = 1.0;
  double classification = 1.0;
};

struct BritsModel {
  RitsParams forward;
  RitsParams backward;
  LossWeights weights;

  static BritsModel init(int features, int hidden, std::uint64_t seed);
  int features() const { return forward.features; }
  int hidden() const { return forward.hidden; }

  void save(const std::filesystem::path& path) const;
  static BritsModel load(const std::filesystem::path& path);
  friend bool operator==(const BritsModel& a, const BritsModel& b) {
    return a.forward == b.forward && a.backward == b.backward;
  }
};

// A batch of windows in time-major layout: step t holds an F x B matrix.
// Absent entries of x are zero.
struct SequenceBatch {
  int features = 0;
  int size = 0;
  std::array<Eigen::MatrixXd, kInputDays> x;
  std::array<Eigen::MatrixXd, kInputDays> mask;
  std::array<Eigen::MatrixXd, kInputDays> delta;
  Eigen::RowVectorXd labels;

  // The same windows with time reversed and gaps recomputed on the
  // reversed mask.
  SequenceBatch reversed() const;
};

// Values are taken as-is (normalise first). With zero_impute, absent cells
// become observed zeros.
SequenceBatch make_batch(std::span<const WindowSample* const> samples, bool zero_impute = false);

struct RitsStepCache {
  Eigen::MatrixXd decay_h_pre, decay_h, decay_x_pre, decay_x;
  Eigen::MatrixXd h_prev, h_decayed, c_prev;
  Eigen::MatrixXd history_est, history_filled, feature_est, combine_in, beta, combined,
      complement, lstm_in;
  Eigen::MatrixXd gate_i, gate_f, gate_g, gate_o, cell, cell_tanh, h;
};

// Output of one directional pass, in that direction's processing order.
struct RitsOutput {
  std::array<RitsStepCache, kInputDays> steps;
  Eigen::RowVectorXd logit;
  Eigen::RowVectorXd probability;
  Eigen::RowVectorXd estimation_loss;  // per sample

  const Eigen::MatrixXd& complement(std::size_t t) const { return steps[t].complement; }
  const Eigen::MatrixXd& combined(std::size_t t) const { return steps[t].combined; }
};

RitsOutput rits_forward(const RitsParams& params, const SequenceBatch& batch);

struct BritsOutput {
  RitsOutput forward;
  RitsOutput backward;            // backward-direction processing order
  Eigen::RowVectorXd probability; // mean of the two directional sigmoids
  std::array<Eigen::MatrixXd, kInputDays> imputation;  // forward time order
  double consistency = 0.0;       // mean |c_fwd - c_bwd| over aligned cells
};

BritsOutput brits_forward(const BritsModel& model, const SequenceBatch& batch);

struct LossBreakdown {
  double estimation_fwd = 0.0;
  double estimation_bwd = 0.0;
  double consistency = 0.0;
  double classification_fwd = 0.0;
  double classification_bwd = 0.0;

  double estimation() const { return estimation_fwd + estimation_bwd; }
  double classification() const { return classification_fwd + classification_bwd; }
  double total(const LossWeights& w) const {
    return w.estimation * estimation() + w.consistency * consistency +
           w.classification * classification();
  }
};

// Batch-mean loss components. BCE uses logits clamped to +-kLogitClamp.
LossBreakdown brits_loss(const BritsOutput& out, const Eigen::RowVectorXd& labels);

struct BritsGradients {
  RitsParams forward;
  RitsParams backward;
};

// Loss and exact gradient of loss.total(weights) for one batch. When
// trainable marks only classifier blocks, the other blocks get zero
// gradient and backpropagation through time is skipped.
LossBreakdown brits_loss_and_gradient(const BritsModel& model, const SequenceBatch& batch,
                                      const LossWeights& weights, BritsGradients& grad,
                                      const std::array<bool, kRitsBlockCount>* trainable = nullptr);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  BritsGradients m;
  BritsGradients v;
};

struct TrainSchedule {
  double learning_rate = 1e-3;
  int batch_size = 1024;
  int phase1_max_epochs = 20;  // imputation-only warm-up
  int phase2_max_epochs = 20;  // full objective
  int patience = 5;
  double min_delta = 1e-4;
  long max_steps = -1;         // optional global cap on optimiser steps
  std::uint64_t seed = 1;
  // Blocks that receive updates; classifier-only fine-tuning clears the rest.
  std::array<bool, kRitsBlockCount> trainable = make_all_trainable();
  // Test hook run on every gradient before the optimiser step.
  std::function<void(BritsGradients&)> gradient_hook;

  static std::array<bool, kRitsBlockCount> make_all_trainable() {
    std::array<bool, kRitsBlockCount> a{};
    a.fill(true);
    return a;
  }
};

struct EpochRecord {
  int epoch = 0;
  int phase = 0;
  LossBreakdown train;
  LossBreakdown validation;
  long steps = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  long steps = 0;
  void write_csv(const std::filesystem::path& path) const;
};

// Inputs are normalised windows (train/validation splits).
struct SequenceSet {
  std::vector<const WindowSample*> samples;
  bool zero_impute = false;
};

// Phase 1 optimises estimation + consistency until the validation
// estimation loss stops improving by min_delta for patience epochs; phase 2
// optimises the full loss with the same stopping rule and keeps the
// best-validation snapshot. Throws NumericError on a non-finite loss.
TrainHistory train_brits(BritsModel& model, const SequenceSet& train,
                         const SequenceSet& validation, const TrainSchedule& schedule);

// One optimiser update with the given gradient (exposed for tests).
void adam_step(BritsModel& model, AdamState& state, BritsGradients& grad,
               const TrainSchedule& schedule);

std::vector<double> brits_predict(const BritsModel& model, const SequenceSet& samples,
                                  int batch_size = 1024);
std::vector<std::vector<double>> brits_impute(const BritsModel& model, const SequenceSet& samples,
                                              int batch_size = 1024);

}  // namespace ilos
