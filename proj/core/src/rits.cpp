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

#include "ilos/rits.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include <nlohmann/json.hpp>

#include "ilos/container.hpp"
#include "ilos/errors.hpp"
#include "ilos/missing_data.hpp"
#include "ilos/util.hpp"

namespace ilos {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

namespace {

constexpr std::array<std::string_view, kRitsBlockCount> kBlockNames = {
    "decay_hidden.weight", "decay_hidden.bias", "decay_input.weight", "decay_input.bias",
    "history.weight",      "history.bias",      "feature.weight",     "feature.bias",
    "combine.weight",      "combine.bias",      "lstm.input_weight",  "lstm.hidden_weight",
    "lstm.bias",           "classifier.weight", "classifier.bias"};

std::array<std::pair<int, int>, kRitsBlockCount> block_shapes(int f, int h) {
  return {{{h, f},
           {h, 1},
           {f, 1},
           {f, 1},
           {f, h},
           {f, 1},
           {f, f},
           {f, 1},
           {f, 2 * f},
           {f, 1},
           {4 * h, 2 * f},
           {4 * h, h},
           {4 * h, 1},
           {1, h},
           {1, 1}}};
}

ArrayXXd sigmoid_array(const ArrayXXd& a) { return 1.0 / (1.0 + (-a).exp()); }

// exp(-max(0, a))
ArrayXXd decay(const ArrayXXd& pre) { return (-pre.max(0.0)).exp(); }

double clamp_logit(double z) { return std::clamp(z, -kLogitClamp, kLogitClamp); }

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

ArrayXXd sign_of(const ArrayXXd& a) {
  return a.unaryExpr([](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

void zero_feature_diagonal(RitsParams& p) { p.blocks[kFeatureW].diagonal().setZero(); }

}  // namespace

std::string_view rits_block_name(std::size_t block) { return kBlockNames.at(block); }

bool is_classifier_block(std::size_t block) {
  return block == kClassifierW || block == kClassifierB;
}

RitsParams RitsParams::init(int features, int hidden, std::uint64_t seed) {
  if (features < 1 || hidden < 1) throw ConfigError("RITS sizes must be positive");
  RitsParams p;
  p.features = features;
  p.hidden = hidden;
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> unif(-bound, bound);
  const auto shapes = block_shapes(features, hidden);
  for (std::size_t b = 0; b < kRitsBlockCount; ++b) {
    auto& m = p.blocks[b];
    m.resize(shapes[b].first, shapes[b].second);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = unif(rng);
    }
  }
  p.blocks[kLstmB].middleRows(hidden, hidden).setOnes();
  zero_feature_diagonal(p);
  return p;
}

RitsParams RitsParams::zeros_like(const RitsParams& other) {
  RitsParams p;
  p.features = other.features;
  p.hidden = other.hidden;
  for (std::size_t b = 0; b < kRitsBlockCount; ++b) {
    p.blocks[b] = MatrixXd::Zero(other.blocks[b].rows(), other.blocks[b].cols());
  }
  return p;
}

bool RitsParams::all_finite() const {
  return std::all_of(blocks.begin(), blocks.end(),
                     [](const MatrixXd& m) { return m.allFinite(); });
}

bool operator==(const RitsParams& a, const RitsParams& b) {
  if (a.features != b.features || a.hidden != b.hidden) return false;
  for (std::size_t i = 0; i < kRitsBlockCount; ++i) {
    const auto& x = a.blocks[i];
    const auto& y = b.blocks[i];
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0) {
      return false;
    }
  }
  return true;
}

BritsModel BritsModel::init(int features, int hidden, std::uint64_t seed) {
  BritsModel m;
  m.forward = RitsParams::init(features, hidden, derive_seed(seed, 1));
  m.backward = RitsParams::init(features, hidden, derive_seed(seed, 2));
  return m;
}

// ---------------------------------------------------------------------------
// Serialisation

namespace {

std::string encode_params(const RitsParams& p) {
  ByteWriter w;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(kRitsBlockCount));
  for (std::size_t b = 0; b < kRitsBlockCount; ++b) {
    const auto& m = p.blocks[b];
    w.put_string(kBlockNames[b]);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.cols()));
    w.put_span<double>(std::span<const double>(m.data(), static_cast<std::size_t>(m.size())));
  }
  return w.release();
}

RitsParams decode_params(ByteReader r, int features, int hidden) {
  RitsParams p;
  p.features = features;
  p.hidden = hidden;
  const auto shapes = block_shapes(features, hidden);
  if (r.get<std::uint32_t>() != kRitsBlockCount) {
    throw ParseError("brits-model", 0, "unexpected parameter block count");
  }
  for (std::size_t b = 0; b < kRitsBlockCount; ++b) {
    const auto name = r.get_string();
    const auto rows = static_cast<int>(r.get<std::uint32_t>());
    const auto cols = static_cast<int>(r.get<std::uint32_t>());
    if (name != kBlockNames[b] || rows != shapes[b].first || cols != shapes[b].second) {
      throw ParseError("brits-model", 0, "parameter block " + name + " has an unexpected shape");
    }
    const auto data = r.get_vector<double>();
    if (data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
      throw ParseError("brits-model", 0, "parameter block " + name + " is truncated");
    }
    p.blocks[b] = Eigen::Map<const MatrixXd>(data.data(), rows, cols);
  }
  return p;
}

}  // namespace

void BritsModel::save(const std::filesystem::path& path) const {
  Container c;
  c.kind = "brits-model";
  nlohmann::json meta{{"version", 1},
                      {"features", features()},
                      {"hidden", hidden()},
                      {"loss_weights",
                       {{"estimation", weights.estimation},
                        {"consistency", weights.consistency},
                        {"classification", weights.classification}}}};
  c.add("meta", meta.dump());
  c.add("forward", encode_params(forward));
  c.add("backward", encode_params(backward));
  write_container(path, c);
}

BritsModel BritsModel::load(const std::filesystem::path& path) {
  const auto c = read_container(path, "brits-model");
  const auto meta = nlohmann::json::parse(c.section("meta"));
  if (meta.value("version", 0) != 1) throw ParseError(path.string(), 0, "unsupported model version");
  const int f = meta.at("features").get<int>();
  const int h = meta.at("hidden").get<int>();
  BritsModel m;
  m.forward = decode_params(c.reader("forward"), f, h);
  m.backward = decode_params(c.reader("backward"), f, h);
  const auto& lw = meta.at("loss_weights");
  m.weights = LossWeights{lw.at("estimation").get<double>(), lw.at("consistency").get<double>(),
                          lw.at("classification").get<double>()};
  return m;
}

// ---------------------------------------------------------------------------
// Batches

SequenceBatch SequenceBatch::reversed() const {
  SequenceBatch r;
  r.features = features;
  r.size = size;
  r.labels = labels;
  for (std::size_t t = 0; t < kInputDays; ++t) {
    r.x[t] = x[kInputDays - 1 - t];
    r.mask[t] = mask[kInputDays - 1 - t];
  }
  r.delta[0] = MatrixXd::Zero(features, size);
  for (std::size_t t = 1; t < kInputDays; ++t) {
    r.delta[t] = (r.mask[t - 1].array() > 0.5).select(MatrixXd::Ones(features, size),
                                                        r.delta[t - 1].array() + 1.0);
  }
  return r;
}

SequenceBatch make_batch(std::span<const WindowSample* const> samples, bool zero_impute) {
  if (samples.empty()) throw DataError("make_batch: empty batch");
  SequenceBatch b;
  b.features = static_cast<int>(samples[0]->width);
  b.size = static_cast<int>(samples.size());
  const std::size_t f = samples[0]->width;
  for (std::size_t t = 0; t < kInputDays; ++t) {
    b.x[t] = MatrixXd::Zero(b.features, b.size);
    b.mask[t] = MatrixXd::Zero(b.features, b.size);
  }
  b.labels.resize(b.size);
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const auto& s = *samples[j];
    if (s.width != f) throw DataError("make_batch: inconsistent sample widths");
    for (std::size_t t = 0; t < kInputDays; ++t) {
      for (std::size_t d = 0; d < f; ++d) {
        const bool obs = s.is_observed(t, d);
        const double v = s.at(t, d);
        if (obs && !std::isfinite(v)) throw DataError("make_batch: non-finite input value");
        b.x[t](static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = obs ? v : 0.0;
        b.mask[t](static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) =
            (obs || zero_impute) ? 1.0 : 0.0;
      }
    }
    b.labels[static_cast<Eigen::Index>(j)] = s.label;
  }
  b.delta[0] = MatrixXd::Zero(b.features, b.size);
  for (std::size_t t = 1; t < kInputDays; ++t) {
    b.delta[t] = (b.mask[t - 1].array() > 0.5).select(MatrixXd::Ones(b.features, b.size),
                                                        b.delta[t - 1].array() + 1.0);
  }
  return b;
}

// ---------------------------------------------------------------------------
// Forward

RitsOutput rits_forward(const RitsParams& p, const SequenceBatch& in) {
  if (in.features != p.features) {
    throw DataError("rits_forward: batch has " + std::to_string(in.features) +
                    " features, model expects " + std::to_string(p.features));
  }
  const int h_size = p.hidden;
  const int f_size = p.features;
  const int n = in.size;
  const auto& B = p.blocks;
  RitsOutput out;
  MatrixXd h = MatrixXd::Zero(h_size, n);
  MatrixXd c = MatrixXd::Zero(h_size, n);
  RowVectorXd est = RowVectorXd::Zero(n);
  RowVectorXd observed = RowVectorXd::Zero(n);
  for (std::size_t t = 0; t < kInputDays; ++t) {
    auto& s = out.steps[t];
    const MatrixXd& x = in.x[t];
    const MatrixXd& m = in.mask[t];
    const ArrayXXd keep = 1.0 - m.array();
    s.decay_h_pre = (B[kDecayHiddenW] * in.delta[t]).colwise() + B[kDecayHiddenB].col(0);
    s.decay_h = decay(s.decay_h_pre.array()).matrix();
    s.decay_x_pre = ((in.delta[t].array().colwise() * B[kDecayInputW].col(0).array()).colwise() +
                     B[kDecayInputB].col(0).array())
                        .matrix();
    s.decay_x = decay(s.decay_x_pre.array()).matrix();
    s.h_prev = h;
    s.c_prev = c;
    s.h_decayed = (s.decay_h.array() * h.array()).matrix();
    s.history_est = (B[kHistoryW] * s.h_decayed).colwise() + B[kHistoryB].col(0);
    s.history_filled = (m.array() * x.array() + keep * s.history_est.array()).matrix();
    s.feature_est = (B[kFeatureW] * s.history_filled).colwise() + B[kFeatureB].col(0);
    s.combine_in.resize(2 * f_size, n);
    s.combine_in << s.decay_x, m;
    s.beta = sigmoid_array(((B[kCombineW] * s.combine_in).colwise() + B[kCombineB].col(0)).array())
                 .matrix();
    s.combined = (s.beta.array() * s.feature_est.array() +
                  (1.0 - s.beta.array()) * s.history_est.array())
                     .matrix();
    s.complement = (m.array() * x.array() + keep * s.combined.array()).matrix();
    s.lstm_in.resize(2 * f_size, n);
    s.lstm_in << s.complement, m;
    const MatrixXd gates = ((B[kLstmInputW] * s.lstm_in + B[kLstmHiddenW] * s.h_decayed).colwise() +
                            B[kLstmB].col(0));
    s.gate_i = sigmoid_array(gates.topRows(h_size).array()).matrix();
    s.gate_f = sigmoid_array(gates.middleRows(h_size, h_size).array()).matrix();
    s.gate_g = gates.middleRows(2 * h_size, h_size).array().tanh().matrix();
    s.gate_o = sigmoid_array(gates.bottomRows(h_size).array()).matrix();
    s.cell = (s.gate_f.array() * c.array() + s.gate_i.array() * s.gate_g.array()).matrix();
    s.cell_tanh = s.cell.array().tanh().matrix();
    s.h = (s.gate_o.array() * s.cell_tanh.array()).matrix();
    h = s.h;
    c = s.cell;

    const ArrayXXd err = (s.history_est - x).array().abs() + (s.feature_est - x).array().abs() +
                         (s.combined - x).array().abs();
    est += (m.array() * err).matrix().colwise().sum();
    observed += m.colwise().sum();
  }
  out.logit = (B[kClassifierW] * h).array() + B[kClassifierB](0, 0);
  out.probability = sigmoid_array(out.logit.array()).matrix();
  out.estimation_loss.resize(n);
  for (int j = 0; j < n; ++j) {
    out.estimation_loss[j] = observed[j] > 0 ? est[j] / (3.0 * observed[j]) : 0.0;
  }
  return out;
}

BritsOutput brits_forward(const BritsModel& model, const SequenceBatch& batch) {
  BritsOutput out;
  out.forward = rits_forward(model.forward, batch);
  const SequenceBatch rev = batch.reversed();
  out.backward = rits_forward(model.backward, rev);
  out.probability = 0.5 * (out.forward.probability + out.backward.probability);
  double cons = 0.0;
  for (std::size_t t = 0; t < kInputDays; ++t) {
    const auto& cf = out.forward.combined(t);
    const auto& cb = out.backward.combined(kInputDays - 1 - t);
    cons += (cf - cb).array().abs().sum();
    const ArrayXXd m = batch.mask[t].array();
    out.imputation[t] =
        (m * batch.x[t].array() + (1.0 - m) * (0.5 * (cf + cb)).array()).matrix();
  }
  out.consistency =
      cons / (static_cast<double>(kInputDays) * batch.features * static_cast<double>(batch.size));
  return out;
}

LossBreakdown brits_loss(const BritsOutput& out, const RowVectorXd& labels) {
  LossBreakdown l;
  const double n = static_cast<double>(labels.size());
  l.estimation_fwd = out.forward.estimation_loss.sum() / n;
  l.estimation_bwd = out.backward.estimation_loss.sum() / n;
  l.consistency = out.consistency;
  auto bce = [&](const RowVectorXd& logit) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < labels.size(); ++j) {
      const double z = clamp_logit(logit[j]);
      total += softplus(z) - labels[j] * z;
    }
    return total / n;
  };
  l.classification_fwd = bce(out.forward.logit);
  l.classification_bwd = bce(out.backward.logit);
  return l;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

void rits_backward(const RitsParams& p, const SequenceBatch& in, const RitsOutput& out,
                   const RowVectorXd& dlogit,
                   const std::array<MatrixXd, kInputDays>& dcombined_extra, double est_coef,
                   RitsParams& g) {
  const int hs = p.hidden;
  const int fs = p.features;
  const int n = in.size;
  const auto& B = p.blocks;
  auto& G = g.blocks;

  RowVectorXd observed = RowVectorXd::Zero(n);
  for (std::size_t t = 0; t < kInputDays; ++t) observed += in.mask[t].colwise().sum();
  RowVectorXd w(n);
  for (int j = 0; j < n; ++j) {
    w[j] = observed[j] > 0 ? est_coef / (static_cast<double>(n) * 3.0 * observed[j]) : 0.0;
  }

  const auto& last = out.steps[kInputDays - 1];
  G[kClassifierW] += dlogit * last.h.transpose();
  G[kClassifierB](0, 0) += dlogit.sum();
  MatrixXd dh = B[kClassifierW].transpose() * dlogit;
  MatrixXd dc = MatrixXd::Zero(hs, n);

  for (std::size_t step = kInputDays; step-- > 0;) {
    const auto& s = out.steps[step];
    const ArrayXXd m = in.mask[step].array();
    const ArrayXXd keep = 1.0 - m;
    const ArrayXXd& x = in.x[step].array();

    // LSTM cell
    const ArrayXXd d_o = dh.array() * s.cell_tanh.array();
    dc.array() += dh.array() * s.gate_o.array() * (1.0 - s.cell_tanh.array().square());
    const ArrayXXd d_i = dc.array() * s.gate_g.array();
    const ArrayXXd d_g = dc.array() * s.gate_i.array();
    const ArrayXXd d_f = dc.array() * s.c_prev.array();
    const MatrixXd dc_prev = (dc.array() * s.gate_f.array()).matrix();
    MatrixXd da(4 * hs, n);
    da.topRows(hs) = (d_i * s.gate_i.array() * (1.0 - s.gate_i.array())).matrix();
    da.middleRows(hs, hs) = (d_f * s.gate_f.array() * (1.0 - s.gate_f.array())).matrix();
    da.middleRows(2 * hs, hs) = (d_g * (1.0 - s.gate_g.array().square())).matrix();
    da.bottomRows(hs) = (d_o * s.gate_o.array() * (1.0 - s.gate_o.array())).matrix();
    G[kLstmInputW].noalias() += da * s.lstm_in.transpose();
    G[kLstmHiddenW].noalias() += da * s.h_decayed.transpose();
    G[kLstmB] += da.rowwise().sum();
    const MatrixXd dlstm_in = B[kLstmInputW].transpose() * da;
    MatrixXd dhd = B[kLstmHiddenW].transpose() * da;

    // complement and combination
    const ArrayXXd wrow = ArrayXXd(w.replicate(fs, 1));
    ArrayXXd dcomb = keep * dlstm_in.topRows(fs).array() + dcombined_extra[step].array() +
                     wrow * m * sign_of(s.combined.array() - x);
    const ArrayXXd dbeta = dcomb * (s.feature_est.array() - s.history_est.array());
    const ArrayXXd dz = dcomb * s.beta.array() + wrow * m * sign_of(s.feature_est.array() - x);
    ArrayXXd dxhat = dcomb * (1.0 - s.beta.array()) + wrow * m * sign_of(s.history_est.array() - x);

    const MatrixXd dab = (dbeta * s.beta.array() * (1.0 - s.beta.array())).matrix();
    G[kCombineW].noalias() += dab * s.combine_in.transpose();
    G[kCombineB] += dab.rowwise().sum();
    const MatrixXd dcin = B[kCombineW].transpose() * dab;
    const ArrayXXd du = dcin.topRows(fs).array() * (-s.decay_x.array()) *
                        (s.decay_x_pre.array() > 0.0).cast<double>();
    G[kDecayInputW] += (du * in.delta[step].array()).matrix().rowwise().sum();
    G[kDecayInputB] += du.matrix().rowwise().sum();

    // feature regression
    G[kFeatureW].noalias() += dz.matrix() * s.history_filled.transpose();
    G[kFeatureB] += dz.matrix().rowwise().sum();
    dxhat += keep * (B[kFeatureW].transpose() * dz.matrix()).array();

    // history regression
    G[kHistoryW].noalias() += dxhat.matrix() * s.h_decayed.transpose();
    G[kHistoryB] += dxhat.matrix().rowwise().sum();
    dhd.noalias() += B[kHistoryW].transpose() * dxhat.matrix();

    // hidden decay
    dh = (dhd.array() * s.decay_h.array()).matrix();
    const ArrayXXd dv = dhd.array() * s.h_prev.array() * (-s.decay_h.array()) *
                        (s.decay_h_pre.array() > 0.0).cast<double>();
    G[kDecayHiddenW].noalias() += dv.matrix() * in.delta[step].transpose();
    G[kDecayHiddenB] += dv.matrix().rowwise().sum();

    dc = dc_prev;
  }
  zero_feature_diagonal(g);
}

}  // namespace

LossBreakdown brits_loss_and_gradient(const BritsModel& model, const SequenceBatch& batch,
                                      const LossWeights& weights, BritsGradients& grad,
                                      const std::array<bool, kRitsBlockCount>* trainable) {
  const SequenceBatch rev = batch.reversed();
  const RitsOutput fwd = rits_forward(model.forward, batch);
  const RitsOutput bwd = rits_forward(model.backward, rev);
  const double n = static_cast<double>(batch.size);

  BritsOutput joined;
  joined.forward = fwd;
  joined.backward = bwd;
  double cons = 0.0;
  std::array<MatrixXd, kInputDays> dcomb_f, dcomb_b;
  const double cons_scale =
      weights.consistency / (static_cast<double>(kInputDays) * batch.features * n);
  for (std::size_t t = 0; t < kInputDays; ++t) {
    const MatrixXd diff = fwd.combined(t) - bwd.combined(kInputDays - 1 - t);
    cons += diff.array().abs().sum();
    dcomb_f[t] = (cons_scale * sign_of(diff.array())).matrix();
  }
  for (std::size_t t = 0; t < kInputDays; ++t) dcomb_b[kInputDays - 1 - t] = -dcomb_f[t];
  joined.consistency = cons / (static_cast<double>(kInputDays) * batch.features * n);
  joined.probability = 0.5 * (fwd.probability + bwd.probability);
  const LossBreakdown loss = brits_loss(joined, batch.labels);

  auto dlogit = [&](const RowVectorXd& logit) {
    RowVectorXd d(logit.size());
    for (Eigen::Index j = 0; j < logit.size(); ++j) {
      const double z = logit[j];
      d[j] = (std::abs(z) < kLogitClamp)
                 ? weights.classification * (sigmoid(z) - batch.labels[j]) / n
                 : 0.0;
    }
    return d;
  };
  grad.forward = RitsParams::zeros_like(model.forward);
  grad.backward = RitsParams::zeros_like(model.backward);
  bool head_only = trainable != nullptr;
  for (std::size_t b = 0; head_only && b < kRitsBlockCount; ++b) {
    head_only = is_classifier_block(b) || !(*trainable)[b];
  }
  if (head_only) {
    // Frozen body: the head gradient needs only the last hidden state.
    for (auto [out, g] : {std::pair{&fwd, &grad.forward}, std::pair{&bwd, &grad.backward}}) {
      const RowVectorXd d = dlogit(out->logit);
      g->blocks[kClassifierW] += d * out->steps[kInputDays - 1].h.transpose();
      g->blocks[kClassifierB](0, 0) += d.sum();
    }
    return loss;
  }
  rits_backward(model.forward, batch, fwd, dlogit(fwd.logit), dcomb_f, weights.estimation,
                grad.forward);
  rits_backward(model.backward, rev, bwd, dlogit(bwd.logit), dcomb_b, weights.estimation,
                grad.backward);
  return loss;
}

// ---------------------------------------------------------------------------
// Training

void adam_step(BritsModel& model, AdamState& state, BritsGradients& grad,
               const TrainSchedule& schedule) {
  if (state.step == 0) {
    state.m.forward = RitsParams::zeros_like(model.forward);
    state.m.backward = RitsParams::zeros_like(model.backward);
    state.v = state.m;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](RitsParams& p, const RitsParams& g, RitsParams& m, RitsParams& v) {
    for (std::size_t b = 0; b < kRitsBlockCount; ++b) {
      if (!schedule.trainable[b]) continue;
      m.blocks[b] = state.beta1 * m.blocks[b] + (1.0 - state.beta1) * g.blocks[b];
      v.blocks[b] = state.beta2 * v.blocks[b] +
                    (1.0 - state.beta2) * g.blocks[b].array().square().matrix();
      p.blocks[b].array() -= schedule.learning_rate * (m.blocks[b].array() / bc1) /
                             ((v.blocks[b].array() / bc2).sqrt() + state.epsilon);
    }
    if (schedule.trainable[kFeatureW]) zero_feature_diagonal(p);
  };
  update(model.forward, grad.forward, state.m.forward, state.v.forward);
  update(model.backward, grad.backward, state.m.backward, state.v.backward);
}

namespace {

LossBreakdown evaluate_loss(const BritsModel& model, const SequenceSet& set, int batch_size) {
  LossBreakdown total;
  const std::size_t n = set.samples.size();
  if (n == 0) return total;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    const auto batch = make_batch(
        std::span<const WindowSample* const>(set.samples.data() + start, end - start),
        set.zero_impute);
    const auto l = brits_loss(brits_forward(model, batch), batch.labels);
    const double w = static_cast<double>(end - start) / static_cast<double>(n);
    total.estimation_fwd += w * l.estimation_fwd;
    total.estimation_bwd += w * l.estimation_bwd;
    total.consistency += w * l.consistency;
    total.classification_fwd += w * l.classification_fwd;
    total.classification_bwd += w * l.classification_bwd;
  }
  return total;
}

}  // namespace

TrainHistory train_brits(BritsModel& model, const SequenceSet& train,
                         const SequenceSet& validation, const TrainSchedule& schedule) {
  if (schedule.batch_size < 1) throw ConfigError("brits.batch_size must be >= 1");
  if (!(schedule.learning_rate > 0.0)) throw ConfigError("brits.learning_rate must be > 0");
  TrainHistory history;
  const std::size_t n = train.samples.size();
  if (n == 0) {
    if (schedule.phase1_max_epochs + schedule.phase2_max_epochs > 0) {
      throw DataError("train_brits: empty training set");
    }
    return history;
  }
  AdamState adam;
  std::vector<std::size_t> order(n);
  std::vector<const WindowSample*> batch_samples;
  int global_epoch = 0;

  auto run_phase = [&](int phase, int max_epochs, const LossWeights& weights) {
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    std::optional<BritsModel> snapshot;
    for (int epoch = 0; epoch < max_epochs; ++epoch) {
      if (schedule.max_steps >= 0 && history.steps >= schedule.max_steps) break;
      ++global_epoch;
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(derive_seed(schedule.seed, static_cast<std::uint64_t>(global_epoch)));
      std::shuffle(order.begin(), order.end(), rng);
      LossBreakdown train_loss;
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(schedule.batch_size)) {
        if (schedule.max_steps >= 0 && history.steps >= schedule.max_steps) break;
        const std::size_t end = std::min(n, start + static_cast<std::size_t>(schedule.batch_size));
        batch_samples.clear();
        for (std::size_t k = start; k < end; ++k) batch_samples.push_back(train.samples[order[k]]);
        const auto batch = make_batch(batch_samples, train.zero_impute);
        BritsGradients grad;
        const auto l = brits_loss_and_gradient(model, batch, weights, grad, &schedule.trainable);
        if (!std::isfinite(l.total(weights))) {
          throw NumericError("non-finite BRITS loss at epoch " + std::to_string(global_epoch) +
                             ", batch starting at " + std::to_string(start));
        }
        if (schedule.gradient_hook) schedule.gradient_hook(grad);
        adam_step(model, adam, grad, schedule);
        ++history.steps;
        const double w = static_cast<double>(end - start) / static_cast<double>(n);
        train_loss.estimation_fwd += w * l.estimation_fwd;
        train_loss.estimation_bwd += w * l.estimation_bwd;
        train_loss.consistency += w * l.consistency;
        train_loss.classification_fwd += w * l.classification_fwd;
        train_loss.classification_bwd += w * l.classification_bwd;
      }
      if (!model.forward.all_finite() || !model.backward.all_finite()) {
        throw NumericError("non-finite BRITS parameters after epoch " +
                           std::to_string(global_epoch));
      }
      const auto val = validation.samples.empty()
                           ? train_loss
                           : evaluate_loss(model, validation, schedule.batch_size);
      history.epochs.push_back(EpochRecord{global_epoch, phase, train_loss, val, history.steps});
      const double monitored = phase == 1 ? val.estimation() : val.total(weights);
      if (!std::isfinite(monitored)) {
        throw NumericError("non-finite validation loss at epoch " + std::to_string(global_epoch));
      }
      if (monitored < best - schedule.min_delta) {
        best = monitored;
        stale = 0;
        if (phase == 2) snapshot = model;
      } else if (++stale >= schedule.patience) {
        break;
      }
    }
    if (snapshot) model = std::move(*snapshot);
  };

  LossWeights phase1 = model.weights;
  phase1.classification = 0.0;
  run_phase(1, schedule.phase1_max_epochs, phase1);
  run_phase(2, schedule.phase2_max_epochs, model.weights);
  return history;
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,phase,steps,train_estimation,train_consistency,train_classification,"
         "val_estimation,val_consistency,val_classification\n";
  out.precision(10);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.phase << ',' << e.steps << ',' << e.train.estimation() << ','
        << e.train.consistency << ',' << e.train.classification() << ','
        << e.validation.estimation() << ',' << e.validation.consistency << ','
        << e.validation.classification() << '\n';
  }
}

std::vector<double> brits_predict(const BritsModel& model, const SequenceSet& set,
                                  int batch_size) {
  std::vector<double> out;
  out.reserve(set.samples.size());
  const std::size_t n = set.samples.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    const auto batch = make_batch(
        std::span<const WindowSample* const>(set.samples.data() + start, end - start),
        set.zero_impute);
    const auto res = brits_forward(model, batch);
    for (Eigen::Index j = 0; j < res.probability.size(); ++j) out.push_back(res.probability[j]);
  }
  return out;
}

std::vector<std::vector<double>> brits_impute(const BritsModel& model, const SequenceSet& set,
                                              int batch_size) {
  std::vector<std::vector<double>> out;
  const std::size_t n = set.samples.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    const auto batch = make_batch(
        std::span<const WindowSample* const>(set.samples.data() + start, end - start),
        set.zero_impute);
    const auto res = brits_forward(model, batch);
    for (int j = 0; j < batch.size; ++j) {
      std::vector<double> grid(kInputDays * static_cast<std::size_t>(batch.features));
      for (std::size_t t = 0; t < kInputDays; ++t) {
        for (int d = 0; d < batch.features; ++d) {
          grid[t * static_cast<std::size_t>(batch.features) + static_cast<std::size_t>(d)] =
              res.imputation[t](d, j);
        }
      }
      out.push_back(std::move(grid));
    }
  }
  return out;
}

}  // namespace ilos
