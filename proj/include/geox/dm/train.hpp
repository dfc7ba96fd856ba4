#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "geox/dm/model.hpp"
#include "geox/errors.hpp"
#include "geox/tensor/adam.hpp"

namespace geox::dm {

template <typename Scalar>
Matrix<Scalar> label_matrix(std::span<const ActionSet> labels) {
  Matrix<Scalar> y = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(labels.size()), kActionCount);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (int j = 0; j < kActionCount; ++j) {
      if (labels[i].contains(static_cast<Action>(j))) y(static_cast<Eigen::Index>(i), j) = Scalar(1);
    }
  }
  return y;
}

/// Summed binary cross-entropy between softmax(logits) and multi-hot labels,
/// taken over every action slot of every row.
template <typename Scalar>
Var<Scalar> action_loss(Var<Scalar> logits, const Matrix<Scalar>& labels) {
  if (labels.rows() != logits.rows() || labels.cols() != logits.cols()) {
    detail::shape_fail("action_loss", logits.value(), labels);
  }
  auto& tape = logits.tape();
  auto y = tape.constant(labels);
  auto not_y = tape.constant((Scalar(1) - labels.array()).matrix());
  auto probs = softmax_rows(logits);
  auto terms = add(mul(y, log_softmax_rows(logits)), mul(not_y, log_complement(probs)));
  return scale(sum(terms), Scalar(-1));
}

/// Sum over rows of the squared Euclidean prediction error.
template <typename Scalar>
Var<Scalar> state_loss(Var<Scalar> predictions, const Matrix<Scalar>& observations) {
  if (observations.rows() != predictions.rows() || observations.cols() != predictions.cols()) {
    detail::shape_fail("state_loss", predictions.value(), observations);
  }
  auto diff = sub(predictions, predictions.tape().constant(observations));
  return sum(mul(diff, diff));
}

template <typename Scalar>
struct DmLoss {
  Var<Scalar> action;
  Var<Scalar> state;
  Var<Scalar> total;
  std::size_t action_terms = 0;
  std::size_t state_terms = 0;
};

/// Joint objective on one trajectory. Action terms cover every state that
/// carries a label (steps taken from the goal cell are skipped); state terms
/// cover s_1..s_{N-1}, predicted from the action tokens a_0..a_{N-2}.
template <typename Scalar>
DmLoss<Scalar> dm_loss(DynamicsModel<Scalar>& model, Tape<Scalar>& tape, const TokenSequence& seq,
                       std::span<const ActionSet> labels, double alpha) {
  auto f = model.forward(tape, seq);
  DmLoss<Scalar> out;
  std::vector<Eigen::Index> rows;
  std::vector<ActionSet> kept;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i].empty()) {
      rows.push_back(static_cast<Eigen::Index>(i));
      kept.push_back(labels[i]);
    }
  }
  out.action = rows.empty() ? tape.scalar(Scalar(0))
                            : action_loss(gather_rows(f.action_logits, rows), label_matrix<Scalar>(kept));
  out.action_terms = rows.size();
  const auto n = static_cast<Eigen::Index>(seq.action_count());
  if (n >= 2 && seq.state_count() >= static_cast<std::size_t>(n)) {
    std::vector<Eigen::Index> pred_rows(static_cast<std::size_t>(n - 1));
    std::iota(pred_rows.begin(), pred_rows.end(), Eigen::Index{0});
    Matrix<Scalar> obs = seq.states.middleRows(1, n - 1).template cast<Scalar>();
    out.state = state_loss(gather_rows(f.state_predictions, pred_rows), obs);
    out.state_terms = static_cast<std::size_t>(n - 1);
  } else {
    out.state = tape.scalar(Scalar(0));
  }
  out.total = add(out.action, scale(out.state, static_cast<Scalar>(alpha)));
  return out;
}

template <typename Scalar>
DmLoss<Scalar> dm_loss(DynamicsModel<Scalar>& model, Tape<Scalar>& tape, const Trajectory& traj, const World& world,
                       double alpha) {
  return dm_loss(model, tape, encode_sequence(traj, world, model.config().context_length()), traj.labels, alpha);
}

struct EpochLog {
  int epoch = 0;
  double action = 0.0;
  double state = 0.0;
  double total = 0.0;
};

std::string format_dm_log_csv(const std::vector<EpochLog>& log);

template <typename Scalar>
struct TrainDmResult {
  DynamicsModel<Scalar> model;
  std::vector<EpochLog> log;  // row 0 is the untrained model
};

struct PreparedTrajectory {
  TokenSequence sequence;
  std::vector<ActionSet> labels;
};

std::vector<PreparedTrajectory> prepare_trajectories(const Dataset& dataset, const WorldSet& worlds,
                                                     int context_length);

template <typename Scalar>
EpochLog mean_dm_loss(DynamicsModel<Scalar>& model, const std::vector<PreparedTrajectory>& data, double alpha) {
  EpochLog row;
  for (const auto& p : data) {
    Tape<Scalar> tape(false);
    auto l = dm_loss(model, tape, p.sequence, p.labels, alpha);
    row.action += l.action.item();
    row.state += l.state.item();
    row.total += l.total.item();
  }
  const double n = std::max<std::size_t>(1, data.size());
  row.action /= n;
  row.state /= n;
  row.total /= n;
  return row;
}

/// Minimizes action + alpha * state by Adam, shuffling every epoch. Losses in
/// the log are per-trajectory means. Throws DivergenceError on a non-finite
/// loss.
template <typename Scalar>
TrainDmResult<Scalar> train_dm(const Dataset& dataset, const WorldSet& worlds, const DmConfig& config,
                               typename DynamicsModel<Scalar>::Dims dims,
                               const std::function<void(const EpochLog&)>& on_epoch = {}) {
  config.validate();
  if (dataset.trajectories.empty()) throw std::invalid_argument("train_dm: empty dataset");
  const auto data = prepare_trajectories(dataset, worlds, config.context_length());
  DynamicsModel<Scalar> model(config, dims, derive_seed(config.seed, {1}));
  Adam<Scalar> adam(model.parameters(), AdamConfig{config.learning_rate});
  Rng rng(derive_seed(config.seed, {2}));
  TrainDmResult<Scalar> result{model, {}};
  {
    auto row = mean_dm_loss(model, data, config.alpha);
    row.epoch = 0;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog row;
    row.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      adam.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = data[order[k]];
        Tape<Scalar> tape;
        auto l = dm_loss(model, tape, p.sequence, p.labels, config.alpha);
        const double total = l.total.item();
        if (!std::isfinite(total)) {
          std::ostringstream os;
          os << "train_dm: non-finite loss at epoch " << epoch << ", trajectory " << order[k]
             << " (action=" << l.action.item() << ", state=" << l.state.item() << ")";
          throw DivergenceError(os.str());
        }
        row.action += l.action.item();
        row.state += l.state.item();
        row.total += total;
        tape.backward(scale(l.total, Scalar(1.0 / double(end - start))));
      }
      adam.step();
    }
    const double n = double(data.size());
    row.action /= n;
    row.state /= n;
    row.total /= n;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.model = std::move(model);
  return result;
}

struct DmEvaluation {
  double action_accuracy = 0.0;  // argmax logit inside the label set
  double chance = 0.0;           // mean |label set| / 4
  double state_mse = 0.0;        // mean squared error per predicted state
  std::size_t action_steps = 0;
  std::size_t state_steps = 0;
};

/// Fraction of rows whose argmax logit (lowest index on ties) is a labeled action.
template <typename Derived>
double accuracy_from_logits(const Eigen::MatrixBase<Derived>& logits, std::span<const ActionSet> labels) {
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i].empty()) continue;
    Eigen::Index best = 0;
    logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
    ++total;
    if (labels[i].contains(static_cast<Action>(best))) ++hits;
  }
  return total ? double(hits) / double(total) : 0.0;
}

template <typename Scalar>
DmEvaluation evaluate_dm(DynamicsModel<Scalar>& model, const Dataset& dataset, const WorldSet& worlds) {
  const auto data = prepare_trajectories(dataset, worlds, model.config().context_length());
  DmEvaluation ev;
  std::size_t hits = 0, label_bits = 0;
  double sq = 0.0;
  for (const auto& p : data) {
    auto out = model.infer(p.sequence);
    for (std::size_t i = 0; i < p.labels.size(); ++i) {
      if (p.labels[i].empty()) continue;
      Eigen::Index best = 0;
      out.action_logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
      ++ev.action_steps;
      label_bits += static_cast<std::size_t>(p.labels[i].size());
      if (p.labels[i].contains(static_cast<Action>(best))) ++hits;
    }
    const auto n = static_cast<Eigen::Index>(p.sequence.action_count());
    for (Eigen::Index t = 0; t + 1 < n; ++t) {
      const Eigen::RowVectorXd pred = out.state_predictions.row(t).template cast<double>();
      sq += (pred - p.sequence.states.row(t + 1)).squaredNorm();
      ++ev.state_steps;
    }
  }
  if (ev.action_steps) {
    ev.action_accuracy = double(hits) / double(ev.action_steps);
    ev.chance = double(label_bits) / (4.0 * double(ev.action_steps));
  }
  if (ev.state_steps) ev.state_mse = sq / double(ev.state_steps);
  return ev;
}

template <typename Scalar>
double dm_action_accuracy(DynamicsModel<Scalar>& model, const Dataset& dataset, const WorldSet& worlds) {
  return evaluate_dm(model, dataset, worlds).action_accuracy;
}

}  // namespace geox::dm
