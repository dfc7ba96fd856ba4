#pragma once

#include <Eigen/Core>

#include <span>
#include <string>
#include <vector>

#include "geox/grid.hpp"

namespace geox {

enum class IntrinsicKind { Mse, Cosine };
enum class NormalizationScope { Batch, Episode, Running };

const char* to_string(IntrinsicKind k);
const char* to_string(NormalizationScope s);
IntrinsicKind intrinsic_kind_from_string(const std::string& s);
NormalizationScope normalization_scope_from_string(const std::string& s);

struct RewardConfig {
  double beta = 0.25;
  IntrinsicKind kind = IntrinsicKind::Mse;
  NormalizationScope scope = NormalizationScope::Batch;
};

struct RewardBreakdown {
  double r_ex = 0.0;
  double r_in_raw = 0.0;
  double r_in_norm = 0.0;
  double r_ce = 0.0;
  IntrinsicKind kind = IntrinsicKind::Mse;
  double beta = 0.25;
};

/// +2 on reaching the goal (even if visited before), -1 on entering a visited
/// cell, otherwise +1/-1 by whether the squared distance to the goal shrank.
/// `visited` is the set before the move. Throws ContractViolation when the
/// two positions are not 4-neighbours.
double extrinsic_reward(Position p_t, Position p_next, Position goal, std::span<const Position> visited);

/// Mse: squared Euclidean error. Cosine: negative cosine similarity; throws
/// std::invalid_argument on a zero-norm input.
double intrinsic_reward(const Eigen::RowVectorXd& prediction, const Eigen::RowVectorXd& observation,
                        IntrinsicKind kind);

/// Affine min-max map onto [-1, 1]; a constant batch maps to zeros.
std::vector<double> normalize_intrinsic(std::span<const double> raw);

/// Min/max over everything seen so far; values map into [-1, 1] against the
/// running extremes.
class RunningRange {
 public:
  void observe(std::span<const double> values);
  double normalize(double v) const;
  bool empty() const { return count_ == 0; }

 private:
  double lo_ = 0.0, hi_ = 0.0;
  std::size_t count_ = 0;
};

/// Normalizes the intrinsic values of a rollout batch (one vector per
/// episode) under the chosen scope.
std::vector<std::vector<double>> normalize_rollout(const std::vector<std::vector<double>>& raw,
                                                   NormalizationScope scope, RunningRange& running);

/// r_ex + beta * r_in_norm. Throws ContractViolation if r_in_norm is outside [-1, 1].
double combined_reward(double r_ex, double r_in_norm, double beta);

RewardBreakdown make_breakdown(double r_ex, double r_in_raw, double r_in_norm, const RewardConfig& config);

/// "episode,t,r_ex,r_in_raw,r_in_norm,r_ce" rows.
std::string format_reward_trace(const std::vector<std::vector<RewardBreakdown>>& episodes);

}  // namespace geox
