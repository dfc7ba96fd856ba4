#include "geox/reward.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace geox {

const char* to_string(IntrinsicKind k) { return k == IntrinsicKind::Mse ? "mse" : "cos"; }

const char* to_string(NormalizationScope s) {
  switch (s) {
    case NormalizationScope::Batch: return "batch";
    case NormalizationScope::Episode: return "episode";
    case NormalizationScope::Running: return "running";
  }
  return "?";
}

IntrinsicKind intrinsic_kind_from_string(const std::string& s) {
  if (s == "mse") return IntrinsicKind::Mse;
  if (s == "cos") return IntrinsicKind::Cosine;
  throw std::invalid_argument("unknown intrinsic kind '" + s + "' (mse|cos)");
}

NormalizationScope normalization_scope_from_string(const std::string& s) {
  if (s == "batch") return NormalizationScope::Batch;
  if (s == "episode") return NormalizationScope::Episode;
  if (s == "running") return NormalizationScope::Running;
  throw std::invalid_argument("unknown normalization scope '" + s + "' (batch|episode|running)");
}

double extrinsic_reward(Position p_t, Position p_next, Position goal, std::span<const Position> visited) {
  if (manhattan(p_t, p_next) != 1) {
    throw ContractViolation("extrinsic_reward: " + to_string(p_t) + " -> " + to_string(p_next) + " is not a unit move");
  }
  if (p_next == goal) return 2.0;
  if (std::find(visited.begin(), visited.end(), p_next) != visited.end()) return -1.0;
  return squared_distance(p_next, goal) < squared_distance(p_t, goal) ? 1.0 : -1.0;
}

double intrinsic_reward(const Eigen::RowVectorXd& prediction, const Eigen::RowVectorXd& observation,
                        IntrinsicKind kind) {
  if (prediction.size() != observation.size()) {
    throw std::invalid_argument("intrinsic_reward: dimension mismatch " + std::to_string(prediction.size()) + " vs " +
                                std::to_string(observation.size()));
  }
  if (kind == IntrinsicKind::Mse) return (prediction - observation).squaredNorm();
  const double np = prediction.norm(), no = observation.norm();
  if (!(np > 0.0) || !(no > 0.0)) throw std::invalid_argument("intrinsic_reward: zero-norm vector under cosine");
  return -prediction.dot(observation) / (np * no);
}

std::vector<double> normalize_intrinsic(std::span<const double> raw) {
  if (raw.empty()) throw std::invalid_argument("normalize_intrinsic: empty batch");
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), 0.0);
  const double span = *hi - *lo;
  if (!(span > 0.0)) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    // endpoints land exactly on -1 and +1
    out[i] = raw[i] == *hi ? 1.0 : std::clamp(2.0 * (raw[i] - *lo) / span - 1.0, -1.0, 1.0);
  }
  return out;
}

void RunningRange::observe(std::span<const double> values) {
  for (double v : values) {
    if (count_ == 0) {
      lo_ = hi_ = v;
    } else {
      lo_ = std::min(lo_, v);
      hi_ = std::max(hi_, v);
    }
    ++count_;
  }
}

double RunningRange::normalize(double v) const {
  const double span = hi_ - lo_;
  if (count_ == 0 || !(span > 0.0)) return 0.0;
  return std::clamp(2.0 * (v - lo_) / span - 1.0, -1.0, 1.0);
}

std::vector<std::vector<double>> normalize_rollout(const std::vector<std::vector<double>>& raw,
                                                   NormalizationScope scope, RunningRange& running) {
  std::vector<std::vector<double>> out(raw.size());
  switch (scope) {
    case NormalizationScope::Episode:
      for (std::size_t e = 0; e < raw.size(); ++e) {
        if (!raw[e].empty()) out[e] = normalize_intrinsic(raw[e]);
      }
      break;
    case NormalizationScope::Batch: {
      std::vector<double> flat;
      for (const auto& ep : raw) flat.insert(flat.end(), ep.begin(), ep.end());
      if (flat.empty()) break;
      auto norm = normalize_intrinsic(flat);
      std::size_t k = 0;
      for (std::size_t e = 0; e < raw.size(); ++e) {
        out[e].assign(norm.begin() + static_cast<std::ptrdiff_t>(k),
                      norm.begin() + static_cast<std::ptrdiff_t>(k + raw[e].size()));
        k += raw[e].size();
      }
      break;
    }
    case NormalizationScope::Running:
      for (const auto& ep : raw) running.observe(ep);
      for (std::size_t e = 0; e < raw.size(); ++e) {
        for (double v : raw[e]) out[e].push_back(running.normalize(v));
      }
      break;
  }
  return out;
}

double combined_reward(double r_ex, double r_in_norm, double beta) {
  if (!(r_in_norm >= -1.0 && r_in_norm <= 1.0)) {
    throw ContractViolation("combined_reward: normalized intrinsic reward " + std::to_string(r_in_norm) +
                            " outside [-1, 1]");
  }
  return r_ex + beta * r_in_norm;
}

RewardBreakdown make_breakdown(double r_ex, double r_in_raw, double r_in_norm, const RewardConfig& config) {
  return RewardBreakdown{r_ex, r_in_raw, r_in_norm, combined_reward(r_ex, r_in_norm, config.beta), config.kind,
                         config.beta};
}

std::string format_reward_trace(const std::vector<std::vector<RewardBreakdown>>& episodes) {
  std::ostringstream os;
  os.precision(9);
  os << "episode,t,r_ex,r_in_raw,r_in_norm,r_ce\n";
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    for (std::size_t t = 0; t < episodes[e].size(); ++t) {
      const auto& b = episodes[e][t];
      os << e << ',' << t << ',' << b.r_ex << ',' << b.r_in_raw << ',' << b.r_in_norm << ',' << b.r_ce << '\n';
    }
  }
  return os.str();
}

}  // namespace geox
