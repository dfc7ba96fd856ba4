#include "geox/eval.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"

namespace geox {

namespace {

Action action_between(Position p, Position q) {
  for (auto a : kAllActions) {
    if (moved(p, a) == q) return a;
  }
  throw std::invalid_argument("path: " + to_string(p) + " -> " + to_string(q) + " is not a unit move");
}

Action pick_uniform(ActionSet valid, Rng& rng) {
  auto acts = valid.actions();
  std::uniform_int_distribution<std::size_t> pick(0, acts.size() - 1);
  return acts[pick(rng)];
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

void EvalConfig::validate(const GridSpec& grid) const {
  if (distances.empty()) throw std::invalid_argument("eval: empty distance set");
  for (int c : distances) {
    if (c < 1 || c > grid.max_distance()) {
      throw std::invalid_argument("eval: distance " + std::to_string(c) + " not achievable on the grid");
    }
  }
  if (pairs_per_world < 1 || trials < 1) throw std::invalid_argument("eval: pairs and trials must be >= 1");
}

Policy random_policy() {
  return [](const Observation& obs, Rng& rng) { return pick_uniform(obs.valid, rng); };
}

Policy oracle_policy() {
  return [](const Observation& obs, Rng&) {
    return optimal_action_labels(obs.state.position, obs.goal, obs.world.grid()).actions().front();
  };
}

Policy anti_oracle_policy() {
  return [](const Observation& obs, Rng&) {
    Action best = obs.valid.actions().front();
    int best_d = -1;
    for (auto a : obs.valid.actions()) {
      const int nd = manhattan(moved(obs.state.position, a), obs.goal);
      if (nd > best_d) {
        best_d = nd;
        best = a;
      }
    }
    return best;
  };
}

Policy dm_argmax_policy() {
  return [](const Observation& obs, Rng&) {
    if (!obs.dm) throw ContractViolation("dm argmax policy: no model outputs attached");
    const auto& logits = obs.dm->action_logits;
    const auto row = logits.rows() - 1;
    int best = -1;
    for (int j = 0; j < kActionCount; ++j) {
      if (!obs.valid.contains(static_cast<Action>(j))) continue;
      if (best < 0 || logits(row, j) > logits(row, best)) best = j;
    }
    return static_cast<Action>(best);
  };
}

EvalReport evaluate(const Policy& policy, const WorldSet& worlds, const EvalConfig& config, FrozenDm* dm) {
  if (worlds.size() == 0) throw std::invalid_argument("evaluate: no worlds");
  EvalReport rep;
  rep.grid = worlds.worlds.front().grid();
  config.validate(rep.grid);
  std::map<int, int> wins;
  std::map<int, double> sg_sum;
  std::vector<std::vector<Position>> paths;
  for (std::size_t w = 0; w < worlds.size(); ++w) {
    const auto& world = worlds.worlds[w];
    const auto id = worlds.refs[w].id;
    for (int c : config.distances) {
      for (int k = 0; k < config.pairs_per_world; ++k) {
        Rng pair_rng(derive_seed(config.seed, {id, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)}));
        auto [start, goal] = sample_pair_at_distance(world.grid(), c, pair_rng);
        for (int trial = 0; trial < config.trials; ++trial) {
          Rng rng(derive_seed(config.seed, {id, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k),
                                            static_cast<std::uint64_t>(trial), 1}));
          EpisodeOutcome o{id, k, trial, c,
                           run_episode(world, EpisodeTask{id, start, goal, config.modality}, dm, policy, rng)};
          ++rep.attempts[c];
          wins[c] += o.record.success;
          sg_sum[c] += o.record.final_distance;
          paths.push_back(o.record.path);
          rep.episodes.push_back(std::move(o));
        }
      }
    }
  }
  for (const auto& [c, n] : rep.attempts) {
    rep.sr[c] = double(wins[c]) / double(n);
    rep.sg[c] = sg_sum[c] / double(n);
  }
  rep.visits = patch_visit_statistics(paths, rep.grid);
  return rep;
}

SrEstimate random_policy_sr(const GridSpec& grid, int distance, long episodes, Rng& rng) {
  if (episodes < 1) throw std::invalid_argument("random_policy_sr: need at least one episode");
  SrEstimate est;
  est.episodes = episodes;
  if (grid.budget < 1) return est;
  long wins = 0;
  for (long e = 0; e < episodes; ++e) {
    auto [start, goal] = sample_pair_at_distance(grid, distance, rng);
    Position p = start;
    for (int t = 0; t < grid.budget; ++t) {
      p = moved(p, pick_uniform(valid_actions(p, grid), rng));
      if (p == goal) {
        ++wins;
        break;
      }
    }
  }
  est.sr = double(wins) / double(episodes);
  est.stderr_ = std::sqrt(est.sr * (1.0 - est.sr) / double(episodes));
  return est;
}

VisitStatistics patch_visit_statistics(const std::vector<std::vector<Position>>& paths, const GridSpec& grid) {
  VisitStatistics s;
  s.counts.assign(static_cast<std::size_t>(grid.cells()), 0);
  long inside = 0;
  for (const auto& path : paths) {
    for (auto p : path) {
      if (!in_bounds(p, grid)) throw std::invalid_argument("patch_visit_statistics: position off grid");
      ++s.counts[static_cast<std::size_t>(cell_index(p, grid))];
      ++s.total;
      inside += !is_edge(p, grid);
    }
  }
  if (s.total > 0) {
    s.inside_ratio = double(inside) / double(s.total);
    s.edge_ratio = 1.0 - s.inside_ratio;
  }
  return s;
}

CuriosityMap curiosity_trace(FrozenDm& dm, const World& world, const std::vector<GoalPath>& paths, IntrinsicKind kind) {
  const auto cells = static_cast<std::size_t>(world.grid().cells());
  std::vector<double> sum(cells, 0.0);
  CuriosityMap map;
  map.entries.assign(cells, 0);
  for (const auto& gp : paths) {
    if (gp.path.size() < 2) continue;
    std::vector<Action> actions;
    for (std::size_t t = 0; t + 1 < gp.path.size(); ++t) actions.push_back(action_between(gp.path[t], gp.path[t + 1]));
    auto out = dm.infer(dm::encode_sequence(world, goal_embedding(world, gp.goal, gp.modality), gp.path, actions,
                                            dm.config().context_length()));
    for (std::size_t t = 0; t < actions.size(); ++t) {
      const Position entered = gp.path[t + 1];
      const Eigen::RowVectorXd pred = out.state_predictions.row(static_cast<Eigen::Index>(t)).cast<double>();
      const auto c = static_cast<std::size_t>(cell_index(entered, world.grid()));
      sum[c] += intrinsic_reward(pred, world.patch(entered), kind);
      ++map.entries[c];
    }
  }
  map.mean.assign(cells, std::numeric_limits<double>::quiet_NaN());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t c = 0; c < cells; ++c) {
    if (map.entries[c] == 0) continue;
    map.mean[c] = sum[c] / double(map.entries[c]);
    lo = std::min(lo, map.mean[c]);
    hi = std::max(hi, map.mean[c]);
  }
  map.normalized.assign(cells, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t c = 0; c < cells; ++c) {
    if (map.entries[c] == 0) continue;
    map.normalized[c] = hi > lo ? (map.mean[c] - lo) / (hi - lo) : 0.0;
  }
  return map;
}

std::string render_path(const World& world, const std::vector<Position>& path, Position goal, RenderFormat format) {
  const auto& g = world.grid();
  if (path.empty()) throw std::invalid_argument("render_path: empty path");
  for (std::size_t t = 0; t + 1 < path.size(); ++t) action_between(path[t], path[t + 1]);
  std::ostringstream os;
  if (format == RenderFormat::Ascii) {
    // cells on even canvas coordinates, path links between them
    std::vector<std::string> canvas(static_cast<std::size_t>(2 * g.rows - 1), std::string(2 * g.cols - 1, ' '));
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) canvas[2 * r][2 * c] = static_cast<char>('a' + world.terrain({r, c}));
    }
    for (std::size_t t = 0; t < path.size(); ++t) {
      canvas[2 * path[t].row][2 * path[t].col] = '*';
      if (t + 1 < path.size()) {
        const auto p = path[t], q = path[t + 1];
        canvas[p.row + q.row][p.col + q.col] = p.row == q.row ? '-' : '|';
      }
    }
    canvas[2 * goal.row][2 * goal.col] = 'G';
    canvas[2 * path.front().row][2 * path.front().col] = 'S';
    for (const auto& line : canvas) {
      auto end = line.find_last_not_of(' ');
      os << line.substr(0, end == std::string::npos ? 0 : end + 1) << '\n';
    }
    return os.str();
  }
  static const char* kPalette[] = {"#7fa65a", "#c9b27c", "#5b8fb9", "#a3a3a3", "#d98c5f", "#8e6fb0", "#e0d36a", "#4f7a6b"};
  const int cell = 40;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << g.cols * cell << "\" height=\"" << g.rows * cell
     << "\" viewBox=\"0 0 " << g.cols * cell << ' ' << g.rows * cell << "\">\n";
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      os << "  <rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell << "\" height=\"" << cell
         << "\" fill=\"" << kPalette[world.terrain({r, c}) % 8] << "\" stroke=\"#ffffff\"/>\n";
    }
  }
  auto cx = [&](Position p) { return p.col * cell + cell / 2; };
  auto cy = [&](Position p) { return p.row * cell + cell / 2; };
  os << "  <polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"3\" points=\"";
  for (std::size_t t = 0; t < path.size(); ++t) os << (t ? " " : "") << cx(path[t]) << ',' << cy(path[t]);
  os << "\"/>\n";
  os << "  <circle cx=\"" << cx(path.front()) << "\" cy=\"" << cy(path.front())
     << "\" r=\"8\" fill=\"#2ca02c\"/>\n";
  os << "  <rect x=\"" << goal.col * cell + 6 << "\" y=\"" << goal.row * cell + 6 << "\" width=\"" << cell - 12
     << "\" height=\"" << cell - 12 << "\" fill=\"none\" stroke=\"#000000\" stroke-width=\"3\"/>\n";
  os << "</svg>\n";
  return os.str();
}

std::string format_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "C,metric,value\n";
  for (const auto& [c, n] : report.attempts) {
    os << c << ",SR," << num(report.sr.at(c)) << '\n';
    os << c << ",SG," << num(report.sg.at(c)) << '\n';
    os << c << ",attempts," << n << '\n';
  }
  return os.str();
}

std::string format_visits_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["rows"] = report.grid.rows;
  j["cols"] = report.grid.cols;
  j["total_visits"] = report.visits.total;
  j["inside_ratio"] = report.visits.inside_ratio;
  j["edge_ratio"] = report.visits.edge_ratio;
  auto hist = nlohmann::ordered_json::array();
  for (int r = 0; r < report.grid.rows; ++r) {
    auto row = nlohmann::ordered_json::array();
    for (int c = 0; c < report.grid.cols; ++c) row.push_back(report.visits.counts[static_cast<std::size_t>(r * report.grid.cols + c)]);
    hist.push_back(row);
  }
  j["histogram"] = hist;
  return j.dump(2) + "\n";
}

std::string format_episodes_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "world,pair,trial,C,start_row,start_col,goal_row,goal_col,success,SG,path\n";
  for (const auto& e : report.episodes) {
    const auto& r = e.record;
    os << e.world_id << ',' << e.pair << ',' << e.trial << ',' << e.distance << ',' << r.task.start.row << ','
       << r.task.start.col << ',' << r.task.goal.row << ',' << r.task.goal.col << ',' << (r.success ? 1 : 0) << ','
       << r.final_distance << ',';
    for (std::size_t t = 0; t < r.path.size(); ++t) os << (t ? " " : "") << r.path[t].row << ':' << r.path[t].col;
    os << '\n';
  }
  return os.str();
}

}  // namespace geox
