#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "geox/dm/train.hpp"
#include "geox/errors.hpp"
#include "geox/eval.hpp"
#include "geox/io.hpp"
#include "geox/ppo/train.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;

namespace geox::cli {

namespace {

constexpr const char* kWorldManifest = "worlds.manifest";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

fs::path require_path(const RunConfig& c, const std::string& key, const char* what) {
  const auto& s = c.str(key);
  if (s.empty()) throw MissingInput(std::string(what) + " required (--" + key + ")");
  if (!fs::exists(s)) throw MissingInput(std::string(what) + " not found: " + s);
  return s;
}

// Every regular file under the run directory with its SHA-256, sorted by path.
void write_run_manifest(const fs::path& out) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(out)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), out).generic_string();
    if (rel != "MANIFEST") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::string text;
  for (const auto& f : files) text += sha256_hex(read_file(out / f)) + "  " + f + "\n";
  write_text_file(out / "MANIFEST", text);
}

WorldSet load_worlds(const RunConfig& c) {
  const auto dir = require_path(c, "worlds", "world directory");
  const auto manifest = dir / kWorldManifest;
  if (!fs::exists(manifest)) throw MissingInput("no " + std::string(kWorldManifest) + " in " + dir.string());
  std::istringstream in(read_text_file(manifest));
  std::string line;
  std::vector<World> worlds;
  std::vector<WorldRef> listed;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream row(line);
    std::uint32_t id = 0;
    std::string hash, sha, file;
    if (!(row >> id >> hash >> sha >> file)) throw FormatError(manifest.string() + ": malformed line '" + line + "'");
    const auto bytes = read_file(dir / file);
    if (sha256_hex(bytes) != sha) throw FormatError(file + ": content does not match its manifest hash");
    worlds.push_back(decode_world(bytes));
    listed.push_back(WorldRef{id, std::stoull(hash, nullptr, 16)});
  }
  if (worlds.empty()) throw FormatError(manifest.string() + ": lists no worlds");
  auto set = make_world_set(std::move(worlds), listed.front().id);
  if (set.refs != listed) throw FormatError(manifest.string() + ": ids must be consecutive and hashes must match");
  return set;
}

FrozenDm load_dm(const RunConfig& c) {
  return FrozenDm::from_checkpoint(load_checkpoint<float>(require_path(c, "dm", "dynamics-model checkpoint")));
}

fs::path prepare_out(const RunConfig& c, const std::string& command) {
  const fs::path out = c.str("out");
  fs::create_directories(out);
  write_text_file(out / "config.txt", "# geox " + command + "\n" + c.resolved(command_keys(command)));
  return out;
}

int gen_worlds(const RunConfig& c) {
  const auto spec = world_spec(c);
  const int count = c.integer("count");
  const int first = c.integer("first-id");
  if (count < 1) throw ConfigError("count must be >= 1");
  if (first < 0) throw ConfigError("first-id must be >= 0");
  const auto out = prepare_out(c, "gen-worlds");
  std::vector<World> worlds;
  for (int i = 0; i < count; ++i) {
    WorldSpec s = spec;
    s.seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(first + i)});
    worlds.push_back(generate_world(s));
  }
  const auto set = make_world_set(std::move(worlds), static_cast<std::uint32_t>(first));
  std::string manifest = "# id hash64 sha256 file\n";
  for (std::size_t i = 0; i < set.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "world_%04u.geow", set.refs[i].id);
    const auto bytes = encode_world(set.worlds[i]);
    write_file(out / name, bytes);
    manifest += std::to_string(set.refs[i].id) + " " + hex64(set.refs[i].hash) + " " + sha256_hex(bytes) + " " + name + "\n";
  }
  write_text_file(out / kWorldManifest, manifest);
  write_run_manifest(out);
  std::cout << "wrote " << count << " worlds to " << out.string() << "\n";
  return 0;
}

int build_dataset_cmd(const RunConfig& c) {
  const auto cfg = dataset_config(c);
  const auto worlds = load_worlds(c);
  const auto out = prepare_out(c, "build-dataset");
  const auto ds = build_dataset(worlds, cfg);
  save_dataset(ds, out / "dataset.geot");
  write_run_manifest(out);
  std::cout << "wrote " << ds.trajectories.size() << " trajectories to " << (out / "dataset.geot").string() << "\n";
  return 0;
}

int train_dm_cmd(const RunConfig& c) {
  const auto cfg = dm_config(c);
  const auto worlds = load_worlds(c);
  const auto ds = load_dataset(require_path(c, "dataset", "dataset"));
  const auto out = prepare_out(c, "train-dm");
  const auto& w0 = worlds.worlds.front();
  auto result = dm::train_dm<float>(ds, worlds, cfg, {w0.spec.embed_dim, w0.grid()}, [](const dm::EpochLog& r) {
    std::cout << "epoch " << r.epoch << " action " << r.action << " state " << r.state << "\n";
  });
  save_checkpoint(out / "dm.ckpt", result.model.checkpoint());
  write_text_file(out / "dm_loss.csv", dm::format_dm_log_csv(result.log));
  const auto ev = dm::evaluate_dm(result.model, ds, worlds);
  std::ostringstream m;
  m.precision(9);
  m << "metric,value\naction_accuracy," << ev.action_accuracy << "\nchance," << ev.chance << "\nstate_mse,"
    << ev.state_mse << "\n";
  write_text_file(out / "dm_metrics.csv", m.str());
  write_run_manifest(out);
  std::cout << "train accuracy " << ev.action_accuracy << " (chance " << ev.chance << ")\n";
  return 0;
}

int train_ce_cmd(const RunConfig& c) {
  const auto cfg = ce_config(c);
  const auto worlds = load_worlds(c);
  const auto model = load_dm(c);
  const auto out = prepare_out(c, "train-ce");
  auto result = ppo::train_ce(model, worlds, cfg, [](const ppo::CeEpochLog& r) {
    if (r.probe_sr >= 0) std::cout << "round " << r.epoch << " r_ex " << r.r_ex << " probe SR " << r.probe_sr << "\n";
  });
  save_checkpoint(out / "heads.ckpt", result.heads.checkpoint());
  write_text_file(out / "ce_log.csv", ppo::format_ce_log_csv(result.log));
  if (cfg.trace) write_text_file(out / "reward_trace.csv", format_reward_trace(result.trace));
  write_run_manifest(out);
  return 0;
}

struct LoadedPolicy {
  Policy policy;
  std::optional<FrozenDm> model;
  std::optional<ppo::ActorCritic<float>> heads;
};

// The returned object owns what the policy refers to; keep it alive.
std::unique_ptr<LoadedPolicy> load_policy(const RunConfig& c, const std::string& mode_key) {
  auto lp = std::make_unique<LoadedPolicy>();
  const auto& name = c.str("policy");
  const auto mode = ppo::policy_mode_from_string(c.str(mode_key));
  if (name == "random") {
    lp->policy = random_policy();
  } else if (name == "oracle") {
    lp->policy = oracle_policy();
  } else if (name == "dm") {
    lp->model = load_dm(c);
    lp->policy = dm_argmax_policy();
  } else if (name == "ce") {
    lp->model = load_dm(c);
    lp->heads = ppo::ActorCritic<float>::from_checkpoint(
        load_checkpoint<float>(require_path(c, "heads", "actor-critic checkpoint")));
    if (lp->heads->feature_dim() != lp->model->config().d_model) {
      throw ConfigError("actor-critic feature width " + std::to_string(lp->heads->feature_dim()) +
                        " does not match the model width " + std::to_string(lp->model->config().d_model));
    }
    lp->policy = ppo::ce_policy(*lp->heads, mode);
  } else {
    throw ConfigError("unknown policy '" + name + "' (random|oracle|dm|ce)");
  }
  return lp;
}

int eval_cmd(const RunConfig& c) {
  const auto cfg = eval_config(c, false);
  const auto worlds = load_worlds(c);
  cfg.validate(worlds.worlds.front().grid());
  auto lp = load_policy(c, "mode");
  const auto out = prepare_out(c, "eval");
  const auto rep = evaluate(lp->policy, worlds, cfg, lp->model ? &*lp->model : nullptr);
  write_text_file(out / "report.csv", format_report_csv(rep));
  write_text_file(out / "visits.json", format_visits_json(rep));
  write_text_file(out / "episodes.csv", format_episodes_csv(rep));
  write_run_manifest(out);
  for (const auto& [dist, sr] : rep.sr) std::cout << "C=" << dist << " SR " << sr << " SG " << rep.sg.at(dist) << "\n";
  return 0;
}

int render_cmd(const RunConfig& c) {
  const auto cfg = eval_config(c, true);
  const auto& fmt_name = c.str("render-format");
  if (fmt_name != "ascii" && fmt_name != "svg") throw ConfigError("render-format must be ascii or svg");
  const auto format = fmt_name == "svg" ? RenderFormat::Svg : RenderFormat::Ascii;
  const int limit = c.integer("render-limit");
  if (limit < 0) throw ConfigError("render-limit must be >= 0");
  const auto worlds = load_worlds(c);
  cfg.validate(worlds.worlds.front().grid());
  auto lp = load_policy(c, "render-mode");
  const auto out = prepare_out(c, "render");
  const auto rep = evaluate(lp->policy, worlds, cfg, lp->model ? &*lp->model : nullptr);
  fs::create_directories(out / "renders");
  int written = 0;
  for (const auto& e : rep.episodes) {
    if (written >= limit) break;
    char name[64];
    std::snprintf(name, sizeof name, "w%04u_c%d_p%02d_t%02d.%s", e.world_id, e.distance, e.pair, e.trial,
                  format == RenderFormat::Svg ? "svg" : "txt");
    write_text_file(out / "renders" / name,
                    render_path(worlds.by_id(e.world_id), e.record.path, e.record.task.goal, format));
    ++written;
  }
  write_text_file(out / "episodes.csv", format_episodes_csv(rep));
  write_run_manifest(out);
  std::cout << "wrote " << written << " renders to " << (out / "renders").string() << "\n";
  return 0;
}

int dispatch(const std::string& command, const RunConfig& c) {
  if (command == "gen-worlds") return gen_worlds(c);
  if (command == "build-dataset") return build_dataset_cmd(c);
  if (command == "train-dm") return train_dm_cmd(c);
  if (command == "train-ce") return train_ce_cmd(c);
  if (command == "eval") return eval_cmd(c);
  if (command == "render") return render_cmd(c);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"geox: goal-reaching agents with curiosity-driven exploration on synthetic grid worlds"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, std::string> config_files;
  std::map<std::string, CLI::App*> subs;
  const std::map<std::string, std::string> blurbs{
      {"gen-worlds", "generate seeded synthetic worlds and their manifest"},
      {"build-dataset", "sample labeled random-walk trajectories from a world directory"},
      {"train-dm", "train the action-state dynamics model"},
      {"train-ce", "train actor-critic heads over a frozen dynamics model"},
      {"eval", "measure SR/SG per distance and patch-visit statistics"},
      {"render", "draw episode paths as ASCII or SVG"}};
  for (const auto& name : command_names()) {
    auto* sub = app.add_subcommand(name, blurbs.at(name));
    sub->add_option("--config", config_files[name], "key = value file; flags override it");
    for (const auto& key : command_keys(name)) {
      const auto* spec = find_key(key);
      sub->add_option("--" + key, flag_values[name][key], spec->help)->default_str(spec->default_value);
    }
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }
  fs::path out;
  try {
    RunConfig config;
    if (!config_files[command].empty()) {
      if (!fs::exists(config_files[command])) throw MissingInput("config file not found: " + config_files[command]);
      config.merge_text(read_text_file(config_files[command]), config_files[command]);
    }
    for (const auto& key : command_keys(command)) {
      if (subs[command]->count("--" + key) > 0) config.set(key, flag_values[command][key]);
    }
    out = config.str("out");
    return dispatch(command, config);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const MissingInput& e) {
    std::cerr << "missing input: " << e.what() << "\n";
    return 4;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    try {
      fs::create_directories(out);
      write_text_file(out / "diagnostic.log", std::string(e.what()) + "\n");
    } catch (const std::exception&) {
    }
    return 5;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace geox::cli
