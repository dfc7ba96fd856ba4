#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "geox/dm/model.hpp"
#include "geox/eval.hpp"
#include "geox/ppo/train.hpp"
#include "geox/trajectory.hpp"
#include "geox/world.hpp"

namespace geox::cli {

/// Bad flag, unknown key or malformed value. Exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A required input file or directory is absent. Exit code 4.
class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  std::string key;  // also the long flag name
  std::string default_value;
  std::string help;
};

const std::vector<KeySpec>& key_registry();
const KeySpec* find_key(const std::string& key);

const std::vector<std::string>& command_names();
/// Keys a subcommand reads, in display order.
const std::vector<std::string>& command_keys(const std::string& command);

/// Flat key=value settings. Values stay strings until a typed getter reads
/// them, so every error names the offending key.
class RunConfig {
 public:
  RunConfig();

  /// key=value text; '#' starts a comment line. Unknown keys are rejected.
  void merge_text(const std::string& text, const std::string& origin);
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  int integer(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  double real(const std::string& key) const;
  bool boolean(const std::string& key) const;
  std::vector<int> int_list(const std::string& key) const;

  /// "key = value" lines for the given keys, in order.
  std::string resolved(const std::vector<std::string>& keys) const;

 private:
  std::map<std::string, std::string> values_;
};

GridSpec grid_spec(const RunConfig& c);
WorldSpec world_spec(const RunConfig& c);
DatasetConfig dataset_config(const RunConfig& c);
dm::DmConfig dm_config(const RunConfig& c);
ppo::CeConfig ce_config(const RunConfig& c);
EvalConfig eval_config(const RunConfig& c, bool render);

}  // namespace geox::cli
