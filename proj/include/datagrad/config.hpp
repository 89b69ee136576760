#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "datagrad/data.hpp"
#include "datagrad/datagrad.hpp"
#include "datagrad/robustness.hpp"

namespace datagrad {

/// Model families of the experiments: plain rectifier net, classical weight
/// penalties, DataGrad, multi-task, and multi-task with DataGrad.
enum class Mode { Rect, L1, L2, DGL1, DGL2, MT, MT_DGL1, MT_DGL2 };

std::string_view to_string(Mode mode) noexcept;
Mode parse_mode(std::string_view text);
bool is_multitask(Mode mode) noexcept;
bool uses_datagrad(Mode mode) noexcept;

/// Raw `key = value` pairs, in file order, before interpretation.
using ConfigEntries = std::map<std::string, std::string>;

/// Parses the line-oriented config format: `key = value`, `#` starts a comment,
/// blank lines ignored. Throws ConfigError naming the line on malformed input
/// or duplicate keys.
ConfigEntries parse_config_text(std::string_view text, const std::string& origin = "config");
ConfigEntries load_config_file(const std::filesystem::path& path);

struct RunConfig {
  Mode mode = Mode::Rect;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::filesystem::path out_dir = "out";
  TrainConfig train;
  SplitSpec split;
  std::vector<std::size_t> hidden_layers = {784, 784, 784};
  AttackConfig attack;
  std::size_t train_limit = 0;  // use only the first N training samples; 0 = all

  /// Full layer list for the digit network: 784, hidden..., 10.
  std::vector<std::size_t> layer_sizes() const;

  /// Every interpreted field as strings, for run metadata.
  std::map<std::string, std::string> describe() const;
};

/// What a command needs from the config beyond the mode-specific fields.
struct ConfigNeeds {
  bool training = false;  // mode, its fields and the training data are required
  bool test_data = false;
};

/// Interprets `entries`. For training, the mode and the fields it requires
/// (penalty for l1/l2; lambda1 and fd_step for DataGrad modes; gamma for
/// multi-task modes) must be present, and fields the mode does not use are
/// rejected. Throws ConfigError naming the offending field.
RunConfig resolve_config(const ConfigEntries& entries, const ConfigNeeds& needs);

/// Keys accepted in config files and by `--set`.
const std::vector<std::string>& known_config_keys();

}  // namespace datagrad
