#include "datagrad/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "datagrad/errors.hpp"
#include "datagrad/multitask.hpp"

namespace datagrad {

namespace {

constexpr std::pair<Mode, std::string_view> kModeNames[] = {
    {Mode::Rect, "rect"}, {Mode::L1, "l1"},   {Mode::L2, "l2"},
    {Mode::DGL1, "dgl1"}, {Mode::DGL2, "dgl2"}, {Mode::MT, "mt"},
    {Mode::MT_DGL1, "mt_dgl1"}, {Mode::MT_DGL2, "mt_dgl2"},
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || text.empty())
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.emplace_back(trim(item));
  return out;
}

bool mode_wants(Mode mode, std::string_view key) {
  if (key == "penalty") return mode == Mode::L1 || mode == Mode::L2;
  if (key == "lambda1" || key == "fd_step") return uses_datagrad(mode);
  if (key == "gamma") return is_multitask(mode);
  return true;
}

}  // namespace

std::string_view to_string(Mode mode) noexcept {
  for (const auto& [m, name] : kModeNames)
    if (m == mode) return name;
  return "?";
}

Mode parse_mode(std::string_view text) {
  for (const auto& [m, name] : kModeNames)
    if (name == text) return m;
  throw ConfigError("mode: unknown mode '" + std::string(text) +
                    "' (expected rect, l1, l2, dgl1, dgl2, mt, mt_dgl1 or mt_dgl2)");
}

bool is_multitask(Mode mode) noexcept {
  return mode == Mode::MT || mode == Mode::MT_DGL1 || mode == Mode::MT_DGL2;
}

bool uses_datagrad(Mode mode) noexcept {
  return mode == Mode::DGL1 || mode == Mode::DGL2 || mode == Mode::MT_DGL1 ||
         mode == Mode::MT_DGL2;
}

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys = {
      "mode",        "train_images", "train_labels",     "test_images", "test_labels",
      "out",         "seed",         "eta",              "lambda0",     "lambda1",
      "fd_step",     "gamma",        "penalty",          "epochs",      "batch_size",
      "validation_count", "split_seed", "hidden",       "phi_grid",    "attack_kind",
      "train_limit",
  };
  return keys;
}

ConfigEntries parse_config_text(std::string_view text, const std::string& origin) {
  ConfigEntries entries;
  const auto& keys = known_config_keys();
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const std::string where = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(where + ": expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(where + ": " + key + " has no value");
    if (!entries.emplace(key, value).second)
      throw ConfigError(where + ": duplicate key '" + key + "'");
  }
  return entries;
}

ConfigEntries load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::vector<std::size_t> RunConfig::layer_sizes() const {
  std::vector<std::size_t> sizes{kImagePixels};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(kDigitClasses);
  return sizes;
}

std::map<std::string, std::string> RunConfig::describe() const {
  std::map<std::string, std::string> d;
  d["mode"] = std::string(to_string(mode));
  d["train_images"] = train_images.string();
  d["train_labels"] = train_labels.string();
  d["test_images"] = test_images.string();
  d["test_labels"] = test_labels.string();
  d["out"] = out_dir.string();
  d["seed"] = std::to_string(train.seed);
  d["eta"] = format_double(train.eta);
  d["lambda0"] = format_double(train.lambda0);
  d["lambda1"] = format_double(train.lambda1);
  d["fd_step"] = format_double(train.fd_step);
  d["reg_kind"] = std::string(to_string(train.reg_kind));
  d["gamma"] = format_double(train.gamma);
  d["penalty"] = train.weight_penalty ? format_double(train.weight_penalty->coefficient) : "0";
  d["penalty_kind"] =
      train.weight_penalty ? std::string(to_string(train.weight_penalty->kind)) : "none";
  d["epochs"] = std::to_string(train.epochs);
  d["batch_size"] = std::to_string(train.batch_size);
  d["validation_count"] = std::to_string(split.validation_count);
  d["split_seed"] = std::to_string(split.shuffle_seed);
  std::string hidden;
  for (std::size_t h : hidden_layers) hidden += (hidden.empty() ? "" : ",") + std::to_string(h);
  d["hidden"] = hidden;
  std::string grid;
  for (double phi : attack.phi_grid) grid += (grid.empty() ? "" : ",") + format_double(phi);
  d["phi_grid"] = grid;
  d["attack_kind"] = std::string(to_string(attack.kind));
  d["train_limit"] = std::to_string(train_limit);
  return d;
}

RunConfig resolve_config(const ConfigEntries& entries, const ConfigNeeds& needs) {
  auto get = [&](const std::string& key) -> const std::string* {
    const auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  };
  auto require = [&](const std::string& key, const std::string& why) -> const std::string& {
    const std::string* v = get(key);
    if (v == nullptr) throw ConfigError("missing required field '" + key + "' (" + why + ")");
    return *v;
  };

  RunConfig cfg;
  if (needs.training)
    cfg.mode = parse_mode(require("mode", "selects the model family"));
  else if (const auto* v = get("mode"))
    cfg.mode = parse_mode(*v);
  // Defaults are the midpoints of the usual search ranges.
  cfg.train.eta = 0.1005;
  cfg.train.epochs = 30;
  cfg.train.batch_size = 100;

  const std::string mode_name(to_string(cfg.mode));
  for (const auto& [key, value] : entries)
    if (needs.training && !mode_wants(cfg.mode, key))
      throw ConfigError("field '" + key + "' does not apply to mode " + mode_name);

  if (const auto* v = get("seed")) cfg.train.seed = to_uint("seed", *v);
  if (const auto* v = get("eta")) cfg.train.eta = to_double("eta", *v);
  if (const auto* v = get("lambda0")) cfg.train.lambda0 = to_double("lambda0", *v);
  if (const auto* v = get("epochs")) cfg.train.epochs = to_uint("epochs", *v);
  if (const auto* v = get("batch_size")) cfg.train.batch_size = to_uint("batch_size", *v);
  if (const auto* v = get("validation_count"))
    cfg.split.validation_count = to_uint("validation_count", *v);
  if (const auto* v = get("split_seed")) cfg.split.shuffle_seed = to_uint("split_seed", *v);
  if (const auto* v = get("train_limit")) cfg.train_limit = to_uint("train_limit", *v);
  if (const auto* v = get("out")) cfg.out_dir = *v;

  if (needs.training) switch (cfg.mode) {
    case Mode::L1:
    case Mode::L2:
      cfg.train.weight_penalty = WeightPenalty{
          cfg.mode == Mode::L1 ? RegularizerKind::L1 : RegularizerKind::L2,
          to_double("penalty", require("penalty", "weight penalty coefficient for " + mode_name))};
      break;
    case Mode::DGL1:
    case Mode::DGL2:
    case Mode::MT_DGL1:
    case Mode::MT_DGL2:
      cfg.train.reg_kind = (cfg.mode == Mode::DGL1 || cfg.mode == Mode::MT_DGL1)
                               ? RegularizerKind::L1
                               : RegularizerKind::L2;
      cfg.train.lambda1 =
          to_double("lambda1", require("lambda1", "data gradient weight for " + mode_name));
      cfg.train.fd_step =
          to_double("fd_step", require("fd_step", "finite-difference step for " + mode_name));
      break;
    default:
      break;
  }
  if (needs.training && is_multitask(cfg.mode))
    cfg.train.gamma = to_double("gamma", require("gamma", "auxiliary task weight for " + mode_name));

  if (const auto* v = get("hidden")) {
    cfg.hidden_layers.clear();
    for (const auto& item : split_list(*v)) {
      const auto h = to_uint("hidden", item);
      if (h == 0) throw ConfigError("hidden: layer sizes must be >= 1");
      cfg.hidden_layers.push_back(h);
    }
    if (is_multitask(cfg.mode) && cfg.hidden_layers.empty())
      throw ConfigError("hidden: multi-task modes need at least one hidden layer");
  }
  if (const auto* v = get("phi_grid")) {
    cfg.attack.phi_grid.clear();
    for (const auto& item : split_list(*v)) cfg.attack.phi_grid.push_back(to_double("phi_grid", item));
  }
  if (const auto* v = get("attack_kind")) {
    try {
      cfg.attack.kind = parse_regularizer(*v);
    } catch (const std::exception&) {
      throw ConfigError("attack_kind: expected l1 or l2, got '" + *v + "'");
    }
  }

  if (needs.training) {
    cfg.train_images = require("train_images", "training data");
    cfg.train_labels = require("train_labels", "training data");
  }
  if (needs.test_data) {
    cfg.test_images = require("test_images", "test data");
    cfg.test_labels = require("test_labels", "test data");
  }

  auto rethrow_as_config = [](auto&& check) {
    try {
      check();
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
  };
  rethrow_as_config([&] { cfg.train.validate(); });
  rethrow_as_config([&] { cfg.attack.validate(); });
  if (cfg.train.weight_penalty && !(cfg.train.weight_penalty->coefficient >= 0.0))
    throw ConfigError("penalty: must be >= 0");
  return cfg;
}

}  // namespace datagrad
