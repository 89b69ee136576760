#include "datagrad/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "datagrad/checkpoint.hpp"
#include "datagrad/config.hpp"
#include "datagrad/errors.hpp"
#include "datagrad/io.hpp"
#include "datagrad/robustness.hpp"
#include "datagrad/training.hpp"

namespace datagrad {

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct CommonFlags {
  std::string config;
  std::map<std::string, std::string> overrides;  // config key -> value
  std::vector<std::string> sets;
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "Config file (key = value lines)");
  struct Flag {
    const char* name;
    const char* key;
    const char* help;
  };
  static constexpr Flag kFlags[] = {
      {"--mode", "mode", "rect, l1, l2, dgl1, dgl2, mt, mt_dgl1 or mt_dgl2"},
      {"--seed", "seed", "Initialisation and shuffling seed"},
      {"--eta", "eta", "Step size"},
      {"--lambda1", "lambda1", "Data gradient penalty weight"},
      {"--fd-step", "fd_step", "Finite-difference step t"},
      {"--gamma", "gamma", "Auxiliary task weight"},
      {"--phi-grid", "phi_grid", "Comma-separated attack magnitudes"},
      {"--out", "out", "Output directory"},
      {"--epochs", "epochs", "Number of epochs"},
      {"--batch-size", "batch_size", "Mini-batch size"},
  };
  for (const Flag& f : kFlags) {
    const std::string key = f.key;
    cmd->add_option_function<std::string>(
        f.name, [&flags, key](const std::string& v) { flags.overrides[key] = v; }, f.help);
  }
  cmd->add_option("--set", flags.sets, "Override any config key: KEY=VALUE")->take_all();
}

RunConfig load_run_config(const CommonFlags& flags, const ConfigNeeds& needs) {
  ConfigEntries entries;
  if (!flags.config.empty()) entries = load_config_file(flags.config);
  for (const auto& s : flags.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
    // Reuse the file parser so keys are checked the same way.
    const auto one = parse_config_text(s, "--set");
    for (const auto& [k, v] : one) entries[k] = v;
  }
  for (const auto& [k, v] : flags.overrides) entries[k] = v;
  return resolve_config(entries, needs);
}

void require_readable(const std::filesystem::path& path, const char* what) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw ConfigError(std::string(what) + " not found: " + path.string());
}

void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string fmt(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

nlohmann::json describe_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : cfg.describe()) j[k] = v;
  return j;
}

struct ModelRef {
  std::string id;
  std::filesystem::path path;
};

ModelRef parse_model_ref(const std::string& text) {
  ModelRef ref;
  const auto eq = text.find('=');
  if (eq != std::string::npos) {
    ref.id = text.substr(0, eq);
    ref.path = text.substr(eq + 1);
  } else {
    ref.path = text;
    ref.id = ref.path.stem().string();
    if (ref.id == "model" && ref.path.has_parent_path())
      ref.id = ref.path.parent_path().filename().string();
  }
  if (ref.id.empty() || ref.id.find_first_of(",\"\n\r") != std::string::npos)
    throw ConfigError("model id '" + ref.id + "' is empty or contains CSV delimiters");
  return ref;
}

Dataset load_testset(const RunConfig& cfg) {
  return normalize(load_idx(cfg.test_images, cfg.test_labels));
}

// ---------------------------------------------------------------------------

int cmd_train(const CommonFlags& flags, std::ostream& out) {
  const RunConfig cfg = load_run_config(flags, {.training = true});
  require_readable(cfg.train_images, "training images");
  require_readable(cfg.train_labels, "training labels");

  Dataset all = normalize(load_idx(cfg.train_images, cfg.train_labels));
  if (cfg.train_limit > 0 && cfg.train_limit < all.size()) {
    std::vector<std::size_t> head(cfg.train_limit);
    for (std::size_t i = 0; i < head.size(); ++i) head[i] = i;
    all = subset(all, head);
  }
  auto [train, validation] = split(all, cfg.split);
  if (is_multitask(cfg.mode)) train = rotation_augment(train);

  prepare_out_dir(cfg.out_dir);
  const auto log_path = cfg.out_dir / "train.log";
  std::string log;
  const auto sizes = cfg.layer_sizes();
  out << "mode " << to_string(cfg.mode) << ": " << train.size() << " training samples, "
      << validation.size() << " validation samples\n";

  auto on_epoch = [&](const EpochStats& s) {
    std::ostringstream line;
    line << "epoch " << s.epoch << " loss " << fmt(s.train_loss, 6) << " train_acc "
         << fmt(s.train_accuracy) << " val_acc "
         << (s.validation_accuracy ? fmt(*s.validation_accuracy) : std::string("n/a"))
         << " seconds " << fmt(s.seconds, 1) << '\n';
    out << line.str() << std::flush;
    log += line.str();
    write_file_atomic(log_path, log);
  };

  const TrainOutcome result =
      is_multitask(cfg.mode) ? train_multitask(cfg.train, sizes, train, validation, on_epoch)
                             : train_network(cfg.train, sizes, train, validation, on_epoch);

  const auto ckpt_path = cfg.out_dir / "model.dgrd";
  save_checkpoint(ckpt_path, result.net, result.aux ? &*result.aux : nullptr);

  nlohmann::json meta;
  meta["tool"] = "datagrad";
  meta["version"] = kToolVersion;
  meta["command"] = "train";
  meta["config"] = describe_json(cfg);
  meta["layer_sizes"] = sizes;
  meta["rotation_angles_deg"] = kRotationAngles;
  meta["rotation_convention"] = "positive angles rotate counterclockwise";
  meta["data"] = {{"train_images_sha256", sha256_file(cfg.train_images)},
                  {"train_labels_sha256", sha256_file(cfg.train_labels)},
                  {"train_samples", train.size()},
                  {"validation_samples", validation.size()}};
  meta["best_epoch"] = result.best_epoch;
  if (result.best_validation_accuracy)
    meta["best_validation_accuracy"] = *result.best_validation_accuracy;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& s : result.history) {
    nlohmann::json h{{"epoch", s.epoch},
                     {"train_loss", s.train_loss},
                     {"train_accuracy", s.train_accuracy},
                     {"seconds", s.seconds}};
    if (s.validation_accuracy) h["validation_accuracy"] = *s.validation_accuracy;
    history.push_back(h);
  }
  meta["history"] = history;
  meta["checkpoint"] = {{"path", ckpt_path.filename().string()},
                        {"sha256", sha256_file(ckpt_path)}};
  write_file_atomic(cfg.out_dir / "run.json", meta.dump(2) + "\n");

  out << "best epoch " << result.best_epoch;
  if (result.best_validation_accuracy) out << " (val_acc " << fmt(*result.best_validation_accuracy) << ")";
  out << "; wrote " << ckpt_path.string() << '\n';
  return kExitOk;
}

int cmd_attack(const CommonFlags& flags, const std::string& attacker, double phi,
               std::ostream& out) {
  const RunConfig cfg = load_run_config(flags, {.test_data = true});
  if (!std::isfinite(phi) || phi < 0.0) throw ConfigError("--phi must be finite and >= 0");
  const ModelRef ref = parse_model_ref(attacker);
  require_readable(ref.path, "attacker checkpoint");
  require_readable(cfg.test_images, "test images");
  require_readable(cfg.test_labels, "test labels");

  const Checkpoint ckpt = load_checkpoint(ref.path);
  const Dataset testset = load_testset(cfg);
  const Dataset adversarial = generate_adversarial_testset(ckpt.net, testset, cfg.attack.kind, phi);

  prepare_out_dir(cfg.out_dir);
  const auto images = cfg.out_dir / "adversarial-images.idx3-f64";
  const auto labels = cfg.out_dir / "adversarial-labels.idx1-ubyte";
  save_idx_f64(adversarial, images, labels);

  nlohmann::json meta;
  meta["tool"] = "datagrad";
  meta["version"] = kToolVersion;
  meta["command"] = "attack";
  meta["config"] = describe_json(cfg);
  meta["attacker"] = {{"id", ref.id},
                      {"path", ref.path.string()},
                      {"sha256", sha256_file(ref.path)}};
  meta["phi"] = phi;
  meta["attack_kind"] = std::string(to_string(cfg.attack.kind));
  meta["attack_label"] = "true";
  meta["data"] = {{"test_images_sha256", sha256_file(cfg.test_images)},
                  {"test_labels_sha256", sha256_file(cfg.test_labels)},
                  {"samples", adversarial.size()}};
  meta["outputs"] = {{"images", images.filename().string()},
                     {"images_sha256", sha256_file(images)},
                     {"labels", labels.filename().string()}};
  write_file_atomic(cfg.out_dir / "attack.json", meta.dump(2) + "\n");
  out << "wrote " << adversarial.size() << " adversarial samples to " << images.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonFlags& flags, const std::vector<std::string>& defender_args,
              const std::vector<std::string>& attacker_args, std::ostream& out) {
  const RunConfig cfg = load_run_config(flags, {.test_data = true});
  std::vector<ModelRef> defender_refs, attacker_refs;
  for (const auto& a : defender_args) defender_refs.push_back(parse_model_ref(a));
  for (const auto& a : attacker_args) attacker_refs.push_back(parse_model_ref(a));
  for (const auto* refs : {&defender_refs, &attacker_refs}) {
    for (const auto& r : *refs) require_readable(r.path, "checkpoint");
    for (std::size_t i = 0; i < refs->size(); ++i)
      for (std::size_t j = i + 1; j < refs->size(); ++j)
        if ((*refs)[i].id == (*refs)[j].id)
          throw ConfigError("duplicate model id '" + (*refs)[i].id + "'");
  }
  require_readable(cfg.test_images, "test images");
  require_readable(cfg.test_labels, "test labels");

  auto load_models = [](const std::vector<ModelRef>& refs) {
    std::vector<NamedModel> models;
    for (const auto& r : refs) models.push_back({r.id, load_checkpoint(r.path).net});
    return models;
  };
  const auto defenders = load_models(defender_refs);
  const auto attackers = load_models(attacker_refs);
  const Dataset testset = load_testset(cfg);
  const auto reports = sweep(defenders, attackers, cfg.attack, testset);

  prepare_out_dir(cfg.out_dir);
  const auto csv = cfg.out_dir / "report.csv";
  write_report(reports, csv);

  nlohmann::json meta;
  meta["tool"] = "datagrad";
  meta["version"] = kToolVersion;
  meta["command"] = "sweep";
  meta["config"] = describe_json(cfg);
  auto refs_json = [](const std::vector<ModelRef>& refs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : refs)
      arr.push_back({{"id", r.id}, {"path", r.path.string()}, {"sha256", sha256_file(r.path)}});
    return arr;
  };
  meta["defenders"] = refs_json(defender_refs);
  meta["attackers"] = refs_json(attacker_refs);
  meta["data"] = {{"test_images_sha256", sha256_file(cfg.test_images)},
                  {"test_labels_sha256", sha256_file(cfg.test_labels)}};
  meta["report"] = {{"path", csv.filename().string()}, {"sha256", sha256_file(csv)}};
  write_file_atomic(cfg.out_dir / "sweep.json", meta.dump(2) + "\n");

  std::size_t failed = 0;
  for (const auto& r : reports)
    for (const auto& row : r.rows)
      if (!row.accuracy) ++failed;
  out << "wrote " << csv.string();
  if (failed) out << " (" << failed << " failed cells)";
  out << '\n';
  return kExitOk;
}

int cmd_report(const std::string& csv, std::ostream& out) {
  const auto reports = read_report(csv);
  for (const auto& r : reports) {
    out << "defender " << r.defender << ", attacker " << r.attacker << '\n';
    for (const auto& row : r.rows) {
      char phi[32];
      const auto res = std::to_chars(phi, phi + sizeof phi, row.phi);
      out << "  phi " << std::string(phi, res.ptr) << ": "
          << (row.accuracy ? fmt(*row.accuracy) + " %" : "failed (" + row.error + ")") << '\n';
    }
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DataGrad training and adversarial robustness evaluation"};
  app.name("datagrad");
  app.require_subcommand(1);

  CommonFlags train_flags, attack_flags, sweep_flags;
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common_flags(train, train_flags);

  auto* attack = app.add_subcommand("attack", "Write an adversarial copy of the test set");
  add_common_flags(attack, attack_flags);
  std::string attacker;
  double phi = 0.0;
  attack->add_option("--attacker", attacker, "Attacker checkpoint ([ID=]PATH)")->required();
  attack->add_option("--phi", phi, "Attack magnitude")->required();

  auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate defenders against attackers");
  add_common_flags(sweep_cmd, sweep_flags);
  std::vector<std::string> defenders, attackers;
  sweep_cmd->add_option("--defender", defenders, "Defender checkpoint ([ID=]PATH), repeatable")
      ->required();
  sweep_cmd->add_option("--attacker", attackers, "Attacker checkpoint ([ID=]PATH), repeatable")
      ->required();

  auto* report = app.add_subcommand("report", "Print a sweep report as text");
  std::string csv;
  report->add_option("csv", csv, "report.csv written by sweep")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "datagrad: " << e.what() << '\n';
    return kExitConfigError;
  }

  try {
    if (*train) return cmd_train(train_flags, out);
    if (*attack) return cmd_attack(attack_flags, attacker, phi, out);
    if (*sweep_cmd) return cmd_sweep(sweep_flags, defenders, attackers, out);
    return cmd_report(csv, out);
  } catch (const ConfigError& e) {
    err << "datagrad: config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const std::exception& e) {
    err << "datagrad: error: " << e.what() << '\n';
    return kExitRuntimeError;
  }
}

}  // namespace datagrad
