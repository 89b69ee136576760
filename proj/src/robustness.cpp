#include "datagrad/robustness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "datagrad/checkpoint.hpp"
#include "datagrad/errors.hpp"
#include "datagrad/io.hpp"
#include "internal.hpp"

namespace datagrad {

namespace {

constexpr std::size_t kChunk = 500;

std::string format_phi(double phi) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, phi);
  return std::string(buf, res.ptr);
}

std::string format_accuracy(double pct) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", pct);
  return buf;
}

double parse_double(std::string_view text, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw FormatError(where + ": cannot parse number '" + std::string(text) + "'");
  return v;
}

void check_dims(const NetworkParams& model, const Dataset& testset, const char* role) {
  if (model.input_dim() != testset.dim)
    throw InvalidArgument(std::string(role) + " expects " + std::to_string(model.input_dim()) +
                          "-dimensional inputs, test set has " + std::to_string(testset.dim));
}

Batch chunk_of(const Dataset& ds, std::size_t start, std::size_t end) {
  std::vector<std::size_t> idx(end - start);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + i;
  return gather(ds, idx);
}

std::string testset_digest(const Dataset& ds) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(ds.pixels.size() * 8 + ds.labels.size());
  for (double p : ds.pixels) {
    const auto bits = std::bit_cast<std::uint64_t>(p);
    for (int s = 0; s < 64; s += 8) bytes.push_back(static_cast<std::uint8_t>(bits >> s));
  }
  for (Label l : ds.labels) bytes.push_back(static_cast<std::uint8_t>(l));
  return sha256_hex(bytes);
}

}  // namespace

void AttackConfig::validate() const {
  if (phi_grid.empty()) throw InvalidArgument("phi grid is empty");
  if (std::find(phi_grid.begin(), phi_grid.end(), 0.0) == phi_grid.end())
    throw InvalidArgument("phi grid must contain 0");
  for (std::size_t i = 0; i < phi_grid.size(); ++i) {
    if (!(phi_grid[i] >= 0.0) || !std::isfinite(phi_grid[i]))
      throw InvalidArgument("phi grid values must be finite and >= 0");
    if (i > 0 && !(phi_grid[i] > phi_grid[i - 1]))
      throw InvalidArgument("phi grid must be strictly ascending");
  }
}

std::vector<double> attack_data_gradients(const NetworkParams& attacker, const Dataset& testset) {
  check_dims(attacker, testset, "attacker");
  std::vector<double> grads(testset.pixels.size());
  for (std::size_t start = 0; start < testset.size(); start += kChunk) {
    const std::size_t end = std::min(testset.size(), start + kChunk);
    const Batch b = chunk_of(testset, start, end);
    const BatchTrace trace = forward_batch(attacker, b.inputs);
    const BatchGradients g =
        backward_batch(attacker, trace, softmax_residual(trace.activations.back(), b.labels),
                       {.want_data_gradient = true, .want_weight_grads = false});
    std::copy(g.data_gradient->span().begin(), g.data_gradient->span().end(),
              grads.begin() + static_cast<std::ptrdiff_t>(start * testset.dim));
  }
  return grads;
}

Dataset perturb_testset(const Dataset& testset, const std::vector<double>& data_gradients,
                        RegularizerKind kind, double phi) {
  if (data_gradients.size() != testset.pixels.size())
    throw InvalidArgument("perturb_testset: gradient buffer does not match the test set");
  if (!std::isfinite(phi)) throw InvalidArgument("perturb_testset: phi must be finite");
  Dataset out = testset;
  std::vector<double> y(testset.dim);
  for (std::size_t i = 0; i < testset.size(); ++i) {
    const std::span<const double> g(data_gradients.data() + i * testset.dim, testset.dim);
    detail::immediate_gradient_into(kind, g, y);
    auto img = out.image(i);
    for (std::size_t c = 0; c < img.size(); ++c) img[c] += phi * y[c];
  }
  return out;
}

Dataset generate_adversarial_testset(const NetworkParams& attacker, const Dataset& testset,
                                     RegularizerKind kind, double phi) {
  return perturb_testset(testset, attack_data_gradients(attacker, testset), kind, phi);
}

double evaluate_accuracy(const NetworkParams& defender, const Dataset& testset) {
  if (testset.empty()) throw InvalidArgument("evaluate_accuracy: empty test set");
  check_dims(defender, testset, "defender");
  std::size_t correct = 0;
  for (std::size_t start = 0; start < testset.size(); start += kChunk) {
    const std::size_t end = std::min(testset.size(), start + kChunk);
    const Batch b = chunk_of(testset, start, end);
    const BatchTrace trace = forward_batch(defender, b.inputs);
    const Matrix& probs = trace.activations.back();
    for (std::size_t r = 0; r < b.size(); ++r)
      if (argmax(probs.row(r)) == b.labels[r]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(testset.size());
}

std::vector<RobustnessReport> sweep(const std::vector<NamedModel>& defenders,
                                    const std::vector<NamedModel>& attackers,
                                    const AttackConfig& cfg, const Dataset& testset) {
  if (defenders.empty() || attackers.empty())
    throw InvalidArgument("sweep: need at least one defender and one attacker");
  cfg.validate();

  std::string grid;
  for (double phi : cfg.phi_grid) grid += (grid.empty() ? "" : ";") + format_phi(phi);
  const std::string test_digest = testset_digest(testset);
  auto model_digest = [](const NamedModel& m) {
    try {
      return sha256_hex(encode_checkpoint(m.net));
    } catch (const std::exception&) {
      return std::string("invalid");
    }
  };
  std::vector<std::string> defender_digests, attacker_digests;
  for (const auto& d : defenders) defender_digests.push_back(model_digest(d));
  for (const auto& a : attackers) attacker_digests.push_back(model_digest(a));

  // reports[d * attackers + a]
  std::vector<RobustnessReport> reports;
  for (std::size_t d = 0; d < defenders.size(); ++d) {
    for (std::size_t a = 0; a < attackers.size(); ++a) {
      RobustnessReport r;
      r.defender = defenders[d].id;
      r.attacker = attackers[a].id;
      r.rows.reserve(cfg.phi_grid.size());
      for (double phi : cfg.phi_grid) r.rows.push_back(ReportRow{phi, std::nullopt, {}});
      r.metadata = {
          {"attack_kind", std::string(to_string(cfg.kind))},
          {"attack_label", "true"},
          {"phi_grid", grid},
          {"testset_samples", std::to_string(testset.size())},
          {"testset_sha256", test_digest},
          {"defender_sha256", defender_digests[d]},
          {"attacker_sha256", attacker_digests[a]},
          {"provenance", "sha256:" + sha256_hex(defender_digests[d] + attacker_digests[a] +
                                                test_digest + grid)
                                         .substr(0, 16)},
      };
      reports.push_back(std::move(r));
    }
  }

  for (std::size_t a = 0; a < attackers.size(); ++a) {
    std::vector<double> grads;
    std::string attacker_error;
    try {
      grads = attack_data_gradients(attackers[a].net, testset);
    } catch (const std::exception& e) {
      attacker_error = e.what();
    }
    for (std::size_t p = 0; p < cfg.phi_grid.size(); ++p) {
      std::optional<Dataset> adversarial;
      std::string cell_error = attacker_error;
      if (cell_error.empty()) {
        try {
          adversarial = perturb_testset(testset, grads, cfg.kind, cfg.phi_grid[p]);
        } catch (const std::exception& e) {
          cell_error = e.what();
        }
      }
      for (std::size_t d = 0; d < defenders.size(); ++d) {
        ReportRow& row = reports[d * attackers.size() + a].rows[p];
        if (!adversarial) {
          row.error = cell_error;
          continue;
        }
        try {
          row.accuracy = evaluate_accuracy(defenders[d].net, *adversarial);
        } catch (const std::exception& e) {
          row.error = e.what();
        }
      }
    }
  }
  return reports;
}

std::filesystem::path report_sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p += ".meta.json";
  return p;
}

void write_report(const std::vector<RobustnessReport>& reports,
                  const std::filesystem::path& path) {
  std::ostringstream csv;
  csv << "defender,attacker,phi,accuracy_pct\n";
  nlohmann::json meta;
  meta["format"] = "datagrad-robustness-report";
  meta["version"] = 1;
  meta["columns"] = {"defender", "attacker", "phi", "accuracy_pct"};
  meta["reports"] = nlohmann::json::array();
  for (const auto& r : reports) {
    for (const std::string* id : {&r.defender, &r.attacker})
      if (id->empty() || id->find_first_of(",\n\r\"") != std::string::npos)
        throw InvalidArgument("write_report: model id '" + *id +
                              "' is empty or contains CSV delimiters");
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& row : r.rows) {
      csv << r.defender << ',' << r.attacker << ',' << format_phi(row.phi) << ','
          << (row.accuracy ? format_accuracy(*row.accuracy) : std::string("failed")) << '\n';
      errors.push_back(row.error);
    }
    meta["reports"].push_back({{"defender", r.defender},
                               {"attacker", r.attacker},
                               {"metadata", r.metadata},
                               {"cell_errors", errors}});
  }
  write_file_atomic(path, csv.str());
  write_file_atomic(report_sidecar_path(path), meta.dump(2) + "\n");
}

std::vector<RobustnessReport> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "defender,attacker,phi,accuracy_pct")
    throw FormatError(path.string() + ": missing or unexpected CSV header");

  std::vector<RobustnessReport> reports;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 4) throw FormatError(where + ": expected 4 fields");
    if (reports.empty() || reports.back().defender != fields[0] ||
        reports.back().attacker != fields[1]) {
      reports.push_back(RobustnessReport{fields[0], fields[1], {}, {}});
    }
    ReportRow row;
    row.phi = parse_double(fields[2], where);
    if (fields[3] != "failed") row.accuracy = parse_double(fields[3], where);
    reports.back().rows.push_back(row);
  }

  const auto sidecar = report_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    const auto meta = nlohmann::json::parse(std::ifstream(sidecar), nullptr, false);
    if (meta.is_discarded() || !meta.contains("reports"))
      throw FormatError(sidecar.string() + ": invalid metadata sidecar");
    const auto& entries = meta["reports"];
    if (entries.size() != reports.size())
      throw FormatError(sidecar.string() + ": report count does not match the CSV");
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const auto& e = entries[i];
      reports[i].metadata = e.value("metadata", std::map<std::string, std::string>{});
      const auto errors = e.value("cell_errors", std::vector<std::string>{});
      for (std::size_t j = 0; j < errors.size() && j < reports[i].rows.size(); ++j)
        reports[i].rows[j].error = errors[j];
    }
  }
  return reports;
}

}  // namespace datagrad
