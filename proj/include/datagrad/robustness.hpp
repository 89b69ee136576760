#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "datagrad/data.hpp"
#include "datagrad/datagrad.hpp"
#include "datagrad/network.hpp"

namespace datagrad {

/// The attack magnitudes used throughout the evaluation tables.
inline const std::vector<double> kDefaultPhiGrid = {0.0, 0.005, 0.01, 0.05, 0.1};

struct AttackConfig {
  RegularizerKind kind = RegularizerKind::L1;  // L1 = sign ("Laplacian") noise
  std::vector<double> phi_grid = kDefaultPhiGrid;

  /// phi_grid must be non-negative, ascending and contain 0.
  void validate() const;
};

/// A model taking part in a sweep. Multi-task models take part through their
/// digit path, so attacks they drive come from the digit loss.
struct NamedModel {
  std::string id;
  NetworkParams net;
};

/// Per-sample data gradients of the attacker's loss at the true labels, one
/// row per test sample, computed in fixed-size chunks.
std::vector<double> attack_data_gradients(const NetworkParams& attacker, const Dataset& testset);

/// Adds phi * immediate_gradient(kind, data gradient) to each test image.
/// Labels are copied. No clipping.
Dataset generate_adversarial_testset(const NetworkParams& attacker, const Dataset& testset,
                                     RegularizerKind kind, double phi);

/// Same, reusing gradients from attack_data_gradients.
Dataset perturb_testset(const Dataset& testset, const std::vector<double>& data_gradients,
                        RegularizerKind kind, double phi);

/// Percentage of samples whose argmax prediction equals the label.
double evaluate_accuracy(const NetworkParams& defender, const Dataset& testset);

struct ReportRow {
  double phi = 0.0;
  std::optional<double> accuracy;  // empty when the cell failed
  std::string error;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct RobustnessReport {
  std::string defender;
  std::string attacker;
  std::vector<ReportRow> rows;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const RobustnessReport&, const RobustnessReport&) = default;
};

/// Every (defender, attacker) pair over the phi grid. Each adversarial set is
/// built once per (attacker, phi) and shared by all defenders. A failing cell
/// is recorded in its row and the sweep carries on.
std::vector<RobustnessReport> sweep(const std::vector<NamedModel>& defenders,
                                    const std::vector<NamedModel>& attackers,
                                    const AttackConfig& cfg, const Dataset& testset);

/// CSV with header `defender,attacker,phi,accuracy_pct` (accuracy to two
/// decimals, "failed" for failed cells) plus `<path>.meta.json` holding every
/// report's metadata and cell errors. Output depends only on the inputs.
void write_report(const std::vector<RobustnessReport>& reports,
                  const std::filesystem::path& path);

/// Reads the CSV and its sidecar back.
std::vector<RobustnessReport> read_report(const std::filesystem::path& path);

std::filesystem::path report_sidecar_path(const std::filesystem::path& csv_path);

}  // namespace datagrad
