#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "recursim/bounds.hpp"
#include "recursim/plant_sim.hpp"
#include "recursim/signals.hpp"

namespace recursim::harness {

enum class Experiment { kPredictionSweep, kOeSweep, kPnlssSweep, kAliasingStudy };

Experiment parse_experiment(const std::string& name);
std::string experiment_name(Experiment e);

struct GeneratorSpec {
  int order = 4;
  double fc_hz = 100.0;
};

struct MultisineDesign {
  std::size_t realizations = 5;
  std::size_t periods = 2;            // measured periods per realization
  std::size_t transient_periods = 1;  // simulated and discarded
  double period_s = 1.0;
  double f_lo = 0.0;
  double f_hi = 100.0;
  double rms = 0.127;
};

struct PnlssDesign {
  std::size_t na = 2;
  int degree = 3;
  std::size_t max_iters = 100;
  bool force_direct_zero = true;
  double cubic_fraction = 0.1;  // used when the Duffing plant is calibrated
};

struct ExperimentConfig {
  Experiment experiment = Experiment::kOeSweep;
  std::uint64_t seed = 1;
  /// Plant under test; empty selects the experiment default (first-order
  /// 1 kHz low-pass, or a calibrated Silverbox-like Duffing oscillator).
  std::optional<Plant> plant;
  GeneratorSpec generator;
  std::size_t oversample = 32;
  std::vector<double> fs_grid;
  /// Generator bandwidths swept by the prediction experiment.
  std::vector<double> bandwidth_grid;
  /// AR orders for the prediction experiment.
  std::vector<std::size_t> orders;
  /// Prediction: samples per cell. OE: samples of the base acquisition.
  std::size_t record_length = 16384;
  double noise_u = 0.0;
  double noise_y = 0.0;
  /// OE slope fit skips points within this many dB of the noise floor.
  double floor_margin_db = 10.0;
  /// Fraction of the new Nyquist rate passed by the aliasing-study prefilter.
  double alias_cutoff_fraction = 0.5;
  MultisineDesign multisine;
  PnlssDesign pnlss;
  std::size_t jobs = 1;  // not part of the identity of a run
};

/// Defaults for the given experiment (grids, orders, record length).
ExperimentConfig default_config(Experiment e);
/// Missing keys keep `default_config` values.
ExperimentConfig config_from_json(const std::string& text);
/// Canonical form: every field, defaults applied, `jobs` omitted.
std::string config_to_json(const ExperimentConfig& c);
/// Throws InvalidArgument when grids are empty or rates do not divide.
void validate(const ExperimentConfig& c);
/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const ExperimentConfig& c);

/// Deterministic per-cell seed from the root seed and cell coordinates.
std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> coords);

struct Row {
  std::string cell;
  bool ok = true;
  std::string error;
  std::map<std::string, double> values;
};

struct SlopeRecord {
  std::string label;
  bounds::SlopeFit fit;
  std::size_t points = 0;
  double expected = 0.0;  // dB/decade
};

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentReport {
  Experiment experiment = Experiment::kOeSweep;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string config_json;
  std::vector<std::string> columns;
  std::vector<Row> rows;
  std::vector<SlopeRecord> slopes;
  std::vector<Check> checks;
  std::map<std::string, signals::SpectrumEstimate> spectra;
  std::map<std::string, std::string> models;  // name -> JSON

  bool passed() const;
  std::size_t failed_cells() const;
  const Check* find_check(const std::string& name) const;
};

ExperimentReport run_prediction_sweep(const ExperimentConfig& c);
ExperimentReport run_oe_sweep(const ExperimentConfig& c);
ExperimentReport run_pnlss_sweep(const ExperimentConfig& c);
ExperimentReport run_aliasing_study(const ExperimentConfig& c);
ExperimentReport run(const ExperimentConfig& c);

/// Mean-square difference between prefiltered and plain decimation by `factor`.
double aliasing_power(const SampledSignal& y, std::size_t factor, double cutoff_fraction = 0.5);

/// Writes report.json, rows.csv, spectra/*.csv and models/*.json under `dir`.
void write_report(const ExperimentReport& r, const std::string& dir);
std::string rows_csv(const ExperimentReport& r);
std::string report_json(const ExperimentReport& r);

}  // namespace recursim::harness
