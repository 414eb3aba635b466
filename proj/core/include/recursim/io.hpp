#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "recursim/plant_sim.hpp"
#include "recursim/pnlss.hpp"
#include "recursim/signals.hpp"
#include "recursim/sysid_linear.hpp"

namespace recursim::io {

/// `index,time_s,value_v`, one row per sample.
void write_signal_csv(std::ostream& os, const SampledSignal& s);
/// Sampling rate comes from the time column unless `fs` is given; a one-row
/// file requires it.
SampledSignal read_signal_csv(std::istream& is, std::optional<double> fs = std::nullopt);

/// `freq_hz,power_db`.
void write_spectrum_csv(std::ostream& os, const signals::SpectrumEstimate& s);

/// `{"type":"oe","nb":..,"nf":..,"nk":..,"b":[..],"f":[..]}`
std::string oe_model_to_json(const sysid::OeModel& m);
sysid::OeModel oe_model_from_json(const std::string& text);

std::string pnlss_model_to_json(const pnlss::PnlssModel& m);
pnlss::PnlssModel pnlss_model_from_json(const std::string& text);

/// Header and row of the fit-report table.
std::string fit_report_csv_header();
std::string fit_report_csv_row(double fs_hz, std::size_t nk, const sysid::FitReport& r);

struct PlantConfig {
  Plant plant;
  plant::SimChainConfig chain;
};

/// Keys: `type` ("lti" | "duffing"); `num`/`den` or `m`,`d`,`k1`,`k3`;
/// `generator_filter: {order, fc_hz}`; `oversample`; optional `noise_u`, `noise_y`.
PlantConfig plant_config_from_json(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

/// Shortest round-trippable decimal form.
std::string format_double(double v);

}  // namespace recursim::io
