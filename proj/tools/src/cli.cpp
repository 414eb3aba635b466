#include "recursim/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "recursim/bounds.hpp"
#include "recursim/errors.hpp"
#include "recursim/harness.hpp"
#include "recursim/io.hpp"
#include "recursim/plant_sim.hpp"
#include "recursim/pnlss.hpp"
#include "recursim/signals.hpp"
#include "recursim/sysid_linear.hpp"

namespace recursim::cli {
namespace {

// Problems with what the user asked for; mapped to the usage exit code.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string require_file(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw UsageError("cannot read '" + path + "'");
  return io::read_file(path);
}

SampledSignal read_signal(const std::string& path) {
  std::istringstream in(require_file(path));
  try {
    return io::read_signal_csv(in);
  } catch (const InvalidArgument& e) {
    throw UsageError(path + ": " + e.what());
  }
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    io::write_file(path, text);
  }
}

std::string signal_csv(const SampledSignal& s) {
  std::ostringstream os;
  io::write_signal_csv(os, s);
  return os.str();
}

struct GenerateArgs {
  std::string kind;
  double fs = 0.0;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double sigma = 1.0;
  std::size_t period = 0;
  double f_lo = 0.0;
  double f_hi = 0.0;
  double rms = 1.0;
  std::size_t periods = 1;
  std::string out;
};

struct SimulateArgs {
  std::string plant;
  std::string input;
  double fs_target = 0.0;
  std::uint64_t seed = 0;
  std::string out_u;
  std::string out_y;
};

struct IdentifyArgs {
  std::string model = "oe";
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::size_t nb = 2;
  std::size_t nf = 2;
  std::size_t nk = 0;
  std::size_t na = 2;
  int degree = 3;
  std::size_t max_iters = 100;
  bool force_direct_zero = false;
  std::string out;
};

struct BoundsArgs {
  double fc = 0.0;
  int n = 0;
  std::string grid;
  bool log = false;
  double g0 = 2.0 * std::numbers::pi * 1000.0;
};

struct SweepArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "report";
  std::size_t jobs = 1;
  bool strict = false;
};

struct ReportArgs {
  std::string dir;
  bool strict = false;
};

int run_generate(const GenerateArgs& a, std::ostream& out) {
  SampledSignal s = [&] {
    if (a.kind == "white") {
      if (a.n == 0) throw UsageError("--n is required for white noise");
      return signals::gen_white_noise(a.seed, a.n, a.sigma, a.fs);
    }
    signals::MultisineSpec spec;
    spec.period_len = a.period;
    spec.fs = a.fs;
    spec.f_lo = a.f_lo;
    spec.f_hi = a.f_hi;
    spec.rms_amplitude = a.rms;
    spec.seed = a.seed;
    spec.periods = a.periods;
    return signals::gen_odd_multisine(spec);
  }();
  emit(a.out, signal_csv(s), out);
  return kExitOk;
}

int run_simulate(const SimulateArgs& a, std::ostream& out) {
  const std::string text = require_file(a.plant);
  io::PlantConfig pc = io::plant_config_from_json(text);
  pc.chain.noise_seed = a.seed;
  const SampledSignal excitation = read_signal(a.input);
  const auto ch = plant::run_chain(pc.chain, pc.plant, excitation, a.fs_target);
  if (!a.out_u.empty()) io::write_file(a.out_u, signal_csv(ch.u));
  emit(a.out_y, signal_csv(ch.y), out);
  return kExitOk;
}

int run_identify(const IdentifyArgs& a, std::ostream& out, std::ostream& err) {
  if (a.inputs.size() != a.outputs.size() || a.inputs.empty()) {
    throw UsageError("give one --output per --input");
  }
  std::vector<SampledSignal> us;
  std::vector<SampledSignal> ys;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) {
    us.push_back(read_signal(a.inputs[i]));
    ys.push_back(read_signal(a.outputs[i]));
  }
  if (a.model == "oe") {
    if (us.size() != 1) throw UsageError("OE identification takes a single record");
    const auto fit = sysid::fit_oe(us[0], ys[0], a.nb, a.nf, a.nk);
    emit(a.out, io::oe_model_to_json(fit.model) + "\n", out);
    if (!a.out.empty()) {
      out << io::fit_report_csv_header() << '\n'
          << io::fit_report_csv_row(us[0].fs(), a.nk, fit.report) << '\n';
    }
    err << "rmse " << fit.report.rmse << " V after " << fit.report.iterations << " iterations"
        << (fit.report.converged ? "" : " (not converged)") << '\n';
    return kExitOk;
  }
  pnlss::PnlssFitConfig cfg;
  cfg.na = a.na;
  cfg.degree = a.degree;
  cfg.max_iters = a.max_iters;
  cfg.force_direct_zero = a.force_direct_zero;
  const auto fit = pnlss::fit_pnlss(us, ys, cfg);
  emit(a.out, io::pnlss_model_to_json(fit.model) + "\n", out);
  err << "train relative error " << 20.0 * std::log10(fit.train_metrics.y_relative) << " dB";
  if (fit.validation) err << ", validation " << 20.0 * std::log10(fit.validation->y_relative) << " dB";
  err << '\n';
  return kExitOk;
}

int run_bounds(const BoundsArgs& a, std::ostream& out) {
  std::vector<double> grid;
  try {
    grid = parse_range(a.grid, a.log);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  std::ostringstream os;
  os << "fs_hz,pu_eps_v2,py_eps_v2,rmse_bound_v\n";
  for (double fs : grid) {
    const double pu = bounds::unexplained_power(a.fc, fs, a.n);
    const double py = bounds::output_error_power(a.g0, fs, pu);
    os << io::format_double(fs) << ',' << io::format_double(pu) << ',' << io::format_double(py) << ','
       << io::format_double(std::sqrt(py)) << '\n';
  }
  out << os.str();
  return kExitOk;
}

int run_sweep(const SweepArgs& a, std::ostream& err) {
  const std::string text = require_file(a.config);
  harness::ExperimentConfig cfg;
  try {
    cfg = harness::config_from_json(text);
    if (a.seed) cfg.seed = *a.seed;
    cfg.jobs = a.jobs;
    harness::validate(cfg);
  } catch (const InvalidArgument& e) {
    throw UsageError(a.config + ": " + e.what());
  }
  const auto report = harness::run(cfg);
  harness::write_report(report, a.out);
  for (const auto& c : report.checks) {
    err << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
  }
  err << report.rows.size() << " rows, " << report.failed_cells() << " failed cells, written to " << a.out
      << '\n';
  if (report.failed_cells() > 0) return kExitFailure;
  if (a.strict && !report.passed()) return kExitFailure;
  return kExitOk;
}

int run_report(const ReportArgs& a, std::ostream& out) {
  const std::string path = (std::filesystem::path(a.dir) / "report.json").string();
  const std::string text = require_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
  std::ostringstream os;
  os << "name,passed,detail\n";
  for (const auto& c : j.at("checks")) {
    std::string detail = c.at("detail").get<std::string>();
    for (char& ch : detail) {
      if (ch == ',') ch = ';';
    }
    os << c.at("name").get<std::string>() << ',' << (c.at("passed").get<bool>() ? "true" : "false") << ','
       << detail << '\n';
  }
  out << os.str();
  if (a.strict && !j.at("passed").get<bool>()) return kExitFailure;
  return kExitOk;
}

}  // namespace

std::vector<double> parse_range(const std::string& spec, bool log_spaced) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.size() != 3) throw InvalidArgument("range must look like start:stop:count");
  double start = 0.0;
  double stop = 0.0;
  long long count = 0;
  try {
    std::size_t used = 0;
    start = std::stod(parts[0], &used);
    if (used != parts[0].size()) throw InvalidArgument("bad range start");
    stop = std::stod(parts[1], &used);
    if (used != parts[1].size()) throw InvalidArgument("bad range stop");
    count = std::stoll(parts[2], &used);
    if (used != parts[2].size()) throw InvalidArgument("bad range count");
  } catch (const std::logic_error&) {
    throw InvalidArgument("range must look like start:stop:count");
  }
  if (count < 1) throw InvalidArgument("range count must be at least 1");
  if (log_spaced && !(start > 0.0 && stop > 0.0)) throw InvalidArgument("log range needs positive ends");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
    out.push_back(log_spaced ? start * std::pow(stop / start, t) : start + (stop - start) * t);
  }
  if (count > 1) out.back() = stop;
  return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Band-limited sampling experiments: signal generation, simulation, identification"};
  app.name("recursim");
  app.require_subcommand(1, 1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write an excitation signal as CSV");
  g->add_option("--kind", gen.kind, "white | multisine")->required()->check(CLI::IsMember({"white", "multisine"}));
  g->add_option("--fs", gen.fs, "Sampling rate [Hz]")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--n", gen.n, "Samples (white)");
  g->add_option("--sigma", gen.sigma, "Standard deviation (white)");
  g->add_option("--period", gen.period, "Period length in samples (multisine)");
  g->add_option("--f-lo", gen.f_lo, "Lowest excited frequency [Hz]");
  g->add_option("--f-hi", gen.f_hi, "Highest excited frequency [Hz]");
  g->add_option("--rms", gen.rms, "RMS amplitude [V]");
  g->add_option("--periods", gen.periods, "Number of periods");
  g->add_option("--out", gen.out, "Output CSV (stdout when omitted)");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run generator filter and plant on an excitation");
  s->add_option("--plant", sim.plant, "Plant JSON")->required();
  s->add_option("--input", sim.input, "Excitation CSV")->required();
  s->add_option("--fs-target", sim.fs_target, "Acquisition rate [Hz]")->required();
  s->add_option("--seed", sim.seed, "Noise seed");
  s->add_option("--out-u", sim.out_u, "Sampled plant input CSV");
  s->add_option("--out-y", sim.out_y, "Sampled plant output CSV (stdout when omitted)");

  IdentifyArgs idf;
  auto* id = app.add_subcommand("identify", "Fit an OE or PNLSS model");
  id->add_option("--model", idf.model, "oe | pnlss")->check(CLI::IsMember({"oe", "pnlss"}));
  id->add_option("--input", idf.inputs, "Input CSV (repeat for realizations)")->required();
  id->add_option("--output", idf.outputs, "Output CSV (repeat for realizations)")->required();
  id->add_option("--nb", idf.nb, "OE numerator coefficients");
  id->add_option("--nf", idf.nf, "OE denominator order");
  id->add_option("--nk", idf.nk, "OE delay, 0 or 1");
  id->add_option("--na", idf.na, "PNLSS state dimension");
  id->add_option("--degree", idf.degree, "PNLSS maximum monomial degree");
  id->add_option("--max-iters", idf.max_iters, "PNLSS iteration cap");
  id->add_flag("--force-direct-zero", idf.force_direct_zero, "PNLSS without direct feed-through");
  id->add_option("--out", idf.out, "Model JSON (stdout when omitted)");

  BoundsArgs bnd;
  auto* b = app.add_subcommand("bounds", "Tabulate error bounds over a sampling-rate grid");
  b->add_option("--fc", bnd.fc, "Generator cutoff [Hz]")->required();
  b->add_option("--n", bnd.n, "Generator order")->required();
  b->add_option("--fs-grid", bnd.grid, "start:stop:count")->required();
  b->add_flag("--log", bnd.log, "Logarithmic spacing");
  b->add_option("--g0", bnd.g0, "Plant impulse response at t=0+ [1/s]");

  SweepArgs swp;
  auto* w = app.add_subcommand("sweep", "Run an experiment from a config file");
  w->add_option("--config", swp.config, "Experiment config JSON")->required();
  w->add_option("--seed", swp.seed, "Root seed, overrides the config");
  w->add_option("--out", swp.out, "Report directory");
  w->add_option("--jobs", swp.jobs, "Parallel sweep cells")->check(CLI::PositiveNumber);
  w->add_flag("--strict", swp.strict, "Exit 2 when any check fails");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Print the checks of a report directory as CSV");
  r->add_option("--dir", rep.dir, "Report directory")->required();
  r->add_flag("--strict", rep.strict, "Exit 2 when any check failed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (g->parsed()) return run_generate(gen, out);
    if (s->parsed()) return run_simulate(sim, out);
    if (id->parsed()) return run_identify(idf, out, err);
    if (b->parsed()) return run_bounds(bnd, out);
    if (w->parsed()) return run_sweep(swp, err);
    if (r->parsed()) return run_report(rep, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace recursim::cli
