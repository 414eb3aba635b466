#include "recursim/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "recursim/errors.hpp"

namespace recursim::io {
namespace {

using nlohmann::json;

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed JSON: ") + e.what());
  }
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \r\t", used) != std::string::npos) {
      throw InvalidArgument("bad number '" + s + "'");
    }
    return v;
  } catch (const std::logic_error&) {
    throw InvalidArgument("bad number '" + s + "'");
  }
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) {
    throw InvalidArgument(std::string("matrix '") + name + "' has the wrong row count");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = j[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) {
      throw InvalidArgument(std::string("matrix '") + name + "' has the wrong column count");
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json basis_json(const pnlss::MonomialBasis& b) {
  json arr = json::array();
  for (const auto& e : b.exponents()) arr.push_back(e);
  return arr;
}

pnlss::MonomialBasis basis_from(const json& j, std::size_t na, int degree) {
  std::vector<pnlss::Exponents> exps;
  for (const auto& e : j) exps.push_back(e.get<pnlss::Exponents>());
  return pnlss::MonomialBasis(na, degree, std::move(exps));
}

}  // namespace

std::string format_double(double v) {
  // Shortest round-trip text; plain decimals inside the usual engineering range.
  char buf[64];
  const double a = std::abs(v);
  const bool plain = a == 0.0 || (a >= 1e-4 && a < 1e15);
  auto res = plain ? std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed)
                   : std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_signal_csv(std::ostream& os, const SampledSignal& s) {
  os << "index,time_s,value_v\n";
  for (std::size_t i = 0; i < s.size(); ++i) {
    os << i << ',' << format_double(static_cast<double>(i) / s.fs()) << ',' << format_double(s[i]) << '\n';
  }
}

SampledSignal read_signal_csv(std::istream& is, std::optional<double> fs) {
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("empty signal CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "index,time_s,value_v") throw InvalidArgument("signal CSV header must be index,time_s,value_v");
  std::vector<double> t;
  std::vector<double> v;
  while (std::getline(is, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != 3) throw InvalidArgument("signal CSV rows need three columns");
    t.push_back(to_double(cells[1]));
    v.push_back(to_double(cells[2]));
  }
  if (v.empty()) throw InvalidArgument("signal CSV has no samples");
  double rate = 0.0;
  if (fs) {
    rate = *fs;
  } else {
    if (t.size() < 2) throw InvalidArgument("cannot infer the sampling rate from one sample");
    rate = static_cast<double>(t.size() - 1) / (t.back() - t.front());
  }
  return SampledSignal(std::move(v), rate);
}

void write_spectrum_csv(std::ostream& os, const signals::SpectrumEstimate& s) {
  os << "freq_hz,power_db\n";
  for (std::size_t k = 0; k < s.freqs.size(); ++k) {
    const double db = 10.0 * std::log10(std::max(s.power[k], 1e-300));
    os << format_double(s.freqs[k]) << ',' << format_double(db) << '\n';
  }
}

std::string oe_model_to_json(const sysid::OeModel& m) {
  json j;
  j["type"] = "oe";
  j["nb"] = m.nb;
  j["nf"] = m.nf;
  j["nk"] = m.nk;
  j["b"] = m.b;
  j["f"] = m.f;
  return j.dump(2);
}

sysid::OeModel oe_model_from_json(const std::string& text) {
  const json j = parse(text);
  try {
    if (j.at("type").get<std::string>() != "oe") throw InvalidArgument("model type is not 'oe'");
    sysid::OeModel m;
    m.nb = j.at("nb").get<std::size_t>();
    m.nf = j.at("nf").get<std::size_t>();
    m.nk = j.at("nk").get<std::size_t>();
    m.b = j.at("b").get<std::vector<double>>();
    m.f = j.at("f").get<std::vector<double>>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad OE model JSON: ") + e.what());
  }
}

std::string pnlss_model_to_json(const pnlss::PnlssModel& m) {
  json j;
  j["type"] = "pnlss";
  j["na"] = m.na();
  j["P"] = m.basis_state.max_degree();
  j["A"] = matrix_json(m.A);
  j["B"] = std::vector<double>(m.B.data(), m.B.data() + m.B.size());
  j["C"] = std::vector<double>(m.C.data(), m.C.data() + m.C.size());
  j["D"] = m.D;
  j["E"] = matrix_json(m.E);
  j["F"] = std::vector<double>(m.F.data(), m.F.data() + m.F.size());
  j["basis"] = {{"state", basis_json(m.basis_state)}, {"out", basis_json(m.basis_out)}};
  return j.dump(2);
}

pnlss::PnlssModel pnlss_model_from_json(const std::string& text) {
  const json j = parse(text);
  try {
    if (j.at("type").get<std::string>() != "pnlss") throw InvalidArgument("model type is not 'pnlss'");
    const auto na = j.at("na").get<std::size_t>();
    const int degree = j.at("P").get<int>();
    const auto n = static_cast<Eigen::Index>(na);
    pnlss::PnlssModel m;
    m.basis_state = basis_from(j.at("basis").at("state"), na, degree);
    m.basis_out = basis_from(j.at("basis").at("out"), na, degree);
    m.A = matrix_from(j.at("A"), n, n, "A");
    const auto b = j.at("B").get<std::vector<double>>();
    const auto c = j.at("C").get<std::vector<double>>();
    const auto f = j.at("F").get<std::vector<double>>();
    if (b.size() != na || c.size() != na) throw InvalidArgument("B and C must have na entries");
    m.B = Eigen::Map<const Eigen::VectorXd>(b.data(), n);
    m.C = Eigen::Map<const Eigen::RowVectorXd>(c.data(), n);
    m.D = j.at("D").get<double>();
    m.E = matrix_from(j.at("E"), n, static_cast<Eigen::Index>(m.basis_state.size()), "E");
    m.F = Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
    m.check_dimensions();
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad PNLSS model JSON: ") + e.what());
  }
}

std::string fit_report_csv_header() { return "fs_hz,nk,rmse_v,relative_rmse_db,iterations,converged"; }

std::string fit_report_csv_row(double fs_hz, std::size_t nk, const sysid::FitReport& r) {
  std::ostringstream os;
  os << format_double(fs_hz) << ',' << nk << ',' << format_double(r.rmse) << ','
     << format_double(20.0 * std::log10(r.relative_rmse)) << ',' << r.iterations << ','
     << (r.converged ? "true" : "false");
  return os.str();
}

PlantConfig plant_config_from_json(const std::string& text) {
  const json j = parse(text);
  try {
    const std::string type = j.at("type").get<std::string>();
    plant::SimChainConfig chain;
    if (j.contains("generator_filter")) {
      const json& g = j.at("generator_filter");
      chain.generator_filter = plant::butterworth_lowpass(g.at("order").get<int>(), g.at("fc_hz").get<double>());
    }
    chain.oversample = j.value("oversample", std::size_t{32});
    chain.noise_u_sigma = j.value("noise_u", 0.0);
    chain.noise_y_sigma = j.value("noise_y", 0.0);
    if (type == "lti") {
      return {LtiPlant(j.at("num").get<std::vector<double>>(), j.at("den").get<std::vector<double>>()), chain};
    }
    if (type == "duffing") {
      DuffingPlant d;
      d.m = j.at("m").get<double>();
      d.d = j.at("d").get<double>();
      d.k1 = j.at("k1").get<double>();
      d.k3 = j.at("k3").get<double>();
      d.validate();
      return {d, chain};
    }
    throw InvalidArgument("plant type must be 'lti' or 'duffing'");
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad plant config: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

}  // namespace recursim::io
