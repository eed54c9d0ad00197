#include "cvfm/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cvfm {

namespace fs = std::filesystem;

namespace {

struct HyperField {
  const char* name;
  double HyperConfig::*real;
  int HyperConfig::*integer;
};

const std::vector<HyperField>& hyper_fields() {
  static const std::vector<HyperField> fields{
      {"K", nullptr, &HyperConfig::K},
      {"a_phi", &HyperConfig::a_phi, nullptr},
      {"a_tau", &HyperConfig::a_tau, nullptr},
      {"b_tau", &HyperConfig::b_tau, nullptr},
      {"a_sigma", &HyperConfig::a_sigma, nullptr},
      {"b_sigma", &HyperConfig::b_sigma, nullptr},
      {"u2_beta", &HyperConfig::u2_beta, nullptr},
      {"nu_alpha", &HyperConfig::nu_alpha, nullptr},
      {"nu_r", &HyperConfig::nu_r, nullptr},
      {"u2_alpha", &HyperConfig::u2_alpha, nullptr},
      {"u_r2", &HyperConfig::u_r2, nullptr},
      {"u2_xi_r", &HyperConfig::u2_xi_r, nullptr},
      {"c_alpha", &HyperConfig::c_alpha, nullptr},
      {"c_r", &HyperConfig::c_r, nullptr},
      {"a_omega_alpha", &HyperConfig::a_omega_alpha, nullptr},
      {"b_omega_alpha", &HyperConfig::b_omega_alpha, nullptr},
      {"a_omega_r", &HyperConfig::a_omega_r, nullptr},
      {"b_omega_r", &HyperConfig::b_omega_r, nullptr},
      {"L_alpha", nullptr, &HyperConfig::L_alpha},
      {"L_r", nullptr, &HyperConfig::L_r},
  };
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& v, const std::string& where) {
  double x = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x))
    throw ParseError(where + ": expected a number, got '" + v + "'");
  return x;
}

long to_long(const std::string& v, const std::string& where) {
  long x = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(where + ": expected an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError(where + ": expected true or false, got '" + v + "'");
}

fs::path resolve(const fs::path& base, const std::string& v) {
  const fs::path p(v);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

bool is_hyper_key(const std::string& key) {
  for (const auto& f : hyper_fields())
    if (key == f.name) return true;
  return false;
}

void apply_hyper_override(HyperConfig& h, const std::string& key, double value) {
  for (const auto& f : hyper_fields()) {
    if (key != f.name) continue;
    if (f.integer) {
      if (value != std::floor(value)) throw ContractError("hyperparameter " + key + " must be an integer");
      h.*(f.integer) = static_cast<int>(value);
    } else {
      h.*(f.real) = value;
    }
    return;
  }
  throw ContractError("unknown hyperparameter '" + key + "'");
}

RunConfig parse_config_text(const std::string& text, const fs::path& base, const std::string& source) {
  RunConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ParseError(where + ": expected 'key = value'");
    if (!seen.insert(key).second) throw ParseError(where + ": key '" + key + "' given twice");

    if (key == "counts") {
      c.counts = resolve(base, value);
    } else if (key == "design") {
      c.design = resolve(base, value);
    } else if (key == "out") {
      c.out = resolve(base, value);
    } else if (key == "subject_column") {
      c.subject_column = value;
    } else if (key.rfind("role.", 0) == 0 && key.size() > 5) {
      try {
        c.roles[key.substr(5)] = parse_role(value);
      } catch (const std::exception& e) {
        throw ParseError(where + ": " + e.what());
      }
    } else if (key == "seed") {
      const long s = to_long(value, where);
      if (s < 0) throw ParseError(where + ": seed must be non-negative");
      c.sampler.seed = static_cast<std::uint64_t>(s);
    } else if (key == "chains") {
      c.chains = static_cast<int>(to_long(value, where));
    } else if (key == "threads") {
      c.threads = static_cast<int>(to_long(value, where));
    } else if (key == "iters") {
      c.sampler.n_iter = to_long(value, where);
    } else if (key == "burn") {
      c.sampler.n_burn = to_long(value, where);
    } else if (key == "thin") {
      c.sampler.thin = to_long(value, where);
    } else if (key == "adapt") {
      c.sampler.adapt.enabled = to_bool(value, where);
    } else if (key == "adapt_start") {
      c.sampler.adapt.start = to_long(value, where);
    } else if (key == "omega_step") {
      c.sampler.omega_step = to_real(value, where);
    } else if (is_hyper_key(key)) {
      c.hyper_overrides[key] = to_real(value, where);
    } else {
      throw ParseError(where + ": unknown key '" + key + "'");
    }
  }
  return c;
}

RunConfig parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.parent_path(), path.string());
}

FitInputs load_fit_inputs(const RunConfig& c) {
  require(!c.counts.empty(), "config does not name a count table ('counts = ...')");
  require(!c.design.empty(), "config does not name a design table ('design = ...')");
  if (!fs::exists(c.counts)) throw ParseError("count table not found: " + c.counts.string());
  if (!fs::exists(c.design)) throw ParseError("design table not found: " + c.design.string());
  FitInputs in;
  in.counts = read_counts_csv(c.counts, c.subject_column);
  in.design = read_design_csv(c.design);
  for (const auto& [name, role] : c.roles) {
    bool found = false;
    for (std::size_t k = 0; k < in.design.names.size(); ++k)
      if (in.design.names[k] == name) {
        in.design.roles[k] = role;
        found = true;
      }
    if (!found) throw ParseError("role given for '" + name + "', which is not a column of " + c.design.string());
  }
  in.data = ModelData::build(in.counts, in.design, c.subject_column.has_value());
  in.hyper = default_hypers(in.counts);
  for (const auto& [key, value] : c.hyper_overrides) apply_hyper_override(in.hyper, key, value);
  in.hyper.validate();
  return in;
}

}  // namespace cvfm
