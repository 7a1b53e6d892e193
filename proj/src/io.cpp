#include "difflab/io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace difflab {
namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json params_to_json(const Vec& v) {
  json arr = json::array();
  for (double x : v) arr.push_back(hex_double(x));
  return arr;
}

Vec params_from_json(const json& arr, const char* what) {
  if (!arr.is_array()) throw ConfigError(std::string("checkpoint: ") + what + " must be an array");
  Vec v;
  v.reserve(arr.size());
  for (const auto& e : arr) v.push_back(parse_hex_double(e.get<std::string>()));
  return v;
}

bool parse_full_double(const std::string& s, double* out) {
  if (s.empty()) return false;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return false;
  *out = v;
  return true;
}

}  // namespace

ParsedConfig ParsedConfig::parse_text(const std::string& text, const std::string& origin) {
  ParsedConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty() || section.find('.') != std::string::npos)
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad section name");
      continue;
    }
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty() || key.find('.') != std::string::npos || section.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": bad key (outside section?)");
    cfg.values[section + "." + key] = value;
  }
  return cfg;
}

ParsedConfig ParsedConfig::parse_file(const std::string& path) {
  return parse_text(read_file(path), path);
}

void ParsedConfig::set(const std::string& dotted_key, const std::string& value) {
  std::size_t dot = dotted_key.find('.');
  require(dot != std::string::npos && dot > 0 && dot + 1 < dotted_key.size(),
          "config key must look like section.key");
  values[dotted_key] = value;
}

void ParsedConfig::apply_override(const std::string& assignment) {
  std::size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must look like section.key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string ParsedConfig::get_str(const std::string& key, const std::string& def) const {
  auto it = values.find(key);
  return it == values.end() ? def : it->second;
}

int ParsedConfig::get_int(const std::string& key, int def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  char* end = nullptr;
  long v = std::strtol(it->second.c_str(), &end, 10);
  if (end != it->second.c_str() + it->second.size() || it->second.empty())
    throw ConfigError("config " + key + ": expected integer, got '" + it->second + "'");
  return static_cast<int>(v);
}

std::uint64_t ParsedConfig::get_u64(const std::string& key, std::uint64_t def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  char* end = nullptr;
  unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end != it->second.c_str() + it->second.size() || it->second.empty())
    throw ConfigError("config " + key + ": expected unsigned integer, got '" + it->second + "'");
  return static_cast<std::uint64_t>(v);
}

double ParsedConfig::get_double(const std::string& key, double def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  double v = 0.0;
  if (!parse_full_double(it->second, &v))
    throw ConfigError("config " + key + ": expected number, got '" + it->second + "'");
  return v;
}

bool ParsedConfig::get_bool(const std::string& key, bool def) const {
  auto it = values.find(key);
  if (it == values.end()) return def;
  const std::string& s = it->second;
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("config " + key + ": expected boolean, got '" + s + "'");
}

std::string ParsedConfig::emit() const {
  std::string out;
  std::string section;
  for (const auto& [key, value] : values) {  // std::map: already sorted
    std::size_t dot = key.find('.');
    std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += "\n";
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

std::uint64_t ParsedConfig::hash() const {
  std::string e = emit();
  return fnv1a(e.data(), e.size());
}

std::string hex_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

double parse_hex_double(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || s.empty())
    throw ConfigError("bad float literal: '" + s + "'");
  return v;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void write_hash_line(std::ofstream& out, std::uint64_t config_hash) {
  out << "# config_hash=" << hex64(config_hash) << "\n";
}

}  // namespace

void write_samples_csv(const std::string& path, const std::vector<Vec>& samples,
                       std::uint64_t config_hash) {
  std::ofstream out = open_out(path);
  write_hash_line(out, config_hash);
  std::size_t d = samples.empty() ? 0 : samples.front().size();
  for (std::size_t c = 0; c < d; ++c) out << (c ? ",x" : "x") << c;
  out << "\n";
  for (const Vec& p : samples) {
    require(p.size() == d, "write_samples_csv: inconsistent dimension");
    for (std::size_t c = 0; c < d; ++c) out << (c ? "," : "") << format_g17(p[c]);
    out << "\n";
  }
}

std::vector<Vec> read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open samples file: " + path);
  std::vector<Vec> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::stringstream ss(t);
    std::string field;
    Vec p;
    bool bad = false;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      if (!parse_full_double(trim(field), &v)) {
        bad = true;
        break;
      }
      p.push_back(v);
    }
    if (bad) {
      if (pts.empty()) continue;  // header row
      throw ConfigError(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (!pts.empty() && p.size() != pts.front().size())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    pts.push_back(std::move(p));
  }
  if (pts.empty()) throw ConfigError(path + ": no sample rows");
  return pts;
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows,
                    std::uint64_t config_hash) {
  std::ofstream out = open_out(path);
  write_hash_line(out, config_hash);
  out << "step,mse,cdl,total,wall_ms\n";
  for (const LossRow& r : rows)
    out << r.step << "," << format_g17(r.mse) << "," << format_g17(r.cdl) << ","
        << format_g17(r.total) << "," << format_g17(r.wall_ms) << "\n";
}

void write_error_field_csv(const std::string& path, const ErrorField& field,
                           std::uint64_t config_hash) {
  std::ofstream out = open_out(path);
  write_hash_line(out, config_hash);
  out << "t,alpha,x,value\n";
  for (std::size_t r = 0; r < field.values.size(); ++r)
    for (std::size_t c = 0; c < field.values[r].size(); ++c) {
      require(field.x_grid[c].size() == 1, "write_error_field_csv: 1D fields only");
      out << format_g17(field.t_grid[r]) << "," << format_g17(field.alpha_grid[r]) << ","
          << format_g17(field.x_grid[c][0]) << "," << format_g17(field.values[r][c]) << "\n";
    }
}

void write_sweep_csv(const std::string& path, const std::vector<std::pair<double, double>>& sweep,
                     std::uint64_t config_hash) {
  std::ofstream out = open_out(path);
  write_hash_line(out, config_hash);
  out << "sigma,mmd\n";
  for (const auto& [sigma, mmd] : sweep)
    out << format_g17(sigma) << "," << format_g17(mmd) << "\n";
}

void write_mmd_trace_csv(const std::string& path, const Vec& trace, std::uint64_t config_hash) {
  std::ofstream out = open_out(path);
  write_hash_line(out, config_hash);
  out << "iteration,mmd\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out << (i + 1) << "," << format_g17(trace[i]) << "\n";
}

void write_report_json(const std::string& path, const SamplerReport& report,
                       std::uint64_t config_hash, bool mask_timing,
                       const std::map<std::string, double>& extras) {
  json j;
  j["config_hash"] = hex64(config_hash);
  j["iterations"] = report.iterations;
  j["nfe"] = report.nfe;
  j["wall_ms"] = mask_timing ? 0.0 : report.wall_ms;
  j["converged"] = report.converged;
  j["peak_parallel"] = report.peak_parallel;
  j["trace"] = report.trace;
  if (!report.mmd_trace.empty()) j["mmd_trace"] = report.mmd_trace;
  for (const auto& [k, v] : extras) j[k] = v;
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json j;
  j["version"] = kVersion;
  j["config_hash"] = hex64(ckpt.config_hash);
  j["step"] = ckpt.step;
  j["seed"] = ckpt.seed;
  json arch;
  arch["data_dim"] = ckpt.arch.data_dim;
  arch["hidden"] = ckpt.arch.hidden;
  arch["embed_dim"] = ckpt.arch.embed_dim;
  arch["freq_base"] = hex_double(ckpt.arch.freq_base);
  arch["activation"] = ckpt.arch.activation == Activation::kSilu ? "silu" : "relu";
  arch["conditioning"] =
      ckpt.arch.conditioning == Conditioning::kTimestep ? "timestep" : "logsnr";
  j["arch"] = arch;
  j["schedule_alphas"] = params_to_json(ckpt.schedule.alphas);
  j["params"] = params_to_json(ckpt.params);
  json adam;
  adam["m"] = params_to_json(ckpt.adam.m);
  adam["v"] = params_to_json(ckpt.adam.v);
  adam["t"] = ckpt.adam.t;
  j["adam"] = adam;
  json ema;
  ema["decay"] = hex_double(ckpt.ema.decay);
  ema["shadow"] = params_to_json(ckpt.ema.shadow);
  j["ema"] = ema;
  std::ofstream out = open_out(path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path + ": " + e.what());
  }
  try {
    Checkpoint c;
    c.step = j.at("step").get<std::int64_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.config_hash = std::strtoull(j.at("config_hash").get<std::string>().c_str(), nullptr, 16);
    const json& arch = j.at("arch");
    c.arch.data_dim = arch.at("data_dim").get<int>();
    c.arch.hidden = arch.at("hidden").get<std::vector<int>>();
    c.arch.embed_dim = arch.at("embed_dim").get<int>();
    c.arch.freq_base = parse_hex_double(arch.at("freq_base").get<std::string>());
    c.arch.activation =
        arch.at("activation").get<std::string>() == "silu" ? Activation::kSilu : Activation::kRelu;
    c.arch.conditioning = arch.at("conditioning").get<std::string>() == "timestep"
                              ? Conditioning::kTimestep
                              : Conditioning::kLogSnr;
    c.schedule.alphas = params_from_json(j.at("schedule_alphas"), "schedule_alphas");
    c.params = params_from_json(j.at("params"), "params");
    c.adam.m = params_from_json(j.at("adam").at("m"), "adam.m");
    c.adam.v = params_from_json(j.at("adam").at("v"), "adam.v");
    c.adam.t = j.at("adam").at("t").get<std::int64_t>();
    c.ema.decay = parse_hex_double(j.at("ema").at("decay").get<std::string>());
    c.ema.shadow = params_from_json(j.at("ema").at("shadow"), "ema.shadow");
    c.arch.validate();
    c.schedule.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path + ": missing or mistyped field: " + e.what());
  }
}

void write_heatmap_svg(const std::string& path, const ErrorField& field,
                       std::uint64_t config_hash) {
  std::size_t rows = field.values.size();
  require(rows > 0 && !field.x_grid.empty(), "write_heatmap_svg: empty field");
  require(field.x_grid.front().size() == 1, "write_heatmap_svg: 1D fields only");
  std::size_t cols = field.x_grid.size();
  double vmax = 0.0;
  for (const auto& row : field.values)
    for (double v : row) vmax = std::max(vmax, v);
  double floor_v = vmax > 0.0 ? vmax * 1e-4 : 1.0;
  double lmin = std::log10(floor_v), lmax = vmax > 0.0 ? std::log10(vmax) : 1.0;
  if (lmax <= lmin) lmax = lmin + 1.0;

  const int cell = 4;
  std::ofstream out = open_out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << cols * cell << "\" height=\""
      << rows * cell << "\">\n";
  out << "<!-- config_hash=" << hex64(config_hash) << " intensity=log10 range=["
      << format_g17(floor_v) << "," << format_g17(vmax) << "] rows=noise-levels cols=x -->\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double v = std::max(field.values[r][c], floor_v);
      double unit = (std::log10(v) - lmin) / (lmax - lmin);
      int shade = 255 - static_cast<int>(std::lround(unit * 255.0));
      out << "<rect x=\"" << c * cell << "\" y=\"" << r * cell << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade << "," << shade
          << ")\"/>\n";
    }
  }
  out << "</svg>\n";
}

}  // namespace difflab
