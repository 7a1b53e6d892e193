#pragma once

#include <map>
#include <string>
#include <utility>

#include "difflab/losses.hpp"
#include "difflab/picard.hpp"

namespace difflab {

inline constexpr const char* kVersion = "difflab-1.0.0";

// Config text: "[section]" headers, "key = value" entries, full-line '#' or
// ';' comments. Keys are addressed as "section.key". emit() is canonical
// (sorted sections and keys) and parse(emit()) is a fixpoint.
struct ParsedConfig {
  std::map<std::string, std::string> values;

  static ParsedConfig parse_text(const std::string& text, const std::string& origin = "<config>");
  static ParsedConfig parse_file(const std::string& path);

  // dotted = "section.key=value" or ("section.key", "value").
  void set(const std::string& dotted_key, const std::string& value);
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return values.count(key) != 0; }
  std::string get_str(const std::string& key, const std::string& def) const;
  int get_int(const std::string& key, int def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t def) const;

  std::string emit() const;
  std::uint64_t hash() const;
};

// Exact-round-trip float text (printf %a / strtod).
std::string hex_double(double v);
double parse_hex_double(const std::string& s);

// Shortest 17-significant-digit decimal form used in CSV output.
std::string format_g17(double v);

// CSV files all begin with "# config_hash=<16 hex digits>".
void write_samples_csv(const std::string& path, const std::vector<Vec>& samples,
                       std::uint64_t config_hash);
std::vector<Vec> read_samples_csv(const std::string& path);

struct LossRow {
  std::int64_t step = 0;
  double mse = 0.0;
  double cdl = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;
};
void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows,
                    std::uint64_t config_hash);

void write_error_field_csv(const std::string& path, const ErrorField& field,
                           std::uint64_t config_hash);

void write_sweep_csv(const std::string& path, const std::vector<std::pair<double, double>>& sweep,
                     std::uint64_t config_hash);

void write_mmd_trace_csv(const std::string& path, const Vec& trace, std::uint64_t config_hash);

// Report JSON: {iterations, nfe, wall_ms, converged, peak_parallel, trace,
// mmd_trace?, iterations_to_threshold?}; mask_timing zeroes wall_ms so
// reruns compare bitwise. extras are appended as numeric fields.
void write_report_json(const std::string& path, const SamplerReport& report,
                       std::uint64_t config_hash, bool mask_timing,
                       const std::map<std::string, double>& extras = {});

struct Checkpoint {
  MlpConfig arch;
  NoiseSchedule schedule;
  Vec params;
  AdamState adam;
  EmaState ema;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

// JSON checkpoint; parameters and schedule are stored as %a hex strings so
// save/load round-trips bitwise.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Grayscale heatmap of a 1D error field (rows = noise levels, columns = x),
// log-intensity scaled; the scale is recorded in an SVG comment.
void write_heatmap_svg(const std::string& path, const ErrorField& field,
                       std::uint64_t config_hash);

}  // namespace difflab
