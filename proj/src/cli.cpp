#include "difflab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "difflab/datasets.hpp"
#include "difflab/eval.hpp"
#include "difflab/io.hpp"
#include "difflab/losses.hpp"
#include "difflab/picard.hpp"

namespace difflab {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// The full key space with defaults. Resolution fills in what the user left
// out and rejects unknown keys, so the emitted config (and its hash) always
// covers every knob. Execution-only controls (--threads, --out,
// --mask-timing) stay outside: they must not change output bytes.
const std::map<std::string, std::string>& default_config() {
  static const std::map<std::string, std::string> defaults = {
      {"run.seed", "0"},
      {"run.model", ""},
      {"data.kind", "dino"},
      {"data.path", "data/dino.csv"},
      {"data.n", "8000"},
      {"data.jitter", "0.02"},
      {"model.hidden", "128,128,128"},
      {"model.embed_dim", "64"},
      {"model.freq_base", "10000"},
      {"model.activation", "silu"},
      {"model.conditioning", "timestep"},
      {"schedule.kind", "ddpm"},
      {"schedule.steps", "1000"},
      {"schedule.beta_start", "1e-4"},
      {"schedule.beta_end", "0.02"},
      {"schedule.alpha_hi", "15"},
      {"schedule.alpha_lo", "-10"},
      {"train.mode", "mse-only"},
      {"train.lambda", "1"},
      {"train.steps", "2000"},
      {"train.batch", "128"},
      {"train.lr", "1e-4"},
      {"train.ema", "0.999"},
      {"train.cdl_batch", "8"},
      {"train.checkpoint_every", "0"},
      {"train.log_every", "1"},
      {"llr.alpha_lo", "-10"},
      {"llr.alpha_hi", "15"},
      {"llr.nodes", "64"},
      {"llr.n_mc", "4"},
      {"llr.shared_noise", "true"},
      {"llr.x", ""},
      {"llr.zeta", "6,8,10"},
      {"zeta.law", "uniform"},
      {"zeta.lo", "6"},
      {"zeta.hi", "15"},
      {"sampler.kind", "parallel"},
      {"sampler.n", "2000"},
      {"sampler.drift", "pf"},
      {"sampler.tol", "0"},
      {"sampler.max_iters", "0"},
      {"sampler.window", "8"},
      {"sampler.init", "constant"},
      {"sampler.s_churn", "0"},
      {"sampler.s_noise", "1"},
      {"sampler.use_ema", "true"},
      {"sampler.reference", ""},
      {"eval.x", ""},
      {"eval.y", ""},
      {"mmd.bandwidth", "0"},
      {"mmd.subsample_cap", "4096"},
      {"mmd.threshold", "0.002"},
      {"mmd.cand_lo", "1e-3"},
      {"mmd.cand_hi", "1"},
      {"mmd.cand_n", "25"},
      {"heatmap.x_lo", "-8"},
      {"heatmap.x_hi", "8"},
      {"heatmap.nx", "161"},
      {"heatmap.max_rows", "128"},
      {"heatmap.band_sigmas", "3"},
  };
  return defaults;
}

ParsedConfig resolve(ParsedConfig cfg) {
  const auto& defaults = default_config();
  for (const auto& [key, value] : cfg.values) {
    (void)value;
    if (!defaults.count(key)) throw ConfigError("unknown config key: " + key);
  }
  for (const auto& [key, value] : defaults)
    if (!cfg.values.count(key)) cfg.values[key] = value;
  return cfg;
}

struct CliArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> sugar;  // flag shorthands, applied last
  std::string out = "out";
  int threads = 1;
  bool mask_timing = false;
};

ParsedConfig make_config(const CliArgs& a) {
  ParsedConfig cfg;
  if (!a.config_path.empty()) cfg = ParsedConfig::parse_file(a.config_path);
  for (const auto& s : a.sets) cfg.apply_override(s);
  for (const auto& [key, value] : a.sugar) cfg.set(key, value);
  return resolve(std::move(cfg));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    std::size_t next = s.find(sep, pos);
    parts.push_back(s.substr(pos, next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return parts;
}

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const std::string& f : split(s, ',')) {
    char* end = nullptr;
    long v = std::strtol(f.c_str(), &end, 10);
    if (f.empty() || end != f.c_str() + f.size())
      throw ConfigError(what + ": expected comma-separated integers, got '" + s + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

Vec parse_double_list(const std::string& s, const std::string& what) {
  Vec out;
  for (const std::string& f : split(s, ',')) {
    char* end = nullptr;
    double v = std::strtod(f.c_str(), &end);
    if (f.empty() || end != f.c_str() + f.size())
      throw ConfigError(what + ": expected comma-separated numbers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

// Points "x0,x1;x0,x1;..." with ';' between points and ',' between coordinates.
std::vector<Vec> parse_points(const std::string& s, const std::string& what) {
  std::vector<Vec> pts;
  for (const std::string& p : split(s, ';')) pts.push_back(parse_double_list(p, what));
  return pts;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

void dump_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

std::string out_path(const CliArgs& a, const std::string& name) {
  if (a.out.empty()) throw ConfigError("--out must not be empty");
  fs::create_directories(a.out);
  return a.out + "/" + name;
}

NoiseSchedule build_schedule(const ParsedConfig& cfg) {
  std::string kind = cfg.get_str("schedule.kind", "ddpm");
  int T = cfg.get_int("schedule.steps", 1000);
  if (T < 1) throw ConfigError("schedule.steps must be >= 1");
  if (kind == "ddpm")
    return ddpm_schedule(T, cfg.get_double("schedule.beta_start", 1e-4),
                         cfg.get_double("schedule.beta_end", 0.02));
  if (kind == "uniform")
    return uniform_logsnr_schedule(T, cfg.get_double("schedule.alpha_hi", 15.0),
                                   cfg.get_double("schedule.alpha_lo", -10.0));
  throw ConfigError("unknown schedule.kind: " + kind);
}

MlpConfig build_arch(const ParsedConfig& cfg, int data_dim) {
  MlpConfig m;
  m.data_dim = data_dim;
  m.hidden = parse_int_list(cfg.get_str("model.hidden", "128,128,128"), "model.hidden");
  m.embed_dim = cfg.get_int("model.embed_dim", 64);
  m.freq_base = cfg.get_double("model.freq_base", 10000.0);
  std::string act = cfg.get_str("model.activation", "silu");
  if (act == "silu")
    m.activation = Activation::kSilu;
  else if (act == "relu")
    m.activation = Activation::kRelu;
  else
    throw ConfigError("unknown model.activation: " + act);
  std::string cond = cfg.get_str("model.conditioning", "timestep");
  if (cond == "timestep")
    m.conditioning = Conditioning::kTimestep;
  else if (cond == "logsnr")
    m.conditioning = Conditioning::kLogSnr;
  else
    throw ConfigError("unknown model.conditioning: " + cond);
  m.validate();
  return m;
}

Dataset build_dataset(const ParsedConfig& cfg) {
  std::string kind = cfg.get_str("data.kind", "dino");
  int n = cfg.get_int("data.n", 8000);
  if (n < 1) throw ConfigError("data.n must be >= 1");
  std::uint64_t seed = cfg.get_u64("run.seed", 0);
  if (kind == "dino")
    return load_dino(cfg.get_str("data.path", "data/dino.csv"), n, seed,
                     cfg.get_double("data.jitter", 0.02));
  if (kind == "two-mode") return sample_mixture(two_mode_spec(), n, seed);
  throw ConfigError("unknown data.kind: " + kind);
}

LlrConfig build_llr(const ParsedConfig& cfg) {
  LlrConfig l;
  l.alpha_grid = uniform_grid(cfg.get_double("llr.alpha_lo", -10.0),
                              cfg.get_double("llr.alpha_hi", 15.0), cfg.get_int("llr.nodes", 64));
  l.n_mc = cfg.get_int("llr.n_mc", 4);
  l.shared_noise = cfg.get_bool("llr.shared_noise", true);
  l.validate();
  return l;
}

ZetaSampler build_zeta(const ParsedConfig& cfg) {
  ZetaSampler z;
  z.law = zeta_law_from_string(cfg.get_str("zeta.law", "uniform"));
  z.lo = cfg.get_double("zeta.lo", 6.0);
  z.hi = cfg.get_double("zeta.hi", 15.0);
  z.validate();
  return z;
}

Vec build_candidates(const ParsedConfig& cfg) {
  return log_spaced(cfg.get_double("mmd.cand_lo", 1e-3), cfg.get_double("mmd.cand_hi", 1.0),
                    cfg.get_int("mmd.cand_n", 25));
}

struct LoadedModel {
  std::unique_ptr<DenoiserModel> model;
  NoiseSchedule schedule;  // checkpoint schedule, or the configured one for oracles
};

LoadedModel load_model(const ParsedConfig& cfg) {
  std::string src = cfg.get_str("run.model", "");
  if (src.empty())
    throw ConfigError("run.model is required (checkpoint:PATH or oracle:two-mode)");
  LoadedModel lm;
  if (src.rfind("oracle:", 0) == 0) {
    std::string name = src.substr(7);
    if (name != "two-mode") throw ConfigError("unknown oracle spec: " + name);
    lm.model = std::make_unique<OracleDenoiser>(two_mode_spec());
    lm.schedule = build_schedule(cfg);
    return lm;
  }
  if (src.rfind("checkpoint:", 0) == 0) {
    Checkpoint c = load_checkpoint(src.substr(11));
    Rng shape_rng(0);
    auto m = std::make_unique<MlpDenoiser>(MlpDenoiser::init(c.arch, c.schedule, shape_rng));
    m->load_params(cfg.get_bool("sampler.use_ema", true) ? c.ema.shadow : c.params);
    lm.schedule = c.schedule;
    lm.model = std::move(m);
    return lm;
  }
  throw ConfigError("run.model must start with checkpoint: or oracle:");
}

std::vector<Vec> columns_to_points(const Eigen::MatrixXd& M) {
  std::vector<Vec> pts(static_cast<std::size_t>(M.cols()),
                       Vec(static_cast<std::size_t>(M.rows())));
  for (int c = 0; c < M.cols(); ++c)
    for (int r = 0; r < M.rows(); ++r) pts[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)] = M(r, c);
  return pts;
}

Checkpoint snapshot(const MlpDenoiser& model, const Vec& params, const AdamState& adam,
                    const EmaState& ema, std::int64_t step, std::uint64_t seed,
                    std::uint64_t config_hash) {
  Checkpoint c;
  c.arch = model.cfg;
  c.schedule = model.schedule;
  c.params = params;
  c.adam = adam;
  c.ema = ema;
  c.step = step;
  c.seed = seed;
  c.config_hash = config_hash;
  return c;
}

int cmd_train(const CliArgs& a) {
  ParsedConfig cfg = make_config(a);
  std::uint64_t hash = cfg.hash();
  std::uint64_t seed = cfg.get_u64("run.seed", 0);

  Dataset ds = build_dataset(cfg);
  NoiseSchedule schedule = build_schedule(cfg);
  MlpConfig arch = build_arch(cfg, ds.dim);
  Rng root(seed);
  Rng init_rng = root.stream("init");
  MlpDenoiser model = MlpDenoiser::init(arch, schedule, init_rng);

  TrainConfig tc;
  tc.mode = train_mode_from_string(cfg.get_str("train.mode", "mse-only"));
  tc.lambda = cfg.get_double("train.lambda", 1.0);
  tc.adam.lr = cfg.get_double("train.lr", 1e-4);
  tc.llr = build_llr(cfg);
  tc.zeta = build_zeta(cfg);
  tc.cdl_batch = cfg.get_int("train.cdl_batch", 8);
  tc.threads = a.threads;
  tc.validate();

  int steps = cfg.get_int("train.steps", 2000);
  int batch_size = cfg.get_int("train.batch", 128);
  int log_every = cfg.get_int("train.log_every", 1);
  int ckpt_every = cfg.get_int("train.checkpoint_every", 0);
  if (steps < 1 || batch_size < 1 || log_every < 1)
    throw ConfigError("train.steps, train.batch and train.log_every must be >= 1");

  Vec params = model.flatten_params();
  AdamState adam = AdamState::zeros(params.size());
  EmaState ema = EmaState::from_params(cfg.get_double("train.ema", 0.999), params);

  Rng batch_root = root.stream("batch");
  Rng train_root = root.stream("train");
  auto n_data = static_cast<double>(ds.points.size());
  int progress_every = std::max(1, steps / 20);

  std::vector<LossRow> rows;
  StepStats last{};
  for (int step = 1; step <= steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    Rng bi = batch_root.stream(static_cast<std::uint64_t>(step));
    std::vector<Vec> batch(static_cast<std::size_t>(batch_size));
    for (auto& item : batch)
      item = ds.points[static_cast<std::size_t>(bi.uniform() * n_data)];
    last = combined_training_step(model, params, adam, ema, batch, tc,
                                  train_root.stream(static_cast<std::uint64_t>(step)));
    double ms = a.mask_timing ? 0.0 : elapsed_ms(t0);
    if (step % log_every == 0 || step == steps)
      rows.push_back(LossRow{step, last.mse, last.cdl, last.total, ms});
    if (ckpt_every > 0 && step % ckpt_every == 0)
      save_checkpoint(out_path(a, "ckpt_" + std::to_string(step) + ".json"),
                      snapshot(model, params, adam, ema, step, seed, hash));
    if (step % progress_every == 0 || step == steps)
      std::cerr << "step " << step << "/" << steps << " mse=" << last.mse
                << " cdl=" << last.cdl << " total=" << last.total << "\n";
  }

  save_checkpoint(out_path(a, "checkpoint.json"),
                  snapshot(model, params, adam, ema, steps, seed, hash));
  write_loss_csv(out_path(a, "loss.csv"), rows, hash);
  write_samples_csv(out_path(a, "data.csv"), ds.points, hash);

  json meta;
  meta["version"] = kVersion;
  meta["config_hash"] = hex64(hash);
  json cc = json::object();
  for (const auto& [key, value] : cfg.values) cc[key] = value;
  meta["config"] = cc;
  meta["data_dim"] = ds.dim;
  meta["param_count"] = model.param_count();
  meta["final_mse"] = last.mse;
  meta["final_cdl"] = last.cdl;
  meta["final_total"] = last.total;
  dump_json(out_path(a, "metadata.json"), meta);

  std::cout << "trained " << steps << " steps, final total=" << format_g17(last.total) << "\n";
  return 0;
}

int cmd_sample(const CliArgs& a) {
  ParsedConfig cfg = make_config(a);
  std::uint64_t hash = cfg.hash();
  Rng root(cfg.get_u64("run.seed", 0));
  LoadedModel lm = load_model(cfg);
  int n = cfg.get_int("sampler.n", 2000);
  if (n < 1) throw ConfigError("sampler.n must be >= 1");
  std::string kind = cfg.get_str("sampler.kind", "parallel");
  Rng srng = root.stream("sampler");

  std::string ref_path = cfg.get_str("sampler.reference", "");
  std::vector<Vec> reference;
  MmdConfig mc;
  mc.subsample_cap = cfg.get_int("mmd.subsample_cap", 4096);
  double threshold = cfg.get_double("mmd.threshold", 0.002);
  IterHook hook;
  if (!ref_path.empty()) {
    reference = read_samples_csv(ref_path);
    mc.bandwidth = cfg.get_double("mmd.bandwidth", 0.0);
    if (mc.bandwidth <= 0.0)
      mc.bandwidth =
          select_bandwidth(reference, build_candidates(cfg), root.stream("eval"), a.threads);
    mc.validate();
    hook = [&reference, &mc, &a](int, const Eigen::MatrixXd& data_end) {
      return mmd_unbiased(columns_to_points(data_end), reference, mc, a.threads);
    };
  }

  SampleResult res;
  if (kind == "ddpm") {
    res = ddpm_ancestral_sample(*lm.model, lm.schedule, n, srng);
  } else if (kind == "pf-euler") {
    res = probability_flow_sample(*lm.model, lm.schedule, n, Stepper::kEuler, srng);
  } else if (kind == "pf-heun") {
    res = probability_flow_sample(*lm.model, lm.schedule, n, Stepper::kHeun, srng);
  } else if (kind == "churn") {
    StochasticSamplerConfig sc;
    sc.s_churn = cfg.get_double("sampler.s_churn", 0.0);
    sc.s_noise = cfg.get_double("sampler.s_noise", 1.0);
    sc.validate();
    res = stochastic_churn_sample(*lm.model, lm.schedule, sc, n, srng);
  } else if (kind == "parallel" || kind == "window") {
    PicardConfig pc;
    pc.tol = cfg.get_double("sampler.tol", 0.0);
    pc.max_iters = cfg.get_int("sampler.max_iters", 0);
    pc.window = kind == "window" ? cfg.get_int("sampler.window", 8) : 0;
    std::string init = cfg.get_str("sampler.init", "constant");
    if (init == "constant")
      pc.init = InitPolicy::kConstant;
    else if (init == "gaussian")
      pc.init = InitPolicy::kGaussianPerStep;
    else
      throw ConfigError("unknown sampler.init: " + init);
    pc.threads = a.threads;
    std::string drift = cfg.get_str("sampler.drift", "pf");
    DriftKind dk;
    if (drift == "pf")
      dk = DriftKind::kProbabilityFlow;
    else if (drift == "ddpm")
      dk = DriftKind::kDdpm;
    else
      throw ConfigError("unknown sampler.drift: " + drift);
    res = kind == "parallel"
              ? parallel_sample(*lm.model, lm.schedule, pc, n, srng, dk, hook)
              : sliding_window_sample(*lm.model, lm.schedule, pc, n, srng, dk, hook);
  } else {
    throw ConfigError("unknown sampler.kind: " + kind);
  }

  write_samples_csv(out_path(a, "samples.csv"), res.samples, hash);
  std::map<std::string, double> extras;
  if (!reference.empty()) {
    extras["bandwidth"] = mc.bandwidth;
    if (!res.report.mmd_trace.empty()) {
      write_mmd_trace_csv(out_path(a, "mmd_trace.csv"), res.report.mmd_trace, hash);
      extras["mmd_final"] = res.report.mmd_trace.back();
      extras["iterations_to_threshold"] =
          iterations_to_threshold(res.report.mmd_trace, threshold);
    } else {
      extras["mmd_final"] = mmd_unbiased(res.samples, reference, mc, a.threads);
    }
  }
  write_report_json(out_path(a, "report.json"), res.report, hash, a.mask_timing, extras);

  std::cout << "sampled n=" << n << " kind=" << kind << " iterations=" << res.report.iterations
            << " nfe=" << res.report.nfe << " converged=" << (res.report.converged ? 1 : 0)
            << "\n";
  return 0;
}

int cmd_eval_mmd(const CliArgs& a) {
  ParsedConfig cfg = make_config(a);
  std::uint64_t hash = cfg.hash();
  std::string xp = cfg.get_str("eval.x", "");
  std::string yp = cfg.get_str("eval.y", "");
  if (xp.empty() || yp.empty())
    throw ConfigError("eval-mmd requires --x SAMPLES and --y REFERENCE");
  std::vector<Vec> X = read_samples_csv(xp);
  std::vector<Vec> Y = read_samples_csv(yp);

  Rng root(cfg.get_u64("run.seed", 0));
  MmdConfig mc;
  mc.subsample_cap = cfg.get_int("mmd.subsample_cap", 4096);
  mc.bandwidth = cfg.get_double("mmd.bandwidth", 0.0);
  if (mc.bandwidth <= 0.0)
    mc.bandwidth = select_bandwidth(Y, build_candidates(cfg), root.stream("eval"), a.threads);
  mc.validate();
  double m = mmd_unbiased(X, Y, mc, a.threads);

  json j;
  j["config_hash"] = hex64(hash);
  j["mmd"] = m;
  j["bandwidth"] = mc.bandwidth;
  j["n_x"] = X.size();
  j["n_y"] = Y.size();
  dump_json(out_path(a, "metrics.json"), j);
  std::cout << "mmd=" << format_g17(m) << " bandwidth=" << format_g17(mc.bandwidth) << "\n";
  return 0;
}

int cmd_heatmap(const CliArgs& a) {
  ParsedConfig cfg = make_config(a);
  std::uint64_t hash = cfg.hash();
  if (cfg.get_str("data.kind", "dino") != "two-mode")
    throw ConfigError("heatmap requires data.kind=two-mode (needs a closed-form spec)");
  GaussianMixtureSpec spec = two_mode_spec();
  LoadedModel lm = load_model(cfg);
  if (lm.model->dim() != spec.dim)
    throw ConfigError("model dimension does not match the spec dimension");

  std::vector<Vec> x_grid =
      make_x_grid_1d(cfg.get_double("heatmap.x_lo", -8.0), cfg.get_double("heatmap.x_hi", 8.0),
                     cfg.get_int("heatmap.nx", 161));
  std::vector<double> t_grid = make_t_grid(lm.schedule, cfg.get_int("heatmap.max_rows", 128));
  ErrorField field =
      compute_error_field(*lm.model, spec, lm.schedule, x_grid, t_grid, a.threads);

  write_error_field_csv(out_path(a, "error_field.csv"), field, hash);
  write_heatmap_svg(out_path(a, "heatmap.svg"), field, hash);
  BandError be = ood_band_error(field, spec, cfg.get_double("heatmap.band_sigmas", 3.0));

  json j;
  j["config_hash"] = hex64(hash);
  j["in_band_mean"] = be.in_band_mean;
  j["out_band_mean"] = be.out_band_mean;
  j["in_band_cells"] = be.in_band_cells;
  j["out_band_cells"] = be.out_band_cells;
  dump_json(out_path(a, "band.json"), j);
  std::cout << "in_band_mean=" << format_g17(be.in_band_mean)
            << " out_band_mean=" << format_g17(be.out_band_mean) << "\n";
  return 0;
}

int cmd_bandwidth_sweep(const CliArgs& a) {
  ParsedConfig cfg = make_config(a);
  std::uint64_t hash = cfg.hash();
  Dataset ds = build_dataset(cfg);
  Rng root(cfg.get_u64("run.seed", 0));
  std::vector<std::pair<double, double>> sweep =
      bandwidth_sweep(ds.points, build_candidates(cfg), root.stream("eval"), a.threads);

  write_sweep_csv(out_path(a, "sweep.csv"), sweep, hash);
  double best_sigma = sweep.front().first;
  double best = sweep.front().second;
  for (const auto& [sigma, value] : sweep)
    if (value > best) {
      best = value;
      best_sigma = sigma;
    }

  json j;
  j["config_hash"] = hex64(hash);
  j["selected_sigma"] = best_sigma;
  j["peak_mmd"] = best;
  dump_json(out_path(a, "selected.json"), j);
  std::cout << "selected_sigma=" << format_g17(best_sigma) << "\n";
  return 0;
}

int cmd_llr(const CliArgs& a) {
  ParsedConfig cfg = make_config(a);
  std::uint64_t hash = cfg.hash();
  LoadedModel lm = load_model(cfg);
  std::string xs = cfg.get_str("llr.x", "");
  if (xs.empty()) throw ConfigError("llr requires --x points (\"x0,x1;x0,x1;...\")");
  std::vector<Vec> points = parse_points(xs, "llr.x");
  Vec zetas = parse_double_list(cfg.get_str("llr.zeta", "6,8,10"), "llr.zeta");
  LlrConfig lc = build_llr(cfg);
  Rng eval_root = Rng(cfg.get_u64("run.seed", 0)).stream("eval");

  std::string path = out_path(a, "llr.csv");
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write file: " + path);
  out << "# config_hash=" << hex64(hash) << "\n";
  int d = lm.model->dim();
  for (int c = 0; c < d; ++c) out << "x" << c << ",";
  out << "zeta,llr\n";
  for (std::size_t pi = 0; pi < points.size(); ++pi) {
    if (static_cast<int>(points[pi].size()) != d)
      throw ConfigError("llr.x point dimension does not match the model");
    Rng prng = eval_root.stream(static_cast<std::uint64_t>(pi));
    for (std::size_t zi = 0; zi < zetas.size(); ++zi) {
      double v = estimate_llr(*lm.model, points[pi], log_snr(zetas[zi]), lc,
                              prng.stream(static_cast<std::uint64_t>(zi)));
      for (double coord : points[pi]) out << format_g17(coord) << ",";
      out << format_g17(zetas[zi]) << "," << format_g17(v) << "\n";
    }
  }
  std::cout << "wrote " << points.size() * zetas.size() << " llr rows\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"diffusion laboratory: train denoisers, sample, evaluate"};
  app.require_subcommand(1);
  CliArgs a;

  auto add_common = [&a](CLI::App* s) {
    s->add_option("--config", a.config_path, "config file ([section] / key = value)");
    s->add_option("--set", a.sets, "config override section.key=value (repeatable)");
    s->add_option("--out", a.out, "output directory")->capture_default_str();
    s->add_option("--threads", a.threads, "worker threads, 0 = hardware")
        ->capture_default_str();
    s->add_flag("--mask-timing", a.mask_timing, "write wall_ms fields as 0");
    s->add_option_function<std::string>(
        "--seed", [&a](const std::string& v) { a.sugar.emplace_back("run.seed", v); },
        "root RNG seed");
  };
  auto fwd = [&a](CLI::App* s, const std::string& flag, const std::string& key,
                  const std::string& help) {
    s->add_option_function<std::string>(
        flag, [&a, key](const std::string& v) { a.sugar.emplace_back(key, v); }, help);
  };
  auto add_model_flags = [&a, &fwd](CLI::App* s) {
    s->add_option_function<std::string>(
        "--checkpoint",
        [&a](const std::string& v) { a.sugar.emplace_back("run.model", "checkpoint:" + v); },
        "load this checkpoint as the model");
    s->add_option_function<std::string>(
        "--oracle",
        [&a](const std::string& v) { a.sugar.emplace_back("run.model", "oracle:" + v); },
        "use a closed-form spec as the model (two-mode)");
    fwd(s, "--schedule-steps", "schedule.steps", "discretization steps T");
  };

  CLI::App* t = app.add_subcommand("train", "train a denoiser; writes checkpoints + loss CSV");
  add_common(t);
  fwd(t, "--mode", "train.mode", "mse-only | cdl-only | joint");
  fwd(t, "--steps", "train.steps", "optimizer steps");
  fwd(t, "--lambda", "train.lambda", "contrastive weight of the joint loss");
  fwd(t, "--data", "data.kind", "dino | two-mode");
  fwd(t, "--n", "data.n", "training points");

  CLI::App* s = app.add_subcommand("sample", "generate samples; writes CSV + report JSON");
  add_common(s);
  add_model_flags(s);
  fwd(s, "--sampler", "sampler.kind", "ddpm | pf-euler | pf-heun | churn | parallel | window");
  fwd(s, "--n", "sampler.n", "sample count");
  fwd(s, "--tol", "sampler.tol", "fixed-point tolerance, 0 = auto");
  fwd(s, "--max-iters", "sampler.max_iters", "sweep cap, 0 = T");
  fwd(s, "--window", "sampler.window", "sliding-window width");
  fwd(s, "--drift", "sampler.drift", "pf | ddpm");
  fwd(s, "--init", "sampler.init", "constant | gaussian");
  fwd(s, "--reference", "sampler.reference", "reference CSV, enables per-iteration MMD");

  CLI::App* e = app.add_subcommand("eval-mmd", "unbiased MMD between two sample files");
  add_common(e);
  fwd(e, "--x", "eval.x", "samples CSV");
  fwd(e, "--y", "eval.y", "reference CSV");
  fwd(e, "--bandwidth", "mmd.bandwidth", "kernel sigma, 0 = auto-select on the reference");

  CLI::App* h = app.add_subcommand("heatmap", "denoiser-error field CSV + SVG");
  add_common(h);
  add_model_flags(h);
  fwd(h, "--nx", "heatmap.nx", "spatial grid points");
  fwd(h, "--max-rows", "heatmap.max_rows", "noise-level rows");

  CLI::App* b = app.add_subcommand("bandwidth-sweep", "MMD bandwidth sweep on the dataset");
  add_common(b);
  fwd(b, "--data", "data.kind", "dino | two-mode");
  fwd(b, "--path", "data.path", "dataset CSV path");

  CLI::App* l = app.add_subcommand("llr", "point-wise log-likelihood-ratio diagnostics");
  add_common(l);
  add_model_flags(l);
  fwd(l, "--x", "llr.x", "points, \"x0,x1;x0,x1;...\"");
  fwd(l, "--zeta", "llr.zeta", "noise gaps, comma-separated");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (t->parsed()) return cmd_train(a);
    if (s->parsed()) return cmd_sample(a);
    if (e->parsed()) return cmd_eval_mmd(a);
    if (h->parsed()) return cmd_heatmap(a);
    if (b->parsed()) return cmd_bandwidth_sweep(a);
    if (l->parsed()) return cmd_llr(a);
  } catch (const ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const ContractViolation& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const NumericError& err) {
    std::cerr << "numeric error: " << err.what() << "\n";
    return 3;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace difflab
