#ifndef NFANNEAL_CONFIG_HPP
#define NFANNEAL_CONFIG_HPP

// Run configuration: one INI file with [target], [nf], [mcmc] and [output]
// sections. Unknown sections and keys are errors; [manifest] and [stages]
// (written into run manifests) are ignored so a manifest is itself a config.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "nfanneal/annealer.hpp"
#include "nfanneal/errors.hpp"
#include "nfanneal/io.hpp"
#include "nfanneal/mcmc.hpp"
#include "nfanneal/repressilator.hpp"
#include "nfanneal/target.hpp"

namespace nfanneal {

inline constexpr const char* kVersion = "0.1.0";

enum class TargetKind { kRepressilator, kConjugateGaussian, kTrimodal };

struct TargetConfig {
  TargetKind kind = TargetKind::kRepressilator;
  std::filesystem::path dataset;
  OdeOptions solver;

  // synthetic repressilator data
  RepressilatorParams theta_true = RepressilatorParams::canonical();
  double noise_variance = 0.25;
  std::uint64_t data_seed = 1;
  double t_end = 30.0;
  double interval = 0.6;

  std::vector<double> conjugate_mean{1.0, -0.5};
  double conjugate_variance = 0.5;

  double trimodal_radius = 8.0;
  double trimodal_mode_std = 0.5;
  double trimodal_prior_std = 5.0;
};

enum class ChainExport { kNone, kFinal, kAll };

struct OutputConfig {
  std::filesystem::path directory = "run";
  bool archive = true;
  ChainExport chains = ChainExport::kFinal;
};

struct RunConfig {
  TargetConfig target;
  AnnealConfig nf;
  /// Worker threads for likelihood batches; 0 uses every available core.
  std::size_t nf_threads = 0;
  McmcConfig mcmc;
  OutputConfig output;
};

inline std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::kRepressilator: return "repressilator";
    case TargetKind::kConjugateGaussian: return "conjugate";
    case TargetKind::kTrimodal: return "trimodal";
  }
  return "unknown";
}

inline std::string to_string(ScheduleMode m) {
  switch (m) {
    case ScheduleMode::kAdaptive: return "adaptive";
    case ScheduleMode::kFixed: return "fixed";
    case ScheduleMode::kPreset: return "preset";
  }
  return "unknown";
}

inline std::string to_string(ChainExport c) {
  switch (c) {
    case ChainExport::kNone: return "none";
    case ChainExport::kFinal: return "final";
    case ChainExport::kAll: return "all";
  }
  return "unknown";
}

namespace detail {

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw InputError(key + ": expected a nonnegative integer, got '" + v + "'");
  }
  return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    return parse_number(v);
  } catch (const InputError&) {
    throw InputError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InputError(key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(const std::string& key, const std::string& value)>;

inline std::map<std::string, std::map<std::string, Setter>> config_setters(
    RunConfig& c, const std::filesystem::path& base) {
  auto size = [](std::size_t& f) {
    return [&f](const std::string& k, const std::string& v) { f = parse_count(k, v); };
  };
  auto u64 = [](std::uint64_t& f) {
    return [&f](const std::string& k, const std::string& v) { f = parse_count(k, v); };
  };
  auto real = [](double& f) {
    return [&f](const std::string& k, const std::string& v) { f = parse_real(k, v); };
  };
  auto& t = c.target;
  auto& nf = c.nf;
  auto& mc = c.mcmc;
  return {
      {"target",
       {
           {"kind",
            [&t](const std::string& k, const std::string& v) {
              if (v == "repressilator") t.kind = TargetKind::kRepressilator;
              else if (v == "conjugate") t.kind = TargetKind::kConjugateGaussian;
              else if (v == "trimodal") t.kind = TargetKind::kTrimodal;
              else throw InputError(k + ": unknown target '" + v + "'");
            }},
           {"dataset",
            [&t, base](const std::string&, const std::string& v) {
              t.dataset = v.empty() ? std::filesystem::path() : base / v;
            }},
           {"rtol", real(t.solver.rtol)},
           {"atol", real(t.solver.atol)},
           {"max_steps", size(t.solver.max_steps)},
           {"theta_true",
            [&t](const std::string& k, const std::string& v) {
              const auto vals = parse_number_list(v);
              if (vals.size() != 8) throw InputError(k + ": expected 8 values");
              t.theta_true = RepressilatorParams(vals);
            }},
           {"noise_variance", real(t.noise_variance)},
           {"data_seed", u64(t.data_seed)},
           {"t_end", real(t.t_end)},
           {"interval", real(t.interval)},
           {"mean",
            [&t](const std::string& k, const std::string& v) {
              t.conjugate_mean = parse_number_list(v);
              if (t.conjugate_mean.empty()) throw InputError(k + ": expected at least one value");
            }},
           {"variance", real(t.conjugate_variance)},
           {"radius", real(t.trimodal_radius)},
           {"mode_std", real(t.trimodal_mode_std)},
           {"prior_std", real(t.trimodal_prior_std)},
       }},
      {"nf",
       {
           {"layers", size(nf.layers)},
           {"batch_size", size(nf.batch_size)},
           {"update_steps", size(nf.update_steps)},
           {"window", size(nf.window)},
           {"ess_threshold_ratio", real(nf.ess_threshold_ratio)},
           {"gamma", real(nf.gamma)},
           {"ema_decay", real(nf.ema_decay)},
           {"learning_rate", real(nf.adam.learning_rate)},
           {"adam_beta1", real(nf.adam.beta1)},
           {"adam_beta2", real(nf.adam.beta2)},
           {"adam_epsilon", real(nf.adam.epsilon)},
           {"clip_norm", real(nf.adam.clip_norm)},
           {"seed", u64(nf.seed)},
           {"stall_batches", size(nf.stall_batches)},
           {"min_final_batches", size(nf.min_final_batches)},
           {"ti_samples", size(nf.ti_samples)},
           {"threads", size(c.nf_threads)},
           {"schedule",
            [&nf](const std::string& k, const std::string& v) {
              if (v == "adaptive") nf.mode = ScheduleMode::kAdaptive;
              else if (v == "fixed") nf.mode = ScheduleMode::kFixed;
              else if (v == "preset") nf.mode = ScheduleMode::kPreset;
              else throw InputError(k + ": unknown schedule '" + v + "'");
            }},
           {"fixed_beta", real(nf.fixed_beta)},
           {"fixed_batches", size(nf.fixed_batches)},
           {"preset_stages", size(nf.preset_stages)},
           {"preset_exponent", real(nf.preset_exponent)},
           {"preset_batches_per_stage", size(nf.preset_batches_per_stage)},
       }},
      {"mcmc",
       {
           {"walkers", size(mc.walkers)},
           {"sweeps_per_stage", size(mc.sweeps_per_stage)},
           {"stages", size(mc.stages)},
           {"schedule_exponent", real(mc.schedule_exponent)},
           {"stretch_scale", real(mc.stretch_scale)},
           {"de_scale",
            [&mc](const std::string& k, const std::string& v) {
              if (v == "auto") mc.de_scale.reset();
              else mc.de_scale = parse_real(k, v);
            }},
           {"de_jitter_variance", real(mc.de_jitter_variance)},
           {"stretch_probability", real(mc.stretch_probability)},
           {"seed", u64(mc.seed)},
           {"thin", size(mc.thin)},
       }},
      {"output",
       {
           {"directory",
            [&c, base](const std::string&, const std::string& v) { c.output.directory = base / v; }},
           {"archive",
            [&c](const std::string& k, const std::string& v) { c.output.archive = parse_bool(k, v); }},
           {"chains",
            [&c](const std::string& k, const std::string& v) {
              if (v == "none") c.output.chains = ChainExport::kNone;
              else if (v == "final") c.output.chains = ChainExport::kFinal;
              else if (v == "all") c.output.chains = ChainExport::kAll;
              else throw InputError(k + ": expected none, final or all");
            }},
       }},
  };
}

}  // namespace detail

/// Parses INI text. Relative paths are resolved against `base`.
inline RunConfig parse_config(std::istream& in, const std::filesystem::path& base = ".") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InputError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  RunConfig cfg;
  auto setters = detail::config_setters(cfg, base);
  for (const auto& [section, body] : tree) {
    if (section == "manifest" || section == "stages") continue;
    const auto sec = setters.find(section);
    if (sec == setters.end()) {
      if (!body.data().empty()) throw InputError("config: key '" + section + "' outside any section");
      throw InputError("config: unknown section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      const auto it = sec->second.find(key);
      const std::string name = section + "." + key;
      if (it == sec->second.end()) throw InputError("config: unknown key " + name);
      it->second(name, value.get_value<std::string>());
    }
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("missing file: " + path.string());
  return parse_config(in, path.parent_path().empty() ? "." : path.parent_path());
}

/// Every key with its resolved value; parse_config(config_to_ini(c)) == c.
inline std::string config_to_ini(const RunConfig& c) {
  std::ostringstream o;
  auto num = [](double v) { return format_number(v); };
  const auto& t = c.target;
  o << "[target]\n"
    << "kind = " << to_string(t.kind) << '\n'
    << "dataset = " << (t.dataset.empty() ? std::string() : std::filesystem::absolute(t.dataset).lexically_normal().string()) << '\n'
    << "rtol = " << num(t.solver.rtol) << '\n'
    << "atol = " << num(t.solver.atol) << '\n'
    << "max_steps = " << t.solver.max_steps << '\n'
    << "theta_true = " << format_number_list(t.theta_true.values.data(), 8) << '\n'
    << "noise_variance = " << num(t.noise_variance) << '\n'
    << "data_seed = " << t.data_seed << '\n'
    << "t_end = " << num(t.t_end) << '\n'
    << "interval = " << num(t.interval) << '\n'
    << "mean = " << format_number_list(t.conjugate_mean.data(), t.conjugate_mean.size()) << '\n'
    << "variance = " << num(t.conjugate_variance) << '\n'
    << "radius = " << num(t.trimodal_radius) << '\n'
    << "mode_std = " << num(t.trimodal_mode_std) << '\n'
    << "prior_std = " << num(t.trimodal_prior_std) << "\n\n";
  const auto& n = c.nf;
  o << "[nf]\n"
    << "layers = " << n.layers << '\n'
    << "batch_size = " << n.batch_size << '\n'
    << "update_steps = " << n.update_steps << '\n'
    << "window = " << n.window << '\n'
    << "ess_threshold_ratio = " << num(n.ess_threshold_ratio) << '\n'
    << "gamma = " << num(n.gamma) << '\n'
    << "ema_decay = " << num(n.ema_decay) << '\n'
    << "learning_rate = " << num(n.adam.learning_rate) << '\n'
    << "adam_beta1 = " << num(n.adam.beta1) << '\n'
    << "adam_beta2 = " << num(n.adam.beta2) << '\n'
    << "adam_epsilon = " << num(n.adam.epsilon) << '\n'
    << "clip_norm = " << num(n.adam.clip_norm) << '\n'
    << "seed = " << n.seed << '\n'
    << "stall_batches = " << n.stall_batches << '\n'
    << "min_final_batches = " << n.min_final_batches << '\n'
    << "ti_samples = " << n.ti_samples << '\n'
    << "threads = " << c.nf_threads << '\n'
    << "schedule = " << to_string(n.mode) << '\n'
    << "fixed_beta = " << num(n.fixed_beta) << '\n'
    << "fixed_batches = " << n.fixed_batches << '\n'
    << "preset_stages = " << n.preset_stages << '\n'
    << "preset_exponent = " << num(n.preset_exponent) << '\n'
    << "preset_batches_per_stage = " << n.preset_batches_per_stage << "\n\n";
  const auto& m = c.mcmc;
  o << "[mcmc]\n"
    << "walkers = " << m.walkers << '\n'
    << "sweeps_per_stage = " << m.sweeps_per_stage << '\n'
    << "stages = " << m.stages << '\n'
    << "schedule_exponent = " << num(m.schedule_exponent) << '\n'
    << "stretch_scale = " << num(m.stretch_scale) << '\n'
    << "de_scale = " << (m.de_scale ? num(*m.de_scale) : std::string("auto")) << '\n'
    << "de_jitter_variance = " << num(m.de_jitter_variance) << '\n'
    << "stretch_probability = " << num(m.stretch_probability) << '\n'
    << "seed = " << m.seed << '\n'
    << "thin = " << m.thin << "\n\n";
  o << "[output]\n"
    << "directory = " << std::filesystem::absolute(c.output.directory).lexically_normal().string() << '\n'
    << "archive = " << (c.output.archive ? "true" : "false") << '\n'
    << "chains = " << to_string(c.output.chains) << '\n';
  return o.str();
}

/// Instantiates the configured target, reading the dataset when needed.
inline std::unique_ptr<AnnealedTarget> make_target(const TargetConfig& t) {
  switch (t.kind) {
    case TargetKind::kRepressilator:
      if (t.dataset.empty()) throw InputError("target.dataset is required for the repressilator");
      return std::make_unique<RepressilatorPosterior>(read_dataset(t.dataset), t.solver);
    case TargetKind::kConjugateGaussian:
      return std::make_unique<ConjugateGaussianTarget>(t.conjugate_mean, t.conjugate_variance);
    case TargetKind::kTrimodal:
      return std::make_unique<TrimodalTarget>(t.trimodal_radius, t.trimodal_mode_std,
                                              t.trimodal_prior_std);
  }
  throw InputError("unknown target kind");
}

}  // namespace nfanneal

#endif  // NFANNEAL_CONFIG_HPP
