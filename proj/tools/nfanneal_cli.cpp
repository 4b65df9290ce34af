// nfanneal: data generation, annealed flow and ensemble MCMC runs, and
// evidence reports from the resulting run directories.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "nfanneal/annealer.hpp"
#include "nfanneal/config.hpp"
#include "nfanneal/evidence.hpp"
#include "nfanneal/flow_io.hpp"
#include "nfanneal/io.hpp"
#include "nfanneal/mcmc.hpp"
#include "nfanneal/repressilator.hpp"

namespace fs = std::filesystem;
using namespace nfanneal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

constexpr std::uint64_t kTiSeedOffset = 0x9E3779B97F4A7C15ULL;

std::vector<std::string> theta_columns(std::size_t dim) {
  std::vector<std::string> c;
  for (std::size_t i = 1; i <= dim; ++i) c.push_back("theta_" + std::to_string(i));
  return c;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out << text;
}

RunConfig resolve(const std::string& config_path, const std::string& output_override) {
  RunConfig cfg = load_config(config_path);
  if (!output_override.empty()) cfg.output.directory = output_override;
  return cfg;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& cfg) {
  const auto& t = cfg.target;
  const auto times = canonical_times(t.t_end, t.interval);
  const auto sim = generate_data(t.theta_true, t.noise_variance, t.data_seed, times, t.solver);
  fs::create_directories(cfg.output.directory);
  write_dataset(cfg.output.directory / "dataset.csv", sim.dataset);
  CsvWriter noiseless(cfg.output.directory / "noiseless.csv", {"time", "x1", "x2", "x3", "total"});
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto& s = sim.noiseless_states[i];
    noiseless.numeric_row({times[i], s[0], s[1], s[2], sim.noiseless_total[i]});
  }
  std::cout << "wrote " << times.size() << " observations to "
            << (cfg.output.directory / "dataset.csv").string() << '\n';
  return kExitOk;
}

// ------------------------------------------------------------------ nf-run

struct StageSummary {
  StageRecord record;
  std::string checkpoint;
};

std::string manifest_text(const RunConfig& cfg, const std::string& command, const std::string& status,
                          const std::vector<StageSummary>& stages,
                          const std::vector<BatchRecord>& batches) {
  std::string s = "[manifest]\nversion = " + std::string(kVersion) + "\ncommand = " + command +
                  "\nstatus = " + status + "\n\n" + config_to_ini(cfg);
  if (stages.empty()) return s;
  s += "\n[stages]\ncolumns = beta n_eff ema_n_eff likelihood_evaluations checkpoint\n";
  for (const auto& st : stages) {
    const auto& r = st.record;
    // the last batch weighted at this stage's beta
    std::size_t idx = r.first_batch + r.batches;
    if (idx >= batches.size()) idx = batches.empty() ? 0 : batches.size() - 1;
    const double n_eff = batches.empty() ? 0.0 : batches[idx].ess;
    const double ema = batches.empty() ? 0.0 : batches[idx].ema_ess;
    char key[32];
    std::snprintf(key, sizeof key, "stage_%04zu", r.stage);
    s += std::string(key) + " = " + format_number(r.beta) + " " + format_number(n_eff) + " " +
         format_number(ema) + " " + std::to_string(r.likelihood_evaluations) + " " + st.checkpoint +
         "\n";
  }
  return s;
}

void export_archive(const fs::path& path, const SampleArchive& archive, std::size_t dim) {
  std::vector<std::string> cols = theta_columns(dim);
  cols.push_back("log_prior");
  cols.push_back("log_lik");
  for (std::size_t id : archive.model_ids()) cols.push_back("logq_m" + std::to_string(id));
  cols.push_back("batch");
  cols.push_back("model");
  CsvWriter w(path, cols);
  std::vector<double> row(cols.size());
  for (const auto& e : archive.entries()) {
    for (Eigen::Index i = 0; i < e.samples.cols(); ++i) {
      std::size_t c = 0;
      for (Eigen::Index d = 0; d < e.samples.rows(); ++d) row[c++] = e.samples(d, i);
      row[c++] = e.log_base[i];
      row[c++] = e.log_update[i];
      for (Eigen::Index k = 0; k < e.log_q.cols(); ++k) row[c++] = e.log_q(i, k);
      row[c++] = static_cast<double>(e.batch_index);
      row[c++] = static_cast<double>(e.model_id);
      w.numeric_row(row);
    }
  }
}

void write_ladder(const fs::path& path, const TiLadder& ladder) {
  CsvWriter w(path, {"beta", "integrand", "samples"});
  for (const auto& p : ladder.points) {
    w.numeric_row({p.beta, p.integrand, static_cast<double>(p.samples)});
  }
}

int cmd_nf_run(RunConfig cfg) {
  const auto target = make_target(cfg.target);
  cfg.nf.threads = cfg.nf_threads == 0 ? default_thread_count() : cfg.nf_threads;
  cfg.nf.validate();
  const fs::path dir = cfg.output.directory;
  fs::create_directories(dir / "checkpoints");
  const std::size_t dim = target->dim();

  std::vector<StageSummary> stages;
  std::vector<BatchRecord> batches;
  write_text(dir / "manifest.ini", manifest_text(cfg, "nf-run", "running", stages, batches));

  CsvWriter schedule(dir / "schedule.csv", {"batch", "beta", "ess", "ema_ess",
                                            "likelihood_evaluations", "loss", "beta_updated"});
  AnnealObserver obs;
  obs.on_batch = [&](const BatchRecord& r) {
    batches.push_back(r);
    schedule.numeric_row({static_cast<double>(r.batch), r.beta, r.ess, r.ema_ess,
                          static_cast<double>(r.likelihood_evaluations), r.loss,
                          r.beta_updated ? 1.0 : 0.0});
    schedule.flush();
  };
  obs.on_stage = [&](const StageRecord& r) {
    char name[40];
    std::snprintf(name, sizeof name, "checkpoints/stage_%04zu.json", r.stage);
    save_checkpoint(r.checkpoint, dir / name);
    stages.push_back({r, name});
    std::cerr << "stage " << r.stage << " beta " << format_number(r.beta) << " batches "
              << r.batches << " evaluations " << r.likelihood_evaluations << '\n';
  };

  AnnealResult result;
  try {
    result = anneal_run(*target, cfg.nf, obs);
  } catch (const ScheduleStallError&) {
    schedule.flush();
    write_text(dir / "manifest.ini", manifest_text(cfg, "nf-run", "stalled", stages, batches));
    throw;
  } catch (const TrainingDivergedError&) {
    schedule.flush();
    write_text(dir / "manifest.ini", manifest_text(cfg, "nf-run", "diverged", stages, batches));
    throw;
  }
  schedule.flush();

  if (cfg.output.archive) export_archive(dir / "archive.csv", result.archive, dim);

  std::vector<StageRecord> records;
  for (const auto& s : stages) records.push_back(s.record);
  std::optional<StageDraw> final_draw;
  TiLadder ladder;
  if (cfg.nf.mode != ScheduleMode::kFixed) {
    ladder = nf_ti_ladder(*target, records, cfg.nf.ti_sample_count(), cfg.nf.seed + kTiSeedOffset,
                          cfg.nf.threads, [&](const StageDraw& d) { final_draw = d; });
    write_ladder(dir / "ti_ladder.csv", ladder);
  } else {
    Rng rng(cfg.nf.seed + kTiSeedOffset);
    final_draw = draw_stage(*target, records.back(), cfg.nf.ti_sample_count(), rng, cfg.nf.threads);
  }

  CsvWriter fin(dir / "final_samples.csv",
                concat(theta_columns(dim), {"log_prior", "log_lik", "log_q"}));
  std::vector<double> row(dim + 3);
  for (Eigen::Index i = 0; i < final_draw->samples.cols(); ++i) {
    for (std::size_t d = 0; d < dim; ++d) row[d] = final_draw->samples(static_cast<Eigen::Index>(d), i);
    row[dim] = final_draw->log_base[i];
    row[dim + 1] = final_draw->log_update[i];
    row[dim + 2] = final_draw->log_q[i];
    fin.numeric_row(row);
  }
  save_checkpoint(result.final_model, dir / "final_model.json");
  write_text(dir / "manifest.ini", manifest_text(cfg, "nf-run", "complete", stages, batches));
  std::cout << "completed " << result.batches.size() << " batches over " << stages.size()
            << " stages; final beta " << format_number(result.stages.back().beta) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- mcmc-run

int cmd_mcmc_run(const RunConfig& cfg) {
  const auto target = make_target(cfg.target);
  cfg.mcmc.validate();
  const fs::path dir = cfg.output.directory;
  fs::create_directories(dir);
  const std::size_t dim = target->dim();
  write_text(dir / "manifest.ini", manifest_text(cfg, "mcmc-run", "running", {}, {}));

  std::optional<CsvWriter> chains;
  if (cfg.output.chains != ChainExport::kNone) {
    chains.emplace(dir / "chains.csv",
                   concat(concat({"stage", "beta", "sweep", "walker"}, theta_columns(dim)),
                          {"log_prior", "log_lik", "accepted"}));
  }
  std::vector<double> row(dim + 7);
  McmcSink sink;
  if (chains) {
    sink = [&](const McmcSample& s) {
      if (cfg.output.chains == ChainExport::kFinal && s.stage != cfg.mcmc.stages) return;
      row[0] = static_cast<double>(s.stage);
      row[1] = s.beta;
      row[2] = static_cast<double>(s.sweep);
      row[3] = static_cast<double>(s.walker);
      for (std::size_t d = 0; d < dim; ++d) row[4 + d] = s.position[d];
      row[4 + dim] = s.log_base;
      row[5 + dim] = s.log_update;
      row[6 + dim] = s.accepted ? 1.0 : 0.0;
      chains->numeric_row(row);
    };
  }
  CsvWriter diag(dir / "diagnostics.csv", {"stage", "beta", "attempts", "accepts", "acceptance_rate",
                                           "mean_log_likelihood", "stored_samples"});
  auto on_stage = [&](const McmcStage& s) {
    diag.numeric_row({static_cast<double>(s.stage), s.beta, static_cast<double>(s.attempts),
                      static_cast<double>(s.accepts), s.acceptance_rate(), s.mean_log_likelihood,
                      static_cast<double>(s.stored_samples)});
    if (s.stage % 10 == 0 || s.stage == cfg.mcmc.stages) {
      std::cerr << "stage " << s.stage << " beta " << format_number(s.beta) << " acceptance "
                << format_number(s.acceptance_rate()) << '\n';
    }
  };
  const auto result = run_annealed_ensemble(*target, cfg.mcmc, sink, on_stage);
  write_ladder(dir / "ti_ladder.csv", result.ladder);

  CsvWriter ess(dir / "final_ess.csv", {"parameter", "ess", "stored_samples"});
  const double stored = static_cast<double>(result.stages.back().stored_samples);
  for (std::size_t p = 0; p < dim; ++p) {
    ess.numeric_row({static_cast<double>(p + 1), ensemble_ess(result.final_chains, p), stored});
  }
  write_text(dir / "manifest.ini", manifest_text(cfg, "mcmc-run", "complete", {}, {}));
  std::cout << "completed " << result.stages.size() << " stages; final acceptance "
            << format_number(result.stages.back().acceptance_rate()) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- evidence

fs::path require_file(const fs::path& p) {
  if (!fs::exists(p)) throw InputError("missing file: " + p.string());
  return p;
}

WeightedSampleSet load_flow_proposal(const fs::path& dir) {
  const auto t = read_csv(require_file(dir / "final_samples.csv"));
  const auto lp = t.values("log_prior"), ll = t.values("log_lik"), lq = t.values("log_q");
  WeightedSampleSet set;
  set.log_target.resize(static_cast<Eigen::Index>(lp.size()));
  set.log_proposal.resize(static_cast<Eigen::Index>(lp.size()));
  for (std::size_t i = 0; i < lp.size(); ++i) {
    set.log_target[static_cast<Eigen::Index>(i)] = lp[i] + ll[i];
    set.log_proposal[static_cast<Eigen::Index>(i)] = lq[i];
  }
  return set;
}

WeightedSampleSet load_mixture_proposal(const fs::path& dir) {
  const auto t = read_csv(require_file(dir / "archive.csv"));
  std::vector<std::size_t> q_cols;
  std::vector<double> ids;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    if (t.columns[c].rfind("logq_m", 0) == 0) {
      q_cols.push_back(c);
      ids.push_back(parse_number(t.columns[c].substr(6)));
    }
  }
  if (q_cols.empty()) throw InputError("archive.csv has no model log-density columns");
  const std::size_t lp = t.column("log_prior"), ll = t.column("log_lik"), model = t.column("model");
  std::vector<double> counts(ids.size(), 0.0);
  for (const auto& r : t.rows) {
    const auto it = std::find(ids.begin(), ids.end(), r[model]);
    if (it == ids.end()) throw InputError("archive.csv row references an unknown model");
    counts[static_cast<std::size_t>(it - ids.begin())] += 1.0;
  }
  WeightedSampleSet set;
  set.log_target.resize(static_cast<Eigen::Index>(t.rows.size()));
  set.log_proposal.resize(static_cast<Eigen::Index>(t.rows.size()));
  std::vector<double> q(q_cols.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    for (std::size_t k = 0; k < q_cols.size(); ++k) q[k] = r[q_cols[k]];
    set.log_target[static_cast<Eigen::Index>(i)] = r[lp] + r[ll];
    set.log_proposal[static_cast<Eigen::Index>(i)] = mixture_log_density(q, counts);
  }
  return set;
}

TiLadder load_ladder(const fs::path& dir) {
  const auto t = read_csv(require_file(dir / "ti_ladder.csv"));
  TiLadder ladder;
  const auto b = t.values("beta"), f = t.values("integrand"), n = t.values("samples");
  for (std::size_t i = 0; i < b.size(); ++i) {
    ladder.points.push_back({b[i], f[i], static_cast<std::size_t>(n[i])});
  }
  return ladder;
}

nlohmann::json estimate_json(const EvidenceEstimate& e) {
  return {{"method", to_string(e.method)},
          {"log_evidence", e.log_evidence},
          {"total", e.total},
          {"excluded", e.excluded},
          {"ess_before", e.ess_before},
          {"ess_after", e.ess_after},
          {"unpruned_log_evidence", e.unpruned_log_evidence}};
}

struct EvidenceOptions {
  std::string run;
  std::string method = "both";
  std::string proposal = "mixture";
  bool prune = true;
  double cutoff = kDefaultTiCutoff;
};

int cmd_evidence(const EvidenceOptions& opt) {
  const fs::path dir = opt.run;
  if (!fs::is_directory(dir)) throw InputError("missing run directory: " + dir.string());
  nlohmann::json report;
  report["version"] = kVersion;
  report["run"] = fs::absolute(dir).lexically_normal().string();
  report["estimates"] = nlohmann::json::array();

  if (opt.method == "is" || opt.method == "both") {
    const auto set = opt.proposal == "mixture" ? load_mixture_proposal(dir) : load_flow_proposal(dir);
    const auto est = evidence_is(set, opt.prune);
    auto j = estimate_json(est);
    j["proposal"] = opt.proposal;
    report["estimates"].push_back(j);
    std::cout << to_string(est.method) << " (" << opt.proposal << ")  log evidence "
              << format_number(est.log_evidence) << "  ESS " << format_number(est.ess_before)
              << " -> " << format_number(est.ess_after) << "  excluded " << est.excluded << '\n';
  }
  if (opt.method == "ti" || opt.method == "both") {
    const auto ladder = load_ladder(dir);
    CsvWriter w(dir / "ti_integrand.csv", {"beta", "integrand", "included"});
    report["ladder"] = nlohmann::json::array();
    for (const auto& p : ladder.points) {
      const bool kept = std::isfinite(p.integrand) && p.integrand >= opt.cutoff;
      w.numeric_row({p.beta, p.integrand, kept ? 1.0 : 0.0});
      report["ladder"].push_back(
          {{"beta", p.beta}, {"integrand", p.integrand}, {"samples", p.samples}, {"included", kept}});
    }
    w.flush();
    const auto est = evidence_ti(ladder, opt.cutoff);
    report["estimates"].push_back(estimate_json(est));
    std::cout << "ti  log evidence " << format_number(est.log_evidence) << "  points "
              << est.total << "  excluded " << est.excluded << '\n';
  }
  write_text(dir / "evidence.json", report.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive annealing of normalizing flows for Bayesian evidence estimation"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  std::string config_path, output;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run configuration file")->required();
    sub->add_option("-o,--output", output, "output directory (overrides [output] directory)");
  };
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic repressilator dataset");
  add_run_options(simulate);
  auto* nf_run = app.add_subcommand("nf-run", "train a flow by adaptive annealing");
  add_run_options(nf_run);
  auto* mcmc_run = app.add_subcommand("mcmc-run", "run annealed ensemble MCMC");
  add_run_options(mcmc_run);

  EvidenceOptions ev;
  auto* evidence = app.add_subcommand("evidence", "estimate the log evidence of a finished run");
  evidence->add_option("-r,--run", ev.run, "run directory")->required();
  evidence->add_option("-m,--method", ev.method, "is, ti or both")
      ->capture_default_str()
      ->check(CLI::IsMember({"is", "ti", "both"}));
  evidence->add_option("-p,--proposal", ev.proposal, "importance proposal: flow or mixture")
      ->capture_default_str()
      ->check(CLI::IsMember({"flow", "mixture"}));
  evidence->add_flag("!--no-prune", ev.prune, "report unpruned importance sampling");
  evidence->add_option("--cutoff", ev.cutoff, "drop ladder points with integrand below this")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*simulate) return cmd_simulate(resolve(config_path, output));
    if (*nf_run) return cmd_nf_run(resolve(config_path, output));
    if (*mcmc_run) return cmd_mcmc_run(resolve(config_path, output));
    if (*evidence) return cmd_evidence(ev);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitValidation;
}
