// Command-line driver for the inverse-UQ pipeline: corpus synthesis, test
// source allocation, emulator training, MCMC sampling and posterior
// analysis, runnable stage by stage or end to end.

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "iuq/common.hpp"
#include "iuq/dataio.hpp"
#include "iuq/pipeline.hpp"

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  unsigned threads = 0;
};

std::string default_out_dir(const std::string& config_hash) {
  const auto now = std::chrono::system_clock::now();
  const auto secs =
      std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch())
          .count();
  return (std::filesystem::path("runs") /
          (std::to_string(secs) + "-" + config_hash))
      .string();
}

iuq::pipeline::StageContext make_context(const CliOptions& opts,
                                         bool require_out) {
  iuq::pipeline::StageContext ctx;
  ctx.config = iuq::io::load_config(opts.config_path);
  ctx.config_hash = iuq::io::config_hash_hex(opts.config_path);
  if (opts.seed) {
    ctx.config.mcmc.seed = *opts.seed;
    ctx.config.toy.seed = *opts.seed;
  }
  if (opts.mode) ctx.config.mode = iuq::io::bias_mode_from_string(*opts.mode);
  if (opts.threads > 0) ctx.config.threads = opts.threads;
  if (ctx.config.threads > 0)
    iuq::set_default_thread_count(ctx.config.threads);

  if (!opts.out_dir.empty())
    ctx.out_dir = opts.out_dir;
  else if (require_out)
    throw iuq::ConfigError("--out is required for stage commands");
  else
    ctx.out_dir = default_out_dir(ctx.config_hash);
  return ctx;
}

void print_report(const iuq::pipeline::PipelineReport& report,
                  const std::string& out_dir) {
  std::cout << "tests: " << report.n_tests << " retained, " << report.n_excluded
            << " excluded\n";
  std::cout << "partition: " << report.n_iuq << " inverse-UQ / " << report.n_val
            << " validation\n";
  for (const auto& q : report.validation.qoi)
    std::cout << "emulator " << q.name << ": Q2=" << q.q2
              << " loocv=" << q.loocv
              << (q.gate_passed ? " [pass]" : " [FAIL]") << "\n";
  if (report.gate_passed) {
    std::cout << "mcmc acceptance rate: " << report.acceptance_rate << "\n";
    std::cout << "kept posterior samples: " << report.kept_samples << "\n";
  }
  std::cout << "artifacts: " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modular Bayesian inverse uncertainty quantification"};
  app.require_subcommand(1);

  CliOptions opts;
  app.add_option("--config", opts.config_path, "configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", opts.out_dir, "output directory");
  app.add_option("--seed", opts.seed, "override the base random seed");
  app.add_option("--mode", opts.mode, "likelihood mode: withbias|nobias");
  app.add_option("--threads", opts.threads, "worker thread cap");

  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic corpus");
  auto* cmd_tsa = app.add_subcommand("tsa", "partition tests for inverse UQ and validation");
  auto* cmd_emulate = app.add_subcommand("emulate", "train the discrepancy and code emulators");
  auto* cmd_mcmc = app.add_subcommand("mcmc", "sample the posterior");
  auto* cmd_analyze = app.add_subcommand("analyze", "summarize and fit the posterior");
  auto* cmd_run = app.add_subcommand("run", "run the full pipeline");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      const auto ctx = make_context(opts, false);
      const auto report = iuq::pipeline::run_pipeline(ctx);
      print_report(report, ctx.out_dir);
      return 0;
    }
    const auto ctx = make_context(opts, true);
    if (cmd_synth->parsed()) {
      iuq::pipeline::stage_synth(ctx);
    } else if (cmd_tsa->parsed()) {
      iuq::pipeline::stage_tsa(ctx);
    } else if (cmd_emulate->parsed()) {
      iuq::pipeline::stage_emulate(ctx);
    } else if (cmd_mcmc->parsed()) {
      iuq::pipeline::stage_mcmc(ctx);
    } else if (cmd_analyze->parsed()) {
      iuq::pipeline::stage_analyze(ctx);
    }
    std::cout << "ok: artifacts in " << ctx.out_dir << "\n";
    return 0;
  } catch (const iuq::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const iuq::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const iuq::pipeline::GateFailure& e) {
    std::cerr << "gate failure: " << e.what() << "\n";
    return 4;
  } catch (const iuq::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
