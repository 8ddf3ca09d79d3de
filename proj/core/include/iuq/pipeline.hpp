#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "iuq/dataio.hpp"
#include "iuq/modular_bayes.hpp"

namespace iuq::pipeline {

/// The emulator validation gate failed (CLI exit code 4).
struct GateFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct StageContext {
  io::RunConfig config;
  std::string out_dir;
  std::string config_hash;
};

struct PipelineReport {
  int n_tests = 0;
  int n_excluded = 0;
  int n_iuq = 0;
  int n_val = 0;
  bayes::ValidationReport validation;
  double acceptance_rate = 0.0;
  int kept_samples = 0;
  bool gate_passed = false;
  std::map<std::string, std::string> files;  // manifest key -> file name
};

/// Stage entry points; each reads its predecessors' artifacts from the
/// manifest in out_dir and appends its own.
void stage_synth(const StageContext& ctx);
void stage_tsa(const StageContext& ctx);
void stage_emulate(const StageContext& ctx);
void stage_mcmc(const StageContext& ctx);
void stage_analyze(const StageContext& ctx);

/// Runs every stage in order and writes report.json. Throws GateFailure when
/// the emulator validation gate fails (artifacts up to that point are kept).
PipelineReport run_pipeline(const StageContext& ctx);

/// Reads the manifest written by the stages (for tooling and tests).
std::map<std::string, std::string> read_manifest(const std::string& out_dir);

}  // namespace iuq::pipeline
