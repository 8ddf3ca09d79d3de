#include "iuq/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "iuq/common.hpp"
#include "iuq/inference.hpp"
#include "iuq/posterior.hpp"
#include "iuq/simulator.hpp"
#include "iuq/toymodel.hpp"

namespace iuq::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string path_in(const StageContext& ctx, const std::string& name) {
  return (fs::path(ctx.out_dir) / name).string();
}

json load_manifest_json(const std::string& out_dir) {
  const fs::path p = fs::path(out_dir) / "manifest.json";
  if (!fs::exists(p)) return json{{"files", json::object()}, {"stages", json::array()}};
  std::ifstream in(p);
  json j;
  in >> j;
  return j;
}

void save_manifest(const StageContext& ctx, json& manifest,
                   const std::string& stage,
                   const std::map<std::string, std::string>& files) {
  for (const auto& [key, name] : files) manifest["files"][key] = name;
  auto& stages = manifest["stages"];
  if (std::find(stages.begin(), stages.end(), json(stage)) == stages.end())
    stages.push_back(stage);
  manifest["config_hash"] = ctx.config_hash;
  manifest["seed"] = ctx.config.mcmc.seed;
  std::ofstream out(path_in(ctx, "manifest.json"));
  out << manifest.dump(2) << "\n";
}

std::string manifest_file(const json& manifest, const std::string& key,
                          const std::string& stage_hint) {
  const auto& files = manifest.at("files");
  if (!files.contains(key))
    throw DataError("manifest has no '" + key + "' artifact; run the " +
                    stage_hint + " stage first");
  return files.at(key).get<std::string>();
}

sim::Simulator make_simulator(const io::RunConfig& cfg, int r, int p, int m) {
  if (cfg.simulator == "toy") {
    return [](const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
      return toy::simulate(x, theta);
    };
  }
  auto table = std::make_shared<sim::TabulatedSimulator>(cfg.table_path, r, p, m);
  return [table](const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
    return (*table)(x, theta);
  };
}

Eigen::VectorXd nominal_theta(const io::RunConfig& cfg) {
  return Eigen::Map<const Eigen::VectorXd>(
      cfg.prior.nominal.data(),
      static_cast<Eigen::Index>(cfg.prior.nominal.size()));
}

toy::ToySpec toy_spec_from(const io::RunConfig& cfg) {
  toy::ToySpec spec = toy::default_spec();
  spec.bias_amplitude = cfg.toy.bias_amplitude;
  spec.noise_rel = cfg.toy.noise_rel;
  if (!cfg.toy.theta_true.empty()) {
    spec.theta_true = Eigen::Map<const Eigen::VectorXd>(
        cfg.toy.theta_true.data(),
        static_cast<Eigen::Index>(cfg.toy.theta_true.size()));
  }
  return spec;
}

void write_exclusions_csv(const std::string& path, const io::TestTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << "test_id,reason\n";
  for (const auto& t : table.tests)
    if (t.excluded) out << t.test_id << "," << t.exclusion_reason << "\n";
}

void write_residuals_csv(const std::string& path, const std::vector<int>& ids,
                         const Eigen::MatrixXd& residuals,
                         const std::vector<std::string>& qoi_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(17);
  out << "test_id";
  for (const auto& n : qoi_names) out << ",resid_" << n;
  out << "\n";
  for (Eigen::Index i = 0; i < residuals.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index q = 0; q < residuals.cols(); ++q)
      out << "," << residuals(i, q);
    out << "\n";
  }
}

Eigen::MatrixXd read_residuals_csv(const std::string& path,
                                   std::vector<int>& ids) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = io::split_csv_line(line);
  const int m = static_cast<int>(header.size()) - 1;
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = io::split_csv_line(line);
    const std::string ctx = path + ":" + std::to_string(lineno);
    if (static_cast<int>(cells.size()) != m + 1)
      throw DataError(ctx + ": wrong cell count");
    ids.push_back(static_cast<int>(io::parse_double(cells[0], ctx)));
    std::vector<double> row;
    for (int q = 0; q < m; ++q)
      row.push_back(io::parse_double(cells[static_cast<std::size_t>(q + 1)], ctx));
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int q = 0; q < m; ++q)
      out(static_cast<Eigen::Index>(i), q) = rows[i][static_cast<std::size_t>(q)];
  return out;
}

void write_delta_csv(const std::string& path, const std::vector<int>& ids,
                     const Eigen::MatrixXd& delta,
                     const Eigen::VectorXd& sigma_bias,
                     const std::vector<std::string>& qoi_names) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.precision(17);
  const int m = static_cast<int>(delta.cols());
  out << "test_id";
  for (const auto& n : qoi_names) out << ",delta_" << n;
  for (const auto& n : qoi_names) out << ",var_" << n;
  out << "\n";
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (int q = 0; q < m; ++q) out << "," << delta(i, q);
    for (int q = 0; q < m; ++q) out << "," << sigma_bias(i * m + q);
    out << "\n";
  }
}

void read_delta_csv(const std::string& path, std::vector<int>& ids,
                    Eigen::MatrixXd& delta, Eigen::VectorXd& sigma_bias) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header = io::split_csv_line(line);
  if ((header.size() - 1) % 2 != 0)
    throw DataError(path + ": malformed delta header");
  const int m = static_cast<int>((header.size() - 1) / 2);
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = io::split_csv_line(line);
    const std::string ctx = path + ":" + std::to_string(lineno);
    if (cells.size() != header.size()) throw DataError(ctx + ": wrong cell count");
    ids.push_back(static_cast<int>(io::parse_double(cells[0], ctx)));
    std::vector<double> row;
    for (std::size_t c = 1; c < cells.size(); ++c)
      row.push_back(io::parse_double(cells[c], ctx));
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  delta.resize(n, m);
  sigma_bias.resize(n * m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int q = 0; q < m; ++q) {
      delta(i, q) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)];
      sigma_bias(i * m + q) =
          rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(m + q)];
    }
}

json gp_models_to_json(const std::vector<gp::GpModel>& models) {
  json arr = json::array();
  for (const auto& m : models) arr.push_back(json::parse(gp::to_json(m)));
  return arr;
}

std::vector<gp::GpModel> gp_models_from_json(const json& arr) {
  std::vector<gp::GpModel> models;
  for (const auto& j : arr) models.push_back(gp::from_json(j.dump()));
  return models;
}

bayes::CodeEmulator load_code_emulator(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  json j;
  in >> j;
  if (j.value("kind", "") != "iuq.code")
    throw DataError(path + ": not a code-emulator document");
  bayes::CodeEmulator em;
  em.r = j.at("r").get<int>();
  em.p = j.at("p").get<int>();
  em.n_design = j.at("n_design").get<int>();
  em.qoi_models = gp_models_from_json(j.at("models"));
  return em;
}

struct TsaArtifacts {
  io::TestTable table;  // retained tests only
  tsa::TestPartition partition;
  Eigen::MatrixXd residuals;  // aligned with table rows
};

TsaArtifacts load_tsa_artifacts(const StageContext& ctx, const json& manifest) {
  TsaArtifacts art;
  art.table =
      io::load_tests(path_in(ctx, manifest_file(manifest, "processed_tests", "tsa")));
  art.partition = tsa::read_partition_csv(
      path_in(ctx, manifest_file(manifest, "partition", "tsa")));
  std::vector<int> ids;
  art.residuals = read_residuals_csv(
      path_in(ctx, manifest_file(manifest, "residuals", "tsa")), ids);
  const auto expect = art.table.retained_ids();
  if (ids != expect)
    throw DataError("residuals.csv ids do not match processed_tests.csv");
  return art;
}

Eigen::MatrixXd rows_for_ids(const io::TestTable& table,
                             const std::vector<int>& ids,
                             bool outputs) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()),
                      outputs ? table.m() : table.r());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& t = table.by_id(ids[i]);
    out.row(static_cast<Eigen::Index>(i)) =
        (outputs ? t.y_meas : t.x).transpose();
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> read_manifest(const std::string& out_dir) {
  const json manifest = load_manifest_json(out_dir);
  std::map<std::string, std::string> files;
  for (const auto& [key, value] : manifest.at("files").items())
    files[key] = value.get<std::string>();
  return files;
}

void stage_synth(const StageContext& ctx) {
  fs::create_directories(ctx.out_dir);
  json manifest = load_manifest_json(ctx.out_dir);

  const toy::ToySpec spec = toy_spec_from(ctx.config);
  const io::TestTable table =
      toy::generate_experiments(spec, ctx.config.toy.n_tests, ctx.config.toy.seed);
  io::write_tests(path_in(ctx, "tests.csv"), table);

  json truth;
  truth["theta_true"] =
      std::vector<double>(spec.theta_true.begin(), spec.theta_true.end());
  truth["bias_amplitude"] = spec.bias_amplitude;
  truth["noise_rel"] = spec.noise_rel;
  truth["seed"] = ctx.config.toy.seed;
  truth["config_hash"] = ctx.config_hash;
  std::ofstream(path_in(ctx, "truth.json")) << truth.dump(2) << "\n";

  save_manifest(ctx, manifest, "synth",
                {{"tests", "tests.csv"}, {"truth", "truth.json"}});
}

void stage_tsa(const StageContext& ctx) {
  fs::create_directories(ctx.out_dir);
  json manifest = load_manifest_json(ctx.out_dir);
  const auto& cfg = ctx.config;

  std::string tests_path;
  if (manifest["files"].contains("tests"))
    tests_path = path_in(ctx, manifest["files"]["tests"].get<std::string>());
  else if (!cfg.tests_path.empty())
    tests_path = cfg.tests_path;
  else
    throw DataError("no test data: run the synth stage or set data.tests_path");

  io::TestTable table = io::load_tests(tests_path);

  if (cfg.densitometer_correction) {
    // Densitometer columns are every QoI but the topmost (CT-measured) one.
    std::vector<int> cols;
    for (int q = 0; q + 1 < table.m(); ++q) cols.push_back(q);
    io::apply_densitometer_correction(table, cols);
  }

  std::vector<int> elevation(static_cast<std::size_t>(table.m()));
  for (int q = 0; q < table.m(); ++q) elevation[static_cast<std::size_t>(q)] = q;
  io::filter_tests(table, elevation, nullptr);

  const Eigen::VectorXd theta0 = nominal_theta(cfg);
  const sim::Simulator simulator = make_simulator(
      cfg, table.r(), static_cast<int>(theta0.size()), table.m());

  Eigen::MatrixXd residuals;
  try {
    residuals = bayes::compute_residuals(table, simulator, theta0);
  } catch (const DataError& e) {
    if (cfg.simulator == "table") {
      // Emit the full nominal-parameter request so the runs can be added.
      const auto rows = table.retained_rows();
      Eigen::MatrixXd req(static_cast<Eigen::Index>(rows.size()),
                          table.r() + theta0.size());
      std::vector<int> req_ids;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = table.tests[static_cast<std::size_t>(rows[i])];
        req.row(static_cast<Eigen::Index>(i))
            << t.x.transpose(), theta0.transpose();
        req_ids.push_back(t.test_id);
      }
      sim::write_design_request(path_in(ctx, "theta0_request.csv"), req_ids,
                                req, table.r(),
                                static_cast<int>(theta0.size()), table.m());
      throw DataError(std::string(e.what()) +
                      "; wrote theta0_request.csv with the runs needed");
    }
    throw;
  }
  io::filter_tests(table, elevation, &residuals);

  // Keep only the rows of still-retained tests.
  const auto retained = table.retained_rows();
  std::set<int> retained_set(retained.begin(), retained.end());
  Eigen::MatrixXd kept(static_cast<Eigen::Index>(retained.size()),
                       residuals.cols());
  {
    Eigen::Index w = 0;
    Eigen::Index src = 0;
    for (std::size_t i = 0; i < table.tests.size(); ++i) {
      const auto& t = table.tests[i];
      const bool had_residual_row =
          !t.excluded || t.exclusion_reason.rfind("outlier", 0) == 0;
      if (!had_residual_row) continue;
      if (!t.excluded) kept.row(w++) = residuals.row(src);
      ++src;
    }
    residuals = kept;
  }

  io::TestTable retained_table;
  retained_table.x_names = table.x_names;
  retained_table.y_names = table.y_names;
  for (const auto& t : table.tests)
    if (!t.excluded) retained_table.tests.push_back(t);

  const tsa::TestPartition partition =
      tsa::sequential_tsa(retained_table.retained_ids(),
                          retained_table.retained_x(), cfg.alpha, cfg.beta,
                          cfg.measure);
  const tsa::CoverageTrace trace = tsa::select_validation_init(
      retained_table.retained_ids(), retained_table.retained_x());

  io::write_tests(path_in(ctx, "processed_tests.csv"), retained_table);
  write_exclusions_csv(path_in(ctx, "exclusions.csv"), table);
  write_residuals_csv(path_in(ctx, "residuals.csv"),
                      retained_table.retained_ids(), residuals, table.y_names);
  tsa::write_partition_csv(path_in(ctx, "partition.csv"), partition);
  tsa::write_coverage_csv(path_in(ctx, "coverage.csv"), trace);

  save_manifest(ctx, manifest, "tsa",
                {{"processed_tests", "processed_tests.csv"},
                 {"exclusions", "exclusions.csv"},
                 {"residuals", "residuals.csv"},
                 {"partition", "partition.csv"},
                 {"coverage", "coverage.csv"}});
}

void stage_emulate(const StageContext& ctx) {
  json manifest = load_manifest_json(ctx.out_dir);
  const auto& cfg = ctx.config;
  const TsaArtifacts art = load_tsa_artifacts(ctx, manifest);
  const auto prior = bayes::PriorSpec::from_table(cfg.prior);
  const std::uint64_t base_seed = cfg.mcmc.seed;

  const std::vector<int> all_ids = art.table.retained_ids();
  std::map<int, Eigen::Index> row_of;
  for (std::size_t i = 0; i < all_ids.size(); ++i)
    row_of[all_ids[i]] = static_cast<Eigen::Index>(i);

  const Eigen::MatrixXd x_val = rows_for_ids(art.table, art.partition.val_ids, false);
  const Eigen::MatrixXd x_iuq = rows_for_ids(art.table, art.partition.iuq_ids, false);
  Eigen::MatrixXd resid_val(static_cast<Eigen::Index>(art.partition.val_ids.size()),
                            art.table.m());
  for (std::size_t i = 0; i < art.partition.val_ids.size(); ++i)
    resid_val.row(static_cast<Eigen::Index>(i)) =
        art.residuals.row(row_of.at(art.partition.val_ids[i]));

  // Model discrepancy emulator over the validation tests.
  const bayes::BiasModel bias =
      bayes::train_gpbias(x_val, resid_val, cfg.gp, derive_seed(base_seed, 11));
  Eigen::MatrixXd delta;
  Eigen::VectorXd sigma_bias;
  bayes::evaluate_bias(bias, x_iuq, delta, sigma_bias);
  write_delta_csv(path_in(ctx, "delta.csv"), art.partition.iuq_ids, delta,
                  sigma_bias, art.table.y_names);

  // Code emulator design over (x, theta).
  const bayes::CodeDesign design = bayes::build_code_design(
      art.partition.iuq_ids, x_iuq, prior, cfg.n_design, derive_seed(base_seed, 22));
  const sim::Simulator simulator =
      make_simulator(cfg, art.table.r(), prior.size(), art.table.m());

  if (cfg.simulator == "table") {
    const bayes::CodeDesign holdout = bayes::build_holdout_design(
        art.partition.iuq_ids, x_iuq, prior, cfg.n_design, cfg.holdout_fraction,
        derive_seed(base_seed, 33));
    Eigen::MatrixXd req(design.inputs.rows() + holdout.inputs.rows(),
                        design.inputs.cols());
    req << design.inputs, holdout.inputs;
    std::vector<int> req_ids = design.row_test_ids;
    req_ids.insert(req_ids.end(), holdout.row_test_ids.begin(),
                   holdout.row_test_ids.end());
    sim::write_design_request(path_in(ctx, "design_request.csv"), req_ids, req,
                              design.r, design.p, art.table.m());
  }

  const Eigen::MatrixXd outputs =
      bayes::evaluate_design(design, simulator, art.table.m());
  bayes::write_design_csv(path_in(ctx, "design.csv"), design, outputs);

  const bayes::CodeTrainResult code = bayes::train_and_validate_gpcode(
      design, outputs, art.table.y_names, simulator, art.partition.iuq_ids,
      x_iuq, prior, cfg.holdout_fraction, cfg.q2_threshold, cfg.gp,
      derive_seed(base_seed, 33));

  json bias_doc;
  bias_doc["kind"] = "iuq.bias";
  bias_doc["qoi_names"] = art.table.y_names;
  bias_doc["models"] = gp_models_to_json(bias.qoi_models);
  bias_doc["config_hash"] = ctx.config_hash;
  std::ofstream(path_in(ctx, "gpbias.json")) << bias_doc.dump(2) << "\n";

  json code_doc;
  code_doc["kind"] = "iuq.code";
  code_doc["r"] = code.emulator.r;
  code_doc["p"] = code.emulator.p;
  code_doc["n_design"] = code.emulator.n_design;
  code_doc["qoi_names"] = art.table.y_names;
  code_doc["models"] = gp_models_to_json(code.emulator.qoi_models);
  code_doc["config_hash"] = ctx.config_hash;
  std::ofstream(path_in(ctx, "gpcode.json")) << code_doc.dump(2) << "\n";

  std::ofstream(path_in(ctx, "validation.json")) << code.report.to_json() << "\n";

  save_manifest(ctx, manifest, "emulate",
                {{"delta", "delta.csv"},
                 {"design", "design.csv"},
                 {"gpbias", "gpbias.json"},
                 {"gpcode", "gpcode.json"},
                 {"validation", "validation.json"}});

  if (!code.report.all_passed) {
    std::string failing;
    for (const auto& q : code.report.qoi)
      if (!q.gate_passed)
        failing += (failing.empty() ? "" : ", ") + q.name + " (Q2=" +
                   std::to_string(q.q2) + ")";
    throw GateFailure("emulator validation gate failed for " + failing +
                      "; threshold Q2 >= " + std::to_string(cfg.q2_threshold));
  }
}

void stage_mcmc(const StageContext& ctx) {
  json manifest = load_manifest_json(ctx.out_dir);
  const auto& cfg = ctx.config;
  const TsaArtifacts art = load_tsa_artifacts(ctx, manifest);
  const auto prior = bayes::PriorSpec::from_table(cfg.prior);

  const bayes::CodeEmulator emulator = load_code_emulator(
      path_in(ctx, manifest_file(manifest, "gpcode", "emulate")));

  inference::LikelihoodContext lctx;
  lctx.x_iuq = rows_for_ids(art.table, art.partition.iuq_ids, false);
  const Eigen::MatrixXd y_iuq = rows_for_ids(art.table, art.partition.iuq_ids, true);
  const int m = art.table.m();
  lctx.y_obs.resize(y_iuq.rows() * m);
  for (Eigen::Index i = 0; i < y_iuq.rows(); ++i)
    for (int q = 0; q < m; ++q) lctx.y_obs(i * m + q) = y_iuq(i, q);

  std::vector<int> delta_ids;
  Eigen::MatrixXd delta;
  Eigen::VectorXd sigma_bias;
  read_delta_csv(path_in(ctx, manifest_file(manifest, "delta", "emulate")),
                 delta_ids, delta, sigma_bias);
  if (delta_ids != art.partition.iuq_ids)
    throw DataError("delta.csv ids do not match the partition");
  lctx.delta.resize(lctx.y_obs.size());
  for (Eigen::Index i = 0; i < delta.rows(); ++i)
    for (int q = 0; q < m; ++q) lctx.delta(i * m + q) = delta(i, q);
  lctx.sigma_bias = sigma_bias;
  lctx.sigma_exp = io::build_sigma_exp(lctx.y_obs, cfg.meas, m);
  lctx.emulator = &emulator;
  lctx.validate();

  const auto mode = cfg.mode == io::BiasMode::WithBias
                        ? inference::LikelihoodMode::WithBias
                        : inference::LikelihoodMode::NoBias;
  const auto log_post = [&](const Eigen::VectorXd& theta) {
    const double lp = inference::log_prior(theta, prior);
    if (!std::isfinite(lp)) return lp;
    return lp + inference::log_likelihood(theta, lctx, mode);
  };

  inference::AdaptConfig adapt = inference::AdaptConfig::from_prior(prior);
  const inference::PosteriorChain chain = inference::adaptive_metropolis(
      log_post, prior.nominal, cfg.mcmc.n_samples, cfg.mcmc.seed, adapt);

  const std::string tag = io::to_string(cfg.mode);
  inference::write_chain_csv(path_in(ctx, "chain_" + tag + ".csv"), chain);

  json meta;
  meta["mode"] = tag;
  meta["n_samples"] = cfg.mcmc.n_samples;
  meta["burn_in"] = cfg.mcmc.burn_in;
  meta["thin"] = cfg.mcmc.thin;
  meta["seed"] = cfg.mcmc.seed;
  meta["acceptance_rate"] = chain.acceptance_rate;
  meta["config_hash"] = ctx.config_hash;
  std::ofstream(path_in(ctx, "chain_" + tag + "_meta.json")) << meta.dump(2) << "\n";

  save_manifest(ctx, manifest, "mcmc",
                {{"chain_" + tag, "chain_" + tag + ".csv"},
                 {"chain_" + tag + "_meta", "chain_" + tag + "_meta.json"}});
}

void stage_analyze(const StageContext& ctx) {
  json manifest = load_manifest_json(ctx.out_dir);
  const auto& cfg = ctx.config;
  const std::string tag = io::to_string(cfg.mode);

  const inference::PosteriorChain chain = inference::read_chain_csv(
      path_in(ctx, manifest_file(manifest, "chain_" + tag, "mcmc")));
  const Eigen::MatrixXd samples =
      inference::postprocess_chain(chain, cfg.mcmc.burn_in, cfg.mcmc.thin);

  const posterior::PosteriorSummary summary =
      posterior::summarize(samples, cfg.prior.names);

  json doc = json::parse(posterior::summary_to_json(summary));
  doc["mode"] = tag;
  doc["kept_samples"] = samples.rows();
  doc["config_hash"] = ctx.config_hash;
  doc["seed"] = cfg.mcmc.seed;
  std::ofstream(path_in(ctx, "posterior_" + tag + ".json")) << doc.dump(2) << "\n";

  std::map<std::string, std::string> files = {
      {"posterior_" + tag, "posterior_" + tag + ".json"}};

  {
    const std::string name = "thinned_" + tag + ".csv";
    std::ofstream out(path_in(ctx, name));
    out.precision(17);
    out << "sample";
    for (const auto& n : cfg.prior.names) out << "," << n;
    out << "\n";
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
      out << i;
      for (Eigen::Index k = 0; k < samples.cols(); ++k) out << "," << samples(i, k);
      out << "\n";
    }
    files["thinned_" + tag] = name;
  }

  const int grid_n = 256;
  for (Eigen::Index k = 0; k < samples.cols(); ++k) {
    const Eigen::VectorXd col = samples.col(k);
    const double lo = col.minCoeff(), hi = col.maxCoeff();
    Eigen::VectorXd grid(grid_n);
    for (int g = 0; g < grid_n; ++g)
      grid(g) = lo + (hi - lo) * static_cast<double>(g) / (grid_n - 1);
    const Eigen::VectorXd density = posterior::kde_density(col, grid);

    const std::string mname =
        "marginal_" + cfg.prior.names[static_cast<std::size_t>(k)] + "_" + tag + ".csv";
    std::ofstream mout(path_in(ctx, mname));
    mout.precision(17);
    mout << "value,density\n";
    for (int g = 0; g < grid_n; ++g) mout << grid(g) << "," << density(g) << "\n";
    files["marginal_" + cfg.prior.names[static_cast<std::size_t>(k)] + "_" + tag] = mname;

    // Empirical vs fitted CDF overlay.
    const posterior::EmpiricalCdf ecdf(col);
    const auto& fit = summary.fitted[static_cast<std::size_t>(k)];
    const std::string cname =
        "cdf_" + cfg.prior.names[static_cast<std::size_t>(k)] + "_" + tag + ".csv";
    std::ofstream cout_(path_in(ctx, cname));
    cout_.precision(17);
    cout_ << "value,empirical,fitted\n";
    for (int g = 0; g < grid_n; ++g)
      cout_ << grid(g) << "," << ecdf(grid(g)) << "," << fit.cdf(grid(g)) << "\n";
    files["cdf_" + cfg.prior.names[static_cast<std::size_t>(k)] + "_" + tag] = cname;
  }

  const int grid2 = 48;
  for (Eigen::Index a = 0; a < samples.cols(); ++a) {
    for (Eigen::Index b = a + 1; b < samples.cols(); ++b) {
      Eigen::VectorXd gx(grid2), gy(grid2);
      const double lox = samples.col(a).minCoeff(), hix = samples.col(a).maxCoeff();
      const double loy = samples.col(b).minCoeff(), hiy = samples.col(b).maxCoeff();
      for (int g = 0; g < grid2; ++g) {
        gx(g) = lox + (hix - lox) * static_cast<double>(g) / (grid2 - 1);
        gy(g) = loy + (hiy - loy) * static_cast<double>(g) / (grid2 - 1);
      }
      const Eigen::MatrixXd dens =
          posterior::kde_density_2d(samples.col(a), samples.col(b), gx, gy);
      const std::string pname = "pairwise_" +
                                cfg.prior.names[static_cast<std::size_t>(a)] + "_" +
                                cfg.prior.names[static_cast<std::size_t>(b)] + "_" +
                                tag + ".csv";
      std::ofstream pout(path_in(ctx, pname));
      pout.precision(17);
      pout << cfg.prior.names[static_cast<std::size_t>(a)] << ","
           << cfg.prior.names[static_cast<std::size_t>(b)] << ",density\n";
      for (int i = 0; i < grid2; ++i)
        for (int j = 0; j < grid2; ++j)
          pout << gx(i) << "," << gy(j) << "," << dens(i, j) << "\n";
      files["pairwise_" + cfg.prior.names[static_cast<std::size_t>(a)] + "_" +
            cfg.prior.names[static_cast<std::size_t>(b)] + "_" + tag] = pname;
    }
  }

  save_manifest(ctx, manifest, "analyze", files);
}

PipelineReport run_pipeline(const StageContext& ctx) {
  const auto& cfg = ctx.config;
  if (cfg.threads > 0) set_default_thread_count(cfg.threads);

  if (cfg.simulator == "toy" && cfg.tests_path.empty()) stage_synth(ctx);
  stage_tsa(ctx);

  PipelineReport report;
  bool gate_failed = false;
  std::string gate_message;
  try {
    stage_emulate(ctx);
    report.gate_passed = true;
  } catch (const GateFailure& e) {
    gate_failed = true;
    gate_message = e.what();
  }

  if (!gate_failed) {
    stage_mcmc(ctx);
    stage_analyze(ctx);
  }

  // Assemble the report from the stage artifacts.
  json manifest = load_manifest_json(ctx.out_dir);
  report.files = read_manifest(ctx.out_dir);

  {
    const io::TestTable processed = io::load_tests(
        path_in(ctx, manifest_file(manifest, "processed_tests", "tsa")));
    const auto part = tsa::read_partition_csv(
        path_in(ctx, manifest_file(manifest, "partition", "tsa")));
    report.n_iuq = static_cast<int>(part.iuq_ids.size());
    report.n_val = static_cast<int>(part.val_ids.size());
    report.n_tests = static_cast<int>(processed.tests.size());
    std::ifstream exc(path_in(ctx, manifest_file(manifest, "exclusions", "tsa")));
    std::string line;
    std::getline(exc, line);
    while (std::getline(exc, line))
      if (!line.empty()) ++report.n_excluded;
  }

  if (manifest["files"].contains("validation")) {
    std::ifstream in(path_in(ctx, manifest["files"]["validation"].get<std::string>()));
    json v;
    in >> v;
    report.validation.q2_threshold = v.value("q2_threshold", cfg.q2_threshold);
    report.validation.all_passed = v.value("all_passed", false);
    for (const auto& q : v.at("qoi")) {
      bayes::QoiValidation item;
      item.name = q.value("name", "");
      item.q2 = q.value("q2", 0.0);
      item.loocv = q.value("loocv", 0.0);
      item.gate_passed = q.value("gate_passed", false);
      report.validation.qoi.push_back(item);
    }
  }

  const std::string tag = io::to_string(cfg.mode);
  if (!gate_failed && manifest["files"].contains("chain_" + tag + "_meta")) {
    std::ifstream in(
        path_in(ctx, manifest["files"]["chain_" + tag + "_meta"].get<std::string>()));
    json meta;
    in >> meta;
    report.acceptance_rate = meta.value("acceptance_rate", 0.0);
    report.kept_samples =
        (cfg.mcmc.n_samples - cfg.mcmc.burn_in + cfg.mcmc.thin - 1) / cfg.mcmc.thin;
  }

  json jr;
  jr["n_tests"] = report.n_tests;
  jr["n_excluded"] = report.n_excluded;
  jr["n_iuq"] = report.n_iuq;
  jr["n_val"] = report.n_val;
  jr["gate_passed"] = report.gate_passed;
  jr["acceptance_rate"] = report.acceptance_rate;
  jr["kept_samples"] = report.kept_samples;
  jr["mode"] = tag;
  jr["config_hash"] = ctx.config_hash;
  jr["files"] = report.files;
  std::ofstream(path_in(ctx, "report.json")) << jr.dump(2) << "\n";

  if (gate_failed) throw GateFailure(gate_message);
  return report;
}

}  // namespace iuq::pipeline
