// SPDX-License-Identifier: Apache-2.0
#include "hguide/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hguide/errors.hpp"
#include "hguide/gaussian.hpp"
#include "hguide/guidance.hpp"
#include "hguide/guided.hpp"
#include "hguide/io.hpp"
#include "hguide/metrics.hpp"
#include "hguide/mlp.hpp"
#include "hguide/oracle.hpp"
#include "hguide/rng.hpp"
#include "hguide/sampler.hpp"
#include "hguide/schedule.hpp"
#include "hguide/score.hpp"
#include "hguide/stress.hpp"
#include "hguide/trajectory.hpp"
#include "hguide/version.hpp"

namespace hguide::pipeline {

using nlohmann::json;

json default_config() {
  return json{
      {"seed", 1234},
      {"schedule",
       {{"kind", "ve"}, {"T", 10.0}, {"eps", 0.01}, {"a", 0.1}, {"b", 20.0}, {"sigma", 25.0}}},
      {"grid", {{"K", 500}, {"spacing", "uniform"}, {"eps_T_frac", 1e-3}}},
      {"prior", {{"mean", {1.0}}, {"var", {4.0}}}},
      {"set", {{"type", "halfspace"}, {"dim", 1}, {"axis", 0}, {"lo", 3.0}}},
      {"score",
       {{"type", "analytic"},
        {"hidden", {64, 64}},
        {"iters", 20000},
        {"batch", 128},
        {"lr", 1e-3},
        {"data_n", 100000}}},
      {"simulate",
       {{"n_paths", 16384}, {"stochastic", true}, {"keep_increments", true}, {"store", "full"}}},
      {"train_h",
       {{"hidden", {128, 128}},
        {"optimizer", "adam"},
        {"iters", 40000},
        {"batch", 256},
        {"lr", 1e-3},
        {"A", 0.1},
        {"B", 100.0},
        {"zeta", 1.0}}},
      {"train_q",
       {{"hidden", {128, 128}},
        {"optimizer", "adam"},
        {"iters", 40000},
        {"batch", 256},
        {"lr", 1e-3},
        {"A", 0.1},
        {"B", 100.0},
        {"zeta", 1.0},
        {"target_mode", "increment"}}},
      {"sample",
       {{"mode", "ml"},
        {"integrator", "sde"},
        {"eta", 1.0},
        {"n_paths", 10000},
        {"c_clip", 1e3},
        {"h_floor", 1e-4},
        {"store", "full"}}},
      {"eval", {{"w2_n", 2000}}},
      {"oracle",
       {{"t_points", 5}, {"y_points", 41}, {"y_lo", -10.0}, {"y_hi", 10.0}, {"pde_nx", 0}, {"pde_nt", 0}}},
      {"stress",
       {{"csv", ""},
        {"rows", 1200},
        {"tickers", 4},
        {"N", 64},
        {"k", 10},
        {"m", 5},
        {"tau", -0.05},
        {"cond_tickers", {3}},
        {"winsor_fraction", 0.005},
        {"n_train_paths", 2048},
        {"n_generate", 512}}},
  };
}

json load_config(const std::string& path) {
  const std::string text = read_text_file(path);
  json doc = json::parse(text, nullptr, false);
  require(!doc.is_discarded(), ErrorKind::Config, "config is not valid JSON: " + path);
  require(doc.is_object(), ErrorKind::Config, "config root must be a JSON object: " + path);
  return doc;
}

void deep_merge(json* base, const json& over) {
  if (!over.is_object() || !base->is_object()) {
    *base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base->contains(it.key())) {
      deep_merge(&(*base)[it.key()], it.value());
    } else {
      (*base)[it.key()] = it.value();
    }
  }
}

void apply_override(json* cfg, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::Config,
          "--set expects key.path=value, got '" + spec + "'");
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;  // unquoted strings pass through

  json* node = cfg;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
    require(!key.empty(), ErrorKind::Config, "--set has an empty path segment: '" + spec + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
    node = &(*node)[key];
    start = dot + 1;
  }
}

namespace {
void collect_unknown(const json& doc, const json& schema, const std::string& prefix,
                     std::vector<std::string>* unknown) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!schema.contains(it.key())) {
      unknown->push_back(path);
    } else if (it.value().is_object() && schema[it.key()].is_object()) {
      collect_unknown(it.value(), schema[it.key()], path, unknown);
    }
  }
}
}  // namespace

void validate_config(const json& cfg) {
  // "set" and "prior" are open sub-schemas (form-dependent keys);
  // everything else is closed
  json schema = default_config();
  std::vector<std::string> unknown;
  for (auto it = cfg.begin(); it != cfg.end(); ++it) {
    if (it.key() == "set" || it.key() == "prior") continue;
    if (!schema.contains(it.key())) {
      unknown.push_back(it.key());
    } else if (it.value().is_object() && schema[it.key()].is_object()) {
      collect_unknown(it.value(), schema[it.key()], it.key(), &unknown);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config keys:";
    for (const std::string& k : unknown) msg += " " + k;
    throw_config(msg);
  }
}

namespace {

std::string join(const std::string& dir, const std::string& name) { return dir + "/" + name; }

std::string hash_hex(const json& j) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(json_hash(j)));
  return buf;
}

std::uint64_t master_seed(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

Vec vec_from(const json& arr) {
  require(arr.is_array() && !arr.empty(), ErrorKind::Config, "expected a nonempty JSON array");
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

std::vector<int> ints_from(const json& arr) {
  std::vector<int> v;
  for (const auto& x : arr) v.push_back(x.get<int>());
  return v;
}

NoiseSchedule sched_from(const json& cfg) {
  const json& s = cfg.at("schedule");
  const std::string kind = s.at("kind").get<std::string>();
  const double T = s.at("T").get<double>();
  if (kind == "ve") return NoiseSchedule::ve(T, s.at("eps").get<double>());
  if (kind == "vp") return NoiseSchedule::vp(T, s.at("a").get<double>(), s.at("b").get<double>());
  if (kind == "ve_exp") return NoiseSchedule::ve_exp(T, s.at("sigma").get<double>());
  throw_config("unknown schedule kind '" + kind + "'");
}

TimeGrid grid_from(const json& cfg, const NoiseSchedule& sched) {
  const json& g = cfg.at("grid");
  const std::string sp = g.at("spacing").get<std::string>();
  GridSpacing spacing;
  if (sp == "uniform") {
    spacing = GridSpacing::Uniform;
  } else if (sp == "noise_level") {
    spacing = GridSpacing::NoiseLevel;
  } else {
    throw_config("unknown grid spacing '" + sp + "'");
  }
  return make_grid(sched, g.at("K").get<int>(), spacing, g.at("eps_T_frac").get<double>() * sched.T);
}

GaussianMixture prior_from(const json& cfg) {
  const json& p = cfg.at("prior");
  // components win over mean/var so a mixture config can override the
  // single-Gaussian defaults without clearing them first
  if (p.contains("components")) {
    const json& comps = p.at("components");
    require(comps.is_array() && !comps.empty(), ErrorKind::Config,
            "prior.components must be a non-empty array");
    GaussianMixture mix;
    mix.weights.resize(static_cast<Eigen::Index>(comps.size()));
    Eigen::Index k = 0;
    for (const json& c : comps) {
      const Vec mean = vec_from(c.at("mean"));
      const Vec var = vec_from(c.at("var"));
      require(mean.size() == var.size(), ErrorKind::Config, "component mean/var length mismatch");
      mix.weights[k++] = c.at("weight").get<double>();
      mix.means.push_back(mean);
      mix.covs.push_back(Mat(var.asDiagonal()));
    }
    mix.validate();
    return mix;
  }
  const Vec mean = vec_from(p.at("mean"));
  const Vec var = vec_from(p.at("var"));
  require(mean.size() == var.size(), ErrorKind::Config, "prior mean/var length mismatch");
  return GaussianMixture::single(mean, Mat(var.asDiagonal()));
}

GuidanceSet set_from(const json& cfg) { return GuidanceSet::from_json(cfg.at("set")); }

OptimizerConfig opt_from(const json& sec) {
  OptimizerConfig opt;
  const std::string mode = sec.at("optimizer").get<std::string>();
  if (mode == "adam") {
    opt.mode = OptimizerConfig::Mode::Adam;
  } else if (mode == "schedule") {
    opt.mode = OptimizerConfig::Mode::Schedule;
  } else {
    throw_config("unknown optimizer '" + mode + "' (adam or schedule)");
  }
  opt.A = sec.at("A").get<double>();
  opt.B = sec.at("B").get<double>();
  opt.zeta = sec.at("zeta").get<double>();
  opt.lr = sec.at("lr").get<double>();
  opt.batch = sec.at("batch").get<int>();
  opt.iters = sec.at("iters").get<int>();
  opt.validate();
  return opt;
}

std::vector<int> hidden_from(const json& sec) {
  std::vector<int> h = ints_from(sec.at("hidden"));
  require(!h.empty(), ErrorKind::Config, "hidden layer list is empty");
  return h;
}

PathStore store_from(const json& sec) {
  const std::string s = sec.at("store").get<std::string>();
  if (s == "full") return PathStore::Full;
  if (s == "terminal") return PathStore::TerminalOnly;
  throw_config("unknown store '" + s + "' (full or terminal)");
}

void require_artifact(const std::string& path, const std::string& prior_stage) {
  if (!std::filesystem::exists(path)) {
    throw_dependency("missing artifact " + path + "; run the " + prior_stage + " stage first");
  }
}

json make_manifest(const std::string& stage, const json& cfg) {
  return json{{"stage", stage},
              {"config", cfg},
              {"config_hash", hash_hex(cfg)},
              {"seed", master_seed(cfg)},
              {"versions", {{"hguide", kVersion}, {"artifact_format", kArtifactFormatVersion}}}};
}

void write_manifest(const json& manifest, const std::string& path) {
  write_text_file(path, manifest.dump(2) + "\n");
}

void write_resolved_config(const json& cfg, const std::string& out_dir) {
  write_text_file(join(out_dir, "config_resolved.json"), cfg.dump(2) + "\n");
}

// The learned score is produced by the simulate stage; later stages reload it.
ScoreModel score_for(const json& cfg, const std::string& out_dir, bool may_train, json* trained_info) {
  const json& sc = cfg.at("score");
  const std::string type = sc.at("type").get<std::string>();
  const NoiseSchedule sched = sched_from(cfg);
  if (type == "analytic") return ScoreModel::analytic(sched, prior_from(cfg));
  require(type == "dsm", ErrorKind::Config, "unknown score type '" + type + "' (analytic or dsm)");

  const std::string path = join(out_dir, "score_model.mlp");
  if (!may_train) {
    require_artifact(path, "simulate");
    return ScoreModel::learned(Mlp::load(path));
  }
  const GaussianMixture prior = prior_from(cfg);
  const std::uint64_t seed = derive(master_seed(cfg), "score-stage");
  const int n = sc.at("data_n").get<int>();
  const Mat data = prior.sample_batch(n, derive(seed, "data"));

  Mlp net(prior.dim(), hidden_from(sc), prior.dim(), Activation::Tanh, OutputTransform::Identity,
          sched.T, derive(seed, "init"));
  DsmConfig dsm;
  dsm.opt.mode = OptimizerConfig::Mode::Adam;
  dsm.opt.lr = sc.at("lr").get<double>();
  dsm.opt.batch = sc.at("batch").get<int>();
  dsm.opt.iters = sc.at("iters").get<int>();
  TrainTrace trace;
  net = dsm_train(std::move(net), data, sched, dsm, derive(seed, "dsm"), &trace);
  net.save(path);
  write_text_file(join(out_dir, "score_trace.csv"), trace.to_csv());
  if (trained_info) {
    *trained_info = {{"data_n", n},
                     {"iters", dsm.opt.iters},
                     {"final_loss", trace.loss.empty() ? 0.0 : trace.loss.back().second}};
  }
  return ScoreModel::learned(std::move(net));
}

HModel load_h_model(const json& cfg, const std::string& out_dir) {
  const std::string path = join(out_dir, "h_model.mlp");
  require_artifact(path, "train-h");
  HModel h;
  h.net = Mlp::load(path);
  h.floor = cfg.at("sample").at("h_floor").get<double>();
  return h;
}

}  // namespace

json run_simulate(const json& cfg, const std::string& out_dir) {
  const NoiseSchedule sched = sched_from(cfg);
  const TimeGrid grid = grid_from(cfg, sched);
  json score_info;
  const ScoreModel score = score_for(cfg, out_dir, true, &score_info);

  const json& sim = cfg.at("simulate");
  SamplerOptions opts;
  opts.keep_increments = sim.at("keep_increments").get<bool>();
  opts.store = store_from(sim);
  const int n_paths = sim.at("n_paths").get<int>();
  const bool stochastic = sim.at("stochastic").get<bool>();
  const std::uint64_t seed = derive(master_seed(cfg), "simulate");

  const TrajectoryBatch batch = stochastic ? sample_sde(score, sched, grid, n_paths, seed, opts)
                                           : sample_ode(score, sched, grid, n_paths, seed, opts);
  save_batch(batch, join(out_dir, "pretrained.traj"));

  json manifest = make_manifest("simulate", cfg);
  manifest["outputs"] = {{"batch", "pretrained.traj"}};
  manifest["n_paths"] = batch.n_paths();
  manifest["schedule_id"] = batch.schedule_id;
  manifest["stochastic"] = stochastic;
  if (!score_info.is_null()) {
    manifest["outputs"]["score"] = "score_model.mlp";
    manifest["score_training"] = score_info;
  }
  write_manifest(manifest, join(out_dir, "simulate_manifest.json"));
  write_resolved_config(cfg, out_dir);
  return manifest;
}

json run_train_h(const json& cfg, const std::string& out_dir) {
  const std::string batch_path = join(out_dir, "pretrained.traj");
  require_artifact(batch_path, "simulate");
  const TrajectoryBatch batch = load_batch(batch_path);
  const GuidanceSet S = set_from(cfg);

  const json& th = cfg.at("train_h");
  const std::uint64_t seed = derive(master_seed(cfg), "train-h");
  HModel h = make_h_model(batch.dim, batch.grid.horizon_T, derive(seed, "init"), hidden_from(th));
  TrainTrace trace;
  train_h(&h, {&batch}, S, opt_from(th), seed, &trace);

  h.net.save(join(out_dir, "h_model.mlp"));
  write_text_file(join(out_dir, "train_h_trace.csv"), trace.to_csv());

  const CalibrationReport cal = calibration_check(h.field(), batch, S);
  json manifest = make_manifest("train-h", cfg);
  manifest["outputs"] = {{"model", "h_model.mlp"}, {"trace", "train_h_trace.csv"}};
  manifest["final_minibatch_loss"] = trace.loss.empty() ? 0.0 : trace.loss.back().second;
  manifest["skipped_steps"] = trace.skipped;
  manifest["calibration"] = {{"mean_h0", cal.mean_h0},
                             {"empirical_rate", cal.empirical_rate},
                             {"se", cal.se}};
  manifest["terminal_gap"] = terminal_mean_abs_gap(h.field(), batch, S);
  write_manifest(manifest, join(out_dir, "train_h_manifest.json"));
  return manifest;
}

json run_train_q(const json& cfg, const std::string& out_dir) {
  require_artifact(join(out_dir, "h_model.mlp"), "train-h");
  const std::string batch_path = join(out_dir, "pretrained.traj");
  require_artifact(batch_path, "simulate");
  const TrajectoryBatch batch = load_batch(batch_path);
  const HModel h = load_h_model(cfg, out_dir);
  const NoiseSchedule sched = sched_from(cfg);

  const json& tq = cfg.at("train_q");
  const std::string mode_str = tq.at("target_mode").get<std::string>();
  CovTargetMode mode;
  if (mode_str == "increment") {
    mode = CovTargetMode::Increment;
  } else if (mode_str == "analytic_ito") {
    mode = CovTargetMode::AnalyticIto;
  } else {
    throw_config("unknown target_mode '" + mode_str + "'");
  }
  const CovTargets targets = cov_targets(h, batch, sched, mode);

  const std::uint64_t seed = derive(master_seed(cfg), "train-q");
  QModel q = make_q_model(batch.dim, batch.grid.horizon_T, derive(seed, "init"), hidden_from(tq));
  TrainTrace trace;
  train_q(&q, targets, opt_from(tq), seed, &trace);

  q.net.save(join(out_dir, "q_model.mlp"));
  write_text_file(join(out_dir, "train_q_trace.csv"), trace.to_csv());

  json manifest = make_manifest("train-q", cfg);
  manifest["outputs"] = {{"model", "q_model.mlp"}, {"trace", "train_q_trace.csv"}};
  manifest["target_mode"] = mode_str;
  manifest["targets"] = targets.size();
  manifest["final_minibatch_loss"] = trace.loss.empty() ? 0.0 : trace.loss.back().second;
  manifest["skipped_steps"] = trace.skipped;
  write_manifest(manifest, join(out_dir, "train_q_manifest.json"));
  return manifest;
}

json run_sample(const json& cfg, const std::string& out_dir) {
  const NoiseSchedule sched = sched_from(cfg);
  const TimeGrid grid = grid_from(cfg, sched);
  const ScoreModel score = score_for(cfg, out_dir, false, nullptr);

  const json& sm = cfg.at("sample");
  GuidedSamplerConfig gcfg;
  gcfg.mode = guidance_mode_from_string(sm.at("mode").get<std::string>());
  gcfg.eta = sm.at("eta").get<double>();
  gcfg.c_clip = sm.at("c_clip").get<double>();
  gcfg.sampler.store = store_from(sm);
  const std::string integ = sm.at("integrator").get<std::string>();
  require(integ == "sde" || integ == "ode", ErrorKind::Config,
          "unknown integrator '" + integ + "' (sde or ode)");
  const int n_paths = sm.at("n_paths").get<int>();

  HModel h;
  QModel q;
  std::unique_ptr<AnalyticH> oracle;
  const HModel* hp = nullptr;
  const QModel* qp = nullptr;
  if (gcfg.mode == GuidanceMode::ML || gcfg.mode == GuidanceMode::MCL) {
    h = load_h_model(cfg, out_dir);
    hp = &h;
  }
  if (gcfg.mode == GuidanceMode::MCL) {
    const std::string qpath = join(out_dir, "q_model.mlp");
    require_artifact(qpath, "train-q");
    q.net = Mlp::load(qpath);
    qp = &q;
  }
  if (gcfg.mode == GuidanceMode::OracleH) {
    oracle = std::make_unique<AnalyticH>(sched, prior_from(cfg), set_from(cfg));
  }

  const auto stats = std::make_shared<DriftStats>();
  const std::uint64_t seed = derive(master_seed(cfg), "sample");
  const TrajectoryBatch guided = sample_guided(score, sched, grid, gcfg, hp, qp, oracle.get(),
                                               integ == "sde", n_paths, seed, stats);
  save_batch(guided, join(out_dir, "guided.traj"));
  write_terminal_csv(guided, join(out_dir, "guided_terminal.csv"));

  const ConstraintRate rate = constraint_rate(guided, set_from(cfg));
  json manifest = make_manifest("sample", cfg);
  manifest["outputs"] = {{"batch", "guided.traj"}, {"terminal", "guided_terminal.csv"}};
  manifest["mode"] = to_string(gcfg.mode);
  manifest["integrator"] = integ;
  manifest["eta"] = gcfg.eta;
  manifest["n_paths"] = guided.n_paths();
  manifest["constraint_rate"] = {{"rate", rate.rate}, {"se", rate.se}, {"hits", rate.hits}};
  manifest["clip_fraction"] = stats->clip_fraction();
  write_manifest(manifest, join(out_dir, "sample_manifest.json"));
  return manifest;
}

json run_eval(const json& cfg, const std::string& out_dir) {
  const std::string guided_path = join(out_dir, "guided.traj");
  require_artifact(guided_path, "sample");
  const TrajectoryBatch guided = load_batch(guided_path);
  const GaussianMixture prior = prior_from(cfg);
  const GuidanceSet S = set_from(cfg);
  require(prior.dim() == guided.dim, ErrorKind::Config, "prior dimension does not match samples");

  const Mat terminal = guided.terminal();
  const ConstraintRate rate = constraint_rate(guided, S);
  json metrics = {{"constraint_rate", rate.rate}, {"constraint_se", rate.se}};

  const std::uint64_t seed = derive(master_seed(cfg), "eval");
  if (guided.dim == 1) {
    require(S.form() == GuidanceSet::Form::Box, ErrorKind::Config,
            "1d eval needs a box/interval guidance set");
    const auto cdf = truncated_mixture_cdf(prior, S.lo()[0], S.hi()[0]);
    const double ks = ks_statistic(terminal.row(0).transpose(), cdf);
    const TruncStats ts = truncated_mixture_stats(prior, S.lo()[0], S.hi()[0]);
    const Vec t0 = terminal.row(0).transpose();
    metrics["ks"] = ks;
    metrics["target"] = {{"mass", ts.mass}, {"mean", ts.mean}, {"var", ts.var}};
    metrics["sample_mean"] = t0.mean();
  } else {
    const int n = std::min<long>(cfg.at("eval").at("w2_n").get<int>(), terminal.cols());
    require(n >= 2, ErrorKind::Config, "w2 evaluation needs at least two samples");
    const Mat oracle_draws = rejection_sample(prior, S, n, derive(seed, "oracle"));
    metrics["w2"] = w2_exact(terminal.leftCols(n), oracle_draws);
    metrics["w2_n"] = n;
  }

  json manifest = make_manifest("eval", cfg);
  manifest["metrics"] = metrics;
  write_manifest(manifest, join(out_dir, "eval_report.json"));

  std::cout << "eval:";
  if (metrics.contains("ks")) std::cout << " ks=" << format_double(metrics["ks"].get<double>());
  if (metrics.contains("w2")) std::cout << " w2=" << format_double(metrics["w2"].get<double>());
  std::cout << " rate=" << format_double(rate.rate) << "\n";
  return manifest;
}

json run_oracle(const json& cfg, const std::string& out_dir) {
  const NoiseSchedule sched = sched_from(cfg);
  const GaussianMixture prior = prior_from(cfg);
  const GuidanceSet S = set_from(cfg);
  const AnalyticH oracle(sched, prior, S);
  require(oracle.dim() == 1, ErrorKind::Config, "the oracle stage emits 1d grids only");

  const json& oc = cfg.at("oracle");
  const int tn = oc.at("t_points").get<int>();
  const int yn = oc.at("y_points").get<int>();
  const double y_lo = oc.at("y_lo").get<double>();
  const double y_hi = oc.at("y_hi").get<double>();
  require(tn >= 1 && yn >= 2 && y_lo < y_hi, ErrorKind::Config, "bad oracle grid");

  std::string csv = "t,y,h,grad_log_h\n";
  for (int i = 0; i < tn; ++i) {
    const double t = 0.95 * sched.T * i / std::max(1, tn - 1);
    Mat Y(1, yn);
    for (int j = 0; j < yn; ++j) Y(0, j) = y_lo + (y_hi - y_lo) * j / (yn - 1);
    Vec h;
    Mat grad;
    oracle.eval_batch(t, Y, &h, &grad);
    for (int j = 0; j < yn; ++j) {
      csv += format_double(t) + "," + format_double(Y(0, j)) + "," + format_double(h[j]) + "," +
             format_double(grad(0, j)) + "\n";
    }
  }
  write_text_file(join(out_dir, "oracle_grid.csv"), csv);

  json manifest = make_manifest("oracle", cfg);
  manifest["outputs"] = {{"grid", "oracle_grid.csv"}};
  const TruncStats ts = truncated_mixture_stats(prior, S.lo()[0], S.hi()[0]);
  manifest["target"] = {{"mass", ts.mass}, {"mean", ts.mean}, {"var", ts.var}};

  const int nx = oc.at("pde_nx").get<int>();
  const int nt = oc.at("pde_nt").get<int>();
  if (nx > 0 && nt > 0) {
    const PdeCheckResult pde = h_pde_check_1d(oracle, y_lo, y_hi, nx, nt);
    manifest["pde_check"] = {{"max_abs_err", pde.max_abs_err}, {"nx", pde.nx}, {"nt", pde.nt}};
  }
  write_manifest(manifest, join(out_dir, "oracle_manifest.json"));
  return manifest;
}

json run_stress(const json& cfg, const std::string& out_dir) {
  const json& sc = cfg.at("stress");
  const std::uint64_t seed = derive(master_seed(cfg), "stress");

  std::string csv_path = sc.at("csv").get<std::string>();
  std::string panel_name = csv_path;  // manifests stay portable for generated panels
  if (csv_path.empty()) {
    panel_name = "stress_panel.csv";
    csv_path = join(out_dir, panel_name);
    write_text_file(csv_path, synthetic_csv(sc.at("rows").get<int>(), sc.at("tickers").get<int>(),
                                            derive(seed, "panel")));
  } else {
    require_artifact(csv_path, "(external data; check the stress.csv path)");
  }
  const ReturnsPanel panel = ingest_csv(csv_path, sc.at("winsor_fraction").get<double>());
  const WindowSet real = make_windows(panel, sc.at("N").get<int>(), sc.at("k").get<int>(),
                                      sc.at("m").get<int>(), sc.at("tau").get<double>(),
                                      ints_from(sc.at("cond_tickers")));

  const NoiseSchedule sched = sched_from(cfg);
  const TimeGrid grid = grid_from(cfg, sched);
  const Mat data = flatten_windows(real);
  const int dim = static_cast<int>(data.rows());

  const json& scs = cfg.at("score");
  Mlp net(dim, hidden_from(scs), dim, Activation::Tanh, OutputTransform::Identity, sched.T,
          derive(seed, "score-init"));
  DsmConfig dsm;
  dsm.opt.mode = OptimizerConfig::Mode::Adam;
  dsm.opt.lr = scs.at("lr").get<double>();
  dsm.opt.batch = scs.at("batch").get<int>();
  dsm.opt.iters = scs.at("iters").get<int>();
  TrainTrace score_trace;
  net = dsm_train(std::move(net), data, sched, dsm, derive(seed, "dsm"), &score_trace);
  const ScoreModel score = ScoreModel::learned(std::move(net));

  SamplerOptions train_opts;
  train_opts.keep_increments = false;
  const TrajectoryBatch batch = sample_sde(score, sched, grid, sc.at("n_train_paths").get<int>(),
                                           derive(seed, "simulate"), train_opts);

  const GuidanceSet S = window_condition_set(real);
  const json& th = cfg.at("train_h");
  HModel h = make_h_model(dim, grid.horizon_T, derive(seed, "h-init"), hidden_from(th));
  TrainTrace h_trace;
  train_h(&h, {&batch}, S, opt_from(th), derive(seed, "train-h"), &h_trace);

  const json& sm = cfg.at("sample");
  GuidedSamplerConfig gcfg;
  gcfg.mode = GuidanceMode::ML;
  gcfg.eta = sm.at("eta").get<double>();
  gcfg.c_clip = sm.at("c_clip").get<double>();
  gcfg.sampler.store = PathStore::TerminalOnly;
  const auto stats = std::make_shared<DriftStats>();
  const TrajectoryBatch guided =
      sample_guided(score, sched, grid, gcfg, &h, nullptr, nullptr,
                    sm.at("integrator").get<std::string>() == "sde", sc.at("n_generate").get<int>(),
                    derive(seed, "sample"), stats);

  const WindowSet generated = windows_from_states(guided.terminal(), real);
  const StressReport report = stress_report(
      generated, real, {PortfolioRule::Equal, PortfolioRule::MinVariance, PortfolioRule::RiskParity},
      panel.transform, &panel.weekday, gcfg.eta);

  write_text_file(join(out_dir, "stress_report.csv"), report.to_csv());
  write_text_file(join(out_dir, "stress_report.json"), report.to_json().dump(2) + "\n");

  json manifest = make_manifest("stress", cfg);
  manifest["outputs"] = {{"report_csv", "stress_report.csv"},
                         {"report_json", "stress_report.json"},
                         {"panel", panel_name}};
  manifest["windows"] = {{"real", real.count()},
                         {"real_conditioned", real.masked_count()},
                         {"generated", generated.count()},
                         {"generated_conditioned", generated.masked_count()}};
  manifest["score_final_loss"] = score_trace.loss.empty() ? 0.0 : score_trace.loss.back().second;
  manifest["h_final_loss"] = h_trace.loss.empty() ? 0.0 : h_trace.loss.back().second;
  manifest["clip_fraction"] = stats->clip_fraction();
  manifest["threshold_conversion"] =
      "raw threshold divided by recorded long-run std; weekday shifts ignored";
  write_manifest(manifest, join(out_dir, "stress_manifest.json"));
  write_resolved_config(cfg, out_dir);
  return manifest;
}

json run_all_synthetic(const json& cfg, const std::string& out_dir) {
  json manifest = make_manifest("all-synthetic", cfg);
  manifest["stages"] = json::object();
  manifest["stages"]["simulate"] = run_simulate(cfg, out_dir);
  manifest["stages"]["train_h"] = run_train_h(cfg, out_dir);
  const std::string mode = cfg.at("sample").at("mode").get<std::string>();
  if (mode == "mcl") manifest["stages"]["train_q"] = run_train_q(cfg, out_dir);
  manifest["stages"]["sample"] = run_sample(cfg, out_dir);
  manifest["stages"]["eval"] = run_eval(cfg, out_dir);
  write_manifest(manifest, join(out_dir, "all_synthetic_manifest.json"));
  return manifest;
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->kind()) {
      case ErrorKind::Config: return 2;
      case ErrorKind::Dependency: return 3;
      case ErrorKind::Domain:
      case ErrorKind::Format:
      case ErrorKind::Numerical: return 4;
    }
  }
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return 2;
  return 4;
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"conditional sampling for score-based diffusion models via terminal-constraint guidance"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string seed_str;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON config file (merged over built-in defaults)");
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option("--set", overrides, "dotted-path override, key.path=value (repeatable)");
  app.add_option("--seed", seed_str, "master seed override");
  app.fallthrough();

  const char* names[] = {"simulate", "train-h", "train-q", "sample",
                         "eval",     "stress",  "oracle",  "all-synthetic"};
  const char* descs[] = {"draw pretrained reverse-time trajectory batches",
                         "fit the terminal-constraint probability on pretrained paths",
                         "fit the covariation-ratio field on pretrained paths",
                         "draw guided samples (mode/integrator/eta per config)",
                         "compare guided samples against the analytic target",
                         "run the rolling-window stress pipeline end to end",
                         "emit analytic h grids and target statistics",
                         "simulate + train + sample + eval in one run"};
  for (int i = 0; i < 8; ++i) app.add_subcommand(names[i], descs[i]);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    json cfg = default_config();
    if (!config_path.empty()) deep_merge(&cfg, load_config(config_path));
    for (const std::string& spec : overrides) apply_override(&cfg, spec);
    if (!seed_str.empty()) {
      std::size_t pos = 0;
      unsigned long long s = 0;
      try {
        s = std::stoull(seed_str, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      require(pos == seed_str.size() && pos > 0, ErrorKind::Config,
              "--seed expects an unsigned integer, got '" + seed_str + "'");
      cfg["seed"] = s;
    }
    validate_config(cfg);
    std::filesystem::create_directories(out_dir);
    write_resolved_config(cfg, out_dir);

    const std::string stage = app.get_subcommands().front()->get_name();
    json manifest;
    if (stage == "simulate") manifest = run_simulate(cfg, out_dir);
    if (stage == "train-h") manifest = run_train_h(cfg, out_dir);
    if (stage == "train-q") manifest = run_train_q(cfg, out_dir);
    if (stage == "sample") manifest = run_sample(cfg, out_dir);
    if (stage == "eval") manifest = run_eval(cfg, out_dir);
    if (stage == "stress") manifest = run_stress(cfg, out_dir);
    if (stage == "oracle") manifest = run_oracle(cfg, out_dir);
    if (stage == "all-synthetic") manifest = run_all_synthetic(cfg, out_dir);
    std::cout << stage << ": wrote artifacts to " << out_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace hguide::pipeline
