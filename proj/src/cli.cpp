#include "reid/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "reid/config.hpp"
#include "reid/data.hpp"
#include "reid/diagnostics.hpp"
#include "reid/errors.hpp"
#include "reid/eval.hpp"
#include "reid/io.hpp"
#include "reid/numerics.hpp"
#include "reid/training.hpp"

#ifndef REID_VERSION
#define REID_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;

namespace reid {

const char* version_string() { return REID_VERSION; }

namespace {

constexpr const char* kOutputRootEnv = "REID_OUTPUT_ROOT";

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

fs::path default_out(const std::string& command) {
  const char* root = std::getenv(kOutputRootEnv);
  return fs::path(root && *root ? root : "runs") / command;
}

fs::path prepare_out_dir(const std::string& out, const std::string& command) {
  fs::path dir = out.empty() ? default_out(command) : fs::path(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
  return dir;
}

std::string absolute_str(const std::string& p) {
  return p.empty() ? p : fs::absolute(p).lexically_normal().string();
}

// Loads --config (a plain config or a run manifest) and applies --set.
Json user_config(const std::string& path, const std::vector<std::string>& sets) {
  Json j = path.empty() ? Json::object() : config_section(read_json_file(path));
  apply_overrides(j, sets);
  return j;
}

void write_run_manifest(const fs::path& dir, const std::string& command,
                        const Json& config, const Json& inputs, const Json& outputs,
                        const std::string& started) {
  Json m{{"artifact", "reid"},
         {"version", version_string()},
         {"command", command},
         {"config", config},
         {"inputs", inputs},
         {"outputs", outputs},
         {"timestamps", {{"started_at", started}, {"finished_at", utc_now()}}}};
  if (config.contains("seed")) m["seed"] = config["seed"];
  write_json_file(dir / "run_manifest.json", m);
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::string config, out;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const std::string started = utc_now();
  Json user = user_config(a.config, a.sets);
  if (a.seed) user["seed"] = *a.seed;
  const SynthConfig cfg = synth_config_from_json(user);
  const Json resolved = to_json(cfg);
  const fs::path dir = prepare_out_dir(a.out, "synth");
  const Dataset ds = gen_synthetic(cfg);
  const fs::path manifest = write_dataset(ds, dir);
  write_run_manifest(dir, "synth", resolved, Json::object(),
                     {{"manifest", "manifest.csv"}, {"pid_map", "pid_map.csv"}}, started);
  out << "wrote " << ds.items.size() << " items (" << cfg.num_ids << " ids) to "
      << manifest.string() << "\n";
  return kExitOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config, data, out, variant, optimizer;
  std::vector<std::string> sets;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const std::string started = utc_now();
  Json user = user_config(a.config, a.sets);
  if (!a.variant.empty()) user["variant"] = a.variant;
  if (!a.optimizer.empty()) user["optimizer"]["kind"] = a.optimizer;
  if (a.epochs) user["schedule"]["total_epochs"] = *a.epochs;
  if (a.seed) user["seed"] = *a.seed;
  // Validation happens here, before any data is touched.
  const TrainConfig cfg = train_config_from_json(user);
  const Json resolved = to_json(cfg);

  const fs::path dir = prepare_out_dir(a.out, "train");
  const Dataset ds = load_manifest(a.data);
  const TrainResult result = train_run(cfg, ds);
  save_checkpoint(dir / "checkpoint.json", {result.params, cfg.variant, resolved});
  write_history_csv(dir / "history.csv", result.history);
  write_run_manifest(dir, "train", resolved, {{"data", absolute_str(a.data)}},
                     {{"checkpoint", "checkpoint.json"}, {"history", "history.csv"}},
                     started);
  out << "trained " << to_string(cfg.variant) << " for " << result.history.size()
      << " epochs";
  if (!result.history.empty() && result.history.back().mAP) {
    out << "; final mAP " << std::fixed << std::setprecision(4) << *result.history.back().mAP;
  }
  out << "\n";
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------

struct EvalOptions {
  EvalMetric metric = EvalMetric::kCosine;
  bool rerank = false;
  RerankConfig rerank_params;
  bool qe = false;
  QueryExpansionConfig qe_params;
  std::size_t max_rank = 10;
  bool camera_filter = true;
  // Query = gallery = train split, each item relevant only to itself.
  bool self_match = false;
};

Json to_json(const EvalOptions& o) {
  return Json{{"metric", to_string(o.metric)},
              {"rerank", o.rerank},
              {"rerank_params", to_json(o.rerank_params)},
              {"qe", o.qe},
              {"qe_params", to_json(o.qe_params)},
              {"max_rank", o.max_rank},
              {"camera_filter", o.camera_filter},
              {"self_match", o.self_match}};
}

EvalOptions eval_options_from_json(const Json& user) {
  const Json j = overlay_config(to_json(EvalOptions{}), user);
  EvalOptions o;
  try {
    o.metric = eval_metric_from_string(j.at("metric").get<std::string>());
    o.rerank = j.at("rerank").get<bool>();
    o.rerank_params = rerank_config_from_json(j.at("rerank_params"));
    o.qe = j.at("qe").get<bool>();
    o.qe_params = qe_config_from_json(j.at("qe_params"));
    o.max_rank = j.at("max_rank").get<std::size_t>();
    o.camera_filter = j.at("camera_filter").get<bool>();
    o.self_match = j.at("self_match").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("eval config: ") + e.what());
  } catch (const ParameterError& e) {
    throw UsageError(e.what());
  }
  if (o.max_rank < 10) throw UsageError("eval config: max_rank must be >= 10");
  return o;
}

struct EvalInputs {
  Mat query, gallery;
  std::vector<int> q_pids, q_camids, g_pids, g_camids;
};

EvalReport run_eval(const EvalInputs& in, const EvalOptions& o, bool post_process) {
  Mat q = in.query;
  Mat g = in.gallery;
  Mat dist;
  if (post_process && o.qe) q = query_expansion(q, g, o.qe_params);
  if (post_process && o.rerank) {
    dist = k_reciprocal_rerank(l2_normalized_rows(q), l2_normalized_rows(g), o.rerank_params);
  } else {
    dist = compute_dist_matrix(q, g, o.metric);
  }
  return evaluate_market(dist, in.q_pids, in.q_camids, in.g_pids, in.g_camids, o.max_rank,
                         {.filter_same_camera = o.camera_filter});
}

struct EvalArgs {
  std::string config, checkpoint, data, out, metric;
  std::vector<std::string> sets;
  bool rerank = false, qe = false, self_match = false, no_camera_filter = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const std::string started = utc_now();
  Json user = user_config(a.config, a.sets);
  if (!a.metric.empty()) user["metric"] = a.metric;
  if (a.rerank) user["rerank"] = true;
  if (a.qe) user["qe"] = true;
  if (a.self_match) user["self_match"] = true;
  if (a.no_camera_filter) user["camera_filter"] = false;
  const EvalOptions opts = eval_options_from_json(user);
  const Json resolved = to_json(opts);

  const fs::path dir = prepare_out_dir(a.out, "eval");
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset ds = load_manifest(a.data);

  EvalInputs in;
  if (opts.self_match) {
    const SplitView t = split_view(ds, Split::kTrain);
    if (t.pids.empty()) throw DatasetError("self-match evaluation needs a train split");
    in.query = inference_feature(t.features, ckpt.params);
    in.gallery = in.query;
    for (std::size_t i = 0; i < t.pids.size(); ++i) {
      in.q_pids.push_back(static_cast<int>(i));
      in.q_camids.push_back(t.camids[i]);
    }
    in.g_pids = in.q_pids;
    in.g_camids = in.q_camids;
  } else {
    const SplitView q = split_view(ds, Split::kQuery);
    const SplitView g = split_view(ds, Split::kGallery);
    if (q.pids.empty() || g.pids.empty())
      throw DatasetError("dataset '" + a.data + "' lacks a query or gallery split");
    in.query = inference_feature(q.features, ckpt.params);
    in.gallery = inference_feature(g.features, ckpt.params);
    in.q_pids = q.pids;
    in.q_camids = q.camids;
    in.g_pids = g.pids;
    in.g_camids = g.camids;
  }

  const EvalReport report = run_eval(in, opts, true);
  Json j = to_json(report);
  if (opts.rerank || opts.qe) {
    const EvalReport base = run_eval(in, opts, false);
    j["baseline"] = {{"mAP", base.mAP}, {"rank1", base.rank(1)}};
    j["delta_mAP"] = report.mAP - base.mAP;
  }
  j["options"] = resolved;
  write_json_file(dir / "eval_report.json", j);
  write_run_manifest(dir, "eval", resolved,
                     {{"checkpoint", absolute_str(a.checkpoint)}, {"data", absolute_str(a.data)}},
                     {{"report", "eval_report.json"}}, started);
  out << std::fixed << std::setprecision(4) << "mAP " << report.mAP << "  rank-1 "
      << report.rank(1) << "  rank-5 " << report.rank(5) << "  rank-10 " << report.rank(10);
  if (j.contains("delta_mAP")) out << "  (delta mAP " << j["delta_mAP"].get<double>() << ")";
  out << "\n";
  return kExitOk;
}

// ---- diagnose ------------------------------------------------------------

struct DiagnoseOptions {
  std::string variant = "stronger";  // strong | stronger | both
  std::size_t batches = 10;
  std::uint64_t seed = 0;
  bool normalize_first = false;
  std::string space = "backbone";    // input | backbone
  std::size_t P = 8;
  std::size_t K = 4;
  TrainConfig model;                 // shape and loss settings for random init
};

Json to_json(const DiagnoseOptions& o) {
  return Json{{"variant", o.variant}, {"batches", o.batches},
              {"seed", o.seed},       {"normalize_first", o.normalize_first},
              {"space", o.space},     {"P", o.P},
              {"K", o.K},             {"model", to_json(o.model)}};
}

DiagnoseOptions diagnose_options_from_json(const Json& user) {
  const Json j = overlay_config(to_json(DiagnoseOptions{}), user);
  DiagnoseOptions o;
  try {
    o.variant = j.at("variant").get<std::string>();
    o.batches = j.at("batches").get<std::size_t>();
    o.seed = j.at("seed").get<std::uint64_t>();
    o.normalize_first = j.at("normalize_first").get<bool>();
    o.space = j.at("space").get<std::string>();
    o.P = j.at("P").get<std::size_t>();
    o.K = j.at("K").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("diagnose config: ") + e.what());
  }
  o.model = train_config_from_json(j.at("model"));
  if (o.variant != "strong" && o.variant != "stronger" && o.variant != "both")
    throw UsageError("diagnose: variant must be strong|stronger|both");
  if (o.space != "input" && o.space != "backbone")
    throw UsageError("diagnose: space must be input|backbone");
  if (o.P < 2 || o.K < 2) throw UsageError("diagnose: P and K must be >= 2");
  return o;
}

struct DiagnoseArgs {
  std::string config, checkpoint, data, out, variant, space;
  std::vector<std::string> sets;
  std::optional<std::size_t> batches;
  std::optional<std::uint64_t> seed;
  bool normalize_first = false;
};

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(12) << *v;
  return os.str();
}

int cmd_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  const std::string started = utc_now();
  Json user = user_config(a.config, a.sets);
  if (!a.variant.empty()) user["variant"] = a.variant;
  if (!a.space.empty()) user["space"] = a.space;
  if (a.batches) user["batches"] = *a.batches;
  if (a.seed) user["seed"] = *a.seed;
  if (a.normalize_first) user["normalize_first"] = true;
  const DiagnoseOptions opts = diagnose_options_from_json(user);
  const Json resolved = to_json(opts);

  const fs::path dir = prepare_out_dir(a.out, "diagnose");
  const Dataset ds = load_manifest(a.data);
  const PipelineParams params = a.checkpoint.empty()
                                    ? init_params_for(opts.model, ds)
                                    : load_checkpoint(a.checkpoint).params;
  validate(params);
  const SplitView train = train_view(ds);
  if (params.num_classes() != ds.num_train_ids())
    throw DatasetError("checkpoint class count does not match the dataset's train ids");

  std::vector<Variant> variants;
  if (opts.variant != "stronger") variants.push_back(Variant::kStrong);
  if (opts.variant != "strong") variants.push_back(Variant::kStronger);

  std::ofstream csv(dir / "diagnostics.csv");
  if (!csv) throw IoError("cannot write '" + (dir / "diagnostics.csv").string() + "'");
  csv << "batch_id,variant,positive_agreement,negative_agreement,mean_branch_cosine,"
         "radial_leakage\n";
  Rng rng(opts.seed);
  std::size_t below_one = 0;
  for (std::size_t b = 0; b < opts.batches; ++b) {
    const auto rows = pk_sample(train.pids, opts.P, opts.K, rng);
    const Mat x = train.features.gather_rows(rows);
    std::vector<int> labels;
    for (std::size_t r : rows) labels.push_back(train.pids[r]);
    Mat feats = opts.space == "input" ? x : backbone_forward(x, params.backbone);
    if (opts.normalize_first) feats = l2_normalized_rows(feats);
    const ConsistencyReport cons = hardness_consistency(feats, labels);
    if (cons.positive_agreement < 1.0 || cons.negative_agreement < 1.0) ++below_one;
    for (Variant v : variants) {
      const GradDirectionStats g =
          grad_direction_report(x, labels, params, v, opts.model.loss.for_variant(v));
      csv << b << ',' << to_string(v) << ',' << opt_str(cons.positive_agreement) << ','
          << opt_str(cons.negative_agreement) << ',' << opt_str(g.mean_branch_cosine) << ','
          << opt_str(g.radial_leakage) << '\n';
    }
  }
  csv.close();
  Json inputs{{"data", absolute_str(a.data)}};
  if (!a.checkpoint.empty()) inputs["checkpoint"] = absolute_str(a.checkpoint);
  write_run_manifest(dir, "diagnose", resolved, inputs, {{"csv", "diagnostics.csv"}}, started);
  out << opts.batches << " batches; " << below_one << " with hardness agreement < 1\n";
  return kExitOk;
}

// ---- replay --------------------------------------------------------------

std::vector<std::string> replay_args(const std::string& manifest_path, const std::string& out) {
  const Json m = read_json_file(manifest_path);
  if (!m.contains("artifact") || m["artifact"] != "reid" || !m.contains("command"))
    throw UsageError("'" + manifest_path + "' is not a run manifest");
  std::vector<std::string> args{m["command"].get<std::string>(), "--config", manifest_path};
  const Json& inputs = m["inputs"];
  for (const char* key : {"data", "checkpoint"}) {
    if (inputs.contains(key)) {
      args.push_back(std::string("--") + key);
      args.push_back(inputs[key].get<std::string>());
    }
  }
  if (!out.empty()) {
    args.push_back("--out");
    args.push_back(out);
  }
  return args;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Re-ID training heads (strong / stronger): synthetic data, training, "
               "retrieval evaluation and diagnostics"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate the synthetic identity benchmark");
  synth->add_option("--config", sa.config, "Synthetic config JSON (or run manifest)");
  synth->add_option("--out", sa.out, "Output directory");
  synth->add_option("--seed", sa.seed, "Generator seed");
  synth->add_option("--set", sa.sets, "Override a config key, e.g. --set num_ids=32");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train the strong or stronger head");
  train->add_option("--data", ta.data, "Dataset manifest CSV")->required();
  train->add_option("--config", ta.config, "Training config JSON (or run manifest)");
  train->add_option("--out", ta.out, "Output directory");
  train->add_option("--variant", ta.variant, "strong | stronger");
  train->add_option("--epochs", ta.epochs, "Total epochs");
  train->add_option("--seed", ta.seed, "Run seed");
  train->add_option("--optimizer", ta.optimizer, "adam | sgd");
  train->add_option("--set", ta.sets, "Override a dotted config key");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on query/gallery");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint JSON")->required();
  eval->add_option("--data", ea.data, "Dataset manifest CSV")->required();
  eval->add_option("--config", ea.config, "Eval options JSON (or run manifest)");
  eval->add_option("--out", ea.out, "Output directory");
  eval->add_option("--metric", ea.metric, "cosine | euclidean");
  eval->add_flag("--rerank", ea.rerank, "k-reciprocal re-ranking");
  eval->add_flag("--qe", ea.qe, "alpha-weighted query expansion");
  eval->add_flag("--self-match", ea.self_match,
                 "Sanity mode: train split against itself, each item its own match");
  eval->add_flag("--no-camera-filter", ea.no_camera_filter,
                 "Keep same-pid same-camera gallery items");
  eval->add_option("--set", ea.sets, "Override, e.g. --set rerank_params.lambda=1");

  DiagnoseArgs da;
  auto* diag = app.add_subcommand("diagnose", "Hardness and gradient-direction diagnostics");
  diag->add_option("--data", da.data, "Dataset manifest CSV")->required();
  diag->add_option("--checkpoint", da.checkpoint, "Checkpoint JSON (random init if absent)");
  diag->add_option("--config", da.config, "Diagnose options JSON (or run manifest)");
  diag->add_option("--out", da.out, "Output directory");
  diag->add_option("--variant", da.variant, "strong | stronger | both");
  diag->add_option("--space", da.space, "Features mined for hardness: input | backbone");
  diag->add_option("--batches", da.batches, "Number of PK batches");
  diag->add_option("--seed", da.seed, "Sampling seed");
  diag->add_flag("--normalize-first", da.normalize_first, "L2-normalize before mining");
  diag->add_option("--set", da.sets, "Override a dotted config key");

  std::string replay_manifest, replay_out;
  auto* replay = app.add_subcommand("replay", "Re-run a command from its run manifest");
  replay->add_option("manifest", replay_manifest, "run_manifest.json")->required();
  replay->add_option("--out", replay_out, "Output directory");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << version_string() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*train) return cmd_train(ta, out);
    if (*eval) return cmd_eval(ea, out);
    if (*diag) return cmd_diagnose(da, out);
    if (*replay) return run_cli(replay_args(replay_manifest, replay_out), out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace reid
