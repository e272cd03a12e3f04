#include "eir/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "eir/config.hpp"
#include "eir/error.hpp"
#include "eir/evaluate.hpp"
#include "eir/serialize.hpp"

namespace eir::cli {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw_data("cannot write " + tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path make_run_dir(const std::filesystem::path& root, std::uint64_t seed) {
  std::filesystem::create_directories(root);
  const std::string stem = now_iso8601() + "-seed" + std::to_string(seed);
  std::filesystem::path dir = root / stem;
  for (int suffix = 2; std::filesystem::exists(dir); ++suffix)
    dir = root / (stem + "-" + std::to_string(suffix));
  std::filesystem::create_directories(dir);
  return dir;
}

DatasetConfig dataset_from_arg(const std::string& arg, const DatasetConfig& fallback) {
  if (arg.empty()) return fallback;
  if (arg.front() == '{') {
    json doc;
    try {
      doc = json::parse(arg);
    } catch (const json::exception& e) {
      throw_config(std::string("--dataset: invalid JSON: ") + e.what());
    }
    // Reuse the strict parser; defaults for everything else.
    RunConfig run = parse_run_config(json{{"dataset", doc}});
    return run.dataset;
  }
  const std::size_t colon = arg.find(':');
  const std::string type = arg.substr(0, colon);
  DatasetConfig config = fallback;
  if (type == "synthetic") {
    config.type = DatasetConfig::Type::synthetic;
    return config;
  }
  if (colon == std::string::npos)
    throw_config("--dataset: expected 'cifar10:DIR', 'raw:TRAIN[,TEST]', 'synthetic' or inline JSON");
  const std::string rest = arg.substr(colon + 1);
  if (type == "cifar10") {
    config.type = DatasetConfig::Type::cifar10;
    config.path = rest;
    config.test_path.clear();
    return config;
  }
  if (type == "raw") {
    config.type = DatasetConfig::Type::raw;
    const std::size_t comma = rest.find(',');
    config.path = rest.substr(0, comma);
    config.test_path = comma == std::string::npos ? "" : rest.substr(comma + 1);
    return config;
  }
  throw_config("--dataset: unknown type '" + type + "'");
}

std::vector<std::size_t> parse_k_list(const std::string& arg) {
  std::vector<std::size_t> ks;
  std::stringstream ss(arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      ks.push_back(static_cast<std::size_t>(std::stoull(tok)));
    } catch (const std::exception&) {
      throw_config("--ks: '" + tok + "' is not an integer");
    }
  }
  if (ks.empty()) throw_config("--ks: empty list");
  return ks;
}

double knn_of_state(const TrainState& state, const EncoderSpec& spec, const Dataset& train_ds,
                    const Dataset& test_ds, std::size_t k, double tau) {
  const EvalIndex train_idx = build_index(spec, state.params, train_ds);
  const EvalIndex test_idx = build_index(spec, state.params, test_ds);
  return knn_accuracy(test_idx, train_idx, std::min(k, train_idx.size()), tau);
}

struct TrainedRun {
  TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
  std::vector<EpochMetrics> metrics;
  std::filesystem::path checkpoint;
};

json manifest_json(const RunConfig& run, const Dataset& train_ds,
                   const std::filesystem::path& dir,
                   const std::vector<std::string>& output_names) {
  json manifest;
  manifest["config"] = run_config_to_json(run);
  char hashbuf[17];
  std::snprintf(hashbuf, sizeof(hashbuf), "%016llx",
                static_cast<unsigned long long>(dataset_hash(train_ds)));
  manifest["dataset_hash"] = hashbuf;
  manifest["code_version"] = kVersion;
  manifest["seed"] = run.train.seed;
  manifest["start_timestamp"] = now_iso8601();
  manifest["end_timestamp"] = nullptr;
  json outputs = json::object();
  for (const std::string& name : output_names) outputs[name] = (dir / name).string();
  manifest["outputs"] = outputs;
  return manifest;
}

/// Shared train driver: manifest, metrics stream, checkpoints, summary.
TrainedRun run_training(const RunConfig& run, const std::filesystem::path& dir,
                        bool write_artifacts) {
  auto [train_ds, test_ds] = load_datasets(run.dataset);
  const UnlabeledView view(train_ds);
  const bool with_knn = run.train.eval_every > 0 && test_ds.count() > 0;

  TrainedRun result;
  result.checkpoint = dir / "checkpoint.eirc";
  const std::string config_echo = canonical_config_json(run);

  std::ofstream metrics_out;
  if (write_artifacts) {
    write_text_atomic(dir / "manifest.json",
                      manifest_json(run, train_ds, dir, {"metrics.csv", "checkpoint.eirc"})
                          .dump(2) + "\n");
    metrics_out.open(dir / "metrics.csv");
    metrics_out << metrics_csv_header(with_knn) << "\n";
  }

  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m) {
    if (write_artifacts) metrics_out << metrics_csv_row(m, with_knn) << "\n" << std::flush;
  };
  if (with_knn)
    hooks.evaluate = [&](const TrainState& state) {
      return knn_of_state(state, run.train.encoder, train_ds, test_ds, run.train.eval_k,
                          run.train.tau);
    };
  if (write_artifacts)
    hooks.save_checkpoint = [&](const TrainState& state) {
      const std::filesystem::path path =
          state.epochs_done == run.train.total_epochs()
              ? result.checkpoint
              : dir / ("checkpoint_epoch" + std::to_string(state.epochs_done) + ".eirc");
      save_checkpoint(path, config_echo, run.train, state);
    };

  result.metrics = train(view, run.train, result.state, hooks);

  if (write_artifacts) {
    json summary;
    summary["end_timestamp"] = now_iso8601();
    summary["epochs"] = result.state.epochs_done;
    if (!result.metrics.empty()) {
      const EpochMetrics& last = result.metrics.back();
      summary["final_total"] = last.total;
      summary["final_l_iraug"] = last.l_iraug;
      if (last.knn_acc) summary["final_knn_acc"] = *last.knn_acc;
    }
    write_text_atomic(dir / "summary.json", summary.dump(2) + "\n");
  }
  return result;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out_root) {
  const RunConfig run = load_run_config(config_path, overrides);
  const std::filesystem::path dir = make_run_dir(out_root, run.train.seed);
  const TrainedRun result = run_training(run, dir, true);
  const EpochMetrics& last = result.metrics.back();
  std::cout << "run dir: " << dir.string() << "\n";
  std::cout << "final epoch " << last.epoch << ": total=" << last.total
            << " l_iraug=" << last.l_iraug << " l_intra=" << last.l_intra
            << " l_inter=" << last.l_inter << "\n";
  std::cout << "checkpoint: " << result.checkpoint.string() << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& protocol,
             const std::string& dataset_arg, std::string ks_arg, double tau_override,
             bool plain_vote, std::size_t probe_epochs, double probe_lr,
             const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig ckpt_run = run_config_from_text(ckpt.config_json);
  const DatasetConfig data_config = dataset_from_arg(dataset_arg, ckpt_run.dataset);
  auto [train_ds, test_ds] = load_datasets(data_config);
  if (test_ds.count() == 0) throw_config("eval: dataset has no test split");
  const double tau = tau_override > 0.0 ? tau_override : ckpt_run.train.tau;

  json report;
  report["protocol"] = protocol;
  report["checkpoint"] = ckpt_path;
  report["checkpoint_hash"] = file_hash_hex(ckpt_path);
  report["config"] = json::parse(ckpt.config_json);
  report["tau"] = tau;

  double headline = 0.0;
  if (protocol == "knn") {
    if (ks_arg.empty()) ks_arg = "5,20,200";
    const std::vector<std::size_t> ks = parse_k_list(ks_arg);
    const EvalIndex train_idx = build_index(ckpt.spec, ckpt.state.params, train_ds);
    const EvalIndex test_idx = build_index(ckpt.spec, ckpt.state.params, test_ds);
    json accs = json::object();
    for (std::size_t k : ks) {
      const double acc = knn_accuracy(test_idx, train_idx, std::min(k, train_idx.size()), tau,
                                      !plain_vote);
      accs[std::to_string(k)] = acc;
      headline = acc;
    }
    report["k"] = ks;
    report["accuracy"] = accs;
    report["weighted_vote"] = !plain_vote;
  } else if (protocol == "recall") {
    if (ks_arg.empty()) ks_arg = "1,2,4,8";
    const std::vector<std::size_t> ks = parse_k_list(ks_arg);
    const EvalIndex test_idx = build_index(ckpt.spec, ckpt.state.params, test_ds);
    const auto recalls = recall_at_k(test_idx, ks);
    json accs = json::object();
    for (const auto& [k, acc] : recalls) {
      accs[std::to_string(k)] = acc;
      headline = acc;
    }
    report["k"] = ks;
    report["accuracy"] = accs;
  } else if (protocol == "linear") {
    const Tensor train_feats = extract_features(ckpt.spec, ckpt.state.params, train_ds);
    const Tensor test_feats = extract_features(ckpt.spec, ckpt.state.params, test_ds);
    ProbeConfig probe;
    if (probe_epochs > 0) probe.epochs = probe_epochs;
    if (probe_lr > 0.0) probe.lr = probe_lr;
    headline = linear_probe(train_feats, train_ds.labels, test_feats, test_ds.labels, probe);
    report["accuracy"] = headline;
    report["probe_epochs"] = probe.epochs;
    report["probe_lr"] = probe.lr;
  } else {
    throw_config("eval: unknown protocol '" + protocol + "' (want knn, linear or recall)");
  }

  if (!out_path.empty()) write_text_atomic(out_path, report.dump(2) + "\n");
  std::cout << protocol << " accuracy: " << headline << "\n";
  if (!out_path.empty()) std::cout << "report: " << out_path << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::string& out_root) {
  const RunConfig base = load_run_config(config_path, overrides);
  const std::filesystem::path dir = make_run_dir(out_root, base.train.seed);
  auto [train_ds, test_ds] = load_datasets(base.dataset);
  if (test_ds.count() == 0) throw_config("ablate: dataset has no test split");

  write_text_atomic(dir / "manifest.json",
                    manifest_json(base, train_ds, dir, {"ablation.csv"}).dump(2) + "\n");

  struct Variant {
    const char* name;
    double lambda1, lambda2;
  };
  const Variant variants[] = {{"iraug", 0.0, 0.0},
                              {"iraug+intra", base.train.lambda1, 0.0},
                              {"iraug+inter", 0.0, base.train.lambda2},
                              {"eir", base.train.lambda1, base.train.lambda2}};
  std::string csv = "variant,lambda1,lambda2,knn_acc\n";
  for (const Variant& variant : variants) {
    RunConfig run = base;
    run.train.lambda1 = variant.lambda1;
    run.train.lambda2 = variant.lambda2;
    run.train.checkpoint_every = 0;
    run.train.eval_every = 0;
    const UnlabeledView view(train_ds);
    TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
    train(view, run.train, state);
    const double acc = knn_of_state(state, run.train.encoder, train_ds, test_ds,
                                    run.train.eval_k, run.train.tau);
    csv += std::string(variant.name) + "," + format_double(variant.lambda1) + "," +
           format_double(variant.lambda2) + "," + format_double(acc) + "\n";
    std::cout << variant.name << ": knn_acc=" << acc << "\n";
  }
  write_text_atomic(dir / "ablation.csv", csv);
  std::cout << "ablation table: " << (dir / "ablation.csv").string() << "\n";
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& parameter, const std::string& values_arg,
              const std::string& out_root, bool parallel) {
  if (parameter != "lambda1" && parameter != "lambda2" && parameter != "ratio")
    throw_config("sweep: parameter must be lambda1, lambda2 or ratio");
  std::vector<double> values;
  {
    std::stringstream ss(values_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok.empty()) continue;
      try {
        values.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw_config("sweep: '" + tok + "' is not a number");
      }
    }
  }
  if (values.empty()) throw_config("sweep: no values given");

  const RunConfig base = load_run_config(config_path, overrides);
  const std::filesystem::path dir = make_run_dir(out_root, base.train.seed);
  auto [train_ds, test_ds] = load_datasets(base.dataset);
  if (test_ds.count() == 0) throw_config("sweep: dataset has no test split");
  write_text_atomic(dir / "manifest.json",
                    manifest_json(base, train_ds, dir, {"sweep.csv"}).dump(2) + "\n");

  auto run_point = [&](double value) {
    RunConfig run = base;
    if (parameter == "lambda1") run.train.lambda1 = value;
    if (parameter == "lambda2") run.train.lambda2 = value;
    if (parameter == "ratio") {
      run.train.interpolation.ratio_policy = InterpolationSpec::RatioPolicy::fixed;
      run.train.interpolation.r = value;
    }
    run.train.checkpoint_every = 0;
    run.train.eval_every = 0;
    const UnlabeledView view(train_ds);
    TrainState state{EncoderParams{}, EmbeddingBank(Tensor::zeros({1, 1}), 0.0), {}, 0};
    train(view, run.train, state);
    return knn_of_state(state, run.train.encoder, train_ds, test_ds, run.train.eval_k,
                        run.train.tau);
  };

  std::vector<double> accs(values.size());
  if (parallel) {
    std::vector<std::future<double>> futures;
    for (double v : values)
      futures.push_back(std::async(std::launch::async, run_point, v));
    for (std::size_t i = 0; i < futures.size(); ++i) accs[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) accs[i] = run_point(values[i]);
  }

  std::string csv = parameter + ",knn_acc\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    csv += format_double(values[i]) + "," + format_double(accs[i]) + "\n";
    std::cout << parameter << "=" << values[i] << ": knn_acc=" << accs[i] << "\n";
  }
  write_text_atomic(dir / "sweep.csv", csv);
  std::cout << "sweep table: " << (dir / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_project(const std::string& ckpt_path, const std::string& dataset_arg,
                const std::string& split, const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig ckpt_run = run_config_from_text(ckpt.config_json);
  auto [train_ds, test_ds] = load_datasets(dataset_from_arg(dataset_arg, ckpt_run.dataset));
  const Dataset& ds = split == "train" ? train_ds : test_ds;
  if (ds.count() == 0) throw_config("project: split '" + split + "' is empty");
  const Tensor feats = extract_features(ckpt.spec, ckpt.state.params, ds);
  const Tensor coords = project_2d(feats);
  std::string csv = "x,y,label\n";
  for (std::size_t i = 0; i < ds.count(); ++i)
    csv += format_double(coords[i * 2]) + "," + format_double(coords[i * 2 + 1]) + "," +
           std::to_string(ds.labels[i]) + "\n";
  write_text_atomic(out_path, csv);
  std::cout << "projection: " << out_path << " (" << ds.count() << " points)\n";
  return 0;
}

int cmd_diagnose(const std::string& ckpt_path, const std::string& dataset_arg,
                 std::size_t samples, const std::string& out_path) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const RunConfig run = run_config_from_text(ckpt.config_json);
  auto [train_ds, test_ds] = load_datasets(dataset_from_arg(dataset_arg, run.dataset));
  const UnlabeledView view(train_ds);
  const double kl = intra_alignment_diagnostic(ckpt.spec, ckpt.state.params, ckpt.state.bank,
                                               view, run.train.augment,
                                               run.train.effective_intra_tau(), samples,
                                               run.train.seed);
  std::cout << "mean intra-view KL: " << kl << "\n";
  if (!out_path.empty()) {
    json report;
    report["mean_intra_kl"] = kl;
    report["samples"] = std::min(samples, view.size());
    report["checkpoint_hash"] = file_hash_hex(ckpt_path);
    write_text_atomic(out_path, report.dump(2) + "\n");
    std::cout << "report: " << out_path << "\n";
  }
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"EIR unsupervised feature-embedding trainer and evaluator"};
  app.require_subcommand(1);

  std::string config_path, out_root = "runs";
  std::vector<std::string> overrides;

  CLI::App* train_cmd = app.add_subcommand("train", "train an embedding model");
  train_cmd->add_option("--config", config_path, "JSON config file")->required();
  train_cmd->add_option("--set", overrides, "dotted-path config override key=value");
  train_cmd->add_option("--out", out_root, "output root directory");

  std::string ckpt_path, protocol, dataset_arg, ks_arg, eval_out;
  double tau_override = 0.0, probe_lr = 0.0;
  std::size_t probe_epochs = 0;
  bool plain_vote = false;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  eval_cmd->add_option("--protocol", protocol, "knn | linear | recall")->required();
  eval_cmd->add_option("--dataset", dataset_arg,
                       "dataset override: cifar10:DIR | raw:TRAIN[,TEST] | synthetic | JSON");
  eval_cmd->add_option("--ks", ks_arg, "comma-separated k list");
  eval_cmd->add_option("--tau", tau_override, "kNN vote temperature");
  eval_cmd->add_flag("--plain-vote", plain_vote, "unweighted majority vote");
  eval_cmd->add_option("--probe-epochs", probe_epochs, "linear probe epochs");
  eval_cmd->add_option("--probe-lr", probe_lr, "linear probe learning rate");
  eval_cmd->add_option("--out", eval_out, "report JSON path");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "run the four lambda-gating variants");
  ablate_cmd->add_option("--config", config_path, "JSON config file")->required();
  ablate_cmd->add_option("--set", overrides, "dotted-path config override key=value");
  ablate_cmd->add_option("--out", out_root, "output root directory");

  std::string parameter, values_arg;
  bool parallel = false;
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep one hyperparameter");
  sweep_cmd->add_option("--config", config_path, "JSON config file")->required();
  sweep_cmd->add_option("--set", overrides, "dotted-path config override key=value");
  sweep_cmd->add_option("--parameter", parameter, "lambda1 | lambda2 | ratio")->required();
  sweep_cmd->add_option("--values", values_arg, "comma-separated values")->required();
  sweep_cmd->add_option("--out", out_root, "output root directory");
  sweep_cmd->add_flag("--parallel", parallel, "run sweep points concurrently");

  std::string split = "test", project_out = "projection.csv";
  CLI::App* project_cmd = app.add_subcommand("project", "export 2-d linear projection");
  project_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  project_cmd->add_option("--dataset", dataset_arg, "dataset override");
  project_cmd->add_option("--split", split, "train | test");
  project_cmd->add_option("--out", project_out, "CSV output path");

  std::size_t diag_samples = 256;
  std::string diag_out;
  CLI::App* diag_cmd = app.add_subcommand("diagnose", "intra-view alignment probe");
  diag_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  diag_cmd->add_option("--dataset", dataset_arg, "dataset override");
  diag_cmd->add_option("--samples", diag_samples, "instances to probe");
  diag_cmd->add_option("--out", diag_out, "report JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(config_path, overrides, out_root);
    if (eval_cmd->parsed())
      return cmd_eval(ckpt_path, protocol, dataset_arg, ks_arg, tau_override, plain_vote,
                      probe_epochs, probe_lr, eval_out);
    if (ablate_cmd->parsed()) return cmd_ablate(config_path, overrides, out_root);
    if (sweep_cmd->parsed())
      return cmd_sweep(config_path, overrides, parameter, values_arg, out_root, parallel);
    if (project_cmd->parsed()) return cmd_project(ckpt_path, dataset_arg, split, project_out);
    if (diag_cmd->parsed()) return cmd_diagnose(ckpt_path, dataset_arg, diag_samples, diag_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace eir::cli
