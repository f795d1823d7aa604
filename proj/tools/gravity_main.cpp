// Batch command-line front end: tie oracle, tie model fit/eval, training,
// prediction, kernel inspection and SBM generation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "gravity/force.hpp"
#include "gravity/graph.hpp"
#include "gravity/net.hpp"
#include "gravity/paths.hpp"
#include "gravity/ties.hpp"
#include "gravity/trainer.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace gravity::cli {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

/// Either a directory holding edges.tsv / features.csv / labels.csv, or the
/// three paths given one by one.
struct GraphArgs {
  std::string dir;
  std::string edges;
  std::string features;
  std::string labels;

  void attach(CLI::App* cmd, const std::string& prefix = "") {
    cmd->add_option("--" + prefix + "graph", dir,
                    "directory with edges.tsv, features.csv and optional labels.csv");
    cmd->add_option("--" + prefix + "edges", edges, "edge file (src<TAB>dst<TAB>weight)");
    cmd->add_option("--" + prefix + "features", features, "feature CSV");
    cmd->add_option("--" + prefix + "labels", labels, "label file (K=<int> header)");
  }

  GraphFiles resolve() const { return resolve_dir(dir, edges, features, labels); }

  static GraphFiles resolve_dir(const std::string& dir, const std::string& edges = "",
                                const std::string& features = "", const std::string& labels = "") {
    GraphFiles f;
    if (!dir.empty()) {
      f.edges = fs::path(dir) / "edges.tsv";
      f.features = fs::path(dir) / "features.csv";
      if (fs::exists(fs::path(dir) / "labels.csv")) f.labels = fs::path(dir) / "labels.csv";
    }
    if (!edges.empty()) f.edges = edges;
    if (!features.empty()) f.features = features;
    if (!labels.empty()) f.labels = labels;
    if (f.edges.empty() || f.features.empty()) {
      throw ValidationError("a graph needs --graph DIR or both --edges and --features");
    }
    return f;
  }
};

Graph load_recorded(const GraphFiles& files, RunManifest& manifest) {
  for (const auto& p : {files.edges, files.features})
    if (!fs::exists(p)) throw ValidationError("no such file: " + p.string());
  if (files.labels && !fs::exists(*files.labels)) {
    throw ValidationError("no such file: " + files.labels->string());
  }
  Graph g = load_graph(files);
  manifest.add_input(files.edges);
  manifest.add_input(files.features);
  if (files.labels) manifest.add_input(*files.labels);
  return g;
}

std::string format_matrix_csv(const Tensor& t) {
  std::string out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) {
      if (j > 0) out += ',';
      out += fmt::format("{:.12g}", t(i, j));
    }
    out += '\n';
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text, RunManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("write failed: " + path.string());
  manifest.add_output(path);
}

std::string embedding_csv(const Tensor& y, const Graph& g) {
  std::string out = "vertex,label";
  for (std::size_t c = 0; c < y.cols(); ++c) out += fmt::format(",y_{}", c);
  out += '\n';
  for (std::size_t v = 0; v < y.rows(); ++v) {
    out += fmt::format("{},{}", v, g.label(v) == kUnlabeled ? std::string() : std::to_string(g.label(v)));
    for (std::size_t c = 0; c < y.cols(); ++c) out += fmt::format(",{:.12g}", y(v, c));
    out += '\n';
  }
  return out;
}

json metrics_json(const TieMetrics& m) {
  return {{"mae", m.mae}, {"mse", m.mse}, {"mape", m.mape}, {"n_pairs", m.n_pairs},
          {"n_pairs_used", m.n_pairs_used}};
}

json round12(json j) {
  if (j.is_number_float()) return std::stod(fmt::format("{:.12g}", j.get<double>()));
  if (j.is_structured())
    for (auto& v : j) v = round12(std::move(v));
  return j;
}

// Floats rounded to 12 significant digits.
std::string dump_numeric(const json& j) { return round12(j).dump(2) + "\n"; }

fs::path default_manifest(const fs::path& out) {
  return fs::path(out.string() + ".manifest.json");
}

// ---------------------------------------------------------------------------

struct TieOracleArgs {
  GraphArgs graph;
  int hops = 3;
  std::string out;
  std::uint64_t seed = 0;
};

int run_tie_oracle(const TieOracleArgs& a) {
  RunManifest manifest("tie-oracle");
  manifest.set_seed(a.seed);
  manifest.set_config({{"hops", a.hops}});
  const Graph g = load_recorded(a.graph.resolve(), manifest);
  const PathTable paths = all_pairs_paths(g, a.hops);
  const TieMatrix t = tie_matrix_exact(g, paths);
  write_text(a.out, format_matrix_csv(t.values), manifest);
  manifest.write(default_manifest(a.out));
  return kExitOk;
}

struct TieFitArgs {
  GraphArgs graph;
  std::vector<std::string> eval;
  int hops = 3;
  std::size_t epochs = 10000;
  double lr = 3e-3;
  std::size_t hidden = 128;
  std::uint64_t seed = 0;
  std::string out;
  std::string metrics;
};

json tie_report(const TieModel& model, const Graph& train, const std::vector<std::string>& eval,
                RunManifest& manifest, bool in_domain) {
  json report = json::object();
  if (in_domain) {
    const PathTable paths = all_pairs_paths(train, model.hop_radius);
    const TieMatrix truth = tie_matrix_exact(train, paths);
    const TieMatrix pred = tie_model_predict_matrix(model, train, paths);
    report["in_domain"] = metrics_json(tie_metrics(pred, truth, &paths));
  }
  json zero_shot = json::array();
  for (const auto& dir : eval) {
    const Graph g = load_recorded(GraphArgs::resolve_dir(dir), manifest);
    const PathTable paths = all_pairs_paths(g, model.hop_radius);
    const TieMatrix truth = tie_matrix_exact(g, paths);
    const TieMatrix pred = tie_model_predict_matrix(model, g, paths);
    json entry = metrics_json(tie_metrics(pred, truth, &paths));
    entry["graph"] = dir;
    zero_shot.push_back(entry);
  }
  report["zero_shot"] = zero_shot;
  return report;
}

int run_tie_fit(const TieFitArgs& a) {
  RunManifest manifest("tie-fit");
  manifest.set_seed(a.seed);
  manifest.set_config({{"hops", a.hops}, {"epochs", a.epochs}, {"lr", a.lr}, {"hidden", a.hidden},
                       {"eval", a.eval}});
  const Graph g = load_recorded(a.graph.resolve(), manifest);
  const PathTable paths = all_pairs_paths(g, a.hops);
  const TieMatrix truth = tie_matrix_exact(g, paths);
  const TieModel model = tie_model_train(g, truth, paths, TieModelOptions{a.epochs, a.lr, a.hidden, a.seed});
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  save_tie_model(model, a.out);
  manifest.add_output(a.out);
  const fs::path metrics = a.metrics.empty() ? fs::path(a.out + ".metrics.json") : fs::path(a.metrics);
  write_text(metrics, dump_numeric(tie_report(model, g, a.eval, manifest, true)), manifest);
  manifest.write(default_manifest(a.out));
  return kExitOk;
}

struct TieEvalArgs {
  std::string model;
  std::vector<std::string> eval;
  std::uint64_t seed = 0;
  std::string out;
};

int run_tie_eval(const TieEvalArgs& a) {
  RunManifest manifest("tie-eval");
  manifest.set_seed(a.seed);
  manifest.set_config({{"model", a.model}, {"eval", a.eval}});
  if (!fs::exists(a.model)) throw ValidationError("no such file: " + a.model);
  const TieModel model = load_tie_model(a.model);
  manifest.add_input(a.model);
  write_text(a.out, dump_numeric(tie_report(model, Graph{}, a.eval, manifest, false)), manifest);
  manifest.write(default_manifest(a.out));
  return kExitOk;
}

struct FitArgs {
  GraphArgs graph;
  std::string config;
  std::string out;
  std::size_t snapshot_every = 0;
  std::optional<std::uint64_t> seed;
};

int run_fit(const FitArgs& a) {
  RunManifest manifest("fit");
  TrainConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ValidationError("cannot read config " + a.config);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = parse_train_config(ss.str());
    manifest.add_input(a.config);
  }
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  manifest.set_seed(cfg.seed);
  manifest.set_config({{"train", format_train_config(cfg)}, {"snapshot_every", a.snapshot_every}});

  const Graph g = load_recorded(a.graph.resolve(), manifest);
  const fs::path out(a.out);
  fs::create_directories(out);

  TrainHooks hooks;
  if (a.snapshot_every > 0) {
    hooks.on_epoch = [&](std::size_t epoch, const Tensor& y) {
      if (epoch % a.snapshot_every != 0) return;
      write_text(out / "snapshots" / fmt::format("embedding_epoch_{:05d}.csv", epoch), embedding_csv(y, g),
                 manifest);
    };
  }

  int code = kExitOk;
  try {
    const TrainedModel model = train(g, cfg, hooks);
    save_model(model, out / "model.json");
    manifest.add_output(out / "model.json");
    write_text(out / "history.csv", format_history_csv(model.history), manifest);
    const auto pred = predict_graph(model, g);
    write_text(out / "embedding.csv", embedding_csv(pred.embedding, g), manifest);
    json report = report_to_json(evaluate_transductive(model, g, model.split.test));
    report["best_epoch"] = model.best_epoch;
    report["best_val_acc"] = model.best_val_acc;
    report["epochs_run"] = model.history.size();
    write_text(out / "metrics.json", dump_numeric(report), manifest);
    std::cout << fmt::format("best epoch {} (val acc {:.4f}), test acc {:.4f}\n", model.best_epoch,
                             model.best_val_acc, report["accuracy"].get<double>());
  } catch (const DivergenceError& e) {
    write_text(out / "history.csv", format_history_csv(e.history()), manifest);
    manifest.set_status(std::string("diverged: ") + e.what());
    std::cerr << "error: " << e.what() << '\n';
    code = kExitNumeric;
  }
  manifest.write(out / "manifest.json");
  return code;
}

struct PredictArgs {
  std::string model;
  GraphArgs graph;
  std::string out;
  std::string metrics;
  std::string embedding;
  std::uint64_t seed = 0;
};

int run_predict(const PredictArgs& a) {
  RunManifest manifest("predict");
  manifest.set_seed(a.seed);
  manifest.set_config({{"model", a.model}});
  if (!fs::exists(a.model)) throw ValidationError("no such file: " + a.model);
  const TrainedModel model = load_model(a.model);
  manifest.add_input(a.model);
  const Graph g = load_recorded(a.graph.resolve(), manifest);
  const auto pred = predict_graph(model, g);

  std::string csv = "vertex,predicted";
  for (int c = 0; c < model.n_classes; ++c) csv += fmt::format(",prob_{}", c);
  csv += '\n';
  for (std::size_t v = 0; v < pred.vertices.size(); ++v) {
    csv += fmt::format("{},{}", v, pred.vertices[v].label);
    for (double p : pred.vertices[v].probs) csv += fmt::format(",{:.12g}", p);
    csv += '\n';
  }
  write_text(a.out, csv, manifest);
  if (!a.embedding.empty()) write_text(a.embedding, embedding_csv(pred.embedding, g), manifest);

  if (g.has_labels()) {
    std::vector<std::size_t> all(g.size());
    for (std::size_t v = 0; v < g.size(); ++v) all[v] = v;
    json report = report_to_json(score_predictions(pred.vertices, g, all, model.n_classes));
    report["mode"] = pred.same_graph ? "transductive" : "inductive";
    if (pred.same_graph) {
      report["test_accuracy"] =
          score_predictions(pred.vertices, g, model.split.test, model.n_classes).accuracy;
    }
    report["best_epoch"] = model.best_epoch;
    const fs::path metrics = a.metrics.empty() ? fs::path(a.out + ".metrics.json") : fs::path(a.metrics);
    write_text(metrics, dump_numeric(report), manifest);
    std::cout << fmt::format("accuracy {:.4f} over {} labelled vertices ({})\n",
                             report["accuracy"].get<double>(), report["n_scored"].get<std::size_t>(),
                             report["mode"].get<std::string>());
  } else {
    std::cerr << "notice: graph has no labels, metrics omitted\n";
  }
  manifest.write(default_manifest(a.out));
  return kExitOk;
}

struct InspectArgs {
  GraphArgs graph;
  std::string model;
  double lambda = 0.1;
  int hops = 3;
  std::string out;
  std::uint64_t seed = 0;
};

int run_inspect(const InspectArgs& a) {
  RunManifest manifest("inspect");
  manifest.set_seed(a.seed);
  const Graph g = load_recorded(a.graph.resolve(), manifest);
  const fs::path out(a.out);
  fs::create_directories(out);

  Tensor rows = g.features();
  double lambda = a.lambda;
  int hops = a.hops;
  std::optional<TrainedModel> model;
  if (!a.model.empty()) {
    if (!fs::exists(a.model)) throw ValidationError("no such file: " + a.model);
    model = load_model(a.model);
    manifest.add_input(a.model);
    lambda = model->encoder.lambda;
    hops = model->encoder.hop_radius;
  }
  manifest.set_config({{"lambda", lambda}, {"hops", hops}, {"model", a.model}});
  require_lambda(lambda);

  const PathTable paths = all_pairs_paths(g, hops);
  const TieMatrix ties = model ? model_ties(*model, g, paths) : tie_matrix_exact(g, paths);
  if (model) rows = predict_graph(*model, g).embedding;
  const ForceKernel k = force_kernel(rows, ties, paths, lambda);
  write_text(out / "ties.csv", format_matrix_csv(ties.values), manifest);
  write_text(out / "kernel.csv", format_matrix_csv(k.values), manifest);
  if (g.has_labels()) {
    const Tensor m = membership_matrix(g.labels(), g.n_classes());
    const GroupForce gf = group_force(k, m);
    write_text(out / "membership.csv", format_matrix_csv(m), manifest);
    write_text(out / "group_force.csv", format_matrix_csv(gf.values), manifest);
  }
  std::string rf = "vertex,receptive_field_size\n";
  for (std::size_t v = 0; v < g.size(); ++v) rf += fmt::format("{},{}\n", v, receptive_field(k, v).size());
  write_text(out / "receptive_field.csv", rf, manifest);
  manifest.write(out / "manifest.json");
  return kExitOk;
}

struct GenSbmArgs {
  SbmConfig sbm;
  std::string out;
};

int run_gen_sbm(const GenSbmArgs& a) {
  RunManifest manifest("gen-sbm");
  manifest.set_seed(a.sbm.seed);
  manifest.set_config({{"blocks", a.sbm.blocks}, {"per_block", a.sbm.per_block}, {"p_in", a.sbm.p_in},
                       {"p_out", a.sbm.p_out}, {"feature_dim", a.sbm.feature_dim},
                       {"feature_shift", a.sbm.feature_shift}});
  const Graph g = generate_sbm(a.sbm);
  const fs::path out(a.out);
  fs::create_directories(out);
  const GraphFiles files{out / "edges.tsv", out / "features.csv", out / "labels.csv"};
  save_graph(g, files);
  manifest.add_output(files.edges);
  manifest.add_output(files.features);
  manifest.add_output(*files.labels);
  manifest.write(out / "manifest.json");
  return kExitOk;
}

}  // namespace
}  // namespace gravity::cli

int main(int argc, char** argv) {
  using namespace gravity::cli;
  CLI::App app{"Force-gated graph embedding: ties, training, prediction"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 2 input or validation error, 3 numeric failure.\n"
             "GRAVITY_THREADS sets the worker thread count (default 1).");

  TieOracleArgs oracle;
  auto* c_oracle = app.add_subcommand("tie-oracle", "exact tie matrix as CSV");
  oracle.graph.attach(c_oracle);
  c_oracle->add_option("--hops", oracle.hops, "hop radius H")->capture_default_str();
  c_oracle->add_option("--out", oracle.out, "output CSV")->required();
  c_oracle->add_option("--seed", oracle.seed, "recorded in the manifest");

  TieFitArgs fit_ties;
  auto* c_tfit = app.add_subcommand("tie-fit", "train the tie approximator and score it");
  fit_ties.graph.attach(c_tfit);
  c_tfit->add_option("--eval", fit_ties.eval, "graph directory for zero-shot scoring (repeatable)");
  c_tfit->add_option("--hops", fit_ties.hops, "hop radius H")->capture_default_str();
  c_tfit->add_option("--epochs", fit_ties.epochs)->capture_default_str();
  c_tfit->add_option("--lr", fit_ties.lr)->capture_default_str();
  c_tfit->add_option("--hidden", fit_ties.hidden)->capture_default_str();
  c_tfit->add_option("--seed", fit_ties.seed)->capture_default_str();
  c_tfit->add_option("--out", fit_ties.out, "tie model JSON")->required();
  c_tfit->add_option("--metrics", fit_ties.metrics, "metrics JSON (default <out>.metrics.json)");

  TieEvalArgs eval_ties;
  auto* c_teval = app.add_subcommand("tie-eval", "score a saved tie model on other graphs");
  c_teval->add_option("--model", eval_ties.model, "tie model JSON")->required();
  c_teval->add_option("--eval", eval_ties.eval, "graph directory (repeatable)")->required();
  c_teval->add_option("--seed", eval_ties.seed, "recorded in the manifest");
  c_teval->add_option("--out", eval_ties.out, "metrics JSON")->required();

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "train encoder and discriminator");
  fit.graph.attach(c_fit);
  c_fit->add_option("--config", fit.config, "key = value config file");
  c_fit->add_option("--out", fit.out, "output directory")->required();
  c_fit->add_option("--snapshot-every", fit.snapshot_every, "write the embedding every N epochs");
  c_fit->add_option("--seed", fit.seed, "overrides the config seed");
  c_fit->footer(gravity::train_config_help());

  PredictArgs predict;
  auto* c_pred = app.add_subcommand("predict", "classify every vertex of a graph");
  c_pred->add_option("--model", predict.model, "model archive")->required();
  predict.graph.attach(c_pred);
  c_pred->add_option("--out", predict.out, "predictions CSV")->required();
  c_pred->add_option("--metrics", predict.metrics, "metrics JSON (default <out>.metrics.json)");
  c_pred->add_option("--embedding", predict.embedding, "also write the embedding CSV");
  c_pred->add_option("--seed", predict.seed, "recorded in the manifest");

  InspectArgs inspect;
  auto* c_insp = app.add_subcommand("inspect", "dump ties, kernel and group-force matrices");
  inspect.graph.attach(c_insp);
  c_insp->add_option("--model", inspect.model, "use a trained model's embedding, lambda and ties");
  c_insp->add_option("--lambda", inspect.lambda)->capture_default_str();
  c_insp->add_option("--hops", inspect.hops)->capture_default_str();
  c_insp->add_option("--out", inspect.out, "output directory")->required();
  c_insp->add_option("--seed", inspect.seed, "recorded in the manifest");

  GenSbmArgs sbm;
  auto* c_sbm = app.add_subcommand("gen-sbm", "write a stochastic block model graph");
  c_sbm->add_option("--blocks", sbm.sbm.blocks)->capture_default_str();
  c_sbm->add_option("--per-block", sbm.sbm.per_block)->capture_default_str();
  c_sbm->add_option("--p-in", sbm.sbm.p_in)->capture_default_str();
  c_sbm->add_option("--p-out", sbm.sbm.p_out)->capture_default_str();
  c_sbm->add_option("--dim", sbm.sbm.feature_dim)->capture_default_str();
  c_sbm->add_option("--shift", sbm.sbm.feature_shift)->capture_default_str();
  c_sbm->add_option("--seed", sbm.sbm.seed)->capture_default_str();
  c_sbm->add_option("--out", sbm.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*c_oracle) return run_tie_oracle(oracle);
    if (*c_tfit) return run_tie_fit(fit_ties);
    if (*c_teval) return run_tie_eval(eval_ties);
    if (*c_fit) return run_fit(fit);
    if (*c_pred) return run_predict(predict);
    if (*c_insp) return run_inspect(inspect);
    if (*c_sbm) return run_gen_sbm(sbm);
  } catch (const gravity::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const gravity::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
