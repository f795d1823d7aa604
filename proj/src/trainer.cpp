#include "gravity/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <zlib.h>

#include "gravity/force.hpp"
#include "gravity/paths.hpp"

namespace gravity {

DivergenceError::DivergenceError(std::size_t epoch, std::vector<EpochRecord> history,
                                 const std::string& what)
    : NumericError(fmt::format("training diverged at epoch {}: {}", epoch, what)),
      epoch_(epoch),
      history_(std::move(history)) {}

Split stratified_split(const Graph& g, double train_fraction, double val_fraction,
                       double test_fraction, std::mt19937_64& rng) {
  if (!g.has_labels()) throw ValidationError("split requires a labelled graph");
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(g.n_classes()));
  for (std::size_t v = 0; v < g.size(); ++v)
    if (g.label(v) != kUnlabeled) by_class[static_cast<std::size_t>(g.label(v))].push_back(v);

  Split s;
  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    const double n = static_cast<double>(members.size());
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * n));
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * n));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size());
    n_val = std::min(n_val, members.size() - n_train);
    n_test = std::min(n_test, members.size() - n_train - n_val);
    auto it = members.begin();
    s.train.insert(s.train.end(), it, it + static_cast<std::ptrdiff_t>(n_train));
    it += static_cast<std::ptrdiff_t>(n_train);
    s.val.insert(s.val.end(), it, it + static_cast<std::ptrdiff_t>(n_val));
    it += static_cast<std::ptrdiff_t>(n_val);
    s.test.insert(s.test.end(), it, it + static_cast<std::ptrdiff_t>(n_test));
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

TieMatrix model_ties(const TrainedModel& model, const Graph& g, const PathTable& paths) {
  if (model.tie_model) return tie_model_predict_matrix(*model.tie_model, g, paths);
  return tie_matrix_exact(g, paths);
}

Classification classify(const TrainedModel& model, std::span<const double> emb_row,
                        const Reference& ref, std::span<const double> ref_ties) {
  const std::size_t k = static_cast<std::size_t>(model.n_classes);
  if (ref.embeddings.rows() != ref.labels.size()) throw ValidationError("reference set is inconsistent");
  if (!ref_ties.empty() && ref_ties.size() != ref.labels.size()) {
    throw ValidationError("classify: one tie per reference required");
  }
  if (emb_row.size() != ref.embeddings.cols()) {
    throw ValidationError(fmt::format("classify: embedding has {} dims, references have {}",
                                      emb_row.size(), ref.embeddings.cols()));
  }
  std::vector<std::size_t> class_size(k, 0);
  for (int l : ref.labels) ++class_size.at(static_cast<std::size_t>(l));
  for (std::size_t c = 0; c < k; ++c)
    if (class_size[c] == 0) throw ValidationError(fmt::format("reference class {} is empty", c));

  const Tensor query = Tensor::row_vector(emb_row);
  const Tensor sim = similarity_matrix(query, ref.embeddings);
  std::vector<std::vector<double>> terms(k);
  for (std::size_t r = 0; r < ref.labels.size(); ++r) {
    const double t = ref_ties.empty() ? 1.0 : ref_ties[r];
    if (!(t > 0.0)) continue;
    const double force = sim(0, r) * t;
    if (force >= model.encoder.lambda) terms[static_cast<std::size_t>(ref.labels[r])].push_back(force);
  }
  Classification out;
  out.attraction.resize(k);
  for (std::size_t c = 0; c < k; ++c) out.attraction[c] = order_invariant_sum(terms[c]);
  out.probs = discriminator_forward(model.discriminator_params, out.attraction, model.discriminator);
  out.label = static_cast<int>(std::max_element(out.probs.begin(), out.probs.end()) - out.probs.begin());
  return out;
}

EvalReport score_predictions(const std::vector<Classification>& preds, const Graph& g,
                             std::span<const std::size_t> vertices, int n_classes) {
  const auto k = static_cast<std::size_t>(n_classes);
  EvalReport r;
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::size_t correct = 0;
  for (auto v : vertices) {
    if (g.label(v) == kUnlabeled) continue;
    const auto truth = static_cast<std::size_t>(g.label(v));
    const auto guess = static_cast<std::size_t>(preds.at(v).label);
    if (truth >= k) throw ValidationError("test label outside the model's classes");
    ++r.confusion[truth][guess];
    ++r.n_scored;
    if (truth == guess) ++correct;
  }
  r.accuracy = r.n_scored == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(r.n_scored);
  r.precision.assign(k, 0.0);
  r.recall.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t o = 0; o < k; ++o) {
      predicted += r.confusion[o][c];
      actual += r.confusion[c][o];
    }
    if (predicted > 0) r.precision[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(predicted);
    if (actual > 0) r.recall[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(actual);
  }
  return r;
}

namespace {

Reference make_reference(const Tensor& embedding, const Graph& g, const std::vector<std::size_t>& train) {
  Reference ref;
  ref.embeddings = embedding.gather_rows(train);
  ref.vertices = train;
  for (auto v : train) ref.labels.push_back(g.label(v));
  return ref;
}

std::vector<Classification> classify_rows(const TrainedModel& model, const Tensor& embedding,
                                          const Reference& ref, const TieMatrix* ties,
                                          std::span<const std::size_t> rows) {
  std::vector<Classification> out(embedding.rows());
  std::vector<double> ref_ties(ties != nullptr ? ref.vertices.size() : 0);
  for (auto v : rows) {
    if (ties != nullptr)
      for (std::size_t r = 0; r < ref.vertices.size(); ++r) ref_ties[r] = (*ties)(v, ref.vertices[r]);
    out[v] = classify(model, embedding.row(v), ref, ref_ties);
  }
  return out;
}

std::vector<std::size_t> all_vertices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

TrainedModel train(const Graph& g, const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  if (!g.has_labels()) throw ValidationError("training requires a labelled graph");
  if (cfg.q >= g.feature_dim()) {
    throw ValidationError(fmt::format("q = {} must be smaller than the attribute dimension {}", cfg.q,
                                      g.feature_dim()));
  }

  std::mt19937_64 rng(cfg.seed);
  TrainedModel model;
  model.config = cfg;
  model.n_classes = g.n_classes();
  model.training_fingerprint = graph_fingerprint(g);
  model.split = stratified_split(g, cfg.train_fraction, cfg.val_fraction, cfg.test_fraction, rng);

  std::vector<int> present;
  for (auto v : model.split.train) present.push_back(g.label(v));
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  if (present.size() < 2) throw ValidationError("training split must contain at least 2 classes");
  if (static_cast<int>(present.size()) != g.n_classes()) {
    throw ValidationError("every declared class needs at least one labelled vertex");
  }

  model.encoder = EncoderConfig{g.feature_dim(), cfg.hidden_dims, cfg.q, cfg.lambda, cfg.hops};
  model.discriminator = DiscriminatorConfig{static_cast<std::size_t>(g.n_classes()),
                                            cfg.disc_hidden_dims,
                                            static_cast<std::size_t>(g.n_classes())};

  const PathTable paths = all_pairs_paths(g, cfg.hops);
  TieMatrix ties = tie_matrix_exact(g, paths);
  if (cfg.tie_source == TieSource::kLearned) {
    TieModelOptions opt = cfg.tie;
    opt.seed = rng();
    model.tie_model = tie_model_train(g, ties, paths, opt);
    ties = tie_model_predict_matrix(*model.tie_model, g, paths);
  }

  model.encoder_params = init_encoder(model.encoder, rng);
  model.discriminator_params = init_discriminator(model.discriminator, rng);

  ObjectiveSetup setup;
  setup.features = &g.features();
  setup.ties = &ties;
  setup.paths = &paths;
  setup.labels = &g.labels();
  setup.train = model.split.train;
  setup.n_classes = g.n_classes();
  setup.encoder = model.encoder;
  setup.discriminator = model.discriminator;
  setup.gamma = cfg.gamma;
  setup.normalization = cfg.normalization;

  AdamOptions adam;
  adam.lr = cfg.lr;
  adam.weight_decay = cfg.weight_decay;

  ParamStore best_enc = model.encoder_params;
  ParamStore best_dis = model.discriminator_params;
  bool have_best = false;
  double best_val_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    try {
      ad::Tape tape;
      auto enc = model.encoder_params.attach(tape);
      auto dis = model.discriminator_params.attach(tape);
      auto terms = build_objective(tape, enc, dis, setup);
      rec.enc_loss = terms.encoder_loss.value()(0, 0);
      rec.disc_loss = terms.discriminator_loss.value()(0, 0);
      rec.total = terms.total.value()(0, 0);
      tape.backward(terms.total);
      model.encoder_params.pull_grads(enc);
      model.discriminator_params.pull_grads(dis);
      adam_step(model.encoder_params, adam);
      adam_step(model.discriminator_params, adam);

      const Embedding emb = encoder_forward(model.encoder_params, g, ties, paths, model.encoder);
      const Reference ref = make_reference(emb.values, g, model.split.train);
      const auto preds = classify_rows(model, emb.values, ref, &ties, model.split.val);
      rec.val_acc = score_predictions(preds, g, model.split.val, g.n_classes()).accuracy;
      std::vector<double> miss;
      for (auto v : model.split.val) miss.push_back(1.0 - preds[v].probs[static_cast<std::size_t>(g.label(v))]);
      rec.val_loss = order_invariant_sum(miss);
      if (hooks.on_epoch) hooks.on_epoch(epoch, emb.values);
    } catch (const NumericError& e) {
      throw DivergenceError(epoch, model.history, e.what());
    }
    model.history.push_back(rec);

    const bool better = rec.val_acc > model.best_val_acc ||
                        (rec.val_acc == model.best_val_acc && rec.val_loss < best_val_loss);
    if (!have_best || better) {
      have_best = true;
      model.best_val_acc = rec.val_acc;
      best_val_loss = rec.val_loss;
      model.best_epoch = epoch;
      best_enc = model.encoder_params;
      best_dis = model.discriminator_params;
    } else if (epoch - model.best_epoch >= cfg.patience) {
      break;
    }
  }

  model.encoder_params = std::move(best_enc);
  model.discriminator_params = std::move(best_dis);
  const Embedding emb = encoder_forward(model.encoder_params, g, ties, paths, model.encoder);
  model.reference = make_reference(emb.values, g, model.split.train);
  return model;
}

GraphPrediction predict_graph(const TrainedModel& model, const Graph& g) {
  if (g.feature_dim() != model.encoder.input_dim) {
    throw ValidationError(fmt::format("graph has {} attribute columns, model expects {}",
                                      g.feature_dim(), model.encoder.input_dim));
  }
  GraphPrediction out;
  out.same_graph = graph_fingerprint(g) == model.training_fingerprint;
  const PathTable paths = all_pairs_paths(g, model.encoder.hop_radius);
  const TieMatrix ties = model_ties(model, g, paths);
  out.embedding = encoder_forward(model.encoder_params, g, ties, paths, model.encoder).values;
  const auto rows = all_vertices(g.size());
  out.vertices = classify_rows(model, out.embedding, model.reference, out.same_graph ? &ties : nullptr, rows);
  return out;
}

EvalReport evaluate_transductive(const TrainedModel& model, const Graph& g,
                                 std::span<const std::size_t> vertices) {
  const auto pred = predict_graph(model, g);
  if (!pred.same_graph) throw ValidationError("transductive evaluation needs the training graph");
  return score_predictions(pred.vertices, g, vertices, model.n_classes);
}

EvalReport evaluate_inductive(const TrainedModel& model, const Graph& g_test) {
  if (g_test.feature_dim() != model.encoder.input_dim) {
    throw ValidationError(fmt::format("test graph has {} attribute columns, model expects {}",
                                      g_test.feature_dim(), model.encoder.input_dim));
  }
  // The training graph itself (sanity mode) keeps its own ties, as in predict_graph.
  const auto pred = predict_graph(model, g_test);
  std::vector<std::size_t> labeled;
  for (std::size_t v = 0; v < g_test.size(); ++v)
    if (g_test.label(v) != kUnlabeled) labeled.push_back(v);
  return score_predictions(pred.vertices, g_test, labeled, model.n_classes);
}

namespace {

nlohmann::json params_to_json(const ParamStore& p) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : p.params()) out.push_back({{"name", e.name}, {"tensor", tensor_to_json(e.value)}});
  return out;
}

ParamStore params_from_json(const nlohmann::json& j) {
  ParamStore p;
  for (const auto& e : j) p.add(e.at("name").get<std::string>(), tensor_from_json(e.at("tensor")));
  return p;
}

std::string crc_hex(const std::string& s) {
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(s.data()), static_cast<uInt>(s.size()));
  return fmt::format("{:08x}", static_cast<std::uint32_t>(crc));
}

}  // namespace

nlohmann::json model_to_json(const TrainedModel& m) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : m.history)
    history.push_back({h.epoch, h.enc_loss, h.disc_loss, h.total, h.val_acc, h.val_loss});
  return {
      {"config", format_train_config(m.config)},
      {"n_classes", m.n_classes},
      {"encoder", {{"input_dim", m.encoder.input_dim}, {"hidden_dims", m.encoder.hidden_dims},
                   {"output_dim", m.encoder.output_dim}, {"lambda", m.encoder.lambda},
                   {"hop_radius", m.encoder.hop_radius}}},
      {"discriminator", {{"input_dim", m.discriminator.input_dim},
                         {"hidden_dims", m.discriminator.hidden_dims},
                         {"output_dim", m.discriminator.output_dim}}},
      {"encoder_params", params_to_json(m.encoder_params)},
      {"discriminator_params", params_to_json(m.discriminator_params)},
      {"tie_model", m.tie_model ? tie_model_to_json(*m.tie_model) : nlohmann::json(nullptr)},
      {"reference", {{"embeddings", tensor_to_json(m.reference.embeddings)},
                     {"labels", m.reference.labels},
                     {"vertices", m.reference.vertices}}},
      {"split", {{"train", m.split.train}, {"val", m.split.val}, {"test", m.split.test}}},
      {"training_fingerprint", m.training_fingerprint},
      {"history", history},
      {"best_epoch", m.best_epoch},
      {"best_val_acc", m.best_val_acc},
  };
}

TrainedModel model_from_json(const nlohmann::json& j) {
  try {
    TrainedModel m;
    m.config = parse_train_config(j.at("config").get<std::string>());
    m.n_classes = j.at("n_classes").get<int>();
    const auto& e = j.at("encoder");
    m.encoder = EncoderConfig{e.at("input_dim").get<std::size_t>(),
                              e.at("hidden_dims").get<std::vector<std::size_t>>(),
                              e.at("output_dim").get<std::size_t>(), e.at("lambda").get<double>(),
                              e.at("hop_radius").get<int>()};
    const auto& d = j.at("discriminator");
    m.discriminator = DiscriminatorConfig{d.at("input_dim").get<std::size_t>(),
                                          d.at("hidden_dims").get<std::vector<std::size_t>>(),
                                          d.at("output_dim").get<std::size_t>()};
    m.encoder.validate();
    m.discriminator.validate();
    m.encoder_params = params_from_json(j.at("encoder_params"));
    m.discriminator_params = params_from_json(j.at("discriminator_params"));
    if (!j.at("tie_model").is_null()) m.tie_model = tie_model_from_json(j.at("tie_model"));
    const auto& r = j.at("reference");
    m.reference.embeddings = tensor_from_json(r.at("embeddings"));
    m.reference.labels = r.at("labels").get<std::vector<int>>();
    m.reference.vertices = r.at("vertices").get<std::vector<std::size_t>>();
    const auto& s = j.at("split");
    m.split.train = s.at("train").get<std::vector<std::size_t>>();
    m.split.val = s.at("val").get<std::vector<std::size_t>>();
    m.split.test = s.at("test").get<std::vector<std::size_t>>();
    m.training_fingerprint = j.at("training_fingerprint").get<std::string>();
    for (const auto& h : j.at("history")) {
      m.history.push_back({h.at(0).get<std::size_t>(), h.at(1).get<double>(), h.at(2).get<double>(),
                           h.at(3).get<double>(), h.at(4).get<double>(), h.at(5).get<double>()});
    }
    m.best_epoch = j.at("best_epoch").get<std::size_t>();
    m.best_val_acc = j.at("best_val_acc").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model archive: ") + e.what());
  }
}

void save_model(const TrainedModel& m, const std::filesystem::path& path) {
  const nlohmann::json payload = model_to_json(m);
  const std::string body = payload.dump();
  nlohmann::json archive = {{"format", "gravity-model"},
                            {"version", kModelArchiveVersion},
                            {"checksum", crc_hex(body)},
                            {"payload", payload}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << archive.dump() << '\n';
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read model archive " + path.string());
  nlohmann::json archive;
  try {
    archive = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: not a model archive ({})", path.string(), e.what()));
  }
  if (!archive.is_object() || archive.value("format", "") != "gravity-model") {
    throw ValidationError(path.string() + ": not a model archive");
  }
  const int version = archive.value("version", -1);
  if (version != kModelArchiveVersion) {
    throw ValidationError(fmt::format("{}: archive version {} unsupported (expected {})",
                                      path.string(), version, kModelArchiveVersion));
  }
  if (!archive.contains("payload") || !archive.contains("checksum")) {
    throw ValidationError(path.string() + ": archive is missing payload or checksum");
  }
  const std::string expected = archive.at("checksum").get<std::string>();
  const std::string actual = crc_hex(archive.at("payload").dump());
  if (expected != actual) {
    throw ValidationError(fmt::format("{}: checksum mismatch (stored {}, computed {})",
                                      path.string(), expected, actual));
  }
  return model_from_json(archive.at("payload"));
}

std::string format_history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,enc_loss,disc_loss,total,val_acc\n";
  for (const auto& h : history)
    out += fmt::format("{},{:.12g},{:.12g},{:.12g},{:.12g}\n", h.epoch, h.enc_loss, h.disc_loss,
                       h.total, h.val_acc);
  return out;
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"accuracy", r.accuracy},
          {"n_scored", r.n_scored},
          {"precision", r.precision},
          {"recall", r.recall},
          {"confusion", r.confusion}};
}

}  // namespace gravity
