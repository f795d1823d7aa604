#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gravity/graph.hpp"
#include "gravity/net.hpp"
#include "gravity/params.hpp"
#include "gravity/ties.hpp"

namespace gravity {

enum class TieSource { kExact, kLearned };

TieSource parse_tie_source(const std::string& s);
std::string to_string(TieSource s);

struct TrainConfig {
  double lambda = 0.1;
  double gamma = 1.0;
  std::size_t q = 8;
  std::vector<std::size_t> hidden_dims{32};
  std::vector<std::size_t> disc_hidden_dims{};
  int hops = 3;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 100;
  std::uint64_t seed = 0;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  TieSource tie_source = TieSource::kExact;
  TieModelOptions tie{10000, 3e-3, 128, 0};
  SilhouetteNormalization normalization = SilhouetteNormalization::kSum;

  void validate() const;
};

/// Flat `key = value` lines, `#` comments. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& text);
/// Every key with its value, one per line, in a fixed order.
std::string format_train_config(const TrainConfig& cfg);
/// Key reference for --help.
std::string train_config_help();

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

/// Stratified per class: each class's labelled vertices are shuffled and cut
/// by the fractions (every class keeps at least one training vertex).
Split stratified_split(const Graph& g, double train_fraction, double val_fraction,
                       double test_fraction, std::mt19937_64& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double enc_loss = 0.0;
  double disc_loss = 0.0;
  double total = 0.0;
  double val_acc = 0.0;
  /// Sum over validation vertices of 1 - p(true class); breaks ties between
  /// epochs with equal validation accuracy.
  double val_loss = 0.0;
};

struct Reference {
  Tensor embeddings;
  std::vector<int> labels;
  /// Row index of each reference in the training graph.
  std::vector<std::size_t> vertices;
};

struct TrainedModel {
  TrainConfig config;
  EncoderConfig encoder;
  DiscriminatorConfig discriminator;
  int n_classes = 2;
  ParamStore encoder_params;
  ParamStore discriminator_params;
  std::optional<TieModel> tie_model;
  Reference reference;
  Split split;
  std::string training_fingerprint;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_acc = 0.0;
};

/// Raised when a loss or parameter becomes non-finite. Carries the history
/// up to the failing epoch.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t epoch, std::vector<EpochRecord> history, const std::string& what);
  std::size_t epoch() const { return epoch_; }
  const std::vector<EpochRecord>& history() const { return history_; }

 private:
  std::size_t epoch_;
  std::vector<EpochRecord> history_;
};

struct TrainHooks {
  /// Called after each epoch's optimizer step with the updated embedding.
  std::function<void(std::size_t epoch, const Tensor& embedding)> on_epoch;
};

TrainedModel train(const Graph& g, const TrainConfig& cfg, const TrainHooks& hooks = {});

struct Classification {
  int label = 0;
  std::vector<double> probs;
  std::vector<double> attraction;
};

/// Attraction a_k = sum over references of class k of s * t, counting a
/// reference only when t > 0 and s * t >= lambda. `ref_ties` holds t per
/// reference (the query's tie towards it); empty means a query from another
/// graph, where t = 1. The class is the arg-max of the discriminator output,
/// lowest index on ties.
Classification classify(const TrainedModel& model, std::span<const double> emb_row,
                        const Reference& ref, std::span<const double> ref_ties = {});

struct EvalReport {
  double accuracy = 0.0;
  std::size_t n_scored = 0;
  std::vector<double> precision;
  std::vector<double> recall;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Scores predictions against the labels of `vertices`.
EvalReport score_predictions(const std::vector<Classification>& preds, const Graph& g,
                             std::span<const std::size_t> vertices, int n_classes);

struct GraphPrediction {
  std::vector<Classification> vertices;
  Tensor embedding;
  bool same_graph = false;
};

/// Ties for `g` under the model's tie source (exact, or the learned model).
TieMatrix model_ties(const TrainedModel& model, const Graph& g, const PathTable& paths);

/// Classifies every vertex of g. On the training graph the query's ties
/// towards each reference come from the tie source; on any other graph they
/// are 1.
GraphPrediction predict_graph(const TrainedModel& model, const Graph& g);

/// Accuracy on the given training-graph vertices (transductive).
EvalReport evaluate_transductive(const TrainedModel& model, const Graph& g,
                                 std::span<const std::size_t> vertices);

/// Embeds an unseen labelled graph with learned ties (exact ties when the
/// model has no tie model) and classifies every labelled vertex against the
/// training reference set. Given the training graph itself, the query ties
/// come from the tie source as in predict_graph.
EvalReport evaluate_inductive(const TrainedModel& model, const Graph& g_test);

nlohmann::json model_to_json(const TrainedModel& m);
TrainedModel model_from_json(const nlohmann::json& j);
/// Single JSON archive with a CRC-32 over the payload.
void save_model(const TrainedModel& m, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

inline constexpr int kModelArchiveVersion = 1;

std::string format_history_csv(const std::vector<EpochRecord>& history);
nlohmann::json report_to_json(const EvalReport& r);

}  // namespace gravity
