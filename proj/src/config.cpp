#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <string_view>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gravity/force.hpp"
#include "gravity/trainer.hpp"

namespace gravity {

TieSource parse_tie_source(const std::string& s) {
  if (s == "exact") return TieSource::kExact;
  if (s == "learned") return TieSource::kLearned;
  throw ValidationError("tie_source must be 'exact' or 'learned', got '" + s + "'");
}

std::string to_string(TieSource s) { return s == TieSource::kExact ? "exact" : "learned"; }

void TrainConfig::validate() const {
  require_lambda(lambda);
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("γ must be >= 0");
  if (q < 2) throw ValidationError("q must be >= 2");
  for (auto h : hidden_dims)
    if (h == 0) throw ValidationError("hidden_dims entries must be >= 1");
  for (auto h : disc_hidden_dims)
    if (h == 0) throw ValidationError("disc_hidden_dims entries must be >= 1");
  if (hops < 1 || hops > 254) throw ValidationError("hops must lie in [1, 254]");
  if (!(lr > 0.0)) throw ValidationError("lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (max_epochs < 1) throw ValidationError("max_epochs must be >= 1");
  if (patience < 1) throw ValidationError("patience must be >= 1");
  if (!(train_fraction > 0.0) || !(val_fraction > 0.0) || !(test_fraction > 0.0)) {
    throw ValidationError("split fractions must be positive");
  }
  if (train_fraction + val_fraction + test_fraction > 1.0 + 1e-12) {
    throw ValidationError("split fractions must sum to at most 1");
  }
  if (tie.epochs < 1 || tie.hidden < 1 || !(tie.lr > 0.0)) {
    throw ValidationError("tie_epochs, tie_hidden and tie_lr must be positive");
  }
}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
  T out{};
  if (!v.empty() && v.front() == '+') v.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ValidationError(fmt::format("config key '{}': cannot parse '{}'", key, v));
  }
  return out;
}

std::vector<std::size_t> parse_dims(std::string_view key, std::string_view v) {
  std::vector<std::size_t> dims;
  if (v.empty() || v == "none") return dims;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    auto end = v.find(',', pos);
    if (end == std::string_view::npos) end = v.size();
    dims.push_back(parse_value<std::size_t>(key, trim(v.substr(pos, end - pos))));
    pos = end + 1;
  }
  return dims;
}

std::string format_dims(const std::vector<std::size_t>& dims) {
  return dims.empty() ? "none" : fmt::format("{}", fmt::join(dims, ","));
}

struct Key {
  const char* name;
  const char* help;
  std::function<void(TrainConfig&, std::string_view)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"lambda", "real in [0,1]; force gate threshold",
       [](TrainConfig& c, std::string_view v) { c.lambda = parse_value<double>("lambda", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.lambda); }},
      {"gamma", "real >= 0; discriminator loss weight",
       [](TrainConfig& c, std::string_view v) { c.gamma = parse_value<double>("gamma", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.gamma); }},
      {"q", "int >= 2; embedding dimension",
       [](TrainConfig& c, std::string_view v) { c.q = parse_value<std::size_t>("q", v); },
       [](const TrainConfig& c) { return fmt::format("{}", c.q); }},
      {"hidden_dims", "comma list or 'none'; encoder aggregation layer widths",
       [](TrainConfig& c, std::string_view v) { c.hidden_dims = parse_dims("hidden_dims", v); },
       [](const TrainConfig& c) { return format_dims(c.hidden_dims); }},
      {"disc_hidden_dims", "comma list or 'none'; discriminator hidden widths",
       [](TrainConfig& c, std::string_view v) { c.disc_hidden_dims = parse_dims("disc_hidden_dims", v); },
       [](const TrainConfig& c) { return format_dims(c.disc_hidden_dims); }},
      {"hops", "int in [1,254]; hop radius H",
       [](TrainConfig& c, std::string_view v) { c.hops = parse_value<int>("hops", v); },
       [](const TrainConfig& c) { return fmt::format("{}", c.hops); }},
      {"lr", "real > 0; Adam learning rate",
       [](TrainConfig& c, std::string_view v) { c.lr = parse_value<double>("lr", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.lr); }},
      {"weight_decay", "real >= 0; decoupled weight decay",
       [](TrainConfig& c, std::string_view v) { c.weight_decay = parse_value<double>("weight_decay", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.weight_decay); }},
      {"max_epochs", "int >= 1",
       [](TrainConfig& c, std::string_view v) { c.max_epochs = parse_value<std::size_t>("max_epochs", v); },
       [](const TrainConfig& c) { return fmt::format("{}", c.max_epochs); }},
      {"patience", "int >= 1; epochs without validation improvement before stopping",
       [](TrainConfig& c, std::string_view v) { c.patience = parse_value<std::size_t>("patience", v); },
       [](const TrainConfig& c) { return fmt::format("{}", c.patience); }},
      {"seed", "unsigned int",
       [](TrainConfig& c, std::string_view v) { c.seed = parse_value<std::uint64_t>("seed", v); },
       [](const TrainConfig& c) { return fmt::format("{}", c.seed); }},
      {"train_fraction", "real in (0,1]",
       [](TrainConfig& c, std::string_view v) { c.train_fraction = parse_value<double>("train_fraction", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.train_fraction); }},
      {"val_fraction", "real in (0,1]",
       [](TrainConfig& c, std::string_view v) { c.val_fraction = parse_value<double>("val_fraction", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.val_fraction); }},
      {"test_fraction", "real in (0,1]",
       [](TrainConfig& c, std::string_view v) { c.test_fraction = parse_value<double>("test_fraction", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.test_fraction); }},
      {"tie_source", "'exact' or 'learned'",
       [](TrainConfig& c, std::string_view v) { c.tie_source = parse_tie_source(std::string(v)); },
       [](const TrainConfig& c) { return to_string(c.tie_source); }},
      {"tie_epochs", "int >= 1; tie model training epochs",
       [](TrainConfig& c, std::string_view v) { c.tie.epochs = parse_value<std::size_t>("tie_epochs", v); },
       [](const TrainConfig& c) { return fmt::format("{}", c.tie.epochs); }},
      {"tie_lr", "real > 0; tie model learning rate",
       [](TrainConfig& c, std::string_view v) { c.tie.lr = parse_value<double>("tie_lr", v); },
       [](const TrainConfig& c) { return fmt::format("{:.12g}", c.tie.lr); }},
      {"tie_hidden", "int >= 1; tie model hidden width",
       [](TrainConfig& c, std::string_view v) { c.tie.hidden = parse_value<std::size_t>("tie_hidden", v); },
       [](const TrainConfig& c) { return fmt::format("{}", c.tie.hidden); }},
      {"silhouette_normalization", "'sum' or 'mean'",
       [](TrainConfig& c, std::string_view v) { c.normalization = parse_normalization(std::string(v)); },
       [](const TrainConfig& c) { return to_string(c.normalization); }},
  };
  return table;
}

}  // namespace

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    ++line_no;
    std::string_view line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ValidationError(fmt::format("config line {}: expected 'key = value'", line_no));
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = keys();
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return key == k.name; });
    if (it == table.end()) {
      throw ValidationError(fmt::format("config line {}: unknown key '{}'", line_no, key));
    }
    if (!seen.insert(std::string(key)).second) {
      throw ValidationError(fmt::format("config line {}: key '{}' set twice", line_no, key));
    }
    it->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& k : keys()) out += fmt::format("{} = {}\n", k.name, k.get(cfg));
  return out;
}

std::string train_config_help() {
  const TrainConfig defaults;
  std::string out = "Config keys (key = value, '#' comments, unknown keys rejected):\n";
  for (const auto& k : keys())
    out += fmt::format("  {:<26} {} (default {})\n", k.name, k.help, k.get(defaults));
  return out;
}

}  // namespace gravity
