#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "gravity/graph.hpp"
#include "gravity/paths.hpp"
#include "gravity/ties.hpp"
#include "json.hpp"

using namespace gravity;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = GRAVITY_SOURCE_DIR;

struct Run {
  int code = -1;
  std::string err;
};

// Runs the CLI with `args`, stdout discarded, stderr captured.
Run gravity_cli(const std::string& args, const fs::path& work) {
  const fs::path err = work / "stderr.txt";
  const std::string cmd = fmt::format("cd '{}' && '{}' {} >/dev/null 2>'{}'", work.string(), GRAVITY_CLI, args,
                                      err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = fixture::read_file(err);
  return r;
}

std::string karate_args() { return fmt::format("--graph '{}'", (kRoot / "data/karate").string()); }

void write_k3(const fs::path& dir) {
  fs::create_directories(dir);
  fixture::write_file(dir / "edges.tsv", "0\t1\t1\n1\t2\t1\n0\t2\t1\n");
  fixture::write_file(dir / "features.csv", "1,0\n0,1\n1,1\n");
}

// Every regular file under dir except manifests, relative path -> contents.
std::map<std::string, std::string> outputs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.find("manifest") != std::string::npos || name == "stderr.txt") continue;
    out[fs::relative(e.path(), dir).string()] = fixture::read_file(e.path());
  }
  return out;
}

fs::path fresh(const std::string& name) {
  const fs::path p = fixture::scratch(name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Exact ties and a one-hop kernel keep this suite fast.
const char* kFixtureConfig = "hops = 1\nlambda = 0.1\nmax_epochs = 200\n";

}  // namespace

TEST_CASE("tie-oracle on K3 writes ones off the diagonal") {
  const auto w = fresh("cli_k3");
  write_k3(w / "k3");
  REQUIRE(gravity_cli("tie-oracle --graph k3 --out ties.csv", w).code == 0);
  CHECK(fixture::read_file(w / "ties.csv") == "0,1,1\n1,0,1\n1,1,0\n");
  CHECK(fs::exists(w / "ties.csv.manifest.json"));
}

TEST_CASE("tie-oracle on Karate matches the library byte for byte") {
  const auto w = fresh("cli_karate");
  REQUIRE(gravity_cli(karate_args() + " tie-oracle --hops 3 --out ties.csv", w).code != 0);
  REQUIRE(gravity_cli("tie-oracle " + karate_args() + " --hops 3 --out ties.csv", w).code == 0);
  const Graph g = load_graph({kRoot / "data/karate/edges.tsv", kRoot / "data/karate/features.csv",
                              kRoot / "data/karate/labels.csv"});
  const TieMatrix t = tie_matrix_exact(g, all_pairs_paths(g, 3));
  std::string expected;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j)
      expected += fmt::format("{:.12g}{}", t(i, j), j + 1 == g.size() ? "\n" : ",");
  CHECK(fixture::read_file(w / "ties.csv") == expected);
}

TEST_CASE("missing input file exits 2 naming the path") {
  const auto w = fresh("cli_missing");
  write_k3(w / "k3");
  fs::remove(w / "k3" / "features.csv");
  const Run r = gravity_cli("tie-oracle --graph k3 --out t.csv", w);
  CHECK(r.code == 2);
  CHECK(r.err.find("features.csv") != std::string::npos);
  CHECK(gravity_cli("tie-oracle --out t.csv --edges nope.tsv --features nope.csv", w).code == 2);
  CHECK(gravity_cli("no-such-command", w).code == 2);
}

TEST_CASE("tie-fit reports in-domain and zero-shot metrics, identical under a repeated seed") {
  const auto w = fresh("cli_tiefit");
  write_k3(w / "k3");
  const std::string args = "tie-fit " + karate_args() + " --eval k3 --epochs 300 --hidden 32 --seed 4 --out ";
  REQUIRE(gravity_cli(args + "a/model.json", w).code == 0);
  REQUIRE(gravity_cli(args + "b/model.json", w).code == 0);
  CHECK(fixture::read_file(w / "a/model.json.metrics.json") == fixture::read_file(w / "b/model.json.metrics.json"));
  CHECK(fixture::read_file(w / "a/model.json") == fixture::read_file(w / "b/model.json"));
  const auto j = nlohmann::json::parse(fixture::read_file(w / "a/model.json.metrics.json"));
  CHECK(j["in_domain"]["n_pairs"] == 960);
  REQUIRE(j["zero_shot"].size() == 1);
  for (const char* k : {"mae", "mse", "mape"}) CHECK(j["zero_shot"][0].contains(k));
  CHECK(j["zero_shot"][0]["n_pairs"] == 6);

  REQUIRE(gravity_cli("tie-eval --model a/model.json --eval k3 --out e1.json", w).code == 0);
  REQUIRE(gravity_cli("tie-eval --model a/model.json --eval k3 --out e2.json", w).code == 0);
  CHECK(fixture::read_file(w / "e1.json") == fixture::read_file(w / "e2.json"));
  const auto e = nlohmann::json::parse(fixture::read_file(w / "e1.json"));
  CHECK(e["zero_shot"][0]["mae"] == j["zero_shot"][0]["mae"]);
}

TEST_CASE("fit, snapshots, predict and determinism on the SBM fixture") {
  const auto w = fresh("cli_fit");
  REQUIRE(gravity_cli("gen-sbm --seed 0 --out sbm", w).code == 0);
  REQUIRE(gravity_cli("gen-sbm --seed 0 --out sbm_again", w).code == 0);
  CHECK(outputs(w / "sbm") == outputs(w / "sbm_again"));
  // Patience above the epoch budget so all 200 epochs run.
  fixture::write_file(w / "long.cfg", std::string(kFixtureConfig) + "patience = 500\n");
  REQUIRE(gravity_cli("fit --graph sbm --config long.cfg --snapshot-every 5 --out run", w).code == 0);
  std::size_t snaps = 0;
  for (const auto& e : fs::directory_iterator(w / "run/snapshots")) snaps += e.path().extension() == ".csv";
  CHECK(snaps == 40);
  CHECK(fs::exists(w / "run/snapshots/embedding_epoch_00200.csv"));
  for (const char* f : {"model.json", "history.csv", "embedding.csv", "metrics.json", "manifest.json"})
    CHECK(fs::exists(w / "run" / f));

  REQUIRE(gravity_cli("fit --graph sbm --config long.cfg --snapshot-every 5 --out run2", w).code == 0);
  CHECK(outputs(w / "run") == outputs(w / "run2"));

  SUBCASE("predict on the training graph") {
    REQUIRE(gravity_cli("predict --model run/model.json --graph sbm --out p1.csv", w).code == 0);
    REQUIRE(gravity_cli("predict --model run/model.json --graph sbm --out p2.csv", w).code == 0);
    CHECK(fixture::read_file(w / "p1.csv") == fixture::read_file(w / "p2.csv"));
    CHECK(fixture::read_file(w / "p1.csv.metrics.json") == fixture::read_file(w / "p2.csv.metrics.json"));
    const std::string csv = fixture::read_file(w / "p1.csv");
    CHECK(csv.rfind("vertex,predicted,prob_0,prob_1,prob_2,prob_3\n", 0) == 0);
    const auto m = nlohmann::json::parse(fixture::read_file(w / "p1.csv.metrics.json"));
    CHECK(m["mode"] == "transductive");
    CHECK(m["accuracy"].get<double>() >= 0.95);
  }
  SUBCASE("unlabelled graph: predictions without metrics") {
    fs::create_directories(w / "bare");
    fs::copy_file(w / "sbm/edges.tsv", w / "bare/edges.tsv");
    fs::copy_file(w / "sbm/features.csv", w / "bare/features.csv");
    const Run r = gravity_cli("predict --model run/model.json --graph bare --out bare.csv", w);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(w / "bare.csv"));
    CHECK_FALSE(fs::exists(w / "bare.csv.metrics.json"));
    CHECK(r.err.find("metrics omitted") != std::string::npos);
  }
  SUBCASE("dimension mismatch exits 2") {
    write_k3(w / "k3");
    CHECK(gravity_cli("predict --model run/model.json --graph k3 --out k3.csv", w).code == 2);
  }
  SUBCASE("corrupted archive checksum exits 2") {
    std::string text = fixture::read_file(w / "run/model.json");
    auto pos = text.find("\"best_val_acc\"");
    REQUIRE(pos != std::string::npos);
    pos = text.find('.', pos) + 1;
    text[pos] ^= 0x1;
    fixture::write_file(w / "bad.json", text);
    const Run r = gravity_cli("predict --model bad.json --graph sbm --out bad.csv", w);
    CHECK(r.code == 2);
    CHECK(r.err.find("checksum") != std::string::npos);
  }
  SUBCASE("inspect is deterministic") {
    REQUIRE(gravity_cli("inspect --graph sbm --model run/model.json --out i1", w).code == 0);
    REQUIRE(gravity_cli("inspect --graph sbm --model run/model.json --out i2", w).code == 0);
    CHECK(outputs(w / "i1") == outputs(w / "i2"));
    CHECK(outputs(w / "i1").size() == 5);
  }
}

TEST_CASE("fit rejects lambda = 1.5 with exit 2") {
  const auto w = fresh("cli_badcfg");
  REQUIRE(gravity_cli("gen-sbm --seed 0 --out sbm", w).code == 0);
  fixture::write_file(w / "bad.cfg", "lambda = 1.5\n");
  const Run r = gravity_cli("fit --graph sbm --config bad.cfg --out run", w);
  CHECK(r.code == 2);
  CHECK(r.err.find("λ must lie in [0,1]") != std::string::npos);
  fixture::write_file(w / "typo.cfg", "lamda = 0.1\n");
  CHECK(gravity_cli("fit --graph sbm --config typo.cfg --out run", w).code == 2);
}

TEST_CASE("divergence exits 3 and keeps the partial history") {
  const auto w = fresh("cli_diverge");
  REQUIRE(gravity_cli("gen-sbm --seed 0 --out sbm", w).code == 0);
  fixture::write_file(w / "div.cfg", "hops = 1\nlr = 1e300\n");
  const Run r = gravity_cli("fit --graph sbm --config div.cfg --out run", w);
  CHECK(r.code == 3);
  CHECK(r.err.find("epoch") != std::string::npos);
  CHECK(fs::exists(w / "run/history.csv"));
}
