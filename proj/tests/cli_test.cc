// tests/cli_test.cc
//
// End-to-end runs of the command-line tool on a tiny experiment.

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"

namespace rnnt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct CliRun {
  int status = -1;
  std::string err;
};

std::string Slurp(const fs::path &p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Workspace {
 public:
  Workspace() : root_(fs::temp_directory_path() / "rnnt_cli_test") {
    fs::remove_all(root_);
    fs::create_directories(root_);
    const json config = {
        {"seed", 5},
        {"paths",
         {{"data", (root_ / "data").string()},
          {"models", (root_ / "models").string()},
          {"outputs", (root_ / "outputs").string()}}},
        {"data",
         {{"vocab_size", 6}, {"train", 40}, {"dev", 10}, {"test", 10},
          {"text_sentences", 300}, {"text_dev_sentences", 50}}},
        {"model",
         {{"encoder_units", 8}, {"prediction_units", 8}, {"embedding_dim", 4}, {"joint_units", 8}}},
        {"training", {{"rnnt", {{"epochs", 2}}}, {"lm", {{"epochs", 1}}}}},
        {"decode", {{"beam", 4}}},
        {"sweep",
         {{"lm_scale", {{"lo", 0}, {"hi", 1}, {"step", 0.5}}},
          {"ilm_scale", {{"lo", 0}, {"hi", 0.5}, {"step", 0.25}}}}},
    };
    std::ofstream(config_path()) << config.dump(2);
  }
  ~Workspace() { fs::remove_all(root_); }

  fs::path root() const { return root_; }
  std::string config_path() const { return (root_ / "config.json").string(); }

  CliRun Run(const std::string &args) const {
    const fs::path err = root_ / "stderr.txt";
    const std::string cmd = std::string(RNNT_ILM_CLI) + " --config " + config_path() + " " +
                            args + " > /dev/null 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    CliRun r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.err = Slurp(err);
    return r;
  }

  // gen-data, train-rnnt and train-lm, once per process.
  void Prepare() {
    if (prepared_) return;
    for (const char *step : {"gen-data", "train-rnnt", "train-lm"}) {
      const CliRun r = Run(std::string("-q ") + step);
      INFO(step << ": " << r.err);
      REQUIRE(r.status == 0);
    }
    prepared_ = true;
  }

  std::string Models(const std::string &name) const { return (root_ / "models" / name).string(); }

 private:
  fs::path root_;
  bool prepared_ = false;
};

Workspace &Shared() {
  static Workspace ws;
  return ws;
}

TEST_CASE("usage errors exit 2") {
  Workspace &ws = Shared();
  CHECK(ws.Run("").status == 2);
  CHECK(ws.Run("decode --no-such-flag").status == 2);
  CHECK(ws.Run("decode --split holdout").status == 2);
}

TEST_CASE("a missing input exits 3") {
  Workspace &ws = Shared();
  const CliRun r = ws.Run("-q decode --model " + (ws.root() / "absent.json").string());
  CHECK(r.status == 3);
  CHECK(r.err.find("absent.json") != std::string::npos);
}

TEST_CASE("pipeline commands run and reruns are skipped") {
  Workspace &ws = Shared();
  ws.Prepare();
  const std::string manifest = ws.Models("rnnt.json") + ".manifest.json";
  REQUIRE(fs::exists(manifest));
  const std::string before = Slurp(manifest);
  const CliRun again = ws.Run("train-rnnt");
  CHECK(again.status == 0);
  CHECK(again.err.find("up to date") != std::string::npos);
  CHECK(Slurp(manifest) == before);
}

TEST_CASE("invalid arguments exit 6 and malformed files exit 5") {
  Workspace &ws = Shared();
  ws.Prepare();
  const std::string lm = " --lm " + ws.Models("lm.json");
  CHECK(ws.Run("-q decode" + lm + " --lm-scale -1").status == 6);
  CHECK(ws.Run("-q sweep" + lm + " --lm-scale-range 1:0:0.1").status == 6);
  const fs::path bad = ws.root() / "bad-model.json";
  std::ofstream(bad) << "{\"format\": ";
  CHECK(ws.Run("-q decode --model " + bad.string()).status == 5);
  std::ofstream(bad) << "{}";
  CHECK(ws.Run("-q decode --model " + bad.string()).status == 5);
}

TEST_CASE("a vocabulary mismatch exits 4") {
  Workspace &ws = Shared();
  ws.Prepare();
  const fs::path other = ws.root() / "data-v5";
  json config = json::parse(Slurp(ws.config_path()));
  config["data"]["vocab_size"] = 5;
  const fs::path other_config = ws.root() / "config-v5.json";
  std::ofstream(other_config) << config.dump();
  const std::string gen = std::string(RNNT_ILM_CLI) + " -q --config " + other_config.string() +
                          " gen-data --out " + other.string() + " > /dev/null 2>&1";
  REQUIRE(std::system(gen.c_str()) == 0);
  const CliRun r = ws.Run("-q decode --data " + other.string());
  CHECK(r.status == 4);
}

TEST_CASE("the zero ILM at lambda2 = 0 decodes exactly like shallow fusion") {
  Workspace &ws = Shared();
  ws.Prepare();
  const std::string common = "-q decode --split dev --lm " + ws.Models("lm.json") + " --lm-scale 0.5";
  const fs::path sf = ws.root() / "sf.nbest", zero = ws.root() / "zero.nbest";
  REQUIRE(ws.Run(common + " --out " + sf.string()).status == 0);
  REQUIRE(ws.Run(common + " --ilm-variant zero --ilm-scale 0 --out " + zero.string()).status == 0);
  CHECK(!Slurp(sf).empty());
  CHECK(Slurp(sf) == Slurp(zero));
}

TEST_CASE("decoding with the sweep optimum reproduces its dev WER") {
  Workspace &ws = Shared();
  ws.Prepare();
  const fs::path out = ws.root() / "sweep-zero";
  const std::string models = " --lm " + ws.Models("lm.json") + " --ilm-variant zero";
  REQUIRE(ws.Run("-q sweep --split dev" + models + " --out " + out.string()).status == 0);
  const json best = json::parse(Slurp(out / "best.json"));
  CHECK(fs::exists(out / "sweep.csv"));
  // 3 x 3 grid plus the header.
  const std::string csv = Slurp(out / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);

  const fs::path nbest = ws.root() / "tuned.nbest";
  REQUIRE(ws.Run("-q decode --split dev" + models + " --fusion " + (out / "best.json").string() +
                 " --out " + nbest.string())
              .status == 0);
  const json manifest = json::parse(Slurp(nbest.string() + ".manifest.json"));
  CHECK(manifest["report"]["wer"].get<double>() == best["wer"].get<double>());
  CHECK(manifest["report"]["ref_len"] == best["ref_len"]);
}

}  // namespace
}  // namespace rnnt
