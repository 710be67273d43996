// tests/workbench_test.cc

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "rnnt/error.h"
#include "rnnt/manifest.h"
#include "rnnt/workbench.h"

namespace rnnt {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

TEST_CASE("config JSON round-trips every field") {
  ExperimentConfig c;
  c.seed = 77;
  c.data.noise = 0.25;
  c.data.sizes.train = 123;
  c.topology = Topology::kStandard;
  c.model.encoder_units = 5;
  c.lm.type = "recurrent";
  c.exact_alpha = 2.0;
  c.decode.beam = 9;
  c.decode.recombination = Recombination::kMax;
  c.lm_scale_range = {0.1, 0.9, 0.2};
  const ExperimentConfig back = ConfigFromJson(ToJson(c));
  CHECK(ToJson(back) == ToJson(c));
  CHECK(back.seed == 77);
  CHECK(back.data.sizes.train == 123);
  CHECK(back.topology == Topology::kStandard);
  CHECK(back.decode.recombination == Recombination::kMax);
  CHECK(back.lm_scale_range == RangeSpec{0.1, 0.9, 0.2});
}

TEST_CASE("config defaults match the documented presets") {
  const ExperimentConfig c;
  CHECK(c.decode.beam == 128);
  CHECK(c.decode.score_beam == 12.0);
  CHECK(c.ilmt_alpha == 0.2);
  CHECK(c.exact_alpha == 1.0);
  CHECK(c.lm_scale_range.Values().size() == 25);
  CHECK(c.ilm_scale_range.Values().size() == 17);
  CHECK_NOTHROW(c.Validate());
}

TEST_CASE("missing keys keep defaults and unknown keys are rejected") {
  const ExperimentConfig c = ConfigFromJson(json{{"seed", 4}});
  CHECK(c.seed == 4);
  CHECK(ToJson(c)["data"] == ToJson(ExperimentConfig{})["data"]);
  CHECK_THROWS_AS(ConfigFromJson(json{{"sede", 4}}), ArgumentError);
  CHECK(ConfigFromJson(json{{"data", {{"train", 3}}}}).data.sizes.train == 3);
  CHECK_THROWS_AS(ConfigFromJson(json{{"data", {{"trian", 3}}}}), ArgumentError);
  CHECK_THROWS_AS(ConfigFromJson(json{{"decode", {{"beam", "wide"}}}}), ArgumentError);
}

TEST_CASE("config validation names the offending field") {
  ExperimentConfig c;
  c.data.min_length = 0;
  try {
    c.Validate();
    FAIL("expected ArgumentError");
  } catch (const ArgumentError &e) {
    CHECK(std::string(e.what()).find("min_length") != std::string::npos);
  }
  c = ExperimentConfig{};
  c.exact_alpha = -1;
  CHECK_THROWS_AS(c.Validate(), ArgumentError);
}

TEST_CASE("path overrides come from the environment") {
  ExperimentConfig c;
  setenv("RNNT_ILM_MODEL_DIR", "/tmp/elsewhere", 1);
  ApplyEnvironment(c);
  unsetenv("RNNT_ILM_MODEL_DIR");
  CHECK(c.paths.models == "/tmp/elsewhere");
  CHECK(c.paths.data == ExperimentConfig{}.paths.data);
}

TEST_CASE("ranges parse lo:hi:step") {
  CHECK(ParseRange("0:1.2:0.05") == RangeSpec{0.0, 1.2, 0.05});
  CHECK(ParseRange("0.5:0.5:1").Values() == std::vector<double>{0.5});
  for (const char *bad : {"0:1", "a:b:c", "0:1:0", "1:0:0.1", "0:1:0.1x"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(ParseRange(bad), ArgumentError);
  }
}

TEST_CASE("stage seeds are distinct and move with the experiment seed") {
  const StageSeeds a = DeriveSeeds(1), b = DeriveSeeds(2);
  const uint64_t *pa = &a.prototypes, *pb = &b.prototypes;
  std::set<uint64_t> all;
  for (size_t i = 0; i < sizeof(StageSeeds) / sizeof(uint64_t); ++i) {
    all.insert(pa[i]);
    all.insert(pb[i]);
  }
  CHECK(all.size() == 2 * sizeof(StageSeeds) / sizeof(uint64_t));
}

TEST_CASE("the two domains share prototypes but not chains") {
  ExperimentConfig c;
  c.data.vocab_size = 6;
  const DomainPair d = MakeDomains(c);
  CHECK(d.source.prototypes == d.target.prototypes);
  CHECK(d.source.transitions != d.target.transitions);
  CHECK(d.source.vocab == d.target.vocab);
}

fs::path Scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("rnnt_workbench_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST_CASE("manifest keys change with seeds, arguments and inputs") {
  const fs::path dir = Scratch("keys");
  std::ofstream(dir / "in.txt") << "abc";
  const auto inputs = DigestPaths({(dir / "in.txt").string()});
  REQUIRE(inputs.size() == 1);
  CHECK(inputs[0].sha256 == Sha256Hex("abc"));
  CHECK(Sha256Hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  const json args = {{"beam", 4}};
  const std::string k = ManifestKey("decode", args, json{{"seed", 1}}, inputs);
  CHECK(k == ManifestKey("decode", args, json{{"seed", 1}}, inputs));
  CHECK(k != ManifestKey("decode", args, json{{"seed", 2}}, inputs));
  CHECK(k != ManifestKey("decode", json{{"beam", 5}}, json{{"seed", 1}}, inputs));
  CHECK(k != ManifestKey("sweep", args, json{{"seed", 1}}, inputs));
  std::ofstream(dir / "in.txt") << "abd";
  CHECK(k != ManifestKey("decode", args, json{{"seed", 1}}, DigestPaths({(dir / "in.txt").string()})));
  fs::remove_all(dir);
}

TEST_CASE("manifests round-trip and detect stale outputs") {
  const fs::path dir = Scratch("uptodate");
  const std::string out = (dir / "out.txt").string();
  std::ofstream(out) << "result";
  RunManifest m;
  m.command = "decode";
  m.arguments = {{"beam", 4}};
  m.seeds = {{"seed", 3}};
  m.outputs = DigestPaths({out});
  m.key = "k1";
  m.started_at = UtcTimestamp();
  m.report = {{"wer", 0.25}};
  WriteManifest(ManifestPath(out), m);
  const auto back = ReadManifest(ManifestPath(out));
  REQUIRE(back.has_value());
  CHECK(back->ToJson() == m.ToJson());
  CHECK(ManifestPath(out) == out + ".manifest.json");
  CHECK(UpToDate(ManifestPath(out), "k1"));
  CHECK_FALSE(UpToDate(ManifestPath(out), "k2"));
  std::ofstream(out) << "tampered";
  CHECK_FALSE(UpToDate(ManifestPath(out), "k1"));
  fs::remove(out);
  CHECK_FALSE(UpToDate(ManifestPath(out), "k1"));
  CHECK_FALSE(ReadManifest((dir / "none.json").string()).has_value());
  fs::remove_all(dir);
}

TEST_CASE("the standard analysis has six rows chaining lambda2") {
  const ExperimentConfig c;
  const auto specs = StandardAnalysis(c);
  REQUIRE(specs.size() == 6);
  size_t renorm_rows = 0, reward_rows = 0;
  for (size_t i = 0; i < specs.size(); ++i) {
    renorm_rows += specs[i].base.renorm_eps;
    if (specs[i].y_axis == ScaleAxis::kLengthReward) {
      ++reward_rows;
      // SF has no ILM term, so its reward row has nothing to inherit.
      CHECK(specs[i].inherit_ilm_scale_from == (i == 1 ? -1 : static_cast<int>(i) - 1));
    }
  }
  CHECK(renorm_rows == 2);
  CHECK(reward_rows == 3);
}

}  // namespace
}  // namespace rnnt
