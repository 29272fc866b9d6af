#include <doctest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "chaneq/io.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "chaneq");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = chaneq::cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "chaneq_cli_test" / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("moments prints the closed form") {
  const fs::path dir = scratch("moments");
  const Run r = run({"moments", "--gamma", "1", "--beta", "0", "--samples", "1000", "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("0.398942") != std::string::npos);
  CHECK(fs::exists(dir / "moments.csv"));
}

TEST_CASE("help lists keys and schemas") {
  const Run r = run({"train", "--help"});
  CHECK(r.code == 0);
  for (const char* key : {"train.weight_decay", "model.depth", "task.label_corruption", "epoch,lr"})
    CHECK(r.out.find(key) != std::string::npos);
  const Run s = run({"sweep", "--help"});
  CHECK(s.out.find("sweep.weight_decays") != std::string::npos);
  CHECK(s.out.find("experiment,variant,param,value,seed,metric,metric_value") != std::string::npos);
  CHECK(run({"newton-bench", "--help"}).out.find("index,dim,iters,residual,oracle_diff") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == 1);
  CHECK(run({"bogus"}).code == 1);
  CHECK(run({"moments", "--gamma", "x"}).code == 1);
  const fs::path dir = scratch("codes");
  CHECK(run({"sweep", "nope", "--out", dir.string()}).code == 1);
  CHECK(run({"train", "--set", "train.epoch=3", "--out", dir.string()}).code == 1);
  fs::create_directories(dir);
  chaneq::atomic_write(dir / "bad.cfg", "model.depth = 2\nunknown.key = 1\n");
  const Run bad = run({"train", "--config", (dir / "bad.cfg").string(), "--out", dir.string()});
  CHECK(bad.code == 1);
  CHECK(bad.err.find("unknown.key") != std::string::npos);
}

TEST_CASE("divergence maps to exit code two") {
  const fs::path dir = scratch("diverge");
  const Run r = run({"train", "--set", "train.lr=1e300", "--set", "train.epochs=2", "--set",
                     "task.train_size=64", "--set", "model.depth=2", "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("malformed game documents are contract errors") {
  const fs::path dir = scratch("game");
  fs::create_directories(dir);
  chaneq::atomic_write(dir / "game.json", "{}");
  CHECK(run({"nash", "--game", (dir / "game.json").string(), "--out", dir.string()}).code == 1);
}

TEST_CASE("oracle subcommands write their files") {
  const fs::path dir = scratch("oracles");
  CHECK(run({"newton-bench", "--dim", "8", "--count", "3", "--out", dir.string()}).code == 0);
  CHECK(run({"nash", "--channels", "2", "--proxy", "--out", dir.string()}).code == 0);
  CHECK(run({"prop-check", "--count", "5", "--out", dir.string()}).code == 0);
  CHECK(run({"fuse-check", "--count", "3", "--out", dir.string()}).code == 0);
  for (const char* f : {"newton_bench.csv", "game.json", "nash.json", "nash.csv", "proxy.txt",
                        "prop_check.csv", "fuse_check.csv"})
    CHECK(fs::exists(dir / f));
  const std::string csv = chaneq::read_file(dir / "newton_bench.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  const Run again = run({"nash", "--game", (dir / "game.json").string(), "--out", (dir / "b").string()});
  CHECK(again.code == 0);
  CHECK(chaneq::read_file(dir / "nash.json") == chaneq::read_file(dir / "b" / "nash.json"));
}

TEST_CASE("train then ablate from the saved model") {
  const fs::path dir = scratch("train");
  const std::vector<std::string> small{"--set", "task.train_size=64", "--set", "task.test_size=32",
                                       "--set", "train.epochs=2", "--set", "model.depth=2",
                                       "--set", "model.width=4"};
  std::vector<std::string> args{"train", "--variant", "bn+ce", "--out", dir.string()};
  args.insert(args.end(), small.begin(), small.end());
  CHECK(run(args).code == 0);
  CHECK(fs::exists(dir / "train_log.csv"));
  CHECK(fs::exists(dir / "channels.csv"));
  CHECK(fs::exists(dir / "model" / "manifest.json"));
  std::vector<std::string> ab{"ablate", "--model", (dir / "model").string(), "--layer", "1",
                              "--out", (dir / "ab").string()};
  ab.insert(ab.end(), small.begin(), small.end());
  const Run r = run(ab);
  CHECK(r.code == 0);
  CHECK(chaneq::read_file(dir / "ab" / "ablation.csv").rfind("ratio,accuracy_mean", 0) == 0);
}
