#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "test_util.hpp"

using namespace convkit::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status;
  std::string out;
};

Run cli(const std::string& args, const fs::path& dir) {
  const auto out = dir / "stdout.txt";
  const std::string cmd = std::string(CONVKIT_CLI) + " " + args + " > " + out.string() + " 2> " + (dir / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out.string())};
}

fs::path scratch(const std::string& name) {
  auto d = fs::temp_directory_path() / ("convkit_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const std::string kTicketSchema = domain_path("ticketbot_lite/schema.json");
const std::string kTicketSeeds = domain_path("ticketbot_lite/seeds.jsonl");

}  // namespace

TEST(Cli, ValidateExitCodes) {
  const auto dir = scratch("validate");
  EXPECT_EQ(cli("validate " + kTicketSchema + " " + kTicketSeeds, dir).status, 0);

  auto line = slurp(kTicketSeeds);
  line = line.substr(0, line.find('\n'));
  const auto pos = line.find("\"GetDuration\"");
  ASSERT_NE(pos, std::string::npos);
  std::ofstream(dir / "bad.jsonl") << line.replace(pos, 13, "\"GetRuntime\"") << "\n";
  auto r = cli("validate " + kTicketSchema + " " + (dir / "bad.jsonl").string(), dir);
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.out.find("unknown action 'GetRuntime'"), std::string::npos);

  std::ofstream(dir / "schema.json") << "{\"name\": 3}";
  EXPECT_EQ(cli("validate " + (dir / "schema.json").string(), dir).status, 2);
  EXPECT_EQ(cli("validate", dir).status, 2);
  EXPECT_EQ(cli("no-such-command", dir).status, 2);
}

TEST(Cli, SimulateWritesCorpusAndStats) {
  const auto dir = scratch("simulate");
  const auto out = (dir / "c.jsonl").string();
  auto r = cli("simulate --schema " + kTicketSchema + " --seeds " + kTicketSeeds + " --out " + out +
                   " --num 40 --mode base --seed 5",
               dir);
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(convkit::dml::load_corpus(out, ticketbot()).size(), 40u);
  auto stats = nlohmann::json::parse(slurp((dir / "c.stats.json").string()));
  EXPECT_EQ(stats["stats"]["dialogues"], 40);
  EXPECT_EQ(stats["config"]["mode"], "base");
  EXPECT_EQ(cli("simulate --schema " + kTicketSchema + " --seeds " + kTicketSeeds + " --out " + out + " --mode odd",
                dir)
                .status,
            2);
}

TEST(Cli, TrainEvalChatRoundTrip) {
  const auto dir = scratch("train");
  const auto s = "--schema " + kTicketSchema + " --seeds " + kTicketSeeds;
  ASSERT_EQ(cli("simulate " + s + " --out " + (dir / "train.jsonl").string() + " --num 60 --seed 1", dir).status, 0);
  ASSERT_EQ(cli("simulate " + s + " --out " + (dir / "test.jsonl").string() + " --num 20 --seed 2", dir).status, 0);
  ASSERT_EQ(cli("train --corpus " + (dir / "train.jsonl").string() + " --schema " + kTicketSchema + " --out-bundle " +
                    (dir / "b").string() + " --epochs 1 --hidden 4 --embed 4",
                dir)
                .status,
            0);
  for (const char* f : {"ner.ckpt", "action.ckpt", "argument.ckpt", "vocab.json", "schema.json", "bundle.json",
                        "train_report.json"}) {
    EXPECT_TRUE(fs::exists(dir / "b" / f)) << f;
  }
  auto e = cli("eval --json --bundle " + (dir / "b").string() + " --test " + (dir / "test.jsonl").string(), dir);
  ASSERT_EQ(e.status, 0);
  auto rep = nlohmann::json::parse(e.out);
  EXPECT_EQ(rep["dialogues"], 20);
  EXPECT_LE(rep["actions"]["asp"].get<double>(), rep["actions"]["ap"].get<double>());

  std::ofstream(dir / "script.txt") << "how long is la la land\n# comment\nexit\n";
  auto c = cli("chat --json --bundle " + (dir / "b").string() + " --script " + (dir / "script.txt").string(), dir);
  ASSERT_EQ(c.status, 0);
  std::istringstream lines(c.out);
  std::string l;
  std::size_t n = 0;
  while (std::getline(lines, l)) {
    auto j = nlohmann::json::parse(l);
    if (n++ == 0) EXPECT_TRUE(j.contains("welcome_text"));
    else EXPECT_TRUE(j.contains("executed_actions"));
  }
  EXPECT_GE(n, 2u);

  // A bundle checked against another schema is refused.
  auto other = nlohmann::json::parse(slurp(kTicketSchema));
  other["entity_types"][0]["catalog"].push_back("new movie");
  std::ofstream(dir / "other.json") << other.dump();
  EXPECT_EQ(cli("eval --bundle " + (dir / "b").string() + " --test " + (dir / "test.jsonl").string() + " --schema " +
                    (dir / "other.json").string(),
                dir)
                .status,
            2);
}
