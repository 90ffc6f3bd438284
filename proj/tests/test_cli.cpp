// SPDX-License-Identifier: Apache-2.0
#include "catch_amalgamated.hpp"

#include "mtrl/cli.hpp"
#include "mtrl/config.hpp"
#include "mtrl/metrics.hpp"
#include "mtrl/trajectory.hpp"

#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace mtrl;

namespace
{

const std::filesystem::path kFixtures = MTRL_FIXTURE_DIR;

struct Run
{
    int code = -1;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "mtrl");
    std::vector<const char*> argv;
    for (const auto& a: args)
        argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    Run r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

struct TempDir
{
    std::filesystem::path path;
    explicit TempDir(const std::string& tag)
        : path(std::filesystem::temp_directory_path() / ("mtrl_cli_" + std::to_string(::getpid()) + "_" + tag))
    {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str(const std::string& name = "") const { return (name.empty() ? path : path / name).string(); }
};

std::string fixture(const std::string& name)
{
    return (kFixtures / name).string();
}

std::vector<std::string> lines_of(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        if (!line.empty())
            lines.push_back(line);
    return lines;
}

} // namespace

TEST_CASE("usage errors exit 2")
{
    const Run none = cli({});
    CHECK(none.code == kExitUsage);

    const Run unknown = cli({"frobnicate"});
    CHECK(unknown.code == kExitUsage);
    CHECK(unknown.err.find("rollout") != std::string::npos);

    const Run flag = cli({"eval", "--no-such-flag"});
    CHECK(flag.code == kExitUsage);
    CHECK(flag.err.find("error:") != std::string::npos);

    TempDir dir("cfg");
    const Run missing_cfg = cli({"train", "--config", dir.str("absent.json"), "--out", dir.str()});
    CHECK(missing_cfg.code == kExitUsage);
    CHECK(missing_cfg.err.find("absent.json") != std::string::npos);

    const Run missing_setting = cli({"eval", "--domain", fixture("retail_domain.json")});
    CHECK(missing_setting.code == kExitUsage);
    CHECK(missing_setting.err.find("--trajectories") != std::string::npos);

    CHECK(cli({"metrics"}).code == kExitUsage);
    CHECK(cli({"train", "--seed", "abc"}).code == kExitUsage);
}

TEST_CASE("help exits 0")
{
    const Run top = cli({"--help"});
    CHECK(top.code == kExitOk);
    for (const char* sub: {"rollout", "train", "synth", "eval", "metrics", "replay"})
        CHECK(top.out.find(sub) != std::string::npos);
    const Run synth = cli({"synth", "--help"});
    CHECK(synth.code == kExitOk);
    CHECK(synth.out.find("--user-prompt") != std::string::npos);
    CHECK(synth.out.find("--mock-fixture") != std::string::npos);
}

TEST_CASE("unreadable inputs are run failures")
{
    TempDir dir("unreadable");
    const Run eval = cli({"eval", "--domain", fixture("retail_domain.json"), "--trajectories", dir.str("missing.jsonl"), "--out", dir.str()});
    CHECK(eval.code == kExitFailure);
    CHECK(eval.err.find("error:") != std::string::npos);

    const Run metrics = cli({"metrics", dir.str("missing.jsonl")});
    CHECK(metrics.code == kExitFailure);

    {
        std::ofstream bad(dir.path / "bad.json");
        bad << "{ not json";
    }
    CHECK(cli({"train", "--config", dir.str("bad.json"), "--out", dir.str()}).code == kExitFailure);
}

TEST_CASE("eval scores the reference trajectories")
{
    TempDir dir("eval");
    const Run ok = cli({"eval", "--domain", fixture("retail_domain.json"), "--trajectories", fixture("retail_correct.jsonl"), "--out", dir.str()});
    REQUIRE(ok.code == kExitOk);
    CHECK(ok.out.find("reward=1 ") != std::string::npos);
    CHECK(ok.out.find("mean_reward=1.000000") != std::string::npos);

    const Run wrong = cli({"eval", "--domain", fixture("retail_domain.json"), "--trajectories", fixture("retail_error.jsonl"), "--out", dir.str()});
    REQUIRE(wrong.code == kExitOk);
    CHECK(wrong.out.find("reward=0 ") != std::string::npos);
    CHECK(wrong.out.find("tcr=0.250000") != std::string::npos);
}

TEST_CASE("scripted rollout, manifest and replay")
{
    TempDir dir("rollout");
    const Run r = cli({"rollout", "--domain", fixture("retail_domain.json"), "--script", fixture("scripts/retail_correct.json"), "--group-size", "2",
                       "--seed", "5", "--out", dir.str()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("rollouts=2 reward_sum=2") != std::string::npos);
    const auto traj = dir.path / "trajectories.jsonl";
    REQUIRE(std::filesystem::exists(traj));
    REQUIRE(std::filesystem::exists(dir.path / "manifest.json"));

    const Json manifest = read_json_file(dir.path / "manifest.json");
    CHECK(manifest["command"] == "rollout");
    CHECK(manifest["config"]["rollout"]["group_size"] == 2);
    CHECK(manifest["config"]["provenance"]["rollout.group_size"] == "flag:--group-size");
    CHECK(manifest["config"]["provenance"]["grpo.seed"] == "flag:--seed");
    CHECK(manifest["config"]["provenance"]["paths.script"] == "flag:--script");
    CHECK(manifest["config"]["provenance"]["grpo.clip_epsilon"] == "default");
    CHECK(manifest["fixtures"].size() == 2);

    const Run replay = cli({"replay", "--domain", fixture("retail_domain.json"), "--trajectories", traj.string(), "--out", dir.str()});
    CHECK(replay.code == kExitOk);
    CHECK(replay.out.find("replayed=2 mismatches=0") != std::string::npos);

    // Tamper with one recorded hash.
    auto lines = lines_of(traj);
    REQUIRE(lines.size() == 2);
    Json first = Json::parse(lines[0]);
    first["final_db_hash"] = "0000000000000000";
    {
        std::ofstream out(dir.path / "tampered.jsonl");
        out << first.dump() << "\n" << lines[1] << "\n";
    }
    const Run bad = cli({"replay", "--domain", fixture("retail_domain.json"), "--trajectories", dir.str("tampered.jsonl"), "--out", dir.str()});
    CHECK(bad.code == kExitFailure);
    CHECK(bad.out.find("mismatches=1") != std::string::npos);
    CHECK(bad.err.find("mismatch") != std::string::npos);

    // Same seed, same bytes.
    TempDir again("rollout2");
    REQUIRE(cli({"rollout", "--domain", fixture("retail_domain.json"), "--script", fixture("scripts/retail_correct.json"), "--group-size", "2", "--seed",
                 "5", "--out", again.str()})
                .code == kExitOk);
    CHECK(read_text_file(again.path / "trajectories.jsonl") == read_text_file(traj));
}

TEST_CASE("rollout on a domain file without a script is a usage error")
{
    TempDir dir("noscript");
    CHECK(cli({"rollout", "--domain", fixture("retail_domain.json"), "--out", dir.str()}).code == kExitUsage);
}

TEST_CASE("toy rollout")
{
    TempDir dir("toy");
    const Run r = cli({"rollout", "--group-size", "4", "--out", dir.str()});
    REQUIRE(r.code == kExitOk);
    CHECK(lines_of(dir.path / "trajectories.jsonl").size() == 4);
}

TEST_CASE("train writes metrics and resumes")
{
    TempDir dir("train");
    const Run r = cli({"train", "--config", fixture("configs/toy_train.json"), "--steps", "6", "--out", dir.str()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("steps=6") != std::string::npos);
    CHECK(r.out.find("success_rate=") != std::string::npos);
    auto records = read_metrics_jsonl(dir.path / "metrics.jsonl");
    CHECK(records.size() == 6);

    const Json manifest = read_json_file(dir.path / "manifest.json");
    const Json& prov = manifest["config"]["provenance"];
    const std::string file_src = "file:" + fixture("configs/toy_train.json");
    CHECK(prov["grpo.seed"] == file_src);
    CHECK(prov["grpo.learning_rate"] == file_src);
    CHECK(prov["grpo.steps"] == "flag:--steps");
    CHECK(prov["grpo.kl_beta"] == "default");
    CHECK(manifest["config"]["grpo"]["seed"] == 7);

    const std::string ckpt = dir.str("checkpoint.json");
    const std::string ckpt_copy = dir.str("first.json");
    std::filesystem::copy_file(ckpt, ckpt_copy);
    const Run resumed = cli({"train", "--resume", ckpt_copy, "--steps", "10", "--out", dir.str()});
    REQUIRE(resumed.code == kExitOk);
    CHECK(resumed.out.find("steps=10") != std::string::npos);
    records = read_metrics_jsonl(dir.path / "metrics.jsonl");
    REQUIRE(records.size() == 10);
    CHECK(records.back().step == 10);

    const Run table = cli({"metrics", dir.str("metrics.jsonl")});
    CHECK(table.code == kExitOk);
    CHECK(std::count(table.out.begin(), table.out.end(), '\n') == 11);
}

TEST_CASE("synth replays a recorded conversation through mock endpoints")
{
    TempDir dir("synth");
    const Run r = cli({"synth", "--scenario", fixture("university_scenario.json"), "--rules", fixture("verification_rules.json"), "--mock-fixture",
                       fixture("university_example1.json"), "--out", dir.str()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("accepted=1/1") != std::string::npos);
    CHECK(lines_of(dir.path / "sft.jsonl").size() == 1);
    const Json manifest = read_json_file(dir.path / "manifest.json");
    CHECK(manifest["config"]["provenance"]["paths.mock_fixture"] == "flag:--mock-fixture");

    const Run remote = cli({"synth", "--scenario", fixture("university_scenario.json"), "--mock-fixture", fixture("university_example2.json"),
                            "--remote-tools", "--out", dir.str()});
    CHECK(remote.code == kExitOk);

    CHECK(cli({"synth", "--scenario", fixture("university_scenario.json"), "--remote-tools", "--out", dir.str()}).code == kExitUsage);
}

TEST_CASE("config resolution")
{
    TempDir dir("resolve");
    {
        std::ofstream out(dir.path / "c.json");
        out << R"({"grpo": {"seed": 3, "kl_beta": 0.5}, "rollout": {"group_size": 4}})";
    }
    FlagOverrides flags;
    flags.beta = 0.25;
    RunConfig cfg = resolve_run_config(dir.path / "c.json", flags);
    CHECK(cfg.grpo.kl_beta == 0.25);
    CHECK(cfg.provenance["grpo.kl_beta"] == "flag:--beta");
    CHECK(cfg.grpo.seed == 3);
    CHECK(cfg.rollout.group_size == 4);

    flags.group_size = 6;
    cfg = resolve_run_config(std::nullopt, flags);
    CHECK(cfg.rollout.group_size == 6);
    CHECK(cfg.grpo.group_size == 6);

    flags.paths["user_prompt"] = "p.txt";
    cfg = resolve_run_config(std::nullopt, flags);
    CHECK(cfg.provenance["paths.user_prompt"] == "flag:--user-prompt");
    CHECK(require_path(cfg, "user_prompt") == "p.txt");
    CHECK_THROWS_WITH(require_path(cfg, "tool_prompt"), Catch::Matchers::ContainsSubstring("--tool-prompt"));

    {
        std::ofstream out(dir.path / "unknown.json");
        out << R"({"grpo": {"sead": 3}})";
    }
    CHECK_THROWS_WITH(resolve_run_config(dir.path / "unknown.json", FlagOverrides{}), Catch::Matchers::ContainsSubstring("grpo.sead"));

    FlagOverrides bad;
    bad.epsilon = -1.0;
    CHECK_THROWS_AS(resolve_run_config(std::nullopt, bad), Error);
}

TEST_CASE("rollout scripts")
{
    const RolloutScript s = rollout_script_from_json(read_json_file(kFixtures / "scripts/retail_correct.json"));
    CHECK_FALSE(s.agent.empty());
    CHECK_FALSE(s.user.empty());

    CHECK_THROWS_AS(rollout_script_from_json(Json{{"agent", Json::array({Json::object()})}, {"user", {"hi"}}}), Error);
    CHECK_THROWS_AS(rollout_script_from_json(Json{{"agent", Json::array()}, {"user", Json::array()}}), Error);
    CHECK_THROWS(rollout_script_from_json(Json{{"user", {"hi"}}}));

    const RolloutScript two = rollout_script_from_json(
        Json{{"agent", {{{"calls", {{{"name", "think"}, {"arguments", {{"thought", "x"}}}}, {{"name", "calculate"}}}}}}}, {"user", {"hi"}}});
    REQUIRE(two.agent.size() == 1);
    CHECK(two.agent[0].emissions.size() == 2);
}
