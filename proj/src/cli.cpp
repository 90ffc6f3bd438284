// SPDX-License-Identifier: Apache-2.0
#include "mtrl/cli.hpp"

#include "mtrl/config.hpp"
#include "mtrl/domain.hpp"
#include "mtrl/metrics.hpp"
#include "mtrl/synth.hpp"
#include "mtrl/toy_env.hpp"
#include "mtrl/trainer.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

namespace mtrl
{

namespace
{

// Bad invocation discovered after parsing (missing settings or config file).
class UsageError : public Error
{
public:
    using Error::Error;
};

struct CommonOptions
{
    std::optional<std::string> config;
    FlagOverrides flags;
};

void add_common(CLI::App* app, CommonOptions& o)
{
    app->add_option("--config", o.config, "Run configuration file (JSON)");
    app->add_option("--seed", o.flags.seed, "Random seed");
    app->add_option("--group-size", o.flags.group_size, "Rollouts per task (G)");
    app->add_option("--max-turns", o.flags.max_turns, "User-turn cap per episode");
    app->add_option("--beta", o.flags.beta, "KL penalty weight");
    app->add_option("--epsilon", o.flags.epsilon, "Clip range");
    app->add_option("--out", o.flags.out, "Output directory");
}

RunConfig resolve(const CommonOptions& o)
{
    if (o.config && !std::filesystem::exists(*o.config))
        throw UsageError("config file not found: " + *o.config);
    return resolve_run_config(o.config ? std::optional<std::filesystem::path>(*o.config) : std::nullopt, o.flags);
}

std::vector<std::filesystem::path> input_files(const RunConfig& cfg, const CommonOptions& o, std::initializer_list<std::string> names)
{
    std::vector<std::filesystem::path> files;
    if (o.config)
        files.emplace_back(*o.config);
    for (const auto& n: names)
        if (auto it = cfg.paths.find(n); it != cfg.paths.end() && !it->second.empty() && it->second != "toy")
            files.emplace_back(it->second);
    return files;
}

std::string setting(const RunConfig& cfg, const std::string& name)
{
    try
    {
        return require_path(cfg, name);
    }
    catch (const Error& e)
    {
        throw UsageError(e.what());
    }
}

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

DomainBundle load_bundle(const std::string& domain)
{
    return domain == "toy" ? toy::bundle() : load_domain_file(domain);
}

Emission emission_from_json(const Json& j)
{
    return Emission::call(j.at("name").get<std::string>(), j.value("arguments", Json::object()));
}

// --- rollout ---------------------------------------------------------------

int cmd_rollout(const CommonOptions& o, const std::optional<std::string>& checkpoint, std::ostream& out)
{
    RunConfig cfg = resolve(o);
    const std::string domain = cfg.paths.count("domain") ? cfg.paths["domain"] : "toy";
    cfg.paths["domain"] = domain;
    DomainBundle bundle = load_bundle(domain);
    const std::filesystem::path out_dir = cfg.paths["out"];
    const std::uint64_t seed = cfg.grpo.seed;

    std::unique_ptr<AgentPolicy> agent;
    std::unique_ptr<UserSimulator> user;
    RolloutConfig rcfg = cfg.rollout;
    if (cfg.paths.count("script"))
    {
        RolloutScript script = rollout_script_from_json(read_json_file(cfg.paths["script"]));
        agent = std::make_unique<ScriptedAgent>(std::move(script.agent));
        user = std::make_unique<ScriptedUser>(std::move(script.user));
        rcfg.user_mode = UserMode::scripted;
    }
    else
    {
        if (domain != "toy")
            throw UsageError("rollout on a domain file needs --script");
        auto theta = std::make_shared<const PolicyParams>(checkpoint ? load_checkpoint(*checkpoint).theta
                                                                     : PolicyParams(toy::kContexts, toy::kActions, 0.0));
        agent = std::make_unique<CategoricalAgent>(theta, theta, toy::action_space(), toy::context_encoder(), cfg.rollout.agent_temperature);
        user = std::make_unique<ScenarioUser>();
        const RolloutConfig base = toy::rollout_config();
        rcfg.user_mode = base.user_mode;
        rcfg.tool_execution = base.tool_execution;
        rcfg.max_agent_steps_per_turn = base.max_agent_steps_per_turn;
    }

    std::vector<const Task*> tasks;
    if (cfg.paths.count("task"))
        tasks.push_back(&bundle.task(cfg.paths["task"]));
    else
        for (const auto& t: bundle.tasks)
            tasks.push_back(&t);

    auto executors = local_env_factory(bundle.registry);
    std::string jsonl;
    int wins = 0;
    int total = 0;
    for (std::size_t k = 0; k < tasks.size(); ++k)
    {
        Group g = run_group(*tasks[k], *agent, *user, executors, rcfg, mix_seed(seed, k));
        jsonl += group_jsonl(g);
        for (int r: g.rewards)
            wins += r;
        total += static_cast<int>(g.rewards.size());
    }
    write_text_file(out_dir / "trajectories.jsonl", jsonl);
    auto fixtures = input_files(cfg, o, {"domain", "script"});
    if (checkpoint)
        fixtures.emplace_back(*checkpoint);
    write_run_manifest(out_dir / "manifest.json", "rollout", cfg, fixtures);
    out << "rollouts=" << total << " reward_sum=" << wins << " out=" << (out_dir / "trajectories.jsonl").string() << "\n";
    return kExitOk;
}

// --- train -----------------------------------------------------------------

int cmd_train(const CommonOptions& o, std::optional<int> steps, const std::optional<std::string>& resume, std::ostream& out)
{
    RunConfig cfg = resolve(o);
    if (steps)
    {
        cfg.grpo.steps = *steps;
        cfg.provenance["grpo.steps"] = "flag:--steps";
        cfg.grpo.validate();
    }
    const std::filesystem::path out_dir = cfg.paths["out"];
    const DomainBundle bundle = toy::bundle();
    RolloutConfig rcfg = toy::rollout_config();
    rcfg.max_turns = cfg.rollout.max_turns;
    rcfg.max_tokens = cfg.rollout.max_tokens;
    rcfg.agent_temperature = cfg.rollout.agent_temperature;
    rcfg.threads = cfg.rollout.threads;
    AgentEnvSource source(bundle, toy::action_space(), toy::context_encoder(), rcfg);

    std::unique_ptr<Trainer> trainer;
    if (resume)
    {
        Checkpoint ckpt = load_checkpoint(*resume);
        // --steps is the total target, counted from step 0.
        if (steps)
            ckpt.cfg.steps = *steps;
        trainer = std::make_unique<Trainer>(source, ckpt);
    }
    else
    {
        PolicyParams init(toy::kContexts, toy::kActions, 0.0);
        trainer = std::make_unique<Trainer>(source, cfg.grpo, init, init);
    }

    const auto metrics_path = out_dir / "metrics.jsonl";
    std::filesystem::create_directories(out_dir);
    std::ofstream metrics(metrics_path, resume ? std::ios::app : std::ios::trunc);
    if (!metrics)
        throw Error("cannot write " + metrics_path.string());
    trainer->run(trainer->planned_steps(), [&metrics](const MetricsRecord& r) { metrics << to_json(r).dump() << "\n" << std::flush; });
    save_checkpoint(trainer->checkpoint(), out_dir / "checkpoint.json");

    auto fixtures = input_files(cfg, o, {});
    if (resume)
        fixtures.emplace_back(*resume);
    write_run_manifest(out_dir / "manifest.json", "train", cfg, fixtures);
    out << "steps=" << trainer->steps_done() << " checkpoint=" << (out_dir / "checkpoint.json").string() << "\n";
    if (cfg.eval_rollouts > 0)
    {
        const double rate = evaluate_success_rate(trainer->theta(), bundle, toy::action_space(), toy::context_encoder(), rcfg, cfg.eval_rollouts,
                                                  mix_seed(cfg.grpo.seed, 0xe7a1));
        out << "success_rate=" << fmt(rate) << " over " << cfg.eval_rollouts << " rollouts\n";
    }
    return kExitOk;
}

// --- synth -----------------------------------------------------------------

int cmd_synth(const CommonOptions& o, bool remote_tools, const std::string& tool_backend, int count, std::ostream& out)
{
    RunConfig cfg = resolve(o);
    const Scenario scenario = load_scenario_file(setting(cfg, "scenario"));
    VerificationRules rules;
    if (cfg.paths.count("rules"))
        rules = verification_rules_from_json(read_json_file(cfg.paths["rules"]));
    rules.judge.model = cfg.models.judge;
    const std::filesystem::path out_dir = cfg.paths["out"];

    std::vector<SynthTrajectory> produced;
    if (cfg.paths.count("mock_fixture"))
    {
        MockPipelineOptions opts;
        opts.remote_tools = remote_tools;
        opts.rules = rules;
        opts.seed = cfg.grpo.seed;
        opts.rules.judge.model = "judge";
        produced.push_back(run_mock_pipeline(scenario, read_json_file(cfg.paths["mock_fixture"]), opts));
    }
    else
    {
        if (remote_tools)
            throw UsageError("--remote-tools is only available with --mock-fixture");
        auto client = std::make_shared<const ChatClient>(cfg.client);
        LlmAgentPolicy agent(client, LlmRoleConfig{cfg.models.agent, cfg.rollout.agent_temperature, 1024});
        LlmUserConfig ucfg;
        ucfg.role.model = cfg.models.user;
        ucfg.prompt_template = read_text_file(setting(cfg, "user_prompt"));
        LlmUserSimulator user(client, ucfg);
        ToolSimulatorConfig tcfg;
        tcfg.role.model = cfg.models.tool;
        if (cfg.paths.count("tool_prompt"))
            tcfg.prompt_template = read_text_file(cfg.paths["tool_prompt"]);
        RolloutConfig rcfg = cfg.rollout;
        rcfg.user_mode = UserMode::llm;
        rcfg.tool_execution = ToolExecution::llm_simulated;
        for (int i = 0; i < count; ++i)
        {
            const std::uint64_t seed = mix_seed(cfg.grpo.seed, static_cast<std::uint64_t>(i));
            SyntheticMemory memory = generate_memory(scenario, seed);
            SimulatedToolExecutor tools(scenario, memory, tool_backend_from_string(tool_backend), client, tcfg);
            SynthTrajectory t = synthesize_trajectory(scenario, agent, user, tools, memory, rcfg, seed);
            dual_verify(t, rules, client.get());
            produced.push_back(std::move(t));
        }
    }

    std::vector<SynthTrajectory> accepted;
    for (const auto& t: produced)
    {
        out << t.scenario_id << " verdict=" << to_string(t.verdict) << " termination=" << to_string(t.termination) << " rationale=" << t.judge_rationale
            << "\n";
        if (t.verdict == Verdict::accepted)
            accepted.push_back(t);
    }
    export_sft(accepted, out_dir / "sft.jsonl");
    write_run_manifest(out_dir / "manifest.json", "synth", cfg, input_files(cfg, o, {"scenario", "rules", "mock_fixture", "user_prompt", "tool_prompt"}));
    out << "accepted=" << accepted.size() << "/" << produced.size() << " out=" << (out_dir / "sft.jsonl").string() << "\n";
    return accepted.empty() ? kExitFailure : kExitOk;
}

// --- eval / replay ---------------------------------------------------------

int cmd_eval(const CommonOptions& o, std::ostream& out)
{
    RunConfig cfg = resolve(o);
    const DomainBundle bundle = load_bundle(setting(cfg, "domain"));
    const auto records = read_trajectory_jsonl(setting(cfg, "trajectories"));
    if (records.empty())
        throw Error("no trajectories to evaluate");

    std::map<std::string, std::vector<int>> by_task;
    std::vector<std::string> order;
    double reward_sum = 0.0;
    double tcr_sum = 0.0;
    for (const auto& rec: records)
    {
        const Trajectory& t = rec.trajectory;
        const Task& task = bundle.task(t.task_id);
        const Database final_db = replay_tool_calls(task, *bundle.registry, t);
        const RewardResult res = score(task, final_db, t);
        const int reward = outcome_reward(res, t.termination);
        out << t.task_id << " reward=" << reward << " tcr=" << fmt(res.tcr) << " termination=" << to_string(t.termination) << "\n";
        reward_sum += reward;
        tcr_sum += res.tcr;
        if (!by_task.count(t.task_id))
            order.push_back(t.task_id);
        by_task[t.task_id].push_back(reward);
    }
    const auto n = static_cast<double>(records.size());
    out << "trajectories=" << records.size() << " mean_reward=" << fmt(reward_sum / n) << " mean_tcr=" << fmt(tcr_sum / n);
    std::vector<std::vector<int>> rows;
    for (const auto& id: order)
        rows.push_back(by_task[id]);
    bool rectangular = true;
    for (const auto& r: rows)
        rectangular = rectangular && r.size() == rows.front().size();
    if (rectangular)
        out << " all_correct_ratio=" << fmt(all_correct_ratio(rows)) << " all_wrong_ratio=" << fmt(all_wrong_ratio(rows));
    out << "\n";
    return kExitOk;
}

int cmd_replay(const CommonOptions& o, std::ostream& out, std::ostream& err)
{
    RunConfig cfg = resolve(o);
    const DomainBundle bundle = load_bundle(setting(cfg, "domain"));
    const auto records = read_trajectory_jsonl(setting(cfg, "trajectories"));
    int mismatches = 0;
    for (std::size_t i = 0; i < records.size(); ++i)
    {
        const Trajectory& t = records[i].trajectory;
        const std::string hash = hex64(replay_tool_calls(bundle.task(t.task_id), *bundle.registry, t).hash());
        if (hash == records[i].final_db_hash)
            out << i << " " << t.task_id << " ok " << hash << "\n";
        else
        {
            ++mismatches;
            err << i << " " << t.task_id << " mismatch: recorded " << (records[i].final_db_hash.empty() ? "(none)" : records[i].final_db_hash)
                << ", replayed " << hash << "\n";
        }
    }
    out << "replayed=" << records.size() << " mismatches=" << mismatches << "\n";
    return mismatches == 0 ? kExitOk : kExitFailure;
}

} // namespace

RolloutScript rollout_script_from_json(const Json& doc)
{
    RolloutScript s;
    for (const auto& step: doc.at("agent"))
    {
        AgentStep a;
        if (step.contains("text"))
            a.emissions.push_back(Emission::text(step["text"].get<std::string>(), static_cast<int>(count_words(step["text"].get<std::string>()))));
        else if (step.contains("call"))
            a.emissions.push_back(emission_from_json(step["call"]));
        else if (step.contains("calls"))
            for (const auto& c: step["calls"])
                a.emissions.push_back(emission_from_json(c));
        else
            throw Error("script step needs text, call or calls");
        s.agent.push_back(std::move(a));
    }
    s.user = doc.at("user").get<std::vector<std::string>>();
    if (s.user.empty())
        throw Error("script needs at least one user line");
    return s;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Multi-turn agent RL toolkit", "mtrl"};
    app.require_subcommand(1);

    CommonOptions common;
    std::optional<std::string> checkpoint;
    std::optional<int> steps;
    std::optional<std::string> resume;
    bool remote_tools = false;
    std::string tool_backend = "llm";
    int count = 1;
    std::string metrics_file;
    // Keys use underscores (paths.user_prompt); flags use hyphens (--user-prompt).
    auto path_option = [&common](CLI::App* sc, const std::string& name, const std::string& help) {
        sc->add_option_function<std::string>(
            "--" + flag_spelling(name), [&common, name](const std::string& v) { common.flags.paths[name] = v; }, help);
    };

    auto* rollout = app.add_subcommand("rollout", "Run rollout groups and write trajectory JSONL");
    add_common(rollout, common);
    path_option(rollout, "domain", "Domain bundle file, or 'toy'");
    path_option(rollout, "task", "Only this task id");
    path_option(rollout, "script", "Scripted agent/user roles (JSON)");
    rollout->add_option("--checkpoint", checkpoint, "Toy policy checkpoint");

    auto* train = app.add_subcommand("train", "GRPO training on the toy tool task");
    add_common(train, common);
    train->add_option("--steps", steps, "Total training steps, counted from step 0 (overrides grpo.steps)");
    train->add_option("--resume", resume, "Continue from a checkpoint");

    auto* synth = app.add_subcommand("synth", "Cold-start trajectory synthesis");
    add_common(synth, common);
    path_option(synth, "scenario", "Scenario file");
    path_option(synth, "rules", "Verification rules file");
    path_option(synth, "mock_fixture", "Recorded conversation to replay through mock endpoints");
    path_option(synth, "user_prompt", "User simulator prompt template");
    path_option(synth, "tool_prompt", "Tool simulator prompt template");
    synth->add_flag("--remote-tools", remote_tools, "Serve tools through the JSON-RPC executor");
    synth->add_option("--tool-backend", tool_backend, "llm or interpreter")->check(CLI::IsMember({"llm", "interpreter"}));
    synth->add_option("--count", count, "Trajectories to synthesize (live mode)")->check(CLI::PositiveNumber);

    auto* eval = app.add_subcommand("eval", "Score a trajectory file against its tasks");
    add_common(eval, common);
    path_option(eval, "domain", "Domain bundle file, or 'toy'");
    path_option(eval, "trajectories", "Trajectory JSONL");

    auto* metrics = app.add_subcommand("metrics", "Summarize a metrics JSONL file");
    metrics->add_option("file", metrics_file, "Metrics JSONL")->required();

    auto* replay = app.add_subcommand("replay", "Re-execute recorded tool calls and compare final database hashes");
    add_common(replay, common);
    path_option(replay, "domain", "Domain bundle file, or 'toy'");
    path_option(replay, "trajectories", "Trajectory JSONL");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp&)
    {
        out << app.help();
        return kExitOk;
    }
    catch (const CLI::ParseError& e)
    {
        err << "error: " << e.what() << "\n" << app.help();
        return kExitUsage;
    }

    try
    {
        if (*rollout)
            return cmd_rollout(common, checkpoint, out);
        if (*train)
            return cmd_train(common, steps, resume, out);
        if (*synth)
            return cmd_synth(common, remote_tools, tool_backend, count, out);
        if (*eval)
            return cmd_eval(common, out);
        if (*metrics)
        {
            out << metrics_table(read_metrics_jsonl(metrics_file));
            return kExitOk;
        }
        return cmd_replay(common, out, err);
    }
    catch (const UsageError& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace mtrl
