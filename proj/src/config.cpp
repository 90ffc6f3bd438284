// SPDX-License-Identifier: Apache-2.0
#include "mtrl/config.hpp"

#include <algorithm>

namespace mtrl
{

namespace
{

Json models_json(const ModelNames& m)
{
    return Json{{"agent", m.agent}, {"user", m.user}, {"tool", m.tool}, {"judge", m.judge}};
}

// Every key in `given` must exist in `known`; records file provenance.
void check_section(const std::string& section, const Json& given, const Json& known, const std::string& source, std::map<std::string, std::string>& prov)
{
    if (!given.is_object())
        throw Error("config: section '" + section + "' must be an object");
    for (auto& [key, value]: given.items())
    {
        if (!known.contains(key))
            throw Error("config: unknown key '" + section + "." + key + "'");
        prov[section + "." + key] = source;
    }
}

} // namespace

RunConfig resolve_run_config(const std::optional<std::filesystem::path>& config_file, const FlagOverrides& flags)
{
    RunConfig cfg;
    auto& prov = cfg.provenance;
    const std::pair<std::string, Json> sections[] = {
        {"rollout", to_json(cfg.rollout)},
        {"grpo", to_json(cfg.grpo)},
        {"client", to_json(cfg.client)},
        {"models", models_json(cfg.models)},
    };
    for (const auto& [section, defaults]: sections)
        for (auto it = defaults.begin(); it != defaults.end(); ++it)
            prov[section + "." + it.key()] = "default";
    prov["paths.out"] = "default";
    prov["eval_rollouts"] = "default";

    if (config_file)
    {
        if (!std::filesystem::exists(*config_file))
            throw Error("config file not found: " + config_file->string());
        const Json doc = read_json_file(*config_file);
        if (!doc.is_object())
            throw Error("config: top level must be an object");
        const std::string source = "file:" + config_file->string();
        for (auto& [key, value]: doc.items())
        {
            if (key == "rollout")
            {
                check_section(key, value, to_json(cfg.rollout), source, prov);
                cfg.rollout = rollout_config_from_json(value, cfg.rollout);
            }
            else if (key == "grpo")
            {
                check_section(key, value, to_json(cfg.grpo), source, prov);
                cfg.grpo = grpo_config_from_json(value, cfg.grpo);
            }
            else if (key == "client")
            {
                check_section(key, value, to_json(cfg.client), source, prov);
                Json merged = to_json(cfg.client);
                merged.update(value);
                cfg.client = client_config_from_json(merged);
            }
            else if (key == "models")
            {
                check_section(key, value, models_json(cfg.models), source, prov);
                cfg.models.agent = value.value("agent", cfg.models.agent);
                cfg.models.user = value.value("user", cfg.models.user);
                cfg.models.tool = value.value("tool", cfg.models.tool);
                cfg.models.judge = value.value("judge", cfg.models.judge);
            }
            else if (key == "paths")
            {
                if (!value.is_object())
                    throw Error("config: section 'paths' must be an object");
                for (auto& [name, p]: value.items())
                {
                    cfg.paths[name] = p.get<std::string>();
                    prov["paths." + name] = source;
                }
            }
            else if (key == "eval_rollouts")
            {
                cfg.eval_rollouts = value.get<int>();
                prov["eval_rollouts"] = source;
            }
            else
                throw Error("config: unknown key '" + key + "'");
        }
    }

    if (flags.seed)
    {
        cfg.grpo.seed = *flags.seed;
        prov["grpo.seed"] = "flag:--seed";
    }
    if (flags.group_size)
    {
        cfg.grpo.group_size = *flags.group_size;
        cfg.rollout.group_size = *flags.group_size;
        prov["grpo.group_size"] = prov["rollout.group_size"] = "flag:--group-size";
    }
    if (flags.max_turns)
    {
        cfg.rollout.max_turns = *flags.max_turns;
        prov["rollout.max_turns"] = "flag:--max-turns";
    }
    if (flags.beta)
    {
        cfg.grpo.kl_beta = *flags.beta;
        prov["grpo.kl_beta"] = "flag:--beta";
    }
    if (flags.epsilon)
    {
        cfg.grpo.clip_epsilon = *flags.epsilon;
        prov["grpo.clip_epsilon"] = "flag:--epsilon";
    }
    if (flags.out)
    {
        cfg.paths["out"] = *flags.out;
        prov["paths.out"] = "flag:--out";
    }
    for (const auto& [name, p]: flags.paths)
    {
        cfg.paths[name] = p;
        prov["paths." + name] = "flag:--" + flag_spelling(name);
    }

    cfg.rollout.validate();
    cfg.grpo.validate();
    if (cfg.eval_rollouts < 0)
        throw Error("config: eval_rollouts must be >= 0");
    return cfg;
}

Json to_json(const RunConfig& cfg)
{
    return Json{
        {"rollout", to_json(cfg.rollout)}, {"grpo", to_json(cfg.grpo)},         {"client", to_json(cfg.client)},
        {"models", models_json(cfg.models)}, {"paths", cfg.paths},             {"eval_rollouts", cfg.eval_rollouts},
        {"provenance", cfg.provenance},
    };
}

std::string flag_spelling(std::string key)
{
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

std::string require_path(const RunConfig& cfg, const std::string& name)
{
    auto it = cfg.paths.find(name);
    if (it == cfg.paths.end() || it->second.empty())
        throw Error("missing setting: --" + flag_spelling(name) + " (or paths." + name + " in the config file)");
    return it->second;
}

Json run_manifest(const std::string& command, const RunConfig& cfg, const std::vector<std::filesystem::path>& fixtures)
{
    Json hashes = Json::object();
    for (const auto& f: fixtures)
        hashes[f.generic_string()] = hex64(fnv1a64(read_text_file(f)));
    return Json{{"format", "mtrl-run-manifest"}, {"version", 1}, {"command", command}, {"config", to_json(cfg)}, {"fixtures", std::move(hashes)}};
}

void write_run_manifest(const std::filesystem::path& path, const std::string& command, const RunConfig& cfg,
                        const std::vector<std::filesystem::path>& fixtures)
{
    write_text_file(path, run_manifest(command, cfg, fixtures).dump(2) + "\n");
}

} // namespace mtrl
