#include "cli/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "chunkstore/chunkstore.hpp"
#include "evalkit/evalkit.hpp"
#include "momaworld/world.hpp"
#include "qcrl/qcrl.hpp"
#include "wbcgen/wbc.hpp"

namespace wm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

Task task_from_name(const std::string& name) {
    for (Task t : {Task::Door, Task::Drawer, Task::Cupboard})
        if (name == task_name(t)) return t;
    throw std::invalid_argument("unknown task '" + name + "' (use door, drawer, or cupboard)");
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    json j = json::parse(f);
    if (!j.is_object()) throw std::invalid_argument("config must be a JSON object: " + path);
    return j;
}

// Flags win over config keys; config keys win over the built-in default the
// variable already holds.
template <typename T>
void merge(const CLI::App& cmd, const std::string& flag, const json& j, const std::string& key,
           T& var) {
    if (cmd.count(flag)) return;
    if (j.contains(key)) var = j.at(key).get<T>();
}

void write_text(const std::string& path, const std::string& text) {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << text;
}

int cmd_gen_data(const std::string& task_str, int episodes, uint64_t seed,
                 const std::string& out, int K, int H, double gamma) {
    Task task = task_from_name(task_str);
    if (episodes <= 0) throw std::invalid_argument("--episodes must be a positive integer");
    if (out.empty()) throw std::invalid_argument("--out is required (flag or config)");
    fs::create_directories(out);

    CollectSummary s = collect_dataset(task, episodes, seed, out);
    StepDataset ds = load_steps(out + "/steps.wmst");
    ChunkDataset chunks = relabel_chunks(ds, H, K, gamma);
    save_dataset(out + "/chunks.wmds", chunks);
    write_text(out + "/norm.json", norm_stats_to_json(compute_norm_stats(ds)).dump(2) + "\n");

    std::printf("gen-data: task=%s episodes=%d seed=%llu\n", task_name(task), episodes,
                static_cast<unsigned long long>(seed));
    std::printf("  success %d/%d (%.1f%%), partial %d, steps %zu\n", s.n_success, s.n_episodes,
                100.0 * s.success_rate, s.n_partial, s.n_steps);
    std::printf("  chunks %llu (K=%d H=%d gamma=%g)\n", static_cast<unsigned long long>(chunks.n),
                K, H, gamma);
    std::printf("  wrote %s/{steps.wmst, chunks.wmds, norm.json, manifest.json}\n", out.c_str());
    return 0;
}

int cmd_train(const std::string& data, const std::string& out, const TrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("--data is required (flag or config)");
    if (out.empty()) throw std::invalid_argument("--out is required (flag or config)");
    StepDataset ds = load_steps(data);
    TrainResult r = train(ds, cfg, out);

    std::printf("train: baseline=%s seed=%llu critic_steps=%d policy_steps=%d q_chunking=%s\n",
                cfg.baseline.c_str(), static_cast<unsigned long long>(cfg.seed), cfg.critic_steps,
                cfg.policy_steps, cfg.use_q_chunking ? "on" : "off");
    if (r.resumed_critic) std::printf("  resumed critic checkpoint, phase 1 skipped\n");
    std::printf("  q_loss %.6g  v_loss %.6g  policy_loss %.6g  mean_weight %.4g\n", r.q_loss,
                r.v_loss, r.policy_loss, r.mean_weight);
    std::printf("  wrote %s/{policy.wmnn, norm.json, config.json, curves.csv%s}\n", out.c_str(),
                cfg.baseline == "bc" ? "" : ", critic.wmnn, value.wmnn");
    return 0;
}

struct EvalArgs {
    std::string task_str, checkpoint, policy_kind, id, out_json, out_csv;
    EvalParams ep;
    int n_action_samples = 8;
    bool alpha_given = false;
    std::optional<WbcParams> fixed_wbc;
};

int cmd_eval(const EvalArgs& a) {
    Task task = task_from_name(a.task_str);
    if (a.ep.n <= 0) throw std::invalid_argument("--episodes must be a positive integer");
    if (a.alpha_given && !(a.ep.ema_alpha > 0.0 && a.ep.ema_alpha <= 1.0))
        throw std::invalid_argument("--ema-alpha must be in (0, 1]");
    if (a.n_action_samples < 1)
        throw std::invalid_argument("--n-action-samples must be a positive integer");

    EvalParams ep = a.ep;
    std::string kind = a.policy_kind;
    PolicyFactory factory;
    std::shared_ptr<Checkpoint> ck;

    if (kind == "wbc") {
        if (!a.alpha_given) ep.ema_alpha = 1.0;  // raw controller by default
        if (a.fixed_wbc) {
            WbcParams p = *a.fixed_wbc;
            validate_params(p);
            factory = [task, p] { return std::make_unique<WbcRollout>(task, p); };
        } else {
            factory = [task] { return std::make_unique<WbcRollout>(task); };
        }
        ep.policy_id = a.id.empty() ? "wbc" : a.id;
    } else {
        if (a.checkpoint.empty())
            throw std::invalid_argument("--checkpoint is required unless --policy wbc");
        ck = std::make_shared<Checkpoint>(load_checkpoint(a.checkpoint));
        if (kind.empty()) kind = ck->config.baseline == "idql" ? "idql" : "diffusion";
        if (!a.alpha_given) ep.ema_alpha = 0.5;
        if (kind == "idql") {
            if (ck->nets.q1.param_count() == 0)
                throw std::invalid_argument(
                    "checkpoint has no critic; idql selection needs one (train with --baseline "
                    "idql or whole_moma)");
            int n_a = a.n_action_samples;
            factory = [ck, n_a] { return std::make_unique<IdqlRollout>(ck->policy, ck->nets, n_a); };
        } else if (kind == "diffusion") {
            factory = [ck] { return std::make_unique<DiffusionRollout>(ck->policy); };
        } else {
            throw std::invalid_argument("--policy must be diffusion, idql, or wbc");
        }
        ep.policy_id = a.id.empty() ? ck->config.baseline : a.id;
    }

    EvalReport r = evaluate(factory, task, ep);
    json j = report_to_json(r);
    std::cout << j.dump(2) << "\n";
    if (!a.out_json.empty()) write_text(a.out_json, j.dump(2) + "\n");
    if (!a.out_csv.empty())
        write_text(a.out_csv, report_csv_header() + "\n" + report_csv_row(r) + "\n");
    return 0;
}

EvalReport report_from_json(const json& j) {
    EvalReport r;
    r.policy = j.at("policy").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.n = j.at("n").get<int>();
    r.success_pct = j.at("success_pct").get<double>();
    r.partial_pct = j.at("partial_pct").get<double>();
    r.ci_lo = j.at("ci").at(0).get<double>();
    r.ci_hi = j.at("ci").at(1).get<double>();
    if (!j.at("time_to_success_s").is_null())
        r.time_to_success_s = j.at("time_to_success_s").get<double>();
    r.seed_base = j.at("seed_base").get<uint64_t>();
    return r;
}

std::string fmt1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

std::string report_markdown(const std::vector<EvalReport>& rs) {
    std::string md = "| Metric |";
    for (const auto& r : rs) md += " " + r.policy + " (" + r.task + ") |";
    md += "\n| --- |";
    for (size_t i = 0; i < rs.size(); ++i) md += " --- |";
    md += "\n| Success % |";
    for (const auto& r : rs) md += " " + fmt1(r.success_pct) + " |";
    md += "\n| 95% CI |";
    for (const auto& r : rs) md += " [" + fmt1(r.ci_lo) + ", " + fmt1(r.ci_hi) + "] |";
    md += "\n| Partial success % |";
    for (const auto& r : rs) md += " " + fmt1(r.partial_pct) + " |";
    md += "\n| Time to success (s) |";
    for (const auto& r : rs) {
        if (r.time_to_success_s) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.3f", *r.time_to_success_s);
            md += std::string(" ") + buf + " |";
        } else {
            md += " n/a |";
        }
    }
    md += "\n| Episodes |";
    for (const auto& r : rs) md += " " + std::to_string(r.n) + " |";
    md += "\n";
    return md;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_md,
               const std::string& out_csv) {
    std::vector<std::string> missing;
    for (const auto& p : inputs)
        if (!fs::exists(p)) missing.push_back(p);
    if (!missing.empty()) {
        for (const auto& p : missing) std::cerr << "report: missing input file: " << p << "\n";
        return 1;
    }

    std::vector<EvalReport> rs;
    for (const auto& p : inputs) {
        std::ifstream f(p);
        if (!f) {
            std::cerr << "report: cannot open: " << p << "\n";
            return 1;
        }
        try {
            rs.push_back(report_from_json(json::parse(f)));
        } catch (const json::exception& e) {
            std::cerr << "report: failed to parse " << p << ": " << e.what() << "\n";
            return 1;
        }
    }

    std::string md = report_markdown(rs);
    std::string csv = report_csv_header() + "\n";
    for (const auto& r : rs) csv += report_csv_row(r) + "\n";

    if (!out_md.empty())
        write_text(out_md, md);
    else
        std::cout << md;
    if (!out_csv.empty()) write_text(out_csv, csv);
    return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"whole-body manipulation pipeline: data generation, offline training, "
                 "evaluation, reporting"};
    app.require_subcommand(1);
    app.footer("Set WHOLEMOMA_WORKERS to bound worker threads.");
    TrainConfig defaults;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "roll scripted-controller episodes into a dataset");
    std::string g_config, g_task, g_out;
    int g_episodes = 0, g_K = defaults.K, g_H = defaults.H;
    double g_gamma = defaults.gamma;
    uint64_t g_seed = 0;
    gen->add_option("--config", g_config, "JSON config file");
    gen->add_option("--task", g_task, "door, drawer, or cupboard");
    gen->add_option("--episodes", g_episodes, "number of episodes to roll");
    gen->add_option("--seed", g_seed, "master seed")->required();
    gen->add_option("--out", g_out, "output directory");
    gen->add_option("--K", g_K, "history length for chunk relabeling");
    gen->add_option("--H", g_H, "chunk horizon for relabeling");
    gen->add_option("--gamma", g_gamma, "discount for chunk returns");

    // train
    auto* tr = app.add_subcommand("train", "fit critic, value, and diffusion policy offline");
    std::string t_config, t_data, t_out, t_baseline, t_arch;
    uint64_t t_seed = 0;
    double t_tau = 0, t_beta = 0, t_wmax = 0, t_gamma = 0, t_polyak = 0;
    double t_lr_c = 0, t_lr_v = 0, t_lr_p = 0;
    int t_batch = 0, t_csteps = 0, t_psteps = 0, t_K = 0, t_H = 0, t_dsteps = 0;
    bool t_no_qc = false, t_no_twin = false;
    tr->add_option("--config", t_config, "JSON config file");
    tr->add_option("--data", t_data, "steps.wmst dataset path");
    tr->add_option("--out", t_out, "checkpoint directory");
    tr->add_option("--seed", t_seed, "training seed")->required();
    tr->add_option("--baseline", t_baseline, "whole_moma, bc, or idql");
    tr->add_option("--tau", t_tau, "expectile for the value fit");
    tr->add_option("--beta", t_beta, "advantage weight temperature");
    tr->add_option("--w-max", t_wmax, "advantage weight clip");
    tr->add_option("--gamma", t_gamma, "discount factor");
    tr->add_option("--polyak", t_polyak, "target network update rate");
    tr->add_option("--batch", t_batch, "batch size");
    tr->add_option("--lr-critic", t_lr_c, "critic learning rate");
    tr->add_option("--lr-value", t_lr_v, "value learning rate");
    tr->add_option("--lr-policy", t_lr_p, "policy learning rate");
    tr->add_option("--critic-steps", t_csteps, "phase-1 gradient steps");
    tr->add_option("--policy-steps", t_psteps, "phase-2 gradient steps");
    tr->add_option("--K", t_K, "state history length");
    tr->add_option("--H", t_H, "action chunk horizon");
    tr->add_option("--diffusion-steps", t_dsteps, "denoising steps");
    tr->add_option("--critic-arch", t_arch, "mlp or wide");
    tr->add_flag("--no-q-chunking", t_no_qc, "bootstrap one step instead of H");
    tr->add_flag("--no-twin-critic", t_no_twin, "use a single critic net");

    // eval
    auto* ev = app.add_subcommand("eval", "run evaluation episodes and report metrics");
    std::string e_config, e_task, e_ckpt, e_policy, e_id, e_out, e_csv;
    int e_episodes = 50, e_latency = 3, e_nsamples = 8;
    uint64_t e_seed_base = 0;
    double e_sigma = 0.1, e_alpha = 0.5;
    bool e_async = false;
    ev->add_option("--config", e_config, "JSON config file");
    ev->add_option("--task", e_task, "door, drawer, or cupboard");
    ev->add_option("--checkpoint", e_ckpt, "checkpoint directory from train");
    ev->add_option("--policy", e_policy, "diffusion, idql, or wbc (default from checkpoint)");
    ev->add_option("--id", e_id, "policy label used in reports");
    ev->add_option("--episodes", e_episodes, "evaluation episodes");
    ev->add_option("--seed-base", e_seed_base, "evaluation seed namespace base");
    ev->add_option("--init-sigma", e_sigma, "initial joint noise sigma");
    ev->add_option("--ema-alpha", e_alpha, "action smoothing coefficient in (0, 1]");
    ev->add_flag("--async", e_async, "asynchronous inference with --latency ticks");
    ev->add_option("--latency", e_latency, "inference latency in ticks");
    ev->add_option("--n-action-samples", e_nsamples, "idql candidate count");
    ev->add_option("--out", e_out, "write the JSON report here");
    ev->add_option("--csv", e_csv, "write a one-row CSV here");

    // report
    auto* rp = app.add_subcommand("report", "merge eval reports into markdown and CSV tables");
    std::vector<std::string> r_inputs;
    std::string r_md, r_csv;
    rp->add_option("inputs", r_inputs, "eval report JSON files")->required();
    rp->add_option("--out-md", r_md, "write the markdown table here");
    rp->add_option("--out-csv", r_csv, "write the CSV table here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            json j = load_config(g_config);
            merge(*gen, "--task", j, "task", g_task);
            merge(*gen, "--episodes", j, "episodes", g_episodes);
            merge(*gen, "--out", j, "out", g_out);
            merge(*gen, "--K", j, "K", g_K);
            merge(*gen, "--H", j, "H", g_H);
            merge(*gen, "--gamma", j, "gamma", g_gamma);
            if (g_task.empty()) throw std::invalid_argument("--task is required (flag or config)");
            return cmd_gen_data(g_task, g_episodes, g_seed, g_out, g_K, g_H, g_gamma);
        }
        if (tr->parsed()) {
            json j = load_config(t_config);
            merge(*tr, "--data", j, "data", t_data);
            merge(*tr, "--out", j, "out", t_out);
            TrainConfig cfg = config_from_json(j);
            cfg.seed = t_seed;
            if (tr->count("--baseline")) cfg.baseline = t_baseline;
            if (tr->count("--tau")) cfg.tau = t_tau;
            if (tr->count("--beta")) cfg.beta = t_beta;
            if (tr->count("--w-max")) cfg.w_max = t_wmax;
            if (tr->count("--gamma")) cfg.gamma = t_gamma;
            if (tr->count("--polyak")) cfg.polyak = t_polyak;
            if (tr->count("--batch")) cfg.batch_size = t_batch;
            if (tr->count("--lr-critic")) cfg.lr_critic = t_lr_c;
            if (tr->count("--lr-value")) cfg.lr_value = t_lr_v;
            if (tr->count("--lr-policy")) cfg.lr_policy = t_lr_p;
            if (tr->count("--critic-steps")) cfg.critic_steps = t_csteps;
            if (tr->count("--policy-steps")) cfg.policy_steps = t_psteps;
            if (tr->count("--K")) cfg.K = t_K;
            if (tr->count("--H")) cfg.H = t_H;
            if (tr->count("--diffusion-steps")) cfg.diffusion_steps = t_dsteps;
            if (tr->count("--critic-arch")) cfg.critic_arch = t_arch;
            if (t_no_qc) cfg.use_q_chunking = false;
            if (t_no_twin) cfg.twin_critic = false;
            return cmd_train(t_data, t_out, cfg);
        }
        if (ev->parsed()) {
            json j = load_config(e_config);
            EvalArgs a;
            merge(*ev, "--task", j, "task", e_task);
            merge(*ev, "--checkpoint", j, "checkpoint", e_ckpt);
            merge(*ev, "--policy", j, "policy", e_policy);
            merge(*ev, "--id", j, "id", e_id);
            merge(*ev, "--episodes", j, "episodes", e_episodes);
            merge(*ev, "--seed-base", j, "seed_base", e_seed_base);
            merge(*ev, "--init-sigma", j, "init_sigma", e_sigma);
            merge(*ev, "--latency", j, "latency", e_latency);
            merge(*ev, "--n-action-samples", j, "n_action_samples", e_nsamples);
            merge(*ev, "--out", j, "out", e_out);
            merge(*ev, "--csv", j, "csv", e_csv);
            if (!ev->count("--async") && j.contains("async")) e_async = j.at("async").get<bool>();
            a.alpha_given = ev->count("--ema-alpha") > 0;
            if (!a.alpha_given && j.contains("ema_alpha")) {
                e_alpha = j.at("ema_alpha").get<double>();
                a.alpha_given = true;
            }
            if (e_task.empty()) throw std::invalid_argument("--task is required (flag or config)");
            if (j.contains("wbc_params")) {
                const json& w = j.at("wbc_params");
                WbcParams p;
                p.pregrasp_threshold = w.value("pregrasp_threshold", p.pregrasp_threshold);
                p.grasp_threshold = w.value("grasp_threshold", p.grasp_threshold);
                p.articulation_step = w.value("articulation_step", p.articulation_step);
                p.ee_weight = w.value("ee_weight", p.ee_weight);
                p.base_weight = w.value("base_weight", p.base_weight);
                p.posture_weight = w.value("posture_weight", p.posture_weight);
                p.joint_noise_sigma = w.value("joint_noise_sigma", p.joint_noise_sigma);
                a.fixed_wbc = p;
            }
            a.task_str = e_task;
            a.checkpoint = e_ckpt;
            a.policy_kind = e_policy;
            a.id = e_id;
            a.out_json = e_out;
            a.out_csv = e_csv;
            a.n_action_samples = e_nsamples;
            a.ep.n = e_episodes;
            a.ep.seed_base = e_seed_base;
            a.ep.init_sigma = e_sigma;
            a.ep.ema_alpha = e_alpha;
            a.ep.async = e_async;
            a.ep.latency = e_latency;
            return cmd_eval(a);
        }
        if (rp->parsed()) return cmd_report(r_inputs, r_md, r_csv);
    } catch (const json::exception& e) {
        std::cerr << argv[0] << ": " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << argv[0] << ": " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << argv[0] << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << argv[0] << ": " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace wm
