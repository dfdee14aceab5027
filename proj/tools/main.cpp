// dualpath command-line entry point.
#include "dualpath/commands.hpp"
#include "dualpath/common.hpp"
#include "dualpath/config.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>

using namespace dualpath;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda_d, lambda_p;
    std::optional<std::string> channel_scale;
    std::optional<int> workers;
};

config::RunConfig resolve_config(const GlobalOpts& g) {
    config::RunConfig cfg = g.config_path.empty() ? config::default_config() : config::load_config(g.config_path);
    if (g.seed) cfg.seed = *g.seed;
    if (g.lambda_d) cfg.plan_base.weights.lambda_d = *g.lambda_d;
    if (g.lambda_p) cfg.plan_base.weights.lambda_p = *g.lambda_p;
    if (g.channel_scale) cfg.graph.scale_den = nn::parse_channel_scale(*g.channel_scale);
    if (g.workers) cfg.sweep_settings.workers = *g.workers;
    config::finalize(cfg);
    return cfg;
}

void add_global_flags(CLI::App* app, GlobalOpts& g) {
    app->add_option("--config", g.config_path, "run configuration JSON")->envname("DUALPATH_CONFIG");
    auto seed_opt = app->add_option_function<std::uint64_t>(
        "--seed", [&g](const std::uint64_t& v) { g.seed = v; }, "root seed override");
    seed_opt->envname("DUALPATH_SEED");
    app->add_option_function<double>(
        "--lambda-d", [&g](const double& v) { g.lambda_d = v; }, "distortion weight override");
    app->add_option_function<double>(
        "--lambda-p", [&g](const double& v) { g.lambda_p = v; }, "perceptual weight override");
    app->add_option_function<std::string>(
        "--channel-scale", [&g](const std::string& v) { g.channel_scale = v; },
        "channel scale fraction (1, 1/2, ... 1/32)");
    app->add_option_function<int>(
        "--workers", [&g](const int& v) { g.workers = v; }, "parallel sweep workers");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dual-path radar heart-sound to ECG research pipeline"};
    app.require_subcommand(1);

    GlobalOpts g;
    bool dry_run = false;
    std::string path_str = "direct", task_str = "subject_id";
    std::string risk_direct, risk_indirect;
    double risk_ch = std::nan(""), risk_m = 0.0, risk_const = 1.0;

    auto* prepare = app.add_subcommand("prepare", "generate or ingest records into windowed shards");
    add_global_flags(prepare, g);
    auto* pretrain = app.add_subcommand("pretrain", "autoencoder and discriminator pretraining");
    add_global_flags(pretrain, g);
    auto* train_base = app.add_subcommand("train-base", "composite-loss training of the indirect generator");
    add_global_flags(train_base, g);
    auto* finetune = app.add_subcommand("finetune", "downstream fine-tuning of one path on one task");
    add_global_flags(finetune, g);
    finetune->add_option("--path", path_str, "direct|indirect")->check(CLI::IsMember({"direct", "indirect"}));
    finetune->add_option("--task", task_str, "subject_id|bmi|sex|age|segmentation|bp");
    auto* eval = app.add_subcommand("eval", "evaluate both paths on the test split");
    add_global_flags(eval, g);
    auto* sweepc = app.add_subcommand("sweep", "loss-weight sweep over the indirect path");
    add_global_flags(sweepc, g);
    sweepc->add_flag("--dry-run", dry_run, "print the resolved grid and exit");
    auto* resolution = app.add_subcommand("resolution", "channel-count resolution study");
    add_global_flags(resolution, g);
    auto* report = app.add_subcommand("report", "phase-annotated report or transfer-risk dominance");
    add_global_flags(report, g);
    report->add_option("--risk", risk_direct, "direct-path profile JSON (enables risk mode)");
    report->add_option("--risk-indirect", risk_indirect, "indirect-path profile JSON");
    report->add_option("--ch", risk_ch, "shared capacity C(H) override");
    report->add_option("--m", risk_m, "target-task sample count for the TLRisk bound");
    report->add_option("--constant", risk_const, "bound constant (absorbs polylog factors)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (report->parsed() && !risk_direct.empty()) {
            if (risk_indirect.empty())
                throw ConfigError("report --risk needs both profiles: --risk direct.json --risk-indirect indirect.json");
            return cmd::cmd_risk_report(risk_direct, risk_indirect, risk_ch, risk_m, risk_const, std::cout);
        }
        config::RunConfig cfg = resolve_config(g);
        if (prepare->parsed()) return cmd::cmd_prepare(cfg, std::cout);
        if (pretrain->parsed()) return cmd::cmd_pretrain(cfg, std::cout);
        if (train_base->parsed()) return cmd::cmd_train_base(cfg, std::cout);
        if (finetune->parsed())
            return cmd::cmd_finetune(cfg, protocol::path_from_name(path_str), tasks::task_from_name(task_str),
                                     std::cout);
        if (eval->parsed()) return cmd::cmd_eval(cfg, std::cout);
        if (sweepc->parsed()) return cmd::cmd_sweep(cfg, dry_run, std::cout);
        if (resolution->parsed()) return cmd::cmd_resolution(cfg, std::cout);
        if (report->parsed()) return cmd::cmd_report(cfg, std::cout);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const StageOrderError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
