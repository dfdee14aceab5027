#include "dualpath/config.hpp"

#include <nlohmann/json.hpp>

#include <set>

namespace dualpath::config {

using json = nlohmann::json;

namespace {

protocol::StagePlan default_plan(protocol::Stage stage) {
    protocol::StagePlan p;
    p.stage = stage;
    switch (stage) {
        case protocol::Stage::pretrain_hs:
        case protocol::Stage::pretrain_ecg:
            p.epochs = 60;
            p.learning_rate = 2e-3;
            break;
        case protocol::Stage::pretrain_disc:
            p.epochs = 60;
            p.learning_rate = 2e-3;
            p.augment_shift = 1024;
            p.augment_noise_std = 0.2;
            break;
        case protocol::Stage::base_task:
            p.epochs = 30;
            p.learning_rate = 2e-3;
            p.weights = {1.0, 1.0};
            break;
        case protocol::Stage::finetune_direct:
        case protocol::Stage::finetune_indirect:
            p.epochs = 30;
            p.learning_rate = 1e-3;
            break;
    }
    return p;
}

void parse_plan(const json& j, protocol::StagePlan& p) {
    p.epochs = j.value("epochs", p.epochs);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.learning_rate = j.value("learning_rate", p.learning_rate);
    p.val_fraction = j.value("val_fraction", p.val_fraction);
    p.patience = j.value("patience", p.patience);
    p.grad_clip = j.value("grad_clip", p.grad_clip);
    p.augment_shift = j.value("augment_shift", p.augment_shift);
    p.augment_noise_std = j.value("augment_noise_std", p.augment_noise_std);
    if (j.contains("frozen_blocks")) p.frozen_blocks = j["frozen_blocks"].get<std::vector<std::string>>();
    if (j.contains("lambda_d")) p.weights.lambda_d = j["lambda_d"].get<double>();
    if (j.contains("lambda_p")) p.weights.lambda_p = j["lambda_p"].get<double>();
    if (p.epochs < 1 || p.batch_size < 1 || !(p.learning_rate > 0.0))
        throw ConfigError("stage plan: epochs/batch_size/learning_rate out of range");
}

json plan_to_json(const protocol::StagePlan& p, bool with_weights) {
    json j;
    j["epochs"] = p.epochs;
    j["batch_size"] = p.batch_size;
    j["learning_rate"] = p.learning_rate;
    j["val_fraction"] = p.val_fraction;
    j["patience"] = p.patience;
    j["grad_clip"] = p.grad_clip;
    j["augment_shift"] = p.augment_shift;
    j["augment_noise_std"] = p.augment_noise_std;
    j["frozen_blocks"] = p.frozen_blocks;
    if (with_weights) {
        j["lambda_d"] = p.weights.lambda_d;
        j["lambda_p"] = p.weights.lambda_p;
    }
    return j;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& [k, v] : j.items())
        if (allowed.find(k) == allowed.end())
            throw ConfigError("config: unknown key \"" + k + "\" in " + where);
}

}  // namespace

RunConfig default_config() {
    RunConfig cfg;
    cfg.graph.scale_den = 8;
    cfg.plan_pretrain_hs = default_plan(protocol::Stage::pretrain_hs);
    cfg.plan_pretrain_ecg = default_plan(protocol::Stage::pretrain_ecg);
    cfg.plan_pretrain_disc = default_plan(protocol::Stage::pretrain_disc);
    cfg.plan_base = default_plan(protocol::Stage::base_task);
    cfg.plan_finetune_direct = default_plan(protocol::Stage::finetune_direct);
    cfg.plan_finetune_indirect = default_plan(protocol::Stage::finetune_indirect);

    cfg.sweep_settings.base_plan = default_plan(protocol::Stage::base_task);
    cfg.sweep_settings.base_plan.epochs = 12;
    cfg.sweep_settings.base_plan.patience = 0;
    cfg.sweep_settings.downstream_plan = default_plan(protocol::Stage::finetune_indirect);
    cfg.sweep_settings.downstream_plan.epochs = 12;
    return cfg;
}

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    check_keys(j, {"seed", "out_dir", "data", "filter", "graph", "stages", "sweep", "tasks",
                   "resolution_scales"},
               "top level");

    RunConfig cfg = default_config();
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();

    if (j.contains("data")) {
        const json& d = j["data"];
        check_keys(d, {"source", "synth", "ingest_dir"}, "data");
        const std::string src = d.value("source", "synth");
        if (src == "synth") cfg.source = DataSource::synth;
        else if (src == "ingest") cfg.source = DataSource::ingest;
        else throw ConfigError("config: data.source must be \"synth\" or \"ingest\"");
        if (d.contains("synth")) {
            const json& s = d["synth"];
            check_keys(s, {"n_subjects", "seconds_per_subject", "heart_rate_min_hz", "heart_rate_max_hz",
                           "hr_variability", "noise_std", "domain_shift"},
                       "data.synth");
            cfg.synth_cfg.n_subjects = s.value("n_subjects", cfg.synth_cfg.n_subjects);
            cfg.synth_cfg.seconds_per_subject = s.value("seconds_per_subject", cfg.synth_cfg.seconds_per_subject);
            cfg.synth_cfg.heart_rate_min_hz = s.value("heart_rate_min_hz", cfg.synth_cfg.heart_rate_min_hz);
            cfg.synth_cfg.heart_rate_max_hz = s.value("heart_rate_max_hz", cfg.synth_cfg.heart_rate_max_hz);
            cfg.synth_cfg.hr_variability = s.value("hr_variability", cfg.synth_cfg.hr_variability);
            cfg.synth_cfg.noise_std = s.value("noise_std", cfg.synth_cfg.noise_std);
            if (s.contains("domain_shift"))
                cfg.synth_cfg.domain_shift = synth::domain_shift_from_name(s["domain_shift"].get<std::string>());
        }
        if (d.contains("ingest_dir")) cfg.ingest_dir = d["ingest_dir"].get<std::string>();
        if (cfg.source == DataSource::ingest && cfg.ingest_dir.empty())
            throw ConfigError("config: data.ingest_dir required for source=ingest");
    }

    if (j.contains("filter")) {
        const json& f = j["filter"];
        check_keys(f, {"hs_low", "hs_high", "ecg_low", "ecg_high", "bp_low", "bp_high"}, "filter");
        cfg.filter.hs_low = f.value("hs_low", cfg.filter.hs_low);
        cfg.filter.hs_high = f.value("hs_high", cfg.filter.hs_high);
        cfg.filter.ecg_low = f.value("ecg_low", cfg.filter.ecg_low);
        cfg.filter.ecg_high = f.value("ecg_high", cfg.filter.ecg_high);
        cfg.filter.bp_low = f.value("bp_low", cfg.filter.bp_low);
        cfg.filter.bp_high = f.value("bp_high", cfg.filter.bp_high);
    }

    if (j.contains("graph")) {
        const json& g = j["graph"];
        check_keys(g, {"channel_scale", "base_widths", "disc_base_widths", "kernel", "perceptual_multilayer"},
                   "graph");
        if (g.contains("channel_scale")) {
            if (g["channel_scale"].is_string())
                cfg.graph.scale_den = nn::parse_channel_scale(g["channel_scale"].get<std::string>());
            else
                cfg.graph.scale_den = nn::parse_channel_scale(std::to_string(g["channel_scale"].get<double>()));
        }
        if (g.contains("base_widths")) cfg.graph.base_widths = g["base_widths"].get<std::vector<int>>();
        if (g.contains("disc_base_widths"))
            cfg.graph.disc_base_widths = g["disc_base_widths"].get<std::vector<int>>();
        cfg.graph.kernel = g.value("kernel", cfg.graph.kernel);
        cfg.graph.perceptual_multilayer = g.value("perceptual_multilayer", cfg.graph.perceptual_multilayer);
    }
    cfg.graph.validate();

    if (j.contains("stages")) {
        const json& s = j["stages"];
        check_keys(s, {"pretrain_hs", "pretrain_ecg", "pretrain_disc", "base_task", "finetune_direct",
                       "finetune_indirect"},
                   "stages");
        if (s.contains("pretrain_hs")) parse_plan(s["pretrain_hs"], cfg.plan_pretrain_hs);
        if (s.contains("pretrain_ecg")) parse_plan(s["pretrain_ecg"], cfg.plan_pretrain_ecg);
        if (s.contains("pretrain_disc")) parse_plan(s["pretrain_disc"], cfg.plan_pretrain_disc);
        if (s.contains("base_task")) parse_plan(s["base_task"], cfg.plan_base);
        if (s.contains("finetune_direct")) parse_plan(s["finetune_direct"], cfg.plan_finetune_direct);
        if (s.contains("finetune_indirect")) {
            const json& fi = s["finetune_indirect"];
            parse_plan(fi, cfg.plan_finetune_indirect);
            if (fi.contains("source"))
                cfg.indirect_source = protocol::source_from_name(fi["source"].get<std::string>());
            cfg.freeze_trunk = fi.value("freeze_trunk", cfg.freeze_trunk);
        }
        if (s.contains("finetune_direct"))
            cfg.freeze_direct_encoder = s["finetune_direct"].value("freeze_encoder", false);
    }

    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        check_keys(s, {"leg1_from", "leg1_to", "leg2_from", "leg2_to", "points_per_decade",
                       "include_representative", "knn_k", "smooth_window", "base", "downstream_tasks",
                       "downstream", "workers"},
                   "sweep");
        cfg.grid.leg1_from = s.value("leg1_from", cfg.grid.leg1_from);
        cfg.grid.leg1_to = s.value("leg1_to", cfg.grid.leg1_to);
        cfg.grid.leg2_from = s.value("leg2_from", cfg.grid.leg2_from);
        cfg.grid.leg2_to = s.value("leg2_to", cfg.grid.leg2_to);
        cfg.grid.points_per_decade = s.value("points_per_decade", cfg.grid.points_per_decade);
        cfg.grid.include_representative = s.value("include_representative", cfg.grid.include_representative);
        cfg.sweep_settings.knn_k = s.value("knn_k", cfg.sweep_settings.knn_k);
        cfg.sweep_settings.smooth_window = s.value("smooth_window", cfg.sweep_settings.smooth_window);
        cfg.sweep_settings.workers = s.value("workers", cfg.sweep_settings.workers);
        if (s.contains("base")) parse_plan(s["base"], cfg.sweep_settings.base_plan);
        if (s.contains("downstream")) parse_plan(s["downstream"], cfg.sweep_settings.downstream_plan);
        if (s.contains("downstream_tasks")) {
            cfg.sweep_settings.downstream_tasks.clear();
            for (const auto& t : s["downstream_tasks"])
                cfg.sweep_settings.downstream_tasks.push_back(tasks::task_from_name(t.get<std::string>()));
        }
    }
    cfg.sweep_settings.perceptual_multilayer = cfg.graph.perceptual_multilayer;

    if (j.contains("tasks")) {
        cfg.task_list.clear();
        for (const auto& t : j["tasks"]) cfg.task_list.push_back(tasks::task_from_name(t.get<std::string>()));
        if (cfg.task_list.empty()) throw ConfigError("config: tasks must not be empty");
    }

    if (j.contains("resolution_scales")) {
        cfg.resolution_scales.clear();
        for (const auto& s : j["resolution_scales"]) {
            const int den = s.is_string() ? nn::parse_channel_scale(s.get<std::string>())
                                          : nn::parse_channel_scale(std::to_string(s.get<double>()));
            cfg.resolution_scales.push_back(den);
        }
    }

    finalize(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) { return config_from_json(read_file(path)); }

std::string RunConfig::canonical_json() const {
    json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir.string();
    j["data"]["source"] = source == DataSource::synth ? "synth" : "ingest";
    j["data"]["synth"] = {{"n_subjects", synth_cfg.n_subjects},
                          {"seconds_per_subject", synth_cfg.seconds_per_subject},
                          {"heart_rate_min_hz", synth_cfg.heart_rate_min_hz},
                          {"heart_rate_max_hz", synth_cfg.heart_rate_max_hz},
                          {"hr_variability", synth_cfg.hr_variability},
                          {"noise_std", synth_cfg.noise_std},
                          {"domain_shift", synth::domain_shift_name(synth_cfg.domain_shift)}};
    j["data"]["ingest_dir"] = ingest_dir.string();
    j["filter"] = {{"hs_low", filter.hs_low},   {"hs_high", filter.hs_high}, {"ecg_low", filter.ecg_low},
                   {"ecg_high", filter.ecg_high}, {"bp_low", filter.bp_low},  {"bp_high", filter.bp_high}};
    j["graph"] = json::parse(graph.to_json());
    j["stages"]["pretrain_hs"] = plan_to_json(plan_pretrain_hs, false);
    j["stages"]["pretrain_ecg"] = plan_to_json(plan_pretrain_ecg, false);
    j["stages"]["pretrain_disc"] = plan_to_json(plan_pretrain_disc, false);
    j["stages"]["base_task"] = plan_to_json(plan_base, true);
    j["stages"]["finetune_direct"] = plan_to_json(plan_finetune_direct, false);
    j["stages"]["finetune_indirect"] = plan_to_json(plan_finetune_indirect, false);
    j["stages"]["finetune_indirect"]["source"] = protocol::source_name(indirect_source);
    j["stages"]["finetune_indirect"]["freeze_trunk"] = freeze_trunk;
    j["stages"]["finetune_direct"]["freeze_encoder"] = freeze_direct_encoder;
    j["sweep"] = {{"leg1_from", grid.leg1_from},
                  {"leg1_to", grid.leg1_to},
                  {"leg2_from", grid.leg2_from},
                  {"leg2_to", grid.leg2_to},
                  {"points_per_decade", grid.points_per_decade},
                  {"include_representative", grid.include_representative},
                  {"knn_k", sweep_settings.knn_k},
                  {"smooth_window", sweep_settings.smooth_window},
                  {"workers", sweep_settings.workers}};
    j["sweep"]["base"] = plan_to_json(sweep_settings.base_plan, false);
    j["sweep"]["downstream"] = plan_to_json(sweep_settings.downstream_plan, false);
    json dt = json::array();
    for (auto t : sweep_settings.downstream_tasks) dt.push_back(tasks::task_name(t));
    j["sweep"]["downstream_tasks"] = dt;
    json tl = json::array();
    for (auto t : task_list) tl.push_back(tasks::task_name(t));
    j["tasks"] = tl;
    j["resolution_scales"] = resolution_scales;
    return j.dump();
}

void finalize(RunConfig& cfg) {
    cfg.synth_cfg.seed = derive_seed(cfg.seed, "data.synth");
    cfg.plan_pretrain_hs.stage = protocol::Stage::pretrain_hs;
    cfg.plan_pretrain_ecg.stage = protocol::Stage::pretrain_ecg;
    cfg.plan_pretrain_disc.stage = protocol::Stage::pretrain_disc;
    cfg.plan_base.stage = protocol::Stage::base_task;
    cfg.plan_finetune_direct.stage = protocol::Stage::finetune_direct;
    cfg.plan_finetune_indirect.stage = protocol::Stage::finetune_indirect;
    cfg.plan_pretrain_hs.seed = derive_seed(cfg.seed, "stage.pretrain_hs");
    cfg.plan_pretrain_ecg.seed = derive_seed(cfg.seed, "stage.pretrain_ecg");
    cfg.plan_pretrain_disc.seed = derive_seed(cfg.seed, "stage.pretrain_disc");
    cfg.plan_base.seed = derive_seed(cfg.seed, "stage.base_task");
    cfg.plan_finetune_direct.seed = derive_seed(cfg.seed, "stage.finetune_direct");
    cfg.plan_finetune_indirect.seed = derive_seed(cfg.seed, "stage.finetune_indirect");
    cfg.sweep_settings.base_plan.seed = derive_seed(cfg.seed, "stage.sweep_base");
    cfg.sweep_settings.downstream_plan.seed = derive_seed(cfg.seed, "stage.sweep_downstream");
    cfg.sweep_settings.perceptual_multilayer = cfg.graph.perceptual_multilayer;
    cfg.plan_base.weights.validate();
    cfg.config_hash = hash_hex(fnv1a64(cfg.canonical_json()));
}

}  // namespace dualpath::config
