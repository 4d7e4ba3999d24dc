#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "semidrd/semidrd.hpp"

namespace fs = std::filesystem;
using namespace semidrd;

namespace {

void apply_overrides(TrainConfig& cfg, const std::vector<std::string>& sets) {
    for (const auto& kv : sets) {
        const size_t eq = kv.find('=');
        const size_t dot = kv.find('.');
        if (eq == std::string::npos || dot == std::string::npos || dot > eq)
            throw ConfigError("--set expects section.key=value, got '" + kv + "'");
        config_set(cfg, kv.substr(0, dot), kv.substr(dot + 1, eq - dot - 1), kv.substr(eq + 1));
    }
}

void apply_env_seed(TrainConfig& cfg) {
    if (const char* s = std::getenv("SEMIDRD_SEED")) cfg.seed = std::stoull(s);
}

int cmd_synth(const std::string& out, int count, int unlabeled, int size, uint64_t seed) {
    if (size < 16) throw ConfigError("--size must be >= 16");
    write_synth_dataset(out, count, unlabeled, size, seed);
    std::cout << "wrote " << count << " labeled pairs + " << unlabeled << " unlabeled images to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& labeled_manifest,
              const std::string& unlabeled_manifest, const std::string& out, std::optional<int> epochs,
              std::optional<uint64_t> seed, bool supervised_only, const std::string& resume_path,
              const std::vector<std::string>& sets) {
    std::optional<Checkpoint> resume;
    TrainConfig cfg;
    if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        cfg = config_from_ini(resume->config_text);
    } else if (!config_path.empty()) {
        cfg = load_config(config_path);
    }
    apply_overrides(cfg, sets);
    if (epochs) cfg.epochs = *epochs;
    if (seed) cfg.seed = *seed;
    apply_env_seed(cfg);
    if (supervised_only) {
        cfg.semi_supervised = false;
        cfg.lambda_unsup = 0;
    }

    Dataset data = load_dataset(labeled_manifest);
    if (!unlabeled_manifest.empty()) {
        Dataset extra = load_dataset(unlabeled_manifest);
        for (auto& u : extra.unlabeled) data.unlabeled.push_back(std::move(u));
        for (auto& l : extra.labeled) data.labeled.push_back(std::move(l));
    }
    if (cfg.semi_supervised && data.unlabeled.empty()) {
        std::cerr << "note: no unlabeled images available, training supervised-only\n";
        cfg.semi_supervised = false;
    }
    cfg.validate();

    fs::create_directories(out);
    {
        std::ofstream echo(fs::path(out) / "config.echo");
        echo << config_to_ini(cfg);
    }
    const fs::path loss_path = fs::path(out) / "loss.csv";
    const bool fresh_log = !resume || !fs::exists(loss_path) || fs::file_size(loss_path) == 0;
    std::ofstream loss_csv(loss_path, resume ? std::ios::app : std::ios::out);
    if (fresh_log) loss_csv << LossReport::csv_header() << "\n";

    TrainCallbacks cb;
    cb.on_step = [&](const LossReport& r) {
        loss_csv << r.csv_row() << "\n";
        loss_csv.flush();
    };
    cb.on_epoch = [&](int epoch, const Checkpoint& ck) {
        save_checkpoint(ck, (fs::path(out) / ("ck-epoch-" + std::to_string(epoch))).string());
    };

    train(cfg, data.labeled, data.unlabeled, cb, resume ? &*resume : nullptr);
    std::cout << "training finished; artifacts in " << out << "\n";
    return 0;
}

std::pair<DerainModels<float>, TrainConfig> models_from_checkpoint(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    TrainConfig cfg = config_from_ini(ck.config_text);
    DerainModels<float> models = build_models<float>(cfg);
    restore_models(ck, models);
    return {std::move(models), std::move(cfg)};
}

int cmd_derain(const std::string& ck_path, const std::vector<std::string>& inputs, const std::string& out) {
    auto [models, cfg] = models_from_checkpoint(ck_path);
    fs::create_directories(out);
    for (const auto& in : inputs) {
        Tensor<float> img = read_png(in);
        Tensor<float> res = derain(img, models);
        const std::string name = fs::path(in).stem().string() + "-derained.png";
        write_png((fs::path(out) / name).string(), res);
        std::cout << in << " -> " << (fs::path(out) / name).string() << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ck_path, const std::string& config_path, const std::string& manifest_path,
             const std::string& out, const std::vector<std::string>& sets) {
    DerainModels<float> models;
    if (!ck_path.empty()) {
        models = models_from_checkpoint(ck_path).first;
    } else {
        TrainConfig cfg;
        if (!config_path.empty()) cfg = load_config(config_path);
        apply_overrides(cfg, sets);
        apply_env_seed(cfg);
        models = build_models<float>(cfg);
    }
    Manifest m = load_manifest(manifest_path);
    if (m.labeled.empty()) throw ConfigError("eval needs labeled (rainy, clean) pairs in the manifest");
    Dataset data = load_dataset(m);
    std::vector<std::string> ids;
    for (const auto& e : m.labeled) ids.push_back(fs::path(e.rainy).stem().string());
    MetricsReport rep = evaluate(models, data.labeled, ids);
    fs::create_directories(out);
    {
        std::ofstream f(fs::path(out) / "metrics.csv");
        f << rep.to_csv();
    }
    std::cout << rep.to_csv();
    return 0;
}

int cmd_inspect_rf(const std::vector<int>& dilations, int blocks) {
    std::cout << "depth  rf(dilations=";
    for (size_t i = 0; i < dilations.size(); ++i) std::cout << (i ? "," : "") << dilations[i];
    std::cout << ")  rf(single-stage, dilation=7)\n";
    for (int d = 0; d <= blocks + 2; ++d)
        std::cout << d << "  " << receptive_field(d, dilations, blocks) << "  "
                  << receptive_field_single_stage(d, 7, blocks) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Semi-supervised detail-recovery deraining toolkit"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "generate a synthetic rainy dataset");
    std::string synth_out;
    int synth_count = 8, synth_unlabeled = 0, synth_size = 64;
    uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", synth_count, "labeled (rainy, clean) pairs");
    synth->add_option("--unlabeled", synth_unlabeled, "unlabeled rainy images");
    synth->add_option("--size", synth_size, "image side length");
    synth->add_option("--seed", synth_seed, "generator seed");

    auto* tr = app.add_subcommand("train", "train the deraining networks");
    std::string tr_config, tr_labeled, tr_unlabeled, tr_out, tr_resume;
    std::optional<int> tr_epochs;
    std::optional<uint64_t> tr_seed;
    bool tr_suponly = false;
    std::vector<std::string> tr_sets;
    tr->add_option("--config", tr_config, "config file (key=value sections)");
    tr->add_option("--labeled", tr_labeled, "dataset manifest with labeled pairs")->required();
    tr->add_option("--unlabeled", tr_unlabeled, "extra manifest contributing unlabeled images");
    tr->add_option("--out", tr_out, "run directory")->required();
    tr->add_option("--epochs", tr_epochs, "override train.epochs");
    tr->add_option("--seed", tr_seed, "override data.seed");
    tr->add_flag("--supervised-only", tr_suponly, "disable the unsupervised phase");
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");
    tr->add_option("--set", tr_sets, "config override, section.key=value")->take_all();

    auto* dr = app.add_subcommand("derain", "derain images with a trained checkpoint");
    std::string dr_ck, dr_out;
    std::vector<std::string> dr_inputs;
    dr->add_option("--checkpoint", dr_ck, "checkpoint file")->required();
    dr->add_option("--out", dr_out, "output directory")->required();
    dr->add_option("inputs", dr_inputs, "input PNG files")->required();

    auto* ev = app.add_subcommand("eval", "compute PSNR/SSIM over a labeled manifest");
    std::string ev_ck, ev_config, ev_manifest, ev_out;
    std::vector<std::string> ev_sets;
    ev->add_option("--checkpoint", ev_ck, "checkpoint file (omit for a fresh identity-init model)");
    ev->add_option("--config", ev_config, "config for the fresh-model path");
    ev->add_option("--manifest", ev_manifest, "dataset manifest with labeled pairs")->required();
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->add_option("--set", ev_sets, "config override, section.key=value")->take_all();

    auto* rf = app.add_subcommand("inspect-rf", "print receptive-field growth by depth");
    std::vector<int> rf_dil = {1, 3, 5};
    int rf_blocks = 16;
    rf->add_option("--dilations", rf_dil, "dilation set")->delimiter(',');
    rf->add_option("--blocks", rf_blocks, "dilated block count");

    try {
        app.parse(argc, argv);
        if (*synth) return cmd_synth(synth_out, synth_count, synth_unlabeled, synth_size, synth_seed);
        if (*tr)
            return cmd_train(tr_config, tr_labeled, tr_unlabeled, tr_out, tr_epochs, tr_seed, tr_suponly, tr_resume,
                             tr_sets);
        if (*dr) return cmd_derain(dr_ck, dr_inputs, dr_out);
        if (*ev) return cmd_eval(ev_ck, ev_config, ev_manifest, ev_out, ev_sets);
        if (*rf) return cmd_inspect_rf(rf_dil, rf_blocks);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
