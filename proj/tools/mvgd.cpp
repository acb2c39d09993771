// Command-line front end: synth / train / infer / eval / stats / flow-precompute.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <random>

#include "mvgd/trainer.hpp"

using namespace mvgd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonModelOpts {
    std::string config_path;
    bool tiny = false;
    std::string ablate = "G";
    uint64_t seed = 0;  // 0: keep the config seed
};

void add_model_opts(CLI::App* cmd, CommonModelOpts& o) {
    cmd->add_option("--config", o.config_path, "model config file (key=value lines)");
    cmd->add_flag("--tiny", o.tiny, "use the small preset (64px, narrow channels)");
    cmd->add_option("--ablate", o.ablate, "ablation variant letter A..G")
        ->check(CLI::IsMember({"A", "B", "C", "D", "E", "F", "G"}));
    cmd->add_option("--seed", o.seed, "override the weight-init seed");
}

ModelConfig resolve_config(const CommonModelOpts& o) {
    ModelConfig cfg;
    if (!o.config_path.empty()) cfg = load_config_file(o.config_path);
    else if (o.tiny) cfg = ModelConfig::tiny();
    cfg.ablation = ablation_variant(o.ablate[0]);
    if (o.seed != 0) cfg.init_seed = o.seed;
    return validate_config(cfg);
}

// The files provider reads root/<id>/flow; it is instantiated per video.
std::unique_ptr<FlowProvider> provider_for_video(const std::string& kind,
                                                 const std::string& arg,
                                                 const std::string& data_root,
                                                 const std::vector<VideoData>& all,
                                                 const VideoData& video) {
    if (kind == "synthetic") {
        auto p = std::make_unique<SyntheticOracleProvider>();
        *p = oracle_from_videos(all);
        return p;
    }
    if (kind == "files")
        return std::make_unique<PrecomputedFlowProvider>(
            (fs::path(data_root) / video.id / "flow").string());
    return make_flow_provider(kind, arg);
}

json report_to_json(const MetricsReport& r) {
    return json{{"iou", r.iou},         {"f_beta", r.f_beta},
                {"mae", r.mae},         {"ber", r.ber},
                {"acc", r.acc},         {"iou_pooled", r.iou_pooled},
                {"f_beta_pooled", r.f_beta_pooled}, {"ber_pooled", r.ber_pooled},
                {"acc_pooled", r.acc_pooled},       {"n_frames", r.n_frames}};
}

void write_json(const json& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream f(path);
    check(bool(f), "cannot write " + path);
    f << j.dump(2) << "\n";
}

int run_synth(const std::string& out, int clips, int frames, int size, double kappa,
              double blend, uint64_t seed) {
    check(clips > 0 && frames >= 3, "synth: need clips > 0 and frames >= 3");
    std::mt19937_64 eng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
    std::uniform_int_distribution<int> pos(size / 8, size / 4);
    std::uniform_int_distribution<int> len(size / 3, size / 2);
    for (int i = 0; i < clips; ++i) {
        SynthSpec s;
        s.h = s.w = size;
        s.n_frames = frames;
        double a = angle(eng);
        double speed = 3.0 + 3.0 * std::uniform_real_distribution<double>(0, 1)(eng);
        // keep velocities on the float grid so .flo storage is lossless
        s.bg_u = double(float(speed * std::cos(a)));
        s.bg_v = double(float(speed * std::sin(a)));
        s.kappa = kappa;
        s.blend = blend;
        s.rect_y = pos(eng);
        s.rect_x = pos(eng);
        s.rect_h = std::min(len(eng), size - s.rect_y - 2);
        s.rect_w = std::min(len(eng), size - s.rect_x - 2);
        s.seed = seed * 1000003ull + uint64_t(i);
        SynthClip clip = synth_clip(s);
        char name[32];
        std::snprintf(name, sizeof(name), "video_%04d", i);
        persist_clip(clip, (fs::path(out) / name).string());
    }
    std::cout << "wrote " << clips << " clips to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"motion-aware glass surface detection over video"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out = "data";
    int synth_clips = 8, synth_frames = 3, synth_size = 64;
    double synth_kappa = 0.5;
    double synth_blend = 0.45;
    uint64_t synth_seed = 1;
    synth->add_option("--out", synth_out, "output dataset root")->required();
    synth->add_option("--clips", synth_clips, "number of clips");
    synth->add_option("--frames", synth_frames, "frames per clip");
    synth->add_option("--size", synth_size, "square frame size");
    synth->add_option("--kappa", synth_kappa, "in-glass slowdown ratio");
    synth->add_option("--blend", synth_blend, "moving-layer alpha over the static glass plane");
    synth->add_option("--seed", synth_seed, "generator seed");

    // train
    auto* train = app.add_subcommand("train", "train a model");
    CommonModelOpts train_model_opts;
    add_model_opts(train, train_model_opts);
    std::string train_data, train_out = "model.ckpt", train_resume, train_log;
    std::string train_provider = "synthetic", train_provider_arg;
    int train_epochs = 1;
    uint64_t train_order_seed = 42;
    double train_lr = 1e-4;
    int64_t train_max_steps = -1;
    train->add_option("--data", train_data, "dataset root")->required();
    train->add_option("--out", train_out, "checkpoint output path");
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--log", train_log, "loss log file (default: stdout)");
    train->add_option("--flow-provider", train_provider, "synthetic | files | external")
        ->check(CLI::IsMember({"synthetic", "files", "external"}));
    train->add_option("--provider-arg", train_provider_arg, "external command");
    train->add_option("--epochs", train_epochs, "training epochs");
    train->add_option("--order-seed", train_order_seed, "clip shuffling seed");
    train->add_option("--lr", train_lr, "learning rate");
    train->add_option("--max-steps", train_max_steps, "stop after N optimizer steps");

    // infer
    auto* infer = app.add_subcommand("infer", "predict masks for every video");
    CommonModelOpts infer_model_opts;
    add_model_opts(infer, infer_model_opts);
    std::string infer_data, infer_ckpt, infer_out = "preds";
    std::string infer_provider = "synthetic", infer_provider_arg;
    infer->add_option("--data", infer_data, "dataset root")->required();
    infer->add_option("--ckpt", infer_ckpt, "checkpoint path")->required();
    infer->add_option("--out", infer_out, "prediction output root");
    infer->add_option("--flow-provider", infer_provider, "synthetic | files | external")
        ->check(CLI::IsMember({"synthetic", "files", "external"}));
    infer->add_option("--provider-arg", infer_provider_arg, "external command");

    // eval
    auto* eval = app.add_subcommand("eval", "score a model against ground truth");
    CommonModelOpts eval_model_opts;
    add_model_opts(eval, eval_model_opts);
    std::string eval_data, eval_ckpt, eval_json;
    std::string eval_provider = "synthetic", eval_provider_arg;
    bool eval_baseline = false;
    eval->add_option("--data", eval_data, "dataset root")->required();
    eval->add_option("--ckpt", eval_ckpt, "checkpoint path");
    eval->add_option("--json", eval_json, "metrics JSON output path (default: stdout)");
    eval->add_option("--flow-provider", eval_provider, "synthetic | files | external")
        ->check(CLI::IsMember({"synthetic", "files", "external"}));
    eval->add_option("--provider-arg", eval_provider_arg, "external command");
    eval->add_flag("--flow-threshold-baseline", eval_baseline,
                   "score the parameter-free flow-magnitude baseline instead");

    // stats
    auto* stats = app.add_subcommand("stats", "dataset statistics");
    std::string stats_data, stats_json, stats_heatmap;
    stats->add_option("--data", stats_data, "dataset root")->required();
    stats->add_option("--json", stats_json, "JSON output path (default: stdout)");
    stats->add_option("--heatmap", stats_heatmap, "mask location heatmap PNG path");

    // flow-precompute
    auto* flowpc = app.add_subcommand("flow-precompute", "fill flow/ dirs via a provider");
    std::string fpc_data, fpc_provider = "external", fpc_arg;
    flowpc->add_option("--data", fpc_data, "dataset root")->required();
    flowpc->add_option("--flow-provider", fpc_provider, "synthetic | external")
        ->check(CLI::IsMember({"synthetic", "external"}));
    flowpc->add_option("--provider-arg", fpc_arg, "external command");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*synth)
            return run_synth(synth_out, synth_clips, synth_frames, synth_size, synth_kappa,
                             synth_blend, synth_seed);

        if (*train) {
            ModelConfig cfg = resolve_config(train_model_opts);
            auto videos = load_dataset(train_data);
            auto clips = windows_from_videos(videos);
            MvgdNet net(cfg);
            OptimConfig oc;
            oc.lr = train_lr;
            AdamW opt(net.params(), oc);
            if (!train_resume.empty()) {
                OptimizerBlob blob;
                if (load_checkpoint(net, train_resume, &blob)) opt.restore(blob);
            }
            // synthetic and files both serve the fields stored with the dataset;
            // external shells out per frame pair
            std::unique_ptr<FlowProvider> provider;
            SyntheticOracleProvider oracle;
            FlowProvider* prov = nullptr;
            if (train_provider == "external") {
                provider = make_flow_provider("external", train_provider_arg);
                prov = provider.get();
            } else {
                oracle = oracle_from_videos(videos);
                prov = &oracle;
            }
            TrainOptions topt;
            topt.epochs = train_epochs;
            topt.seed = train_order_seed;
            topt.max_steps = train_max_steps;
            std::ofstream logf;
            if (!train_log.empty()) {
                logf.open(train_log);
                check(bool(logf), "cannot write " + train_log);
                topt.log = &logf;
            } else {
                topt.log = &std::cout;
            }
            TrainResult res = train_model(net, clips, *prov, opt, topt);
            OptimizerBlob blob = opt.blob();
            save_checkpoint(net, train_out, &blob);
            std::cout << "trained " << res.steps << " steps, final loss " << res.last_loss
                      << ", saved " << train_out << "\n";
            return 0;
        }

        if (*infer || *eval) {
            bool do_eval = bool(*eval);
            const CommonModelOpts& mo = do_eval ? eval_model_opts : infer_model_opts;
            std::string data = do_eval ? eval_data : infer_data;
            std::string ckpt = do_eval ? eval_ckpt : infer_ckpt;
            std::string pkind = do_eval ? eval_provider : infer_provider;
            std::string parg = do_eval ? eval_provider_arg : infer_provider_arg;
            auto videos = load_dataset(data);

            if (do_eval && eval_baseline) {
                // parameter-free oracle baseline: threshold the flow magnitudes
                json vids = json::array();
                double mean_iou = 0.0;
                for (const auto& v : videos) {
                    auto provider = provider_for_video(pkind, parg, data, videos, v);
                    std::vector<Mask> preds;
                    for (size_t t = 0; t < v.frames.size(); ++t) {
                        size_t src = t == 0 ? 1 : t;  // frame 0 reuses the first field
                        FlowField f = compute_flow(v.frames[src - 1], v.frames[src], *provider,
                                                   int(src) - 1, int(src));
                        preds.push_back(baseline_flow_threshold(f));
                    }
                    MetricsReport r = metrics(preds, v.masks);
                    mean_iou += r.iou;
                    vids.push_back({{"id", v.id}, {"metrics", report_to_json(r)}});
                }
                json out{{"videos", vids}, {"summary", {{"iou", mean_iou / videos.size()}}}};
                write_json(out, eval_json);
                return 0;
            }

            ModelConfig cfg = resolve_config(mo);
            MvgdNet net(cfg);
            check(!ckpt.empty(), "a checkpoint is required");
            load_checkpoint(net, ckpt);

            json vids = json::array();
            MetricsReport sum;
            for (const auto& v : videos) {
                auto provider = provider_for_video(pkind, parg, data, videos, v);
                if (do_eval) {
                    VideoEval ev = evaluate_video(net, v, *provider);
                    sum.iou += ev.report.iou;
                    sum.f_beta += ev.report.f_beta;
                    sum.mae += ev.report.mae;
                    sum.ber += ev.report.ber;
                    sum.acc += ev.report.acc;
                    vids.push_back({{"id", v.id}, {"metrics", report_to_json(ev.report)}});
                } else {
                    std::vector<Mask> preds = infer_video(net, v.frames, *provider);
                    fs::path vdir = fs::path(infer_out) / v.id;
                    fs::create_directories(vdir);
                    for (size_t t = 0; t < preds.size(); ++t) {
                        char name[32];
                        std::snprintf(name, sizeof(name), "%06zu.png", t);
                        save_mask(preds[t], (vdir / name).string());
                    }
                }
            }
            if (do_eval) {
                double n = double(videos.size());
                json out{{"videos", vids},
                         {"summary",
                          {{"iou", sum.iou / n},
                           {"f_beta", sum.f_beta / n},
                           {"mae", sum.mae / n},
                           {"ber", sum.ber / n},
                           {"acc", sum.acc / n}}}};
                write_json(out, eval_json);
            } else {
                std::cout << "wrote predictions for " << videos.size() << " videos to "
                          << infer_out << "\n";
            }
            return 0;
        }

        if (*stats) {
            auto videos = load_dataset(stats_data);
            std::vector<Mask> all_masks;
            json vids = json::array();
            for (const auto& v : videos) {
                double chi2_sum = 0.0;
                int chi2_n = 0;
                for (size_t t = 0; t < v.frames.size(); ++t) {
                    all_masks.push_back(v.masks[t]);
                    try {
                        chi2_sum += chi2_contrast(v.frames[t], v.masks[t]);
                        ++chi2_n;
                    } catch (const std::runtime_error&) {
                        // frames with a degenerate (all/none) mask carry no contrast signal
                    }
                }
                vids.push_back({{"id", v.id},
                                {"frames", v.frames.size()},
                                {"chi2_contrast", chi2_n ? chi2_sum / chi2_n : -1.0}});
            }
            if (!stats_heatmap.empty())
                save_mask(location_distribution(all_masks), stats_heatmap);
            write_json(json{{"videos", vids}, {"total_masks", all_masks.size()}}, stats_json);
            return 0;
        }

        if (*flowpc) {
            auto videos = load_dataset(fpc_data);
            for (const auto& v : videos) {
                auto provider = provider_for_video(fpc_provider, fpc_arg, fpc_data, videos, v);
                fs::path fdir = fs::path(fpc_data) / v.id / "flow";
                fs::create_directories(fdir);
                for (size_t t = 1; t < v.frames.size(); ++t) {
                    FlowField f = compute_flow(v.frames[t - 1], v.frames[t], *provider,
                                               int(t) - 1, int(t));
                    char name[32];
                    std::snprintf(name, sizeof(name), "%06zu.flo", t);
                    write_flo(f, (fdir / name).string());
                }
            }
            std::cout << "precomputed flow for " << videos.size() << " videos\n";
            return 0;
        }
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
