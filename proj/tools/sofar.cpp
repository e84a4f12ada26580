// sofar: build, inspect, train, evaluate and benchmark shortcut-based
// fractal binary CNNs from the command line.
//
// exit codes: 0 ok, 2 config/usage, 3 divergence, 4 data/io, 5 kernel
// equivalence failure

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "sofar/bitconv.hpp"
#include "sofar/complexity.hpp"
#include "sofar/config.hpp"
#include "sofar/json_export.hpp"
#include "sofar/train.hpp"

using namespace sofar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitData = 4;
constexpr int kExitEquivalence = 5;

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return out;
}

const std::map<std::string, std::set<std::string>> kKnownKeys = {
    {"arch",
     {"name", "family", "columns", "stage_blocks", "base_channels", "growth_rate",
      "transition_channels", "stem_channels", "input_res", "num_classes", "head",
      "scale_mode"}},
    {"train",
     {"phase", "optimizer", "lr", "momentum", "weight_decay", "beta1", "beta2", "schedule",
      "milestones", "factor", "epochs", "batch_size", "seed", "augment", "init", "resume",
      "timing_in_csv"}},
    {"data", {"train", "val", "format"}},
    {"output", {"dir"}},
};

ArchSpec arch_from_config(const KvConfig& cfg) {
    const int res = static_cast<int>(cfg.get_num("arch", "input_res", 32));
    if (auto name = cfg.get("arch", "name")) {
        ArchSpec spec = parse_arch_name(*name, res,
                                        static_cast<int>(cfg.get_num("arch", "num_classes", -1)));
        return spec;
    }
    ArchSpec spec;
    const std::string fam = cfg.get_or("arch", "family", "RF");
    if (fam == "F") spec.family = Family::F;
    else if (fam == "RF") spec.family = Family::RF;
    else if (fam == "DF") spec.family = Family::DF;
    else if (fam == "DRF") spec.family = Family::DRF;
    else if (fam == "BiReal" || fam == "Bi-Real") spec.family = Family::BiReal;
    else if (fam == "BinaryDenseNet") spec.family = Family::BinaryDenseNet;
    else throw ConfigError("unknown family '" + fam + "'");
    spec.columns = static_cast<int>(cfg.get_num("arch", "columns", 2));
    for (int b : parse_int_list(cfg.get_or("arch", "stage_blocks", "1,1")))
        spec.stage_blocks.push_back(b);
    spec.base_channels = static_cast<int>(
        cfg.get_num("arch", "base_channels", cfg.get_num("arch", "growth_rate", 16)));
    if (auto t = cfg.get("arch", "transition_channels"))
        spec.transition_channels = parse_int_list(*t);
    spec.stem_channels = static_cast<int>(cfg.get_num("arch", "stem_channels", 0));
    spec.input_resolution = res;
    spec.num_classes = static_cast<int>(cfg.get_num("arch", "num_classes", 10));
    spec.imagenet_head = cfg.get_or("arch", "head", res > 64 ? "imagenet" : "cifar") ==
                         "imagenet";
    if (cfg.get_or("arch", "scale_mode", "per_filter") == "per_layer")
        spec.scale_mode = ScaleMode::PerLayer;
    return spec;
}

TrainConfig train_from_config(const KvConfig& cfg) {
    TrainConfig tc;
    tc.phase = phase_from_name(cfg.get_or("train", "phase", "pretrain_fp"));
    const std::string opt = cfg.get_or(
        "train", "optimizer", tc.phase == Phase::PretrainFp ? "sgd_momentum" : "adam");
    if (opt == "sgd_momentum" || opt == "sgd") tc.optimizer = OptimizerKind::SgdMomentum;
    else if (opt == "adam") tc.optimizer = OptimizerKind::Adam;
    else throw ConfigError("unknown optimizer '" + opt + "'");
    tc.momentum = static_cast<float>(cfg.get_num("train", "momentum", 0.9));
    tc.weight_decay = static_cast<float>(cfg.get_num(
        "train", "weight_decay", tc.optimizer == OptimizerKind::SgdMomentum ? 1e-4 : 0.0));
    tc.beta1 = static_cast<float>(cfg.get_num("train", "beta1", 0.9));
    tc.beta2 = static_cast<float>(cfg.get_num("train", "beta2", 0.999));
    tc.epochs = static_cast<int>(cfg.get_num("train", "epochs", 5));
    tc.batch_size = static_cast<int>(cfg.get_num("train", "batch_size", 64));
    tc.seed = static_cast<uint64_t>(cfg.get_num("train", "seed", 1));
    tc.augment = cfg.get_or("train", "augment", "false") == "true";
    tc.timing_in_csv = cfg.get_or("train", "timing_in_csv", "true") == "true";

    tc.schedule.kind = cfg.get_or("train", "schedule", "step") == "cosine" ? ScheduleKind::Cosine
                                                                           : ScheduleKind::Step;
    tc.schedule.base_lr = static_cast<float>(cfg.get_num("train", "lr", 0.1));
    tc.schedule.factor = static_cast<float>(cfg.get_num("train", "factor", 0.1));
    tc.schedule.epochs = tc.epochs;
    if (auto m = cfg.get("train", "milestones")) tc.schedule.milestones = parse_int_list(*m);

    tc.train_path = cfg.get_or("data", "train", "");
    tc.val_path = cfg.get_or("data", "val", "");
    tc.format = cfg.get_or("data", "format", "cifar_binary") == "idx" ? DatasetFormat::Idx
                                                                      : DatasetFormat::CifarBinary;
    tc.out_dir = cfg.get_or("output", "dir", "");
    if (tc.train_path.empty()) throw ConfigError("config is missing [data] train = <path>");
    return tc;
}

std::string int_list(const std::vector<int>& v) {
    std::string s;
    for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
    return s;
}

// The persisted config spells out every resolved field, name-derived presets
// included, so a run can be reproduced even if preset defaults later change.
KvConfig resolve_config(const KvConfig& in, const ArchSpec& arch, const TrainConfig& tc) {
    KvConfig out = in;
    if (!arch.name.empty()) out.set("arch", "name", arch.name);
    out.set("arch", "family", family_name(arch.family));
    if (arch.columns > 0) out.set("arch", "columns", std::to_string(arch.columns));
    out.set("arch", "stage_blocks", int_list(arch.stage_blocks));
    out.set("arch", "base_channels", std::to_string(arch.base_channels));
    if (!arch.transition_channels.empty())
        out.set("arch", "transition_channels", int_list(arch.transition_channels));
    if (arch.stem_channels > 0)
        out.set("arch", "stem_channels", std::to_string(arch.stem_channels));
    out.set("arch", "head", arch.imagenet_head ? "imagenet" : "cifar");
    out.set("arch", "input_res", std::to_string(arch.input_resolution));
    out.set("arch", "num_classes", std::to_string(arch.num_classes));
    out.set("train", "phase", phase_name(tc.phase));
    out.set("train", "optimizer",
            tc.optimizer == OptimizerKind::Adam ? "adam" : "sgd_momentum");
    out.set("train", "epochs", std::to_string(tc.epochs));
    out.set("train", "batch_size", std::to_string(tc.batch_size));
    out.set("train", "seed", std::to_string(tc.seed));
    return out;
}

int cmd_summarize(const std::string& arch_name, const std::string& config_path, int input_res,
                  bool as_json, bool golden, const std::string& csv_path) {
    ArchSpec spec = !config_path.empty()
                        ? arch_from_config(KvConfig::parse_file(config_path))
                        : parse_arch_name(arch_name, input_res);
    Graph g = assemble_network(spec);
    ComplexityReport r = analyze(g);
    if (as_json)
        std::cout << report_json(r);
    else
        std::cout << report_table(r);
    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        if (!f) throw IoError("cannot write '" + csv_path + "'");
        f << report_csv(r);
    }
    if (golden) {
        bool found = false, ok = true;
        for (const auto& row : golden_table()) {
            if (row.arch != spec.name || row.input_resolution != spec.input_resolution) continue;
            found = true;
            GoldenCheck c = check_golden(row);
            std::printf("golden %-26s: Mbit %.2f vs %.2f (%.2f%%), Flops %.4g vs %.4g (%.2f%%): "
                        "%s\n",
                        row.arch.c_str(), c.got_mbit, row.mbit, 100.0 * c.mbit_err, c.got_flops,
                        row.flops, 100.0 * c.flops_err, c.pass ? "PASS" : "FAIL");
            ok = ok && c.pass;
        }
        if (!found) {
            std::fprintf(stderr, "no golden row for '%s' at %d\n", spec.name.c_str(),
                         spec.input_resolution);
            return kExitConfig;
        }
        return ok ? kExitOk : 1;
    }
    return kExitOk;
}

int cmd_train(const std::string& config_path) {
    KvConfig cfg = KvConfig::parse_file(config_path);
    cfg.require_known_keys(kKnownKeys);
    ArchSpec arch = arch_from_config(cfg);
    TrainConfig tc = train_from_config(cfg);

    if (!tc.out_dir.empty()) {
        std::filesystem::create_directories(tc.out_dir);
        resolve_config(cfg, arch, tc).save(tc.out_dir + "/resolved.cfg");
    }

    const Checkpoint* init = nullptr;
    Checkpoint init_ckpt;
    if (auto resume = cfg.get("train", "resume")) {
        init_ckpt = load_checkpoint(*resume);
        tc.start_epoch = init_ckpt.epoch;
        init = &init_ckpt;
    } else if (auto ip = cfg.get("train", "init")) {
        init_ckpt = load_checkpoint(*ip);
        init = &init_ckpt;
    }

    if (tc.phase == Phase::FinetuneBin && !init)
        throw ConfigError("finetune_bin needs [train] init = <pretrain checkpoint>");
    TrainResult result = train_phase(arch, tc, init);
    for (const auto& row : result.csv_rows) std::cout << row << "\n";
    std::printf("initial_loss=%.6f final_loss=%.6f\n", result.initial_loss, result.final_loss);
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& format, const std::string& config_path, int batch) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Dataset ds = load_dataset(data_path, format == "idx" ? DatasetFormat::Idx
                                                         : DatasetFormat::CifarBinary);
    EvalResult r;
    if (!config_path.empty()) {
        ArchSpec spec = arch_from_config(KvConfig::parse_file(config_path));
        spec.style = ckpt.phase == phase_name(Phase::PretrainFp) ? UnitStyle::FullPretrain
                                                                 : UnitStyle::Binary;
        Graph g = assemble_network(spec, batch);
        load_graph_state(ckpt, g);
        r = evaluate(g, ds);
    } else {
        r = evaluate_checkpoint(ckpt, ds, batch);
    }
    std::printf("top1_error=%.3f%% top5_error=%.3f%% n=%lld\n", r.top1_error, r.top5_error,
                static_cast<long long>(r.n));
    return kExitOk;
}

int cmd_bench(const std::string& sizes_arg, int channels, int repeats) {
    const std::vector<int> sizes = parse_int_list(sizes_arg);
    if (sizes.empty()) throw ConfigError("--sizes needs at least one spatial size");
    for (int s : sizes)
        if (s < 3) throw ConfigError("--sizes entries must be >= 3");

    Rng rng(7);
    std::printf("kernel,size,float_ns,packed_ns,speedup\n");
    for (int hw : sizes) {
        Tensor w = Tensor::randn(Shape{channels, channels, 3, 3}, rng);
        Tensor x = binarize::binarize_activations(Tensor::randn(Shape{1, channels, hw, hw}, rng));
        BinConvParams params;
        params.latent_weights = w;
        pack_weights(params);

        // equivalence gate before any timing: benchmarking a wrong kernel is
        // meaningless
        Tensor got = binary_conv2d(x, params, 1, 1);
        Tensor want = binary_conv2d_reference(x, w, ScaleMode::PerFilter, 1, 1);
        for (int64_t i = 0; i < got.numel(); ++i) {
            if (got[i] != want[i]) {
                std::fprintf(stderr, "equivalence FAILED at size %d (index %lld)\n", hw,
                             static_cast<long long>(i));
                return kExitEquivalence;
            }
        }
        std::fprintf(stderr, "equivalence ok for size %d\n", hw);

        auto time_ns = [&](auto&& fn) {
            fn();  // warm
            const auto t0 = std::chrono::steady_clock::now();
            for (int i = 0; i < repeats; ++i) fn();
            const auto t1 = std::chrono::steady_clock::now();
            return static_cast<double>(
                       std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()) /
                   repeats;
        };
        Tensor wsign = binarize::binarize_activations(w);
        auto scales = binarize::weight_scales(w);
        const double float_ns = time_ns([&] {
            Tensor out = ops::conv2d_forward(x, wsign, 1, 1);
            ops::scale_channels_inplace(out, scales);
        });
        PackedPatches pp = pack_input_patches(x, 3, 1, 1);
        Shape os = conv_output_shape(x.shape(), channels, 3, 1, 1);
        const double packed_ns = time_ns([&] { (void)binary_conv2d(pp, params, os); });
        std::printf("binconv3x3,%d,%.0f,%.0f,%.2f\n", hw, float_ns, packed_ns,
                    float_ns / packed_ns);
    }
    return kExitOk;
}

int cmd_export(const std::string& arch_name, const std::string& out_path, int input_res) {
    ArchSpec spec = parse_arch_name(arch_name, input_res);
    Graph g = assemble_network(spec);
    std::ofstream f(out_path);
    if (!f) throw IoError("cannot write '" + out_path + "'");
    f << graph_to_json(g);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"shortcut-based fractal architectures for binary CNNs"};
    app.require_subcommand(1);

    std::string arch_name, config_path, csv_path, ckpt_path, data_path, out_path;
    std::string format = "cifar_binary", sizes = "8,16,32";
    int input_res = 224, batch = 64, channels = 32, repeats = 20;
    bool as_json = false, golden = false;

    auto* summarize = app.add_subcommand("summarize", "complexity report for an architecture");
    summarize->add_option("--arch", arch_name, "architecture name");
    summarize->add_option("--config", config_path, "config file with an [arch] section");
    summarize->add_option("--input-res", input_res, "input resolution (224 or 32)");
    summarize->add_flag("--json", as_json, "emit JSON instead of a table");
    summarize->add_flag("--golden", golden, "compare against the published numbers");
    summarize->add_option("--csv", csv_path, "write the per-layer breakdown CSV here");

    auto* train = app.add_subcommand("train", "run a training phase from a config file");
    train->add_option("--config", config_path, "training config")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval->add_option("--checkpoint", ckpt_path)->required();
    eval->add_option("--dataset", data_path)->required();
    eval->add_option("--format", format, "cifar_binary or idx");
    eval->add_option("--config", config_path, "arch config for inline specs");
    eval->add_option("--batch", batch);

    auto* bench = app.add_subcommand("bench", "packed vs float binary conv timings");
    bench->add_option("--sizes", sizes, "comma-separated spatial sizes");
    bench->add_option("--channels", channels);
    bench->add_option("--repeats", repeats);

    auto* exportc = app.add_subcommand("export", "write the graph as JSON");
    exportc->add_option("--arch", arch_name)->required();
    exportc->add_option("--out", out_path)->required();
    exportc->add_option("--input-res", input_res);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (summarize->parsed()) {
            if (arch_name.empty() && config_path.empty())
                throw ConfigError("summarize needs --arch or --config");
            return cmd_summarize(arch_name, config_path, input_res, as_json, golden, csv_path);
        }
        if (train->parsed()) return cmd_train(config_path);
        if (eval->parsed()) return cmd_eval(ckpt_path, data_path, format, config_path, batch);
        if (bench->parsed()) return cmd_bench(sizes, channels, repeats);
        if (exportc->parsed()) return cmd_export(arch_name, out_path, input_res);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDivergence;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}
