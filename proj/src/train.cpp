#include "sofar/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace sofar {

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::PretrainFp: return "pretrain_fp";
        case Phase::FinetuneBin: return "finetune_bin";
        case Phase::ScratchBin: return "scratch_bin";
    }
    return "?";
}

Phase phase_from_name(const std::string& s) {
    if (s == "pretrain_fp") return Phase::PretrainFp;
    if (s == "finetune_bin") return Phase::FinetuneBin;
    if (s == "scratch_bin") return Phase::ScratchBin;
    throw ConfigError("unknown phase '" + s + "'");
}

bool label_in_topk(const float* logits, int64_t classes, int64_t label, int k) {
    // rank of `label` = number of classes that beat it: strictly larger
    // logit, or equal logit at a smaller index
    int rank = 0;
    const float lv = logits[label];
    for (int64_t i = 0; i < classes; ++i) {
        if (i == label) continue;
        if (logits[i] > lv || (logits[i] == lv && i < label)) ++rank;
    }
    return rank < k;
}

namespace {

struct TrainGraph {
    Graph graph;
    int data_input = -1;
    int labels_input = -1;
    int logits = -1;
    int loss = -1;
};

TrainGraph build_train_graph(const ArchSpec& arch, int batch) {
    TrainGraph tg;
    tg.graph = assemble_network(arch, batch);
    tg.data_input = 0;
    tg.logits = tg.graph.output_node();
    tg.labels_input = tg.graph.add_input(Shape{batch, 1, 1, 1}, "labels");
    tg.loss = tg.graph.add_softmax_cross_entropy(tg.logits, tg.labels_input);
    return tg;
}

EvalResult evaluate_impl(Graph& g, int data_input, int labels_input, int logits_node,
                         const Dataset& ds, int batch) {
    SOFAR_CHECK(ds.size() > 0, "evaluate: empty dataset");
    const int64_t classes = g.node(logits_node).out_shape.c;
    for (int label : ds.labels)
        SOFAR_CHECK(label >= 0 && label < classes,
                    "evaluate: label " + std::to_string(label) + " out of range");
    BatchOptions opt;
    opt.batch_size = batch;
    BatchStream stream(ds, opt);
    EvalResult r;
    int64_t top1_hits = 0, top5_hits = 0;
    Batch b;
    while (stream.next(b)) {
        const int64_t real = b.images.shape().n;
        Tensor images = b.images, labels = b.labels;
        if (real < batch) {  // pad the tail batch; only real rows are scored
            images = Tensor(Shape{batch, b.images.shape().c, b.images.shape().h,
                                  b.images.shape().w});
            labels = Tensor(Shape{batch, 1, 1, 1});
            std::copy(b.images.data(), b.images.data() + b.images.numel(), images.data());
            std::copy(b.labels.data(), b.labels.data() + b.labels.numel(), labels.data());
        }
        std::map<int, Tensor> inputs{{data_input, images}};
        if (labels_input >= 0) inputs.emplace(labels_input, labels);
        ExecState st = run_forward(g, inputs, RunMode::Eval);
        const Tensor& out = st.acts[static_cast<size_t>(logits_node)];
        for (int64_t i = 0; i < real; ++i) {
            const float* row = out.data() + i * classes;
            const int64_t label = static_cast<int64_t>(b.labels[i]);
            if (label_in_topk(row, classes, label, 1)) ++top1_hits;
            if (label_in_topk(row, classes, label, 5)) ++top5_hits;
        }
        r.n += real;
    }
    r.top1_error = 100.0 * (1.0 - static_cast<double>(top1_hits) / static_cast<double>(r.n));
    r.top5_error = 100.0 * (1.0 - static_cast<double>(top5_hits) / static_cast<double>(r.n));
    return r;
}

TrainResult run_training(const ArchSpec& arch, const TrainConfig& cfg, const Checkpoint* init) {
    SOFAR_CHECK(cfg.batch_size >= 1, "batch_size must be >= 1");
    for (size_t i = 1; i < cfg.schedule.milestones.size(); ++i)
        SOFAR_CHECK(cfg.schedule.milestones[i] > cfg.schedule.milestones[i - 1],
                    "schedule milestones must be strictly increasing");
    for (int m : cfg.schedule.milestones)
        SOFAR_CHECK(m < cfg.schedule.epochs, "schedule milestone beyond horizon");

    ArchSpec spec = arch;
    spec.style = cfg.phase == Phase::PretrainFp ? UnitStyle::FullPretrain : UnitStyle::Binary;
    TrainGraph tg = build_train_graph(spec, cfg.batch_size);

    Rng rng(cfg.seed);
    tg.graph.init_parameters(rng, /*glorot=*/spec.dense_family());
    SgdMomentum sgd;
    sgd.momentum = cfg.momentum;
    sgd.weight_decay = cfg.weight_decay;
    Adam adam;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.weight_decay = cfg.weight_decay;

    if (init) {
        SOFAR_CHECK(init->arch.empty() || spec.name.empty() || init->arch == spec.name,
                    "checkpoint arch '" + init->arch + "' does not match requested '" +
                        spec.name + "'");
        load_graph_state(*init, tg.graph);
        // a resumed run picks the optimizer state back up; a fresh finetune
        // from a pretrain checkpoint finds none and starts clean
        for (const auto& [name, t] : init->tensors) {
            if (name.rfind("opt.m.", 0) == 0) adam.m.emplace(name.substr(6), t);
            else if (name.rfind("opt.v.", 0) == 0) adam.v.emplace(name.substr(6), t);
            else if (name.rfind("opt.vel.", 0) == 0) sgd.velocity.emplace(name.substr(8), t);
            else if (name == "opt.adam_t") adam.t = static_cast<int64_t>(t[0]);
        }
    }

    Dataset train_ds = load_dataset(cfg.train_path, cfg.format);
    Dataset val_ds;
    const bool has_val = !cfg.val_path.empty();
    if (has_val) val_ds = load_dataset(cfg.val_path, cfg.format);
    TrainResult result;
    result.csv_rows.push_back("epoch,lr,train_loss,val_top1,val_top5,seconds");

    std::ofstream csv;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        const bool resuming = cfg.start_epoch > 0;
        csv.open(cfg.out_dir + "/metrics.csv", resuming ? std::ios::app : std::ios::out);
        if (!resuming) csv << result.csv_rows[0] << "\n";
    }

    bool first_block = true;
    for (int epoch = cfg.start_epoch; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const float lr = lr_at(cfg.schedule, epoch);
        BatchOptions opt;
        opt.batch_size = cfg.batch_size;
        opt.shuffle = true;
        opt.augment = cfg.augment;
        opt.seed = cfg.seed;
        BatchStream stream(train_ds, opt, epoch);

        double loss_acc = 0.0;
        int64_t loss_batches = 0;
        Batch b;
        while (stream.next(b)) {
            if (b.images.shape().n < cfg.batch_size) break;  // drop the tail batch
            std::map<int, Tensor> inputs{{tg.data_input, b.images},
                                         {tg.labels_input, b.labels}};
            ExecState st = run_forward(tg.graph, inputs, RunMode::Train);
            const Tensor& loss_t = st.acts[static_cast<size_t>(tg.loss)];
            const double batch_loss = loss_t.sum() / static_cast<double>(cfg.batch_size);
            if (!std::isfinite(batch_loss))
                throw DivergenceError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch));
            if (first_block) {
                result.initial_loss = batch_loss;
                first_block = false;
            }
            loss_acc += batch_loss;
            ++loss_batches;

            // gradient of the mean loss
            Tensor seed(loss_t.shape(), 1.0f / static_cast<float>(cfg.batch_size));
            GradState gs = run_backward(tg.graph, st, &seed);

            if (cfg.optimizer == OptimizerKind::Adam) adam.begin_step();
            for (int id = 0; id < tg.graph.size(); ++id) {
                auto& p = tg.graph.params(id);
                auto& pg = gs.param_grads[static_cast<size_t>(id)];
                const std::string& nm = tg.graph.node(id).name;
                auto apply = [&](const char* field, Tensor& param, Tensor& grad) {
                    if (param.empty()) return;
                    if (cfg.optimizer == OptimizerKind::Adam)
                        adam.step(nm + "." + field, param, grad, lr);
                    else
                        sgd.step(nm + "." + field, param, grad, lr);
                };
                apply("weight", p.weight, pg.weight);
                apply("bias", p.bias, pg.bias);
                apply("gamma", p.gamma, pg.gamma);
                apply("beta", p.beta, pg.beta);
            }
        }
        SOFAR_CHECK(loss_batches > 0, "dataset smaller than one batch");
        const double train_loss = loss_acc / static_cast<double>(loss_batches);
        result.final_loss = train_loss;

        double top1 = -1.0, top5 = -1.0;
        if (has_val) {
            EvalResult ev = evaluate_impl(tg.graph, tg.data_input, tg.labels_input, tg.logits,
                                          val_ds, cfg.batch_size);
            top1 = ev.top1_error;
            top5 = ev.top5_error;
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        char row[256];
        std::snprintf(row, sizeof(row), "%d,%.6g,%.6f,%.3f,%.3f,%.3f", epoch,
                      static_cast<double>(lr), train_loss, top1, top5,
                      cfg.timing_in_csv ? seconds : 0.0);
        result.csv_rows.emplace_back(row);
        if (csv.is_open()) csv << row << "\n" << std::flush;

        if (!cfg.out_dir.empty()) {
            Checkpoint snap;
            snap.arch = spec.name;
            snap.phase = phase_name(cfg.phase);
            snap.epoch = epoch + 1;  // completed epochs
            store_graph_state(snap, tg.graph);
            if (cfg.optimizer == OptimizerKind::Adam) {
                for (auto& [name, t] : adam.m) snap.tensors.emplace_back("opt.m." + name, t);
                for (auto& [name, t] : adam.v) snap.tensors.emplace_back("opt.v." + name, t);
                snap.tensors.emplace_back("opt.adam_t",
                                          Tensor(Shape{1, 1, 1, 1},
                                                 static_cast<float>(adam.t)));
            } else {
                for (auto& [name, t] : sgd.velocity)
                    snap.tensors.emplace_back("opt.vel." + name, t);
            }
            save_checkpoint(cfg.out_dir + "/last.ckpt", snap);
        }
    }

    result.checkpoint.arch = spec.name;
    result.checkpoint.phase = phase_name(cfg.phase);
    result.checkpoint.epoch = cfg.epochs;
    store_graph_state(result.checkpoint, tg.graph);
    // optimizer state rides along so a resumed run continues exactly
    if (cfg.optimizer == OptimizerKind::Adam) {
        for (auto& [name, t] : adam.m) result.checkpoint.tensors.emplace_back("opt.m." + name, t);
        for (auto& [name, t] : adam.v) result.checkpoint.tensors.emplace_back("opt.v." + name, t);
        result.checkpoint.tensors.emplace_back(
            "opt.adam_t", Tensor(Shape{1, 1, 1, 1}, static_cast<float>(adam.t)));
    } else {
        for (auto& [name, t] : sgd.velocity)
            result.checkpoint.tensors.emplace_back("opt.vel." + name, t);
    }
    if (!cfg.out_dir.empty())
        save_checkpoint(cfg.out_dir + "/" + phase_name(cfg.phase) + ".ckpt", result.checkpoint);
    return result;
}

}  // namespace

TrainResult train_phase(const ArchSpec& arch, const TrainConfig& cfg, const Checkpoint* init) {
    return run_training(arch, cfg, init);
}

TrainResult pretrain_full_precision(const ArchSpec& arch, const TrainConfig& cfg) {
    SOFAR_CHECK(cfg.phase == Phase::PretrainFp, "config phase must be pretrain_fp");
    SOFAR_CHECK(!arch.dense_family(), "dense families train from scratch, not via pretraining");
    return run_training(arch, cfg, nullptr);
}

TrainResult finetune_binary(const ArchSpec& arch, const TrainConfig& cfg,
                            const Checkpoint& init) {
    SOFAR_CHECK(cfg.phase == Phase::FinetuneBin, "config phase must be finetune_bin");
    return run_training(arch, cfg, &init);
}

TrainResult train_from_scratch_binary(const ArchSpec& arch, const TrainConfig& cfg) {
    SOFAR_CHECK(cfg.phase == Phase::ScratchBin, "config phase must be scratch_bin");
    return run_training(arch, cfg, nullptr);
}

EvalResult evaluate(Graph& g, const Dataset& ds) {
    SOFAR_CHECK(g.node(0).kind == NodeKind::Input, "graph does not start with an input node");
    const int64_t declared = g.node(0).out_shape.n;
    int labels_input = -1;
    for (const auto& n : g.nodes())
        if (n.kind == NodeKind::Input && n.name == "labels") labels_input = n.id;
    return evaluate_impl(g, 0, labels_input, g.output_node(), ds, static_cast<int>(declared));
}

EvalResult evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& ds, int batch_size) {
    SOFAR_CHECK(!ckpt.arch.empty(), "checkpoint carries no arch name");
    ArchSpec spec = parse_arch_name(ckpt.arch, static_cast<int>(ds.height),
                                    /*num_classes=*/-1);
    spec.style =
        ckpt.phase == phase_name(Phase::PretrainFp) ? UnitStyle::FullPretrain : UnitStyle::Binary;
    Graph g = assemble_network(spec, batch_size);
    load_graph_state(ckpt, g);
    return evaluate(g, ds);
}

}  // namespace sofar
