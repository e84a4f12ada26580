#pragma once

#include <functional>
#include <string>

#include "sofar/archgen.hpp"
#include "sofar/checkpoint.hpp"
#include "sofar/data.hpp"
#include "sofar/engine.hpp"
#include "sofar/optim.hpp"

namespace sofar {

enum class Phase { PretrainFp, FinetuneBin, ScratchBin };

const char* phase_name(Phase p);
Phase phase_from_name(const std::string& s);

enum class OptimizerKind { SgdMomentum, Adam };

struct TrainConfig {
    Phase phase = Phase::PretrainFp;
    OptimizerKind optimizer = OptimizerKind::SgdMomentum;
    float momentum = 0.9f;
    float weight_decay = 1e-4f;
    float beta1 = 0.9f, beta2 = 0.999f;
    Schedule schedule;
    int epochs = 5;
    int batch_size = 64;
    uint64_t seed = 1;
    std::string train_path, val_path;
    DatasetFormat format = DatasetFormat::CifarBinary;
    bool augment = false;
    std::string out_dir;          // checkpoints + metrics.csv land here when set
    bool timing_in_csv = true;    // the seconds column is wall clock and not
                                  // run-to-run reproducible
    int start_epoch = 0;          // resume point
};

struct EvalResult {
    double top1_error = 0.0;  // percent
    double top5_error = 0.0;
    int64_t n = 0;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<std::string> csv_rows;  // epoch,lr,train_loss,val_top1,val_top5,seconds
    double initial_loss = 0.0;          // mean loss of the first training batch
    double final_loss = 0.0;            // mean training loss of the last epoch
};

// Runs cfg.phase from optional initial state (fresh, finetune init, or a
// resume snapshot with cfg.start_epoch set). The named wrappers below add
// the per-recipe preconditions.
TrainResult train_phase(const ArchSpec& arch, const TrainConfig& cfg,
                        const Checkpoint* init = nullptr);

// Full-precision initialization run: the Tanh variant of the graph trained
// with SGD momentum. Resnet-family recipe.
TrainResult pretrain_full_precision(const ArchSpec& arch, const TrainConfig& cfg);

// Binarized finetune from a pretrain checkpoint: Sign/STE nodes active; stem,
// transitions and classifier remain full precision.
TrainResult finetune_binary(const ArchSpec& arch, const TrainConfig& cfg,
                            const Checkpoint& init);

// From-scratch binary training (dense-family recipe).
TrainResult train_from_scratch_binary(const ArchSpec& arch, const TrainConfig& cfg);

// Deterministic single-crop evaluation; the graph's input node fixes the
// batch size. Equal logits rank by ascending class index.
EvalResult evaluate(Graph& g, const Dataset& ds);
EvalResult evaluate_checkpoint(const Checkpoint& ckpt, const Dataset& ds, int batch_size = 64);

// Top-k membership with the stable tie rule; exposed for tests.
bool label_in_topk(const float* logits, int64_t classes, int64_t label, int k);

}  // namespace sofar
