#pragma once

#include <string>
#include <vector>

#include "sofar/graph.hpp"

namespace sofar {

enum class Family { F, RF, DF, DRF, BiReal, BinaryDenseNet };

const char* family_name(Family f);

// What surrounds each convolution of a block.
//   Binary:       Sign -> BinConv -> BatchNorm
//   FullPretrain: Tanh -> Conv -> ReLU -> BatchNorm   (ReLU dropped for dense families)
//   Plain:        bare Conv (block-level analysis and tests)
enum class UnitStyle { Plain, Binary, FullPretrain };

// One truncated fractal block: c columns, longest column 2^(c-1) convs,
// 2^c - 1 convs total, output join fan-in c after collapsing.
struct FractalSpec {
    int columns = 1;
    bool residual = false;  // shortcut_mode: none | residual
    int channels = 16;      // in == out for plain/residual blocks
    int kernel = 3;
    int stride = 1;
    int padding = 1;
    UnitStyle style = UnitStyle::Plain;
    ScaleMode scale_mode = ScaleMode::PerFilter;
};

// A generated block: a self-contained graph from one Input to one output.
struct BlockGraph {
    Graph graph;
    int input = -1;
    int output = -1;
    std::vector<int> conv_ids;
    std::vector<int> join_ids;
    std::vector<int> residual_add_ids;
};

// Declarative description of a full network.
struct ArchSpec {
    Family family = Family::RF;
    int columns = 0;                       // fractal columns; 0 for BiReal/BinaryDenseNet
    std::vector<int> stage_blocks;         // blocks per stage (conv-units for BiReal/BDN)
    int base_channels = 0;                 // stage-1 width (RF/F/BiReal) or growth rate (dense)
    std::vector<int> transition_channels;  // dense families: transition conv widths
    int stem_channels = 0;                 // dense families; 0 = same as growth stem default
    int input_resolution = 224;
    int num_classes = 1000;
    bool imagenet_head = true;  // 7x7/2 conv + 3x3/2 maxpool stem vs 3x3 cifar stem
    int named_depth = 0;        // depth claimed by the canonical name; 0 = unchecked
    std::string name;
    UnitStyle style = UnitStyle::Binary;
    ScaleMode scale_mode = ScaleMode::PerFilter;

    bool dense_family() const {
        return family == Family::DF || family == Family::DRF ||
               family == Family::BinaryDenseNet;
    }
};

// F_1 = Conv; F_{C+1} = (F_C o F_C(I)) join Conv(I), with neighboring joins
// collapsed into one. Requires shortcut_mode = none.
BlockGraph build_fractal(const FractalSpec& spec);

// Same topology with every conv wrapped as Conv(x) + x. Requires channel-
// preserving convs.
BlockGraph build_residual_fractal(const FractalSpec& spec);

// Dense variant: every column head maps Cin -> k, deeper convs map k -> k and
// carry a residual exactly when in-channels == out-channels; block output is
// Concat(F(I), I).
BlockGraph build_dense_fractal_block(int columns, int growth, int input_channels,
                                     UnitStyle style = UnitStyle::Plain);

// Full network: stem, stages of blocks, full-precision transitions, global
// average pool, classifier. Throws if the computed depth contradicts
// spec.named_depth.
Graph assemble_network(const ArchSpec& spec, int batch = 1);

// "RF-c4d8 ResNet37(41)", "DRF-c2d2 DenseNet51(53)", "Bi-Real ResNet18(64)",
// "BinaryDenseNet51(32)". Validates d == 2^(c-1).
ArchSpec parse_arch_name(const std::string& name, int input_resolution = 224,
                         int num_classes = -1);

std::string format_arch_name(const ArchSpec& spec);

// Conv layers on the longest input->output path plus the final linear layer;
// parallel columns contribute their longest member, joins and adds nothing.
int count_depth(const Graph& g);

// RF -> F, DRF -> DF; the generated graphs lose every block-internal Add and
// keep all other structure. Errors for families without residuals.
ArchSpec strip_residuals(const ArchSpec& spec);

// Canonical preset names exercised by tests and the golden tables.
std::vector<std::string> preset_names();

}  // namespace sofar
