#pragma once

#include "leakwatch/panel.hpp"
#include "leakwatch/regression.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace leakwatch {

enum class Activation { linear, relu, leaky_relu };

struct BatchNorm {
    Eigen::VectorXd gamma, beta;
    Eigen::VectorXd running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;
};

// Affine -> (batch norm) -> activation.
struct Layer {
    Eigen::MatrixXd weights; // out x in
    Eigen::VectorXd bias;
    Activation activation = Activation::leaky_relu;
    std::optional<BatchNorm> batch_norm;
};

// Fully connected estimator mapping observed pressures to nonnegative
// unknown-demand estimates; the final layer ends in a ReLU clamp so every
// emitted flow is >= 0.
struct DemandNet {
    std::vector<Layer> layers;
    double leaky_slope = 0.01;

    Eigen::Index input_width() const { return layers.front().weights.cols(); }
    Eigen::Index output_width() const { return layers.back().weights.rows(); }
};

enum class RunMode { train, eval };

// Hyperparameters (lambda). Defaults are the smallest capacity that recovers
// synthetic demands reliably; everything is overridable from config.
struct NetConfig {
    int hidden_layers = 2;
    int hidden_size = 32;
    int unknown_channels = 0; // |D_u|, the net's output width; 0 = take from scenario
    double leaky_slope = 0.01;
    bool batch_norm = true;
    double bn_momentum = 0.1;
    bool feed_known_demands = false; // net input is P only unless set
    double learning_rate = 1e-3;
    int batch_size = 288; // one day at five-minute sampling
    int epochs = 200;
    int patience = 20; // early stop on validation plateau
    int folds = 5;
    // Demand couplings are head losses: withdrawing water can only drop
    // pressure, so the trained kd rows are clamped at zero. The projection
    // also steers the underdefined channel split toward the physical,
    // parts-based decomposition.
    bool nonnegative_kd = true;
    // L1 weight on the emitted flows during training. Duty-cycled demands
    // are sparse, and with fewer sensors than channels the split is only
    // identifiable up to mixing; preferring small total flow anchors it.
    // The reported losses stay plain MSE on the reconstruction error.
    double sparsity_weight = 0.02;
};

// Kaiming-uniform weights, zero biases, identity batch-norm state.
DemandNet make_net(Eigen::Index input_width, const NetConfig& config, std::mt19937_64& rng);

struct LayerTrace {
    Eigen::MatrixXd input;
    Eigen::MatrixXd affine;         // pre batch norm
    Eigen::MatrixXd normalized;     // x_hat (batch-norm layers only)
    Eigen::VectorXd batch_mean, batch_var;
    Eigen::MatrixXd pre_activation; // after batch-norm scale/shift
    Eigen::MatrixXd output;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    const Eigen::MatrixXd& output() const { return layers.back().output; }
};

// batch: B x input_width, one timestep per row. Train mode normalizes by
// batch statistics (B >= 2) and is what the loss differentiates through;
// eval mode uses running statistics and is deterministic. Neither mutates
// the net; the trainer folds batch statistics into the running estimates
// via update_running_stats.
ForwardTrace forward_trace(const DemandNet& net, const Eigen::MatrixXd& batch, RunMode mode);
Eigen::MatrixXd forward(const DemandNet& net, const Eigen::MatrixXd& batch, RunMode mode);
void update_running_stats(DemandNet& net, const ForwardTrace& trace);

// One training batch: pressures double as net input and regression
// observation; known-demand columns follow the order of the coefficient
// set's known channels.
struct PinnBatch {
    Eigen::MatrixXd pressures;     // B x N
    Eigen::MatrixXd known_demands; // B x |D_k|
};

// Mean squared model reconstruction error over off-diagonal pairs and batch
// rows, with Q for unknown channels taken from the net. The physics layer is
// the only supervision the net gets.
double pinn_loss(const DemandNet& net, const CoefficientSet& coeffs, const PinnBatch& batch,
                 RunMode mode = RunMode::train);

struct LayerGradients {
    Eigen::MatrixXd weights;
    Eigen::VectorXd bias;
    Eigen::VectorXd gamma, beta; // empty without batch norm
};

struct PinnGradients {
    std::vector<LayerGradients> layers;
    Eigen::MatrixXd kd_unknown; // |D_u| x N
    double loss = 0.0;
};

// Exact reverse-mode gradients of pinn_loss (train-mode forward) with respect
// to every trainable parameter: net weights, biases, batch-norm scale/shift
// and the kd rows of the unknown channels.
PinnGradients pinn_gradients(const DemandNet& net, const CoefficientSet& coeffs,
                             const PinnBatch& batch);

// Flat parameter vector in a fixed order (per layer: weights, bias, gamma,
// beta; then unknown kd rows). Shared by Adam, snapshots and the
// finite-difference tests.
Eigen::VectorXd pack_parameters(const DemandNet& net, const Eigen::MatrixXd& kd_unknown);
void unpack_parameters(const Eigen::VectorXd& theta, DemandNet& net, Eigen::MatrixXd& kd_unknown);
Eigen::VectorXd pack_gradients(const PinnGradients& grads);

struct FoldReport {
    int fold = 0;
    std::vector<double> train_loss; // per epoch
    std::vector<double> val_loss;
    double baseline_val = 0.0; // zero-output-net validation loss
    double best_val = 0.0;
    int best_epoch = -1;
};

struct TrainedModel {
    DemandNet net;
    CoefficientSet coeffs; // frozen base fit plus trained unknown kd rows
    std::vector<FoldReport> fold_reports;
    int selected_fold = -1;
    std::uint64_t seed = 0;
    NetConfig config;

    std::string to_json() const;
    static TrainedModel from_json(const std::string& text);
};

// Contiguous validation blocks [t_len*f/folds, t_len*(f+1)/folds); they are
// pairwise disjoint and cover [0, t_len). Time-contiguous folds respect the
// temporal correlation of the series.
std::vector<std::pair<Eigen::Index, Eigen::Index>> fold_blocks(Eigen::Index t_len, int folds);

// 5-fold cross-validation over contiguous time blocks; per fold Adam on
// pinn_loss with early stopping, best-validation fold wins. Deterministic
// given seed.
TrainedModel train(const PressurePanel& panel, const std::vector<DemandChannel>& known,
                   const CoefficientSet& base_coeffs, const NetConfig& config,
                   std::uint64_t seed);

// Net input matrix for a panel under the model's input convention.
Eigen::MatrixXd net_inputs(const PressurePanel& panel, const CoefficientSet& coeffs,
                           bool feed_known_demands);

// Eval-mode demand estimates for the unknown channels, |D_u| x T.
Eigen::MatrixXd estimate_unknown_demands(const TrainedModel& model, const PressurePanel& panel);

// Deterministic seed derivation for folds and repeated runs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

} // namespace leakwatch
