#include "leakwatch/demand_net.hpp"

#include "leakwatch/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace leakwatch {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    // splitmix64 over seed ^ rotated salt
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

DemandNet make_net(Eigen::Index input_width, const NetConfig& config, std::mt19937_64& rng) {
    if (input_width < 1 || config.hidden_size < 1 || config.hidden_layers < 0 ||
        config.unknown_channels < 1)
        throw ConfigError("make_net: bad architecture");

    DemandNet net;
    net.leaky_slope = config.leaky_slope;

    auto kaiming = [&](Eigen::Index rows, Eigen::Index cols, double gain) {
        const double bound = gain * std::sqrt(3.0 / static_cast<double>(cols));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Eigen::MatrixXd w(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                w(r, c) = dist(rng);
        return w;
    };
    const double hidden_gain = std::sqrt(2.0 / (1.0 + config.leaky_slope * config.leaky_slope));

    Eigen::Index in = input_width;
    for (int l = 0; l < config.hidden_layers; ++l) {
        Layer layer;
        layer.weights = kaiming(config.hidden_size, in, hidden_gain);
        layer.bias = Eigen::VectorXd::Zero(config.hidden_size);
        layer.activation = Activation::leaky_relu;
        if (config.batch_norm) {
            BatchNorm bn;
            bn.gamma = Eigen::VectorXd::Ones(config.hidden_size);
            bn.beta = Eigen::VectorXd::Zero(config.hidden_size);
            bn.running_mean = Eigen::VectorXd::Zero(config.hidden_size);
            bn.running_var = Eigen::VectorXd::Ones(config.hidden_size);
            bn.momentum = config.bn_momentum;
            layer.batch_norm = std::move(bn);
        }
        net.layers.push_back(std::move(layer));
        in = config.hidden_size;
    }

    Layer out;
    out.weights = kaiming(config.unknown_channels, in, std::sqrt(2.0));
    out.bias = Eigen::VectorXd::Zero(config.unknown_channels);
    out.activation = Activation::relu; // the nonnegativity clamp
    net.layers.push_back(std::move(out));
    return net;
}

namespace {

Eigen::MatrixXd apply_activation(const Eigen::MatrixXd& pre, Activation act, double slope) {
    switch (act) {
    case Activation::linear: return pre;
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::leaky_relu:
        return pre.unaryExpr([slope](double v) { return v > 0.0 ? v : slope * v; });
    }
    return pre;
}

Eigen::MatrixXd activation_grad(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& upstream,
                                Activation act, double slope) {
    switch (act) {
    case Activation::linear: return upstream;
    case Activation::relu: {
        const Eigen::ArrayXXd mask = (pre.array() > 0.0).cast<double>();
        return (upstream.array() * mask).matrix();
    }
    case Activation::leaky_relu: {
        const Eigen::ArrayXXd mask = (pre.array() > 0.0).cast<double>();
        return (upstream.array() * (mask + slope * (1.0 - mask))).matrix();
    }
    }
    return upstream;
}

} // namespace

ForwardTrace forward_trace(const DemandNet& net, const Eigen::MatrixXd& batch, RunMode mode) {
    if (net.layers.empty())
        throw ContractError("forward: empty network");
    if (batch.cols() != net.input_width())
        throw ContractError("forward: batch width " + std::to_string(batch.cols()) +
                            " does not match input width " +
                            std::to_string(net.input_width()));
    if (mode == RunMode::train && batch.rows() < 2)
        throw ContractError("forward: train mode needs a batch of at least 2 rows");

    ForwardTrace trace;
    Eigen::MatrixXd x = batch;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        LayerTrace lt;
        lt.input = x;
        lt.affine = (x * layer.weights.transpose()).rowwise() + layer.bias.transpose();

        if (layer.batch_norm) {
            const BatchNorm& bn = *layer.batch_norm;
            const auto b = static_cast<double>(lt.affine.rows());
            if (mode == RunMode::train) {
                lt.batch_mean = lt.affine.colwise().mean().transpose();
                lt.batch_var = ((lt.affine.rowwise() - lt.batch_mean.transpose())
                                    .array()
                                    .square()
                                    .colwise()
                                    .sum() /
                                b)
                                   .matrix()
                                   .transpose();
            } else {
                lt.batch_mean = bn.running_mean;
                lt.batch_var = bn.running_var;
            }
            const Eigen::RowVectorXd istd_row =
                (lt.batch_var.array() + bn.eps).sqrt().inverse().matrix().transpose();
            lt.normalized = ((lt.affine.rowwise() - lt.batch_mean.transpose()).array().rowwise() *
                             istd_row.array())
                                .matrix();
            lt.pre_activation =
                ((lt.normalized.array().rowwise() * bn.gamma.transpose().array()).rowwise() +
                 bn.beta.transpose().array())
                    .matrix();
        } else {
            lt.pre_activation = lt.affine;
        }

        lt.output = apply_activation(lt.pre_activation, layer.activation, net.leaky_slope);
        if (!lt.output.allFinite())
            throw NumericError("forward: non-finite activation at layer " + std::to_string(l));
        x = lt.output;
        trace.layers.push_back(std::move(lt));
    }
    return trace;
}

Eigen::MatrixXd forward(const DemandNet& net, const Eigen::MatrixXd& batch, RunMode mode) {
    return forward_trace(net, batch, mode).output();
}

void update_running_stats(DemandNet& net, const ForwardTrace& trace) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        if (!layer.batch_norm)
            continue;
        BatchNorm& bn = *layer.batch_norm;
        const LayerTrace& lt = trace.layers[l];
        const auto b = static_cast<double>(lt.affine.rows());
        // unbiased variance for the running estimate, biased for normalization
        const Eigen::VectorXd unbiased =
            b > 1.5 ? Eigen::VectorXd(lt.batch_var * (b / (b - 1.0))) : lt.batch_var;
        bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * lt.batch_mean;
        bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased;
    }
}

namespace {

struct PairTerms {
    // Everything the loss and its backward pass need, cached per call.
    Eigen::Index n = 0;
    Eigen::MatrixXd q;  // B x D, all channels in coefficient order
    Eigen::MatrixXd q2; // q squared
    std::vector<Eigen::Index> unknown; // channel indices into coeffs
    double loss = 0.0;
};

// Assembles the full demand matrix for a batch and accumulates the loss;
// when grad_q2 / grad_kd are non-null also accumulates the regression-layer
// gradients.
PairTerms pinn_core(const CoefficientSet& coeffs, const PinnBatch& batch,
                    const Eigen::MatrixXd& net_output, Eigen::MatrixXd* grad_q2,
                    Eigen::MatrixXd* grad_kd) {
    const Eigen::Index n = batch.pressures.cols();
    const Eigen::Index b_len = batch.pressures.rows();
    if (coeffs.sensor_count() != n)
        throw ContractError("pinn_loss: coefficient set does not match batch width");

    PairTerms terms;
    terms.n = n;
    terms.unknown = coeffs.demand_indices(DemandKind::unknown);
    const auto known = coeffs.demand_indices(DemandKind::known);
    if (static_cast<Eigen::Index>(known.size()) != batch.known_demands.cols())
        throw ContractError("pinn_loss: known-demand columns do not match coefficient set");
    if (static_cast<Eigen::Index>(terms.unknown.size()) != net_output.cols())
        throw ContractError("pinn_loss: net output width does not match unknown channels");

    terms.q.resize(b_len, coeffs.demand_count());
    for (std::size_t k = 0; k < known.size(); ++k)
        terms.q.col(known[k]) = batch.known_demands.col(static_cast<Eigen::Index>(k));
    for (std::size_t u = 0; u < terms.unknown.size(); ++u)
        terms.q.col(terms.unknown[u]) = net_output.col(static_cast<Eigen::Index>(u));
    terms.q2 = terms.q.array().square();

    const double weight = 1.0 / (static_cast<double>(n * (n - 1)) * static_cast<double>(b_len));

    if (grad_q2)
        grad_q2->setZero(b_len, coeffs.demand_count());
    if (grad_kd)
        grad_kd->setZero(static_cast<Eigen::Index>(terms.unknown.size()), n);

    Eigen::VectorXd mre(b_len), g(b_len);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double k1_i = coeffs.k1[i];
        for (Eigen::Index j = 0; j < n; ++j) {
            if (i == j)
                continue;
            const double c0 = (coeffs.k0[j] - coeffs.k0[i]) / k1_i;
            const double c1 = coeffs.k1[j] / k1_i;
            mre = batch.pressures.col(i) - c1 * batch.pressures.col(j) -
                  Eigen::VectorXd::Constant(b_len, c0);
            for (Eigen::Index d = 0; d < coeffs.demand_count(); ++d) {
                const double cd = (coeffs.kd(d, j) - coeffs.kd(d, i)) / k1_i;
                if (cd != 0.0)
                    mre -= cd * terms.q2.col(d);
            }
            terms.loss += weight * mre.squaredNorm();

            if (!grad_q2 && !grad_kd)
                continue;
            g = (2.0 * weight) * mre; // dL/dMRE; dMRE/dP_hat = -1
            if (grad_q2)
                for (Eigen::Index d = 0; d < coeffs.demand_count(); ++d) {
                    const double cd = (coeffs.kd(d, j) - coeffs.kd(d, i)) / k1_i;
                    if (cd != 0.0)
                        grad_q2->col(d) -= cd * g;
                }
            if (grad_kd)
                for (std::size_t u = 0; u < terms.unknown.size(); ++u) {
                    const Eigen::Index d = terms.unknown[u];
                    const double a = g.dot(terms.q2.col(d)) / k1_i;
                    (*grad_kd)(static_cast<Eigen::Index>(u), j) -= a;
                    (*grad_kd)(static_cast<Eigen::Index>(u), i) += a;
                }
        }
    }
    return terms;
}

void backprop_net(const DemandNet& net, const ForwardTrace& trace,
                  const Eigen::MatrixXd& output_grad, PinnGradients& grads) {
    Eigen::MatrixXd upstream = output_grad;
    grads.layers.resize(net.layers.size());
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const Layer& layer = net.layers[l];
        const LayerTrace& lt = trace.layers[l];
        LayerGradients& lg = grads.layers[l];

        Eigen::MatrixXd d_pre =
            activation_grad(lt.pre_activation, upstream, layer.activation, net.leaky_slope);

        Eigen::MatrixXd d_affine;
        if (layer.batch_norm) {
            const BatchNorm& bn = *layer.batch_norm;
            lg.gamma = (d_pre.array() * lt.normalized.array()).colwise().sum().matrix().transpose();
            lg.beta = d_pre.colwise().sum().transpose();
            // batch-statistics backward: normalization couples the whole batch
            const auto b = static_cast<double>(d_pre.rows());
            const Eigen::RowVectorXd istd_row =
                (lt.batch_var.array() + bn.eps).sqrt().inverse().matrix().transpose();
            const Eigen::MatrixXd d_hat =
                (d_pre.array().rowwise() * bn.gamma.transpose().array()).matrix();
            const Eigen::RowVectorXd mean_dhat = d_hat.colwise().sum() / b;
            const Eigen::RowVectorXd mean_dhat_hat =
                (d_hat.array() * lt.normalized.array()).colwise().sum().matrix() / b;
            d_affine = (((d_hat.rowwise() - mean_dhat).array() -
                         lt.normalized.array().rowwise() * mean_dhat_hat.array())
                            .rowwise() *
                        istd_row.array())
                           .matrix();
        } else {
            d_affine = std::move(d_pre);
        }

        lg.weights = d_affine.transpose() * lt.input;
        lg.bias = d_affine.colwise().sum().transpose();
        if (l > 0)
            upstream = d_affine * layer.weights;
    }
}

} // namespace

double pinn_loss(const DemandNet& net, const CoefficientSet& coeffs, const PinnBatch& batch,
                 RunMode mode) {
    const Eigen::MatrixXd output = forward(net, batch.pressures, mode);
    return pinn_core(coeffs, batch, output, nullptr, nullptr).loss;
}

PinnGradients pinn_gradients(const DemandNet& net, const CoefficientSet& coeffs,
                             const PinnBatch& batch) {
    ForwardTrace trace = forward_trace(net, batch.pressures, RunMode::train);

    PinnGradients grads;
    Eigen::MatrixXd grad_q2, grad_kd;
    PairTerms terms = pinn_core(coeffs, batch, trace.output(), &grad_q2, &grad_kd);
    grads.loss = terms.loss;
    grads.kd_unknown = std::move(grad_kd);

    // dL/dQ = dL/dQ^2 * 2Q, restricted to the net's channels
    Eigen::MatrixXd output_grad(batch.pressures.rows(),
                                static_cast<Eigen::Index>(terms.unknown.size()));
    for (std::size_t u = 0; u < terms.unknown.size(); ++u) {
        const Eigen::Index d = terms.unknown[u];
        output_grad.col(static_cast<Eigen::Index>(u)) =
            grad_q2.col(d).array() * 2.0 * terms.q.col(d).array();
    }

    backprop_net(net, trace, output_grad, grads);

    if (!std::isfinite(grads.loss))
        throw NumericError("pinn_gradients: non-finite loss");
    return grads;
}

Eigen::VectorXd pack_parameters(const DemandNet& net, const Eigen::MatrixXd& kd_unknown) {
    std::vector<double> flat;
    auto append = [&](const auto& m) { flat.insert(flat.end(), m.data(), m.data() + m.size()); };
    for (const auto& layer : net.layers) {
        append(layer.weights);
        append(layer.bias);
        if (layer.batch_norm) {
            append(layer.batch_norm->gamma);
            append(layer.batch_norm->beta);
        }
    }
    append(kd_unknown);
    return Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

void unpack_parameters(const Eigen::VectorXd& theta, DemandNet& net, Eigen::MatrixXd& kd_unknown) {
    Eigen::Index pos = 0;
    auto take = [&](auto& m) {
        if (pos + m.size() > theta.size())
            throw ContractError("unpack_parameters: vector too short");
        std::copy(theta.data() + pos, theta.data() + pos + m.size(), m.data());
        pos += m.size();
    };
    for (auto& layer : net.layers) {
        take(layer.weights);
        take(layer.bias);
        if (layer.batch_norm) {
            take(layer.batch_norm->gamma);
            take(layer.batch_norm->beta);
        }
    }
    take(kd_unknown);
    if (pos != theta.size())
        throw ContractError("unpack_parameters: vector too long");
}

Eigen::VectorXd pack_gradients(const PinnGradients& grads) {
    std::vector<double> flat;
    auto append = [&](const auto& m) { flat.insert(flat.end(), m.data(), m.data() + m.size()); };
    for (const auto& lg : grads.layers) {
        append(lg.weights);
        append(lg.bias);
        if (lg.gamma.size() > 0) {
            append(lg.gamma);
            append(lg.beta);
        }
    }
    append(grads.kd_unknown);
    return Eigen::Map<const Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

Eigen::MatrixXd net_inputs(const PressurePanel& panel, const CoefficientSet& coeffs,
                           bool feed_known_demands) {
    if (!feed_known_demands)
        return panel.values.transpose();
    const auto known = coeffs.demand_indices(DemandKind::known);
    Eigen::MatrixXd inputs(panel.sample_count(),
                           panel.sensor_count() + static_cast<Eigen::Index>(known.size()));
    inputs.leftCols(panel.sensor_count()) = panel.values.transpose();
    for (std::size_t k = 0; k < known.size(); ++k) {
        const auto& id = coeffs.demand_ids[static_cast<std::size_t>(known[k])];
        const DemandChannel* found = nullptr;
        for (const auto& ch : panel.known_demands)
            if (ch.id == id)
                found = &ch;
        if (!found)
            throw ContractError("net_inputs: missing known demand channel '" + id + "'");
        inputs.col(panel.sensor_count() + static_cast<Eigen::Index>(k)) = found->flow;
    }
    return inputs;
}

namespace {

struct Snapshot {
    DemandNet net;
    Eigen::MatrixXd kd_unknown;
};

Eigen::MatrixXd known_demand_matrix(const PressurePanel& panel, const CoefficientSet& coeffs,
                                    const std::vector<Eigen::Index>& rows) {
    const auto known = coeffs.demand_indices(DemandKind::known);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(known.size()));
    for (std::size_t k = 0; k < known.size(); ++k) {
        const auto& id = coeffs.demand_ids[static_cast<std::size_t>(known[k])];
        const DemandChannel* found = nullptr;
        for (const auto& ch : panel.known_demands)
            if (ch.id == id)
                found = &ch;
        if (!found)
            throw ContractError("train: missing known demand channel '" + id + "'");
        for (std::size_t r = 0; r < rows.size(); ++r)
            out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                found->flow[rows[r]];
    }
    return out;
}

} // namespace

std::vector<std::pair<Eigen::Index, Eigen::Index>> fold_blocks(Eigen::Index t_len, int folds) {
    if (folds < 1 || t_len < folds)
        throw ConfigError("fold_blocks: need at least one sample per fold");
    std::vector<std::pair<Eigen::Index, Eigen::Index>> blocks;
    for (int f = 0; f < folds; ++f)
        blocks.emplace_back(t_len * f / folds, t_len * (f + 1) / folds);
    return blocks;
}

TrainedModel train(const PressurePanel& panel, const std::vector<DemandChannel>& known,
                   const CoefficientSet& base_coeffs, const NetConfig& config,
                   std::uint64_t seed) {
    const Eigen::Index t_len = panel.sample_count();
    const Eigen::Index n = panel.sensor_count();
    if (config.folds < 2 || t_len < config.folds * 2)
        throw ConfigError("train: too few samples for " + std::to_string(config.folds) +
                          " folds");
    if (config.epochs < 1 || config.batch_size < 2)
        throw ConfigError("train: epochs must be >= 1 and batch_size >= 2");

    // Extend the frozen base fit with zero-initialized unknown channels; zero
    // start means epoch 0 scores exactly the regression-only baseline.
    CoefficientSet coeffs = base_coeffs;
    Eigen::MatrixXd kd_ext =
        Eigen::MatrixXd::Zero(base_coeffs.demand_count() + config.unknown_channels, n);
    kd_ext.topRows(base_coeffs.demand_count()) = base_coeffs.kd;
    coeffs.kd = std::move(kd_ext);
    for (int u = 0; u < config.unknown_channels; ++u) {
        coeffs.demand_ids.push_back("u" + std::to_string(u + 1));
        coeffs.demand_kinds.push_back(DemandKind::unknown);
    }

    PressurePanel inputs_panel = panel;
    inputs_panel.known_demands = known;
    const Eigen::MatrixXd all_inputs = net_inputs(inputs_panel, coeffs, config.feed_known_demands);
    const Eigen::MatrixXd all_pressures = panel.values.transpose();

    std::vector<Eigen::Index> all_rows(static_cast<std::size_t>(t_len));
    std::iota(all_rows.begin(), all_rows.end(), 0);
    const Eigen::MatrixXd all_known = known_demand_matrix(inputs_panel, coeffs, all_rows);

    auto make_batch = [&](const std::vector<Eigen::Index>& rows) {
        PinnBatch batch;
        batch.pressures.resize(static_cast<Eigen::Index>(rows.size()), n);
        batch.known_demands.resize(static_cast<Eigen::Index>(rows.size()), all_known.cols());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            batch.pressures.row(static_cast<Eigen::Index>(r)) = all_pressures.row(rows[r]);
            batch.known_demands.row(static_cast<Eigen::Index>(r)) = all_known.row(rows[r]);
        }
        return batch;
    };
    auto input_rows = [&](const std::vector<Eigen::Index>& rows) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), all_inputs.cols());
        for (std::size_t r = 0; r < rows.size(); ++r)
            x.row(static_cast<Eigen::Index>(r)) = all_inputs.row(rows[r]);
        return x;
    };

    TrainedModel model;
    model.seed = seed;
    model.config = config;
    model.coeffs = coeffs;

    double best_fold_val = std::numeric_limits<double>::infinity();
    std::optional<Snapshot> best_overall;

    const auto blocks = fold_blocks(t_len, config.folds);
    for (int fold = 0; fold < config.folds; ++fold) {
        const auto [lo, hi] = blocks[static_cast<std::size_t>(fold)];
        std::vector<Eigen::Index> train_rows, val_rows;
        for (Eigen::Index t = 0; t < t_len; ++t)
            (t >= lo && t < hi ? val_rows : train_rows).push_back(t);

        std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(fold)));
        DemandNet net = make_net(all_inputs.cols(), config, rng);
        Eigen::MatrixXd kd_unknown = Eigen::MatrixXd::Zero(config.unknown_channels, n);

        const PinnBatch val_batch = make_batch(val_rows);
        const Eigen::MatrixXd val_inputs = input_rows(val_rows);

        auto eval_val_loss = [&]() {
            // eval-mode forward on the held-out block
            CoefficientSet c = coeffs;
            c.kd.bottomRows(config.unknown_channels) = kd_unknown;
            const Eigen::MatrixXd out = forward(net, val_inputs, RunMode::eval);
            return pinn_core(c, val_batch, out, nullptr, nullptr).loss;
        };

        FoldReport report;
        report.fold = fold;
        {
            CoefficientSet c = coeffs; // kd_unknown rows are zero here
            report.baseline_val =
                pinn_core(c, val_batch, Eigen::MatrixXd::Zero(val_inputs.rows(),
                                                              config.unknown_channels),
                          nullptr, nullptr)
                    .loss;
        }

        Eigen::VectorXd theta = pack_parameters(net, kd_unknown);
        Eigen::ArrayXd adam_m = Eigen::ArrayXd::Zero(theta.size());
        Eigen::ArrayXd adam_v = Eigen::ArrayXd::Zero(theta.size());
        long adam_step = 0;
        const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

        double best_val = std::numeric_limits<double>::infinity();
        Snapshot best{net, kd_unknown};
        int stale_epochs = 0;

        std::vector<Eigen::Index> order = train_rows;
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng);
            double epoch_loss = 0.0;
            int batches = 0;
            for (std::size_t begin = 0; begin < order.size();
                 begin += static_cast<std::size_t>(config.batch_size)) {
                const std::size_t end =
                    std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
                if (end - begin < 2)
                    break; // batch norm needs at least two rows
                const std::vector<Eigen::Index> rows(order.begin() + begin, order.begin() + end);

                CoefficientSet c = coeffs;
                c.kd.bottomRows(config.unknown_channels) = kd_unknown;
                PinnBatch batch = make_batch(rows);

                PinnGradients grads;
                ForwardTrace trace;
                try {
                    // the net may see extra input columns; pressures stay the loss target
                    trace = forward_trace(net, input_rows(rows), RunMode::train);
                    Eigen::MatrixXd grad_q2, grad_kd;
                    PairTerms terms = pinn_core(c, batch, trace.output(), &grad_q2, &grad_kd);
                    grads.loss = terms.loss;
                    grads.kd_unknown = std::move(grad_kd);
                    Eigen::MatrixXd output_grad(
                        static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(terms.unknown.size()));
                    for (std::size_t u = 0; u < terms.unknown.size(); ++u)
                        output_grad.col(static_cast<Eigen::Index>(u)) =
                            grad_q2.col(terms.unknown[u]).array() * 2.0 *
                            terms.q.col(terms.unknown[u]).array();
                    // sparsity term: d(mean Q)/dQ, zero-output units untouched
                    // because the clamp's backward gates it
                    if (config.sparsity_weight > 0.0)
                        output_grad.array() +=
                            config.sparsity_weight / static_cast<double>(output_grad.size());
                    backprop_net(net, trace, output_grad, grads);
                } catch (const NumericError& e) {
                    throw TrainingError("train: diverged at fold " + std::to_string(fold) +
                                        " epoch " + std::to_string(epoch) + ": " + e.what());
                }

                if (!std::isfinite(grads.loss))
                    throw TrainingError("train: loss diverged at fold " + std::to_string(fold) +
                                        " epoch " + std::to_string(epoch));
                epoch_loss += grads.loss;
                ++batches;

                const Eigen::VectorXd g = pack_gradients(grads);
                ++adam_step;
                adam_m = beta1 * adam_m + (1.0 - beta1) * g.array();
                adam_v = beta2 * adam_v + (1.0 - beta2) * g.array().square();
                const double mc = 1.0 - std::pow(beta1, static_cast<double>(adam_step));
                const double vc = 1.0 - std::pow(beta2, static_cast<double>(adam_step));
                theta.array() -=
                    config.learning_rate * (adam_m / mc) / ((adam_v / vc).sqrt() + adam_eps);
                if (config.nonnegative_kd)
                    theta.tail(kd_unknown.size()) =
                        theta.tail(kd_unknown.size()).cwiseMax(0.0);
                unpack_parameters(theta, net, kd_unknown);
                update_running_stats(net, trace);
            }

            report.train_loss.push_back(batches > 0 ? epoch_loss / batches : 0.0);
            double val_loss;
            try {
                val_loss = eval_val_loss();
            } catch (const NumericError& e) {
                throw TrainingError("train: diverged at fold " + std::to_string(fold) +
                                    " epoch " + std::to_string(epoch) + ": " + e.what());
            }
            if (!std::isfinite(val_loss))
                throw TrainingError("train: validation loss diverged at fold " +
                                    std::to_string(fold) + " epoch " + std::to_string(epoch));
            report.val_loss.push_back(val_loss);

            if (val_loss < best_val) {
                best_val = val_loss;
                best = {net, kd_unknown};
                report.best_epoch = epoch;
                stale_epochs = 0;
            } else if (++stale_epochs >= config.patience) {
                break;
            }
        }

        report.best_val = best_val;
        model.fold_reports.push_back(std::move(report));
        if (best_val < best_fold_val) {
            best_fold_val = best_val;
            best_overall = std::move(best);
            model.selected_fold = fold;
        }
    }

    model.net = std::move(best_overall->net);
    model.coeffs.kd.bottomRows(config.unknown_channels) = best_overall->kd_unknown;
    return model;
}

Eigen::MatrixXd estimate_unknown_demands(const TrainedModel& model, const PressurePanel& panel) {
    const Eigen::MatrixXd inputs =
        net_inputs(panel, model.coeffs, model.config.feed_known_demands);
    return forward(model.net, inputs, RunMode::eval).transpose();
}

// --- serialization ---------------------------------------------------------

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows > 0 ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = j.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    return m;
}

nlohmann::json vec_json(const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                             static_cast<Eigen::Index>(values.size()));
}

std::string activation_name(Activation a) {
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    }
    return "linear";
}

Activation activation_from_name(const std::string& s) {
    if (s == "linear") return Activation::linear;
    if (s == "relu") return Activation::relu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    throw ParseError("model: unknown activation '" + s + "'");
}

nlohmann::json config_json(const NetConfig& c) {
    return {{"hidden_layers", c.hidden_layers},
            {"hidden_size", c.hidden_size},
            {"unknown_channels", c.unknown_channels},
            {"leaky_slope", c.leaky_slope},
            {"batch_norm", c.batch_norm},
            {"bn_momentum", c.bn_momentum},
            {"feed_known_demands", c.feed_known_demands},
            {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"patience", c.patience},
            {"folds", c.folds},
            {"nonnegative_kd", c.nonnegative_kd},
            {"sparsity_weight", c.sparsity_weight}};
}

NetConfig config_from_json(const nlohmann::json& j) {
    NetConfig c;
    c.hidden_layers = j.value("hidden_layers", c.hidden_layers);
    c.hidden_size = j.value("hidden_size", c.hidden_size);
    c.unknown_channels = j.value("unknown_channels", c.unknown_channels);
    c.leaky_slope = j.value("leaky_slope", c.leaky_slope);
    c.batch_norm = j.value("batch_norm", c.batch_norm);
    c.bn_momentum = j.value("bn_momentum", c.bn_momentum);
    c.feed_known_demands = j.value("feed_known_demands", c.feed_known_demands);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.patience = j.value("patience", c.patience);
    c.folds = j.value("folds", c.folds);
    c.nonnegative_kd = j.value("nonnegative_kd", c.nonnegative_kd);
    c.sparsity_weight = j.value("sparsity_weight", c.sparsity_weight);
    return c;
}

} // namespace

std::string TrainedModel::to_json() const {
    nlohmann::json j;
    j["format"] = "leakwatch-model-v1";
    j["seed"] = seed;
    j["selected_fold"] = selected_fold;
    j["config"] = config_json(config);
    j["coeffs"] = nlohmann::json::parse(coeffs.to_json());

    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        nlohmann::json lj;
        lj["weights"] = matrix_json(layer.weights);
        lj["bias"] = vec_json(layer.bias);
        lj["activation"] = activation_name(layer.activation);
        if (layer.batch_norm) {
            const auto& bn = *layer.batch_norm;
            lj["batch_norm"] = {{"gamma", vec_json(bn.gamma)},
                                {"beta", vec_json(bn.beta)},
                                {"running_mean", vec_json(bn.running_mean)},
                                {"running_var", vec_json(bn.running_var)},
                                {"momentum", bn.momentum},
                                {"eps", bn.eps}};
        }
        layers.push_back(std::move(lj));
    }
    j["net"] = {{"layers", std::move(layers)}, {"leaky_slope", net.leaky_slope}};

    nlohmann::json folds = nlohmann::json::array();
    for (const auto& fr : fold_reports)
        folds.push_back({{"fold", fr.fold},
                         {"train_loss", fr.train_loss},
                         {"val_loss", fr.val_loss},
                         {"baseline_val", fr.baseline_val},
                         {"best_val", fr.best_val},
                         {"best_epoch", fr.best_epoch}});
    j["folds"] = std::move(folds);
    return j.dump(2);
}

TrainedModel TrainedModel::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model: ") + e.what());
    }
    if (j.value("format", "") != "leakwatch-model-v1")
        throw ParseError("model: unknown format '" + j.value("format", "") + "'");

    TrainedModel m;
    try {
        m.seed = j.value("seed", 0ull);
        m.selected_fold = j.value("selected_fold", -1);
        m.config = config_from_json(j.at("config"));
        m.coeffs = CoefficientSet::from_json(j.at("coeffs").dump());
        m.net.leaky_slope = j.at("net").value("leaky_slope", 0.01);
        for (const auto& lj : j.at("net").at("layers")) {
            Layer layer;
            layer.weights = matrix_from_json(lj.at("weights"));
            layer.bias = vec_from_json(lj.at("bias"));
            layer.activation = activation_from_name(lj.at("activation").get<std::string>());
            if (lj.contains("batch_norm")) {
                const auto& bj = lj["batch_norm"];
                BatchNorm bn;
                bn.gamma = vec_from_json(bj.at("gamma"));
                bn.beta = vec_from_json(bj.at("beta"));
                bn.running_mean = vec_from_json(bj.at("running_mean"));
                bn.running_var = vec_from_json(bj.at("running_var"));
                bn.momentum = bj.value("momentum", 0.1);
                bn.eps = bj.value("eps", 1e-5);
                layer.batch_norm = std::move(bn);
            }
            m.net.layers.push_back(std::move(layer));
        }
        for (const auto& fj : j.value("folds", nlohmann::json::array())) {
            FoldReport fr;
            fr.fold = fj.value("fold", 0);
            fr.train_loss = fj.value("train_loss", std::vector<double>{});
            fr.val_loss = fj.value("val_loss", std::vector<double>{});
            fr.baseline_val = fj.value("baseline_val", 0.0);
            fr.best_val = fj.value("best_val", 0.0);
            fr.best_epoch = fj.value("best_epoch", -1);
            m.fold_reports.push_back(std::move(fr));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model: ") + e.what());
    }
    return m;
}

} // namespace leakwatch
