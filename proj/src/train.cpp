#include <algorithm>
#include <cmath>
#include <numeric>

#include "steerbo/errors.hpp"
#include "steerbo/models.hpp"
#include "steerbo/nn_ops.hpp"
#include "steerbo/rng.hpp"

namespace steerbo {

namespace {

Batch gather_inputs(const std::vector<Sample>& samples, const std::vector<size_t>& order,
                    size_t begin, size_t end) {
    Batch x(end - begin);
    for (size_t i = begin; i < end; ++i) x[i - begin] = samples[order[i]].x;
    return x;
}

Batch gather_targets(const std::vector<Sample>& samples, const std::vector<size_t>& order,
                     size_t begin, size_t end) {
    Batch y(end - begin);
    for (size_t i = begin; i < end; ++i) {
        y[i - begin] = Tensor({1});
        y[i - begin].data[0] = samples[order[i]].label;
    }
    return y;
}

} // namespace

TrainReport train(Network& net, const DatasetSplit& split, const TrainOptions& opt) {
    if (split.train.empty()) throw ConfigError("training split is empty");
    if (split.validation.empty()) throw ConfigError("validation split is empty");
    if (opt.batch_size == 0) throw ConfigError("batch size must be positive");
    if (!(opt.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");

    Rng rng(opt.seed);
    AdamState adam;
    adam.lr = opt.lr;
    adam.init(net.params());

    TrainReport rep;
    rep.train_curve.push_back(dataset_mse(net, split.train));
    rep.val_curve.push_back(dataset_mse(net, split.validation));
    rep.best_val_mse = rep.val_curve[0];
    rep.best_epoch = 0;

    std::vector<size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), 0);

    size_t since_best = 0;
    for (size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        rng.shuffle(order);

        for (size_t begin = 0; begin < order.size() && !rep.diverged;) {
            size_t end = std::min(begin + opt.batch_size, order.size());
            // A trailing singleton would break batch normalization, so fold
            // it into the previous batch instead.
            if (order.size() - end == 1) end = order.size();

            Batch x = gather_inputs(split.train, order, begin, end);
            Batch target = gather_targets(split.train, order, begin, end);

            net.zero_grad();
            Batch pred = net.forward(x, /*train=*/true);
            double loss = mse_loss(pred, target);
            if (!std::isfinite(loss)) {
                rep.diverged = true;
                break;
            }
            Batch gout = mse_grad(pred, target);
            net.backward(gout);
            try {
                adam_step(net.params(), adam);
            } catch (const NumericError&) {
                rep.diverged = true;
            }
            begin = end;
        }
        if (rep.diverged) break;

        rep.epochs_run = epoch;
        double train_mse = dataset_mse(net, split.train);
        double val_mse = dataset_mse(net, split.validation);
        if (!std::isfinite(train_mse) || !std::isfinite(val_mse)) {
            rep.diverged = true;
            rep.epochs_run = epoch - 1;
            break;
        }
        rep.train_curve.push_back(train_mse);
        rep.val_curve.push_back(val_mse);

        if (val_mse < rep.best_val_mse) {
            rep.best_val_mse = val_mse;
            rep.best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best >= opt.patience) {
                rep.early_stopped = true;
                break;
            }
        }
    }

    rep.weights_digest = weights_digest(net);
    return rep;
}

} // namespace steerbo
