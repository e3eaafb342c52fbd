#pragma once

// Minimal training loop for the fixed grammar: shuffled mini-batches,
// Adam, train-batch augmentation, per-epoch validation accuracy. The
// fitness of a candidate is the maximum validation accuracy seen across
// epochs.
//
// All randomness derives from (seed, stream, epoch, position), so a run is
// reproducible bit-for-bit at any thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "occamnas/arch.hpp"
#include "occamnas/augment.hpp"
#include "occamnas/dataset.hpp"
#include "occamnas/errors.hpp"
#include "occamnas/net.hpp"
#include "occamnas/rng.hpp"
#include "occamnas/tensor.hpp"

namespace occamnas {

struct TrainerConfig {
    int epochs = 100;
    double learning_rate = 1e-3;
    int batch_size = 128;
    double validation_split = 0.2;
    std::uint64_t seed = 0;
    AugmentConfig augmentation;
    int threads = 0; // 0 = hardware concurrency
};

struct EpochStats {
    double train_loss = 0;
    double val_accuracy = 0;
};

template <class Real>
struct EvaluationResult {
    double max_val_accuracy = 0;
    std::vector<EpochStats> history;
    NetParams<Real> final_weights;
};

namespace detail {

// Adam with standard moment defaults.
template <class Real>
struct Adam {
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long t = 0;
    NetParams<Real> m, v;

    Adam(const NetParams<Real>& shape, double lr_) : lr(lr_), m(zero_like(shape)), v(zero_like(shape)) {}

    void step(NetParams<Real>& params, NetParams<Real>& grads) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        auto pt = trainable_tensors(params);
        auto gt = trainable_tensors(grads);
        auto mt = trainable_tensors(m);
        auto vt = trainable_tensors(v);
        for (std::size_t k = 0; k < pt.size(); ++k) {
            auto& p = *pt[k];
            auto& g = *gt[k];
            auto& mm = *mt[k];
            auto& vv = *vt[k];
            for (std::size_t i = 0; i < p.size(); ++i) {
                mm[i] = static_cast<Real>(beta1 * mm[i] + (1.0 - beta1) * g[i]);
                vv[i] = static_cast<Real>(beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i]);
                const double mhat = mm[i] / bc1;
                const double vhat = vv[i] / bc2;
                p[i] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }
};

template <class Real>
void fill_batch_row(Tensor<Real>& batch, int row, const Tensor<float>& img) {
    const std::size_t sz = img.data.size();
    Real* dst = batch.data.data() + static_cast<std::size_t>(row) * sz;
    for (std::size_t i = 0; i < sz; ++i)
        dst[i] = static_cast<Real>(img.data[i]);
}

} // namespace detail

// Accuracy of `params` on a dataset (infer mode, running BN statistics).
template <class Real>
double evaluate_accuracy(const ArchDescriptor& arch, const NetParams<Real>& params,
                         const Dataset& ds, int threads = 0, int batch_size = 256) {
    if (ds.size() == 0)
        throw EmptyDataset("cannot evaluate on an empty dataset");
    const auto shape = ds.shape();
    if (shape[0] != arch.input.side || shape[1] != arch.input.side ||
        shape[2] != arch.input.channels)
        throw ShapeMismatch("dataset shape does not match architecture input");
    long long correct = 0;
    for (std::size_t at = 0; at < ds.size(); at += static_cast<std::size_t>(batch_size)) {
        const int n = static_cast<int>(std::min(ds.size() - at, static_cast<std::size_t>(batch_size)));
        Tensor<Real> batch{n, shape[0], shape[1], shape[2]};
        std::vector<int> labels(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            detail::fill_batch_row(batch, i, ds.images[at + static_cast<std::size_t>(i)]);
            labels[static_cast<std::size_t>(i)] = ds.labels[at + static_cast<std::size_t>(i)];
        }
        auto out = run_batch<Real>(arch, params, batch, labels.data(), Mode::infer, nullptr,
                                   nullptr, threads);
        correct += out.correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

template <class Real>
EvaluationResult<Real> train_and_evaluate(const ArchDescriptor& arch, const Dataset& train_set,
                                          const Dataset& val_set, const TrainerConfig& config) {
    if (train_set.size() == 0 || val_set.size() == 0)
        throw EmptyDataset("train and validation sets must be non-empty");
    if (config.epochs < 1 || config.batch_size < 1)
        throw Error("trainer config: epochs and batch_size must be >= 1");
    const auto shape = train_set.shape();
    if (shape[0] != arch.input.side || shape[1] != arch.input.side ||
        shape[2] != arch.input.channels)
        throw ShapeMismatch("train set shape does not match architecture input");
    for (int y : train_set.labels)
        if (y < 0 || y >= arch.num_classes)
            throw Error("train label out of range");

    EvaluationResult<Real> result;
    NetParams<Real> params = init_params<Real>(arch, mix_seed(config.seed, 0x01));
    detail::Adam<Real> opt(params, config.learning_rate);
    NetParams<Real> grads = zero_like(params);
    const bool augment_on =
        config.augmentation.hflip || config.augmentation.rotation_degrees > 0;

    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(config.seed, 0x02, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double loss_sum = 0;
        for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(config.batch_size)) {
            const int n = static_cast<int>(
                std::min(order.size() - at, static_cast<std::size_t>(config.batch_size)));
            Tensor<Real> batch{n, shape[0], shape[1], shape[2]};
            std::vector<int> labels(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) {
                const std::size_t pos = at + static_cast<std::size_t>(i);
                const std::size_t idx = order[pos];
                labels[static_cast<std::size_t>(i)] = train_set.labels[idx];
                if (augment_on) {
                    Rng arng(mix_seed(config.seed, 0x03, static_cast<std::uint64_t>(epoch),
                                      static_cast<std::uint64_t>(pos)));
                    detail::fill_batch_row(batch, i,
                                           augment(train_set.images[idx], arng,
                                                   config.augmentation));
                } else {
                    detail::fill_batch_row(batch, i, train_set.images[idx]);
                }
            }
            auto out = run_batch<Real>(arch, params, batch, labels.data(), Mode::train, &grads,
                                       nullptr, config.threads);
            if (!std::isfinite(out.loss_sum))
                throw EvaluationFailed("training diverged: non-finite loss");
            loss_sum += out.loss_sum;
            if (config.learning_rate != 0.0)
                opt.step(params, grads);
            update_running_stats(params, out.batch_mean, out.batch_var);
        }
        EpochStats st;
        st.train_loss = loss_sum / static_cast<double>(train_set.size());
        st.val_accuracy = evaluate_accuracy(arch, params, val_set, config.threads);
        result.history.push_back(st);
    }
    result.max_val_accuracy = 0;
    for (const auto& st : result.history)
        result.max_val_accuracy = std::max(result.max_val_accuracy, st.val_accuracy);
    result.final_weights = std::move(params);
    return result;
}

} // namespace occamnas
