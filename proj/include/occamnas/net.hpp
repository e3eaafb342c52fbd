#pragma once

// Network state and batch execution for the fixed grammar.
//
// Threading: a batch is processed in fixed-size sample chunks. Chunks run on
// any number of threads, each accumulating into its own gradient buffer;
// buffers are then reduced in chunk order. Results are therefore identical
// for every thread count, which is what makes search traces reproducible.
//
// The input batchnorm is the only cross-sample layer. Its batch statistics
// are computed up front from the rescaled batch; its backward pass only
// needs d(gamma)/d(beta) because nothing below it is trainable.

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "occamnas/arch.hpp"
#include "occamnas/errors.hpp"
#include "occamnas/layers.hpp"
#include "occamnas/rng.hpp"
#include "occamnas/tensor.hpp"

namespace occamnas {

enum class Mode { train, infer };

inline constexpr int kChunkSamples = 8;  // reduction granularity; fixed, not tunable
inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kBnMomentum = 0.1;

template <class Real>
struct NetParams {
    struct Conv {
        int ci = 0, co = 0;
        std::vector<Real> w; // [3][3][ci][co]
        std::vector<Real> b;
    };
    struct Dense {
        int in = 0, out = 0;
        std::vector<Real> w; // [in][out]
        std::vector<Real> b;
    };

    std::vector<Real> bn_gamma, bn_beta;
    std::vector<Real> bn_running_mean, bn_running_var;
    std::vector<Conv> conv;
    Dense hidden, head;
};

// Trainable tensors in a fixed order (running stats excluded); the same
// order is used by the optimizer, gradient buffers and the weights blob.
template <class Real>
std::vector<std::vector<Real>*> trainable_tensors(NetParams<Real>& p) {
    std::vector<std::vector<Real>*> v{&p.bn_gamma, &p.bn_beta};
    for (auto& c : p.conv) {
        v.push_back(&c.w);
        v.push_back(&c.b);
    }
    v.push_back(&p.hidden.w);
    v.push_back(&p.hidden.b);
    v.push_back(&p.head.w);
    v.push_back(&p.head.b);
    return v;
}

template <class Real>
std::size_t param_count(const NetParams<Real>& p) {
    std::size_t n = p.bn_gamma.size() + p.bn_beta.size();
    for (const auto& c : p.conv)
        n += c.w.size() + c.b.size();
    return n + p.hidden.w.size() + p.hidden.b.size() + p.head.w.size() + p.head.b.size();
}

template <class Real>
NetParams<Real> make_params(const ArchDescriptor& arch) {
    NetParams<Real> p;
    const int ch = arch.input.channels;
    p.bn_gamma.assign(ch, Real(1));
    p.bn_beta.assign(ch, Real(0));
    p.bn_running_mean.assign(ch, Real(0));
    p.bn_running_var.assign(ch, Real(1));
    int dense_idx = 0;
    for (const auto& l : arch.layers) {
        if (l.kind == LayerKind::conv3x3_same) {
            typename NetParams<Real>::Conv c;
            c.ci = l.in.ch;
            c.co = l.out.ch;
            c.w.assign(static_cast<std::size_t>(9) * c.ci * c.co, Real(0));
            c.b.assign(static_cast<std::size_t>(c.co), Real(0));
            p.conv.push_back(std::move(c));
        } else if (l.kind == LayerKind::dense) {
            auto& d = (dense_idx++ == 0) ? p.hidden : p.head;
            d.in = l.in.ch;
            d.out = l.out.ch;
            d.w.assign(static_cast<std::size_t>(d.in) * d.out, Real(0));
            d.b.assign(static_cast<std::size_t>(d.out), Real(0));
        }
    }
    return p;
}

// He-uniform init for conv/dense weights; biases zero, BN at identity.
template <class Real>
NetParams<Real> init_params(const ArchDescriptor& arch, std::uint64_t seed) {
    NetParams<Real> p = make_params<Real>(arch);
    int stream = 0;
    auto fill = [&](std::vector<Real>& w, int fan_in) {
        Rng rng(mix_seed(seed, 0x1717, static_cast<std::uint64_t>(stream++)));
        const double limit = std::sqrt(6.0 / fan_in);
        for (auto& x : w)
            x = static_cast<Real>(rng.uniform(-limit, limit));
    };
    for (auto& c : p.conv)
        fill(c.w, 9 * c.ci);
    fill(p.hidden.w, p.hidden.in);
    fill(p.head.w, p.head.in);
    return p;
}

template <class Real>
NetParams<Real> zero_like(const NetParams<Real>& p) {
    NetParams<Real> z = p;
    for (auto* t : trainable_tensors(z))
        std::fill(t->begin(), t->end(), Real(0));
    std::fill(z.bn_running_mean.begin(), z.bn_running_mean.end(), Real(0));
    std::fill(z.bn_running_var.begin(), z.bn_running_var.end(), Real(0));
    return z;
}

// ---- batch execution ----

template <class Real>
struct SampleCache {
    std::vector<std::vector<Real>> act;    // act[i] = output of arch layer i (act[0] unused)
    std::vector<std::vector<int>> argmax;  // pool layers only
};

template <class Real>
struct ForwardCache {
    Mode mode = Mode::train;
    int n = 0;
    std::vector<Real> rescaled;             // (n, h, w, ch) flattened
    std::vector<Real> mean, inv_std;        // statistics used by the BN layer
    std::vector<Real> batch_mean, batch_var;// raw batch stats (train mode)
    std::vector<SampleCache<Real>> samples;
};

namespace detail {

template <class Real>
struct Workspace {
    std::vector<Real> acc, dz, da, db_buf;
};

inline void parallel_chunks(int threads, int n_chunks, const std::function<void(int)>& fn) {
    if (threads > n_chunks)
        threads = n_chunks;
    if (threads <= 1) {
        for (int i = 0; i < n_chunks; ++i)
            fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    auto worker = [&] {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n_chunks)
                return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mu);
                if (!err)
                    err = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads) - 1);
    for (int t = 1; t < threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (auto& th : pool)
        th.join();
    if (err)
        std::rethrow_exception(err);
}

// Runs layers 1..end for one sample; act[0] is the rescaled input view.
template <class Real>
void sample_forward(const ArchDescriptor& arch, const NetParams<Real>& p, const Real* rescaled,
                    const Real* mean, const Real* inv_std, SampleCache<Real>& sc,
                    Workspace<Real>& ws) {
    const auto& layers = arch.layers;
    sc.act.assign(layers.size(), {});
    sc.argmax.assign(layers.size(), {});
    const Real* cur = rescaled;
    int conv_idx = 0;
    bool hidden_done = false;
    for (std::size_t i = 1; i < layers.size(); ++i) {
        const auto& l = layers[i];
        auto& out = sc.act[i];
        out.resize(static_cast<std::size_t>(l.out.elements()));
        switch (l.kind) {
        case LayerKind::batchnorm_input:
            kernels::batchnorm_forward(cur, l.in.h * l.in.w, l.in.ch, mean, inv_std,
                                       p.bn_gamma.data(), p.bn_beta.data(), out.data());
            break;
        case LayerKind::conv3x3_same: {
            const auto& c = p.conv[static_cast<std::size_t>(conv_idx++)];
            kernels::conv3x3_forward(cur, l.in.h, l.in.w, c.ci, c.w.data(), c.b.data(), c.co,
                                     out.data(), /*relu=*/true, ws.acc);
            break;
        }
        case LayerKind::maxpool2x2_s2:
            sc.argmax[i].resize(out.size());
            kernels::maxpool_forward(cur, l.in.h, l.in.w, l.in.ch, out.data(),
                                     sc.argmax[i].data());
            break;
        case LayerKind::global_avg_pool:
            kernels::gap_forward(cur, l.in.h * l.in.w, l.in.ch, out.data());
            break;
        case LayerKind::dense: {
            const auto& d = hidden_done ? p.head : p.hidden;
            const bool relu = !hidden_done; // deep dense has ReLU, the head does not
            kernels::dense_forward(cur, d.in, d.w.data(), d.b.data(), d.out, out.data(), relu);
            hidden_done = true;
            break;
        }
        case LayerKind::softmax:
            kernels::softmax_forward(cur, l.in.ch, out.data());
            break;
        case LayerKind::rescale:
            break; // layer 0; handled at batch level
        }
        cur = out.data();
    }
}

// Backpropagates softmax-cross-entropy for one sample, accumulating into
// `g`. `scale` folds the batch-mean factor into the logits gradient.
template <class Real>
void sample_backward(const ArchDescriptor& arch, const NetParams<Real>& p, const Real* rescaled,
                     const Real* mean, const Real* inv_std, const SampleCache<Real>& sc,
                     int label, Real scale, NetParams<Real>& g, Workspace<Real>& ws) {
    const auto& layers = arch.layers;
    const std::size_t last = layers.size() - 1; // softmax
    const auto& probs = sc.act[last];
    const int classes = arch.num_classes;

    auto& dout = ws.da;
    auto& din = ws.db_buf;
    dout.assign(probs.size(), Real(0));
    for (int i = 0; i < classes; ++i)
        dout[static_cast<std::size_t>(i)] =
            (probs[static_cast<std::size_t>(i)] - Real(i == label)) * scale;

    int conv_idx = static_cast<int>(p.conv.size());
    bool at_head = true;
    // dout currently holds the gradient w.r.t. the head-dense output.
    for (std::size_t i = last - 1; i >= 1; --i) {
        const auto& l = layers[i];
        const Real* in_act = (i == 1) ? rescaled : sc.act[i - 1].data();
        if (l.kind == LayerKind::batchnorm_input) {
            kernels::batchnorm_backward_params(rescaled, l.in.h * l.in.w, l.in.ch, mean, inv_std,
                                               dout.data(), g.bn_gamma.data(), g.bn_beta.data());
            break; // nothing trainable below
        }
        din.assign(static_cast<std::size_t>(l.in.elements()), Real(0));
        switch (l.kind) {
        case LayerKind::dense: {
            const auto& d = at_head ? p.head : p.hidden;
            auto& gd = at_head ? g.head : g.hidden;
            kernels::dense_backward(in_act, d.in, d.w.data(), d.out, sc.act[i].data(),
                                    dout.data(), /*relu=*/!at_head, gd.w.data(), gd.b.data(),
                                    din.data(), ws.dz);
            at_head = false;
            break;
        }
        case LayerKind::global_avg_pool:
            kernels::gap_backward(dout.data(), l.in.h * l.in.w, l.in.ch, din.data());
            break;
        case LayerKind::conv3x3_same: {
            --conv_idx;
            const auto& c = p.conv[static_cast<std::size_t>(conv_idx)];
            auto& gc = g.conv[static_cast<std::size_t>(conv_idx)];
            kernels::conv3x3_backward(in_act, l.in.h, l.in.w, c.ci, c.w.data(), c.co,
                                      sc.act[i].data(), dout.data(), /*relu=*/true,
                                      gc.w.data(), gc.b.data(), din.data(), ws.dz);
            break;
        }
        case LayerKind::maxpool2x2_s2:
            kernels::maxpool_backward(dout.data(), l.in.h, l.in.w, l.in.ch,
                                      sc.argmax[i].data(), din.data());
            break;
        default:
            throw Error("sample_backward: unexpected layer");
        }
        std::swap(dout, din);
    }
}

template <class Real>
void accumulate(NetParams<Real>& into, const NetParams<Real>& from) {
    auto dst = trainable_tensors(into);
    auto src = trainable_tensors(const_cast<NetParams<Real>&>(from));
    for (std::size_t t = 0; t < dst.size(); ++t)
        for (std::size_t i = 0; i < dst[t]->size(); ++i)
            (*dst[t])[i] += (*src[t])[i];
}

} // namespace detail

template <class Real>
struct BatchOutput {
    Tensor<Real> probs; // (n, classes)
    double loss_sum = 0;
    int correct = 0;
    std::vector<Real> batch_mean, batch_var; // BN batch statistics (train mode)
};

// Executes one batch. `labels` may be null (no loss/accuracy), `grads` may
// be null (no backward), `keep` may be null (caches dropped after use).
template <class Real>
BatchOutput<Real> run_batch(const ArchDescriptor& arch, const NetParams<Real>& p,
                            const Tensor<Real>& batch, const int* labels, Mode mode,
                            NetParams<Real>* grads, ForwardCache<Real>* keep, int threads) {
    const int s = arch.input.side, ch = arch.input.channels;
    if (batch.rank != 4 || batch.shape[1] != s || batch.shape[2] != s || batch.shape[3] != ch)
        throw ShapeMismatch("batch shape does not match architecture input");
    const int n = batch.shape[0];
    if (n < 1)
        throw ShapeMismatch("empty batch");
    if (grads != nullptr && labels == nullptr)
        throw Error("run_batch: gradients require labels");
    const std::size_t in_sz = static_cast<std::size_t>(s) * s * ch;
    const int n_chunks = (n + kChunkSamples - 1) / kChunkSamples;
    if (threads <= 0)
        threads = static_cast<int>(std::thread::hardware_concurrency());

    // Phase 1: rescale the whole batch (BN statistics need all of it).
    std::vector<Real> rescaled(static_cast<std::size_t>(n) * in_sz);
    detail::parallel_chunks(threads, n_chunks, [&](int c) {
        const int lo = c * kChunkSamples, hi = std::min(n, lo + kChunkSamples);
        for (int i = lo; i < hi; ++i)
            kernels::rescale_forward(batch.data.data() + static_cast<std::size_t>(i) * in_sz,
                                     in_sz, rescaled.data() + static_cast<std::size_t>(i) * in_sz);
    });

    // Phase 2: BN statistics (biased variance, double accumulation).
    std::vector<Real> mean(static_cast<std::size_t>(ch)), inv_std(static_cast<std::size_t>(ch));
    std::vector<Real> batch_mean, batch_var;
    if (mode == Mode::train) {
        std::vector<double> sum(static_cast<std::size_t>(ch), 0.0),
            sumsq(static_cast<std::size_t>(ch), 0.0);
        for (std::size_t i = 0; i < rescaled.size(); i += ch)
            for (int c = 0; c < ch; ++c) {
                const double v = static_cast<double>(rescaled[i + c]);
                sum[static_cast<std::size_t>(c)] += v;
                sumsq[static_cast<std::size_t>(c)] += v * v;
            }
        const double count = static_cast<double>(n) * s * s;
        batch_mean.resize(static_cast<std::size_t>(ch));
        batch_var.resize(static_cast<std::size_t>(ch));
        for (int c = 0; c < ch; ++c) {
            const double m = sum[static_cast<std::size_t>(c)] / count;
            const double var = std::max(0.0, sumsq[static_cast<std::size_t>(c)] / count - m * m);
            batch_mean[static_cast<std::size_t>(c)] = static_cast<Real>(m);
            batch_var[static_cast<std::size_t>(c)] = static_cast<Real>(var);
            mean[static_cast<std::size_t>(c)] = static_cast<Real>(m);
            inv_std[static_cast<std::size_t>(c)] = static_cast<Real>(1.0 / std::sqrt(var + kBnEpsilon));
        }
    } else {
        for (int c = 0; c < ch; ++c) {
            mean[static_cast<std::size_t>(c)] = p.bn_running_mean[static_cast<std::size_t>(c)];
            inv_std[static_cast<std::size_t>(c)] = static_cast<Real>(
                1.0 / std::sqrt(static_cast<double>(p.bn_running_var[static_cast<std::size_t>(c)]) +
                                kBnEpsilon));
        }
    }

    BatchOutput<Real> out;
    out.probs = Tensor<Real>{n, arch.num_classes};
    if (keep) {
        keep->mode = mode;
        keep->n = n;
        keep->mean = mean;
        keep->inv_std = inv_std;
        keep->samples.assign(static_cast<std::size_t>(n), {});
    }

    // Phase 3: per-sample forward (+ fused backward when grads requested).
    std::vector<NetParams<Real>> chunk_grads;
    if (grads)
        chunk_grads.assign(static_cast<std::size_t>(n_chunks), zero_like(*grads));
    std::vector<double> chunk_loss(static_cast<std::size_t>(n_chunks), 0.0);
    std::vector<int> chunk_correct(static_cast<std::size_t>(n_chunks), 0);
    const std::size_t logits_layer = arch.layers.size() - 2;
    const Real inv_n = Real(1) / Real(n);

    detail::parallel_chunks(threads, n_chunks, [&](int c) {
        detail::Workspace<Real> ws;
        const int lo = c * kChunkSamples, hi = std::min(n, lo + kChunkSamples);
        for (int i = lo; i < hi; ++i) {
            SampleCache<Real> local;
            SampleCache<Real>& sc = keep ? keep->samples[static_cast<std::size_t>(i)] : local;
            const Real* resc = rescaled.data() + static_cast<std::size_t>(i) * in_sz;
            detail::sample_forward(arch, p, resc, mean.data(), inv_std.data(), sc, ws);
            const auto& probs = sc.act.back();
            std::copy(probs.begin(), probs.end(),
                      out.probs.data.begin() +
                          static_cast<std::size_t>(i) * arch.num_classes);
            if (labels) {
                const int y = labels[i];
                if (y < 0 || y >= arch.num_classes)
                    throw Error("label out of range");
                chunk_loss[static_cast<std::size_t>(c)] += kernels::cross_entropy_from_logits(
                    sc.act[logits_layer].data(), arch.num_classes, y);
                int am = 0;
                for (int k = 1; k < arch.num_classes; ++k)
                    if (probs[static_cast<std::size_t>(k)] > probs[static_cast<std::size_t>(am)])
                        am = k;
                chunk_correct[static_cast<std::size_t>(c)] += (am == y);
                if (grads)
                    detail::sample_backward(arch, p, resc, mean.data(), inv_std.data(), sc, y,
                                            inv_n, chunk_grads[static_cast<std::size_t>(c)], ws);
            }
        }
    });

    // Phase 4: deterministic reduction in chunk order.
    if (grads) {
        *grads = zero_like(*grads);
        for (const auto& cg : chunk_grads)
            detail::accumulate(*grads, cg);
    }
    for (int c = 0; c < n_chunks; ++c) {
        out.loss_sum += chunk_loss[static_cast<std::size_t>(c)];
        out.correct += chunk_correct[static_cast<std::size_t>(c)];
    }
    out.batch_mean = std::move(batch_mean);
    out.batch_var = std::move(batch_var);
    if (keep) {
        keep->batch_mean = out.batch_mean;
        keep->batch_var = out.batch_var;
        keep->rescaled = std::move(rescaled);
    }
    return out;
}

// Forward pass over a batch; returns class probabilities (n, num_classes).
// Train mode normalizes with batch statistics, infer mode with running
// statistics. Pass a cache to enable a later backward().
template <class Real>
Tensor<Real> forward(const ArchDescriptor& arch, const NetParams<Real>& p,
                     const Tensor<Real>& batch, Mode mode, ForwardCache<Real>* cache = nullptr,
                     int threads = 1) {
    auto out = run_batch<Real>(arch, p, batch, nullptr, mode, nullptr, cache, threads);
    if (!out.probs.all_finite())
        throw NonFiniteActivation("non-finite values in network output");
    return std::move(out.probs);
}

// Gradients of the batch-mean softmax-cross-entropy loss for every
// trainable parameter, from a train-mode forward cache.
template <class Real>
NetParams<Real> backward(const ArchDescriptor& arch, const NetParams<Real>& p,
                         const ForwardCache<Real>& cache, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != cache.n)
        throw ShapeMismatch("labels count does not match cached batch");
    if (cache.mode != Mode::train)
        throw Error("backward requires a train-mode forward cache");
    NetParams<Real> grads = zero_like(p);
    const std::size_t in_sz = cache.rescaled.size() / static_cast<std::size_t>(cache.n);
    const int n_chunks = (cache.n + kChunkSamples - 1) / kChunkSamples;
    std::vector<NetParams<Real>> chunk_grads(static_cast<std::size_t>(n_chunks),
                                             zero_like(p));
    const Real inv_n = Real(1) / Real(cache.n);
    detail::parallel_chunks(1, n_chunks, [&](int c) {
        detail::Workspace<Real> ws;
        const int lo = c * kChunkSamples, hi = std::min(cache.n, lo + kChunkSamples);
        for (int i = lo; i < hi; ++i)
            detail::sample_backward(arch, p, cache.rescaled.data() + i * in_sz,
                                    cache.mean.data(), cache.inv_std.data(),
                                    cache.samples[static_cast<std::size_t>(i)],
                                    labels[static_cast<std::size_t>(i)], inv_n,
                                    chunk_grads[static_cast<std::size_t>(c)], ws);
    });
    for (const auto& cg : chunk_grads)
        detail::accumulate(grads, cg);
    for (auto* t : trainable_tensors(grads))
        for (Real v : *t)
            if (!std::isfinite(static_cast<double>(v)))
                throw NonFiniteGradient("non-finite gradient");
    return grads;
}

template <class Real>
void update_running_stats(NetParams<Real>& p, const std::vector<Real>& batch_mean,
                          const std::vector<Real>& batch_var, double momentum = kBnMomentum) {
    for (std::size_t c = 0; c < p.bn_running_mean.size(); ++c) {
        p.bn_running_mean[c] = static_cast<Real>((1.0 - momentum) * p.bn_running_mean[c] +
                                                 momentum * batch_mean[c]);
        p.bn_running_var[c] = static_cast<Real>((1.0 - momentum) * p.bn_running_var[c] +
                                                momentum * batch_var[c]);
    }
}

// ---- weights blob ----
// [magic "ONASWTS\0"][u32 LE header length][JSON header][raw LE payload].
// The header lists tensor order, shapes and dtype; payload is tensors
// concatenated in header order.

namespace detail {

template <class Real>
const char* dtype_name() {
    if constexpr (sizeof(Real) == 4)
        return "float32";
    else
        return "float64";
}

template <class Real>
std::vector<std::pair<std::string, std::vector<Real>*>> named_tensors(NetParams<Real>& p) {
    std::vector<std::pair<std::string, std::vector<Real>*>> v;
    v.emplace_back("bn_gamma", &p.bn_gamma);
    v.emplace_back("bn_beta", &p.bn_beta);
    v.emplace_back("bn_running_mean", &p.bn_running_mean);
    v.emplace_back("bn_running_var", &p.bn_running_var);
    for (std::size_t i = 0; i < p.conv.size(); ++i) {
        v.emplace_back("conv" + std::to_string(i) + "_w", &p.conv[i].w);
        v.emplace_back("conv" + std::to_string(i) + "_b", &p.conv[i].b);
    }
    v.emplace_back("dense_hidden_w", &p.hidden.w);
    v.emplace_back("dense_hidden_b", &p.hidden.b);
    v.emplace_back("dense_head_w", &p.head.w);
    v.emplace_back("dense_head_b", &p.head.b);
    return v;
}

} // namespace detail

inline constexpr char kWeightsMagic[8] = {'O', 'N', 'A', 'S', 'W', 'T', 'S', '\0'};

template <class Real>
void save_weights(const std::string& path, NetParams<Real>& p) {
    static_assert(std::endian::native == std::endian::little,
                  "weights blob writer assumes a little-endian host");
    auto tensors = detail::named_tensors(p);
    nlohmann::json header;
    header["format"] = "occamnas-weights";
    header["dtype"] = detail::dtype_name<Real>();
    auto list = nlohmann::json::array();
    for (auto& [name, vec] : tensors)
        list.push_back({{"name", name}, {"shape", {vec->size()}}});
    header["tensors"] = std::move(list);
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot write weights file: " + path);
    f.write(kWeightsMagic, 8);
    const std::uint32_t len = static_cast<std::uint32_t>(hs.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (auto& [name, vec] : tensors)
        f.write(reinterpret_cast<const char*>(vec->data()),
                static_cast<std::streamsize>(vec->size() * sizeof(Real)));
    if (!f)
        throw Error("short write: " + path);
}

template <class Real>
NetParams<Real> load_weights(const std::string& path, const ArchDescriptor& arch) {
    static_assert(std::endian::native == std::endian::little,
                  "weights blob reader assumes a little-endian host");
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw Error("cannot read weights file: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kWeightsMagic, 8) != 0)
        throw ShapeMismatch("not a weights blob: " + path);
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string hs(len, '\0');
    f.read(hs.data(), len);
    if (!f)
        throw ShapeMismatch("truncated weights header: " + path);
    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "occamnas-weights")
        throw ShapeMismatch("malformed weights header: " + path);
    if (header.at("dtype").get<std::string>() != detail::dtype_name<Real>())
        throw ShapeMismatch("weights dtype mismatch: " + path);

    NetParams<Real> p = make_params<Real>(arch);
    auto tensors = detail::named_tensors(p);
    const auto& list = header.at("tensors");
    if (list.size() != tensors.size())
        throw ShapeMismatch("weights blob does not match architecture: " + path);
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& [name, vec] = tensors[i];
        if (list[i].at("name").get<std::string>() != name ||
            list[i].at("shape").at(0).get<std::size_t>() != vec->size())
            throw ShapeMismatch("weights tensor " + name + " does not match architecture");
        f.read(reinterpret_cast<char*>(vec->data()),
               static_cast<std::streamsize>(vec->size() * sizeof(Real)));
        if (!f)
            throw ShapeMismatch("truncated weights payload: " + path);
    }
    return p;
}

} // namespace occamnas
