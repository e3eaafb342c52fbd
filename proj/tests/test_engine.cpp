#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "occamnas/net.hpp"
#include "occamnas/rng.hpp"

using namespace occamnas;

namespace {

template <class Real>
Tensor<Real> random_batch(int n, int side, int ch, std::uint64_t seed, double lo = 0,
                          double hi = 255) {
    Tensor<Real> t{n, side, side, ch};
    Rng rng(seed);
    for (auto& v : t.data)
        v = static_cast<Real>(rng.uniform(lo, hi));
    return t;
}

template <class Real>
double batch_loss(const ArchDescriptor& arch, const NetParams<Real>& p,
                  const Tensor<Real>& batch, const std::vector<int>& labels) {
    auto out = run_batch<Real>(arch, p, batch, labels.data(), Mode::train, nullptr, nullptr, 1);
    return out.loss_sum / batch.shape[0];
}

} // namespace

TEST_CASE("zero weights give uniform softmax rows") {
    const auto arch = build_architecture({2, 1}, {8, 1}, 3);
    NetParams<float> p = make_params<float>(arch); // all-zero conv/dense weights
    const auto batch = random_batch<float>(4, 8, 1, 7);
    const auto probs = forward(arch, p, batch, Mode::train);
    for (int i = 0; i < 4; ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(probs(i, k) == Catch::Approx(1.0 / 3.0).margin(1e-6));
}

TEST_CASE("global average pooling is the mean") {
    const float in[4] = {1.0f, 2.0f, 3.0f, 6.0f}; // 2x2x1
    float out = 0;
    kernels::gap_forward(in, 4, 1, &out);
    CHECK(out == 3.0f);
}

TEST_CASE("forward matches a hand-computed chain on a tiny architecture") {
    const auto arch = build_architecture({1, 0}, {4, 1}, 2);
    NetParams<double> p = make_params<double>(arch);
    // Make the input batchnorm an exact identity: running stats (0, 1-eps).
    p.bn_running_var[0] = 1.0 - kBnEpsilon;
    const double w[9] = {0.5, -1.0, 0.25, 1.0, 2.0, -0.5, 0.0, 1.5, -0.75};
    std::copy(w, w + 9, p.conv[0].w.begin());
    p.conv[0].b[0] = 0.1;
    p.hidden.w = {1.2};
    p.hidden.b = {-0.05};
    p.head.w = {0.8, -0.4};
    p.head.b = {0.02, -0.01};

    // Input is the rescaled grid times 255, so the rescale layer restores it.
    const double grid[16] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8,
                             0.9, 1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
    Tensor<double> batch{1, 4, 4, 1};
    for (int i = 0; i < 16; ++i)
        batch.data[static_cast<std::size_t>(i)] = grid[i] * 255.0;

    const auto probs = forward(arch, p, batch, Mode::infer);

    // Hand path: zero-padded 3x3 convolution, ReLU, GAP, dense, softmax.
    double conv[16];
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            double acc = 0.1;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const int yy = y + ky - 1, xx = x + kx - 1;
                    if (yy >= 0 && yy < 4 && xx >= 0 && xx < 4)
                        acc += grid[yy * 4 + xx] * w[ky * 3 + kx];
                }
            conv[y * 4 + x] = std::max(0.0, acc);
        }
    double gap = 0;
    for (double v : conv)
        gap += v / 16.0;
    const double hidden = std::max(0.0, 1.2 * gap - 0.05);
    const double z0 = 0.8 * hidden + 0.02, z1 = -0.4 * hidden - 0.01;
    const double e0 = std::exp(z0 - std::max(z0, z1)), e1 = std::exp(z1 - std::max(z0, z1));
    CHECK(probs(0, 0) == Catch::Approx(e0 / (e0 + e1)).epsilon(1e-9));
    CHECK(probs(0, 1) == Catch::Approx(e1 / (e0 + e1)).epsilon(1e-9));
}

TEST_CASE("softmax rows are normalized") {
    const auto arch = build_architecture({3, 1}, {10, 3}, 4);
    NetParams<float> p = init_params<float>(arch, 11);
    const auto batch = random_batch<float>(9, 10, 3, 13);
    const auto probs = forward(arch, p, batch, Mode::train);
    for (int i = 0; i < 9; ++i) {
        double sum = 0;
        for (int k = 0; k < 4; ++k) {
            CHECK(probs(i, k) >= 0.0f);
            sum += probs(i, k);
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("train-mode batchnorm output is standardized before the affine pair") {
    const auto arch = build_architecture({2, 0}, {8, 3}, 2);
    NetParams<float> p = init_params<float>(arch, 3); // gamma=1, beta=0 at init
    // Bimodal pixels give the rescaled data a healthy variance.
    Tensor<float> batch{16, 8, 8, 3};
    Rng rng(5);
    for (auto& v : batch.data)
        v = rng.bernoulli(0.5) ? 255.0f : 0.0f;
    ForwardCache<float> cache;
    forward(arch, p, batch, Mode::train, &cache);
    const int ch = 3;
    for (int c = 0; c < ch; ++c) {
        double sum = 0, sumsq = 0;
        long long count = 0;
        for (const auto& sc : cache.samples)
            for (std::size_t i = static_cast<std::size_t>(c); i < sc.act[1].size(); i += ch) {
                sum += sc.act[1][i];
                sumsq += sc.act[1][i] * sc.act[1][i];
                ++count;
            }
        const double mean = sum / static_cast<double>(count);
        const double var = sumsq / static_cast<double>(count) - mean * mean;
        CHECK(std::abs(mean) <= 1e-5);
        CHECK(std::abs(var - 1.0) <= 1e-4);
    }
}

TEST_CASE("head bias gradient is softmax minus one-hot") {
    const auto arch = build_architecture({2, 0}, {6, 1}, 3);
    NetParams<double> p = init_params<double>(arch, 17);
    const auto batch = random_batch<double>(1, 6, 1, 19);
    ForwardCache<double> cache;
    const auto probs = forward(arch, p, batch, Mode::train, &cache);
    const auto grads = backward(arch, p, cache, {1});
    for (int k = 0; k < 3; ++k)
        CHECK(grads.head.b[static_cast<std::size_t>(k)] ==
              Catch::Approx(probs(0, k) - (k == 1 ? 1.0 : 0.0)).epsilon(1e-12));
}

TEST_CASE("a duplicated sample doubles its summed gradient contribution") {
    const auto arch = build_architecture({2, 1}, {8, 1}, 2);
    NetParams<float> p = init_params<float>(arch, 23);
    const auto one = random_batch<float>(1, 8, 1, 29);
    Tensor<float> two{2, 8, 8, 1};
    std::copy(one.data.begin(), one.data.end(), two.data.begin());
    std::copy(one.data.begin(), one.data.end(), two.data.begin() + one.data.size());

    NetParams<float> g1 = zero_like(p), g2 = zero_like(p);
    const std::vector<int> l1{1}, l2{1, 1};
    run_batch<float>(arch, p, one, l1.data(), Mode::train, &g1, nullptr, 1);
    run_batch<float>(arch, p, two, l2.data(), Mode::train, &g2, nullptr, 1);

    // Batch-mean gradients agree up to statistics-accumulation rounding;
    // the per-sample (summed) contribution of the duplicated sample is
    // therefore doubled.
    auto t1 = trainable_tensors(g1), t2 = trainable_tensors(g2);
    for (std::size_t t = 0; t < t1.size(); ++t)
        for (std::size_t i = 0; i < t1[t]->size(); ++i)
            CHECK((*t2[t])[i] ==
                  Catch::Approx((*t1[t])[i]).epsilon(1e-5).margin(1e-7));
}

TEST_CASE("analytic gradients match central finite differences") {
    const auto arch = build_architecture({2, 1}, {6, 1}, 3);
    NetParams<double> p = init_params<double>(arch, 31);
    const auto batch = random_batch<double>(3, 6, 1, 37);
    const std::vector<int> labels{0, 2, 1};

    ForwardCache<double> cache;
    forward(arch, p, batch, Mode::train, &cache);
    auto grads = backward(arch, p, cache, labels);

    const double h = 1e-4;
    auto pt = trainable_tensors(p);
    auto gt = trainable_tensors(grads);
    int checked = 0;
    for (std::size_t t = 0; t < pt.size(); ++t) {
        for (std::size_t i = 0; i < pt[t]->size(); ++i) {
            const double saved = (*pt[t])[i];
            (*pt[t])[i] = saved + h;
            const double up = batch_loss(arch, p, batch, labels);
            (*pt[t])[i] = saved - h;
            const double down = batch_loss(arch, p, batch, labels);
            (*pt[t])[i] = saved;
            const double fd = (up - down) / (2 * h);
            const double an = (*gt[t])[i];
            if (std::abs(fd) < 1e-8 && std::abs(an) < 1e-8)
                continue;
            const double rel = std::abs(fd - an) / std::max(std::abs(fd), std::abs(an));
            INFO("tensor " << t << " index " << i << " fd " << fd << " analytic " << an);
            CHECK(rel < 1e-3);
            ++checked;
        }
    }
    CHECK(checked > 50); // the check must actually exercise the parameters
}

TEST_CASE("non-finite activations are detected") {
    const auto arch = build_architecture({1, 0}, {4, 1}, 2);
    NetParams<float> p = init_params<float>(arch, 41);
    p.conv[0].w[0] = std::numeric_limits<float>::infinity();
    const auto batch = random_batch<float>(1, 4, 1, 43);
    CHECK_THROWS_AS(forward(arch, p, batch, Mode::train), NonFiniteActivation);
}

TEST_CASE("batch shape mismatches are rejected") {
    const auto arch = build_architecture({1, 0}, {4, 1}, 2);
    NetParams<float> p = init_params<float>(arch, 47);
    const auto wrong = random_batch<float>(1, 5, 1, 47);
    CHECK_THROWS_AS(forward(arch, p, wrong, Mode::train), ShapeMismatch);
}

TEST_CASE("weights blob round trip and truncation") {
    const auto arch = build_architecture({2, 1}, {8, 1}, 3);
    NetParams<float> p = init_params<float>(arch, 53);
    p.bn_running_mean[0] = 0.25f;
    const std::string path = (std::filesystem::temp_directory_path() / "onas_w.bin").string();
    save_weights(path, p);
    const auto q = load_weights<float>(path, arch);
    CHECK(q.conv[0].w == p.conv[0].w);
    CHECK(q.bn_running_mean == p.bn_running_mean);
    CHECK(q.head.b == p.head.b);

    // truncate the payload
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 8);
    CHECK_THROWS_AS(load_weights<float>(path, arch), ShapeMismatch);

    // wrong architecture
    save_weights(path, p);
    const auto other = build_architecture({3, 1}, {8, 1}, 3);
    CHECK_THROWS_AS(load_weights<float>(path, other), ShapeMismatch);
}
