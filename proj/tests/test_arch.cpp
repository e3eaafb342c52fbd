#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "occamnas/arch.hpp"
#include "support/oracles.hpp"

using namespace occamnas;

TEST_CASE("kernel schedule base cases") {
    CHECK(kernel_schedule(4, 0) == std::vector<int>{4});
    CHECK(kernel_schedule(4, 1) == std::vector<int>{4, 8});
    CHECK(kernel_schedule(4, 3) == std::vector<int>{4, 8, 12, 15});
    CHECK_THROWS_AS(kernel_schedule(0, 2), Error);
}

TEST_CASE("kernel schedule matches the literal partial-sum evaluation") {
    for (int k = 1; k <= 64; ++k)
        for (int c = 0; c <= 8; ++c)
            CHECK(kernel_schedule(k, c) == oracles::kernel_schedule_literal(k, c));
}

TEST_CASE("kernel schedule is strictly increasing") {
    for (int k : {1, 2, 3, 5, 8, 16, 33}) {
        const auto n = kernel_schedule(k, 7);
        for (std::size_t i = 1; i < n.size(); ++i)
            CHECK(n[i] > n[i - 1]);
    }
}

TEST_CASE("multiplier closed form equals the literal sum") {
    for (int c = 1; c <= 32; ++c) {
        double sum = 0.0;
        for (int i = 1; i <= c - 1; ++i)
            sum += std::pow(2.0, -i);
        const double literal = 2.0 - sum;
        const double closed = 1.0 + std::ldexp(1.0, 1 - c);
        CHECK(std::abs(literal - closed) <= 1e-12);
    }
}

TEST_CASE("max_cells counts valid pooling steps") {
    CHECK(max_cells({50, 3}) == 5); // 50 -> 25 -> 12 -> 6 -> 3 -> 1
    CHECK(max_cells({28, 1}) == 4); // 28 -> 14 -> 7 -> 3 -> 1
    CHECK(max_cells({1, 1}) == 0);
    CHECK(max_cells({2, 1}) == 1);
    CHECK(max_cells({3, 3}) == 1);
}

TEST_CASE("build_architecture elaborates the grammar") {
    const auto arch = build_architecture({4, 2}, {50, 3}, 2);
    REQUIRE(arch.kernel_schedule == std::vector<int>{4, 8, 12});
    REQUIRE(arch.layers.size() == 11);

    CHECK(arch.layers[0].kind == LayerKind::rescale);
    CHECK(arch.layers[0].out == ActShape::spatial(50, 50, 3));
    CHECK(arch.layers[1].kind == LayerKind::batchnorm_input);
    CHECK(arch.layers[2].kind == LayerKind::conv3x3_same);
    CHECK(arch.layers[2].out == ActShape::spatial(50, 50, 4));
    CHECK(arch.layers[3].kind == LayerKind::maxpool2x2_s2);
    CHECK(arch.layers[3].out == ActShape::spatial(25, 25, 4));
    CHECK(arch.layers[4].out == ActShape::spatial(25, 25, 8));
    CHECK(arch.layers[5].out == ActShape::spatial(12, 12, 8)); // floor(25/2)
    CHECK(arch.layers[6].out == ActShape::spatial(12, 12, 12));
    CHECK(arch.layers[7].kind == LayerKind::global_avg_pool);
    CHECK(arch.layers[7].out == ActShape::vec(12));
    CHECK(arch.layers[8].kind == LayerKind::dense);
    CHECK(arch.layers[8].out == ActShape::vec(12)); // deep dense width = n_c
    CHECK(arch.layers[9].kind == LayerKind::dense);
    CHECK(arch.layers[9].out == ActShape::vec(2));
    CHECK(arch.layers[10].kind == LayerKind::softmax);
}

TEST_CASE("zero-cell architecture uses n0 for the deep dense layer") {
    const auto arch = build_architecture({4, 0}, {50, 3}, 2);
    REQUIRE(arch.layers.size() == 7);
    CHECK(arch.layers[2].out == ActShape::spatial(50, 50, 4));
    CHECK(arch.layers[3].kind == LayerKind::global_avg_pool);
    CHECK(arch.layers[4].out == ActShape::vec(4));
    CHECK(arch.layers[5].out == ActShape::vec(2));
}

TEST_CASE("build_architecture rejects spatially impossible cell counts") {
    CHECK_THROWS_AS(build_architecture({4, 6}, {50, 3}, 2), SpatiallyInfeasible);
    CHECK_NOTHROW(build_architecture({4, 5}, {50, 3}, 2));
}

TEST_CASE("layer shapes chain") {
    for (int k : {1, 3, 8})
        for (int c = 0; c <= 3; ++c)
            for (int s : {8, 13, 32}) {
                const auto arch = build_architecture({k, c}, {s, 3}, 4);
                for (std::size_t i = 1; i < arch.layers.size(); ++i)
                    CHECK(arch.layers[i].in == arch.layers[i - 1].out);
            }
}

TEST_CASE("build_architecture is deterministic") {
    const auto a = build_architecture({6, 2}, {28, 1}, 10);
    const auto b = build_architecture({6, 2}, {28, 1}, 10);
    CHECK(a.layers == b.layers);
    CHECK(a.kernel_schedule == b.kernel_schedule);
}

TEST_CASE("arch json round trip") {
    const auto arch = build_architecture({4, 2}, {50, 3}, 2);
    const auto j = to_json(arch);
    const auto back = arch_from_json(j);
    CHECK(back.point == arch.point);
    CHECK(back.layers == arch.layers);
    CHECK(back.kernel_schedule == arch.kernel_schedule);

    auto tampered = j;
    tampered["layers"][2]["out"] = {50, 50, 5}; // inconsistent kernel count
    CHECK_THROWS_AS(arch_from_json(tampered), Error);
}
