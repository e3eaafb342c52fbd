#pragma once

// Dense row-major tensor, up to 4 dims. Batches are (n, h, w, ch) with the
// channel index fastest; flat activations are (n, features). This is a
// container, not an expression library: the layer kernels work on raw
// spans for speed.

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "occamnas/errors.hpp"

namespace occamnas {

template <class Real>
struct Tensor {
    std::array<int, 4> shape{1, 1, 1, 1};
    int rank = 0;
    std::vector<Real> data;

    Tensor() = default;

    explicit Tensor(std::initializer_list<int> dims) {
        rank = static_cast<int>(dims.size());
        if (rank < 1 || rank > 4)
            throw Error("tensor rank must be 1..4");
        int i = 0;
        std::size_t n = 1;
        for (int d : dims) {
            shape[i++] = d;
            n *= static_cast<std::size_t>(d);
        }
        for (; i < 4; ++i)
            shape[i] = 1;
        data.assign(n, Real(0));
    }

    std::size_t size() const { return data.size(); }

    Real& operator()(int a) { return data[static_cast<std::size_t>(a)]; }
    Real operator()(int a) const { return data[static_cast<std::size_t>(a)]; }
    Real& operator()(int a, int b) { return data[static_cast<std::size_t>(a) * shape[1] + b]; }
    Real operator()(int a, int b) const {
        return data[static_cast<std::size_t>(a) * shape[1] + b];
    }
    Real& operator()(int a, int b, int c) {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    Real operator()(int a, int b, int c) const {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    Real& operator()(int a, int b, int c, int d) {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }
    Real operator()(int a, int b, int c, int d) const {
        return data[((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) * shape[3] + d];
    }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(static_cast<double>(v)))
                return false;
        return true;
    }

    template <class Other>
    Tensor<Other> cast() const {
        Tensor<Other> t;
        t.shape = shape;
        t.rank = rank;
        t.data.reserve(data.size());
        for (Real v : data)
            t.data.push_back(static_cast<Other>(v));
        return t;
    }
};

} // namespace occamnas
