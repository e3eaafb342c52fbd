#pragma once

// Cell-wise search space: the damped kernel-doubling schedule and the
// elaboration of a search point (k, c) into a concrete VGG-style layer
// sequence.
//
// The grammar is fixed:
//   rescale -> batchnorm_input -> conv(n0) -> (pool -> conv(ni)) x c
//           -> global_avg_pool -> dense(nc) -> dense(num_classes) -> softmax
//
// Convs are 3x3, stride 1, zero-padded (spatial size preserved), ReLU.
// Pools are 2x2 stride 2 with floor division on odd sides. The deep dense
// layer is as wide as the last conv and is followed by ReLU; the head dense
// layer feeds the softmax.

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "occamnas/errors.hpp"

namespace occamnas {

struct SearchPoint {
    int k = 0; // kernels in the first conv layer, >= 1
    int c = 0; // number of cells appended, >= 0

    friend bool operator==(const SearchPoint&, const SearchPoint&) = default;
    friend auto operator<=>(const SearchPoint&, const SearchPoint&) = default;
};

struct InputShape {
    int side = 0;     // square spatial side, px
    int channels = 0; // 1 or 3

    friend bool operator==(const InputShape&, const InputShape&) = default;
};

enum class LayerKind {
    rescale,
    batchnorm_input,
    conv3x3_same,
    maxpool2x2_s2,
    global_avg_pool,
    dense,
    softmax,
};

// Activation shape: spatial (h, w, ch) when h > 0, else a flat vector of
// `ch` elements.
struct ActShape {
    int h = 0;
    int w = 0;
    int ch = 0;

    bool flat() const { return h == 0; }
    long long elements() const { return flat() ? ch : 1LL * h * w * ch; }

    static ActShape spatial(int h, int w, int ch) { return {h, w, ch}; }
    static ActShape vec(int n) { return {0, 0, n}; }

    friend bool operator==(const ActShape&, const ActShape&) = default;
};

struct LayerSpec {
    LayerKind kind{};
    ActShape in;
    ActShape out;
    int kernels_or_units = 0; // conv kernel count or dense width, 0 otherwise

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ArchDescriptor {
    SearchPoint point;
    InputShape input;
    int num_classes = 0;
    std::vector<int> kernel_schedule; // [n0 .. nc]
    std::vector<LayerSpec> layers;
};

// Number of kernels per cell. n0 = k; each added cell multiplies the
// previous count by 2 - sum_{i=1}^{c-1} 2^-i (== 1 + 2^(1-c)) and rounds up,
// so growth starts at doubling and damps toward identity.
inline std::vector<int> kernel_schedule(int k, int c) {
    if (k < 1)
        throw Error("kernel_schedule: k must be >= 1, got " + std::to_string(k));
    if (c < 0)
        throw Error("kernel_schedule: c must be >= 0, got " + std::to_string(c));
    std::vector<int> n;
    n.reserve(static_cast<size_t>(c) + 1);
    n.push_back(k);
    for (int i = 1; i <= c; ++i) {
        const double mult = 1.0 + std::ldexp(1.0, 1 - i);
        n.push_back(static_cast<int>(std::ceil(mult * n.back())));
    }
    return n;
}

// Largest cell count whose pooling chain stays spatially valid: every pool
// must act on a side >= 2, each producing floor(side / 2).
inline int max_cells(const InputShape& input) {
    if (input.side < 1)
        throw Error("max_cells: input side must be >= 1");
    int side = input.side;
    int cells = 0;
    while (side >= 2) {
        side /= 2;
        ++cells;
    }
    return cells;
}

inline bool spatially_feasible(const SearchPoint& point, const InputShape& input) {
    return point.k >= 1 && point.c >= 0 && point.c <= max_cells(input);
}

inline ArchDescriptor build_architecture(const SearchPoint& point, const InputShape& input,
                                         int num_classes) {
    if (point.k < 1)
        throw Error("build_architecture: k must be >= 1");
    if (input.side < 1)
        throw Error("build_architecture: input side must be >= 1");
    if (input.channels != 1 && input.channels != 3)
        throw Error("build_architecture: channels must be 1 or 3");
    if (num_classes < 2)
        throw Error("build_architecture: num_classes must be >= 2");
    if (point.c > max_cells(input))
        throw SpatiallyInfeasible("build_architecture: c=" + std::to_string(point.c) +
                                  " exceeds max_cells(" + std::to_string(input.side) +
                                  ")=" + std::to_string(max_cells(input)));

    ArchDescriptor arch;
    arch.point = point;
    arch.input = input;
    arch.num_classes = num_classes;
    arch.kernel_schedule = kernel_schedule(point.k, point.c);

    int side = input.side;
    auto cur = ActShape::spatial(side, side, input.channels);
    auto push = [&](LayerKind kind, ActShape out, int ku = 0) {
        arch.layers.push_back({kind, cur, out, ku});
        cur = out;
    };

    push(LayerKind::rescale, cur);
    push(LayerKind::batchnorm_input, cur);
    push(LayerKind::conv3x3_same, ActShape::spatial(side, side, arch.kernel_schedule[0]),
         arch.kernel_schedule[0]);
    for (int i = 1; i <= point.c; ++i) {
        side /= 2;
        push(LayerKind::maxpool2x2_s2, ActShape::spatial(side, side, cur.ch));
        push(LayerKind::conv3x3_same, ActShape::spatial(side, side, arch.kernel_schedule[i]),
             arch.kernel_schedule[i]);
    }
    const int nc = arch.kernel_schedule.back();
    push(LayerKind::global_avg_pool, ActShape::vec(nc));
    push(LayerKind::dense, ActShape::vec(nc), nc);
    push(LayerKind::dense, ActShape::vec(num_classes), num_classes);
    push(LayerKind::softmax, ActShape::vec(num_classes));
    return arch;
}

// ---- JSON serialization (the CLI's primary output artifact) ----

inline const char* to_string(LayerKind kind) {
    switch (kind) {
    case LayerKind::rescale: return "rescale";
    case LayerKind::batchnorm_input: return "batchnorm_input";
    case LayerKind::conv3x3_same: return "conv3x3_same";
    case LayerKind::maxpool2x2_s2: return "maxpool2x2_s2";
    case LayerKind::global_avg_pool: return "global_avg_pool";
    case LayerKind::dense: return "dense";
    case LayerKind::softmax: return "softmax";
    }
    return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "rescale") return LayerKind::rescale;
    if (s == "batchnorm_input") return LayerKind::batchnorm_input;
    if (s == "conv3x3_same") return LayerKind::conv3x3_same;
    if (s == "maxpool2x2_s2") return LayerKind::maxpool2x2_s2;
    if (s == "global_avg_pool") return LayerKind::global_avg_pool;
    if (s == "dense") return LayerKind::dense;
    if (s == "softmax") return LayerKind::softmax;
    throw Error("unknown layer kind: " + s);
}

inline nlohmann::json shape_to_json(const ActShape& s) {
    if (s.flat())
        return nlohmann::json::array({s.ch});
    return nlohmann::json::array({s.h, s.w, s.ch});
}

inline ActShape shape_from_json(const nlohmann::json& j) {
    if (!j.is_array() || (j.size() != 1 && j.size() != 3))
        throw Error("shape must be a 1- or 3-element array");
    if (j.size() == 1)
        return ActShape::vec(j[0].get<int>());
    return ActShape::spatial(j[0].get<int>(), j[1].get<int>(), j[2].get<int>());
}

inline nlohmann::json to_json(const ArchDescriptor& arch) {
    nlohmann::json j;
    j["point"] = {{"k", arch.point.k}, {"c", arch.point.c}};
    j["input"] = {{"side", arch.input.side}, {"channels", arch.input.channels}};
    j["num_classes"] = arch.num_classes;
    j["kernel_schedule"] = arch.kernel_schedule;
    auto layers = nlohmann::json::array();
    for (const auto& l : arch.layers) {
        nlohmann::json jl;
        jl["kind"] = to_string(l.kind);
        jl["in"] = shape_to_json(l.in);
        jl["out"] = shape_to_json(l.out);
        if (l.kernels_or_units != 0)
            jl["kernels_or_units"] = l.kernels_or_units;
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    return j;
}

// Rebuilds the descriptor from (k, c, input, classes) and cross-checks the
// serialized layer list, so hand-edited files cannot smuggle in an
// inconsistent architecture.
inline ArchDescriptor arch_from_json(const nlohmann::json& j) {
    SearchPoint p{j.at("point").at("k").get<int>(), j.at("point").at("c").get<int>()};
    InputShape in{j.at("input").at("side").get<int>(), j.at("input").at("channels").get<int>()};
    ArchDescriptor arch = build_architecture(p, in, j.at("num_classes").get<int>());
    const auto& layers = j.at("layers");
    if (layers.size() != arch.layers.size())
        throw Error("arch json: layer count mismatch");
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const auto& jl = layers[i];
        if (layer_kind_from_string(jl.at("kind").get<std::string>()) != arch.layers[i].kind ||
            shape_from_json(jl.at("in")) != arch.layers[i].in ||
            shape_from_json(jl.at("out")) != arch.layers[i].out)
            throw Error("arch json: layer " + std::to_string(i) +
                        " inconsistent with (k, c, input)");
    }
    return arch;
}

} // namespace occamnas
