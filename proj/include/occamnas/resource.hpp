#pragma once

// Analytic stand-ins for the vendor footprint tooling: peak RAM, Flash and
// MACC estimators, the feasibility predicate, and the MCU target presets.
//
// Sizing assumes post-training int8 deployment: 1-byte activations and
// weights, 4-byte biases, plus small per-tensor and per-graph overheads.
// Peak RAM follows a sequential two-buffer liveness model: at any step the
// live set is one input and one output activation buffer, except for layers
// that can run in place (rescale, input batchnorm, softmax).

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "occamnas/arch.hpp"
#include "occamnas/errors.hpp"

namespace occamnas {

struct HardwareTarget {
    long long xi_ram = 0;   // bytes
    long long xi_flash = 0; // bytes
    long long xi_macc = 0;  // multiply-accumulate count
    std::string name;
};

struct SizingConfig {
    long long activation_bytes_per_element = 1; // int8 activations
    long long weight_bytes = 1;                 // int8 weights
    long long bias_bytes = 4;                   // int32 biases
    long long per_tensor_quant_overhead = 8;    // scale/zero-point per parameterized tensor
    long long runtime_ram_overhead = 2048;      // interpreter scratch
    long long flash_graph_overhead = 4096;      // graph/schedule metadata
};

struct LayerResources {
    int layer_index = 0;
    long long act_bytes_in = 0;
    long long act_bytes_out = 0;
    long long params = 0; // weights + biases (BN counts all 4 per-channel vectors)
    long long macc = 0;
};

struct ResourceReport {
    long long phi_ram = 0;
    long long phi_flash = 0;
    long long phi_macc = 0;
    std::vector<LayerResources> per_layer;
};

namespace detail {

struct ParamSplit {
    long long weights = 0;
    long long biases = 0; // bias-sized parameters (conv/dense biases, all BN vectors)
};

inline ParamSplit layer_params(const LayerSpec& l) {
    switch (l.kind) {
    case LayerKind::conv3x3_same:
        return {9LL * l.in.ch * l.out.ch, l.out.ch};
    case LayerKind::dense:
        return {1LL * l.in.ch * l.out.ch, l.out.ch};
    case LayerKind::batchnorm_input:
        return {0, 4LL * l.in.ch}; // gamma, beta, running mean, running var
    default:
        return {};
    }
}

inline long long layer_macc(const LayerSpec& l) {
    switch (l.kind) {
    case LayerKind::conv3x3_same:
        return 1LL * l.out.h * l.out.w * 9 * l.in.ch * l.out.ch;
    case LayerKind::dense:
        return 1LL * l.in.ch * l.out.ch;
    default:
        return 0; // rescale/BN/pool/GAP/softmax: no multiplies counted
    }
}

inline bool in_place(LayerKind k) {
    return k == LayerKind::rescale || k == LayerKind::batchnorm_input ||
           k == LayerKind::softmax;
}

} // namespace detail

inline ResourceReport resource_report(const ArchDescriptor& arch, const SizingConfig& sizing) {
    ResourceReport rep;
    long long parameterized_layers = 0;
    long long weight_bytes = 0, bias_bytes = 0;
    // A network must at least hold its input buffer.
    long long input_bytes =
        (arch.layers.empty() ? 1LL * arch.input.side * arch.input.side * arch.input.channels
                             : arch.layers.front().in.elements()) *
        sizing.activation_bytes_per_element;
    long long peak = input_bytes;

    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const auto& l = arch.layers[i];
        const auto split = detail::layer_params(l);
        LayerResources row;
        row.layer_index = static_cast<int>(i);
        row.act_bytes_in = l.in.elements() * sizing.activation_bytes_per_element;
        row.act_bytes_out = l.out.elements() * sizing.activation_bytes_per_element;
        row.params = split.weights + split.biases;
        row.macc = detail::layer_macc(l);
        rep.per_layer.push_back(row);

        rep.phi_macc += row.macc;
        weight_bytes += split.weights * sizing.weight_bytes;
        bias_bytes += split.biases * sizing.bias_bytes;
        if (split.weights + split.biases > 0)
            ++parameterized_layers;

        const long long live = detail::in_place(l.kind)
                                   ? std::max(row.act_bytes_in, row.act_bytes_out)
                                   : row.act_bytes_in + row.act_bytes_out;
        peak = std::max(peak, live);
    }
    rep.phi_ram = peak + sizing.runtime_ram_overhead;
    rep.phi_flash = weight_bytes + bias_bytes +
                    parameterized_layers * sizing.per_tensor_quant_overhead +
                    sizing.flash_graph_overhead;
    return rep;
}

inline long long estimate_macc(const ArchDescriptor& arch) {
    long long total = 0;
    for (const auto& l : arch.layers)
        total += detail::layer_macc(l);
    return total;
}

inline long long estimate_flash(const ArchDescriptor& arch, const SizingConfig& sizing) {
    return resource_report(arch, sizing).phi_flash;
}

inline long long estimate_peak_ram(const ArchDescriptor& arch, const SizingConfig& sizing) {
    return resource_report(arch, sizing).phi_ram;
}

// Feasibility is a value, not an error; the full report is always returned.
inline std::pair<bool, ResourceReport> is_feasible(const ArchDescriptor& arch,
                                                   const HardwareTarget& target,
                                                   const SizingConfig& sizing) {
    ResourceReport rep = resource_report(arch, sizing);
    const bool ok = rep.phi_ram <= target.xi_ram && rep.phi_flash <= target.xi_flash &&
                    rep.phi_macc <= target.xi_macc &&
                    arch.point.c <= max_cells(arch.input);
    return {ok, std::move(rep)};
}

// STM32 ultra-low-power targets; the MACC budget is CoreMark x 10^4.
inline HardwareTarget target_preset(const std::string& name) {
    if (name == "L0")
        return {20 * 1024, 128 * 1024, 750'000, "L0"}; // L010RBT6, CoreMark 75
    if (name == "L1")
        return {32 * 1024, 256 * 1024, 930'000, "L1"}; // L151UCY6DTR, CoreMark 93
    if (name == "L4")
        return {40 * 1024, 128 * 1024, 2'730'000, "L4"}; // L412KBU3, CoreMark 273
    throw UnknownPreset("unknown target preset: " + name);
}

// ---- report output ----

inline nlohmann::json to_json(const ResourceReport& rep) {
    nlohmann::json j;
    j["phi_ram"] = rep.phi_ram;
    j["phi_flash"] = rep.phi_flash;
    j["phi_macc"] = rep.phi_macc;
    auto rows = nlohmann::json::array();
    for (const auto& r : rep.per_layer)
        rows.push_back({{"layer", r.layer_index},
                        {"act_bytes_in", r.act_bytes_in},
                        {"act_bytes_out", r.act_bytes_out},
                        {"params", r.params},
                        {"macc", r.macc}});
    j["per_layer"] = std::move(rows);
    return j;
}

inline double to_kib(long long bytes) { return static_cast<double>(bytes) / 1024.0; }

} // namespace occamnas
