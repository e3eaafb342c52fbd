#pragma once

// Independent reference implementations used to pin expected values. These
// deliberately avoid the closed forms and aggregate formulas used by the
// library: schedules come from the literal partial sum, counts from
// element-by-element enumeration, and peak RAM from a buffer-liveness
// simulation.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "occamnas/arch.hpp"
#include "occamnas/resource.hpp"
#include "occamnas/search.hpp"

namespace oracles {

// Kernel schedule by direct evaluation: multiplier = 2 - sum_{i=1}^{c-1} 2^-i,
// summed term by term.
inline std::vector<int> kernel_schedule_literal(int k, int c) {
    std::vector<int> n{k};
    for (int step = 1; step <= c; ++step) {
        double sum = 0.0;
        for (int i = 1; i <= step - 1; ++i)
            sum += std::pow(2.0, -i);
        const double mult = 2.0 - sum;
        n.push_back(static_cast<int>(std::ceil(mult * n.back())));
    }
    return n;
}

// MACC by iterating every output element of every layer and counting the
// multiply-accumulates it performs (padded taps included: the deployed
// kernel multiplies zeros there too).
inline long long count_macc_bruteforce(const occamnas::ArchDescriptor& arch) {
    long long total = 0;
    for (const auto& l : arch.layers) {
        if (l.kind == occamnas::LayerKind::conv3x3_same) {
            for (int y = 0; y < l.out.h; ++y)
                for (int x = 0; x < l.out.w; ++x)
                    for (int oc = 0; oc < l.out.ch; ++oc)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx)
                                for (int ic = 0; ic < l.in.ch; ++ic)
                                    ++total;
        } else if (l.kind == occamnas::LayerKind::dense) {
            for (int o = 0; o < l.out.ch; ++o)
                for (int i = 0; i < l.in.ch; ++i)
                    ++total;
        }
    }
    return total;
}

struct ParamCount {
    long long weights = 0;
    long long biases = 0; // bias-sized parameters, including the BN vectors
    long long layers_with_params = 0;
};

// Parameter counts by enumerating each parameter individually.
inline ParamCount count_params_bruteforce(const occamnas::ArchDescriptor& arch) {
    ParamCount pc;
    for (const auto& l : arch.layers) {
        long long w = 0, b = 0;
        switch (l.kind) {
        case occamnas::LayerKind::conv3x3_same:
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx)
                    for (int ic = 0; ic < l.in.ch; ++ic)
                        for (int oc = 0; oc < l.out.ch; ++oc)
                            ++w;
            for (int oc = 0; oc < l.out.ch; ++oc)
                ++b;
            break;
        case occamnas::LayerKind::dense:
            for (int i = 0; i < l.in.ch; ++i)
                for (int o = 0; o < l.out.ch; ++o)
                    ++w;
            for (int o = 0; o < l.out.ch; ++o)
                ++b;
            break;
        case occamnas::LayerKind::batchnorm_input:
            for (int v = 0; v < 4; ++v) // gamma, beta, running mean, running var
                for (int ch = 0; ch < l.in.ch; ++ch)
                    ++b;
            break;
        default:
            break;
        }
        pc.weights += w;
        pc.biases += b;
        if (w + b > 0)
            ++pc.layers_with_params;
    }
    return pc;
}

inline long long flash_bruteforce(const occamnas::ArchDescriptor& arch,
                                  const occamnas::SizingConfig& s) {
    const ParamCount pc = count_params_bruteforce(arch);
    return pc.weights * s.weight_bytes + pc.biases * s.bias_bytes +
           pc.layers_with_params * s.per_tensor_quant_overhead + s.flash_graph_overhead;
}

// Peak RAM by simulating sequential execution with explicit buffer lifetimes.
inline long long peak_ram_simulation(const occamnas::ArchDescriptor& arch,
                                     const occamnas::SizingConfig& s) {
    using occamnas::LayerKind;
    const long long bpe = s.activation_bytes_per_element;
    long long live = arch.layers.empty()
                         ? 1LL * arch.input.side * arch.input.side * arch.input.channels * bpe
                         : arch.layers.front().in.elements() * bpe;
    long long peak = live;
    for (const auto& l : arch.layers) {
        const bool in_place = l.kind == LayerKind::rescale ||
                              l.kind == LayerKind::batchnorm_input ||
                              l.kind == LayerKind::softmax;
        const long long in_bytes = l.in.elements() * bpe;
        const long long out_bytes = l.out.elements() * bpe;
        if (in_place) {
            live = std::max(in_bytes, out_bytes);
        } else {
            peak = std::max(peak, in_bytes + out_bytes); // both buffers alive
            live = out_bytes;
        }
        peak = std::max(peak, live);
    }
    return peak + s.runtime_ram_overhead;
}

// ---- trace replay (Alg. 1 / Alg. 2 stopping guarantees) ----

struct ReplayIssue {
    bool ok = true;
    std::string message;
};

// Verifies, from the recorded trace alone, that a finished search satisfied
// its contract:
//  * the returned candidate is feasible and is the last accepted outer entry;
//  * consecutive accepted outer candidates improved per branch rule
//    (strictly +epsilon while doubling, non-degrading while halving);
//  * the search stopped for a recorded reason (a rejected outer probe) or
//    because the axis was structurally exhausted;
//  * within each cell exploration, accepted steps strictly improve and are
//    feasible, and the returned point's evaluated successor was rejected;
//  * no (k, c) was evaluated twice (memoization).
inline ReplayIssue replay_search_trace(const occamnas::SearchResult& result, double epsilon,
                                       int max_c) {
    using namespace occamnas;
    auto fail = [](std::string m) { return ReplayIssue{false, std::move(m)}; };
    const auto& entries = result.trace.entries;
    if (entries.empty())
        return fail("empty trace");
    if (!result.best.feasible)
        return fail("returned candidate is infeasible");

    // Outer chain.
    std::vector<TraceEntry> outer;
    for (const auto& e : entries)
        if (e.phase == Phase::outer)
            outer.push_back(e);
    if (outer.empty() || outer.front().j != 0 || outer.front().decision != Decision::accept)
        return fail("outer chain must start with an accepted j=0 entry");
    const TraceEntry* last_accepted = &outer.front();
    bool halving = false;
    for (std::size_t idx = 1; idx < outer.size(); ++idx) {
        const auto& e = outer[idx];
        if (idx == 1 && e.decision != Decision::accept) {
            // The doubled start was rejected; the walk restarts from k0 and
            // halves, with the j=0 result as its baseline.
            halving = true;
            continue;
        }
        if (e.decision == Decision::accept) {
            if (!e.feasible)
                return fail("accepted outer candidate is infeasible");
            if (idx == 1) {
                if (!(e.accuracy > last_accepted->accuracy))
                    return fail("doubled start accepted without strict improvement");
            } else if (!halving) {
                if (!(e.accuracy > last_accepted->accuracy + epsilon))
                    return fail("doubling accepted without epsilon improvement");
            } else {
                if (!(e.accuracy >= last_accepted->accuracy))
                    return fail("halving accepted a degradation");
            }
            last_accepted = &outer[idx];
        } else if (idx + 1 != outer.size()) {
            return fail("rejected outer entry not final");
        }
    }
    if (last_accepted->point.k != result.best.point.k ||
        last_accepted->point.c != result.best.point.c)
        return fail("returned candidate is not the last accepted outer entry");
    // Stop reason: either the last outer entry is a rejection, or the axis
    // was structurally exhausted (halving reached k=1).
    if (outer.back().decision == Decision::accept && !(halving && outer.back().point.k == 1))
        return fail("search stopped without a recorded reason");

    // Cell explorations, grouped by j.
    for (int j = 0;; ++j) {
        std::vector<TraceEntry> cells;
        for (const auto& e : entries)
            if (e.phase == Phase::cells && e.j == j)
                cells.push_back(e);
        if (cells.empty())
            break;
        const TraceEntry* cur = nullptr;
        for (std::size_t idx = 0; idx < cells.size(); ++idx) {
            const auto& e = cells[idx];
            if (static_cast<int>(idx) != e.i)
                return fail("cell entries out of order");
            if (idx == 0) {
                cur = &cells[0];
                continue;
            }
            if (e.point.c != cur->point.c + 1)
                return fail("cell probe is not the successor of the current point");
            if (e.decision == Decision::accept) {
                if (!(e.accuracy > cur->accuracy) || !e.feasible)
                    return fail("cell step accepted without strict feasible improvement");
                cur = &cells[idx];
            } else if (idx + 1 != cells.size()) {
                return fail("rejected cell probe not final");
            } else {
                // local stop: the evaluated successor did not qualify
                if (e.feasible && e.accuracy > cur->accuracy)
                    return fail("cell exploration stopped despite a qualifying successor");
            }
        }
        // If exploration ended on an accepted step, the successor must have
        // been structurally impossible.
        if (cells.back().decision == Decision::accept && cells.back().point.c != max_c)
            return fail("cell exploration ended without probing a possible successor");
    }

    // Memoization: every evaluated point appears, evaluations = distinct count.
    std::set<std::pair<int, int>> pts;
    for (const auto& e : entries)
        pts.insert({e.point.k, e.point.c});
    if (static_cast<int>(pts.size()) != result.evaluations)
        return fail("evaluations != distinct points in trace");
    return {};
}

// ---- randomized search fixtures ----

// A random table oracle on the grid k in {1,2,4,8,16}, c in {0..4} (28x28x1
// input makes c=4 the pooling limit), extended with the closure points the
// literal evaluation order can touch (the k=32 ray base and its first
// successor). The target cuts the grid either along the RAM axis (whole
// k-rays drop out) or the MACC axis (a staircase in (k, c)); k=32 is always
// out of budget so the doubling walk terminates on feasibility at the latest.
struct RandomOracleCase {
    occamnas::SearchConfig config;
    occamnas::HardwareTarget target;
    occamnas::TableOracleEvaluator::Table table;
};

inline RandomOracleCase make_random_oracle_case(std::uint64_t seed) {
    using namespace occamnas;
    RandomOracleCase rc;
    rc.config.k0 = 4;
    rc.config.epsilon = 0.005;
    rc.config.input = {28, 1};
    rc.config.num_classes = 2;

    Rng rng(seed);
    for (int k : {1, 2, 4, 8, 16, 32})
        for (int c = 0; c <= 4; ++c)
            rc.table[{k, c}] =
                std::round(rng.uniform(0.5, 1.0) * 1000.0) / 1000.0; // 3-decimal plateaus

    const SizingConfig sizing;
    auto ram_of = [&](int k) {
        return resource_report(build_architecture({k, 0}, rc.config.input, 2), sizing).phi_ram;
    };
    auto macc_of = [&](int k, int c) {
        return resource_report(build_architecture({k, c}, rc.config.input, 2), sizing).phi_macc;
    };
    rc.target = {1LL << 40, 1LL << 40, 1LL << 40, "synthetic"};
    if (rng.bernoulli(0.6)) {
        // RAM cut: somewhere at or above the k0 base, strictly below the k=32 base.
        rc.target.xi_ram = ram_of(4) + static_cast<long long>(rng.next_below(
                                           static_cast<std::uint64_t>(ram_of(32) - ram_of(4))));
    } else {
        // MACC cut: a staircase through the grid, k=32 excluded.
        rc.target.xi_macc =
            macc_of(4, 0) + static_cast<long long>(rng.next_below(static_cast<std::uint64_t>(
                                macc_of(32, 0) - macc_of(4, 0))));
    }
    return rc;
}

} // namespace oracles
