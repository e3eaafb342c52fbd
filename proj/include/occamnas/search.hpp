#pragma once

// Derivative-free search over (k, c): cell-axis exploration with unit steps
// and an outer doubling/halving walk over the first-layer kernel count.
//
// Semantics follow the stopping guarantees rather than the loop indices:
//  - cell exploration keeps stepping while the newest point strictly
//    improves and is feasible, and returns the last improving point;
//  - the outer walk doubles k while the explored best improves by more than
//    epsilon and the doubled base point is feasible; otherwise it restarts
//    from k0 and halves k while accuracy does not degrade (ties keep
//    halving: smaller networks win them).
// Probes are trained before their feasibility verdict is applied, except
// points that cannot exist at all (c beyond the pooling limit, k < 1).
// Every evaluation is memoized, so no (k, c) pair trains twice per run.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "occamnas/arch.hpp"
#include "occamnas/dataset.hpp"
#include "occamnas/errors.hpp"
#include "occamnas/resource.hpp"
#include "occamnas/rng.hpp"
#include "occamnas/train.hpp"

namespace occamnas {

struct SearchConfig {
    int k0 = 4;
    double epsilon = 0.005; // minimum improvement to keep doubling
    InputShape input;
    int num_classes = 0;
    SizingConfig sizing;
    TrainerConfig trainer;
};

struct Candidate {
    SearchPoint point;
    double accuracy = 0;
    bool feasible = false;
    ResourceReport report;
};

enum class Phase { outer, cells };
enum class Decision { accept, reject_accuracy, reject_feasibility };

struct TraceEntry {
    Phase phase{};
    int j = 0; // outer loop counter
    int i = 0; // cell-exploration counter
    SearchPoint point;
    double accuracy = 0;
    bool feasible = false;
    long long phi_ram = 0, phi_flash = 0, phi_macc = 0;
    Decision decision{};
};

struct SearchTrace {
    std::vector<TraceEntry> entries;
    int outer_index = 0; // j of the exploration currently running

    void add(Phase phase, int j, int i, const Candidate& cand, Decision d) {
        entries.push_back({phase, j, i, cand.point, cand.accuracy, cand.feasible,
                           cand.report.phi_ram, cand.report.phi_flash, cand.report.phi_macc,
                           d});
    }

    std::set<std::pair<int, int>> distinct_points() const {
        std::set<std::pair<int, int>> s;
        for (const auto& e : entries)
            s.insert({e.point.k, e.point.c});
        return s;
    }
};

struct SearchResult {
    Candidate best;
    SearchTrace trace;
    int evaluations = 0; // distinct (k, c) evaluated
    double wall_time_seconds = 0;
};

// ---- evaluators ----

// Evaluates a search point: fitness from measure(), feasibility and the
// resource report from the analytic estimators. Results are memoized.
class Evaluator {
public:
    using Cache = std::map<std::pair<int, int>, Candidate>;

    Evaluator(InputShape input, int num_classes, SizingConfig sizing, HardwareTarget target)
        : input_(input), num_classes_(num_classes), sizing_(sizing), target_(std::move(target)) {}
    virtual ~Evaluator() = default;

    Candidate evaluate(const SearchPoint& point) {
        const auto key = std::make_pair(point.k, point.c);
        if (auto it = cache_.find(key); it != cache_.end())
            return it->second;
        ArchDescriptor arch = build_architecture(point, input_, num_classes_);
        auto [feasible, report] = is_feasible(arch, target_, sizing_);
        Candidate cand{point, 0.0, feasible, std::move(report)};
        cand.accuracy = measure(point, arch);
        ++measurements_;
        cache_.emplace(key, cand);
        if (on_evaluated)
            on_evaluated(cand);
        return cand;
    }

    // Seeds the memo table (resumable runs). The report/feasibility are
    // recomputed so they always reflect the current target and sizing.
    void preload(const SearchPoint& point, double accuracy) {
        ArchDescriptor arch = build_architecture(point, input_, num_classes_);
        auto [feasible, report] = is_feasible(arch, target_, sizing_);
        cache_.insert_or_assign(std::make_pair(point.k, point.c),
                                Candidate{point, accuracy, feasible, std::move(report)});
    }

    const Cache& cache() const { return cache_; }
    int measurements() const { return measurements_; }
    const InputShape& input() const { return input_; }
    int num_classes() const { return num_classes_; }
    const HardwareTarget& target() const { return target_; }
    const SizingConfig& sizing() const { return sizing_; }

    // Invoked after each fresh measurement (progress lines, cache files).
    std::function<void(const Candidate&)> on_evaluated;

protected:
    virtual double measure(const SearchPoint& point, const ArchDescriptor& arch) = 0;

private:
    InputShape input_;
    int num_classes_ = 0;
    SizingConfig sizing_;
    HardwareTarget target_;
    Cache cache_;
    int measurements_ = 0;
};

// Test evaluator: fitness looked up in a user-supplied (k, c) -> f table.
class TableOracleEvaluator : public Evaluator {
public:
    using Table = std::map<std::pair<int, int>, double>;

    TableOracleEvaluator(InputShape input, int num_classes, SizingConfig sizing,
                         HardwareTarget target, Table table)
        : Evaluator(input, num_classes, sizing, std::move(target)), table_(std::move(table)) {}

protected:
    double measure(const SearchPoint& point, const ArchDescriptor&) override {
        auto it = table_.find({point.k, point.c});
        if (it == table_.end())
            throw MissingOracleEntry("no oracle entry for (k=" + std::to_string(point.k) +
                                     ", c=" + std::to_string(point.c) + ")");
        return it->second;
    }

private:
    Table table_;
};

// Real evaluator: trains the candidate and returns the maximum validation
// accuracy. The validation split is made once and shared by every
// candidate; per-candidate seeds derive from (run seed, k, c).
class TrainerEvaluator : public Evaluator {
public:
    TrainerEvaluator(InputShape input, int num_classes, SizingConfig sizing,
                     HardwareTarget target, const Dataset& train_all, TrainerConfig config)
        : Evaluator(input, num_classes, sizing, std::move(target)), config_(config) {
        const auto shape = train_all.shape();
        if (shape[0] != input.side || shape[1] != input.side || shape[2] != input.channels)
            throw ShapeMismatch("dataset shape does not match search input shape");
        auto [tr, va] = split(train_all, config_.validation_split, mix_seed(config_.seed, 0x04));
        train_ = std::move(tr);
        val_ = std::move(va);
    }

    const NetParams<float>& weights_for(const SearchPoint& point) const {
        auto it = weights_.find({point.k, point.c});
        if (it == weights_.end())
            throw Error("no trained weights for (k=" + std::to_string(point.k) +
                        ", c=" + std::to_string(point.c) + ")");
        return it->second;
    }

    bool has_weights(const SearchPoint& point) const {
        return weights_.count({point.k, point.c}) > 0;
    }

    void preload_weights(const SearchPoint& point, NetParams<float> params) {
        weights_.insert_or_assign(std::make_pair(point.k, point.c), std::move(params));
    }

    const Dataset& train_split() const { return train_; }
    const Dataset& val_split() const { return val_; }

protected:
    double measure(const SearchPoint& point, const ArchDescriptor& arch) override {
        TrainerConfig cfg = config_;
        cfg.seed = mix_seed(config_.seed, static_cast<std::uint64_t>(point.k),
                            static_cast<std::uint64_t>(point.c));
        auto result = train_and_evaluate<float>(arch, train_, val_, cfg);
        weights_.insert_or_assign(std::make_pair(point.k, point.c),
                                  std::move(result.final_weights));
        return result.max_val_accuracy;
    }

private:
    TrainerConfig config_;
    Dataset train_, val_;
    std::map<std::pair<int, int>, NetParams<float>> weights_;
};

// ---- the search itself ----

enum class Direction { doubling, halving };

// Next first-layer kernel count on the outer axis.
inline int next_k(int j, int k_prev, Direction direction) {
    if (j < 1)
        throw Error("next_k: j must be >= 1");
    if (k_prev < 1)
        throw Error("next_k: k_prev must be >= 1");
    if (direction == Direction::doubling)
        return 2 * k_prev;
    const int k = k_prev / 2;
    if (k < 1)
        throw Exhausted("next_k: halving exhausted at k=1");
    return k;
}

// Walks the cell axis from `start` with unit steps: each probe is trained,
// then kept only if it strictly improved and is feasible. A successor past
// the pooling limit is never trained. Returns the last kept candidate.
inline Candidate explore_num_cells(const SearchPoint& start, Evaluator& evaluator,
                                   const HardwareTarget& /*target*/, const SearchConfig& config,
                                   SearchTrace& trace) {
    if (start.k < 1)
        throw Error("explore_num_cells: start.k must be >= 1");
    const int max_c = max_cells(config.input);
    if (start.c > max_c)
        throw SpatiallyInfeasible("explore_num_cells: start exceeds the pooling limit");
    const int j = trace.outer_index;
    int i = 0;
    Candidate current = evaluator.evaluate(start);
    trace.add(Phase::cells, j, i, current,
              current.feasible ? Decision::accept : Decision::reject_feasibility);
    while (current.point.c < max_c) {
        const SearchPoint next{start.k, current.point.c + 1};
        Candidate cand = evaluator.evaluate(next);
        ++i;
        const bool take = cand.accuracy > current.accuracy && cand.feasible;
        trace.add(Phase::cells, j, i, cand,
                  take ? Decision::accept
                       : (cand.feasible ? Decision::reject_accuracy
                                        : Decision::reject_feasibility));
        if (!take)
            break;
        current = cand;
    }
    return current;
}

// Outer search. Requires the starting point (k0, 0) to be feasible.
inline SearchResult run_search(const SearchConfig& config, Evaluator& evaluator,
                               const HardwareTarget& target) {
    const auto t_start = std::chrono::steady_clock::now();
    if (config.k0 < 1)
        throw Error("run_search: k0 must be >= 1");
    if (!(config.epsilon >= 0.0 && config.epsilon < 1.0))
        throw Error("run_search: epsilon must be in [0, 1)");

    const SearchPoint x0{config.k0, 0};
    {
        ArchDescriptor arch = build_architecture(x0, config.input, config.num_classes);
        if (!is_feasible(arch, target, config.sizing).first)
            throw InfeasibleStart("starting point (k0=" + std::to_string(config.k0) +
                                  ", c=0) violates the target budget");
    }

    SearchTrace trace;
    trace.outer_index = 0;
    Candidate best0 = explore_num_cells(x0, evaluator, target, config, trace);
    trace.add(Phase::outer, 0, 0, best0, Decision::accept);

    const SearchPoint x1{next_k(1, config.k0, Direction::doubling), 0};
    trace.outer_index = 1;
    Candidate best1 = explore_num_cells(x1, evaluator, target, config, trace);
    const bool x1_in_omega = evaluator.evaluate(x1).feasible; // memoized

    Candidate current;
    int j = 1;
    if (best1.accuracy > best0.accuracy && x1_in_omega) {
        trace.add(Phase::outer, 1, 0, best1, Decision::accept);
        current = best1;
        int k_cur = x1.k;
        while (k_cur <= (1 << 24)) { // doubling is otherwise stopped by the budget
            const SearchPoint xn{next_k(j + 1, k_cur, Direction::doubling), 0};
            trace.outer_index = j + 1;
            Candidate cand = explore_num_cells(xn, evaluator, target, config, trace);
            ++j;
            k_cur = xn.k;
            const bool base_ok = evaluator.evaluate(xn).feasible;
            if (cand.accuracy > current.accuracy + config.epsilon && base_ok) {
                trace.add(Phase::outer, j, 0, cand, Decision::accept);
                current = cand;
            } else {
                trace.add(Phase::outer, j, 0, cand,
                          base_ok ? Decision::reject_accuracy : Decision::reject_feasibility);
                break;
            }
        }
    } else {
        trace.add(Phase::outer, 1, 0, best1,
                  x1_in_omega ? Decision::reject_accuracy : Decision::reject_feasibility);
        // The walk restarts from x0, so the halving baseline is x~0.
        current = best0;
        int k_cur = config.k0;
        while (k_cur > 1) {
            const SearchPoint xn{next_k(j + 1, k_cur, Direction::halving), 0};
            trace.outer_index = j + 1;
            Candidate cand = explore_num_cells(xn, evaluator, target, config, trace);
            ++j;
            k_cur = xn.k;
            const bool base_ok = evaluator.evaluate(xn).feasible;
            if (cand.accuracy >= current.accuracy && base_ok) {
                trace.add(Phase::outer, j, 0, cand, Decision::accept);
                current = cand;
            } else {
                trace.add(Phase::outer, j, 0, cand,
                          base_ok ? Decision::reject_accuracy : Decision::reject_feasibility);
                break;
            }
        }
    }

    SearchResult result;
    result.best = std::move(current);
    result.evaluations = static_cast<int>(trace.distinct_points().size());
    result.trace = std::move(trace);
    result.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

// ---- trace and cache serialization ----

inline const char* to_string(Decision d) {
    switch (d) {
    case Decision::accept: return "accept";
    case Decision::reject_accuracy: return "reject-accuracy";
    case Decision::reject_feasibility: return "reject-feasibility";
    }
    return "?";
}

inline const char* to_string(Phase p) { return p == Phase::outer ? "outer" : "cells"; }

inline std::string trace_to_csv(const SearchTrace& trace) {
    std::string out = "phase,j,i,k,c,accuracy,feasible,phi_ram,phi_flash,phi_macc,decision\n";
    char line[256];
    for (const auto& e : trace.entries) {
        std::snprintf(line, sizeof(line), "%s,%d,%d,%d,%d,%.9g,%d,%lld,%lld,%lld,%s\n",
                      to_string(e.phase), e.j, e.i, e.point.k, e.point.c, e.accuracy,
                      e.feasible ? 1 : 0, e.phi_ram, e.phi_flash, e.phi_macc,
                      to_string(e.decision));
        out += line;
    }
    return out;
}

inline nlohmann::json trace_to_json(const SearchTrace& trace) {
    auto arr = nlohmann::json::array();
    for (const auto& e : trace.entries)
        arr.push_back({{"phase", to_string(e.phase)},
                       {"j", e.j},
                       {"i", e.i},
                       {"k", e.point.k},
                       {"c", e.point.c},
                       {"accuracy", e.accuracy},
                       {"feasible", e.feasible},
                       {"phi_ram", e.phi_ram},
                       {"phi_flash", e.phi_flash},
                       {"phi_macc", e.phi_macc},
                       {"decision", to_string(e.decision)}});
    return arr;
}

// Cache file for resumable runs: the expensive signal (accuracy) per point.
inline nlohmann::json cache_to_json(const Evaluator::Cache& cache) {
    auto arr = nlohmann::json::array();
    for (const auto& [key, cand] : cache)
        arr.push_back({{"k", key.first},
                       {"c", key.second},
                       {"accuracy", cand.accuracy},
                       {"feasible", cand.feasible}});
    return nlohmann::json{{"entries", std::move(arr)}};
}

inline void preload_cache_from_json(Evaluator& evaluator, const nlohmann::json& j) {
    for (const auto& e : j.at("entries"))
        evaluator.preload(SearchPoint{e.at("k").get<int>(), e.at("c").get<int>()},
                          e.at("accuracy").get<double>());
}

} // namespace occamnas
