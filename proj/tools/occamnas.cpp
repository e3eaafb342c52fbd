// occamnas CLI: run hardware-aware searches against a dataset and target,
// estimate footprints for a given (k, c), and re-evaluate saved models.
//
//   occamnas search   --data DIR --format {idx,dir} --target L4 ...
//   occamnas estimate --k 4 --c 2 --size 50 --channels 3 --classes 2 --target L4
//   occamnas eval     --arch arch.json --weights weights.bin --data DIR ...
//
// Exit codes: 0 success, 1 internal failure, 2 usage / infeasible start,
// 3 dataset or artifact errors.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "occamnas/arch.hpp"
#include "occamnas/dataset.hpp"
#include "occamnas/net.hpp"
#include "occamnas/resource.hpp"
#include "occamnas/search.hpp"
#include "occamnas/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace occamnas;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

struct DataFlags {
    std::string data;
    std::string format = "dir";
    int size = 0;     // 0 = native
    int channels = 0; // 0 = native
};

void add_data_flags(CLI::App* cmd, DataFlags& f, bool required) {
    auto* d = cmd->add_option("--data", f.data, "dataset directory");
    if (required)
        d->required();
    cmd->add_option("--format", f.format, "dataset format")
        ->check(CLI::IsMember({"idx", "dir"}));
    cmd->add_option("--size", f.size, "resize images to size x size (0 = native)");
    cmd->add_option("--channels", f.channels,
                    "desired channel count (3 replicates grayscale; 0 = native)");
}

std::pair<std::string, std::string> find_idx_pair(const std::string& dir) {
    static const std::pair<const char*, const char*> names[] = {
        {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"},
        {"train-images.idx3-ubyte", "train-labels.idx1-ubyte"},
        {"t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"},
        {"t10k-images.idx3-ubyte", "t10k-labels.idx1-ubyte"},
        {"images-idx3-ubyte", "labels-idx1-ubyte"},
    };
    for (const auto& [im, lb] : names)
        if (fs::exists(fs::path(dir) / im) && fs::exists(fs::path(dir) / lb))
            return {(fs::path(dir) / im).string(), (fs::path(dir) / lb).string()};
    throw Error("no IDX image/label pair found in " + dir +
                " (expected e.g. train-images-idx3-ubyte + train-labels-idx1-ubyte)");
}

Dataset load_prepared(const DataFlags& f) {
    Dataset ds;
    if (f.format == "idx") {
        auto [im, lb] = find_idx_pair(f.data);
        ds = load_idx(im, lb);
    } else {
        ds = load_image_dir(f.data);
    }
    if (ds.size() == 0)
        throw EmptyDataset("dataset is empty: " + f.data);
    const bool replicate = f.channels == 3;
    if (f.channels == 1 && !ds.images.empty() && ds.images.front().shape[2] == 3)
        throw Error("--channels 1 requested but dataset is RGB");
    if (f.size > 0 || replicate) {
        const int side = f.size > 0 ? f.size : ds.images.front().shape[0];
        ds = resize(ds, side, replicate);
    }
    if (!ds.uniform_shape())
        throw ShapeMismatch("dataset images have mixed sizes; pass --size");
    return ds;
}

HardwareTarget resolve_target(const std::string& preset, long long ram, long long flash,
                              long long macc) {
    if (!preset.empty())
        return target_preset(preset);
    if (ram > 0 && flash > 0 && macc > 0)
        return {ram, flash, macc, "custom"};
    throw Error("specify --target {L0,L1,L4} or all of --ram/--flash/--macc");
}

std::string hhmm(double seconds) {
    const long long total = static_cast<long long>(seconds);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%02lld:%02lld", total / 3600, (total % 3600) / 60);
    return buf;
}

void print_summary(const Candidate& best, double wall_seconds) {
    std::printf("result: k=%d c=%d | acc %.2f%% | RAM %.1f kiB | Flash %.2f kiB | MACC %lld | "
                "search cost %s\n",
                best.point.k, best.point.c, best.accuracy * 100.0, to_kib(best.report.phi_ram),
                to_kib(best.report.phi_flash), best.report.phi_macc,
                hhmm(wall_seconds).c_str());
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f)
        throw Error("cannot write " + path.string());
    f << text;
}

json read_json_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f)
        throw Error("cannot read " + path.string());
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded())
        throw Error("malformed JSON in " + path.string());
    return j;
}

std::string now_iso8601() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

int env_threads() {
    if (const char* v = std::getenv("OCCAMNAS_THREADS"))
        return std::max(1, std::atoi(v));
    return 0;
}

// ---- search ----

struct SearchFlags {
    DataFlags data;
    std::string target_preset;
    long long ram = 0, flash = 0, macc = 0;
    int k0 = 4;
    double epsilon = 0.005;
    int epochs = 100;
    double lr = 1e-3;
    int batch = 128;
    double val_split = 0.2;
    std::uint64_t seed = 0;
    int classes = 0;
    std::string resume;
    std::string out = "runs";
    bool no_augment = false;
};

int run_search_cmd(const SearchFlags& f) {
    Dataset ds;
    try {
        json cfg;
        SearchConfig sc;
        fs::path run_dir;
        std::string run_id;

        if (!f.resume.empty()) {
            run_id = f.resume;
            run_dir = fs::path(f.out) / run_id;
            const json manifest = read_json_file(run_dir / "manifest.json");
            cfg = manifest.at("config");
        } else {
            cfg["data"] = f.data.data;
            cfg["format"] = f.data.format;
            cfg["size"] = f.data.size;
            cfg["channels"] = f.data.channels;
            cfg["classes"] = f.classes;
            cfg["target"] = f.target_preset;
            cfg["ram"] = f.ram;
            cfg["flash"] = f.flash;
            cfg["macc"] = f.macc;
            cfg["k0"] = f.k0;
            cfg["epsilon"] = f.epsilon;
            cfg["epochs"] = f.epochs;
            cfg["lr"] = f.lr;
            cfg["batch"] = f.batch;
            cfg["val_split"] = f.val_split;
            cfg["seed"] = f.seed;
            cfg["augment"] = !f.no_augment;
            char id[17];
            std::snprintf(id, sizeof(id), "%016llx",
                          static_cast<unsigned long long>(fnv1a64(cfg.dump())));
            run_id = id;
            run_dir = fs::path(f.out) / run_id;
        }

        DataFlags df{cfg.at("data").get<std::string>(), cfg.at("format").get<std::string>(),
                     cfg.at("size").get<int>(), cfg.at("channels").get<int>()};
        try {
            ds = load_prepared(df);
        } catch (const Error& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitData;
        }
        const auto shape = ds.shape();

        int classes = cfg.at("classes").get<int>();
        if (classes == 0)
            classes = *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
        if (classes < 2) {
            std::cerr << "error: need at least 2 classes\n";
            return kExitUsage;
        }

        const HardwareTarget target =
            resolve_target(cfg.at("target").get<std::string>(), cfg.at("ram").get<long long>(),
                           cfg.at("flash").get<long long>(), cfg.at("macc").get<long long>());

        sc.k0 = cfg.at("k0").get<int>();
        sc.epsilon = cfg.at("epsilon").get<double>();
        sc.input = {shape[0], shape[2]};
        sc.num_classes = classes;
        sc.trainer.epochs = cfg.at("epochs").get<int>();
        sc.trainer.learning_rate = cfg.at("lr").get<double>();
        sc.trainer.batch_size = cfg.at("batch").get<int>();
        sc.trainer.validation_split = cfg.at("val_split").get<double>();
        sc.trainer.seed = cfg.at("seed").get<std::uint64_t>();
        sc.trainer.threads = env_threads();
        if (!cfg.at("augment").get<bool>())
            sc.trainer.augmentation = {false, 0.0};

        fs::create_directories(run_dir / "weights");
        json manifest;
        manifest["config"] = cfg;
        manifest["run_id"] = run_id;
        manifest["started"] = now_iso8601();
        write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");

        TrainerEvaluator evaluator(sc.input, sc.num_classes, sc.sizing, target, ds, sc.trainer);
        if (!f.resume.empty() && fs::exists(run_dir / "cache.json")) {
            preload_cache_from_json(evaluator, read_json_file(run_dir / "cache.json"));
            for (const auto& [key, cand] : evaluator.cache()) {
                const fs::path wpath = run_dir / "weights" /
                                       ("k" + std::to_string(key.first) + "_c" +
                                        std::to_string(key.second) + ".bin");
                if (fs::exists(wpath)) {
                    ArchDescriptor arch =
                        build_architecture(cand.point, sc.input, sc.num_classes);
                    evaluator.preload_weights(cand.point,
                                              load_weights<float>(wpath.string(), arch));
                }
            }
            std::printf("resuming %s with %zu cached evaluations\n", run_id.c_str(),
                        evaluator.cache().size());
        }
        evaluator.on_evaluated = [&](const Candidate& cand) {
            std::printf("  trained (k=%d, c=%d): val acc %.4f, %s\n", cand.point.k,
                        cand.point.c, cand.accuracy,
                        cand.feasible ? "feasible" : "infeasible");
            std::fflush(stdout);
            write_text(run_dir / "cache.json", cache_to_json(evaluator.cache()).dump(2) + "\n");
            if (evaluator.has_weights(cand.point)) {
                auto w = evaluator.weights_for(cand.point);
                save_weights((run_dir / "weights" /
                              ("k" + std::to_string(cand.point.k) + "_c" +
                               std::to_string(cand.point.c) + ".bin"))
                                 .string(),
                             w);
            }
        };

        std::printf("searching under target %s (RAM %lld B, Flash %lld B, MACC %lld)\n",
                    target.name.c_str(), target.xi_ram, target.xi_flash, target.xi_macc);
        SearchResult result = run_search(sc, evaluator, target);

        const ArchDescriptor best_arch =
            build_architecture(result.best.point, sc.input, sc.num_classes);
        write_text(run_dir / "arch.json", to_json(best_arch).dump(2) + "\n");
        auto best_weights = evaluator.weights_for(result.best.point);
        save_weights((run_dir / "weights.bin").string(), best_weights);
        write_text(run_dir / "trace.csv", trace_to_csv(result.trace));

        json report;
        report["best"] = {{"k", result.best.point.k},
                          {"c", result.best.point.c},
                          {"accuracy", result.best.accuracy},
                          {"feasible", result.best.feasible}};
        report["resources"] = to_json(result.best.report);
        report["evaluations"] = result.evaluations;
        report["wall_time_seconds"] = result.wall_time_seconds;
        report["target"] = {{"name", target.name},
                            {"xi_ram", target.xi_ram},
                            {"xi_flash", target.xi_flash},
                            {"xi_macc", target.xi_macc}};
        write_text(run_dir / "report.json", report.dump(2) + "\n");

        manifest["finished"] = now_iso8601();
        manifest["artifacts"] = {{"arch", "arch.json"},
                                 {"weights", "weights.bin"},
                                 {"trace", "trace.csv"},
                                 {"report", "report.json"},
                                 {"cache", "cache.json"}};
        write_text(run_dir / "manifest.json", manifest.dump(2) + "\n");

        std::printf("run %s finished: %d distinct candidates trained\n", run_id.c_str(),
                    result.evaluations);
        print_summary(result.best, result.wall_time_seconds);
        std::printf("artifacts in %s\n", run_dir.string().c_str());
        return 0;
    } catch (const InfeasibleStart& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const UnknownPreset& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const BadMagic& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const TruncatedFile& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const CountMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const EmptyClassDir& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const EmptyDataset& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const ClassTooSmall& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}

// ---- estimate ----

struct EstimateFlags {
    std::string arch_path;
    int k = 0, c = -1, size = 0, channels = 3, classes = 0;
    std::string target_preset;
    long long ram = 0, flash = 0, macc = 0;
};

int run_estimate_cmd(const EstimateFlags& f) {
    ArchDescriptor arch;
    try {
        if (!f.arch_path.empty()) {
            try {
                arch = arch_from_json(read_json_file(f.arch_path));
            } catch (const std::exception& e) {
                std::cerr << "error: " << e.what() << "\n";
                return kExitData;
            }
        } else {
            if (f.k < 1 || f.c < 0 || f.size < 1 || f.classes < 2) {
                std::cerr << "error: estimate needs --arch or all of --k/--c/--size/--classes\n";
                return kExitUsage;
            }
            try {
                arch = build_architecture({f.k, f.c}, {f.size, f.channels}, f.classes);
            } catch (const SpatiallyInfeasible& e) {
                std::printf("verdict: spatially infeasible (%s)\n", e.what());
                return 0;
            }
        }
        const SizingConfig sizing;
        const ResourceReport rep = resource_report(arch, sizing);

        std::printf("architecture (k=%d, c=%d), input %dx%dx%d, %d classes\n", arch.point.k,
                    arch.point.c, arch.input.side, arch.input.side, arch.input.channels,
                    arch.num_classes);
        std::printf("%-4s %-16s %-12s %10s %12s\n", "#", "kind", "out", "params", "macc");
        for (std::size_t i = 0; i < arch.layers.size(); ++i) {
            const auto& l = arch.layers[i];
            const auto& r = rep.per_layer[i];
            char shape[32];
            if (l.out.flat())
                std::snprintf(shape, sizeof(shape), "%d", l.out.ch);
            else
                std::snprintf(shape, sizeof(shape), "%dx%dx%d", l.out.h, l.out.w, l.out.ch);
            std::printf("%-4zu %-16s %-12s %10lld %12lld\n", i, to_string(l.kind), shape,
                        r.params, r.macc);
        }
        std::printf("phi_R peak RAM : %8.2f kiB (%lld B)\n", to_kib(rep.phi_ram), rep.phi_ram);
        std::printf("phi_F flash    : %8.2f kiB (%lld B)\n", to_kib(rep.phi_flash),
                    rep.phi_flash);
        std::printf("phi_M macc     : %lld\n", rep.phi_macc);

        if (!f.target_preset.empty() || (f.ram > 0 && f.flash > 0 && f.macc > 0)) {
            const HardwareTarget target =
                resolve_target(f.target_preset, f.ram, f.flash, f.macc);
            const bool ok = rep.phi_ram <= target.xi_ram && rep.phi_flash <= target.xi_flash &&
                            rep.phi_macc <= target.xi_macc;
            std::printf("target %s: RAM %lld B, Flash %lld B, MACC %lld\n", target.name.c_str(),
                        target.xi_ram, target.xi_flash, target.xi_macc);
            std::printf("verdict: %s\n", ok ? "feasible" : "infeasible");
        }
        return 0;
    } catch (const UnknownPreset& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

// ---- eval ----

struct EvalFlags {
    std::string arch_path, weights_path;
    DataFlags data;
};

int run_eval_cmd(const EvalFlags& f) {
    try {
        ArchDescriptor arch;
        NetParams<float> params;
        try {
            arch = arch_from_json(read_json_file(f.arch_path));
            params = load_weights<float>(f.weights_path, arch);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitData;
        }
        Dataset ds = load_prepared(f.data);
        const double acc = evaluate_accuracy(arch, params, ds, env_threads());
        std::printf("test accuracy: %.4f (%lld/%zu)\n", acc,
                    static_cast<long long>(std::llround(acc * static_cast<double>(ds.size()))),
                    ds.size());
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"occamnas: hardware-aware search for lightweight task-specific CNNs"};
    app.require_subcommand(1);

    SearchFlags sf;
    auto* search = app.add_subcommand("search", "search for the best feasible architecture");
    add_data_flags(search, sf.data, /*required=*/true);
    search->add_option("--target", sf.target_preset, "hardware preset (L0, L1, L4)");
    search->add_option("--ram", sf.ram, "RAM budget in bytes");
    search->add_option("--flash", sf.flash, "Flash budget in bytes");
    search->add_option("--macc", sf.macc, "MACC budget");
    search->add_option("--k0", sf.k0, "initial first-layer kernel count");
    search->add_option("--epsilon", sf.epsilon, "minimum improvement to keep doubling");
    search->add_option("--epochs", sf.epochs, "training epochs per candidate");
    search->add_option("--lr", sf.lr, "learning rate");
    search->add_option("--batch", sf.batch, "batch size");
    search->add_option("--val-split", sf.val_split, "validation fraction of the training data");
    search->add_option("--seed", sf.seed, "run seed");
    search->add_option("--classes", sf.classes, "class count (0 = infer from labels)");
    search->add_option("--resume", sf.resume, "resume a previous run id");
    search->add_option("--out", sf.out, "output directory for runs");
    search->add_flag("--no-augment", sf.no_augment, "disable training augmentation");

    EstimateFlags ef;
    auto* estimate = app.add_subcommand("estimate", "estimate the footprint of an architecture");
    estimate->add_option("--arch", ef.arch_path, "architecture JSON file");
    estimate->add_option("--k", ef.k, "first-layer kernel count");
    estimate->add_option("--c", ef.c, "cell count");
    estimate->add_option("--size", ef.size, "input side");
    estimate->add_option("--channels", ef.channels, "input channels (1 or 3)");
    estimate->add_option("--classes", ef.classes, "class count");
    estimate->add_option("--target", ef.target_preset, "hardware preset (L0, L1, L4)");
    estimate->add_option("--ram", ef.ram, "RAM budget in bytes");
    estimate->add_option("--flash", ef.flash, "Flash budget in bytes");
    estimate->add_option("--macc", ef.macc, "MACC budget");

    EvalFlags vf;
    auto* eval = app.add_subcommand("eval", "evaluate saved weights on a dataset");
    eval->add_option("--arch", vf.arch_path, "architecture JSON file")->required();
    eval->add_option("--weights", vf.weights_path, "weights blob")->required();
    add_data_flags(eval, vf.data, /*required=*/true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (search->parsed())
            return run_search_cmd(sf);
        if (estimate->parsed())
            return run_estimate_cmd(ef);
        if (eval->parsed())
            return run_eval_cmd(vf);
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}
