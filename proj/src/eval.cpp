#include "tensorshield/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "tensorshield/rng.hpp"
#include "tensorshield/thread_pool.hpp"

namespace ts {
namespace {

double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// Per-image decomposition seed: the run seed (or an explicitly configured
// one) XOR the image id, so results follow the image, not its position.
DefenseConfig seeded_for(const DefenseConfig& cfg, const RunOptions& opts, std::uint64_t id) {
    DefenseConfig out = cfg;
    if (opts.run_seed)
        out.decomp_opts.seed = *opts.run_seed ^ id;
    else if (cfg.decomp_opts.seed)
        out.decomp_opts.seed = *cfg.decomp_opts.seed ^ id;
    return out;
}

struct DefenseEval {
    double accuracy = 0.0;
    std::vector<PerImageRecord> records;
    double mean_seconds = 0.0;
};

DefenseEval evaluate_defense(const Network& net, const LabeledDataset& ds,
                             const DefenseConfig& cfg, const RunOptions& opts) {
    const std::size_t n = ds.size();
    if (n == 0) throw std::invalid_argument("evaluate_defense: empty dataset");
    DefenseEval out;
    out.records.resize(n);
    parallel_for(n, opts.workers, [&](std::size_t i) {
        DefenseConfig per_image = seeded_for(cfg, opts, ds.ids[i]);
        double t0 = opts.record_timing ? now_seconds() : 0.0;
        Tensor purified = purify(ds.images[i], per_image);
        double elapsed = opts.record_timing ? now_seconds() - t0 : 0.0;
        PerImageRecord& rec = out.records[i];
        rec.id = ds.ids[i];
        rec.true_label = ds.labels[i];
        rec.predicted = predict(net, purified);
        rec.seconds = elapsed;
    });
    std::size_t correct = 0;
    double total_seconds = 0.0;
    for (const PerImageRecord& rec : out.records) {
        correct += rec.predicted == rec.true_label ? 1 : 0;
        total_seconds += rec.seconds;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    out.mean_seconds = total_seconds / static_cast<double>(n);
    return out;
}

nlohmann::json run_options_json(const RunOptions& opts) {
    nlohmann::json j;
    if (opts.run_seed) j["seed"] = *opts.run_seed;
    j["workers"] = opts.workers;
    j["timing"] = opts.record_timing;
    if (!opts.cache_dir.empty()) j["cache_dir"] = opts.cache_dir;
    return j;
}

LabeledDataset dataset_from_batch(const TensorBatch& batch, std::size_t class_count) {
    LabeledDataset ds;
    ds.class_count = class_count;
    ds.images.reserve(batch.items.size());
    ds.labels.reserve(batch.items.size());
    ds.ids.reserve(batch.items.size());
    for (const BatchItem& item : batch.items) {
        ds.images.push_back(item.tensor);
        ds.labels.push_back(item.label);
        ds.ids.push_back(item.id);
    }
    return ds;
}

// Cached adversarial sets must cover exactly the ids under evaluation.
void check_cache_matches(const TensorBatch& batch, const LabeledDataset& test_set,
                         const std::string& dir) {
    if (batch.items.size() != test_set.size())
        throw std::runtime_error("attack cache " + dir + " holds " +
                                 std::to_string(batch.items.size()) + " items, dataset has " +
                                 std::to_string(test_set.size()));
    std::map<std::uint64_t, std::size_t> expected;
    for (std::size_t i = 0; i < test_set.size(); ++i) expected[test_set.ids[i]] = test_set.labels[i];
    for (const BatchItem& item : batch.items) {
        auto it = expected.find(item.id);
        if (it == expected.end() || it->second != item.label)
            throw std::runtime_error("attack cache " + dir +
                                     " does not match the evaluated dataset (id " +
                                     std::to_string(item.id) + ")");
    }
}

}  // namespace

const EvalCell* EvalReport::find(const std::string& attack, const std::string& defense) const {
    for (const EvalCell& cell : cells)
        if (cell.attack == attack && cell.defense == defense) return &cell;
    return nullptr;
}

double top1_accuracy(const Network& net, const LabeledDataset& images, const DefenseConfig& cfg,
                     const RunOptions& opts) {
    return evaluate_defense(net, images, cfg, opts).accuracy;
}

double defense_ratio(double acc_adv, double acc_clean) {
    if (acc_clean <= 0.0)
        throw std::domain_error("defense_ratio: clean accuracy is zero, ratio undefined");
    return acc_adv / acc_clean;
}

TensorBatch attack_batch(const Network& net, const LabeledDataset& test_set,
                         const NamedAttack& attack, const RunOptions& opts) {
    const std::size_t n = test_set.size();
    TensorBatch batch;
    batch.items.resize(n);
    parallel_for(n, opts.workers, [&](std::size_t i) {
        AdvResult res = run_attack(attack.kind, net, test_set.images[i], test_set.labels[i],
                                   attack.cfg);
        BatchItem& item = batch.items[i];
        item.tensor = std::move(res.image);
        item.id = test_set.ids[i];
        item.label = test_set.labels[i];
        item.attack = attack.name;
        item.success = res.success;
        item.linf = res.linf;
        item.l2 = res.l2;
    });
    batch.config["attack"] = attack.name;
    batch.config["kind"] = attack_name(attack.kind);
    batch.config["config"] = attack_config_json(attack.cfg);
    batch.config["count"] = n;
    return batch;
}

LabeledDataset attack_dataset(const Network& net, const LabeledDataset& test_set,
                              const NamedAttack& attack, const RunOptions& opts) {
    if (attack.kind == AttackKind::none) return test_set;
    return dataset_from_batch(attack_batch(net, test_set, attack, opts), test_set.class_count);
}

EvalReport run_matrix(const Network& net, const LabeledDataset& test_set,
                      const std::vector<NamedAttack>& attacks,
                      const std::vector<NamedDefense>& defenses, const RunOptions& opts) {
    if (test_set.size() == 0) throw std::invalid_argument("run_matrix: empty dataset");
    EvalReport report;
    report.config = run_options_json(opts);
    report.config["samples"] = test_set.size();
    report.config["class_count"] = test_set.class_count;
    for (const NamedAttack& a : attacks) {
        nlohmann::json j;
        j["name"] = a.name;
        j["kind"] = attack_name(a.kind);
        j["config"] = attack_config_json(a.cfg);
        report.config["attacks"].push_back(j);
    }
    for (const NamedDefense& d : defenses) {
        nlohmann::json j;
        j["name"] = d.name;
        j["config"] = defense_config_json(d.cfg);
        report.config["defenses"].push_back(j);
    }

    for (const NamedAttack& attack : attacks) {
        LabeledDataset adv;
        if (attack.kind == AttackKind::none) {
            adv = test_set;
        } else if (!opts.cache_dir.empty()) {
            std::filesystem::path dir = std::filesystem::path(opts.cache_dir) / attack.name;
            if (std::filesystem::exists(dir / "index.json")) {
                TensorBatch batch = load_tensor_batch(dir.string());
                check_cache_matches(batch, test_set, dir.string());
                adv = dataset_from_batch(batch, test_set.class_count);
            } else {
                if (opts.progress)
                    (*opts.progress) << "attack " << attack.name << " (" << test_set.size()
                                     << " images)\n";
                TensorBatch batch = attack_batch(net, test_set, attack, opts);
                save_tensor_batch(batch, dir.string());
                adv = dataset_from_batch(batch, test_set.class_count);
            }
        } else {
            if (opts.progress)
                (*opts.progress) << "attack " << attack.name << " (" << test_set.size()
                                 << " images)\n";
            adv = attack_dataset(net, test_set, attack, opts);
        }

        for (const NamedDefense& defense : defenses) {
            if (opts.progress)
                (*opts.progress) << "eval " << attack.name << " x " << defense.name << "\n";
            DefenseEval ev = evaluate_defense(net, adv, defense.cfg, opts);
            EvalCell cell;
            cell.attack = attack.name;
            cell.defense = defense.name;
            cell.top1_accuracy = ev.accuracy;
            cell.sample_count = adv.size();
            if (opts.record_timing) cell.mean_preprocess_seconds = ev.mean_seconds;
            cell.records = std::move(ev.records);
            report.cells.push_back(std::move(cell));
        }
    }

    // Ratio column: adversarial accuracy over the same defense's clean cell.
    for (EvalCell& cell : report.cells) {
        if (cell.attack == "clean") continue;
        const EvalCell* clean = report.find("clean", cell.defense);
        if (clean && clean->top1_accuracy > 0.0)
            cell.defense_ratio = defense_ratio(cell.top1_accuracy, clean->top1_accuracy);
    }
    return report;
}

SweepCurve sweep_dimension(const Network& net, const LabeledDataset& adv_set,
                           DefenseMethod method, const std::vector<std::size_t>& dims,
                           const RunOptions& opts, const Network* autoencoder) {
    if (dims.empty()) throw std::invalid_argument("sweep_dimension: empty dimension list");
    for (std::size_t i = 1; i < dims.size(); ++i)
        if (dims[i] <= dims[i - 1])
            throw std::invalid_argument("sweep_dimension: dimensions must be strictly ascending");
    if (!defense_uses_decomposition(method))
        throw std::invalid_argument("sweep_dimension: method has no target dimension");
    if (defense_uses_autoencoder(method) && autoencoder == nullptr)
        throw std::invalid_argument("sweep_dimension: method needs an autoencoder");

    SweepCurve curve;
    curve.dims = dims;
    // Timing is part of the curve, so runs are single-worker by contract.
    RunOptions timed = opts;
    timed.workers = 1;
    timed.record_timing = true;
    for (std::size_t d : dims) {
        DefenseConfig cfg;
        cfg.method = method;
        cfg.dims = {d};
        cfg.autoencoder = autoencoder;
        DefenseEval ev = evaluate_defense(net, adv_set, cfg, timed);
        curve.accuracy.push_back(ev.accuracy);
        curve.mean_seconds.push_back(ev.mean_seconds);
        if (opts.progress)
            (*opts.progress) << "sweep dim " << d << " accuracy " << fixed6(ev.accuracy)
                             << " mean_seconds " << fixed6(ev.mean_seconds) << "\n";
    }
    return curve;
}

Tensor bench_image(const std::vector<std::size_t>& shape, std::uint64_t seed) {
    if (shape.size() != 2 && shape.size() != 3)
        throw std::invalid_argument("bench_image: shape must be HxW or HxWxC");
    const std::size_t h = shape[0], w = shape[1];
    const std::size_t c = shape.size() == 3 ? shape[2] : 1;
    std::uint64_t key = seed;
    for (std::size_t d : shape) key = mix_seed(key ^ d);
    Rng rng(key);

    // A dozen soft blobs on a dim background, plus faint pixel noise so the
    // image is not exactly low rank.
    constexpr std::size_t kBlobs = 12;
    struct Blob {
        double cy, cx, sigma, amp;
        double chan[4];
    };
    std::vector<Blob> blobs(kBlobs);
    const double side = static_cast<double>(std::min(h, w));
    for (Blob& b : blobs) {
        b.cy = rng.uniform(0.0, static_cast<double>(h));
        b.cx = rng.uniform(0.0, static_cast<double>(w));
        b.sigma = rng.uniform(side / 12.0, side / 5.0);
        b.amp = rng.uniform(0.3, 0.9);
        for (std::size_t k = 0; k < 4; ++k) b.chan[k] = rng.uniform(0.2, 1.0);
    }
    Tensor out = shape.size() == 3 ? Tensor::zeros({h, w, c}) : Tensor::zeros({h, w});
    std::size_t idx = 0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double base[4] = {0, 0, 0, 0};
            for (const Blob& b : blobs) {
                double dy = (static_cast<double>(y) - b.cy) / b.sigma;
                double dx = (static_cast<double>(x) - b.cx) / b.sigma;
                double g = b.amp * std::exp(-0.5 * (dy * dy + dx * dx));
                for (std::size_t k = 0; k < c; ++k) base[k] += g * b.chan[k];
            }
            for (std::size_t k = 0; k < c; ++k) {
                double v = 0.1 + base[k] + 0.01 * rng.gaussian();
                out.data[idx++] = std::clamp(v, 0.0, 1.0);
            }
        }
    }
    return out;
}

std::vector<TimingRow> time_preprocessing(const std::vector<NamedDefense>& methods,
                                          const std::vector<std::vector<std::size_t>>& shapes,
                                          std::size_t repetitions) {
    if (repetitions < 10)
        throw std::invalid_argument("time_preprocessing: need at least 10 repetitions");
    std::vector<TimingRow> rows;
    for (const NamedDefense& method : methods) {
        for (const std::vector<std::size_t>& shape : shapes) {
            Tensor image = bench_image(shape);
            DefenseConfig cfg = method.cfg;
            if (cfg.dims.empty() && defense_uses_decomposition(cfg.method))
                cfg.dims = choose_dims(shape, 0.4, true);
            std::vector<double> samples;
            samples.reserve(repetitions);
            for (std::size_t rep = 0; rep < 3 + repetitions; ++rep) {
                DefenseConfig per_run = cfg;
                per_run.decomp_opts.seed = mix_seed(0xBE4CULL ^ rep);
                double t0 = now_seconds();
                Tensor purified = purify(image, per_run);
                double elapsed = now_seconds() - t0;
                (void)purified;
                if (rep >= 3) samples.push_back(elapsed);
            }
            double mean = 0.0;
            for (double s : samples) mean += s;
            mean /= static_cast<double>(samples.size());
            double var = 0.0;
            for (double s : samples) var += (s - mean) * (s - mean);
            var /= static_cast<double>(samples.size());
            TimingRow row;
            row.method = method.name;
            row.shape = shape;
            row.mean_seconds = mean;
            row.stddev_seconds = std::sqrt(var);
            row.repetitions = repetitions;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

nlohmann::json attack_config_json(const AttackConfig& cfg) {
    nlohmann::json j;
    j["epsilon"] = cfg.epsilon;
    j["step_size"] = cfg.step_size;
    j["iterations"] = cfg.iterations;
    j["epsilon_grid"] = cfg.epsilon_grid;
    j["cw_constant"] = cfg.cw_constant;
    j["cw_binary_search_steps"] = cfg.cw_binary_search_steps;
    j["overshoot"] = cfg.overshoot;
    j["strict_sign"] = cfg.strict_sign;
    return j;
}

nlohmann::json defense_config_json(const DefenseConfig& cfg) {
    nlohmann::json j;
    j["method"] = defense_name(cfg.method);
    j["dims"] = cfg.dims;
    j["max_iterations"] = cfg.decomp_opts.max_iterations;
    j["tolerance"] = cfg.decomp_opts.tolerance;
    if (cfg.decomp_opts.seed) j["seed"] = *cfg.decomp_opts.seed;
    j["autoencoder"] = cfg.autoencoder != nullptr;
    return j;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "attack,defense,accuracy,ratio,mean_seconds,n\n";
    for (const EvalCell& cell : report.cells) {
        out << cell.attack << ',' << cell.defense << ',' << fixed6(cell.top1_accuracy) << ',';
        if (cell.defense_ratio) out << fixed6(*cell.defense_ratio);
        out << ',';
        if (cell.mean_preprocess_seconds) out << fixed6(*cell.mean_preprocess_seconds);
        out << ',' << cell.sample_count << '\n';
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

void write_report_json(const EvalReport& report, const std::string& path) {
    nlohmann::json j;
    j["config"] = report.config;
    j["cells"] = nlohmann::json::array();
    for (const EvalCell& cell : report.cells) {
        nlohmann::json c;
        c["attack"] = cell.attack;
        c["defense"] = cell.defense;
        c["accuracy"] = cell.top1_accuracy;
        c["n"] = cell.sample_count;
        if (cell.defense_ratio) c["ratio"] = *cell.defense_ratio;
        if (cell.mean_preprocess_seconds) c["mean_seconds"] = *cell.mean_preprocess_seconds;
        c["records"] = nlohmann::json::array();
        for (const PerImageRecord& rec : cell.records) {
            nlohmann::json r;
            r["id"] = rec.id;
            r["label"] = rec.true_label;
            r["predicted"] = rec.predicted;
            if (cell.mean_preprocess_seconds) r["seconds"] = rec.seconds;
            c["records"].push_back(std::move(r));
        }
        j["cells"].push_back(std::move(c));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("short write to " + path);
}

void write_sweep_csv(const SweepCurve& curve, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "dimension,accuracy,mean_seconds\n";
    for (std::size_t i = 0; i < curve.dims.size(); ++i)
        out << curve.dims[i] << ',' << fixed6(curve.accuracy[i]) << ','
            << fixed6(curve.mean_seconds[i]) << '\n';
    if (!out) throw std::runtime_error("short write to " + path);
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "method,shape,mean_seconds,stddev_seconds,n\n";
    for (const TimingRow& row : rows) {
        out << row.method << ',';
        for (std::size_t i = 0; i < row.shape.size(); ++i) {
            if (i) out << 'x';
            out << row.shape[i];
        }
        out << ',' << fixed6(row.mean_seconds) << ',' << fixed6(row.stddev_seconds) << ','
            << row.repetitions << '\n';
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace ts
