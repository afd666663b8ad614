#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tensorshield/attacks.hpp"
#include "tensorshield/data_io.hpp"
#include "tensorshield/nn.hpp"
#include "tensorshield/pipeline.hpp"

namespace ts {

struct PerImageRecord {
    std::uint64_t id = 0;
    std::size_t true_label = 0;
    std::size_t predicted = 0;
    double seconds = 0.0;  // purification wall clock, when timing is on
};

struct EvalCell {
    std::string attack;
    std::string defense;
    double top1_accuracy = 0.0;
    std::size_t sample_count = 0;
    std::optional<double> defense_ratio;          // vs the same defense's clean cell
    std::optional<double> mean_preprocess_seconds;
    std::vector<PerImageRecord> records;
};

struct EvalReport {
    std::vector<EvalCell> cells;
    nlohmann::json config;  // fully resolved run configuration
    const EvalCell* find(const std::string& attack, const std::string& defense) const;
};

struct NamedAttack {
    std::string name;
    AttackKind kind = AttackKind::none;
    AttackConfig cfg;
};

struct NamedDefense {
    std::string name;
    DefenseConfig cfg;
};

struct RunOptions {
    // When set, image i's decomposition seed is run_seed XOR the image id;
    // absent means fresh randomness per purification.
    std::optional<std::uint64_t> run_seed;
    std::size_t workers = 1;
    bool record_timing = false;  // wall-clock fields are kept out of reports otherwise
    std::string cache_dir;       // set: adversarial batches are reused across runs
    std::ostream* progress = nullptr;
};

double top1_accuracy(const Network& net, const LabeledDataset& images, const DefenseConfig& cfg,
                     const RunOptions& opts = {});

// acc_adv / acc_clean; throws std::domain_error when acc_clean is zero.
double defense_ratio(double acc_adv, double acc_clean);

// Full (attack x defense) matrix. Adversarial sets are generated per attack
// (or loaded from cache_dir) and shared across the defenses.
EvalReport run_matrix(const Network& net, const LabeledDataset& test_set,
                      const std::vector<NamedAttack>& attacks,
                      const std::vector<NamedDefense>& defenses, const RunOptions& opts = {});

// Attack an entire dataset; images keep their ids and true labels.
LabeledDataset attack_dataset(const Network& net, const LabeledDataset& test_set,
                              const NamedAttack& attack, const RunOptions& opts = {});

// Same, with per-item success/linf/l2 metadata and a config echo, ready for
// save_tensor_batch.
TensorBatch attack_batch(const Network& net, const LabeledDataset& test_set,
                         const NamedAttack& attack, const RunOptions& opts = {});

struct SweepCurve {
    std::vector<std::size_t> dims;       // strictly ascending
    std::vector<double> accuracy;
    std::vector<double> mean_seconds;    // purification only
};

// Accuracy and purification time per target dimension; timing forces a
// single worker.
SweepCurve sweep_dimension(const Network& net, const LabeledDataset& adv_set,
                           DefenseMethod method, const std::vector<std::size_t>& dims,
                           const RunOptions& opts = {}, const Network* autoencoder = nullptr);

struct TimingRow {
    std::string method;
    std::vector<std::size_t> shape;
    double mean_seconds = 0.0;
    double stddev_seconds = 0.0;
    std::size_t repetitions = 0;
};

// Mean/stddev purification seconds per (defense x shape) on a synthetic
// image: 3 warmup runs, then `repetitions` (>= 10) timed ones, single
// worker. Defenses with empty dims resolve them per shape at fraction 0.4.
std::vector<TimingRow> time_preprocessing(const std::vector<NamedDefense>& methods,
                                          const std::vector<std::vector<std::size_t>>& shapes,
                                          std::size_t repetitions);

// Smooth deterministic image used by benchmarks: gaussian blob composite
// plus mild pixel noise, entries in [0,1].
Tensor bench_image(const std::vector<std::size_t>& shape, std::uint64_t seed = 0xBE9CULL);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_report_json(const EvalReport& report, const std::string& path);
void write_sweep_csv(const SweepCurve& curve, const std::string& path);
void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path);

nlohmann::json attack_config_json(const AttackConfig& cfg);
nlohmann::json defense_config_json(const DefenseConfig& cfg);

}  // namespace ts
