// Command-line front end: train models, generate adversarial batches, purify
// them, and produce evaluation artifacts. Machine-readable output goes only
// to the declared --out paths (plus a <out>.json manifest carrying the fully
// resolved configuration); progress goes to standard error.
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tensorshield/eval.hpp"
#include "tensorshield/rng.hpp"
#include "tensorshield/thread_pool.hpp"

namespace {

using namespace ts;
using nlohmann::json;

// Problems with user-supplied artifacts are usage errors (exit 1), not
// internal failures (exit 2).
template <typename F>
auto load_or_usage(F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::runtime_error& e) {
        throw std::invalid_argument(e.what());
    }
}

void require_file(const std::string& path, const char* flag) {
    if (path.empty()) throw std::invalid_argument(std::string(flag) + " is required");
    if (!std::filesystem::exists(path))
        throw std::invalid_argument(std::string(flag) + ": no such path: " + path);
}

std::size_t default_workers() {
    return std::max(1u, std::thread::hardware_concurrency());
}

void write_manifest(const std::string& out_path, const json& j) {
    const std::string path = out_path + ".json";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write manifest: " + path);
    f << j.dump(2) << "\n";
}

// ---- dataset flags ------------------------------------------------------

struct DataArgs {
    bool synth = false;
    std::string images_path;
    std::string labels_path;
    std::size_t synth_n = 200;
    std::size_t classes = 10;
    std::size_t height = 28;
    std::size_t width = 28;
    std::size_t channels = 1;
    double texture_amp = SynthOptions{}.texture_amplitude;
    double texture_prob = SynthOptions{}.texture_probability;
    double swap_prob = 0.0;
    double lie_prob = 0.0;
    double scramble_prob = 0.0;
};

void add_data_flags(CLI::App* cmd, DataArgs& d, std::size_t default_n) {
    d.synth_n = default_n;
    cmd->add_flag("--synth", d.synth, "use the generated shape dataset");
    cmd->add_option("--images", d.images_path, "IDX image file");
    cmd->add_option("--labels", d.labels_path, "IDX label file");
    cmd->add_option("--synth-n", d.synth_n, "synthetic image count")->capture_default_str();
    cmd->add_option("--classes", d.classes, "synthetic class count")->capture_default_str();
    cmd->add_option("--height", d.height, "synthetic image height")->capture_default_str();
    cmd->add_option("--width", d.width, "synthetic image width")->capture_default_str();
    cmd->add_option("--channels", d.channels, "synthetic channel count")
        ->capture_default_str();
    cmd->add_option("--synth-texture-amp", d.texture_amp, "class texture amplitude")
        ->capture_default_str();
    cmd->add_option("--synth-texture-prob", d.texture_prob, "fraction of textured images")
        ->capture_default_str();
    cmd->add_option("--synth-swap", d.swap_prob,
                    "probability a textured image borrows another class's shape")
        ->capture_default_str();
    cmd->add_option("--synth-lie", d.lie_prob,
                    "probability a textured image carries a wrong class's texture")
        ->capture_default_str();
    cmd->add_option("--synth-scramble", d.scramble_prob,
                    "probability a textured image carries a random pattern")
        ->capture_default_str();
}

LabeledDataset load_data(const DataArgs& d, std::uint64_t seed) {
    if (d.synth) {
        if (!d.images_path.empty() || !d.labels_path.empty())
            throw std::invalid_argument("--synth excludes --images/--labels");
        SynthOptions o;
        o.height = d.height;
        o.width = d.width;
        o.channels = d.channels;
        o.texture_amplitude = d.texture_amp;
        o.texture_probability = d.texture_prob;
        o.shape_swap_probability = d.swap_prob;
        o.texture_lie_probability = d.lie_prob;
        o.texture_scramble_probability = d.scramble_prob;
        return synth_dataset(seed, d.synth_n, d.classes, o);
    }
    require_file(d.images_path, "--images");
    require_file(d.labels_path, "--labels");
    return load_or_usage([&] { return load_idx(d.images_path, d.labels_path); });
}

json data_json(const DataArgs& d, std::uint64_t seed) {
    json j;
    if (d.synth) {
        j["source"] = "synth";
        j["seed"] = seed;
        j["n"] = d.synth_n;
        j["classes"] = d.classes;
        j["height"] = d.height;
        j["width"] = d.width;
        j["channels"] = d.channels;
        j["texture_amplitude"] = d.texture_amp;
        j["texture_probability"] = d.texture_prob;
        if (d.swap_prob > 0.0) j["shape_swap_probability"] = d.swap_prob;
        if (d.lie_prob > 0.0) j["texture_lie_probability"] = d.lie_prob;
        if (d.scramble_prob > 0.0) j["texture_scramble_probability"] = d.scramble_prob;
    } else {
        j["source"] = "idx";
        j["images"] = d.images_path;
        j["labels"] = d.labels_path;
    }
    return j;
}

// ---- attack flags -------------------------------------------------------

struct AttackArgs {
    double eps = 8.0 / 255.0;
    double step_size = 1.0 / 255.0;
    std::size_t iterations = 0;
    std::size_t grid = 100;
    double overshoot = 0.02;
    double cw_constant = 1.0;
    std::size_t cw_steps = 5;
    bool strict_fgsm = false;
    CLI::Option* iter_opt = nullptr;
};

void add_attack_flags(CLI::App* cmd, AttackArgs& a) {
    cmd->add_option("--eps", a.eps, "L-inf budget")->capture_default_str();
    cmd->add_option("--step-size", a.step_size, "BIM per-step alpha")->capture_default_str();
    a.iter_opt = cmd->add_option("--iterations", a.iterations,
                                 "attack iterations (default: 5 BIM, 50 DeepFool/C&W)");
    cmd->add_option("--grid", a.grid, "fgsm-grid epsilon count")->capture_default_str();
    cmd->add_option("--overshoot", a.overshoot, "DeepFool overshoot")->capture_default_str();
    cmd->add_option("--cw-constant", a.cw_constant, "C&W initial objective weight")
        ->capture_default_str();
    cmd->add_option("--cw-steps", a.cw_steps, "C&W binary search rounds")
        ->capture_default_str();
    cmd->add_flag("--strict-paper-fgsm", a.strict_fgsm,
                  "use the printed |sign| gradient form");
}

NamedAttack build_attack(const std::string& name, const AttackArgs& a) {
    const AttackKind kind = attack_kind_from_name(name);
    AttackConfig cfg = default_attack_config(kind);
    cfg.epsilon = a.eps;
    cfg.step_size = a.step_size;
    if (a.iter_opt != nullptr && a.iter_opt->count() > 0) cfg.iterations = a.iterations;
    cfg.epsilon_grid = a.grid;
    cfg.overshoot = a.overshoot;
    cfg.cw_constant = a.cw_constant;
    cfg.cw_binary_search_steps = a.cw_steps;
    cfg.strict_sign = a.strict_fgsm;
    return {attack_name(kind), kind, cfg};
}

// ---- defense flags ------------------------------------------------------

struct DefenseArgs {
    std::vector<std::size_t> dims;
    double fraction = 0.4;
    std::size_t decomp_iterations = 100;
    double tolerance = 1e-6;
    std::string ae_path;
};

void add_defense_flags(CLI::App* cmd, DefenseArgs& d) {
    cmd->add_option("--dims", d.dims, "target dims (tucker core / cp rank)")
        ->delimiter(',');
    cmd->add_option("--fraction", d.fraction,
                    "per-mode size fraction used when --dims is absent")
        ->capture_default_str();
    cmd->add_option("--decomp-iterations", d.decomp_iterations, "ALS/HOOI sweep cap")
        ->capture_default_str();
    cmd->add_option("--tolerance", d.tolerance, "relative-error stop threshold")
        ->capture_default_str();
    cmd->add_option("--ae", d.ae_path, "autoencoder checkpoint for *_ae methods");
}

NamedDefense build_defense(const std::string& name, const DefenseArgs& d,
                           const std::vector<std::size_t>& image_shape,
                           const Network* autoencoder) {
    const DefenseMethod method = defense_method_from_name(name);
    DefenseConfig cfg;
    cfg.method = method;
    cfg.decomp_opts.max_iterations = d.decomp_iterations;
    cfg.decomp_opts.tolerance = d.tolerance;
    if (defense_uses_decomposition(method)) {
        if (!d.dims.empty()) {
            cfg.dims = d.dims;
        } else if (method == DefenseMethod::cp || method == DefenseMethod::cp_ae) {
            cfg.dims = {choose_cp_rank(image_shape, d.fraction, true)};
        } else {
            cfg.dims = choose_dims(image_shape, d.fraction, true);
        }
    }
    if (defense_uses_autoencoder(method)) {
        if (autoencoder == nullptr)
            throw std::invalid_argument(name + " needs --ae <checkpoint>");
        cfg.autoencoder = autoencoder;
    }
    return {defense_name(method), cfg};
}

// ---- scalar losses for checkpoint manifests -----------------------------

double mean_classifier_loss(const Network& net, const LabeledDataset& ds) {
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        Tensor logits = forward(net, ds.images[i]);
        double m = logits.data[0];
        for (double v : logits.data) m = std::max(m, v);
        double z = 0.0;
        for (double v : logits.data) z += std::exp(v - m);
        total += m + std::log(z) - logits.data[ds.labels[i]];
    }
    return total / static_cast<double>(ds.size());
}

double mean_autoencoder_loss(const Network& net, const std::vector<Tensor>& images) {
    double total = 0.0;
    for (const Tensor& x : images) {
        const Tensor y = forward(net, x);
        double acc = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            const double d = y.data[i] - x.data[i];
            acc += d * d;
        }
        total += acc / static_cast<double>(x.data.size());
    }
    return total / static_cast<double>(images.size());
}

// ---- subcommand state ---------------------------------------------------

struct CommonArgs {
    std::optional<std::uint64_t> seed;
    std::size_t workers = default_workers();
    std::string out;
    bool quiet = false;
};

void add_common_flags(CLI::App* cmd, CommonArgs& c, const char* out_help) {
    cmd->add_option("--seed", c.seed, "run seed")->envname("TENSORSHIELD_SEED");
    cmd->add_option("--workers", c.workers, "worker thread count")->capture_default_str();
    cmd->add_option("--out", c.out, out_help)->required();
    cmd->add_flag("--quiet", c.quiet, "suppress progress output");
}

std::ostream* progress_of(const CommonArgs& c) { return c.quiet ? nullptr : &std::cerr; }

json common_json(const char* subcommand, const CommonArgs& c) {
    json j;
    j["subcommand"] = subcommand;
    if (c.seed)
        j["seed"] = *c.seed;
    else
        j["seed"] = nullptr;
    j["workers"] = c.workers;
    j["out"] = c.out;
    return j;
}

// Trains a throwaway classifier on a synthetic split disjoint from the
// evaluation data; used when eval/sweep get --synth without --model.
struct ModelArgs {
    std::string model_path;
    std::size_t train_n = 1000;
    std::size_t epochs = 3;
};

void add_model_flags(CLI::App* cmd, ModelArgs& m) {
    cmd->add_option("--model", m.model_path, "classifier checkpoint");
    cmd->add_option("--train-n", m.train_n, "training images when self-training")
        ->capture_default_str();
    cmd->add_option("--epochs", m.epochs, "epochs when self-training")
        ->capture_default_str();
}

Network obtain_model(const ModelArgs& m, const DataArgs& d, std::uint64_t seed,
                     std::size_t workers, std::ostream* progress, json& echo) {
    if (!m.model_path.empty()) {
        require_file(m.model_path, "--model");
        echo["model"] = m.model_path;
        return load_or_usage([&] { return load_network(m.model_path); });
    }
    if (!d.synth)
        throw std::invalid_argument("--model is required unless --synth is given");
    DataArgs train_args = d;
    train_args.synth_n = m.train_n;
    const std::uint64_t train_seed = mix_seed(seed ^ 0x7452ULL);
    echo["model"] = {{"source", "self-trained"},
                     {"train_n", m.train_n},
                     {"epochs", m.epochs},
                     {"lr", 1e-3},
                     {"batch", 32},
                     {"seed", train_seed}};
    LabeledDataset train_set = load_data(train_args, train_seed);
    TrainOptions topt{workers, progress};
    return train_classifier(train_set, m.epochs, 1e-3, 32, seed, topt);
}

const Network* maybe_load_ae(const std::string& path, Network& storage, json& echo) {
    if (path.empty()) return nullptr;
    require_file(path, "--ae");
    storage = load_or_usage([&] { return load_network(path); });
    echo["ae"] = path;
    return &storage;
}

std::vector<std::size_t> parse_shape(const std::string& text) {
    std::vector<std::size_t> shape;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t next = text.find('x', pos);
        const std::string tok = text.substr(pos, next - pos);
        try {
            const unsigned long v = std::stoul(tok);
            if (v == 0) throw std::invalid_argument("zero");
            shape.push_back(v);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad shape '" + text + "', expected e.g. 224x224x3");
        }
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    if (shape.size() < 2 || shape.size() > 3)
        throw std::invalid_argument("bad shape '" + text + "', expected HxW or HxWxC");
    return shape;
}

// ---- subcommands --------------------------------------------------------

void run_train_classifier(const CommonArgs& c, const DataArgs& d, std::size_t epochs,
                          double lr, std::size_t batch) {
    const std::uint64_t seed = c.seed.value_or(0);
    LabeledDataset ds = load_data(d, seed);
    TrainOptions topt{c.workers, progress_of(c)};
    Network net = train_classifier(ds, epochs, lr, batch, seed, topt);

    json run = common_json("train-classifier", c);
    run["data"] = data_json(d, seed);
    run["epochs"] = epochs;
    run["lr"] = lr;
    run["batch"] = batch;
    CheckpointMeta meta;
    meta.seed = seed;
    meta.epochs = epochs;
    meta.final_loss = mean_classifier_loss(net, ds);
    meta.run = run;
    save_network(net, c.out, meta);
}

void run_train_ae(const CommonArgs& c, const DataArgs& d, double noise_sigma,
                  std::size_t epochs) {
    const std::uint64_t seed = c.seed.value_or(0);
    LabeledDataset ds = load_data(d, seed);
    TrainOptions topt{c.workers, progress_of(c)};
    Network net = train_denoising_autoencoder(ds.images, noise_sigma, epochs, seed, topt);

    json run = common_json("train-ae", c);
    run["data"] = data_json(d, seed);
    run["noise_sigma"] = noise_sigma;
    run["epochs"] = epochs;
    CheckpointMeta meta;
    meta.seed = seed;
    meta.epochs = epochs;
    meta.final_loss = mean_autoencoder_loss(net, ds.images);
    meta.run = run;
    save_network(net, c.out, meta);
}

void run_attack(const CommonArgs& c, const DataArgs& d, const ModelArgs& m,
                const AttackArgs& a, const std::string& method) {
    const std::uint64_t seed = c.seed.value_or(0);
    json echo = common_json("attack", c);
    echo["data"] = data_json(d, seed);
    echo["method"] = method;

    Network net = obtain_model(m, d, seed, c.workers, progress_of(c), echo);
    LabeledDataset ds = load_data(d, seed);
    NamedAttack atk = build_attack(method, a);

    RunOptions opts;
    opts.workers = c.workers;
    opts.progress = progress_of(c);
    TensorBatch batch = attack_batch(net, ds, atk, opts);
    batch.config["run"] = echo;
    save_tensor_batch(batch, c.out);
}

void run_defend(const CommonArgs& c, const std::string& in_dir, const DefenseArgs& d,
                const std::string& method) {
    require_file(in_dir, "--in");
    TensorBatch in = load_or_usage([&] { return load_tensor_batch(in_dir); });
    if (in.items.empty()) throw std::invalid_argument("--in: empty batch: " + in_dir);

    json echo = common_json("defend", c);
    echo["in"] = in_dir;
    echo["method"] = method;
    Network ae_storage;
    const Network* ae = maybe_load_ae(d.ae_path, ae_storage, echo);
    NamedDefense def = build_defense(method, d, in.items[0].tensor.shape, ae);

    TensorBatch out;
    out.items.resize(in.items.size());
    parallel_for(in.items.size(), c.workers, [&](std::size_t i) {
        BatchItem item = in.items[i];
        DefenseConfig per_item = def.cfg;
        // Same stream assignment as the evaluation harness: the seed is tied
        // to the item id, not its position.
        if (c.seed) per_item.decomp_opts.seed = *c.seed ^ item.id;
        item.tensor = purify(item.tensor, per_item);
        out.items[i] = std::move(item);
    });
    out.config["defense"] = def.name;
    out.config["config"] = defense_config_json(def.cfg);
    out.config["source"] = in.config;
    out.config["run"] = echo;
    save_tensor_batch(out, c.out);
}

void run_eval(const CommonArgs& c, const DataArgs& d, const ModelArgs& m,
              const AttackArgs& a, const DefenseArgs& def_args,
              const std::vector<std::string>& attack_names,
              const std::vector<std::string>& defense_names, const std::string& cache_dir,
              bool timing) {
    const std::uint64_t data_seed = c.seed.value_or(0);
    json echo = common_json("eval", c);
    echo["data"] = data_json(d, data_seed);
    echo["cache"] = cache_dir;
    echo["timing"] = timing;

    Network net = obtain_model(m, d, data_seed, c.workers, progress_of(c), echo);
    Network ae_storage;
    const Network* ae = maybe_load_ae(def_args.ae_path, ae_storage, echo);
    LabeledDataset test_set = load_data(d, data_seed);
    if (test_set.size() == 0) throw std::invalid_argument("empty evaluation set");

    std::vector<NamedAttack> attacks;
    for (const std::string& name : attack_names) attacks.push_back(build_attack(name, a));
    std::vector<NamedDefense> defenses;
    for (const std::string& name : defense_names)
        defenses.push_back(build_defense(name, def_args, test_set.images[0].shape, ae));

    RunOptions opts;
    opts.run_seed = c.seed;
    opts.workers = c.workers;
    opts.record_timing = timing;
    opts.cache_dir = cache_dir;
    opts.progress = progress_of(c);
    EvalReport report = run_matrix(net, test_set, attacks, defenses, opts);
    report.config["run"] = echo;
    write_report_csv(report, c.out);
    write_report_json(report, c.out + ".json");
}

void run_sweep(const CommonArgs& c, const DataArgs& d, const ModelArgs& m,
               const AttackArgs& a, const std::string& ae_path, const std::string& method,
               const std::vector<std::size_t>& dims, const std::string& attack_name_arg) {
    const std::uint64_t data_seed = c.seed.value_or(0);
    json echo = common_json("sweep", c);
    echo["data"] = data_json(d, data_seed);
    echo["method"] = method;
    echo["dims"] = dims;
    echo["attack"] = attack_name_arg;

    Network net = obtain_model(m, d, data_seed, c.workers, progress_of(c), echo);
    Network ae_storage;
    const Network* ae = maybe_load_ae(ae_path, ae_storage, echo);
    LabeledDataset test_set = load_data(d, data_seed);
    NamedAttack atk = build_attack(attack_name_arg, a);
    echo["attack_config"] = attack_config_json(atk.cfg);

    RunOptions opts;
    opts.run_seed = c.seed;
    opts.workers = c.workers;
    opts.progress = progress_of(c);
    LabeledDataset adv = attack_dataset(net, test_set, atk, opts);
    SweepCurve curve = sweep_dimension(net, adv, defense_method_from_name(method), dims,
                                       opts, ae);
    write_sweep_csv(curve, c.out);
    json manifest;
    manifest["run"] = echo;
    manifest["dims"] = curve.dims;
    manifest["accuracy"] = curve.accuracy;
    manifest["mean_seconds"] = curve.mean_seconds;
    write_manifest(c.out, manifest);
}

void run_bench(const CommonArgs& c, const DefenseArgs& def_args,
               const std::vector<std::string>& method_names,
               const std::vector<std::string>& shape_texts, std::size_t repetitions) {
    std::vector<std::vector<std::size_t>> shapes;
    for (const std::string& text : shape_texts) shapes.push_back(parse_shape(text));

    json echo = common_json("bench", c);
    echo["methods"] = method_names;
    echo["shapes"] = shape_texts;
    echo["repetitions"] = repetitions;

    bool needs_ae = false;
    for (const std::string& name : method_names)
        needs_ae = needs_ae || defense_uses_autoencoder(defense_method_from_name(name));

    Network ae_storage;
    const Network* ae = maybe_load_ae(def_args.ae_path, ae_storage, echo);
    if (needs_ae) {
        for (const auto& s : shapes)
            if (s.size() != 3)
                throw std::invalid_argument("autoencoder methods need HxWxC shapes");
        if (ae == nullptr) {
            // Timing only needs the forward-pass cost, so an untrained net
            // with the right channel count is enough.
            for (const auto& s : shapes)
                if (s[2] != shapes[0][2])
                    throw std::invalid_argument(
                        "mixed channel counts need an explicit --ae");
            ae_storage = make_autoencoder(shapes[0][2]);
            init_params(ae_storage, mix_seed(c.seed.value_or(0) ^ 0xAEBEULL));
            ae = &ae_storage;
            echo["ae"] = {{"source", "fresh"}, {"channels", shapes[0][2]}};
        }
    }

    std::vector<NamedDefense> methods;
    for (const std::string& name : method_names) {
        DefenseArgs per = def_args;  // empty dims resolve per shape inside the timer
        NamedDefense def = build_defense(name, per, shapes[0],
                                         defense_uses_autoencoder(
                                             defense_method_from_name(name))
                                             ? ae
                                             : nullptr);
        if (def_args.dims.empty()) def.cfg.dims.clear();
        methods.push_back(std::move(def));
    }

    std::vector<TimingRow> rows = time_preprocessing(methods, shapes, repetitions);
    write_timing_csv(rows, c.out);
    json table = json::array();
    for (const TimingRow& r : rows) {
        json row;
        row["method"] = r.method;
        row["shape"] = r.shape;
        row["mean_seconds"] = r.mean_seconds;
        row["stddev_seconds"] = r.stddev_seconds;
        table.push_back(row);
    }
    json manifest;
    manifest["run"] = echo;
    manifest["rows"] = table;
    write_manifest(c.out, manifest);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tensor-decomposition defense toolkit"};
    app.require_subcommand(1);

    // train-classifier
    auto* tc = app.add_subcommand("train-classifier", "train the two-conv classifier");
    CommonArgs tc_common;
    DataArgs tc_data;
    std::size_t tc_epochs = 3, tc_batch = 32;
    double tc_lr = 1e-3;
    add_common_flags(tc, tc_common, "checkpoint path");
    add_data_flags(tc, tc_data, 2000);
    tc->add_option("--epochs", tc_epochs)->capture_default_str();
    tc->add_option("--lr", tc_lr)->capture_default_str();
    tc->add_option("--batch", tc_batch)->capture_default_str();
    tc->callback([&] { run_train_classifier(tc_common, tc_data, tc_epochs, tc_lr, tc_batch); });

    // train-ae
    auto* ta = app.add_subcommand("train-ae", "train the denoising autoencoder");
    CommonArgs ta_common;
    DataArgs ta_data;
    double ta_sigma = 0.1;
    std::size_t ta_epochs = 10;
    add_common_flags(ta, ta_common, "checkpoint path");
    add_data_flags(ta, ta_data, 512);
    ta->add_option("--noise-sigma", ta_sigma)->capture_default_str();
    ta->add_option("--epochs", ta_epochs)->capture_default_str();
    ta->callback([&] { run_train_ae(ta_common, ta_data, ta_sigma, ta_epochs); });

    // attack
    auto* at = app.add_subcommand("attack", "generate an adversarial batch");
    CommonArgs at_common;
    DataArgs at_data;
    ModelArgs at_model;
    AttackArgs at_attack;
    std::string at_method;
    add_common_flags(at, at_common, "batch output directory");
    add_data_flags(at, at_data, 200);
    add_model_flags(at, at_model);
    add_attack_flags(at, at_attack);
    at->add_option("--method", at_method, "fgsm|fgsm-grid|bim|deepfool|cw")->required();
    at->callback([&] { run_attack(at_common, at_data, at_model, at_attack, at_method); });

    // defend
    auto* df = app.add_subcommand("defend", "purify a saved batch");
    CommonArgs df_common;
    DefenseArgs df_defense;
    std::string df_in, df_method = "tucker";
    add_common_flags(df, df_common, "purified batch output directory");
    add_defense_flags(df, df_defense);
    df->add_option("--in", df_in, "input batch directory")->required();
    df->add_option("--method", df_method, "none|cp|cp_ae|tucker|tucker_ae")
        ->capture_default_str();
    df->callback([&] { run_defend(df_common, df_in, df_defense, df_method); });

    // eval
    auto* ev = app.add_subcommand("eval", "attack x defense accuracy matrix");
    CommonArgs ev_common;
    DataArgs ev_data;
    ModelArgs ev_model;
    AttackArgs ev_attack;
    DefenseArgs ev_defense;
    std::vector<std::string> ev_attacks = {"clean", "fgsm", "bim", "deepfool", "cw"};
    std::vector<std::string> ev_defenses = {"none", "cp", "tucker"};
    std::string ev_cache;
    bool ev_timing = false;
    add_common_flags(ev, ev_common, "report CSV path");
    add_data_flags(ev, ev_data, 200);
    add_model_flags(ev, ev_model);
    add_attack_flags(ev, ev_attack);
    add_defense_flags(ev, ev_defense);
    ev->add_option("--attacks", ev_attacks, "attack list")
        ->delimiter(',')
        ->capture_default_str();
    ev->add_option("--defenses", ev_defenses, "defense list")
        ->delimiter(',')
        ->capture_default_str();
    ev->add_option("--cache", ev_cache, "adversarial batch cache directory");
    ev->add_flag("--timing", ev_timing, "record purification wall clock in reports");
    ev->callback([&] {
        run_eval(ev_common, ev_data, ev_model, ev_attack, ev_defense, ev_attacks,
                 ev_defenses, ev_cache, ev_timing);
    });

    // sweep
    auto* sw = app.add_subcommand("sweep", "accuracy vs target dimension curve");
    CommonArgs sw_common;
    DataArgs sw_data;
    ModelArgs sw_model;
    AttackArgs sw_attack;
    std::string sw_ae, sw_method = "tucker", sw_attack_name = "fgsm";
    std::vector<std::size_t> sw_dims;
    add_common_flags(sw, sw_common, "curve CSV path");
    add_data_flags(sw, sw_data, 100);
    add_model_flags(sw, sw_model);
    add_attack_flags(sw, sw_attack);
    sw->add_option("--method", sw_method, "cp|cp_ae|tucker|tucker_ae")
        ->capture_default_str();
    sw->add_option("--dims", sw_dims, "ascending dimension list")->delimiter(',')->required();
    sw->add_option("--attack", sw_attack_name, "attack generating the inputs")
        ->capture_default_str();
    sw->add_option("--ae", sw_ae, "autoencoder checkpoint for *_ae methods");
    sw->callback([&] {
        run_sweep(sw_common, sw_data, sw_model, sw_attack, sw_ae, sw_method, sw_dims,
                  sw_attack_name);
    });

    // bench
    auto* be = app.add_subcommand("bench", "purification timing table");
    CommonArgs be_common;
    DefenseArgs be_defense;
    std::vector<std::string> be_methods = {"cp", "tucker", "cp_ae", "tucker_ae"};
    std::vector<std::string> be_shapes = {"224x224x3"};
    std::size_t be_reps = 10;
    add_common_flags(be, be_common, "timing CSV path");
    add_defense_flags(be, be_defense);
    be->add_option("--methods", be_methods, "defense list")
        ->delimiter(',')
        ->capture_default_str();
    be->add_option("--shapes", be_shapes, "image shapes, e.g. 224x224x3")
        ->delimiter(',')
        ->capture_default_str();
    be->add_option("--reps", be_reps, "timed repetitions per pair")->capture_default_str();
    be->callback([&] { run_bench(be_common, be_defense, be_methods, be_shapes, be_reps); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
