// End-to-end acceptance checks. Each numbered check prints one [PASS]/[FAIL]
// line with the measured values and its pinned thresholds; the process exits
// nonzero when any check fails. Check 4 trains real models and is the slow
// one; progress goes to stderr.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "tensorshield/eval.hpp"
#include "tensorshield/rng.hpp"

using namespace ts;

namespace {

int g_failures = 0;

void line(bool ok, int idx, const char* fmt, ...) {
    if (!ok) ++g_failures;
    std::printf("[%s] %d ", ok ? "PASS" : "FAIL", idx);
    va_list ap;
    va_start(ap, fmt);
    std::vprintf(fmt, ap);
    va_end(ap);
    std::printf("\n");
    std::fflush(stdout);
}

void note(const char* fmt, ...) {
    va_list ap;
    va_start(ap, fmt);
    std::vfprintf(stderr, fmt, ap);
    va_end(ap);
    std::fprintf(stderr, "\n");
}

double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

double rel_fro(const Tensor& a, const Tensor& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.data[i] - b.data[i];
        num += d * d;
        den += b.data[i] * b.data[i];
    }
    return std::sqrt(num / den);
}

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.data) v = rng.uniform01();
    return t;
}

// ---- 1: decomposition round trips and ALS monotonicity -------------------

// Mixed-sign factors keep the columns well separated; all-positive draws
// leave ALS crawling through a nearly collinear basin.
Tensor rank_k_tensor(std::size_t rank, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({6, 5, 4});
    for (std::size_t r = 0; r < rank; ++r) {
        std::vector<double> u(6), v(5), w(4);
        for (double& x : u) x = rng.uniform(-1.0, 1.0);
        for (double& x : v) x = rng.uniform(-1.0, 1.0);
        for (double& x : w) x = rng.uniform(-1.0, 1.0);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 5; ++j)
                for (std::size_t k = 0; k < 4; ++k) t.data[(i * 5 + j) * 4 + k] += u[i] * v[j] * w[k];
    }
    return t;
}

void check_1() {
    Tensor x = random_tensor({9, 7, 5}, 21);
    DecompOptions full;
    full.max_iterations = 30;
    full.tolerance = 1e-14;
    full.seed = 4;
    const double tucker_err = rel_fro(tucker_reconstruct(tucker_decompose(x, {9, 7, 5}, full)), x);

    DecompOptions cp_opts;
    cp_opts.max_iterations = 1000;
    cp_opts.tolerance = 0.0;
    cp_opts.seed = 4;
    Tensor r1 = rank_k_tensor(1, 31);
    Tensor r3 = rank_k_tensor(3, 32);
    const double cp1_err = rel_fro(cp_reconstruct(cp_decompose(r1, 1, cp_opts)), r1);
    const double cp3_err = rel_fro(cp_reconstruct(cp_decompose(r3, 3, cp_opts)), r3);

    DecompOptions als;
    als.max_iterations = 60;
    als.tolerance = 0.0;
    als.seed = 9;
    CPFactors f = cp_decompose(random_tensor({8, 6, 5}, 22), 4, als);
    double worst_rise = 0.0;
    for (std::size_t i = 1; i < f.error_history.size(); ++i)
        worst_rise = std::max(worst_rise, f.error_history[i] - f.error_history[i - 1]);

    line(tucker_err <= 1e-8 && cp1_err <= 1e-6 && cp3_err <= 1e-6 && worst_rise <= 1e-12, 1,
         "decomposition: full-core tucker round trip %.2e (<= 1e-8), cp recovery rank-1 %.2e "
         "rank-3 %.2e (<= 1e-6), worst per-sweep error rise %.2e (<= 1e-12)",
         tucker_err, cp1_err, cp3_err, worst_rise);
}

// ---- 2: analytic gradients against central finite differences ------------

Network grad_probe_net(int arch, std::uint64_t seed) {
    std::vector<LayerSpec> layers;
    auto conv = [](std::size_t in, std::size_t out) {
        LayerSpec s;
        s.kind = LayerKind::conv2d;
        s.in_channels = in;
        s.out_channels = out;
        return s;
    };
    auto plain = [](LayerKind k) {
        LayerSpec s;
        s.kind = k;
        return s;
    };
    auto dense = [](std::size_t in, std::size_t out) {
        LayerSpec s;
        s.kind = LayerKind::dense;
        s.in_features = in;
        s.out_features = out;
        return s;
    };
    NetworkPurpose purpose = NetworkPurpose::classifier;
    switch (arch) {
        case 0:  // every layer kind in one stack, cross-entropy head
            layers = {conv(1, 2), plain(LayerKind::elu), plain(LayerKind::maxpool2x2),
                      plain(LayerKind::flatten), dense(8, 3)};
            break;
        case 1:  // conv stack with MSE, the autoencoder shape
            layers = {conv(2, 3), plain(LayerKind::elu), conv(3, 2)};
            purpose = NetworkPurpose::autoencoder;
            break;
        default:  // affine classifier
            layers = {plain(LayerKind::flatten), dense(12, 4)};
            break;
    }
    Network net = make_network(layers, purpose);
    init_params(net, seed);
    return net;
}

void check_2() {
    const double h = 1e-5;
    double worst = 0.0;
    int nets = 0;
    for (std::uint64_t seed = 1; seed <= 21; ++seed) {
        const int arch = static_cast<int>(seed % 3);
        Network net = grad_probe_net(arch, seed * 131);
        Rng rng(seed * 7 + 1);
        Tensor x = arch == 0 ? random_tensor({4, 4, 1}, seed)
                             : arch == 1 ? random_tensor({3, 4, 2}, seed)
                                         : random_tensor({3, 4, 1}, seed);
        LossKind loss = arch == 1 ? LossKind::mean_squared_error
                                  : LossKind::cross_entropy_with_softmax;
        Tensor target;
        if (arch == 1) {
            target = random_tensor(x.shape, seed + 500);
        } else {
            const std::size_t classes = forward(net, x).numel();
            target = one_hot(rng.uniform01() * classes, classes);
        }

        BackwardResult analytic = backward(net, x, target, loss);
        std::vector<double> a(analytic.param_grads);
        a.insert(a.end(), analytic.input_grad.data.begin(), analytic.input_grad.data.end());

        std::vector<double> fd;
        fd.reserve(a.size());
        for (std::size_t j = 0; j < net.params.size(); ++j) {
            Network probe = net;
            probe.params[j] = net.params[j] + h;
            const double up = backward(probe, x, target, loss).loss;
            probe.params[j] = net.params[j] - h;
            const double dn = backward(probe, x, target, loss).loss;
            fd.push_back((up - dn) / (2 * h));
        }
        for (std::size_t j = 0; j < x.numel(); ++j) {
            Tensor probe = x;
            probe.data[j] = x.data[j] + h;
            const double up = backward(net, probe, target, loss).loss;
            probe.data[j] = x.data[j] - h;
            const double dn = backward(net, probe, target, loss).loss;
            fd.push_back((up - dn) / (2 * h));
        }

        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            num += (a[j] - fd[j]) * (a[j] - fd[j]);
            den += fd[j] * fd[j];
        }
        worst = std::max(worst, std::sqrt(num / den));
        ++nets;
    }
    line(worst <= 1e-4 && nets >= 20, 2,
         "gradients: %d random nets over all layer kinds and both losses, worst relative "
         "l2 error vs central differences %.2e (<= 1e-4)",
         nets, worst);
}

// ---- 3: attack budget and range invariants --------------------------------

void check_3() {
    SynthOptions so;
    so.height = 8;
    so.width = 8;
    so.max_shift = 1;
    LabeledDataset ds = synth_dataset(404, 80, 2, so);
    Network net = train_classifier(ds, 2, 1e-3, 8, 6);

    const double eps = 8.0 / 255.0;
    double worst_overshoot = -1.0;
    double lo = 1.0, hi = 0.0;
    for (const AttackKind kind : {AttackKind::fgsm, AttackKind::bim}) {
        AttackConfig cfg = default_attack_config(kind);
        cfg.epsilon = eps;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            AdvResult res = run_attack(kind, net, ds.images[i], ds.labels[i], cfg);
            for (std::size_t j = 0; j < res.image.numel(); ++j) {
                worst_overshoot = std::max(
                    worst_overshoot, std::abs(res.image.data[j] - ds.images[i].data[j]) - eps);
                lo = std::min(lo, res.image.data[j]);
                hi = std::max(hi, res.image.data[j]);
            }
        }
    }

    // Affine classifiers admit a closed-form minimal boundary distance; the
    // iterative attack must land on it (scaled by its overshoot) in one step.
    // Only draws whose boundary step stays inside [0,1] count: the attack
    // clips, which truncates the measured norm for exterior landings.
    double worst_df = 0.0;
    int df_cases = 0;
    for (std::uint64_t seed = 1; seed <= 60 && df_cases < 10; ++seed) {
        std::vector<LayerSpec> layers(2);
        layers[0].kind = LayerKind::flatten;
        layers[1].kind = LayerKind::dense;
        layers[1].in_features = 6;
        layers[1].out_features = 4;
        Network affine = make_network(layers, NetworkPurpose::classifier);
        Rng rng(seed);
        for (double& v : affine.params) v = 0.3 * rng.uniform(-1.0, 1.0);
        Tensor x({2, 3, 1});
        for (double& v : x.data) v = rng.uniform(0.4, 0.6);

        Tensor logits = forward(affine, x);
        std::size_t k0 = 0;
        for (std::size_t c = 1; c < 4; ++c)
            if (logits.data[c] > logits.data[k0]) k0 = c;
        double best_d = 1e300;
        std::vector<double> best_w(6);
        double best_fdiff = 0.0;
        for (std::size_t l = 0; l < 4; ++l) {
            if (l == k0) continue;
            std::vector<double> w(6);
            double wn2 = 0.0;
            for (std::size_t i = 0; i < 6; ++i) {
                w[i] = affine.params[i * 4 + l] - affine.params[i * 4 + k0];
                wn2 += w[i] * w[i];
            }
            const double d = std::abs(logits.data[l] - logits.data[k0]) / std::sqrt(wn2);
            if (d < best_d) {
                best_d = d;
                best_w = w;
                best_fdiff = std::abs(logits.data[l] - logits.data[k0]);
            }
        }

        AttackConfig cfg = default_attack_config(AttackKind::deepfool);
        double wn2 = 0.0;
        for (double w : best_w) wn2 += w * w;
        bool interior = true;
        for (std::size_t i = 0; i < 6; ++i) {
            const double landed =
                x.data[i] + (1.0 + cfg.overshoot) * best_fdiff / wn2 * best_w[i];
            interior = interior && landed > 0.02 && landed < 0.98;
        }
        if (!interior) continue;

        AdvResult res = run_attack(AttackKind::deepfool, affine, x, k0, cfg);
        worst_df = std::max(worst_df, std::abs(res.l2 / (1.0 + cfg.overshoot) - best_d));
        ++df_cases;
    }

    line(worst_overshoot <= 1e-15 && lo >= 0.0 && hi <= 1.0 && worst_df <= 1e-6 &&
             df_cases >= 10, 3,
         "attack budgets: worst linf overshoot %.1e over 160 fgsm/bim images (<= 1e-15), "
         "pixel range [%.2f, %.2f] within [0,1], affine boundary-distance error %.2e over "
         "%d nets (<= 1e-6)",
         worst_overshoot, lo, hi, worst_df, df_cases);
}

// ---- 4/6/8: trained defense matrix, ablation curve, randomized smoothing --

// Operating point for the trained checks. The train split supervises texture
// over shape (swapped shapes, occasional lying textures) so small-budget
// gradient attacks work; the test split keeps both cues truthful.
struct OperatingPoint {
    std::size_t train_n = 3000, test_n = 1000, ae_n = 2000;
    std::size_t epochs = 3, ae_epochs = 60;
    double ae_sigma = 0.08;
    std::size_t cp_rank = 5, tucker_dim = 5;
    double texture_amplitude = 0.02;
    double shape_swap = 0.8, texture_lie = 0.1;
    double eps = 8.0 / 255.0;
};

struct TrainedContext {
    Network classifier;
    Network autoencoder;
    LabeledDataset test;
    EvalReport report;
    double seconds = 0.0;
};

SynthOptions natural_options(const OperatingPoint& op) {
    SynthOptions so;
    so.texture_amplitude = op.texture_amplitude;
    return so;
}

TrainedContext run_defense_matrix(const OperatingPoint& op) {
    TrainedContext ctx;
    const double t0 = now();

    SynthOptions test_opts = natural_options(op);
    SynthOptions train_opts = test_opts;
    train_opts.shape_swap_probability = op.shape_swap;
    train_opts.texture_lie_probability = op.texture_lie;

    LabeledDataset train = synth_dataset(101, op.train_n, 10, train_opts);
    ctx.test = synth_dataset(202, op.test_n, 10, test_opts);
    note("  [4] training classifier (%zu images, %zu epochs)", op.train_n, op.epochs);
    ctx.classifier = train_classifier(train, op.epochs, 1e-3, 32, 11);

    LabeledDataset ae_set = synth_dataset(303, op.ae_n, 10, test_opts);
    note("  [4] training autoencoder (%zu images, %zu epochs)", op.ae_n, op.ae_epochs);
    ctx.autoencoder = train_denoising_autoencoder(ae_set.images, op.ae_sigma, op.ae_epochs, 12);

    std::vector<NamedAttack> attacks;
    for (const AttackKind kind : {AttackKind::none, AttackKind::fgsm, AttackKind::bim,
                                  AttackKind::deepfool, AttackKind::cw}) {
        NamedAttack a{attack_name(kind), kind, default_attack_config(kind)};
        a.cfg.epsilon = op.eps;
        attacks.push_back(a);
    }

    std::vector<NamedDefense> defenses;
    for (const DefenseMethod m : {DefenseMethod::none, DefenseMethod::cp, DefenseMethod::tucker,
                                  DefenseMethod::cp_ae, DefenseMethod::tucker_ae}) {
        NamedDefense d{defense_name(m), {}};
        d.cfg.method = m;
        if (m == DefenseMethod::cp || m == DefenseMethod::cp_ae)
            d.cfg.dims = {op.cp_rank};
        else if (m != DefenseMethod::none)
            d.cfg.dims = {op.tucker_dim, op.tucker_dim, 1};
        if (defense_uses_autoencoder(m)) d.cfg.autoencoder = &ctx.autoencoder;
        defenses.push_back(d);
    }

    RunOptions opts;
    opts.run_seed = 99;
    opts.progress = nullptr;
    note("  [4] evaluating %zux%zu matrix on %zu images", attacks.size(), defenses.size(),
         ctx.test.size());
    ctx.report = run_matrix(ctx.classifier, ctx.test, attacks, defenses, opts);
    ctx.seconds = now() - t0;
    return ctx;
}

void check_4(const TrainedContext& ctx) {
    auto acc = [&](const char* a, const char* d) {
        const EvalCell* cell = ctx.report.find(a, d);
        return cell ? cell->top1_accuracy : -1.0;
    };
    const double fgsm_none = acc("fgsm", "none");
    const double bim_none = acc("bim", "none");
    const double cpae_fgsm = acc("fgsm", "cp_ae");
    const double cpae_bim = acc("bim", "cp_ae");
    const double cpae_df = acc("deepfool", "cp_ae");
    const double cpae_cw = acc("cw", "cp_ae");
    const double clean_none = acc("clean", "none");
    double worst_clean_drop = 0.0;
    for (const char* d : {"cp", "tucker", "cp_ae", "tucker_ae"})
        worst_clean_drop = std::max(worst_clean_drop, clean_none - acc("clean", d));

    const bool ok = fgsm_none <= 0.05 && bim_none <= 0.05 && cpae_fgsm >= 0.90 &&
                    cpae_bim >= 0.90 && cpae_df >= 0.90 && cpae_cw >= 0.90 &&
                    worst_clean_drop <= 0.02 && ctx.seconds <= 1800.0;
    line(ok, 4,
         "defense matrix, %zu images at eps 8/255: undefended fgsm %.3f bim %.3f (<= 0.05); "
         "cp+ae fgsm %.3f bim %.3f deepfool %.3f cw %.3f (>= 0.90); worst clean drop %.3f "
         "(<= 0.02, clean %.3f); %.0fs spent (<= 1800)",
         ctx.test.size(), fgsm_none, bim_none, cpae_fgsm, cpae_bim, cpae_df, cpae_cw,
         worst_clean_drop, clean_none, ctx.seconds);
}

void check_5() {
    const double ratio = defense_ratio(0.9615, 0.9864);
    line(std::abs(ratio - 0.9748) <= 1e-4, 5,
         "defense ratio: 0.9615 / 0.9864 = %.6f, |ratio - 0.9748| = %.2e (<= 1e-4)", ratio,
         std::abs(ratio - 0.9748));
}

void check_6(const TrainedContext& ctx, const OperatingPoint& op) {
    NamedAttack fgsm{"fgsm", AttackKind::fgsm, default_attack_config(AttackKind::fgsm)};
    fgsm.cfg.epsilon = op.eps;
    RunOptions opts;
    opts.run_seed = 99;

    LabeledDataset subset;
    subset.class_count = ctx.test.class_count;
    for (std::size_t i = 0; i < 300 && i < ctx.test.size(); ++i) {
        subset.images.push_back(ctx.test.images[i]);
        subset.labels.push_back(ctx.test.labels[i]);
        subset.ids.push_back(ctx.test.ids[i]);
    }
    LabeledDataset adv = attack_dataset(ctx.classifier, subset, fgsm, opts);

    const std::vector<std::size_t> dims = {1, 2, 4, 6, 9, 14, 20, 28};
    SweepCurve curve = sweep_dimension(ctx.classifier, adv, DefenseMethod::tucker, dims, opts);

    std::size_t best = 0;
    for (std::size_t i = 1; i < curve.accuracy.size(); ++i)
        if (curve.accuracy[i] > curve.accuracy[best]) best = i;
    const bool interior = best > 0 && best + 1 < curve.accuracy.size();

    double worst_time_drop = 0.0;  // fractional decrease between neighbours
    for (std::size_t i = 1; i < curve.mean_seconds.size(); ++i) {
        const double drop = 1.0 - curve.mean_seconds[i] / curve.mean_seconds[i - 1];
        worst_time_drop = std::max(worst_time_drop, drop);
    }

    line(interior && worst_time_drop <= 0.20, 6,
         "ablation curve over dims 1..28 on attacked images: peak accuracy %.3f at dim %zu "
         "(interior: %s), worst neighbour time drop %.0f%% (<= 20%%)",
         curve.accuracy[best], curve.dims[best], interior ? "yes" : "no",
         worst_time_drop * 100.0);
}

void check_7() {
    std::vector<NamedDefense> methods;
    for (const DefenseMethod m : {DefenseMethod::cp, DefenseMethod::tucker, DefenseMethod::cp_ae,
                                  DefenseMethod::tucker_ae}) {
        NamedDefense d{defense_name(m), {}};
        d.cfg.method = m;
        methods.push_back(d);
    }
    Network ae = make_autoencoder(3);
    init_params(ae, 77);
    for (NamedDefense& d : methods)
        if (defense_uses_autoencoder(d.cfg.method)) d.cfg.autoencoder = &ae;

    note("  [7] timing purification at 224x224x3");
    const std::vector<TimingRow> rows = time_preprocessing(methods, {{224, 224, 3}}, 10);
    std::map<std::string, double> mean;
    for (const TimingRow& r : rows) mean[r.method] = r.mean_seconds;

    const double speedup = mean["cp"] / mean["tucker"];
    const bool ok = speedup >= 2.0 && mean["cp_ae"] > mean["cp"] &&
                    mean["tucker_ae"] > mean["tucker"];
    line(ok, 7,
         "purification timing at 224x224x3: cp %.3fs, tucker %.3fs (cp/tucker %.1fx, >= 2x); "
         "ae variants slower than their bases (cp_ae %.3fs, tucker_ae %.3fs)",
         mean["cp"], mean["tucker"], speedup, mean["cp_ae"], mean["tucker_ae"]);
}

void check_8(const TrainedContext& ctx, const OperatingPoint& op) {
    DefenseConfig cfg;
    cfg.method = DefenseMethod::cp;
    cfg.dims = {op.cp_rank};
    // No decomposition seed: every purification draws a fresh factor init.
    const Tensor& probe = ctx.test.images[0];
    const Tensor a = purify(probe, cfg);
    const Tensor b = purify(probe, cfg);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        diff = std::max(diff, std::abs(a.data[i] - b.data[i]));

    const std::size_t images = 100, runs = 10;
    double agreement = 0.0;
    for (std::size_t i = 0; i < images; ++i) {
        std::map<std::size_t, std::size_t> votes;
        for (std::size_t r = 0; r < runs; ++r)
            ++votes[predict(ctx.classifier, purify(ctx.test.images[i], cfg))];
        std::size_t top = 0;
        for (const auto& [label, count] : votes) top = std::max(top, count);
        agreement += static_cast<double>(top) / runs;
    }
    agreement /= images;

    line(diff > 0.0 && agreement >= 0.95, 8,
         "unseeded purification: two runs differ by %.2e (> 0); modal-label agreement over "
         "%zu images x %zu runs %.3f (>= 0.95)",
         diff, images, runs, agreement);
}

}  // namespace

int main(int argc, char** argv) {
    // Optional arguments select a subset of checks, e.g. `acceptance_checks 1 5`.
    bool wanted[9];
    for (int i = 1; i <= 8; ++i) wanted[i] = argc < 2;
    for (int i = 1; i < argc; ++i) {
        const int k = std::atoi(argv[i]);
        if (k < 1 || k > 8) {
            std::fprintf(stderr, "usage: %s [check numbers 1..8]\n", argv[0]);
            return 2;
        }
        wanted[k] = true;
    }
    int selected = 0;
    for (int i = 1; i <= 8; ++i) selected += wanted[i];

    const double t0 = now();
    if (wanted[1]) check_1();
    if (wanted[2]) check_2();
    if (wanted[3]) check_3();

    OperatingPoint op;
    if (wanted[4] || wanted[6] || wanted[8]) {
        TrainedContext ctx = run_defense_matrix(op);
        if (wanted[4]) check_4(ctx);
        if (wanted[5]) check_5();
        if (wanted[6]) check_6(ctx, op);
        if (wanted[7]) check_7();
        if (wanted[8]) check_8(ctx, op);
    } else {
        if (wanted[5]) check_5();
        if (wanted[7]) check_7();
    }

    std::printf("%d of %d checks passed in %.0fs\n", selected - g_failures, selected, now() - t0);
    return g_failures == 0 ? 0 : 1;
}
