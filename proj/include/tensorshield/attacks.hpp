#pragma once

#include <string>
#include <vector>

#include "tensorshield/nn.hpp"
#include "tensorshield/tensor.hpp"

namespace ts {

enum class AttackKind { none, fgsm, fgsm_grid, bim, deepfool, cw };

AttackKind attack_kind_from_name(const std::string& name);
std::string attack_name(AttackKind kind);

struct AttackConfig {
    double epsilon = 8.0 / 255.0;       // L-inf budget
    double step_size = 1.0 / 255.0;     // BIM per-step alpha
    std::size_t iterations = 5;         // BIM steps / DeepFool max / C&W steps per round
    std::size_t epsilon_grid = 100;     // FGSM search points on [0,1]
    double cw_constant = 1.0;           // objective weight c
    std::size_t cw_binary_search_steps = 5;
    double overshoot = 0.02;            // DeepFool
    // The source equations print |sign(grad)|, which collapses the
    // perturbation to +eps everywhere; the standard signed form is the
    // default and this flag restores the printed variant.
    bool strict_sign = false;
};

// Per-attack defaults: BIM 5 iterations, DeepFool and C&W 50.
AttackConfig default_attack_config(AttackKind kind);

struct AdvResult {
    Tensor image;               // in [0,1]
    bool success = false;       // predicted label != true label
    double linf = 0.0;
    double l2 = 0.0;
    std::size_t queries = 0;    // gradient/VJP evaluations
    double epsilon_used = 0.0;  // budget actually applied (fgsm family)
    std::string failure_reason; // e.g. "degenerate-gradient"
};

struct DeepFoolState {
    Tensor current;
    std::size_t step = 0;
    double last_distance = 0.0;   // d of the chosen class at this step
    std::size_t chosen_class = 0; // the class l minimizing d
};

AdvResult fgsm(const Network& net, const Tensor& x, std::size_t y, double eps,
               bool strict_sign = false);

// Smallest epsilon on the uniform grid over [0,1] that flips the label; one
// gradient evaluation serves the entire scan.
AdvResult fgsm_min_eps(const Network& net, const Tensor& x, std::size_t y, std::size_t grid,
                       bool strict_sign = false);

AdvResult bim(const Network& net, const Tensor& x, std::size_t y, const AttackConfig& cfg);

// Untargeted multiclass DeepFool; success means leaving the initial
// predicted class. Optionally records per-step states.
AdvResult deepfool(const Network& net, const Tensor& x, const AttackConfig& cfg,
                   std::vector<DeepFoolState>* trace = nullptr);

// Untargeted L2 Carlini-Wagner with tanh reparameterization and Adam;
// bisection doubles c after a failed round and halves it after a success.
AdvResult cw_l2(const Network& net, const Tensor& x, std::size_t y, const AttackConfig& cfg);

AdvResult run_attack(AttackKind kind, const Network& net, const Tensor& x, std::size_t y,
                     const AttackConfig& cfg);

}  // namespace ts
