#include "tensorshield/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ts {

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// d loss / d input for softmax cross-entropy at label y.
Tensor loss_input_grad(const Network& net, const Tensor& x, std::size_t y) {
    ForwardTrace trace = forward_trace(net, x);
    const Tensor& logits = trace.activations.back();
    if (y >= logits.numel()) throw std::invalid_argument("attack: label out of range");
    const double zmax = *std::max_element(logits.data.begin(), logits.data.end());
    double sum = 0.0;
    for (double z : logits.data) sum += std::exp(z - zmax);
    Tensor cot(logits.shape);
    for (std::size_t i = 0; i < logits.numel(); ++i)
        cot.data[i] = std::exp(logits.data[i] - zmax) / sum - (i == y ? 1.0 : 0.0);
    return vjp_input(net, trace, cot);
}

void set_norms(AdvResult& res, const Tensor& original) {
    res.linf = max_abs_diff(res.image, original);
    res.l2 = l2_diff(res.image, original);
}

std::size_t argmax(const std::vector<double>& v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

AttackKind attack_kind_from_name(const std::string& name) {
    if (name == "none" || name == "clean") return AttackKind::none;
    if (name == "fgsm") return AttackKind::fgsm;
    if (name == "fgsm-grid" || name == "fgsm_grid") return AttackKind::fgsm_grid;
    if (name == "bim") return AttackKind::bim;
    if (name == "deepfool") return AttackKind::deepfool;
    if (name == "cw") return AttackKind::cw;
    throw std::invalid_argument("unknown attack: " + name);
}

std::string attack_name(AttackKind kind) {
    switch (kind) {
        case AttackKind::none: return "clean";
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::fgsm_grid: return "fgsm-grid";
        case AttackKind::bim: return "bim";
        case AttackKind::deepfool: return "deepfool";
        case AttackKind::cw: return "cw";
    }
    return "?";
}

AttackConfig default_attack_config(AttackKind kind) {
    AttackConfig cfg;
    switch (kind) {
        case AttackKind::deepfool:
        case AttackKind::cw:
            cfg.iterations = 50;
            break;
        default:
            cfg.iterations = 5;
            break;
    }
    return cfg;
}

AdvResult fgsm(const Network& net, const Tensor& x, std::size_t y, double eps,
               bool strict_sign) {
    if (eps < 0.0) throw std::invalid_argument("fgsm: eps must be >= 0");
    Tensor grad = loss_input_grad(net, x, y);
    AdvResult res;
    res.image = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double s = strict_sign ? std::abs(sign_of(grad.data[i])) : sign_of(grad.data[i]);
        res.image.data[i] = std::clamp(x.data[i] + eps * s, 0.0, 1.0);
    }
    res.queries = 1;
    res.epsilon_used = eps;
    res.success = predict(net, res.image) != y;
    set_norms(res, x);
    return res;
}

AdvResult fgsm_min_eps(const Network& net, const Tensor& x, std::size_t y, std::size_t grid,
                       bool strict_sign) {
    if (grid < 2) throw std::invalid_argument("fgsm_min_eps: grid must be >= 2");
    AdvResult res;
    res.image = x;
    res.epsilon_used = 0.0;
    if (predict(net, x) != y) {  // epsilon 0 already flips
        res.success = true;
        set_norms(res, x);
        return res;
    }
    Tensor grad = loss_input_grad(net, x, y);
    res.queries = 1;
    Tensor dir(x.shape);
    for (std::size_t i = 0; i < x.numel(); ++i)
        dir.data[i] = strict_sign ? std::abs(sign_of(grad.data[i])) : sign_of(grad.data[i]);
    for (std::size_t g = 1; g < grid; ++g) {
        const double eps = static_cast<double>(g) / static_cast<double>(grid - 1);
        Tensor img = x;
        for (std::size_t i = 0; i < x.numel(); ++i)
            img.data[i] = std::clamp(x.data[i] + eps * dir.data[i], 0.0, 1.0);
        const bool flipped = predict(net, img) != y;
        res.image = std::move(img);
        res.epsilon_used = eps;
        if (flipped) {
            res.success = true;
            break;
        }
    }
    set_norms(res, x);
    return res;
}

AdvResult bim(const Network& net, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    if (cfg.iterations < 1) throw std::invalid_argument("bim: iterations must be >= 1");
    AdvResult res;
    Tensor cur = x;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        Tensor grad = loss_input_grad(net, cur, y);
        res.queries += 1;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double s =
                cfg.strict_sign ? std::abs(sign_of(grad.data[i])) : sign_of(grad.data[i]);
            double v = cur.data[i] + cfg.step_size * s;
            v = std::clamp(v, x.data[i] - cfg.epsilon, x.data[i] + cfg.epsilon);
            cur.data[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    res.image = std::move(cur);
    res.epsilon_used = cfg.epsilon;
    res.success = predict(net, res.image) != y;
    set_norms(res, x);
    return res;
}

AdvResult deepfool(const Network& net, const Tensor& x, const AttackConfig& cfg,
                   std::vector<DeepFoolState>* trace_out) {
    AdvResult res;
    ForwardTrace trace = forward_trace(net, x);
    const std::size_t classes = trace.activations.back().numel();
    if (classes < 2) throw std::invalid_argument("deepfool: need >= 2 classes");
    const std::size_t k0 = argmax(trace.activations.back().data);

    Tensor cur = x;
    for (std::size_t step = 0; step < cfg.iterations; ++step) {
        if (step > 0) trace = forward_trace(net, cur);
        const std::vector<double>& logits = trace.activations.back().data;
        if (step > 0 && argmax(logits) != k0) break;

        std::vector<Tensor> grads;
        grads.reserve(classes);
        for (std::size_t c = 0; c < classes; ++c) {
            Tensor cot(trace.activations.back().shape);
            cot.data[c] = 1.0;
            grads.push_back(vjp_input(net, trace, cot));
            res.queries += 1;
        }

        double best_d = std::numeric_limits<double>::infinity();
        std::size_t best_l = k0;
        double best_fdiff = 0.0, best_wn = 0.0;
        for (std::size_t l = 0; l < classes; ++l) {
            if (l == k0) continue;
            double wn2 = 0.0;
            for (std::size_t i = 0; i < cur.numel(); ++i) {
                const double w = grads[l].data[i] - grads[k0].data[i];
                wn2 += w * w;
            }
            const double wn = std::sqrt(wn2);
            if (wn < 1e-12) continue;
            const double d = std::abs(logits[l] - logits[k0]) / wn;
            if (d < best_d) {
                best_d = d;
                best_l = l;
                best_fdiff = std::abs(logits[l] - logits[k0]);
                best_wn = wn;
            }
        }
        if (best_l == k0) {
            res.failure_reason = "degenerate-gradient";
            break;
        }
        const double scale = (1.0 + cfg.overshoot) * best_fdiff / (best_wn * best_wn);
        for (std::size_t i = 0; i < cur.numel(); ++i)
            cur.data[i] += scale * (grads[best_l].data[i] - grads[k0].data[i]);
        if (trace_out)
            trace_out->push_back(DeepFoolState{cur, step, best_d, best_l});
    }
    res.image = clamp(cur, 0.0, 1.0);
    res.success = predict(net, res.image) != k0;
    set_norms(res, x);
    return res;
}

AdvResult cw_l2(const Network& net, const Tensor& x, std::size_t y, const AttackConfig& cfg) {
    AdvResult res;
    res.image = x;
    if (predict(net, x) != y) {  // zero perturbation already optimal
        res.success = true;
        set_norms(res, x);
        return res;
    }

    // tanh parameterization: img = (tanh(v) + 1)/2 stays strictly inside
    // (0,1); the guard keeps atanh finite at the endpoints.
    constexpr double guard = 1e-6;
    const std::size_t n = x.numel();
    std::vector<double> v0(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double xw = x.data[i] * (1.0 - 2.0 * guard) + guard;
        v0[i] = std::atanh(2.0 * xw - 1.0);
    }

    double c = cfg.cw_constant;
    double best_l2 = std::numeric_limits<double>::infinity();
    Tensor best_img;
    double best_fail_margin = std::numeric_limits<double>::infinity();
    Tensor best_fail_img = x;
    constexpr double lr = 0.1, b1 = 0.9, b2 = 0.999, aeps = 1e-8;

    for (std::size_t round = 0; round < std::max<std::size_t>(1, cfg.cw_binary_search_steps);
         ++round) {
        std::vector<double> v = v0, m(n, 0.0), s(n, 0.0);
        bool round_success = false;
        for (std::size_t it = 1; it <= cfg.iterations; ++it) {
            Tensor img(x.shape);
            for (std::size_t i = 0; i < n; ++i) img.data[i] = 0.5 * (std::tanh(v[i]) + 1.0);
            ForwardTrace trace = forward_trace(net, img);
            const std::vector<double>& logits = trace.activations.back().data;
            if (y >= logits.size()) throw std::invalid_argument("cw_l2: label out of range");
            std::size_t imax = y == 0 ? 1 : 0;
            for (std::size_t i = 0; i < logits.size(); ++i)
                if (i != y && logits[i] > logits[imax]) imax = i;
            const double margin = logits[y] - logits[imax];

            if (argmax(logits) != y) {
                round_success = true;
                const double l2 = l2_diff(img, x);
                if (l2 < best_l2) {
                    best_l2 = l2;
                    best_img = img;
                }
            } else if (margin < best_fail_margin) {
                best_fail_margin = margin;
                best_fail_img = img;
            }

            Tensor dimg(x.shape);
            for (std::size_t i = 0; i < n; ++i)
                dimg.data[i] = 2.0 * (img.data[i] - x.data[i]);
            if (margin > 0.0) {
                Tensor cot(trace.activations.back().shape);
                cot.data[y] = 1.0;
                cot.data[imax] = -1.0;
                Tensor gin = vjp_input(net, trace, cot);
                res.queries += 1;
                for (std::size_t i = 0; i < n; ++i) dimg.data[i] += c * gin.data[i];
            }
            const double t = static_cast<double>(it);
            const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
            for (std::size_t i = 0; i < n; ++i) {
                const double g = dimg.data[i] * 2.0 * img.data[i] * (1.0 - img.data[i]);
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                s[i] = b2 * s[i] + (1.0 - b2) * g * g;
                v[i] -= lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + aeps);
            }
        }
        c = round_success ? c * 0.5 : c * 2.0;
    }

    if (best_img.numel() > 0) {
        res.image = std::move(best_img);
        res.success = true;
    } else {
        res.image = std::move(best_fail_img);
        res.success = false;
        res.failure_reason = "no-adversarial-found";
    }
    set_norms(res, x);
    return res;
}

AdvResult run_attack(AttackKind kind, const Network& net, const Tensor& x, std::size_t y,
                     const AttackConfig& cfg) {
    switch (kind) {
        case AttackKind::none: {
            AdvResult res;
            res.image = x;
            res.success = predict(net, x) != y;
            set_norms(res, x);
            return res;
        }
        case AttackKind::fgsm:
            return fgsm(net, x, y, cfg.epsilon, cfg.strict_sign);
        case AttackKind::fgsm_grid:
            return fgsm_min_eps(net, x, y, cfg.epsilon_grid, cfg.strict_sign);
        case AttackKind::bim:
            return bim(net, x, y, cfg);
        case AttackKind::deepfool:
            return deepfool(net, x, cfg);
        case AttackKind::cw:
            return cw_l2(net, x, y, cfg);
    }
    throw std::invalid_argument("run_attack: unknown attack kind");
}

}  // namespace ts
