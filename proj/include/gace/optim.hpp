#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gace/tensor.hpp"

namespace gace {

// Plain full-batch gradient descent: p -= lr * g.
inline void gd_step(std::span<double> params, std::span<const double> grads, double lr) {
    if (params.size() != grads.size()) throw Error("gd_step: parameter/gradient size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

struct AdamWState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t t = 0;
    std::vector<double> m, v;
};

// Decoupled weight decay, bias-corrected moments.
inline void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                       double lr, double weight_decay) {
    if (params.size() != grads.size()) throw Error("adamw_step: parameter/gradient size mismatch");
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.t = 0;
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) + weight_decay * params[i]);
    }
}

using LossFn = std::function<TensorPtr(Tape&, const std::vector<TensorPtr>&)>;

// Central-difference check of the tape gradient. Returns the max relative
// error over every coordinate of every parameter:
//   |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)
// The caller is responsible for evaluating at a smooth point (away from
// relu/clamp kinks).
inline double grad_check(const LossFn& f, const std::vector<TensorPtr>& params, double eps = 1e-4) {
    for (const auto& p : params) {
        p->requires_grad = true;
        p->zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        TensorPtr loss = f(tape, params);
        tape.backward(loss);
        for (const auto& p : params) {
            p->ensure_grad();
            analytic.push_back(p->grad);
        }
    }
    for (const auto& p : params) p->requires_grad = false;

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + eps;
            Tape t_plus;
            const double f_plus = f(t_plus, params)->data[0];
            p->data[i] = saved - eps;
            Tape t_minus;
            const double f_minus = f(t_minus, params)->data[0];
            p->data[i] = saved;
            const double g_fd = (f_plus - f_minus) / (2.0 * eps);
            const double g_ad = analytic[pi][i];
            const double rel = std::abs(g_ad - g_fd) / std::max(1e-8, std::abs(g_ad) + std::abs(g_fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    for (const auto& p : params) p->requires_grad = true;
    return max_rel;
}

// ---- named-tensor checkpoint file ----
// Per tensor: a header line `name dim0 dim1 ...` followed by one line of
// row-major values at 17 significant digits. Round-trips exactly.

inline void save_tensors(const std::string& path,
                         const std::vector<std::pair<std::string, TensorPtr>>& named) {
    std::string out;
    for (const auto& [name, t] : named) {
        out += name;
        for (std::size_t d : t->shape) out += ' ' + std::to_string(d);
        out += '\n';
        for (std::size_t i = 0; i < t->size(); ++i) {
            if (i) out += ' ';
            out += fmt_g17(t->data[i]);
        }
        out += '\n';
    }
    write_atomic(path, out);
}

inline std::vector<std::pair<std::string, TensorPtr>> load_tensors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    std::vector<std::pair<std::string, TensorPtr>> out;
    std::string header;
    while (std::getline(in, header)) {
        if (header.empty()) continue;
        auto fields = split(header, ' ');
        if (fields.size() < 2) throw Error("checkpoint '" + path + "': malformed header '" + header + "'");
        std::vector<std::size_t> shape;
        std::size_t total = 1;
        for (std::size_t i = 1; i < fields.size(); ++i) {
            const auto d = parse_count_field(fields[i], "checkpoint '" + path + "'");
            shape.push_back(static_cast<std::size_t>(d));
            total *= static_cast<std::size_t>(d);
        }
        std::string values;
        if (!std::getline(in, values))
            throw Error("checkpoint '" + path + "': missing values for tensor '" + fields[0] + "'");
        auto tokens = split(values, ' ');
        if (tokens.size() != total)
            throw Error("checkpoint '" + path + "': tensor '" + fields[0] + "' expects " +
                        std::to_string(total) + " values, got " + std::to_string(tokens.size()));
        std::vector<double> data(total);
        for (std::size_t i = 0; i < total; ++i)
            data[i] = parse_double_field(tokens[i], "checkpoint '" + path + "'");
        out.emplace_back(fields[0], std::make_shared<Tensor>(shape, std::move(data)));
    }
    return out;
}

}  // namespace gace
