#pragma once

#include <chrono>
#include <random>

#include "gace/encoder.hpp"

namespace gace {

struct TrainConfig {
    std::size_t epochs = 500;
    double lr = 1e-2;
    std::string optimizer = "adamw";  // or "gd"
    double kl_weight = 1.0;
    uint64_t seed = 0;
    double eps = 1e-8;  // smoothing for the reconstruction rows
    std::size_t hidden_dim = 64;
    std::size_t embed_dim = 15;
    double negative_slope = 0.2;
    double weight_decay = 0.0;
    bool flip_prior_sign = false;  // subtract the prior term instead of adding it
};

inline void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.lr > 0.0)) throw Error("train config: lr must be positive");
    if (!(cfg.eps > 0.0)) throw Error("train config: eps must be positive");
    if (cfg.kl_weight < 0.0) throw Error("train config: kl-weight must be non-negative");
    if (cfg.optimizer != "gd" && cfg.optimizer != "adamw")
        throw Error("train config: optimizer must be 'gd' or 'adamw', got '" + cfg.optimizer + "'");
    if (cfg.hidden_dim == 0 || cfg.embed_dim == 0)
        throw Error("train config: dimensions must be >= 1");
}

struct EpochStats {
    std::size_t epoch = 0;
    double total = 0.0;
    double recon = 0.0;
    double prior = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> history;
    EncoderParams params;
    double wall_seconds = 0.0;
};

// A_hat = ReLU(Z Z^T): symmetric, non-negative.
inline Matrix decode(const Matrix& z) {
    Matrix out(z.rows, z.rows);
    for (std::size_t i = 0; i < z.rows; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = std::max(0.0, dot(z.row_ptr(i), z.row_ptr(j), z.cols));
            out.at(i, j) = v;
            out.at(j, i) = v;
        }
    return out;
}

// KL between one smoothed-and-normalized row pair restricted to a shared
// member set: sum_e q_e (log q_e - log t_e) with q from pred, t from target.
inline double row_kl(const std::vector<double>& pred_raw, const std::vector<double>& target_raw,
                     double eps) {
    if (pred_raw.size() != target_raw.size() || pred_raw.empty())
        throw Error("row_kl: rows must be non-empty and equally sized");
    if (!(eps > 0.0)) throw Error("row_kl: eps must be positive");
    double ps = 0.0, ts = 0.0;
    for (std::size_t e = 0; e < pred_raw.size(); ++e) {
        ps += pred_raw[e] + eps;
        ts += target_raw[e] + eps;
    }
    double kl = 0.0;
    for (std::size_t e = 0; e < pred_raw.size(); ++e) {
        const double q = (pred_raw[e] + eps) / ps;
        const double t = (target_raw[e] + eps) / ts;
        kl += q * (std::log(q) - std::log(t));
    }
    return kl;
}

// L_r over all nodes. Row i's member set is {j : a(i,j) > 0} u {i} with the
// self target weight fixed at kSelfWeight; a_hat supplies predictions at the
// same positions.
inline double recon_loss(const Matrix& a_hat, const Matrix& a, double eps) {
    if (a_hat.rows != a.rows || a_hat.cols != a.cols || a.rows != a.cols)
        throw Error("recon_loss: matrices must be square and equally sized");
    double total = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        std::vector<double> pred, target;
        for (std::size_t j = 0; j < a.cols; ++j) {
            if (j == i) {
                pred.push_back(a_hat.at(i, j));
                target.push_back(kSelfWeight);
            } else if (a.at(i, j) > 0.0) {
                pred.push_back(a_hat.at(i, j));
                target.push_back(a.at(i, j));
            }
        }
        total += row_kl(pred, target, eps);
    }
    return total;
}

// L_n = sum over nodes and dims of (mu^2 + sigma^2 - 1 - 2 log sigma) / 2.
// Each summand is clamped at zero: it is non-negative in exact arithmetic
// and the clamp keeps rounding from ever producing a negative total.
inline double prior_kl(const Matrix& mu, const Matrix& log_sigma) {
    if (mu.rows != log_sigma.rows || mu.cols != log_sigma.cols)
        throw Error("prior_kl: mu and log_sigma shapes differ");
    double total = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double m = mu.data[i], ls = log_sigma.data[i];
        total += std::max(0.0, m * m + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
    }
    return 0.5 * total;
}

// Differentiable reconstruction loss over the plan's augmented entries. The
// decoded value is only needed at those positions, which keeps the cost at
// O(E * D) instead of materializing the n x n reconstruction.
inline TensorPtr recon_loss_t(Tape& tape, const AttentionPlan& plan, const TensorPtr& z,
                              double eps) {
    const std::size_t dim = z->cols();
    auto zi = ops::gather_rows(tape, z, plan.row);
    auto zj = ops::gather_rows(tape, z, plan.col);
    auto ones = tensor(dim, 1, std::vector<double>(dim, 1.0));
    auto raw = ops::relu(tape, ops::matmul(tape, ops::elementwise_mul(tape, zi, zj), ones));
    auto smoothed = ops::add_scalar(tape, raw, eps);
    auto seg_sums = ops::scatter_add_rows(tape, smoothed, plan.row, plan.n);
    auto q = ops::div(tape, smoothed, ops::gather_rows(tape, seg_sums, plan.row));

    std::vector<double> log_t(plan.target_weight.size());
    for (std::size_t i = 0; i < plan.n; ++i) {
        double sum = 0.0;
        for (std::size_t e = plan.offsets[i]; e < plan.offsets[i + 1]; ++e)
            sum += plan.target_weight[e] + eps;
        for (std::size_t e = plan.offsets[i]; e < plan.offsets[i + 1]; ++e)
            log_t[e] = std::log((plan.target_weight[e] + eps) / sum);
    }
    auto diff = ops::sub(tape, ops::log(tape, q), tensor(log_t.size(), 1, log_t));
    return ops::reduce_sum(tape, ops::elementwise_mul(tape, q, diff));
}

inline TensorPtr prior_kl_t(Tape& tape, const TensorPtr& mu, const TensorPtr& log_sigma) {
    auto mu2 = ops::elementwise_mul(tape, mu, mu);
    auto sig2 = ops::exp(tape, ops::scale(tape, log_sigma, 2.0));
    auto term = ops::sub(tape, ops::add_scalar(tape, ops::add(tape, mu2, sig2), -1.0),
                         ops::scale(tape, log_sigma, 2.0));
    return ops::scale(tape, ops::reduce_sum(tape, ops::relu(tape, term)), 0.5);
}

struct LossParts {
    TensorPtr total, recon, prior;
};

// Full objective with caller-supplied reparameterization noise (n x D);
// freezing the noise makes the loss a deterministic function of the params.
inline LossParts total_loss_t(Tape& tape, const AttentionPlan& plan, const TensorPtr& x,
                              const EncoderParams& p, const Matrix& noise,
                              const TrainConfig& cfg) {
    auto vars = encode_t(tape, plan, x, p);
    if (noise.rows != vars.mu->rows() || noise.cols != vars.mu->cols())
        throw Error("total_loss: noise shape does not match the latent state");
    auto z = ops::add(tape, vars.mu,
                      ops::elementwise_mul(tape, ops::exp(tape, vars.log_sigma), from_matrix(noise)));
    LossParts parts;
    parts.recon = recon_loss_t(tape, plan, z, cfg.eps);
    parts.prior = prior_kl_t(tape, vars.mu, vars.log_sigma);
    const double lambda = cfg.flip_prior_sign ? -cfg.kl_weight : cfg.kl_weight;
    parts.total = ops::add(tape, parts.recon, ops::scale(tape, parts.prior, lambda));
    return parts;
}

inline Matrix draw_noise(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix noise(rows, cols);
    for (auto& v : noise.data) v = gauss(rng);
    return noise;
}

inline LossParts total_loss(Tape& tape, const WeightedGraph& g, const EncoderParams& p,
                            const TrainConfig& cfg, std::mt19937_64& rng) {
    const auto plan = build_plan(g);
    const auto noise = draw_noise(g.node_count(), p.embed_dim(), rng);
    return total_loss_t(tape, plan, from_matrix(g.features.X), p, noise, cfg);
}

inline TrainReport train(const WeightedGraph& g, const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (g.node_count() < 2) throw Error("train: graph needs at least 2 nodes");
    const auto t0 = std::chrono::steady_clock::now();

    const auto plan = build_plan(g);
    const auto x = from_matrix(g.features.X);
    TrainReport report;
    report.params = init_encoder_params(g.features.X.cols, cfg.hidden_dim, cfg.embed_dim,
                                        cfg.negative_slope, mix_seed(cfg.seed, 1));
    report.params.set_requires_grad(true);
    const auto trainable = report.params.trainable();
    std::vector<AdamWState> states(trainable.size());
    std::mt19937_64 noise_rng(mix_seed(cfg.seed, 2));

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto noise = draw_noise(g.node_count(), cfg.embed_dim, noise_rng);
        Tape tape;
        auto parts = total_loss_t(tape, plan, x, report.params, noise, cfg);
        EpochStats stats{epoch, parts.total->data[0], parts.recon->data[0], parts.prior->data[0]};
        if (!std::isfinite(stats.total))
            throw Error("train: loss diverged at epoch " + std::to_string(epoch));
        report.history.push_back(stats);

        zero_grad(trainable);
        backward(parts.total, tape);
        for (std::size_t t = 0; t < trainable.size(); ++t) {
            auto& p = *trainable[t];
            p.ensure_grad();
            if (cfg.optimizer == "gd")
                gd_step(p.data, p.grad, cfg.lr);
            else
                adamw_step(p.data, p.grad, states[t], cfg.lr, cfg.weight_decay);
        }
    }

    report.params.set_requires_grad(false);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

inline std::string serialize_history(const std::vector<EpochStats>& history) {
    std::string out = "epoch,total,recon,prior\n";
    for (const auto& s : history) {
        out += std::to_string(s.epoch);
        out += ',';
        out += fmt_g17(s.total);
        out += ',';
        out += fmt_g17(s.recon);
        out += ',';
        out += fmt_g17(s.prior);
        out += '\n';
    }
    return out;
}

inline void save_history(const std::string& path, const std::vector<EpochStats>& history) {
    write_atomic(path, serialize_history(history));
}

}  // namespace gace
