#pragma once

#include <optional>
#include <random>

#include "gace/graph.hpp"
#include "gace/ops.hpp"
#include "gace/optim.hpp"

namespace gace {

// Raw weight assigned to the self entry when a node's neighbor row is
// softmax-normalized; the adjacency itself never stores self edges.
constexpr double kSelfWeight = 1.0;
constexpr double kLogSigmaMin = -10.0;
constexpr double kLogSigmaMax = 10.0;

// Trainable state of the encoder: one shared hidden attention layer and two
// output heads producing mu and log sigma.
struct EncoderParams {
    TensorPtr w_h;    // hidden x F
    TensorPtr a_h;    // 2*hidden x 1
    TensorPtr w_mu;   // dim x hidden
    TensorPtr a_mu;   // 2*dim x 1
    TensorPtr w_sig;  // dim x hidden
    TensorPtr a_sig;  // 2*dim x 1
    double negative_slope = 0.2;

    std::size_t feature_dim() const { return w_h->cols(); }
    std::size_t hidden_dim() const { return w_h->rows(); }
    std::size_t embed_dim() const { return w_mu->rows(); }

    std::vector<TensorPtr> trainable() const { return {w_h, a_h, w_mu, a_mu, w_sig, a_sig}; }

    void set_requires_grad(bool rg) const {
        for (const auto& t : trainable()) t->requires_grad = rg;
    }
};

// Weight matrices uniform in +-sqrt(6/(fan_in+fan_out)), attention vectors
// zero so that epoch-0 attention equals softmax(theta).
inline EncoderParams init_encoder_params(std::size_t feature_dim, std::size_t hidden_dim,
                                         std::size_t embed_dim, double negative_slope, uint64_t seed) {
    if (feature_dim == 0 || hidden_dim == 0 || embed_dim == 0)
        throw Error("init_encoder_params: dimensions must be >= 1");
    std::mt19937_64 rng(mix_seed(seed, 0x6ace));
    auto xavier = [&rng](std::size_t rows, std::size_t cols) {
        const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
        std::uniform_real_distribution<double> u(-bound, bound);
        std::vector<double> data(rows * cols);
        for (auto& x : data) x = u(rng);
        return tensor(rows, cols, std::move(data));
    };
    EncoderParams p;
    p.w_h = xavier(hidden_dim, feature_dim);
    p.a_h = zeros(2 * hidden_dim, 1);
    p.w_mu = xavier(embed_dim, hidden_dim);
    p.a_mu = zeros(2 * embed_dim, 1);
    p.w_sig = xavier(embed_dim, hidden_dim);
    p.a_sig = zeros(2 * embed_dim, 1);
    p.negative_slope = negative_slope;
    return p;
}

// Flattened attention structure over the augmented neighbor sets
// N(i) u {i}. Entries are sorted by (row, col); each row's segment is
// non-empty because it always contains the self entry.
struct AttentionPlan {
    std::size_t n = 0;
    std::vector<std::size_t> row, col;
    std::vector<double> theta;          // softmax-normalized edge weighting per entry
    std::vector<double> target_weight;  // raw weight per entry (self = kSelfWeight)
    std::vector<std::size_t> offsets;   // n + 1 segment boundaries
};

inline AttentionPlan build_plan(const WeightedGraph& g) {
    AttentionPlan plan;
    plan.n = g.node_count();
    plan.offsets.push_back(0);
    for (std::size_t i = 0; i < plan.n; ++i) {
        const std::size_t begin = plan.row.size();
        bool self_placed = false;
        for (const auto& [j, w] : g.neighbors(i)) {
            if (w <= 0.0) continue;  // absent pair is equivalent to weight 0
            if (!self_placed && i < j) {
                plan.row.push_back(i);
                plan.col.push_back(i);
                plan.target_weight.push_back(kSelfWeight);
                self_placed = true;
            }
            plan.row.push_back(i);
            plan.col.push_back(j);
            plan.target_weight.push_back(w);
        }
        if (!self_placed) {
            plan.row.push_back(i);
            plan.col.push_back(i);
            plan.target_weight.push_back(kSelfWeight);
        }
        // Stabilized softmax of the raw weights over this segment.
        const std::size_t end = plan.row.size();
        double m = plan.target_weight[begin];
        for (std::size_t e = begin + 1; e < end; ++e) m = std::max(m, plan.target_weight[e]);
        double denom = 0.0;
        for (std::size_t e = begin; e < end; ++e) denom += std::exp(plan.target_weight[e] - m);
        for (std::size_t e = begin; e < end; ++e)
            plan.theta.push_back(std::exp(plan.target_weight[e] - m) / denom);
        plan.offsets.push_back(end);
    }
    return plan;
}

// Theta row of node i over N(i) u {i}, ordered by node index.
inline std::vector<double> theta_row(const WeightedGraph& g, std::size_t i) {
    std::vector<double> raw;
    bool self_placed = false;
    for (const auto& [j, w] : g.neighbors(i)) {
        if (w <= 0.0) continue;
        if (!self_placed && i < j) {
            raw.push_back(kSelfWeight);
            self_placed = true;
        }
        raw.push_back(w);
    }
    if (!self_placed) raw.push_back(kSelfWeight);
    double m = raw[0];
    for (double x : raw) m = std::max(m, x);
    double denom = 0.0;
    for (double x : raw) denom += std::exp(x - m);
    std::vector<double> out;
    out.reserve(raw.size());
    for (double x : raw) out.push_back(std::exp(x - m) / denom);
    return out;
}

// One shared-weight attention layer over the plan:
//   h_i = sum_{j in N(i) u {i}} gamma_ij W x_j
//   gamma = segment softmax of LeakyReLU(a^T [W x_i || W x_j]) + theta_ij.
inline TensorPtr gat_layer_t(Tape& tape, const AttentionPlan& plan, const TensorPtr& x,
                             const TensorPtr& w, const TensorPtr& a, double slope) {
    if (x->cols() != w->cols())
        throw Error("gat_layer: feature width " + std::to_string(x->cols()) +
                    " does not match weight matrix (" + std::to_string(w->cols()) + ")");
    const std::size_t fp = w->rows();
    if (a->size() != 2 * fp) throw Error("gat_layer: attention vector must have length 2*hidden");
    auto wx = ops::matmul(tape, x, ops::transpose(tape, w));  // n x F'
    auto u = ops::matmul(tape, wx, ops::slice_rows(tape, a, 0, fp));
    auto v = ops::matmul(tape, wx, ops::slice_rows(tape, a, fp, 2 * fp));
    auto content = ops::leaky_relu(tape, ops::add(tape, ops::gather_rows(tape, u, plan.row),
                                                  ops::gather_rows(tape, v, plan.col)),
                                   slope);
    auto logits = ops::add(tape, content, tensor(plan.theta.size(), 1, plan.theta));
    auto gamma = ops::segment_softmax(tape, logits, plan.offsets);
    auto messages = ops::row_scale(tape, ops::gather_rows(tape, wx, plan.col), gamma);
    return ops::scatter_add_rows(tape, messages, plan.row, plan.n);
}

struct EncodeVars {
    TensorPtr mu, log_sigma;
};

inline EncodeVars encode_t(Tape& tape, const AttentionPlan& plan, const TensorPtr& x,
                           const EncoderParams& p) {
    auto hidden = ops::relu(tape, gat_layer_t(tape, plan, x, p.w_h, p.a_h, p.negative_slope));
    EncodeVars out;
    out.mu = gat_layer_t(tape, plan, hidden, p.w_mu, p.a_mu, p.negative_slope);
    out.log_sigma = ops::clamp(tape, gat_layer_t(tape, plan, hidden, p.w_sig, p.a_sig, p.negative_slope),
                               kLogSigmaMin, kLogSigmaMax);
    return out;
}

// Attention weights gamma_ij of node i over N(i) u {i}, ordered by index.
inline std::vector<double> gamma(const WeightedGraph& g, std::size_t i, const Matrix& x,
                                 const Matrix& w, const std::vector<double>& a, double slope) {
    if (x.cols != w.cols) throw Error("gamma: feature width does not match weight matrix");
    const std::size_t fp = w.rows;
    if (a.size() != 2 * fp) throw Error("gamma: attention vector must have length 2*hidden");
    std::vector<std::size_t> members;
    bool self_placed = false;
    for (const auto& [j, wgt] : g.neighbors(i)) {
        if (wgt <= 0.0) continue;
        if (!self_placed && i < j) {
            members.push_back(i);
            self_placed = true;
        }
        members.push_back(j);
    }
    if (!self_placed) members.push_back(i);

    auto project = [&](std::size_t node) {
        std::vector<double> h(fp, 0.0);
        for (std::size_t r = 0; r < fp; ++r) h[r] = dot(w.row_ptr(r), x.row_ptr(node), x.cols);
        return h;
    };
    const auto wx_i = project(i);
    const std::vector<double> theta = theta_row(g, i);
    std::vector<double> logits(members.size());
    for (std::size_t e = 0; e < members.size(); ++e) {
        const auto wx_j = project(members[e]);
        double s = 0.0;
        for (std::size_t r = 0; r < fp; ++r) s += a[r] * wx_i[r] + a[fp + r] * wx_j[r];
        logits[e] = (s > 0.0 ? s : slope * s) + theta[e];
    }
    double m = logits[0];
    for (double l : logits) m = std::max(m, l);
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l - m);
    for (auto& l : logits) l = std::exp(l - m) / denom;
    return logits;
}

inline Matrix gat_layer(const WeightedGraph& g, const Matrix& x, const Matrix& w,
                        const std::vector<double>& a, double slope) {
    Tape tape;
    const auto plan = build_plan(g);
    auto out = gat_layer_t(tape, plan, from_matrix(x), from_matrix(w),
                           tensor(a.size(), 1, a), slope);
    return to_matrix(out);
}

// Per-node Gaussian posterior parameters; z is only set once sampled.
struct LatentState {
    Matrix mu;
    Matrix log_sigma;
    std::optional<Matrix> z;
};

inline LatentState encode(const WeightedGraph& g, const EncoderParams& p) {
    if (g.features.X.cols != p.feature_dim())
        throw Error("encode: graph feature width " + std::to_string(g.features.X.cols) +
                    " does not match encoder (" + std::to_string(p.feature_dim()) + ")");
    Tape tape;
    const auto plan = build_plan(g);
    const bool saved = p.w_h->requires_grad;
    p.set_requires_grad(false);
    auto vars = encode_t(tape, plan, from_matrix(g.features.X), p);
    p.set_requires_grad(saved);
    LatentState out;
    out.mu = to_matrix(vars.mu);
    out.log_sigma = to_matrix(vars.log_sigma);
    return out;
}

// z = mu + exp(log_sigma) * eps with eps ~ N(0, 1) from the seeded generator.
inline Matrix reparameterize(const LatentState& latent, uint64_t rng_seed) {
    if (latent.mu.rows != latent.log_sigma.rows || latent.mu.cols != latent.log_sigma.cols)
        throw Error("reparameterize: mu and log_sigma shapes differ");
    std::mt19937_64 rng(mix_seed(rng_seed, 0xeb5));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix z(latent.mu.rows, latent.mu.cols);
    for (std::size_t i = 0; i < z.size(); ++i)
        z.data[i] = latent.mu.data[i] + std::exp(latent.log_sigma.data[i]) * gauss(rng);
    return z;
}

// The exported embedding table is the posterior mean.
inline Matrix embed(const WeightedGraph& g, const EncoderParams& p) {
    return encode(g, p).mu;
}

inline void save_encoder(const std::string& path, const EncoderParams& p) {
    save_tensors(path, {{"w_h", p.w_h},
                        {"a_h", p.a_h},
                        {"w_mu", p.w_mu},
                        {"a_mu", p.a_mu},
                        {"w_sig", p.w_sig},
                        {"a_sig", p.a_sig},
                        {"negative_slope", scalar(p.negative_slope)}});
}

inline EncoderParams load_encoder(const std::string& path) {
    auto named = load_tensors(path);
    auto take = [&](const std::string& name) -> TensorPtr {
        for (auto& [n, t] : named)
            if (n == name) return t;
        throw Error("checkpoint '" + path + "': missing tensor '" + name + "'");
    };
    EncoderParams p;
    p.w_h = take("w_h");
    p.a_h = take("a_h");
    p.w_mu = take("w_mu");
    p.a_mu = take("a_mu");
    p.w_sig = take("w_sig");
    p.a_sig = take("a_sig");
    p.negative_slope = take("negative_slope")->data.at(0);
    if (p.a_h->size() != 2 * p.hidden_dim() || p.w_mu->cols() != p.hidden_dim() ||
        p.w_sig->cols() != p.hidden_dim() || p.a_mu->size() != 2 * p.embed_dim() ||
        p.w_sig->rows() != p.embed_dim() || p.a_sig->size() != 2 * p.embed_dim())
        throw Error("checkpoint '" + path + "': tensor shapes are inconsistent");
    return p;
}

}  // namespace gace
