#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "gace/baselines.hpp"
#include "gace/item_store.hpp"

namespace gace {

struct SyntheticConfig {
    std::size_t n_items = 2000;
    std::size_t n_users = 500;
    std::size_t n_pages = 12;
    std::size_t n_clusters = 4;
    std::size_t n_impressions = 60000;  // training impressions; test size scales from this
    double cold_fraction = 0.1;
    uint64_t seed = 0;
    std::size_t sem_dim = 16;
    std::size_t user_dim = 8;
    double test_fraction = 0.5;
};

inline void validate_synth_config(const SyntheticConfig& cfg) {
    if (cfg.n_items == 0 || cfg.n_users == 0 || cfg.n_pages == 0 || cfg.n_clusters == 0 ||
        cfg.n_impressions == 0)
        throw Error("synth config: counts must be >= 1");
    if (cfg.cold_fraction < 0.0 || cfg.cold_fraction >= 1.0)
        throw Error("synth config: cold-fraction must lie in [0, 1)");
    if (cfg.n_clusters > cfg.sem_dim)
        throw Error("synth config: need n_clusters <= sem_dim for distinct cluster directions");
    if (cfg.n_clusters > cfg.user_dim)
        throw Error("synth config: need n_clusters <= user_dim");
    if (!(cfg.test_fraction > 0.0))
        throw Error("synth config: test-fraction must be positive");
}

struct Impression {
    std::size_t user = 0;
    std::size_t item = 0;
    int click = 0;
    double p_true = 0.0;  // planted probability, kept for audit
};

struct SyntheticDataset {
    std::vector<AdRecord> items;
    std::vector<std::size_t> item_cluster;
    Matrix users;  // n_users x user_dim
    std::vector<std::size_t> user_cluster;
    std::vector<Impression> train_impressions;  // warm items only
    std::vector<Impression> test_impressions;   // warm and cold items
    std::vector<std::string> heldout;           // cold ad ids, absent from training
};

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Click probability structure: each page carries a base rate tier and users
// click same-cluster ads slightly more often. The tiers are balanced across
// clusters, so an item's cluster alone predicts nothing about its rate.
struct ClickModel {
    std::vector<double> page_base;  // by page index
    double match_bonus = 0.6;
    double bias = 0.3;

    double affinity(std::size_t user_cluster, std::size_t item_cluster, std::size_t page) const {
        return page_base[page] + (user_cluster == item_cluster ? match_bonus : 0.0) - bias;
    }
    // Rate marginalized over a balanced user population.
    double marginal(std::size_t page, std::size_t n_clusters) const {
        const double hit = sigmoid(page_base[page] + match_bonus - bias);
        const double miss = sigmoid(page_base[page] - bias);
        return (hit + miss * static_cast<double>(n_clusters - 1)) / static_cast<double>(n_clusters);
    }
};

inline ClickModel make_click_model(const SyntheticConfig& cfg) {
    ClickModel model;
    model.page_base.resize(cfg.n_pages);
    const std::size_t tiers = std::max<std::size_t>(1, cfg.n_pages / cfg.n_clusters);
    for (std::size_t p = 0; p < cfg.n_pages; ++p) {
        const std::size_t tier = (p / cfg.n_clusters) % tiers;
        model.page_base[p] = tiers > 1
            ? 1.1 * (2.0 * static_cast<double>(tier) / static_cast<double>(tiers - 1) - 1.0)
            : 0.0;
    }
    return model;
}

// Orthonormal rows via Gram-Schmidt over Gaussian draws.
inline Matrix make_centroids(std::size_t k, std::size_t dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix c(k, dim);
    for (std::size_t i = 0; i < k; ++i) {
        for (;;) {
            for (std::size_t d = 0; d < dim; ++d) c.at(i, d) = gauss(rng);
            for (std::size_t j = 0; j < i; ++j) {
                const double proj = dot(c.row_ptr(i), c.row_ptr(j), dim);
                for (std::size_t d = 0; d < dim; ++d) c.at(i, d) -= proj * c.at(j, d);
            }
            const double norm = std::sqrt(dot(c.row_ptr(i), c.row_ptr(i), dim));
            if (norm > 1e-6) {
                for (std::size_t d = 0; d < dim; ++d) c.at(i, d) /= norm;
                break;
            }
        }
    }
    return c;
}

}  // namespace detail

inline SyntheticDataset gen_synthetic(const SyntheticConfig& cfg) {
    validate_synth_config(cfg);
    std::mt19937_64 rng(mix_seed(cfg.seed, 0xc7e));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto model = detail::make_click_model(cfg);
    const auto centroids = detail::make_centroids(cfg.n_clusters, cfg.sem_dim, rng);
    const std::size_t tiers = std::max<std::size_t>(1, cfg.n_pages / cfg.n_clusters);

    SyntheticDataset ds;
    ds.items.resize(cfg.n_items);
    ds.item_cluster.resize(cfg.n_items);
    std::vector<std::size_t> item_page(cfg.n_items);

    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        const std::size_t c = i % cfg.n_clusters;
        ds.item_cluster[i] = c;
        // Mostly a home page of the item's cluster, sometimes any page.
        std::size_t page;
        if (unit(rng) < 0.8) {
            const std::size_t tier = static_cast<std::size_t>(unit(rng) * static_cast<double>(tiers));
            page = c + cfg.n_clusters * std::min(tier, tiers - 1);
            if (page >= cfg.n_pages) page = c % cfg.n_pages;
        } else {
            page = static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.n_pages));
            page = std::min(page, cfg.n_pages - 1);
        }
        item_page[i] = page;

        auto& r = ds.items[i];
        char id[24];
        std::snprintf(id, sizeof(id), "ad%05zu", i);
        r.ad_id = id;
        std::snprintf(id, sizeof(id), "page%02zu", page);
        r.page_id = id;
        r.semantic_vec.resize(cfg.sem_dim);
        double norm2 = 0.0;
        for (std::size_t d = 0; d < cfg.sem_dim; ++d) {
            r.semantic_vec[d] = centroids.at(c, d) + 0.25 * gauss(rng);
            norm2 += r.semantic_vec[d] * r.semantic_vec[d];
        }
        const double norm = std::sqrt(norm2);
        for (auto& v : r.semantic_vec) v /= norm;
    }

    // Cold set: random subset, repaired so every page keeps a warm ad.
    const std::size_t n_cold = static_cast<std::size_t>(cfg.cold_fraction * static_cast<double>(cfg.n_items));
    std::vector<std::size_t> order(cfg.n_items);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> cold(cfg.n_items, false);
    for (std::size_t i = 0; i < n_cold; ++i) cold[order[i]] = true;
    std::vector<std::size_t> warm_per_page(cfg.n_pages, 0);
    for (std::size_t i = 0; i < cfg.n_items; ++i)
        if (!cold[i]) ++warm_per_page[item_page[i]];
    for (std::size_t i = 0; i < cfg.n_items && cfg.n_items > n_cold; ++i)
        if (cold[i] && warm_per_page[item_page[i]] == 0) {
            cold[i] = false;
            ++warm_per_page[item_page[i]];
        }

    std::uniform_int_distribution<uint64_t> uv_draw(200, 2000);
    std::vector<std::size_t> warm_items;
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
        auto& r = ds.items[i];
        if (cold[i]) {
            r.is_new = true;
            ds.heldout.push_back(r.ad_id);
            continue;
        }
        warm_items.push_back(i);
        r.uv = uv_draw(rng);
        r.pv = static_cast<uint64_t>(static_cast<double>(r.uv) * (1.5 + 1.5 * unit(rng)));
        const double rate = model.marginal(item_page[i], cfg.n_clusters);
        r.uvctr = std::clamp(rate + 0.02 * gauss(rng), 0.0, 1.0);
        r.pvctr = std::clamp(r.uvctr * (0.7 + 0.25 * unit(rng)), 0.0, 1.0);
    }

    ds.users = Matrix(cfg.n_users, cfg.user_dim);
    ds.user_cluster.resize(cfg.n_users);
    for (std::size_t u = 0; u < cfg.n_users; ++u) {
        const std::size_t c = u % cfg.n_clusters;
        ds.user_cluster[u] = c;
        for (std::size_t d = 0; d < cfg.user_dim; ++d) ds.users.at(u, d) = 0.25 * gauss(rng);
        ds.users.at(u, c) += 1.0;
    }

    auto draw_impression = [&](const std::vector<std::size_t>& pool) {
        Impression imp;
        imp.user = static_cast<std::size_t>(unit(rng) * static_cast<double>(cfg.n_users));
        imp.user = std::min(imp.user, cfg.n_users - 1);
        std::size_t pick = static_cast<std::size_t>(unit(rng) * static_cast<double>(pool.size()));
        imp.item = pool[std::min(pick, pool.size() - 1)];
        imp.p_true = detail::sigmoid(
            model.affinity(ds.user_cluster[imp.user], ds.item_cluster[imp.item], item_page[imp.item]));
        imp.click = unit(rng) < imp.p_true ? 1 : 0;
        return imp;
    };

    std::vector<std::size_t> all_items(cfg.n_items);
    std::iota(all_items.begin(), all_items.end(), 0);
    for (std::size_t t = 0; t < cfg.n_impressions; ++t)
        ds.train_impressions.push_back(draw_impression(warm_items));
    const std::size_t n_test =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.test_fraction * static_cast<double>(cfg.n_impressions)));
    for (std::size_t t = 0; t < n_test; ++t)
        ds.test_impressions.push_back(draw_impression(all_items));
    return ds;
}

// Mean of -y log(p) - (1-y) log(1-p) with p clipped to [1e-7, 1 - 1e-7].
inline double cross_entropy(const std::vector<double>& y_hat, const std::vector<int>& y) {
    if (y_hat.size() != y.size() || y.empty())
        throw Error("cross_entropy: predictions and labels must be non-empty and equally sized");
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = std::clamp(y_hat[i], 1e-7, 1.0 - 1e-7);
        total += y[i] ? -std::log(p) : -std::log(1.0 - p);
    }
    return total / static_cast<double>(y.size());
}

// Mann-Whitney statistic via midranks: the fraction of (positive, negative)
// pairs ranked correctly, ties counting one half.
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw Error("auc: scores and labels must be non-empty and equally sized");
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += l ? 1 : 0;
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) throw Error("auc: need at least one positive and one negative label");

    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t t = i; t < j; ++t)
            if (labels[idx[t]]) rank_sum_pos += midrank;
        i = j;
    }
    const double u_stat = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u_stat / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Logistic scorer over concat(user_vec, item_embedding).
struct CtrHead {
    std::vector<double> w;
    double b = 0.0;
};

struct CtrTrainConfig {
    std::size_t epochs = 300;
    double lr = 0.5;
    uint64_t seed = 0;
};

namespace detail {

inline std::size_t table_row(const std::map<std::string, std::size_t>& index,
                             const std::string& ad_id) {
    const auto it = index.find(ad_id);
    if (it == index.end()) throw Error("missing embedding for ad '" + ad_id + "'");
    return it->second;
}

inline std::map<std::string, std::size_t> table_index(const EmbeddingTable& table) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < table.ordering.size(); ++i) index[table.ordering[i]] = i;
    return index;
}

}  // namespace detail

// Full-batch logistic regression. Features are standardized internally; the
// returned head folds the standardization back so it scores raw features.
inline CtrHead train_ctr_head(const SyntheticDataset& ds, const EmbeddingTable& table,
                              const CtrTrainConfig& cfg) {
    if (ds.train_impressions.empty()) throw Error("train_ctr_head: no training impressions");
    const auto index = detail::table_index(table);
    const std::size_t du = ds.users.cols, di = table.dim(), dim = du + di;
    const std::size_t m = ds.train_impressions.size();

    Matrix feats(m, dim);
    std::vector<int> labels(m);
    for (std::size_t r = 0; r < m; ++r) {
        const auto& imp = ds.train_impressions[r];
        const std::size_t row = detail::table_row(index, ds.items[imp.item].ad_id);
        double* f = feats.row_ptr(r);
        for (std::size_t d = 0; d < du; ++d) f[d] = ds.users.at(imp.user, d);
        for (std::size_t d = 0; d < di; ++d) f[du + d] = table.vectors.at(row, d);
        labels[r] = imp.click;
    }

    std::vector<double> mean(dim, 0.0), sd(dim, 0.0);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t d = 0; d < dim; ++d) mean[d] += feats.at(r, d);
    for (auto& v : mean) v /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t d = 0; d < dim; ++d) {
            const double c = feats.at(r, d) - mean[d];
            sd[d] += c * c;
        }
    for (auto& v : sd) {
        v = std::sqrt(v / static_cast<double>(m));
        if (v < 1e-12) v = 1.0;
    }
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t d = 0; d < dim; ++d) feats.at(r, d) = (feats.at(r, d) - mean[d]) / sd[d];

    std::vector<double> w(dim, 0.0), grad(dim);
    double b = 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double gb = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            const double err =
                detail::sigmoid(dot(w.data(), feats.row_ptr(r), dim) + b) - static_cast<double>(labels[r]);
            const double* f = feats.row_ptr(r);
            for (std::size_t d = 0; d < dim; ++d) grad[d] += err * f[d];
            gb += err;
        }
        const double inv_m = 1.0 / static_cast<double>(m);
        for (std::size_t d = 0; d < dim; ++d) w[d] -= cfg.lr * grad[d] * inv_m;
        b -= cfg.lr * gb * inv_m;
    }

    CtrHead head;
    head.w.resize(dim);
    head.b = b;
    for (std::size_t d = 0; d < dim; ++d) {
        head.w[d] = w[d] / sd[d];
        head.b -= w[d] * mean[d] / sd[d];
    }
    if (!all_finite(head.w) || !std::isfinite(head.b)) throw Error("train_ctr_head: head diverged");
    return head;
}

struct EvalResult {
    double auc = 0.0;
    double loss = 0.0;
};

// scope: "all" scores every test impression, "cold_only" only those whose
// item is in the heldout set.
inline EvalResult evaluate(const SyntheticDataset& ds, const EmbeddingTable& table,
                           const CtrHead& head, const std::string& scope) {
    if (scope != "all" && scope != "cold_only")
        throw Error("evaluate: scope must be 'all' or 'cold_only', got '" + scope + "'");
    const auto index = detail::table_index(table);
    const std::set<std::string> heldout(ds.heldout.begin(), ds.heldout.end());
    const std::size_t du = ds.users.cols, di = table.dim();
    if (head.w.size() != du + di) throw Error("evaluate: head width does not match features");

    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& imp : ds.test_impressions) {
        const std::string& ad_id = ds.items[imp.item].ad_id;
        if (scope == "cold_only" && heldout.find(ad_id) == heldout.end()) continue;
        const std::size_t row = detail::table_row(index, ad_id);
        double s = head.b;
        for (std::size_t d = 0; d < du; ++d) s += head.w[d] * ds.users.at(imp.user, d);
        for (std::size_t d = 0; d < di; ++d) s += head.w[du + d] * table.vectors.at(row, d);
        scores.push_back(detail::sigmoid(s));
        labels.push_back(imp.click);
    }
    if (scores.empty()) throw Error("evaluate: no impressions in scope '" + scope + "'");
    EvalResult out;
    out.auc = auc(scores, labels);
    out.loss = cross_entropy(scores, labels);
    return out;
}

struct MetricsRow {
    std::string embed_model;
    std::string scope;
    double auc = 0.0;
    double loss = 0.0;
    uint64_t seed = 0;
};

inline std::string serialize_metrics(const std::vector<MetricsRow>& rows) {
    std::string out = "embed_model,scope,auc,loss,seed\n";
    for (const auto& r : rows) {
        out += r.embed_model + ',' + r.scope + ',' + fmt_g17(r.auc) + ',' + fmt_g17(r.loss) + ',' +
               std::to_string(r.seed) + '\n';
    }
    return out;
}

inline void save_metrics(const std::string& path, const std::vector<MetricsRow>& rows) {
    write_atomic(path, serialize_metrics(rows));
}

// ---- dataset files ----
// impressions: `user_idx ad_idx click` per line
// users:       `user_id  v1,v2,...` (tab-separated)
// heldout:     one ad_id per line

inline std::string serialize_impressions(const std::vector<Impression>& imps) {
    std::string out;
    for (const auto& imp : imps)
        out += std::to_string(imp.user) + ' ' + std::to_string(imp.item) + ' ' +
               std::to_string(imp.click) + '\n';
    return out;
}

inline std::vector<Impression> parse_impressions(const std::string& text, const std::string& context) {
    std::vector<Impression> out;
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, ' ');
        const std::string ctx = context + " line " + std::to_string(line_no);
        if (fields.size() != 3) throw Error(ctx + ": expected `user_idx ad_idx click`");
        Impression imp;
        imp.user = static_cast<std::size_t>(parse_count_field(fields[0], ctx + ": field user_idx"));
        imp.item = static_cast<std::size_t>(parse_count_field(fields[1], ctx + ": field ad_idx"));
        const auto click = parse_count_field(fields[2], ctx + ": field click");
        if (click > 1) throw Error(ctx + ": field click must be 0 or 1");
        imp.click = static_cast<int>(click);
        out.push_back(imp);
    }
    return out;
}

inline std::string serialize_users(const Matrix& users) {
    std::string out;
    for (std::size_t u = 0; u < users.rows; ++u) {
        out += "user" + std::to_string(u) + '\t';
        for (std::size_t d = 0; d < users.cols; ++d) {
            if (d) out += ',';
            out += fmt_g17(users.at(u, d));
        }
        out += '\n';
    }
    return out;
}

inline Matrix parse_users(const std::string& text, const std::string& context) {
    std::vector<double> flat;
    std::size_t rows = 0, cols = 0, line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, '\t');
        const std::string ctx = context + " line " + std::to_string(line_no);
        if (fields.size() != 2) throw Error(ctx + ": expected `user_id<TAB>v1,v2,...`");
        auto vals = split(fields[1], ',');
        if (cols == 0)
            cols = vals.size();
        else if (vals.size() != cols)
            throw Error(ctx + ": expected " + std::to_string(cols) + " values, got " +
                        std::to_string(vals.size()));
        for (const auto& v : vals) flat.push_back(parse_double_field(v, ctx));
        ++rows;
    }
    if (rows == 0) throw Error(context + ": no user rows");
    return Matrix(rows, cols, std::move(flat));
}

inline std::string serialize_heldout(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) out += id + '\n';
    return out;
}

inline std::vector<std::string> parse_heldout(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& line : split(text, '\n'))
        if (!line.empty()) out.push_back(line);
    return out;
}

}  // namespace gace
