#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <tuple>
#include <vector>

#include "gace/item_store.hpp"

namespace gace {

struct GraphConfig {
    std::size_t top_k = 16;
    double min_weight = 1e-6;
};

// Candidate edge weight: ReLU(s_i . s_j) * ReLU(p_i . p_j). Symmetric and
// non-negative; orthogonal or opposed items get weight 0.
inline double edge_weight(const std::vector<double>& s_i, const std::vector<double>& s_j,
                          const std::vector<double>& p_i, const std::vector<double>& p_j) {
    if (s_i.size() != s_j.size()) throw Error("edge_weight: semantic dimensions differ");
    if (p_i.size() != p_j.size()) throw Error("edge_weight: page dimensions differ");
    const double alpha = dot(s_i.data(), s_j.data(), s_i.size());
    const double beta = dot(p_i.data(), p_j.data(), p_i.size());
    return std::max(alpha, 0.0) * std::max(beta, 0.0);
}

// Weighted undirected ad graph. Adjacency is stored as per-node neighbor
// lists sorted by index; a stored pair always has strictly positive weight
// and appears in both endpoint lists.
struct WeightedGraph {
    NodeFeatures features;
    Matrix semantic;  // n x k rows mirrored from the feature table
    Matrix pages;     // n x 5
    std::vector<std::vector<std::pair<std::size_t, double>>> adj;
    // Weight of each row's top_k-th heaviest candidate at build time; -inf
    // when the row had fewer than top_k candidates. Used by insert_node's
    // union rule. Empty for graphs loaded from file until an insert needs it.
    std::vector<double> topk_floor;
    GraphConfig config;

    std::size_t node_count() const { return adj.size(); }

    std::size_t edge_count() const {
        std::size_t twice = 0;
        for (const auto& nb : adj) twice += nb.size();
        return twice / 2;
    }

    const std::vector<std::pair<std::size_t, double>>& neighbors(std::size_t i) const { return adj[i]; }

    double weight(std::size_t i, std::size_t j) const {
        if (i == j) return 0.0;
        const auto& nb = adj[i];
        auto it = std::lower_bound(nb.begin(), nb.end(), j,
                                   [](const auto& e, std::size_t v) { return e.first < v; });
        return (it != nb.end() && it->first == j) ? it->second : 0.0;
    }
};

namespace detail {

inline double pair_weight(const Matrix& sem, const Matrix& pag, std::size_t i, std::size_t j) {
    const double alpha = dot(sem.row_ptr(i), sem.row_ptr(j), sem.cols);
    const double beta = dot(pag.row_ptr(i), pag.row_ptr(j), pag.cols);
    return std::max(alpha, 0.0) * std::max(beta, 0.0);
}

// Heaviest-first with index ascending as the deterministic tie-break.
struct CandidateLess {
    bool operator()(const std::pair<double, std::size_t>& a, const std::pair<double, std::size_t>& b) const {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    }
};

// Top-k positive candidates of one similarity row, plus the row's k-th
// heaviest candidate weight over all candidates (zeros included).
inline void row_top_k(const std::vector<std::pair<double, std::size_t>>& positives, std::size_t n_candidates,
                      std::size_t k, std::vector<std::size_t>* picks, double* floor) {
    std::vector<std::pair<double, std::size_t>> sorted(positives);
    std::sort(sorted.begin(), sorted.end(), CandidateLess{});
    picks->clear();
    for (std::size_t t = 0; t < sorted.size() && t < k; ++t) picks->push_back(sorted[t].second);
    if (n_candidates < k)
        *floor = -std::numeric_limits<double>::infinity();
    else if (sorted.size() >= k)
        *floor = sorted[k - 1].first;
    else
        *floor = 0.0;  // the k-th heaviest candidate is one of the zero-weight ones
}

inline void extract_entity_rows(const NodeFeatures& nf, Matrix* semantic, Matrix* pages) {
    const std::size_t n = nf.X.rows;
    *semantic = Matrix(n, nf.sem_dim);
    *pages = Matrix(n, kPageVecDim);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = nf.X.row_ptr(i);
        for (std::size_t c = 0; c < nf.sem_dim; ++c) semantic->at(i, c) = row[c];
        for (std::size_t c = 0; c < kPageVecDim; ++c) pages->at(i, c) = row[nf.sem_dim + c];
    }
}

}  // namespace detail

// Computes every pairwise candidate weight one row at a time and keeps an
// undirected edge iff its weight passes min_weight and either endpoint ranks
// the other among its top_k heaviest candidates (union rule, symmetric).
inline WeightedGraph build_graph(const NodeFeatures& features, const GraphConfig& config = {}) {
    WeightedGraph g;
    g.features = features;
    g.config = config;
    detail::extract_entity_rows(features, &g.semantic, &g.pages);
    const std::size_t n = features.X.rows;
    g.adj.assign(n, {});
    g.topk_floor.assign(n, 0.0);

    std::vector<std::tuple<std::size_t, std::size_t, double>> kept;  // (i, j, w) with i < j
    std::vector<std::pair<double, std::size_t>> positives;
    std::vector<std::size_t> picks;
    for (std::size_t i = 0; i < n; ++i) {
        positives.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double w = detail::pair_weight(g.semantic, g.pages, i, j);
            if (w > 0.0) positives.emplace_back(w, j);
        }
        detail::row_top_k(positives, n - 1, config.top_k, &picks, &g.topk_floor[i]);
        for (std::size_t j : picks) {
            const double w = detail::pair_weight(g.semantic, g.pages, i, j);
            if (w >= config.min_weight)
                kept.emplace_back(std::min(i, j), std::max(i, j), w);
        }
    }
    std::sort(kept.begin(), kept.end());
    kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
    for (const auto& [i, j, w] : kept) {
        g.adj[i].emplace_back(j, w);
        g.adj[j].emplace_back(i, w);
    }
    for (auto& nb : g.adj) std::sort(nb.begin(), nb.end());
    return g;
}

// Appends one node, connecting it to existing nodes under the same weight +
// sparsification rule build_graph uses. Existing edges are never removed.
// Returns the extended graph and the new node's index.
inline std::pair<WeightedGraph, std::size_t> insert_node(const WeightedGraph& graph, const AdRecord& record,
                                                         const std::map<std::string, PageProfile>& profiles,
                                                         const GraphConfig& config) {
    validate_record(record, "insert_node: record '" + record.ad_id + "'");
    if (record.semantic_vec.size() != graph.semantic.cols)
        throw Error("insert_node: record semantic dimension " + std::to_string(record.semantic_vec.size()) +
                    " does not match graph (" + std::to_string(graph.semantic.cols) + ")");
    const auto it = profiles.find(record.page_id);
    if (it == profiles.end())
        throw Error("insert_node: no page profile for page '" + record.page_id + "'");
    for (const auto& id : graph.features.ordering)
        if (id == record.ad_id) throw Error("insert_node: duplicate ad_id '" + record.ad_id + "'");

    WeightedGraph g = graph;
    const std::size_t n = g.node_count();
    const std::size_t d_idx = n;

    if (g.topk_floor.empty()) {
        // Graph came from a file; rebuild each row's floor from the entity rows.
        g.topk_floor.assign(n, 0.0);
        std::vector<std::pair<double, std::size_t>> positives;
        std::vector<std::size_t> picks;
        for (std::size_t i = 0; i < n; ++i) {
            positives.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double w = detail::pair_weight(g.semantic, g.pages, i, j);
                if (w > 0.0) positives.emplace_back(w, j);
            }
            detail::row_top_k(positives, n - 1, config.top_k, &picks, &g.topk_floor[i]);
        }
    }

    // Grow the entity and feature tables.
    const std::size_t k = g.semantic.cols;
    const std::size_t F = g.features.X.cols;
    g.semantic.data.insert(g.semantic.data.end(), record.semantic_vec.begin(), record.semantic_vec.end());
    g.semantic.rows += 1;
    const auto& pvec = it->second.page_vec;
    g.pages.data.insert(g.pages.data.end(), pvec.begin(), pvec.end());
    g.pages.rows += 1;

    std::vector<double> frow(F, 0.0);
    for (std::size_t c = 0; c < k; ++c) frow[c] = record.semantic_vec[c];
    for (std::size_t c = 0; c < kPageVecDim; ++c) frow[k + c] = pvec[c];
    if (!record.is_new) {
        const std::array<double, kInteractionDim> raw = {static_cast<double>(record.uv),
                                                         static_cast<double>(record.pv), record.uvctr,
                                                         record.pvctr};
        for (std::size_t c = 0; c < kInteractionDim; ++c) {
            const double range = g.features.interaction_hi[c] - g.features.interaction_lo[c];
            frow[k + kPageVecDim + c] = range > 0.0 ? (raw[c] - g.features.interaction_lo[c]) / range : 0.0;
        }
    }
    g.features.X.data.insert(g.features.X.data.end(), frow.begin(), frow.end());
    g.features.X.rows += 1;
    g.features.ordering.push_back(record.ad_id);

    // Candidate weights against every existing node.
    std::vector<std::pair<double, std::size_t>> positives;
    for (std::size_t j = 0; j < n; ++j) {
        const double w = detail::pair_weight(g.semantic, g.pages, d_idx, j);
        if (w > 0.0) positives.emplace_back(w, j);
    }
    std::vector<std::size_t> picks;
    double d_floor = 0.0;
    detail::row_top_k(positives, n, config.top_k, &picks, &d_floor);
    std::vector<bool> in_d_topk(n, false);
    for (std::size_t j : picks) in_d_topk[j] = true;

    g.adj.emplace_back();
    g.topk_floor.push_back(d_floor);
    for (const auto& [w, j] : positives) {
        if (w < config.min_weight) continue;
        // The new node has the largest index, so it enters an existing row's
        // top_k only by strictly beating that row's floor.
        if (!in_d_topk[j] && !(w > g.topk_floor[j])) continue;
        g.adj[d_idx].emplace_back(j, w);
        g.adj[j].emplace_back(d_idx, w);
    }
    std::sort(g.adj[d_idx].begin(), g.adj[d_idx].end());
    return {std::move(g), d_idx};
}

// ---- graph file ----
// Header `n m k d F`, then m edge lines `i j weight` (i < j), then n feature
// lines `ad_id v1 ... vF`. Values print at 17 significant digits and
// round-trip bit-exactly.

inline std::string serialize_graph(const WeightedGraph& g) {
    const std::size_t n = g.node_count();
    std::string out = std::to_string(n) + ' ' + std::to_string(g.edge_count()) + ' ' +
                      std::to_string(g.features.sem_dim) + ' ' + std::to_string(kPageVecDim) + ' ' +
                      std::to_string(g.features.X.cols) + '\n';
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [j, w] : g.adj[i])
            if (i < j) out += std::to_string(i) + ' ' + std::to_string(j) + ' ' + fmt_g17(w) + '\n';
    for (std::size_t i = 0; i < n; ++i) {
        out += g.features.ordering[i];
        for (std::size_t c = 0; c < g.features.X.cols; ++c) out += ' ' + fmt_g17(g.features.X.at(i, c));
        out += '\n';
    }
    return out;
}

inline void save_graph(const std::string& path, const WeightedGraph& g) {
    write_atomic(path, serialize_graph(g));
}

inline WeightedGraph load_graph(const std::string& path, const GraphConfig& config = {}) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open graph file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error("graph file '" + path + "': missing header");
    auto head = split(line, ' ');
    if (head.size() != 5) throw Error("graph file '" + path + "': header must be 'n m k d F'");
    const auto n = static_cast<std::size_t>(parse_count_field(head[0], path + ": header n"));
    const auto m = static_cast<std::size_t>(parse_count_field(head[1], path + ": header m"));
    const auto k = static_cast<std::size_t>(parse_count_field(head[2], path + ": header k"));
    const auto d = static_cast<std::size_t>(parse_count_field(head[3], path + ": header d"));
    const auto F = static_cast<std::size_t>(parse_count_field(head[4], path + ": header F"));
    if (d != kPageVecDim)
        throw Error("graph file '" + path + "': page dimension " + std::to_string(d) + " unsupported");
    if (F != k + kPageVecDim + kInteractionDim)
        throw Error("graph file '" + path + "': F inconsistent with k");

    WeightedGraph g;
    g.config = config;
    g.adj.assign(n, {});
    for (std::size_t e = 0; e < m; ++e) {
        if (!std::getline(in, line)) throw Error("graph file '" + path + "': truncated edge list");
        auto f = split(line, ' ');
        if (f.size() != 3) throw Error("graph file '" + path + "': malformed edge line '" + line + "'");
        const auto i = static_cast<std::size_t>(parse_count_field(f[0], path + ": edge i"));
        const auto j = static_cast<std::size_t>(parse_count_field(f[1], path + ": edge j"));
        const double w = parse_double_field(f[2], path + ": edge weight");
        if (i >= j || j >= n) throw Error("graph file '" + path + "': edge endpoints out of order or range");
        if (!(w > 0.0)) throw Error("graph file '" + path + "': non-positive edge weight");
        g.adj[i].emplace_back(j, w);
        g.adj[j].emplace_back(i, w);
    }
    for (auto& nb : g.adj) std::sort(nb.begin(), nb.end());

    g.features.sem_dim = k;
    g.features.X = Matrix(n, F);
    // Feature columns in the file are already min-max scaled.
    g.features.interaction_lo = {0.0, 0.0, 0.0, 0.0};
    g.features.interaction_hi = {1.0, 1.0, 1.0, 1.0};
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::getline(in, line)) throw Error("graph file '" + path + "': truncated feature table");
        auto f = split(line, ' ');
        if (f.size() != F + 1)
            throw Error("graph file '" + path + "': feature line " + std::to_string(i) + " has " +
                        std::to_string(f.size() ? f.size() - 1 : 0) + " values, expected " + std::to_string(F));
        g.features.ordering.push_back(f[0]);
        for (std::size_t c = 0; c < F; ++c)
            g.features.X.at(i, c) = parse_double_field(f[c + 1], path + ": feature value");
    }
    detail::extract_entity_rows(g.features, &g.semantic, &g.pages);
    return g;
}

}  // namespace gace
