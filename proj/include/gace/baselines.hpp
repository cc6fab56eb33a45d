#pragma once

#include <random>

#include "gace/graph.hpp"

namespace gace {

struct EmbeddingTable {
    std::vector<std::string> ordering;
    Matrix vectors;  // ordering.size() x D
    std::string source;  // rnd | ngb | gace

    std::size_t dim() const { return vectors.cols; }
};

inline void validate_table(const EmbeddingTable& t) {
    if (t.ordering.size() != t.vectors.rows)
        throw Error("embedding table: id count does not match vector count");
    if (!all_finite(t.vectors.data)) throw Error("embedding table: non-finite entry");
}

// Independent uniform draws in [-0.1, 0.1], one row per id, seeded.
inline EmbeddingTable rnd_emb(const std::vector<std::string>& ids, std::size_t dim, uint64_t seed) {
    if (ids.empty() || dim == 0) throw Error("rnd_emb: need at least one id and dim >= 1");
    EmbeddingTable t;
    t.ordering = ids;
    t.source = "rnd";
    t.vectors = Matrix(ids.size(), dim);
    std::mt19937_64 rng(mix_seed(seed, 0x4d0));
    std::uniform_real_distribution<double> u(-0.1, 0.1);
    for (auto& v : t.vectors.data) v = u(rng);
    return t;
}

// z_i = x_i + sum over neighbors j of x_j, then truncated or zero-padded
// from feature width F to dim.
inline EmbeddingTable ngb_emb(const WeightedGraph& g, std::size_t dim = 15) {
    if (g.node_count() == 0 || dim == 0) throw Error("ngb_emb: need a non-empty graph and dim >= 1");
    const Matrix& x = g.features.X;
    EmbeddingTable t;
    t.ordering = g.features.ordering;
    t.source = "ngb";
    t.vectors = Matrix(g.node_count(), dim);
    std::vector<double> acc(x.cols);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        acc.assign(x.cols, 0.0);
        for (std::size_t d = 0; d < x.cols; ++d) acc[d] = x.at(i, d);
        for (const auto& [j, w] : g.neighbors(i)) {
            (void)w;  // unweighted by definition
            for (std::size_t d = 0; d < x.cols; ++d) acc[d] += x.at(j, d);
        }
        for (std::size_t d = 0; d < dim; ++d)
            t.vectors.at(i, d) = d < x.cols ? acc[d] : 0.0;
    }
    return t;
}

inline std::string serialize_table(const EmbeddingTable& t) {
    validate_table(t);
    std::string out;
    for (std::size_t i = 0; i < t.ordering.size(); ++i) {
        out += t.ordering[i];
        for (std::size_t d = 0; d < t.vectors.cols; ++d) {
            out += ' ';
            out += fmt_g17(t.vectors.at(i, d));
        }
        out += '\n';
    }
    return out;
}

inline void save_table(const std::string& path, const EmbeddingTable& t) {
    write_atomic(path, serialize_table(t));
}

inline EmbeddingTable load_table(const std::string& path, const std::string& source = "") {
    std::ifstream in(path);
    if (!in) throw Error("cannot open embedding table '" + path + "'");
    EmbeddingTable t;
    t.source = source;
    std::vector<double> flat;
    std::size_t dim = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, ' ');
        if (fields.size() < 2)
            throw Error("embedding table '" + path + "' line " + std::to_string(line_no) +
                        ": expected an id and at least one value");
        if (dim == 0)
            dim = fields.size() - 1;
        else if (fields.size() - 1 != dim)
            throw Error("embedding table '" + path + "' line " + std::to_string(line_no) +
                        ": expected " + std::to_string(dim) + " values, got " +
                        std::to_string(fields.size() - 1));
        t.ordering.push_back(fields[0]);
        for (std::size_t d = 1; d < fields.size(); ++d)
            flat.push_back(parse_double_field(
                fields[d], "embedding table '" + path + "' line " + std::to_string(line_no)));
    }
    if (t.ordering.empty()) throw Error("embedding table '" + path + "' is empty");
    t.vectors = Matrix(t.ordering.size(), dim, std::move(flat));
    validate_table(t);
    return t;
}

}  // namespace gace
