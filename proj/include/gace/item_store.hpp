#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "gace/common.hpp"

namespace gace {

// One row of the item knowledge base: the ad's semantic vector, the page it
// is distributed on, and its historical interaction statistics. New (cold
// start) ads carry no history.
struct AdRecord {
    std::string ad_id;
    std::vector<double> semantic_vec;
    std::string page_id;
    uint64_t uv = 0;
    uint64_t pv = 0;
    double uvctr = 0.0;
    double pvctr = 0.0;
    bool is_new = false;
};

// Throws on the first violated invariant; `context` prefixes the message.
inline void validate_record(const AdRecord& r, const std::string& context) {
    if (!all_finite(r.semantic_vec))
        throw Error(context + ": field semantic_vec has a non-finite component");
    if (r.uvctr < 0.0 || r.uvctr > 1.0)
        throw Error(context + ": field uvctr = " + fmt_g17(r.uvctr) + " outside [0,1]");
    if (r.pvctr < 0.0 || r.pvctr > 1.0)
        throw Error(context + ": field pvctr = " + fmt_g17(r.pvctr) + " outside [0,1]");
    if (r.uv > r.pv)
        throw Error(context + ": field uv exceeds pv (" + std::to_string(r.uv) + " > " +
                    std::to_string(r.pv) + ")");
    if (r.is_new && (r.uv != 0 || r.pv != 0 || r.uvctr != 0.0 || r.pvctr != 0.0))
        throw Error(context + ": field is_new set but interaction stats are non-zero");
}

// Per-page aggregate over that page's non-new ads. page_vec is the 5-vector
// (ad_count, mean_uv, mean_pv, mean_uvctr, mean_pvctr) standardized to zero
// mean / unit variance across all pages.
struct PageProfile {
    std::string page_id;
    std::size_t ad_count = 0;
    double mean_uv = 0.0;
    double mean_pv = 0.0;
    double mean_uvctr = 0.0;
    double mean_pvctr = 0.0;
    std::array<double, 5> page_vec{};
};

constexpr std::size_t kPageVecDim = 5;
constexpr std::size_t kInteractionDim = 4;

// Node feature table: row i = [semantic | page_vec | uv pv uvctr pvctr],
// interaction columns min-max scaled to [0,1] over the corpus' non-new ads.
struct NodeFeatures {
    std::vector<std::string> ordering;
    Matrix X;
    std::size_t sem_dim = 0;
    // Raw-scale bounds used for the min-max mapping; needed to scale rows of
    // records inserted after assembly.
    std::array<double, kInteractionDim> interaction_lo{};
    std::array<double, kInteractionDim> interaction_hi{};
};

// ---- items file ----
// UTF-8, one record per line, tab-separated:
//   ad_id  page_id  is_new(0|1)  uv  pv  uvctr  pvctr  v1,v2,...,vk
// Lines beginning '#' are comments.

inline AdRecord parse_item_line(const std::string& line, std::size_t expected_k, const std::string& context) {
    auto fields = split(line, '\t');
    if (fields.size() != 8)
        throw Error(context + ": expected 8 tab-separated fields, got " + std::to_string(fields.size()));
    AdRecord r;
    r.ad_id = fields[0];
    r.page_id = fields[1];
    if (r.ad_id.empty()) throw Error(context + ": field ad_id is empty");
    if (r.page_id.empty()) throw Error(context + ": field page_id is empty");
    if (fields[2] == "0")
        r.is_new = false;
    else if (fields[2] == "1")
        r.is_new = true;
    else
        throw Error(context + ": field is_new must be 0 or 1, got '" + fields[2] + "'");
    r.uv = parse_count_field(fields[3], context + ": field uv");
    r.pv = parse_count_field(fields[4], context + ": field pv");
    r.uvctr = parse_double_field(fields[5], context + ": field uvctr");
    r.pvctr = parse_double_field(fields[6], context + ": field pvctr");
    for (const auto& tok : split(fields[7], ','))
        r.semantic_vec.push_back(parse_double_field(tok, context + ": field semantic_vec"));
    if (r.semantic_vec.empty()) throw Error(context + ": field semantic_vec is empty");
    // expected_k = 0 means the caller does not pin the dimension.
    if (expected_k != 0 && r.semantic_vec.size() != expected_k)
        throw Error(context + ": field semantic_vec has " + std::to_string(r.semantic_vec.size()) +
                    " entries, expected " + std::to_string(expected_k));
    validate_record(r, context);
    return r;
}

inline std::vector<AdRecord> load_items(const std::string& path, std::size_t k = 0) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open items file '" + path + "'");
    std::vector<AdRecord> items;
    std::set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const std::string context = path + ":" + std::to_string(line_no);
        items.push_back(parse_item_line(line, k, context));
        if (k == 0) k = items.back().semantic_vec.size();  // first row pins the dimension
        if (!seen_ids.insert(items.back().ad_id).second)
            throw Error(context + ": duplicate ad_id '" + items.back().ad_id + "'");
    }
    return items;
}

inline std::string serialize_items(const std::vector<AdRecord>& items) {
    std::string out;
    for (const auto& r : items) {
        out += r.ad_id;
        out += '\t';
        out += r.page_id;
        out += '\t';
        out += r.is_new ? '1' : '0';
        out += '\t';
        out += std::to_string(r.uv);
        out += '\t';
        out += std::to_string(r.pv);
        out += '\t';
        out += fmt_g17(r.uvctr);
        out += '\t';
        out += fmt_g17(r.pvctr);
        out += '\t';
        for (std::size_t i = 0; i < r.semantic_vec.size(); ++i) {
            if (i) out += ',';
            out += fmt_g17(r.semantic_vec[i]);
        }
        out += '\n';
    }
    return out;
}

inline void save_items(const std::string& path, const std::vector<AdRecord>& items) {
    write_atomic(path, serialize_items(items));
}

// Aggregates per-page statistics over non-new ads and standardizes the
// 5-component page vectors across the returned profiles. A page referenced
// only by new ads has no history to aggregate and is an error.
inline std::map<std::string, PageProfile> build_page_profiles(const std::vector<AdRecord>& items) {
    std::map<std::string, PageProfile> profiles;
    std::map<std::string, std::size_t> warm_count;
    for (const auto& r : items) {
        auto& p = profiles[r.page_id];
        p.page_id = r.page_id;
        p.ad_count += 1;
        if (!r.is_new) {
            warm_count[r.page_id] += 1;
            p.mean_uv += static_cast<double>(r.uv);
            p.mean_pv += static_cast<double>(r.pv);
            p.mean_uvctr += r.uvctr;
            p.mean_pvctr += r.pvctr;
        }
    }
    for (auto& [page_id, p] : profiles) {
        const auto it = warm_count.find(page_id);
        if (it == warm_count.end() || it->second == 0)
            throw Error("page '" + page_id + "' is referenced only by new ads; no history to aggregate");
        const double m = static_cast<double>(it->second);
        p.mean_uv /= m;
        p.mean_pv /= m;
        p.mean_uvctr /= m;
        p.mean_pvctr /= m;
        p.page_vec = {static_cast<double>(p.ad_count), p.mean_uv, p.mean_pv, p.mean_uvctr, p.mean_pvctr};
    }
    // Standardize each component across pages; a constant column (including
    // the single-page corpus) becomes zero.
    const double n = static_cast<double>(profiles.size());
    for (std::size_t c = 0; c < kPageVecDim; ++c) {
        double mean = 0.0;
        for (const auto& [_, p] : profiles) mean += p.page_vec[c];
        mean /= n;
        double var = 0.0;
        for (const auto& [_, p] : profiles) {
            const double d = p.page_vec[c] - mean;
            var += d * d;
        }
        const double sd = std::sqrt(var / n);
        for (auto& [_, p] : profiles)
            p.page_vec[c] = sd > 1e-12 ? (p.page_vec[c] - mean) / sd : 0.0;
    }
    return profiles;
}

// Concatenates [semantic | page | interaction] per item. Interaction columns
// are min-max scaled over the corpus' non-new ads; new ads contribute zeros.
inline NodeFeatures assemble_node_features(const std::vector<AdRecord>& items,
                                           const std::map<std::string, PageProfile>& profiles) {
    if (items.empty()) throw Error("assemble_node_features: empty item list");
    const std::size_t k = items[0].semantic_vec.size();
    NodeFeatures nf;
    nf.sem_dim = k;
    const std::size_t F = k + kPageVecDim + kInteractionDim;
    nf.X = Matrix(items.size(), F);

    std::array<double, kInteractionDim> lo{}, hi{};
    bool seen = false;
    for (const auto& r : items) {
        if (r.is_new) continue;
        const std::array<double, kInteractionDim> raw = {static_cast<double>(r.uv),
                                                         static_cast<double>(r.pv), r.uvctr, r.pvctr};
        if (!seen) {
            lo = hi = raw;
            seen = true;
        } else {
            for (std::size_t c = 0; c < kInteractionDim; ++c) {
                lo[c] = std::min(lo[c], raw[c]);
                hi[c] = std::max(hi[c], raw[c]);
            }
        }
    }
    nf.interaction_lo = lo;
    nf.interaction_hi = hi;

    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& r = items[i];
        if (r.semantic_vec.size() != k)
            throw Error("assemble_node_features: item '" + r.ad_id + "' has semantic dimension " +
                        std::to_string(r.semantic_vec.size()) + ", expected " + std::to_string(k));
        const auto it = profiles.find(r.page_id);
        if (it == profiles.end())
            throw Error("assemble_node_features: no page profile for page '" + r.page_id + "'");
        nf.ordering.push_back(r.ad_id);
        double* row = nf.X.row_ptr(i);
        for (std::size_t c = 0; c < k; ++c) row[c] = r.semantic_vec[c];
        for (std::size_t c = 0; c < kPageVecDim; ++c) row[k + c] = it->second.page_vec[c];
        if (!r.is_new) {
            const std::array<double, kInteractionDim> raw = {static_cast<double>(r.uv),
                                                             static_cast<double>(r.pv), r.uvctr, r.pvctr};
            for (std::size_t c = 0; c < kInteractionDim; ++c) {
                const double range = hi[c] - lo[c];
                row[k + kPageVecDim + c] = range > 0.0 ? (raw[c] - lo[c]) / range : 0.0;
            }
        }
    }
    return nf;
}

// Deterministic stand-in for an external sentence encoder: hashes the text,
// draws k gaussians from the seeded generator, L2-normalizes.
inline std::vector<double> stub_text_encoder(const std::string& text, std::size_t k) {
    if (k == 0) throw Error("stub_text_encoder: dimension must be >= 1");
    std::mt19937_64 rng(fnv1a64(text));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> v(k);
    double norm2 = 0.0;
    for (auto& x : v) {
        x = gauss(rng);
        norm2 += x * x;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : v) x *= inv;
    return v;
}

}  // namespace gace
