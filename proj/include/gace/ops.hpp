#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "gace/tensor.hpp"

// Differentiable primitives. Every op computes its forward value eagerly and,
// when any input requires grad, records a backward closure on the tape. The
// closure accumulates (+=) into input grads so fan-out adds up naturally.
namespace gace::ops {

namespace detail {

inline void shape_check(bool ok, const std::string& what) {
    if (!ok) throw Error(what);
}

}  // namespace detail

inline TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    detail::shape_check(a->cols() == b->rows(), "matmul: inner dimensions do not match");
    const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a->data.data() + i * k;
        double* orow = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = b->data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    const bool rg = a->requires_grad || b->requires_grad;
    auto c = tensor(m, n, std::move(out), rg);
    if (rg) {
        tape.record([a, b, c, m, k, n] {
            if (!c->has_grad()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        const double* crow = c->grad.data() + i * n;
                        const double* brow = b->data.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) s += crow[j] * brow[j];
                        a->grad[i * k + p] += s;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        const double aip = a->data[i * k + p];
                        if (aip == 0.0) continue;
                        const double* crow = c->grad.data() + i * n;
                        double* brow = b->grad.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) brow[j] += aip * crow[j];
                    }
            }
        });
    }
    return c;
}

inline TensorPtr transpose(Tape& tape, const TensorPtr& a) {
    const std::size_t m = a->rows(), n = a->cols();
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a->data[i * n + j];
    auto c = tensor(n, m, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c, m, n] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) a->grad[i * n + j] += c->grad[j * m + i];
        });
    }
    return c;
}

inline TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    detail::shape_check(a->shape == b->shape, "add: shape mismatch");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
    const bool rg = a->requires_grad || b->requires_grad;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), rg);
    if (rg) {
        tape.record([a, b, c] {
            if (!c->has_grad()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += c->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i) b->grad[i] += c->grad[i];
            }
        });
    }
    return c;
}

inline TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    detail::shape_check(a->shape == b->shape, "sub: shape mismatch");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
    const bool rg = a->requires_grad || b->requires_grad;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), rg);
    if (rg) {
        tape.record([a, b, c] {
            if (!c->has_grad()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += c->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i) b->grad[i] -= c->grad[i];
            }
        });
    }
    return c;
}

inline TensorPtr scale(Tape& tape, const TensorPtr& a, double factor) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * factor;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c, factor] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += factor * c->grad[i];
        });
    }
    return c;
}

inline TensorPtr add_scalar(Tape& tape, const TensorPtr& a, double value) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + value;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += c->grad[i];
        });
    }
    return c;
}

inline TensorPtr elementwise_mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    detail::shape_check(a->shape == b->shape, "elementwise_mul: shape mismatch");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
    const bool rg = a->requires_grad || b->requires_grad;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), rg);
    if (rg) {
        tape.record([a, b, c] {
            if (!c->has_grad()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += b->data[i] * c->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i) b->grad[i] += a->data[i] * c->grad[i];
            }
        });
    }
    return c;
}

inline TensorPtr div(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    detail::shape_check(a->shape == b->shape, "div: shape mismatch");
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] / b->data[i];
    const bool rg = a->requires_grad || b->requires_grad;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), rg);
    if (rg) {
        tape.record([a, b, c] {
            if (!c->has_grad()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += c->grad[i] / b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < c->grad.size(); ++i)
                    b->grad[i] -= c->grad[i] * a->data[i] / (b->data[i] * b->data[i]);
            }
        });
    }
    return c;
}

// Subgradient at 0 is 0.
inline TensorPtr relu(Tape& tape, const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] > 0.0 ? a->data[i] : 0.0;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < c->grad.size(); ++i)
                if (a->data[i] > 0.0) a->grad[i] += c->grad[i];
        });
    }
    return c;
}

inline TensorPtr leaky_relu(Tape& tape, const TensorPtr& a, double slope) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a->data[i];
        out[i] = x > 0.0 ? x : slope * x;
    }
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c, slope] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < c->grad.size(); ++i)
                a->grad[i] += (a->data[i] > 0.0 ? 1.0 : slope) * c->grad[i];
        });
    }
    return c;
}

inline TensorPtr exp(Tape& tape, const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a->data[i]);
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += c->data[i] * c->grad[i];
        });
    }
    return c;
}

inline TensorPtr log(Tape& tape, const TensorPtr& a) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a->data[i]);
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < c->grad.size(); ++i) a->grad[i] += c->grad[i] / a->data[i];
        });
    }
    return c;
}

inline TensorPtr clamp(Tape& tape, const TensorPtr& a, double lo, double hi) {
    std::vector<double> out(a->size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a->data[i], lo), hi);
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c, lo, hi] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < c->grad.size(); ++i)
                if (a->data[i] > lo && a->data[i] < hi) a->grad[i] += c->grad[i];
        });
    }
    return c;
}

inline TensorPtr reduce_sum(Tape& tape, const TensorPtr& a) {
    double s = 0.0;
    for (double x : a->data) s += x;
    auto c = tensor(1, 1, {s}, a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += c->grad[0];
        });
    }
    return c;
}

inline TensorPtr concat_rows(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    detail::shape_check(a->cols() == b->cols(), "concat_rows: column counts differ");
    const std::size_t p = a->rows(), q = b->rows(), c = a->cols();
    std::vector<double> out;
    out.reserve((p + q) * c);
    out.insert(out.end(), a->data.begin(), a->data.end());
    out.insert(out.end(), b->data.begin(), b->data.end());
    const bool rg = a->requires_grad || b->requires_grad;
    auto r = tensor(p + q, c, std::move(out), rg);
    if (rg) {
        tape.record([a, b, r] {
            if (!r->has_grad()) return;
            const std::size_t na = a->size();
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < na; ++i) a->grad[i] += r->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += r->grad[na + i];
            }
        });
    }
    return r;
}

inline TensorPtr slice_rows(Tape& tape, const TensorPtr& a, std::size_t r0, std::size_t r1) {
    detail::shape_check(r0 <= r1 && r1 <= a->rows(), "slice_rows: range out of bounds");
    const std::size_t c = a->cols();
    std::vector<double> out(a->data.begin() + static_cast<std::ptrdiff_t>(r0 * c),
                            a->data.begin() + static_cast<std::ptrdiff_t>(r1 * c));
    auto r = tensor(r1 - r0, c, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, r, r0, c] {
            if (!r->has_grad()) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < r->grad.size(); ++i) a->grad[r0 * c + i] += r->grad[i];
        });
    }
    return r;
}

// Softmax over the given index subset of a flat tensor; entries outside the
// set are 0 in the output.
inline TensorPtr masked_softmax(Tape& tape, const TensorPtr& a, const std::vector<std::size_t>& index_set) {
    if (index_set.empty()) throw Error("masked_softmax: empty index set");
    for (std::size_t i : index_set)
        detail::shape_check(i < a->size(), "masked_softmax: index out of range");
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i : index_set) m = std::max(m, a->data[i]);
    std::vector<double> out(a->size(), 0.0);
    double denom = 0.0;
    for (std::size_t i : index_set) {
        out[i] = std::exp(a->data[i] - m);
        denom += out[i];
    }
    for (std::size_t i : index_set) out[i] /= denom;
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c, index_set] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            double inner = 0.0;
            for (std::size_t i : index_set) inner += c->grad[i] * c->data[i];
            for (std::size_t i : index_set) a->grad[i] += c->data[i] * (c->grad[i] - inner);
        });
    }
    return c;
}

// Softmax within each contiguous segment [offsets[s], offsets[s+1]) of a flat
// E x 1 tensor. Segments must be non-empty and cover the tensor exactly.
inline TensorPtr segment_softmax(Tape& tape, const TensorPtr& a, const std::vector<std::size_t>& offsets) {
    detail::shape_check(!offsets.empty() && offsets.front() == 0 && offsets.back() == a->size(),
                        "segment_softmax: offsets do not cover the tensor");
    std::vector<double> out(a->size());
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const std::size_t b = offsets[s], e = offsets[s + 1];
        if (b >= e) throw Error("segment_softmax: empty segment");
        double m = a->data[b];
        for (std::size_t i = b + 1; i < e; ++i) m = std::max(m, a->data[i]);
        double denom = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            out[i] = std::exp(a->data[i] - m);
            denom += out[i];
        }
        for (std::size_t i = b; i < e; ++i) out[i] /= denom;
    }
    auto c = std::make_shared<Tensor>(a->shape, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, c, offsets] {
            if (!c->has_grad()) return;
            a->ensure_grad();
            for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                const std::size_t b = offsets[s], e = offsets[s + 1];
                double inner = 0.0;
                for (std::size_t i = b; i < e; ++i) inner += c->grad[i] * c->data[i];
                for (std::size_t i = b; i < e; ++i) a->grad[i] += c->data[i] * (c->grad[i] - inner);
            }
        });
    }
    return c;
}

inline TensorPtr gather_rows(Tape& tape, const TensorPtr& a, const std::vector<std::size_t>& idx) {
    const std::size_t c = a->cols();
    for (std::size_t i : idx)
        detail::shape_check(i < a->rows(), "gather_rows: index out of range");
    std::vector<double> out(idx.size() * c);
    for (std::size_t e = 0; e < idx.size(); ++e)
        std::copy_n(a->data.data() + idx[e] * c, c, out.data() + e * c);
    auto r = tensor(idx.size(), c, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, r, idx, c] {
            if (!r->has_grad()) return;
            a->ensure_grad();
            for (std::size_t e = 0; e < idx.size(); ++e) {
                double* dst = a->grad.data() + idx[e] * c;
                const double* src = r->grad.data() + e * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
        });
    }
    return r;
}

// out[idx[e], :] += a[e, :]; rows of `out` not hit by any index stay zero.
inline TensorPtr scatter_add_rows(Tape& tape, const TensorPtr& a, const std::vector<std::size_t>& idx,
                                  std::size_t n_rows) {
    detail::shape_check(idx.size() == a->rows(), "scatter_add_rows: index count != row count");
    const std::size_t c = a->cols();
    for (std::size_t i : idx)
        detail::shape_check(i < n_rows, "scatter_add_rows: index out of range");
    std::vector<double> out(n_rows * c, 0.0);
    for (std::size_t e = 0; e < idx.size(); ++e) {
        double* dst = out.data() + idx[e] * c;
        const double* src = a->data.data() + e * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
    auto r = tensor(n_rows, c, std::move(out), a->requires_grad);
    if (a->requires_grad) {
        tape.record([a, r, idx, c] {
            if (!r->has_grad()) return;
            a->ensure_grad();
            for (std::size_t e = 0; e < idx.size(); ++e) {
                const double* src = r->grad.data() + idx[e] * c;
                double* dst = a->grad.data() + e * c;
                for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
            }
        });
    }
    return r;
}

// Scales row e of `a` by s[e]; s is an m x 1 column.
inline TensorPtr row_scale(Tape& tape, const TensorPtr& a, const TensorPtr& s) {
    detail::shape_check(s->rows() == a->rows() && s->cols() == 1, "row_scale: scale must be rows x 1");
    const std::size_t m = a->rows(), c = a->cols();
    std::vector<double> out(m * c);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a->data[i * c + j] * s->data[i];
    const bool rg = a->requires_grad || s->requires_grad;
    auto r = tensor(m, c, std::move(out), rg);
    if (rg) {
        tape.record([a, s, r, m, c] {
            if (!r->has_grad()) return;
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) a->grad[i * c + j] += r->grad[i * c + j] * s->data[i];
            }
            if (s->requires_grad) {
                s->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += r->grad[i * c + j] * a->data[i * c + j];
                    s->grad[i] += acc;
                }
            }
        });
    }
    return r;
}

}  // namespace gace::ops
