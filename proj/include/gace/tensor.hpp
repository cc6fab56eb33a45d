#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "gace/common.hpp"

namespace gace {

// A dense row-major tensor. Only rank-2 shapes are used in practice; vectors
// are n x 1 columns and scalars are 1 x 1.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until a gradient is accumulated

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d, bool rg = false)
        : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
        std::size_t expect = 1;
        for (std::size_t dim : shape) expect *= dim;
        if (expect != data.size()) throw Error("Tensor: shape does not match data length");
    }

    std::size_t size() const { return data.size(); }
    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() { grad.assign(data.size(), 0.0); }
    bool has_grad() const { return grad.size() == data.size(); }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline TensorPtr tensor(std::size_t r, std::size_t c, std::vector<double> d, bool rg = false) {
    return std::make_shared<Tensor>(std::vector<std::size_t>{r, c}, std::move(d), rg);
}

inline TensorPtr zeros(std::size_t r, std::size_t c, bool rg = false) {
    return tensor(r, c, std::vector<double>(r * c, 0.0), rg);
}

inline TensorPtr scalar(double v, bool rg = false) {
    return tensor(1, 1, {v}, rg);
}

inline TensorPtr from_matrix(const Matrix& m, bool rg = false) {
    return tensor(m.rows, m.cols, m.data, rg);
}

inline Matrix to_matrix(const TensorPtr& t) {
    return Matrix(t->rows(), t->cols(), t->data);
}

// Records primitive applications in execution order. Topological order of the
// recording is what backward() relies on; a tape is single-threaded.
class Tape {
public:
    void record(std::function<void()> backward_fn) {
        nodes_.push_back(std::move(backward_fn));
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays recorded nodes in reverse.
    // Gradients accumulate additively across fan-out.
    void backward(const TensorPtr& loss) {
        if (!loss || loss->size() != 1) throw Error("backward: loss must be a scalar tensor");
        loss->ensure_grad();
        loss->grad[0] += 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> nodes_;
};

inline void backward(const TensorPtr& loss, Tape& tape) { tape.backward(loss); }

inline void zero_grad(const std::vector<TensorPtr>& params) {
    for (const auto& p : params) p->zero_grad();
}

}  // namespace gace
