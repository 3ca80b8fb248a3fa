#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "kcb/error.hpp"

namespace kcb::num {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Forward ops verify that outputs are finite when this is on. Defaults to on
// in debug builds.
inline bool& finite_checks() {
#ifdef NDEBUG
    static bool enabled = false;
#else
    static bool enabled = true;
#endif
    return enabled;
}

template <class T>
struct Buffer {
    Shape shape;
    std::vector<T> data;
    bool requires_grad = false;
};

// Handle to an immutable row-major buffer. Copies share storage; parameters
// are the only tensors mutated after creation (through mutable_data()).
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : buf_(std::make_shared<Buffer<T>>()) {
        if (numel(shape) != data.size()) {
            throw ShapeError("shape " + shape_str(shape) + " does not match " +
                             std::to_string(data.size()) + " values");
        }
        buf_->shape = std::move(shape);
        buf_->data = std::move(data);
        buf_->requires_grad = requires_grad;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<T> data(numel(shape), T{0});
        return Tensor(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return Tensor(Shape{}, std::vector<T>{value}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(buf_); }
    const Shape& shape() const { return buf_->shape; }
    std::size_t rank() const { return buf_->shape.size(); }
    std::size_t size() const { return buf_->data.size(); }
    std::size_t rows() const { return rank() == 0 ? 1 : buf_->shape[0]; }
    std::size_t cols() const { return rank() < 2 ? (rank() == 0 ? 1 : buf_->shape[0]) : buf_->shape[1]; }
    bool requires_grad() const { return buf_->requires_grad; }

    std::span<const T> data() const { return buf_->data; }
    std::span<T> mutable_data() { return buf_->data; }
    const T* row(std::size_t r) const { return buf_->data.data() + r * buf_->shape.back(); }

    T item() const {
        if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
        return buf_->data[0];
    }

    // Identity used to key gradients.
    const void* id() const { return buf_.get(); }

private:
    std::shared_ptr<Buffer<T>> buf_;
};

// Gradients keyed by tensor identity.
template <class T>
class GradStore {
public:
    std::vector<T>& slot(const Tensor<T>& t) {
        auto [it, inserted] = grads_.try_emplace(t.id());
        if (inserted) it->second.assign(t.size(), T{0});
        return it->second;
    }

    const std::vector<T>* find(const Tensor<T>& t) const {
        auto it = grads_.find(t.id());
        return it == grads_.end() ? nullptr : &it->second;
    }

    // Zero-filled when `t` was not reachable from the loss.
    std::vector<T> grad_of(const Tensor<T>& t) const {
        if (const auto* g = find(t)) return *g;
        return std::vector<T>(t.size(), T{0});
    }

    bool contains(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }

private:
    std::unordered_map<const void*, std::vector<T>> grads_;
};

// Backward rules read the output gradient and accumulate into input slots.
template <class T>
class GradAccess {
public:
    explicit GradAccess(GradStore<T>& store) : store_(store) {}

    // Null span when `t` does not need a gradient.
    std::span<T> into(const Tensor<T>& t) {
        if (!t.requires_grad()) return {};
        return store_.slot(t);
    }

private:
    GradStore<T>& store_;
};

// Records differentiable ops in execution order. A tape can be replayed
// backward exactly once; a second backward() throws std::logic_error.
template <class T>
class Tape {
public:
    using BackwardFn = std::function<void(std::span<const T> grad_out, GradAccess<T>& access)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // True when an op over `inputs` needs to be recorded.
    static bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
        for (const auto* t : inputs)
            if (t->requires_grad()) return true;
        return false;
    }

    void record(Tensor<T> output, BackwardFn backward) {
        if (consumed_) throw std::logic_error("Tape: recording after backward()");
        entries_.push_back(Entry{std::move(output), std::move(backward)});
    }

    std::size_t size() const { return entries_.size(); }
    bool consumed() const { return consumed_; }

    GradStore<T> backward(const Tensor<T>& loss) {
        if (loss.size() != 1) {
            throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
        }
        const T one{1};
        return backward(loss, std::span<const T>(&one, 1));
    }

    // Backward from an arbitrary output whose gradient is already known.
    GradStore<T> backward(const Tensor<T>& output, std::span<const T> seed) {
        if (seed.size() != output.size()) {
            throw ShapeError("backward(): seed of " + std::to_string(seed.size()) + " values for " +
                             shape_str(output.shape()));
        }
        if (consumed_) throw std::logic_error("Tape: backward() called twice");
        consumed_ = true;
        GradStore<T> store;
        if (!output.requires_grad()) return store;
        std::copy(seed.begin(), seed.end(), store.slot(output).begin());
        GradAccess<T> access(store);
        for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
            const auto* g = store.find(it->output);
            if (g == nullptr) continue;
            // The rule may insert new slots, so copy the output gradient first.
            std::vector<T> grad_out = *g;
            it->backward(grad_out, access);
        }
        entries_.clear();
        return store;
    }

private:
    struct Entry {
        Tensor<T> output;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
    bool consumed_ = false;
};

}  // namespace kcb::num
