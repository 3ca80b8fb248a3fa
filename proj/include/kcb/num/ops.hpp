#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <type_traits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kcb/num/tensor.hpp"

namespace kcb::num {

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <class T>
void check_finite(const std::vector<T>& data, const char* op) {
    if (!finite_checks()) return;
    for (T v : data) {
        if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
    }
}

template <class T>
Tensor<T> make_output(Shape shape, std::vector<T> data, bool requires_grad, const char* op) {
    check_finite(data, op);
    return Tensor<T>(std::move(shape), std::move(data), requires_grad);
}

template <class T>
void require_matrix(const Tensor<T>& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
    }
}

}  // namespace detail

// C = A·B. dA = dC·Bᵀ, dB = Aᵀ·dC.
template <class T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    if (b.shape()[0] != k) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<T> out(m * n, T{0});
    if (m && n && k) {
        detail::MatMap<T>(out.data(), m, n).noalias() =
            detail::ConstMatMap<T>(a.data().data(), m, k) * detail::ConstMatMap<T>(b.data().data(), k, n);
    }
    const bool rg = Tape<T>::any_requires_grad({&a, &b});
    auto result = detail::make_output<T>({m, n}, std::move(out), rg, "matmul");
    if (rg) {
        tape.record(result, [a, b, m, k, n](std::span<const T> gout, GradAccess<T>& acc) {
            if (!m || !n || !k) return;
            detail::ConstMatMap<T> dc(gout.data(), m, n);
            if (auto ga = acc.into(a); !ga.empty()) {
                detail::MatMap<T>(ga.data(), m, k).noalias() +=
                    dc * detail::ConstMatMap<T>(b.data().data(), k, n).transpose();
            }
            if (auto gb = acc.into(b); !gb.empty()) {
                detail::MatMap<T>(gb.data(), k, n).noalias() +=
                    detail::ConstMatMap<T>(a.data().data(), m, k).transpose() * dc;
            }
        });
    }
    return result;
}

template <class T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    const bool rg = Tape<T>::any_requires_grad({&a, &b});
    auto result = detail::make_output<T>(a.shape(), std::move(out), rg, "add");
    if (rg) {
        tape.record(result, [a, b](std::span<const T> gout, GradAccess<T>& acc) {
            for (const auto* t : {&a, &b}) {
                if (auto g = acc.into(*t); !g.empty())
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
            }
        });
    }
    return result;
}

template <class T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    const bool rg = Tape<T>::any_requires_grad({&a, &b});
    auto result = detail::make_output<T>(a.shape(), std::move(out), rg, "mul");
    if (rg) {
        tape.record(result, [a, b](std::span<const T> gout, GradAccess<T>& acc) {
            if (auto g = acc.into(a); !g.empty())
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * b.data()[i];
            if (auto g = acc.into(b); !g.empty())
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * a.data()[i];
        });
    }
    return result;
}

template <class T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
    auto result = detail::make_output<T>(x.shape(), std::move(out), x.requires_grad(), "scale");
    if (x.requires_grad()) {
        tape.record(result, [x, factor](std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(x);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * factor;
        });
    }
    return result;
}

template <class T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
    T total{0};
    for (T v : x.data()) total += v;
    auto result = detail::make_output<T>({}, std::vector<T>{total}, x.requires_grad(), "sum");
    if (x.requires_grad()) {
        tape.record(result, [x](std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(x);
            for (auto& v : g) v += gout[0];
        });
    }
    return result;
}

// y[i, :] = x[i, :] + bias
template <class T>
Tensor<T> add_rowwise(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& bias) {
    detail::require_matrix(x, "add_rowwise");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (bias.size() != n) {
        throw ShapeError("add_rowwise: " + shape_str(x.shape()) + " with bias " + shape_str(bias.shape()));
    }
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + bias.data()[j];
    const bool rg = Tape<T>::any_requires_grad({&x, &bias});
    auto result = detail::make_output<T>(x.shape(), std::move(out), rg, "add_rowwise");
    if (rg) {
        tape.record(result, [x, bias, m, n](std::span<const T> gout, GradAccess<T>& acc) {
            if (auto g = acc.into(x); !g.empty())
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i];
            if (auto g = acc.into(bias); !g.empty())
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) g[j] += gout[i * n + j];
        });
    }
    return result;
}

// x·W + b
template <class T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    return add_rowwise(tape, matmul(tape, x, weight), bias);
}

// When set, the gelu backward rule drops its pdf term. Exists so gradient
// checking can be shown to catch a broken rule.
inline bool& corrupt_gelu_backward() {
    static bool enabled = false;
    return enabled;
}

// Exact (erf) GELU.
template <class T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x) {
    const T inv_sqrt2 = T(0.70710678118654752440);
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = x.data()[i];
        out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
    }
    auto result = detail::make_output<T>(x.shape(), std::move(out), x.requires_grad(), "gelu");
    if (x.requires_grad()) {
        const bool corrupt = corrupt_gelu_backward();
        tape.record(result, [x, inv_sqrt2, corrupt](std::span<const T> gout, GradAccess<T>& acc) {
            const T inv_sqrt2pi = corrupt ? T(0) : T(0.39894228040143267794);
            auto g = acc.into(x);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T v = x.data()[i];
                const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
                const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
                g[i] += gout[i] * (cdf + v * pdf);
            }
        });
    }
    return result;
}

template <class T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
    detail::require_matrix(x, "layer_norm");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (gain.size() != n || bias.size() != n) {
        throw ShapeError("layer_norm: " + shape_str(x.shape()) + " with gain " + shape_str(gain.shape()) +
                         " and bias " + shape_str(bias.shape()));
    }
    std::vector<T> out(x.size());
    std::vector<T> xhat(x.size());
    std::vector<T> rstd(m);
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data().data() + i * n;
        T mean{0};
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= T(n);
        T var{0};
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= T(n);
        rstd[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[i * n + j] = (row[j] - mean) * rstd[i];
            out[i * n + j] = xhat[i * n + j] * gain.data()[j] + bias.data()[j];
        }
    }
    const bool rg = Tape<T>::any_requires_grad({&x, &gain, &bias});
    auto result = detail::make_output<T>(x.shape(), std::move(out), rg, "layer_norm");
    if (rg) {
        tape.record(result, [x, gain, bias, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](
                                std::span<const T> gout, GradAccess<T>& acc) {
            auto gx = acc.into(x);
            auto gg = acc.into(gain);
            auto gb = acc.into(bias);
            std::vector<T> dxhat(n);
            for (std::size_t i = 0; i < m; ++i) {
                const T* dy = gout.data() + i * n;
                const T* xh = xhat.data() + i * n;
                T mean_d{0}, mean_dx{0};
                for (std::size_t j = 0; j < n; ++j) {
                    dxhat[j] = dy[j] * gain.data()[j];
                    mean_d += dxhat[j];
                    mean_dx += dxhat[j] * xh[j];
                    if (!gg.empty()) gg[j] += dy[j] * xh[j];
                    if (!gb.empty()) gb[j] += dy[j];
                }
                mean_d /= T(n);
                mean_dx /= T(n);
                if (!gx.empty())
                    for (std::size_t j = 0; j < n; ++j)
                        gx[i * n + j] += rstd[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
            }
        });
    }
    return result;
}

template <class T>
Tensor<T> softmax_rows(Tape<T>& tape, const Tensor<T>& x) {
    detail::require_matrix(x, "softmax_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (n == 0) throw ShapeError("softmax_rows: zero columns");
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < m; ++i) {
        const T* row = x.data().data() + i * n;
        const T mx = *std::max_element(row, row + n);
        T z{0};
        for (std::size_t j = 0; j < n; ++j) z += (out[i * n + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    auto result = detail::make_output<T>(x.shape(), std::move(out), x.requires_grad(), "softmax_rows");
    if (x.requires_grad()) {
        tape.record(result, [x, result, m, n](std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(x);
            const T* p = result.data().data();
            for (std::size_t i = 0; i < m; ++i) {
                T dot{0};
                for (std::size_t j = 0; j < n; ++j) dot += gout[i * n + j] * p[i * n + j];
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += p[i * n + j] * (gout[i * n + j] - dot);
            }
        });
    }
    return result;
}

// Mean over rows of -log softmax(logits)[target].
template <class T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::size_t> targets) {
    const std::size_t m = logits.rank() == 2 ? logits.shape()[0] : 1;
    const std::size_t c = logits.rank() == 2 ? logits.shape()[1] : logits.size();
    if (targets.size() != m) {
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
    }
    if (m == 0) throw ShapeError("cross_entropy: no rows");
    std::vector<T> probs(logits.size());
    T loss{0};
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] >= c) {
            throw IndexError("cross_entropy: target " + std::to_string(targets[i]) + " outside [0, " +
                             std::to_string(c) + ")");
        }
        const T* row = logits.data().data() + i * c;
        const T mx = *std::max_element(row, row + c);
        T z{0};
        for (std::size_t j = 0; j < c; ++j) z += (probs[i * c + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
        loss += -(row[targets[i]] - mx - std::log(z));
    }
    loss /= T(m);
    auto result = detail::make_output<T>({}, std::vector<T>{loss}, logits.requires_grad(), "cross_entropy");
    if (logits.requires_grad()) {
        std::vector<std::size_t> tgt(targets.begin(), targets.end());
        tape.record(result, [logits, m, c, probs = std::move(probs), tgt = std::move(tgt)](
                                std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(logits);
            const T s = gout[0] / T(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    g[i * c + j] += s * (probs[i * c + j] - (j == tgt[i] ? T(1) : T(0)));
        });
    }
    return result;
}

// Mean over all entries of the binary cross-entropy between sigmoid(logits)
// and 0/1 targets of the same shape.
template <class T>
Tensor<T> bce_with_logits(Tape<T>& tape, const Tensor<T>& logits, std::type_identity_t<std::span<const T>> targets) {
    if (targets.size() != logits.size()) {
        throw ShapeError("bce_with_logits: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
    }
    if (logits.size() == 0) throw ShapeError("bce_with_logits: empty logits");
    T loss{0};
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const T x = logits.data()[i];
        loss += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    const T count = T(logits.size());
    loss /= count;
    auto result = detail::make_output<T>({}, std::vector<T>{loss}, logits.requires_grad(), "bce_with_logits");
    if (logits.requires_grad()) {
        std::vector<T> tgt(targets.begin(), targets.end());
        tape.record(result, [logits, count, tgt = std::move(tgt)](std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(logits);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const T sig = T(1) / (T(1) + std::exp(-logits.data()[i]));
                g[i] += gout[0] * (sig - tgt[i]) / count;
            }
        });
    }
    return result;
}

// Rows scaled to unit L2 norm. Norms below 1e-12 are clamped.
template <class T>
Tensor<T> l2_normalize_rows(Tape<T>& tape, const Tensor<T>& x) {
    detail::require_matrix(x, "l2_normalize_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    std::vector<T> out(x.size());
    std::vector<T> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        T ss{0};
        for (std::size_t j = 0; j < n; ++j) ss += x.data()[i * n + j] * x.data()[i * n + j];
        norms[i] = std::max(std::sqrt(ss), T(1e-12));
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] / norms[i];
    }
    auto result = detail::make_output<T>(x.shape(), std::move(out), x.requires_grad(), "l2_normalize_rows");
    if (x.requires_grad()) {
        tape.record(result, [x, result, m, n, norms = std::move(norms)](std::span<const T> gout,
                                                                       GradAccess<T>& acc) {
            auto g = acc.into(x);
            const T* y = result.data().data();
            for (std::size_t i = 0; i < m; ++i) {
                T dot{0};
                for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * gout[i * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    g[i * n + j] += (gout[i * n + j] - y[i * n + j] * dot) / norms[i];
            }
        });
    }
    return result;
}

// out[r] = table[ids[r]]; the gradient scatter-adds back into the table.
template <class T>
Tensor<T> gather_rows(Tape<T>& tape, const Tensor<T>& table, std::span<const std::size_t> ids) {
    detail::require_matrix(table, "gather_rows");
    const std::size_t vocab = table.shape()[0], n = table.shape()[1];
    std::vector<T> out(ids.size() * n);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (ids[r] >= vocab) {
            throw IndexError("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                             std::to_string(vocab) + " rows");
        }
        std::copy_n(table.data().data() + ids[r] * n, n, out.data() + r * n);
    }
    auto result = detail::make_output<T>({ids.size(), n}, std::move(out), table.requires_grad(), "gather_rows");
    if (table.requires_grad()) {
        std::vector<std::size_t> idx(ids.begin(), ids.end());
        tape.record(result, [table, n, idx = std::move(idx)](std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(table);
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < n; ++j) g[idx[r] * n + j] += gout[r * n + j];
        });
    }
    return result;
}

// Concatenation along the last axis. Scalars count as 1x1.
template <class T>
Tensor<T> concat_cols(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts[0].rows();
    std::size_t total = 0;
    bool rg = false;
    for (const auto& p : parts) {
        if (p.rank() > 2 || p.rows() != m || (p.rank() == 1 && m != 1)) {
            throw ShapeError("concat_cols: " + shape_str(p.shape()) + " does not fit " + std::to_string(m) +
                             " rows");
        }
        total += p.rank() == 2 ? p.shape()[1] : p.size();
        rg = rg || p.requires_grad();
    }
    std::vector<T> out(m * total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.size() / std::max<std::size_t>(m, 1);
        for (std::size_t i = 0; i < m; ++i) std::copy_n(p.data().data() + i * w, w, out.data() + i * total + offset);
        offset += w;
    }
    auto result = detail::make_output<T>({m, total}, std::move(out), rg, "concat_cols");
    if (rg) {
        tape.record(result, [parts, m, total](std::span<const T> gout, GradAccess<T>& acc) {
            std::size_t offset = 0;
            for (const auto& p : parts) {
                const std::size_t w = p.size() / std::max<std::size_t>(m, 1);
                if (auto g = acc.into(p); !g.empty())
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j) g[i * w + j] += gout[i * total + offset + j];
                offset += w;
            }
        });
    }
    return result;
}

template <class T>
Tensor<T> concat_rows(Tape<T>& tape, const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    detail::require_matrix(parts[0], "concat_rows");
    const std::size_t n = parts[0].shape()[1];
    std::size_t m = 0;
    bool rg = false;
    for (const auto& p : parts) {
        detail::require_matrix(p, "concat_rows");
        if (p.shape()[1] != n) {
            throw ShapeError("concat_rows: " + shape_str(p.shape()) + " does not have " + std::to_string(n) +
                             " columns");
        }
        m += p.shape()[0];
        rg = rg || p.requires_grad();
    }
    std::vector<T> out;
    out.reserve(m * n);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    auto result = detail::make_output<T>({m, n}, std::move(out), rg, "concat_rows");
    if (rg) {
        tape.record(result, [parts](std::span<const T> gout, GradAccess<T>& acc) {
            std::size_t offset = 0;
            for (const auto& p : parts) {
                if (auto g = acc.into(p); !g.empty())
                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[offset + i];
                offset += p.size();
            }
        });
    }
    return result;
}

// Inverted dropout. Identity in eval mode or when rate is 0.
template <class T>
Tensor<T> dropout(Tape<T>& tape, const Tensor<T>& x, double rate, bool training, std::mt19937_64& rng) {
    if (!training || rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    std::bernoulli_distribution keep(1.0 - rate);
    const T s = T(1.0 / (1.0 - rate));
    std::vector<T> mask(x.size());
    for (auto& v : mask) v = keep(rng) ? s : T(0);
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    auto result = detail::make_output<T>(x.shape(), std::move(out), x.requires_grad(), "dropout");
    if (x.requires_grad()) {
        tape.record(result, [x, mask = std::move(mask)](std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(x);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gout[i] * mask[i];
        });
    }
    return result;
}

// Multi-head scaled dot-product self-attention over packed [n x 3d] rows
// holding Q|K|V. `bounds` splits the rows into independent segments
// ({0, ..., n}); attention never crosses a segment boundary.
template <class T>
Tensor<T> segmented_attention(Tape<T>& tape, const Tensor<T>& qkv, std::size_t heads,
                              std::span<const std::size_t> bounds) {
    detail::require_matrix(qkv, "segmented_attention");
    const std::size_t n = qkv.shape()[0], width = qkv.shape()[1];
    if (width % 3 != 0 || heads == 0 || (width / 3) % heads != 0) {
        throw ShapeError("segmented_attention: width " + std::to_string(width) + " incompatible with " +
                         std::to_string(heads) + " heads");
    }
    if (bounds.size() < 1 || bounds.front() != 0 || bounds.back() != n) {
        throw ShapeError("segmented_attention: segment bounds must start at 0 and end at " + std::to_string(n));
    }
    const std::size_t d = width / 3, dh = d / heads;
    const T sc = T(1) / std::sqrt(T(dh));
    const T* x = qkv.data().data();
    std::vector<T> out(n * d, T{0});
    std::vector<T> probs;  // per segment, per head: L x L
    for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
        const std::size_t b = bounds[s], len = bounds[s + 1] - b;
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
            const std::size_t base = probs.size();
            probs.resize(base + len * len);
            T* p = probs.data() + base;
            for (std::size_t i = 0; i < len; ++i) {
                const T* q = x + (b + i) * width + qo;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < len; ++j) {
                    const T* k = x + (b + j) * width + ko;
                    T dot{0};
                    for (std::size_t c = 0; c < dh; ++c) dot += q[c] * k[c];
                    p[i * len + j] = dot * sc;
                    mx = std::max(mx, p[i * len + j]);
                }
                T z{0};
                for (std::size_t j = 0; j < len; ++j) z += (p[i * len + j] = std::exp(p[i * len + j] - mx));
                T* o = out.data() + (b + i) * d + h * dh;
                for (std::size_t j = 0; j < len; ++j) {
                    p[i * len + j] /= z;
                    const T* v = x + (b + j) * width + vo;
                    for (std::size_t c = 0; c < dh; ++c) o[c] += p[i * len + j] * v[c];
                }
            }
        }
    }
    auto result = detail::make_output<T>({n, d}, std::move(out), qkv.requires_grad(), "segmented_attention");
    if (qkv.requires_grad()) {
        std::vector<std::size_t> bnd(bounds.begin(), bounds.end());
        tape.record(result, [qkv, heads, d, dh, sc, width, bnd = std::move(bnd), probs = std::move(probs)](
                                std::span<const T> gout, GradAccess<T>& acc) {
            auto g = acc.into(qkv);
            const T* x = qkv.data().data();
            std::size_t base = 0;
            std::vector<T> dp;
            for (std::size_t s = 0; s + 1 < bnd.size(); ++s) {
                const std::size_t b = bnd[s], len = bnd[s + 1] - b;
                dp.resize(len * len);
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
                    const T* p = probs.data() + base;
                    base += len * len;
                    for (std::size_t i = 0; i < len; ++i) {
                        const T* go = gout.data() + (b + i) * d + h * dh;
                        T rowdot{0};
                        for (std::size_t j = 0; j < len; ++j) {
                            const T* v = x + (b + j) * width + vo;
                            T* gv = g.data() + (b + j) * width + vo;
                            T acc_dp{0};
                            for (std::size_t c = 0; c < dh; ++c) {
                                acc_dp += go[c] * v[c];
                                gv[c] += p[i * len + j] * go[c];
                            }
                            dp[i * len + j] = acc_dp;
                            rowdot += acc_dp * p[i * len + j];
                        }
                        const T* q = x + (b + i) * width + qo;
                        T* gq = g.data() + (b + i) * width + qo;
                        for (std::size_t j = 0; j < len; ++j) {
                            const T ds = p[i * len + j] * (dp[i * len + j] - rowdot) * sc;
                            const T* k = x + (b + j) * width + ko;
                            T* gk = g.data() + (b + j) * width + ko;
                            for (std::size_t c = 0; c < dh; ++c) {
                                gq[c] += ds * k[c];
                                gk[c] += ds * q[c];
                            }
                        }
                    }
                }
            }
        });
    }
    return result;
}

}  // namespace kcb::num
