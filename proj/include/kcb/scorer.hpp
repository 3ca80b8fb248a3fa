#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "kcb/encoder.hpp"
#include "kcb/error.hpp"
#include "kcb/num/ops.hpp"

namespace kcb::score {

using enc::TokenEmbeddingMatrix;

struct RelevanceScore {
    double value = 0.0;
    std::size_t contributing = 0;  // unmasked query rows summed over
};

struct ScoredDoc {
    std::string doc_id;
    RelevanceScore score;
};

namespace detail {

using RowMatD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline RowMatD unmasked_rows(const TokenEmbeddingMatrix& m) {
    std::size_t count = 0;
    for (bool b : m.mask) count += b;
    RowMatD out(count, m.dim);
    std::size_t r = 0;
    for (std::size_t i = 0; i < m.length(); ++i) {
        if (!m.mask[i]) continue;
        for (std::size_t j = 0; j < m.dim; ++j) out(r, j) = m.row(i)[j];
        ++r;
    }
    return out;
}

inline void check_unit_norms([[maybe_unused]] const TokenEmbeddingMatrix& m) {
#ifndef NDEBUG
    for (std::size_t i = 0; i < m.length(); ++i) {
        double ss = 0;
        for (std::size_t j = 0; j < m.dim; ++j) ss += double(m.row(i)[j]) * m.row(i)[j];
        assert(std::abs(std::sqrt(ss) - 1.0) < 1e-3 && "MaxSim expects unit-norm rows");
    }
#endif
}

}  // namespace detail

// s(q, d) = sum over unmasked query rows of the max dot product against
// unmasked document rows. Rows are expected to be unit norm already.
inline RelevanceScore max_sim(const TokenEmbeddingMatrix& q, const TokenEmbeddingMatrix& d) {
    if (q.dim != d.dim) {
        throw ShapeError("max_sim: query dim " + std::to_string(q.dim) + " vs document dim " + std::to_string(d.dim));
    }
    if (q.mask.size() * q.dim != q.rows.size() || d.mask.size() * d.dim != d.rows.size()) {
        throw ShapeError("max_sim: mask length does not match row count");
    }
    detail::check_unit_norms(q);
    detail::check_unit_norms(d);
    const auto qm = detail::unmasked_rows(q);
    const auto dm = detail::unmasked_rows(d);
    if (qm.rows() == 0) throw EmptyAfterFilter("query has no scoring tokens");
    if (dm.rows() == 0) throw EmptyAfterFilter("document '" + d.doc_id + "' has no scoring tokens");
    const detail::RowMatD sims = qm * dm.transpose();
    double total = 0.0;
    for (Eigen::Index i = 0; i < sims.rows(); ++i) total += sims.row(i).maxCoeff();
    return {total, static_cast<std::size_t>(qm.rows())};
}

inline std::vector<ScoredDoc> score_corpus(const TokenEmbeddingMatrix& q, const std::vector<TokenEmbeddingMatrix>& docs) {
    std::vector<ScoredDoc> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
        try {
            out.push_back({d.doc_id, max_sim(q, d)});
        } catch (const EmptyAfterFilter& e) {
            throw EmptyAfterFilter("doc '" + d.doc_id + "': " + e.what());
        } catch (const ShapeError& e) {
            throw ShapeError("doc '" + d.doc_id + "': " + e.what());
        }
    }
    return out;
}

// Highest scores first; equal scores in ascending doc_id order.
inline std::vector<ScoredDoc> top_k(std::vector<ScoredDoc> scores, std::size_t k) {
    if (k < 1) throw ConfigError("top_k: k must be >= 1");
    auto better = [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score.value != b.score.value) return a.score.value > b.score.value;
        return a.doc_id < b.doc_id;
    };
    const std::size_t keep = std::min(k, scores.size());
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(keep), scores.end(), better);
    scores.resize(keep);
    return scores;
}

// Differentiable MaxSim over encoder outputs. The gradient flows through the
// arg-max pair of each query row.
template <class T>
num::Tensor<T> max_sim(num::Tape<T>& tape, const num::Tensor<T>& q, const std::vector<bool>& q_mask,
                       const num::Tensor<T>& d, const std::vector<bool>& d_mask) {
    num::detail::require_matrix(q, "max_sim");
    num::detail::require_matrix(d, "max_sim");
    const std::size_t dim = q.shape()[1];
    if (d.shape()[1] != dim) {
        throw ShapeError("max_sim: " + num::shape_str(q.shape()) + " vs " + num::shape_str(d.shape()));
    }
    if (q_mask.size() != q.shape()[0] || d_mask.size() != d.shape()[0]) {
        throw ShapeError("max_sim: mask length does not match row count");
    }
    if (std::none_of(q_mask.begin(), q_mask.end(), [](bool b) { return b; })) {
        throw EmptyAfterFilter("query has no scoring tokens");
    }
    if (std::none_of(d_mask.begin(), d_mask.end(), [](bool b) { return b; })) {
        throw EmptyAfterFilter("document has no scoring tokens");
    }
    std::vector<std::pair<std::size_t, std::size_t>> argmax;
    T total{0};
    for (std::size_t i = 0; i < q_mask.size(); ++i) {
        if (!q_mask[i]) continue;
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < d_mask.size(); ++j) {
            if (!d_mask[j]) continue;
            T dot{0};
            for (std::size_t c = 0; c < dim; ++c) dot += q.row(i)[c] * d.row(j)[c];
            if (dot > best) {
                best = dot;
                best_j = j;
            }
        }
        total += best;
        argmax.emplace_back(i, best_j);
    }
    const bool rg = num::Tape<T>::any_requires_grad({&q, &d});
    auto result = num::detail::make_output<T>({}, std::vector<T>{total}, rg, "max_sim");
    if (rg) {
        tape.record(result, [q, d, dim, argmax = std::move(argmax)](std::span<const T> gout,
                                                                   num::GradAccess<T>& acc) {
            auto gq = acc.into(q);
            auto gd = acc.into(d);
            for (auto [i, j] : argmax) {
                for (std::size_t c = 0; c < dim; ++c) {
                    if (!gq.empty()) gq[i * dim + c] += gout[0] * d.row(j)[c];
                    if (!gd.empty()) gd[j * dim + c] += gout[0] * q.row(i)[c];
                }
            }
        });
    }
    return result;
}

}  // namespace kcb::score
