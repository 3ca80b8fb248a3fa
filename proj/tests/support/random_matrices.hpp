#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "kcb/encoder.hpp"

namespace kcbtest {

// Random unit-row matrix with at least one unmasked row past the role row.
inline kcb::enc::TokenEmbeddingMatrix random_embedding(std::mt19937_64& rng, std::size_t length, std::size_t dim,
                                                       double keep_prob = 0.7) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::bernoulli_distribution keep(keep_prob);
    kcb::enc::TokenEmbeddingMatrix m;
    m.dim = dim;
    m.rows.resize(length * dim);
    m.mask.resize(length);
    for (std::size_t i = 0; i < length; ++i) {
        std::vector<double> v(dim);
        double ss = 0;
        for (auto& x : v) {
            x = n(rng);
            ss += x * x;
        }
        for (std::size_t j = 0; j < dim; ++j) m.rows[i * dim + j] = static_cast<float>(v[j] / std::sqrt(ss));
        m.mask[i] = keep(rng);
    }
    if (std::none_of(m.mask.begin(), m.mask.end(), [](bool b) { return b; })) {
        m.mask[std::uniform_int_distribution<std::size_t>(0, length - 1)(rng)] = true;
    }
    return m;
}

// The reference: plain double loop over every (query row, doc row) pair.
inline double brute_force_max_sim(const kcb::enc::TokenEmbeddingMatrix& q, const kcb::enc::TokenEmbeddingMatrix& d) {
    double total = 0;
    for (std::size_t i = 0; i < q.length(); ++i) {
        if (!q.mask[i]) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.length(); ++j) {
            if (!d.mask[j]) continue;
            double dot = 0;
            for (std::size_t c = 0; c < q.dim; ++c) dot += double(q.rows[i * q.dim + c]) * double(d.rows[j * d.dim + c]);
            best = std::max(best, dot);
        }
        total += best;
    }
    return total;
}

inline kcb::enc::TokenEmbeddingMatrix permute_rows(const kcb::enc::TokenEmbeddingMatrix& m, std::mt19937_64& rng) {
    std::vector<std::size_t> order(m.length());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    auto out = m;
    for (std::size_t i = 0; i < order.size(); ++i) {
        std::copy_n(m.rows.begin() + order[i] * m.dim, m.dim, out.rows.begin() + i * m.dim);
        out.mask[i] = m.mask[order[i]];
    }
    return out;
}

}  // namespace kcbtest
