#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "kcb/num/checkpoint.hpp"
#include "kcb/num/ops.hpp"
#include "support/finite_diff.hpp"

using namespace kcb;
using namespace kcb::num;
using kcbtest::central_diff;
using kcbtest::relative_error;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = true) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = n(rng);
    return Tensor<double>(std::move(shape), std::move(v), requires_grad);
}

// Checks the tape gradient of `f` with respect to each input against
// central differences.
double max_grad_error(std::vector<Tensor<double>> inputs,
                      const std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>& f) {
    Tape<double> tape;
    auto loss = f(tape, inputs);
    auto grads = tape.backward(loss);
    double worst = 0;
    for (auto& in : inputs) {
        auto fd = central_diff(in.mutable_data(), [&] {
            Tape<double> t;
            return f(t, inputs).item();
        });
        auto tape_grad = grads.grad_of(in);
        worst = std::max(worst, relative_error(tape_grad, fd));
    }
    return worst;
}

// A fixed random projection turns any tensor into a generic scalar.
Tensor<double> project_to_scalar(Tape<double>& tape, const Tensor<double>& x, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    auto w = random_tensor(x.shape(), rng, false);
    return sum(tape, mul(tape, x, w));
}

}  // namespace

TEST(Matmul, IdentityAndHandArithmetic) {
    Tape<double> tape;
    Tensor<double> eye({2, 2}, {1, 0, 0, 1});
    Tensor<double> x({2, 3}, {1, 2, 3, 4, 5, 6});
    auto y = matmul(tape, eye, x);
    EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), std::vector<double>(x.data().begin(), x.data().end()));

    Tensor<double> a({2, 2}, {1, 2, 3, 4});
    Tensor<double> b({2, 1}, {1, 1});
    auto c = matmul(tape, a, b);
    EXPECT_EQ(c.shape(), (Shape{2, 1}));
    EXPECT_DOUBLE_EQ(c.data()[0], 3);
    EXPECT_DOUBLE_EQ(c.data()[1], 7);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
    Tape<double> tape;
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({4, 2});
    try {
        matmul(tape, a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
    }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
    std::mt19937_64 rng(1);
    auto err = max_grad_error({random_tensor({5, 7}, rng), random_tensor({7, 3}, rng)},
                              [](Tape<double>& t, const auto& in) { return sum(t, matmul(t, in[0], in[1])); });
    EXPECT_LT(err, 1e-6);
}

TEST(Softmax, UniformAndClosedForm) {
    Tape<double> tape;
    auto u = softmax_rows(tape, Tensor<double>({1, 4}, {2, 2, 2, 2}));
    for (double v : u.data()) EXPECT_NEAR(v, 0.25, 1e-12);
    auto p = softmax_rows(tape, Tensor<double>({1, 2}, {0, std::log(3.0)}));
    EXPECT_NEAR(p.data()[0], 0.25, 1e-12);
    EXPECT_NEAR(p.data()[1], 0.75, 1e-12);
}

TEST(Softmax, RowsSumToOneAndGradientChecks) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        Tape<double> tape;
        auto x = random_tensor({4, 6}, rng);
        for (auto& v : x.mutable_data()) v *= 10;
        auto p = softmax_rows(tape, x);
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 6; ++j) {
                EXPECT_GE(p.data()[i * 6 + j], 0.0);
                s += p.data()[i * 6 + j];
            }
            EXPECT_NEAR(s, 1.0, 1e-6);
        }
    }
    auto err = max_grad_error({random_tensor({3, 5}, rng)},
                              [](Tape<double>& t, const auto& in) { return project_to_scalar(t, softmax_rows(t, in[0])); });
    EXPECT_LT(err, 1e-6);
}

TEST(LayerNorm, ConstantRowGivesBiasAndNormalizedRowIsKept) {
    Tape<double> tape;
    Tensor<double> gain({3}, {2, 3, 4});
    Tensor<double> bias({3}, {0.5, -1, 7});
    auto y = layer_norm(tape, Tensor<double>({1, 3}, {5, 5, 5}), gain, bias);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(y.data()[j], bias.data()[j]);

    auto z = layer_norm(tape, Tensor<double>({1, 2}, {1, -1}), Tensor<double>({2}, {1, 1}), Tensor<double>({2}, {0, 0}));
    // eps = 1e-5 perturbs the unit variance slightly.
    EXPECT_NEAR(z.data()[0], 1.0, 1e-5);
    EXPECT_NEAR(z.data()[1], -1.0, 1e-5);
}

TEST(LayerNorm, GradientChecks) {
    std::mt19937_64 rng(3);
    auto err = max_grad_error({random_tensor({4, 5}, rng), random_tensor({5}, rng), random_tensor({5}, rng)},
                              [](Tape<double>& t, const auto& in) {
                                  return project_to_scalar(t, layer_norm(t, in[0], in[1], in[2]));
                              });
    EXPECT_LT(err, 1e-6);
}

TEST(CrossEntropy, SaturatedAndUniform) {
    Tape<double> tape;
    const std::size_t t0[] = {0};
    EXPECT_LT(cross_entropy(tape, Tensor<double>({1, 2}, {10, -10}), t0).item(), 1e-4);
    const std::size_t t3[] = {3};
    EXPECT_NEAR(cross_entropy(tape, Tensor<double>({1, 4}, {0.3, 0.3, 0.3, 0.3}), t3).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, OutOfRangeTargetThrows) {
    Tape<double> tape;
    const std::size_t bad[] = {2};
    EXPECT_THROW(cross_entropy(tape, Tensor<double>({1, 2}, {0, 0}), bad), IndexError);
}

TEST(CrossEntropy, GradientChecks) {
    std::mt19937_64 rng(4);
    auto err = max_grad_error({random_tensor({3, 4}, rng)}, [](Tape<double>& t, const auto& in) {
        const std::size_t targets[] = {1, 0, 3};
        return cross_entropy(t, in[0], targets);
    });
    EXPECT_LT(err, 1e-6);
}

TEST(BinaryCrossEntropy, GradientChecks) {
    std::mt19937_64 rng(5);
    auto err = max_grad_error({random_tensor({2, 5}, rng)}, [](Tape<double>& t, const auto& in) {
        const std::vector<double> targets = {1, 0, 0, 1, 0, 0, 0, 1, 1, 0};
        return bce_with_logits(t, in[0], targets);
    });
    EXPECT_LT(err, 1e-6);
}

TEST(L2Normalize, UnitRowsAndGradient) {
    std::mt19937_64 rng(6);
    Tape<double> tape;
    auto x = random_tensor({6, 4}, rng);
    auto y = l2_normalize_rows(tape, x);
    for (std::size_t i = 0; i < 6; ++i) {
        double ss = 0;
        for (std::size_t j = 0; j < 4; ++j) ss += y.data()[i * 4 + j] * y.data()[i * 4 + j];
        EXPECT_NEAR(std::sqrt(ss), 1.0, 1e-6);
    }
    auto err = max_grad_error({random_tensor({3, 4}, rng)},
                              [](Tape<double>& t, const auto& in) { return project_to_scalar(t, l2_normalize_rows(t, in[0])); });
    EXPECT_LT(err, 1e-6);
}

TEST(Elementwise, GeluAddMulConcatGatherGradients) {
    std::mt19937_64 rng(7);
    EXPECT_LT(max_grad_error({random_tensor({3, 4}, rng)},
                             [](Tape<double>& t, const auto& in) { return project_to_scalar(t, gelu(t, in[0])); }),
              1e-4);
    EXPECT_LT(max_grad_error({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                             [](Tape<double>& t, const auto& in) {
                                 return project_to_scalar(t, mul(t, add(t, in[0], in[1]), in[1]));
                             }),
              1e-4);
    EXPECT_LT(max_grad_error({random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)},
                             [](Tape<double>& t, const auto& in) {
                                 return project_to_scalar(t, concat_cols(t, std::vector<Tensor<double>>{in[0], in[1]}));
                             }),
              1e-4);
    EXPECT_LT(max_grad_error({random_tensor({2, 3}, rng), random_tensor({1, 3}, rng)},
                             [](Tape<double>& t, const auto& in) {
                                 return project_to_scalar(t, concat_rows(t, std::vector<Tensor<double>>{in[0], in[1]}));
                             }),
              1e-4);
    EXPECT_LT(max_grad_error({random_tensor({5, 3}, rng)},
                             [](Tape<double>& t, const auto& in) {
                                 const std::size_t ids[] = {4, 0, 4, 2};
                                 return project_to_scalar(t, gather_rows(t, in[0], ids));
                             }),
              1e-4);
    EXPECT_LT(max_grad_error({random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                             [](Tape<double>& t, const auto& in) {
                                 return project_to_scalar(t, add_rowwise(t, in[0], in[1]));
                             }),
              1e-4);
}

TEST(Attention, GradientChecksAndSegmentLocality) {
    std::mt19937_64 rng(8);
    const std::size_t bounds[] = {0, 2, 5, 6};
    EXPECT_LT(max_grad_error({random_tensor({6, 12}, rng)},
                             [&](Tape<double>& t, const auto& in) {
                                 return project_to_scalar(t, segmented_attention(t, in[0], 2, bounds));
                             }),
              1e-4);

    // Changing rows of one segment leaves the other segments' outputs alone.
    auto x = random_tensor({6, 12}, rng, false);
    Tape<double> tape;
    auto y1 = segmented_attention(tape, x, 2, bounds);
    std::vector<double> v(x.data().begin(), x.data().end());
    for (std::size_t j = 0; j < 12; ++j) v[3 * 12 + j] += 1.0;
    auto y2 = segmented_attention(tape, Tensor<double>(x.shape(), v), 2, bounds);
    for (std::size_t r : {0, 1, 5})
        for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(y1.data()[r * 4 + j], y2.data()[r * 4 + j]);
}

TEST(Backward, SumAndSquare) {
    Tape<double> tape;
    Tensor<double> x({3}, {0.5, -2, 7}, true);
    auto g = tape.backward(sum(tape, x)).grad_of(x);
    EXPECT_EQ(g, (std::vector<double>{1, 1, 1}));

    Tape<double> tape2;
    Tensor<double> y({1}, {2}, true);
    auto g2 = tape2.backward(sum(tape2, mul(tape2, y, y))).grad_of(y);
    EXPECT_DOUBLE_EQ(g2[0], 4.0);
}

TEST(Backward, UnreachableParameterGetsZeros) {
    Tape<double> tape;
    Tensor<double> x({2}, {1, 2}, true);
    Tensor<double> unused({3}, {1, 2, 3}, true);
    auto grads = tape.backward(sum(tape, x));
    EXPECT_EQ(grads.grad_of(unused), (std::vector<double>{0, 0, 0}));
}

TEST(Backward, NonScalarLossIsShapeError) {
    Tape<double> tape;
    Tensor<double> x({2}, {1, 2}, true);
    auto y = scale(tape, x, 2.0);
    EXPECT_THROW(tape.backward(y), ShapeError);
}

TEST(Backward, SecondBackwardOnSameTapeThrows) {
    Tape<double> tape;
    Tensor<double> x({2}, {1, 2}, true);
    auto loss = sum(tape, x);
    tape.backward(loss);
    EXPECT_THROW(tape.backward(loss), std::logic_error);
}

TEST(FiniteChecks, NonFiniteOutputIsReported) {
    const bool saved = finite_checks();
    finite_checks() = true;
    Tape<double> tape;
    Tensor<double> x({1, 2}, {1e308, 1e308});
    EXPECT_THROW(scale(tape, x, 10.0), NumericalError);
    finite_checks() = saved;
}

TEST(Dropout, EvalIsIdentityAndTrainingScalesKeptUnits) {
    std::mt19937_64 rng(9);
    Tape<float> tape;
    Tensor<float> x({1, 1000}, std::vector<float>(1000, 1.0f));
    auto same = dropout(tape, x, 0.5, false, rng);
    EXPECT_EQ(same.id(), x.id());
    auto y = dropout(tape, x, 0.5, true, rng);
    for (float v : y.data()) EXPECT_TRUE(v == 0.0f || v == 2.0f);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<float> u(-3, 3);
    std::vector<NamedBlock> blocks;
    for (int b = 0; b < 4; ++b) {
        NamedBlock nb{"block" + std::to_string(b), {static_cast<std::size_t>(b + 1), 3}, {}};
        for (std::size_t i = 0; i < numel(nb.shape); ++i) nb.values.push_back(u(rng));
        blocks.push_back(nb);
    }
    blocks.push_back({"scalar", {}, {1.5f}});
    EXPECT_EQ(decode_checkpoint(encode_checkpoint(blocks)), blocks);
}

TEST(Checkpoint, CorruptionIsFormatError) {
    std::vector<NamedBlock> blocks{{"w", {2, 2}, {1, 2, 3, 4}}};
    auto bytes = encode_checkpoint(blocks);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
    auto bad_version = bytes;
    bad_version[4] = 9;
    EXPECT_THROW(decode_checkpoint(bad_version), FormatError);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
}
