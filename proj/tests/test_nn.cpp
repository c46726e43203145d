#include <gtest/gtest.h>

#include <sstream>

#include "oracles.hpp"

using namespace vlearn;
using namespace vlearn::nn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& r, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = uniform(r, lo, hi);
    return t;
}

/// 0.5 * sum of squares of (output - target).
OutputLoss squared_loss(Tensor target) {
    return [target](const Tensor& out, Tensor& grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double d = out.data[i] - target.data[i];
            acc += 0.5 * d * d;
            grad.data[i] = d;
        }
        return acc;
    };
}

}  // namespace

TEST(Tensor, ShapeBookkeeping) {
    Tensor t({3, 4, 5});
    EXPECT_EQ(t.size(), 60u);
    EXPECT_EQ(t.rows(), 3u);
    EXPECT_EQ(t.cols(), 20u);
    EXPECT_EQ(t.shape_string(), "[3,4,5]");
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Layers, InvalidSpecsAreRejected) {
    EXPECT_THROW(Sequential(std::vector<LayerSpec>{}), ConfigError);
    EXPECT_THROW(Sequential({LayerSpec::dense(0, 3)}), ConfigError);
    EXPECT_THROW(Sequential({LayerSpec::dense(4, 3), LayerSpec::dense(4, 2)}), ShapeError);
    EXPECT_THROW(Sequential({LayerSpec::dense(4, 3), LayerSpec::dropout(1.0)}), ConfigError);
    EXPECT_THROW(Sequential({LayerSpec::conv2d(1, 1, 5, 1, 0, 3, 3)}), ConfigError);
}

TEST(Layers, ForwardRejectsWrongInputWidthNamingTheLayer) {
    Sequential net({LayerSpec::dense(4, 3), LayerSpec::relu()});
    try {
        net.forward(Tensor({2, 5}), Mode::eval);
        FAIL();
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
    }
}

TEST(Layers, DenseComputesAffineMap) {
    Sequential net({LayerSpec::dense(2, 2)});
    net.weight(0).value.data = {1, 2, 3, 4};
    net.bias(0).value.data = {0.5, -0.5};
    const Tensor y = net.forward(Tensor({1, 2}, {1.0, -1.0}), Mode::eval);
    EXPECT_DOUBLE_EQ(y.data[0], 1 - 2 + 0.5);
    EXPECT_DOUBLE_EQ(y.data[1], 3 - 4 - 0.5);
}

TEST(Layers, ConvImpulseWithOnesKernelGivesOnesBlock) {
    Sequential net({LayerSpec::conv2d(1, 1, 3, 1, 1, 7, 7)});
    net.weight(0).value.fill(1.0);
    net.bias(0).value.fill(0.0);
    Tensor x({1, 49});
    x.data[3 * 7 + 3] = 1.0;
    const Tensor y = net.forward(x, Mode::eval);
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 7; ++c)
            EXPECT_EQ(y.data[static_cast<std::size_t>(r * 7 + c)], (std::abs(r - 3) <= 1 && std::abs(c - 3) <= 1) ? 1.0 : 0.0);
}

TEST(Layers, ConvMatchesNaiveLoopsExactly) {
    Rng r = make_rng(31, 1);
    struct Case {
        std::size_t cin, cout, k, stride, pad, h, w;
    };
    for (const Case c : {Case{1, 3, 3, 1, 1, 9, 11}, Case{2, 4, 3, 2, 1, 12, 17}, Case{3, 2, 5, 2, 0, 13, 10},
                         Case{2, 2, 1, 1, 0, 5, 6}}) {
        Sequential net({LayerSpec::conv2d(c.cin, c.cout, c.k, c.stride, c.pad, c.h, c.w)});
        net.initialize(r());
        for (auto& b : net.bias(0).value.data) b = uniform(r, -1, 1);
        const Tensor x = random_tensor({3, c.cin * c.h * c.w}, r);
        const Tensor y = net.forward(x, Mode::eval);
        for (std::size_t i = 0; i < 3; ++i) {
            const std::vector<double> in(x.row(i), x.row(i) + x.cols());
            const auto expect = oracle::conv2d(in, c.cin, c.h, c.w, net.weight(0).value.data, net.bias(0).value.data,
                                               c.cout, c.k, c.stride, c.pad);
            ASSERT_EQ(expect.size(), y.cols());
            for (std::size_t j = 0; j < expect.size(); ++j) EXPECT_NEAR(y.row(i)[j], expect[j], 1e-12);
        }
    }
}

TEST(Layers, ActivationsAndDropoutModes) {
    Sequential net({LayerSpec::dense(3, 3), LayerSpec::relu(), LayerSpec::dropout(0.5), LayerSpec::sigmoid()});
    net.initialize(1);
    Rng r = make_rng(32, 1);
    const Tensor x = random_tensor({4, 3}, r);
    const Tensor a = net.forward(x, Mode::eval), b = net.forward(x, Mode::eval);
    EXPECT_EQ(a, b);
    for (double v : a.data) EXPECT_TRUE(v > 0.0 && v < 1.0);
    EXPECT_THROW(net.forward(x, Mode::train), Error);  // dropout needs an rng
}

TEST(Layers, InvertedDropoutPreservesTheMean) {
    Sequential net({LayerSpec::dropout(0.3, 1)});
    Tensor x({20000, 1}, 1.0);
    Rng r = make_rng(33, 1);
    const Tensor y = net.forward(x, Mode::train, &r);
    double mean = 0.0;
    std::size_t zeros = 0;
    for (double v : y.data) {
        mean += v;
        zeros += v == 0.0;
        if (v != 0.0) EXPECT_DOUBLE_EQ(v, 1.0 / 0.7);
    }
    EXPECT_NEAR(mean / 20000.0, 1.0, 0.02);
    EXPECT_NEAR(static_cast<double>(zeros) / 20000.0, 0.3, 0.02);
}

TEST(Init, GlorotBoundsAndZeroBias) {
    EXPECT_THROW(Sequential({LayerSpec::dense(30, 20), LayerSpec::conv2d(2, 4, 3, 1, 1, 5, 5)}), ShapeError);
    Sequential a({LayerSpec::dense(30, 20)}), conv({LayerSpec::conv2d(2, 4, 3, 1, 1, 5, 5)});
    a.initialize(7);
    conv.initialize(7);
    const double la = std::sqrt(6.0 / 50.0), lc = std::sqrt(6.0 / (18.0 + 36.0));
    for (double w : a.weight(0).value.data) EXPECT_LE(std::abs(w), la);
    for (double w : conv.weight(0).value.data) EXPECT_LE(std::abs(w), lc);
    for (double b : a.bias(0).value.data) EXPECT_EQ(b, 0.0);
    Sequential again({LayerSpec::dense(30, 20)});
    again.initialize(7);
    EXPECT_EQ(again.weight(0).value, a.weight(0).value);
}

TEST(GradCheck, DenseStackWithEveryActivation) {
    Rng r = make_rng(34, 1);
    Sequential net({LayerSpec::dense(5, 7), LayerSpec::sigmoid(), LayerSpec::dense(7, 6), LayerSpec::relu(),
                    LayerSpec::dropout(0.4), LayerSpec::dense(6, 3)});
    net.initialize(3);
    for (auto& b : net.bias(0).value.data) b = uniform(r, -0.5, 0.5);
    const Tensor x = random_tensor({4, 5}, r);
    EXPECT_LT(grad_check(net, squared_loss(random_tensor({4, 3}, r)), x, 1e-5, 9), 1e-4);
}

TEST(GradCheck, ConvStack) {
    Rng r = make_rng(35, 1);
    Sequential net({LayerSpec::conv2d(1, 3, 3, 2, 1, 8, 10), LayerSpec::relu(),
                    LayerSpec::conv2d(3, 2, 3, 1, 1, 4, 5), LayerSpec::sigmoid(), LayerSpec::dense(40, 2)});
    net.initialize(4);
    const Tensor x = random_tensor({3, 80}, r);
    EXPECT_LT(grad_check(net, squared_loss(random_tensor({3, 2}, r)), x, 1e-5), 1e-4);
}

TEST(GradCheck, InputGradientMatchesFiniteDifferences) {
    Rng r = make_rng(36, 1);
    Sequential net({LayerSpec::conv2d(2, 2, 3, 1, 1, 4, 4), LayerSpec::sigmoid(), LayerSpec::dense(32, 3)});
    net.initialize(5);
    Tensor x = random_tensor({2, 32}, r);
    const auto loss = squared_loss(random_tensor({2, 3}, r));
    ForwardCache cache;
    const Tensor y = net.forward(x, Mode::train, nullptr, &cache);
    Tensor g(y.shape);
    loss(y, g);
    const Tensor dx = net.backward(cache, g, true);
    std::vector<double*> ptrs;
    for (auto& v : x.data) ptrs.push_back(&v);
    const double err = check_gradients(ptrs, dx.data, [&] { return evaluate_loss(net, loss, x); }, 1e-5);
    EXPECT_LT(err, 1e-4);
}

TEST(GradCheck, CorruptedGradientIsDetected) {
    Rng r = make_rng(37, 1);
    Sequential net({LayerSpec::dense(4, 5), LayerSpec::relu(), LayerSpec::dense(5, 2)});
    net.initialize(6);
    const Tensor x = random_tensor({3, 4}, r);
    const auto loss = squared_loss(random_tensor({3, 2}, r));
    auto analytic = analytic_gradients(net, loss, x);
    std::size_t worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        if (std::abs(analytic[i]) > std::abs(analytic[worst])) worst = i;
    analytic[worst] *= -1.0;
    const auto ptrs = parameter_pointers(net.params());
    EXPECT_GT(check_gradients(ptrs, analytic, [&] { return evaluate_loss(net, loss, x); }, 1e-5), 0.3);
}

TEST(Backward, GradientsDoNotDependOnBufferPlacement) {
    Rng r = make_rng(39, 1);
    Sequential net({LayerSpec::conv2d(1, 3, 3, 2, 1, 9, 13), LayerSpec::relu(), LayerSpec::dense(105, 17),
                    LayerSpec::sigmoid(), LayerSpec::dense(17, 3)});
    net.initialize(8);
    const Tensor x = random_tensor({5, 117}, r);
    const auto loss = squared_loss(random_tensor({5, 3}, r));
    const auto reference = analytic_gradients(net, loss, x);
    std::vector<std::vector<double>> spacers;
    for (int trial = 1; trial < 8; ++trial) {
        spacers.emplace_back(static_cast<std::size_t>(trial));  // shifts where the next buffers land
        Sequential copy = net;
        const Tensor shifted = x;
        EXPECT_EQ(analytic_gradients(copy, loss, shifted), reference) << "trial " << trial;
    }
}

TEST(Backward, RequiresAMatchingCache) {
    Sequential net({LayerSpec::dense(2, 2)});
    ForwardCache empty;
    EXPECT_THROW(net.backward(empty, Tensor({1, 2})), Error);
    ForwardCache cache;
    net.forward(Tensor({1, 2}), Mode::train, nullptr, &cache);
    EXPECT_THROW(net.backward(cache, Tensor({1, 3})), ShapeError);
}

TEST(Adam, MatchesReferenceTrajectory) {
    Rng r = make_rng(38, 1);
    Sequential net({LayerSpec::dense(3, 4), LayerSpec::dense(4, 2)});
    net.initialize(2);
    AdamConfig cfg;
    cfg.lr = 0.01;
    std::vector<double> ref_w;
    for (const auto& p : net.params().items) ref_w.insert(ref_w.end(), p.value.data.begin(), p.value.data.end());
    oracle::ReferenceAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps, {}, {}, 0};
    for (int step = 1; step <= 10; ++step) {
        std::vector<double> g;
        for (auto& p : net.params().items)
            for (auto& v : p.grad.data) {
                v = uniform(r, -1, 1) * (step % 3 == 0 ? 1e-3 : 1.0);
                g.push_back(v);
            }
        adam_step(net.params(), cfg, step);
        ref.step(ref_w, g);
        std::size_t i = 0;
        for (const auto& p : net.params().items)
            for (double v : p.value.data) EXPECT_NEAR(v, ref_w[i++], 1e-10);
    }
    EXPECT_THROW(adam_step(net.params(), cfg, 0), ConfigError);
}

TEST(Adam, FirstStepMovesEachWeightByLearningRate) {
    Sequential net({LayerSpec::dense(2, 2)});
    net.initialize(1);
    const auto before = net.weight(0).value;
    net.weight(0).grad.data = {3.0, -0.2, 1e-3, -50.0};
    adam_step(net.params(), {}, 1);
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_NEAR(std::abs(net.weight(0).value.data[i] - before.data[i]), 1e-3, 1e-8);
}

TEST(Checkpoint, RoundTripIsExact) {
    Sequential net({LayerSpec::conv2d(1, 2, 3, 2, 1, 6, 8), LayerSpec::relu(), LayerSpec::dense(24, 5),
                    LayerSpec::dropout(0.5), LayerSpec::dense(5, 2), LayerSpec::sigmoid()});
    net.initialize(11);
    Checkpoint c;
    c.metadata["kind"] = "test";
    c.metadata["note"] = "x = y";
    c.networks.emplace_back("net", net);
    std::stringstream s;
    write_checkpoint(s, c);
    const std::string bytes = s.str();
    EXPECT_EQ(bytes.substr(0, 8), "VLNNCKPT");
    const Checkpoint back = read_checkpoint(s);
    EXPECT_EQ(back.metadata, c.metadata);
    const Sequential& n2 = back.network("net");
    EXPECT_EQ(n2.layers(), net.layers());
    for (std::size_t i = 0; i < net.params().items.size(); ++i)
        EXPECT_EQ(n2.params().items[i].value, net.params().items[i].value);
    std::stringstream again;
    write_checkpoint(again, back);
    EXPECT_EQ(again.str(), bytes);
    EXPECT_THROW(back.network("other"), FormatError);
    EXPECT_THROW(back.meta("missing"), FormatError);
}

TEST(Checkpoint, RejectsDamagedStreams) {
    Sequential net({LayerSpec::dense(3, 2)});
    Checkpoint c;
    c.networks.emplace_back("n", net);
    std::stringstream s;
    write_checkpoint(s, c);
    const std::string good = s.str();
    std::istringstream magic("NOTACKPT" + good.substr(8));
    EXPECT_THROW(read_checkpoint(magic), FormatError);
    std::istringstream truncated(good.substr(0, good.size() - 5));
    EXPECT_THROW(read_checkpoint(truncated), FormatError);
    std::string version = good;
    version[8] = 9;
    std::istringstream bad_version(version);
    EXPECT_THROW(read_checkpoint(bad_version), FormatError);
}
