#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cal/checkpoint.hpp"
#include "cal/errors.hpp"
#include "cal/optim.hpp"

namespace cal {
namespace {

void set_grad(Tensor t, double g) {
    t.impl()->ensure_grad();
    for (double& x : t.grad()) x = g;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
    Tensor w = Tensor::from({1, 3}, {0.5, -1.0, 2.0}, true);
    const ParameterList params{{"w", w}};
    AdamState state;
    for (int step = 0; step < 10; ++step) {
        set_grad(w, 0.0);
        adam_step(state, params);
    }
    EXPECT_EQ(w.values()[0], 0.5);
    EXPECT_EQ(w.values()[1], -1.0);
    EXPECT_EQ(w.values()[2], 2.0);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
    for (double g : {3.0, -0.25, 1e-3}) {
        Tensor w = Tensor::from({1, 1}, {1.0}, true);
        const ParameterList params{{"w", w}};
        AdamState state;
        set_grad(w, g);
        adam_step(state, params);
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        const double expected = 1.0 - 1e-3 * g / (std::abs(g) + 1e-8);
        EXPECT_NEAR(w.values()[0], expected, 1e-15);
        EXPECT_NEAR(std::abs(w.values()[0] - 1.0), 1e-3, 1e-8);
    }
}

TEST(Adam, ConstantGradientKeepsUnitSteps) {
    Tensor w = Tensor::from({1, 1}, {0.0}, true);
    const ParameterList params{{"w", w}};
    AdamState state;
    for (int step = 1; step <= 5; ++step) {
        set_grad(w, 2.0);
        adam_step(state, params);
        EXPECT_NEAR(w.values()[0], -1e-3 * step, 1e-10);
    }
}

TEST(Adam, MatchesIndependentRecurrence) {
    Tensor w = Tensor::from({1, 1}, {0.3}, true);
    const ParameterList params{{"w", w}};
    AdamState state;
    const double grads[] = {0.5, -1.5, 0.25, 2.0};
    double m = 0, v = 0, x = 0.3;
    for (int t = 1; t <= 4; ++t) {
        const double g = grads[t - 1];
        set_grad(w, g);
        adam_step(state, params);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 1e-3 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        EXPECT_NEAR(w.values()[0], x, 1e-15);
    }
    EXPECT_EQ(state.step, 4u);
}

TEST(Adam, GroupsDoNotContaminateEachOther) {
    Tensor a = Tensor::from({1, 1}, {1.0}, true), b = Tensor::from({1, 1}, {1.0}, true);
    Tensor solo = Tensor::from({1, 1}, {1.0}, true);
    AdamState joint, alone;
    for (int step = 0; step < 3; ++step) {
        set_grad(a, 0.7);
        set_grad(b, -5.0);
        set_grad(solo, 0.7);
        adam_step(joint, {{"a", a}, {"b", b}});
        adam_step(alone, {{"a", solo}});
    }
    EXPECT_EQ(a.values()[0], solo.values()[0]);
}

TEST(Adam, GradientsAreClearedAfterStep) {
    Tensor w = Tensor::from({1, 1}, {1.0}, true);
    AdamState state;
    set_grad(w, 1.0);
    adam_step(state, {{"w", w}});
    EXPECT_FALSE(w.has_grad());
}

TEST(Adam, MissingGradientIsContractError) {
    Tensor w = Tensor::from({1, 1}, {1.0}, true);
    AdamState state;
    EXPECT_THROW(adam_step(state, {{"w", w}}), ContractError);
}

TEST(Init, GlorotBoundsAndZeroBias) {
    Rng rng(4);
    const Tensor w = glorot_uniform(20, 64, rng);
    const double limit = std::sqrt(6.0 / 84.0);
    double lo = 1, hi = -1;
    for (double x : w.values()) {
        EXPECT_LE(std::abs(x), limit);
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    EXPECT_LT(lo, -0.8 * limit);
    EXPECT_GT(hi, 0.8 * limit);
    EXPECT_TRUE(w.requires_grad());
    const Tensor b = zero_bias(7);
    EXPECT_EQ(b.shape(), (Shape{1, 7}));
    for (double x : b.values()) EXPECT_EQ(x, 0.0);
}

class CheckpointTest : public ::testing::Test {
protected:
    std::filesystem::path path = std::filesystem::temp_directory_path() / "cal_checkpoint_test.bin";
    void TearDown() override { std::filesystem::remove(path); }
};

TEST_F(CheckpointTest, RoundTripsNamesShapesAndBits) {
    Rng rng(5);
    const Tensor w = glorot_uniform(3, 4, rng);
    const Tensor b = Tensor::from({1, 2}, {-0.0, 1.0 / 3.0}, true);
    save_checkpoint(path, {{"layer.weight", w}, {"layer.bias", b}});
    const auto loaded = read_checkpoint(path);
    ASSERT_EQ(loaded.size(), 2u);
    EXPECT_EQ(loaded.at("layer.weight").shape(), w.shape());
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(loaded.at("layer.weight").values()[i], w.values()[i]);
    EXPECT_TRUE(std::signbit(loaded.at("layer.bias").values()[0]));

    Tensor w2 = Tensor::zeros({3, 4}, true), b2 = Tensor::zeros({1, 2}, true);
    load_checkpoint(path, {{"layer.weight", w2}, {"layer.bias", b2}});
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w2.values()[i], w.values()[i]);
}

TEST_F(CheckpointTest, StoresLittleEndianDoubles) {
    save_checkpoint(path, {{"x", Tensor::from({1, 1}, {1.0})}});
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
    ASSERT_GE(bytes.size(), 8u);
    // 1.0 = 0x3FF0000000000000, low byte first
    const std::vector<unsigned char> tail(bytes.end() - 8, bytes.end());
    EXPECT_EQ(tail, (std::vector<unsigned char>{0, 0, 0, 0, 0, 0, 0xF0, 0x3F}));
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "CALCKPT1");
}

TEST_F(CheckpointTest, ShapeOrNameMismatchIsRejected) {
    save_checkpoint(path, {{"w", Tensor::zeros({2, 2})}});
    EXPECT_ANY_THROW(load_checkpoint(path, {{"w", Tensor::zeros({2, 3})}}));
    EXPECT_ANY_THROW(load_checkpoint(path, {{"v", Tensor::zeros({2, 2})}}));
    EXPECT_THROW(read_checkpoint(path.string() + ".missing"), IoError);
}

}  // namespace
}  // namespace cal
