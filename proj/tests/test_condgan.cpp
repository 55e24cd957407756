#include <gtest/gtest.h>

#include <cmath>

#include "compgen/condgan.hpp"
#include "gradcheck.hpp"

using namespace compgen;

namespace {

struct Batch {
    Tensor x, y, z;
    std::vector<double> eps;
};

Batch batch(const CondGanModel& m, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Batch b{Tensor(n, m.feature_dim), standard_normal(rng, n, 1), standard_normal(rng, n, m.latent_dim), {}};
    for (double& v : b.x.values()) {
        v = rng.uniform();
    }
    for (std::size_t i = 0; i < n; ++i) {
        b.eps.push_back(rng.uniform());
    }
    return b;
}

bool all_zero(const Tensor& t) {
    for (double v : t.values()) {
        if (v != 0.0) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST(CondGan, Architecture) {
    const CondGanModel m = make_condgan(7, 10, 1);
    EXPECT_EQ(m.generator_spec.widths(), (std::vector<std::size_t>{11, 60, 30, 7}));
    EXPECT_EQ(m.critic_spec.widths(), (std::vector<std::size_t>{7, 30, 60, 2}));
    EXPECT_EQ(m.generator_spec.output_activation, Activation::Sigmoid);
    const Tensor g = gan_generate(m, -2.0, 5, 3);
    EXPECT_EQ(g.shape(), (Shape{5, 7}));
    EXPECT_EQ(predict_property(m, g).size(), 5u);
}

TEST(CondGan, CriticLossLeavesGeneratorUntouched) {
    const CondGanModel m = make_condgan(4, 3, 2);
    const Batch b = batch(m, 8, 1);
    ad::Tape t;
    const MlpBinding gen = bind(t, m.generator, true);
    const MlpBinding critic = bind(t, m.critic, true);
    const auto loss = build_critic_loss(t, m, gen, critic, b.x, b.y, b.z, b.eps, GanTrainConfig{});
    for (const Tensor& g : t.backward(loss.total, gen.nodes())) {
        EXPECT_TRUE(all_zero(g));
    }
    bool any = false;
    for (const Tensor& g : t.backward(loss.total, critic.nodes())) {
        any = any || !all_zero(g);
    }
    EXPECT_TRUE(any);
}

TEST(CondGan, GeneratorLossSeesCriticAsConstant) {
    const CondGanModel m = make_condgan(4, 3, 2);
    const Batch b = batch(m, 8, 2);
    ad::Tape t;
    const MlpBinding gen = bind(t, m.generator, true);
    const MlpBinding critic = bind(t, m.critic, false);
    const ad::NodeId loss = build_generator_loss(t, m, gen, critic, b.z, b.y, GanTrainConfig{});
    for (const Tensor& g : t.backward(loss, critic.nodes())) {
        EXPECT_TRUE(all_zero(g));
    }
    const auto nodes = gen.nodes();
    const auto r = gradcheck::check(t, loss, {nodes.back(), nodes[nodes.size() - 2]}, {});
    EXPECT_LE(r.max_rel, 1e-4);
}

TEST(CondGan, LinearCriticReducesToMeanDifference) {
    CondGanModel m = make_condgan(4, 3, 6);
    m.critic_spec.hidden_activation = Activation::Identity;
    const Batch b = batch(m, 10, 3);
    GanTrainConfig c;
    c.lambda_gp = 0.0;
    c.lambda_aux_fake = 0.0;
    c.lambda_aux_real = 0.0;
    const auto terms = critic_loss(m, b.x, b.y, b.z, b.eps, c);

    // Collapse the linear critic to a single row vector w and offset.
    const MlpParams& p = m.critic;
    std::vector<double> w(4, 0.0);
    for (std::size_t in = 0; in < 4; ++in) {
        Tensor e(1, 4, 0.0);
        e(0, in) = 1.0;
        Tensor zero(1, 4, 0.0);
        w[in] = mlp_apply(m.critic_spec, p, e)(0, 0) - mlp_apply(m.critic_spec, p, zero)(0, 0);
    }
    Tensor gin(b.z.rows(), m.latent_dim + 1);
    for (std::size_t r = 0; r < gin.rows(); ++r) {
        for (std::size_t k = 0; k < m.latent_dim; ++k) {
            gin(r, k) = b.z(r, k);
        }
        gin(r, m.latent_dim) = b.y(r, 0);
    }
    const Tensor fake = mlp_apply(m.generator_spec, m.generator, gin);
    double diff = 0.0;
    for (std::size_t r = 0; r < fake.rows(); ++r) {
        for (std::size_t k = 0; k < 4; ++k) {
            diff += w[k] * (fake(r, k) - b.x(r, k));
        }
    }
    diff /= static_cast<double>(fake.rows());
    EXPECT_NEAR(terms.total, diff, 1e-12);

    double norm2 = 0.0;
    for (double v : w) {
        norm2 += v * v;
    }
    const double expected_gp = (std::sqrt(norm2) - 1.0) * (std::sqrt(norm2) - 1.0);
    EXPECT_NEAR(gradient_penalty(m, b.x, fake, b.eps), expected_gp, 1e-10);
}

TEST(CondGan, Interpolate) {
    const Tensor a(2, 2, std::vector<double>{1, 2, 3, 4});
    const Tensor b(2, 2, 0.0);
    const std::vector<double> eps{0.25, 1.0};
    const Tensor h = interpolate(a, b, eps);
    EXPECT_EQ(h, Tensor(2, 2, std::vector<double>{0.25, 0.5, 3, 4}));
    const std::vector<double> short_eps{0.5};
    EXPECT_THROW(interpolate(a, b, short_eps), Error);
}

TEST(CondGan, TrainingIsDeterministic) {
    Rng rng(8);
    Tensor x(64, 3);
    std::vector<double> y(64);
    for (std::size_t r = 0; r < 64; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            x(r, c) = rng.uniform();
        }
        y[r] = x(r, 0) - x(r, 2);
    }
    GanTrainConfig c;
    c.iterations = 20;
    c.batch_size = 16;
    c.latent_dim = 2;
    c.seed = 4;
    const auto a = train_condgan(x, y, c);
    const auto b = train_condgan(x, y, c);
    ASSERT_EQ(a.trace.size(), 20u);
    EXPECT_EQ(a.model.generator, b.model.generator);
    EXPECT_EQ(a.model.critic, b.model.critic);
    EXPECT_EQ(a.trace.back().gen_loss, b.trace.back().gen_loss);
    c.seed = 5;
    EXPECT_NE(train_condgan(x, y, c).model.critic, a.model.critic);
}

TEST(CondGan, ConfigJson) {
    GanTrainConfig c;
    c.epsilon = EpsilonDistribution::Symmetric;
    c.lambda_aux_real = 10.0;
    const GanTrainConfig back = gan_config_from_json(to_json(c));
    EXPECT_EQ(back.epsilon, EpsilonDistribution::Symmetric);
    EXPECT_EQ(back.lambda_aux_real, 10.0);
    EXPECT_EQ(back.adam.beta1, 0.5);
    EXPECT_THROW(gan_config_from_json({{"epsilon", "normal"}}), Error);
    EXPECT_THROW(gan_config_from_json({{"lambda_gp", -1.0}}), Error);
}
