#pragma once

/// @file
/// Auxiliary-regressor conditional GAN with a Wasserstein critic.
///
/// The critic is one MLP whose two output columns are the real/fake score
/// D(x) and the property prediction P(x); both heads share the hidden trunk.
/// The critic minimizes
///
///     E[D(x~)] - E[D(x)] + l1 E[(|grad D(x^)| - 1)^2]
///         + l2 E[(y - P(x~))^2] + l3 E[(y - P(x))^2]
///
/// with x~ = G(z, y) held fixed; the generator minimizes
/// -E[D(x~)] + l2 E[(y - P(x~))^2] with the critic held fixed.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compgen/autodiff.hpp"
#include "compgen/checkpoint.hpp"
#include "compgen/condvae.hpp"
#include "compgen/error.hpp"
#include "compgen/nets.hpp"
#include "compgen/rng.hpp"
#include "compgen/tensor.hpp"

namespace compgen {

struct CondGanModel {
    std::size_t feature_dim = 0;
    std::size_t latent_dim = 10;
    MlpSpec generator_spec;  // z ⊕ y -> x
    MlpSpec critic_spec;     // x -> [D, P]
    MlpParams generator;
    MlpParams critic;
};

inline CondGanModel make_condgan(std::size_t feature_dim, std::size_t latent_dim, std::uint64_t seed) {
    CondGanModel m;
    m.feature_dim = feature_dim;
    m.latent_dim = latent_dim;
    m.generator_spec = {latent_dim + 1, generator_hidden, feature_dim, Activation::Relu, Activation::Sigmoid};
    m.critic_spec = {feature_dim, discriminator_hidden, 2, Activation::Relu, Activation::Identity};
    m.generator = init_mlp(m.generator_spec, mix_seed(seed, 11));
    m.critic = init_mlp(m.critic_spec, mix_seed(seed, 12));
    return m;
}

/// Interpolation weight distribution for the gradient-penalty samples.
enum class EpsilonDistribution {
    Unit,       // U[0, 1]
    Symmetric,  // U[-1, 1]
};

struct GanTrainConfig {
    double lambda_gp = 10.0;
    double lambda_aux_fake = 1.0;
    double lambda_aux_real = 1.0;
    std::size_t batch_size = 256;
    std::size_t iterations = 50000;
    std::size_t critic_steps = 5;
    std::size_t latent_dim = 10;
    EpsilonDistribution epsilon = EpsilonDistribution::Unit;
    AdamConfig adam = AdamConfig::gan();
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const GanTrainConfig& c) {
    return {{"lambda_gp", c.lambda_gp},
            {"lambda_aux_fake", c.lambda_aux_fake},
            {"lambda_aux_real", c.lambda_aux_real},
            {"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"critic_steps", c.critic_steps},
            {"latent_dim", c.latent_dim},
            {"epsilon", c.epsilon == EpsilonDistribution::Unit ? "uniform_0_1" : "uniform_-1_1"},
            {"adam", to_json(c.adam)},
            {"seed", c.seed}};
}

inline GanTrainConfig gan_config_from_json(const nlohmann::json& j, GanTrainConfig c = {}) {
    c.lambda_gp = j.value("lambda_gp", c.lambda_gp);
    c.lambda_aux_fake = j.value("lambda_aux_fake", c.lambda_aux_fake);
    c.lambda_aux_real = j.value("lambda_aux_real", c.lambda_aux_real);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iterations = j.value("iterations", c.iterations);
    c.critic_steps = j.value("critic_steps", c.critic_steps);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("epsilon")) {
        const auto e = j.at("epsilon").get<std::string>();
        if (e == "uniform_0_1") {
            c.epsilon = EpsilonDistribution::Unit;
        } else if (e == "uniform_-1_1") {
            c.epsilon = EpsilonDistribution::Symmetric;
        } else {
            fail(ErrorCode::ConfigError, "epsilon must be 'uniform_0_1' or 'uniform_-1_1'");
        }
    }
    if (j.contains("adam")) {
        c.adam = adam_from_json(j.at("adam"), c.adam);
    }
    c.seed = j.value("seed", c.seed);
    require(c.lambda_gp >= 0 && c.lambda_aux_fake >= 0 && c.lambda_aux_real >= 0, ErrorCode::ConfigError,
            "lambdas must be >= 0");
    require(c.critic_steps >= 1, ErrorCode::ConfigError, "critic_steps must be >= 1");
    require(c.batch_size > 0 && c.latent_dim > 0, ErrorCode::ConfigError, "GAN sizes must be positive");
    return c;
}

struct CriticHeads {
    ad::NodeId score;     // D(x), n x 1
    ad::NodeId property;  // P(x), n x 1
};

inline CriticHeads critic_heads(ad::Tape& t, const CondGanModel& m, const MlpBinding& critic, ad::NodeId x) {
    const ad::NodeId out = mlp_forward(t, m.critic_spec, critic, x);
    return {t.slice_cols(out, 0, 1), t.slice_cols(out, 1, 1)};
}

inline ad::NodeId generate_on_tape(ad::Tape& t, const CondGanModel& m, const MlpBinding& gen, ad::NodeId z,
                                   ad::NodeId y) {
    return mlp_forward(t, m.generator_spec, gen, t.concat_cols(z, y));
}

/// x^ = eps * x_real + (1 - eps) * x_fake, one eps per row.
inline Tensor interpolate(const Tensor& x_real, const Tensor& x_fake, std::span<const double> eps) {
    require(x_real.shape() == x_fake.shape() && eps.size() == x_real.rows(), ErrorCode::ShapeMismatch,
            "interpolation operands disagree in shape");
    Tensor out(x_real.rows(), x_real.cols());
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = eps[r] * x_real(r, c) + (1.0 - eps[r]) * x_fake(r, c);
        }
    }
    return out;
}

/// Batch mean of (|d D(x^) / d x^|_2 - 1)^2, differentiable with respect to
/// the critic parameters.
inline ad::NodeId gradient_penalty(ad::Tape& t, const CondGanModel& m, const MlpBinding& critic,
                                   const Tensor& x_hat) {
    const ad::NodeId xh = t.variable(x_hat);
    const ad::NodeId score = critic_heads(t, m, critic, xh).score;
    const ad::NodeId norms = ad::input_gradient_norm(t, score, xh);
    return t.mean(t.square(t.add_scalar(norms, -1.0)));
}

inline double gradient_penalty(const CondGanModel& m, const Tensor& x_real, const Tensor& x_fake,
                               std::span<const double> eps) {
    ad::Tape t;
    const MlpBinding critic = bind(t, m.critic, false);
    return t.value(gradient_penalty(t, m, critic, interpolate(x_real, x_fake, eps))).item();
}

struct CriticLossNodes {
    ad::NodeId wass_fake;
    ad::NodeId wass_real;
    ad::NodeId gp;
    ad::NodeId aux_fake;
    ad::NodeId aux_real;
    ad::NodeId total;
};

struct CriticLossTerms {
    double wass_fake = 0.0;
    double wass_real = 0.0;
    double gp = 0.0;
    double aux_fake = 0.0;
    double aux_real = 0.0;
    double total = 0.0;
};

inline ad::NodeId mean_squared(ad::Tape& t, ad::NodeId a, ad::NodeId b) {
    return t.mean(t.square(t.sub(a, b)));
}

/// Critic objective. The fake batch is generated on the same tape behind a
/// stop-gradient, so generator parameters receive no gradient from it.
inline CriticLossNodes build_critic_loss(ad::Tape& t, const CondGanModel& m, const MlpBinding& gen,
                                         const MlpBinding& critic, const Tensor& x_real, const Tensor& y_real,
                                         const Tensor& z, std::span<const double> eps,
                                         const GanTrainConfig& config) {
    const ad::NodeId xr = t.constant(x_real);
    const ad::NodeId y = t.constant(y_real);
    const ad::NodeId xf = t.stop_gradient(generate_on_tape(t, m, gen, t.constant(z), y));
    const CriticHeads fake = critic_heads(t, m, critic, xf);
    const CriticHeads real = critic_heads(t, m, critic, xr);

    CriticLossNodes n;
    n.wass_fake = t.mean(fake.score);
    n.wass_real = t.mean(real.score);
    n.gp = gradient_penalty(t, m, critic, interpolate(x_real, t.value(xf), eps));
    n.aux_fake = mean_squared(t, y, fake.property);
    n.aux_real = mean_squared(t, y, real.property);
    ad::NodeId total = t.sub(n.wass_fake, n.wass_real);
    total = t.add(total, t.scale(n.gp, config.lambda_gp));
    total = t.add(total, t.scale(n.aux_fake, config.lambda_aux_fake));
    n.total = t.add(total, t.scale(n.aux_real, config.lambda_aux_real));
    return n;
}

inline CriticLossTerms critic_loss(const CondGanModel& m, const Tensor& x_real, const Tensor& y_real,
                                   const Tensor& z, std::span<const double> eps, const GanTrainConfig& config) {
    ad::Tape t;
    const MlpBinding gen = bind(t, m.generator, false);
    const MlpBinding critic = bind(t, m.critic, false);
    const auto n = build_critic_loss(t, m, gen, critic, x_real, y_real, z, eps, config);
    auto v = [&](ad::NodeId id) { return t.value(id).item(); };
    return {v(n.wass_fake), v(n.wass_real), v(n.gp), v(n.aux_fake), v(n.aux_real), v(n.total)};
}

/// Generator objective; the critic enters as constants.
inline ad::NodeId build_generator_loss(ad::Tape& t, const CondGanModel& m, const MlpBinding& gen,
                                       const MlpBinding& critic, const Tensor& z, const Tensor& y,
                                       const GanTrainConfig& config) {
    const ad::NodeId yn = t.constant(y);
    const ad::NodeId xf = generate_on_tape(t, m, gen, t.constant(z), yn);
    const CriticHeads fake = critic_heads(t, m, critic, xf);
    return t.add(t.scale(t.mean(fake.score), -1.0), t.scale(mean_squared(t, yn, fake.property), config.lambda_aux_fake));
}

inline double generator_loss(const CondGanModel& m, const Tensor& z, const Tensor& y, const GanTrainConfig& config) {
    ad::Tape t;
    const MlpBinding gen = bind(t, m.generator, false);
    const MlpBinding critic = bind(t, m.critic, false);
    return t.value(build_generator_loss(t, m, gen, critic, z, y, config)).item();
}

struct GanTraceRow {
    std::size_t iteration = 0;
    double wass_fake = 0.0;
    double wass_real = 0.0;
    double gp = 0.0;
    double aux_fake = 0.0;
    double aux_real = 0.0;
    double gen_loss = 0.0;
};

struct GanTrainResult {
    CondGanModel model;
    std::vector<GanTraceRow> trace;
};

inline std::vector<double> draw_epsilon(Rng& rng, std::size_t n, EpsilonDistribution dist) {
    std::vector<double> eps(n);
    for (double& e : eps) {
        e = dist == EpsilonDistribution::Unit ? rng.uniform() : rng.uniform(-1.0, 1.0);
    }
    return eps;
}

/// Alternating critic/generator minibatch Adam. Fake samples are conditioned
/// on properties drawn from the real minibatch.
inline GanTrainResult train_condgan(const Tensor& x, std::span<const double> y, const GanTrainConfig& config) {
    require(x.rows() == y.size() && x.rows() > 0, ErrorCode::InvalidArgument,
            "features and properties must be non-empty and paired");
    GanTrainResult result{make_condgan(x.cols(), config.latent_dim, config.seed), {}};
    CondGanModel& m = result.model;
    const auto gen_params = m.generator.tensors();
    const auto critic_params = m.critic.tensors();
    AdamState gen_adam = make_adam(config.adam, gen_params);
    AdamState critic_adam = make_adam(config.adam, critic_params);
    Rng rng(mix_seed(config.seed, 13));
    result.trace.reserve(config.iterations);

    for (std::size_t it = 0; it < config.iterations; ++it) {
        GanTraceRow row;
        row.iteration = it;
        try {
            for (std::size_t k = 0; k < config.critic_steps; ++k) {
                const auto idx = sample_batch(rng, x.rows(), config.batch_size);
                const Tensor z = standard_normal(rng, idx.size(), m.latent_dim);
                const auto eps = draw_epsilon(rng, idx.size(), config.epsilon);
                ad::Tape t;
                const MlpBinding gen = bind(t, m.generator, false);
                const MlpBinding critic = bind(t, m.critic, true);
                const auto loss = build_critic_loss(t, m, gen, critic, gather_rows(x, idx), column_of(y, idx), z, eps,
                                                    config);
                const auto grads = t.backward(loss.total, critic.nodes());
                adam_step(critic_params, grads, critic_adam);
                row.wass_fake = t.value(loss.wass_fake).item();
                row.wass_real = t.value(loss.wass_real).item();
                row.gp = t.value(loss.gp).item();
                row.aux_fake = t.value(loss.aux_fake).item();
                row.aux_real = t.value(loss.aux_real).item();
            }
            const auto idx = sample_batch(rng, x.rows(), config.batch_size);
            const Tensor z = standard_normal(rng, idx.size(), m.latent_dim);
            ad::Tape t;
            const MlpBinding gen = bind(t, m.generator, true);
            const MlpBinding critic = bind(t, m.critic, false);
            const ad::NodeId loss = build_generator_loss(t, m, gen, critic, z, column_of(y, idx), config);
            const auto grads = t.backward(loss, gen.nodes());
            adam_step(gen_params, grads, gen_adam);
            row.gen_loss = t.value(loss).item();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NonFiniteValue || e.code() == ErrorCode::NonFiniteGradient) {
                fail(ErrorCode::NonFiniteLoss, "CondGAN training diverged at iteration " + std::to_string(it) +
                                                   ": " + e.what());
            }
            throw;
        }
        result.trace.push_back(row);
    }
    return result;
}

/// G(z ⊕ y) for `n` standard-normal latents.
inline Tensor gan_generate(const CondGanModel& m, double y, std::size_t n, std::uint64_t seed) {
    require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
    Rng rng(seed);
    Tensor input(n, m.latent_dim + 1);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m.latent_dim; ++c) {
            input(r, c) = rng.normal();
        }
        input(r, m.latent_dim) = y;
    }
    return mlp_apply(m.generator_spec, m.generator, input);
}

/// P-head output for each row of `x`.
inline std::vector<double> predict_property(const CondGanModel& m, const Tensor& x) {
    require(x.cols() == m.feature_dim, ErrorCode::ShapeMismatch,
            "expected " + std::to_string(m.feature_dim) + " features, got " + std::to_string(x.cols()));
    const Tensor out = mlp_apply(m.critic_spec, m.critic, x);
    std::vector<double> p(out.rows());
    for (std::size_t r = 0; r < out.rows(); ++r) {
        p[r] = out(r, 1);
    }
    return p;
}

inline ModelCheckpoint to_checkpoint(const CondGanModel& m) {
    ModelCheckpoint c;
    c.model_kind = "condgan";
    c.meta["feature_dim"] = m.feature_dim;
    c.meta["latent_dim"] = m.latent_dim;
    c.meta["generator_spec"] = to_json(m.generator_spec);
    c.meta["critic_spec"] = to_json(m.critic_spec);
    append_mlp(c, "generator", m.generator);
    append_mlp(c, "critic", m.critic);
    return c;
}

inline CondGanModel condgan_from_checkpoint(const ModelCheckpoint& c) {
    require(c.model_kind == "condgan", ErrorCode::InvalidArgument, "checkpoint holds a '" + c.model_kind + "'");
    CondGanModel m;
    m.feature_dim = c.meta.at("feature_dim").get<std::size_t>();
    m.latent_dim = c.meta.at("latent_dim").get<std::size_t>();
    m.generator_spec = mlp_spec_from_json(c.meta.at("generator_spec"));
    m.critic_spec = mlp_spec_from_json(c.meta.at("critic_spec"));
    m.generator = extract_mlp(c, "generator", m.generator_spec);
    m.critic = extract_mlp(c, "critic", m.critic_spec);
    return m;
}

} // namespace compgen
