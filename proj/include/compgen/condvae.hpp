#pragma once

/// @file
/// Conditional VAE: encoder q(z | x, y), decoder p(x | y, z), N(0, I) prior.
/// The condition y is concatenated to the input of both networks.

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "compgen/autodiff.hpp"
#include "compgen/checkpoint.hpp"
#include "compgen/error.hpp"
#include "compgen/nets.hpp"
#include "compgen/rng.hpp"
#include "compgen/tensor.hpp"

namespace compgen {

struct CondVaeModel {
    std::size_t feature_dim = 0;
    std::size_t latent_dim = 10;
    MlpSpec encoder_spec;  // x ⊕ y -> [mu, log sigma^2]
    MlpSpec decoder_spec;  // z ⊕ y -> x
    MlpParams encoder;
    MlpParams decoder;
};

inline CondVaeModel make_condvae(std::size_t feature_dim, std::size_t latent_dim, std::uint64_t seed) {
    CondVaeModel m;
    m.feature_dim = feature_dim;
    m.latent_dim = latent_dim;
    m.encoder_spec = {feature_dim + 1, discriminator_hidden, 2 * latent_dim, Activation::Relu, Activation::Identity};
    m.decoder_spec = {latent_dim + 1, generator_hidden, feature_dim, Activation::Relu, Activation::Sigmoid};
    m.encoder = init_mlp(m.encoder_spec, mix_seed(seed, 1));
    m.decoder = init_mlp(m.decoder_spec, mix_seed(seed, 2));
    return m;
}

struct VaeTrainConfig {
    std::size_t batch_size = 256;
    std::size_t iterations = 50000;
    std::size_t latent_dim = 10;
    AdamConfig adam = AdamConfig::vae();
    std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const VaeTrainConfig& c) {
    return {{"batch_size", c.batch_size},
            {"iterations", c.iterations},
            {"latent_dim", c.latent_dim},
            {"adam", to_json(c.adam)},
            {"seed", c.seed}};
}

inline VaeTrainConfig vae_config_from_json(const nlohmann::json& j, VaeTrainConfig c = {}) {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iterations = j.value("iterations", c.iterations);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    if (j.contains("adam")) {
        c.adam = adam_from_json(j.at("adam"), c.adam);
    }
    c.seed = j.value("seed", c.seed);
    require(c.batch_size > 0 && c.latent_dim > 0, ErrorCode::ConfigError, "VAE sizes must be positive");
    return c;
}

/// Mean over the batch of KL(N(mu, exp(logvar)) || N(0, I)).
inline ad::NodeId kl_standard_normal(ad::Tape& t, ad::NodeId mu, ad::NodeId logvar) {
    // 0.5 * sum(mu^2 + exp(lv) - 1 - lv)
    const ad::NodeId inner = t.sub(t.add_scalar(t.add(t.square(mu), t.exp(logvar)), -1.0), logvar);
    const double rows = static_cast<double>(t.shape(mu).rows);
    return t.scale(t.sum(inner), 0.5 / rows);
}

inline double kl_standard_normal(const Tensor& mu, const Tensor& logvar) {
    ad::Tape t;
    return t.value(kl_standard_normal(t, t.constant(mu), t.constant(logvar))).item();
}

struct ElboNodes {
    ad::NodeId recon;
    ad::NodeId kl;
    ad::NodeId total;
};

struct ElboTerms {
    double recon = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

/// Negative ELBO: batch mean of the summed squared reconstruction error plus
/// the closed-form KL term. `noise` is the reparameterization draw.
inline ElboNodes build_elbo(ad::Tape& t, const CondVaeModel& m, const MlpBinding& enc, const MlpBinding& dec,
                            ad::NodeId x, ad::NodeId y, ad::NodeId noise) {
    const std::size_t L = m.latent_dim;
    const ad::NodeId stats = mlp_forward(t, m.encoder_spec, enc, t.concat_cols(x, y));
    const ad::NodeId mu = t.slice_cols(stats, 0, L);
    const ad::NodeId logvar = t.slice_cols(stats, L, L);
    const ad::NodeId z = t.add(mu, t.mul(t.exp(t.scale(logvar, 0.5)), noise));
    const ad::NodeId x_hat = mlp_forward(t, m.decoder_spec, dec, t.concat_cols(z, y));
    const double rows = static_cast<double>(t.shape(x).rows);
    const ad::NodeId recon = t.scale(t.sum(t.square(t.sub(x_hat, x))), 1.0 / rows);
    const ad::NodeId kl = kl_standard_normal(t, mu, logvar);
    return {recon, kl, t.add(recon, kl)};
}

inline ElboTerms elbo_loss(const CondVaeModel& m, const Tensor& x, const Tensor& y, const Tensor& noise) {
    ad::Tape t;
    const MlpBinding enc = bind(t, m.encoder, false);
    const MlpBinding dec = bind(t, m.decoder, false);
    const ElboNodes n = build_elbo(t, m, enc, dec, t.constant(x), t.constant(y), t.constant(noise));
    ElboTerms out{t.value(n.recon).item(), t.value(n.kl).item(), t.value(n.total).item()};
    require(std::isfinite(out.total), ErrorCode::NonFiniteLoss, "negative ELBO is not finite");
    return out;
}

struct VaeTraceRow {
    std::size_t iteration = 0;
    double recon = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

struct VaeTrainResult {
    CondVaeModel model;
    std::vector<VaeTraceRow> trace;
};

inline Tensor standard_normal(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    for (double& v : t.values()) {
        v = rng.normal();
    }
    return t;
}

inline std::vector<std::size_t> sample_batch(Rng& rng, std::size_t population, std::size_t batch) {
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) {
        i = rng.index(population);
    }
    return idx;
}

inline Tensor column_of(std::span<const double> y, std::span<const std::size_t> idx) {
    Tensor out(idx.size(), 1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out(i, 0) = y[idx[i]];
    }
    return out;
}

/// Minibatch Adam on the negative ELBO. `x` must already be min-max normalized.
inline VaeTrainResult train_condvae(const Tensor& x, std::span<const double> y, const VaeTrainConfig& config) {
    require(x.rows() == y.size() && x.rows() > 0, ErrorCode::InvalidArgument,
            "features and properties must be non-empty and paired");
    VaeTrainResult result{make_condvae(x.cols(), config.latent_dim, config.seed), {}};
    CondVaeModel& m = result.model;
    auto params = m.encoder.tensors();
    auto dec_params = m.decoder.tensors();
    params.insert(params.end(), dec_params.begin(), dec_params.end());
    AdamState adam = make_adam(config.adam, params);
    Rng rng(mix_seed(config.seed, 3));
    result.trace.reserve(config.iterations);

    for (std::size_t it = 0; it < config.iterations; ++it) {
        const auto idx = sample_batch(rng, x.rows(), config.batch_size);
        const Tensor noise = standard_normal(rng, idx.size(), m.latent_dim);
        try {
            ad::Tape t;
            const MlpBinding enc = bind(t, m.encoder, true);
            const MlpBinding dec = bind(t, m.decoder, true);
            const ElboNodes loss = build_elbo(t, m, enc, dec, t.constant(gather_rows(x, idx)),
                                              t.constant(column_of(y, idx)), t.constant(noise));
            auto nodes = enc.nodes();
            const auto dec_nodes = dec.nodes();
            nodes.insert(nodes.end(), dec_nodes.begin(), dec_nodes.end());
            const auto grads = t.backward(loss.total, nodes);
            result.trace.push_back({it, t.value(loss.recon).item(), t.value(loss.kl).item(),
                                    t.value(loss.total).item()});
            adam_step(params, grads, adam);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::NonFiniteValue || e.code() == ErrorCode::NonFiniteGradient) {
                fail(ErrorCode::NonFiniteLoss, "CondVAE training diverged at iteration " + std::to_string(it) +
                                                   ": " + e.what());
            }
            throw;
        }
    }
    return result;
}

/// Decodes `n` standard-normal latents conditioned on `y`.
inline Tensor vae_generate(const CondVaeModel& m, double y, std::size_t n, std::uint64_t seed) {
    require(n >= 1, ErrorCode::InvalidArgument, "n must be >= 1");
    Rng rng(seed);
    Tensor input(n, m.latent_dim + 1);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < m.latent_dim; ++c) {
            input(r, c) = rng.normal();
        }
        input(r, m.latent_dim) = y;
    }
    return mlp_apply(m.decoder_spec, m.decoder, input);
}

inline ModelCheckpoint to_checkpoint(const CondVaeModel& m) {
    ModelCheckpoint c;
    c.model_kind = "condvae";
    c.meta["feature_dim"] = m.feature_dim;
    c.meta["latent_dim"] = m.latent_dim;
    c.meta["encoder_spec"] = to_json(m.encoder_spec);
    c.meta["decoder_spec"] = to_json(m.decoder_spec);
    append_mlp(c, "encoder", m.encoder);
    append_mlp(c, "decoder", m.decoder);
    return c;
}

inline CondVaeModel condvae_from_checkpoint(const ModelCheckpoint& c) {
    require(c.model_kind == "condvae", ErrorCode::InvalidArgument, "checkpoint holds a '" + c.model_kind + "'");
    CondVaeModel m;
    m.feature_dim = c.meta.at("feature_dim").get<std::size_t>();
    m.latent_dim = c.meta.at("latent_dim").get<std::size_t>();
    m.encoder_spec = mlp_spec_from_json(c.meta.at("encoder_spec"));
    m.decoder_spec = mlp_spec_from_json(c.meta.at("decoder_spec"));
    m.encoder = extract_mlp(c, "encoder", m.encoder_spec);
    m.decoder = extract_mlp(c, "decoder", m.decoder_spec);
    return m;
}

} // namespace compgen
