#pragma once

/// @file
/// Fully connected networks on the autodiff tape, Glorot initialization and
/// the Adam optimizer.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compgen/autodiff.hpp"
#include "compgen/error.hpp"
#include "compgen/rng.hpp"
#include "compgen/tensor.hpp"

namespace compgen {

enum class Activation { Identity, Relu, Sigmoid };

inline std::string to_string(Activation a) {
    switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline Activation activation_from_string(std::string_view s) {
    if (s == "identity") {
        return Activation::Identity;
    }
    if (s == "relu") {
        return Activation::Relu;
    }
    if (s == "sigmoid") {
        return Activation::Sigmoid;
    }
    fail(ErrorCode::ConfigError, "unknown activation '" + std::string(s) + "'");
}

struct MlpSpec {
    std::size_t input_dim = 1;
    std::vector<std::size_t> hidden_dims;
    std::size_t output_dim = 1;
    Activation hidden_activation = Activation::Relu;
    Activation output_activation = Activation::Identity;

    /// Layer widths from input to output.
    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input_dim};
        w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
        w.push_back(output_dim);
        return w;
    }

    void validate() const {
        for (std::size_t d : widths()) {
            require(d >= 1, ErrorCode::InvalidArgument, "MLP dimensions must be >= 1");
        }
    }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Generator/decoder hidden widths.
inline const std::vector<std::size_t> generator_hidden{60, 30};
/// Discriminator/encoder hidden widths: the generator's, reversed.
inline const std::vector<std::size_t> discriminator_hidden{30, 60};

/// Weight `i` is (out x in); bias `i` is (1 x out).
struct MlpParams {
    std::vector<Tensor> weights;
    std::vector<Tensor> biases;

    std::size_t layers() const { return weights.size(); }

    /// Parameters in a fixed order: w0, b0, w1, b1, ...
    std::vector<Tensor*> tensors() {
        std::vector<Tensor*> out;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.push_back(&weights[i]);
            out.push_back(&biases[i]);
        }
        return out;
    }
    std::vector<const Tensor*> tensors() const {
        std::vector<const Tensor*> out;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.push_back(&weights[i]);
            out.push_back(&biases[i]);
        }
        return out;
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Glorot-uniform weights, zero biases.
inline MlpParams init_mlp(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    MlpParams params;
    const auto w = spec.widths();
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const std::size_t fan_in = w[i];
        const std::size_t fan_out = w[i + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor weight(fan_out, fan_in);
        for (double& v : weight.values()) {
            v = rng.uniform(-limit, limit);
        }
        params.weights.push_back(std::move(weight));
        params.biases.emplace_back(1, fan_out, 0.0);
    }
    return params;
}

/// Tape nodes holding one MLP's parameters.
struct MlpBinding {
    std::vector<ad::NodeId> weights;
    std::vector<ad::NodeId> biases;

    std::vector<ad::NodeId> nodes() const {
        std::vector<ad::NodeId> out;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            out.push_back(weights[i]);
            out.push_back(biases[i]);
        }
        return out;
    }
};

/// Places `params` on the tape as variables (trainable) or constants (frozen).
inline MlpBinding bind(ad::Tape& tape, const MlpParams& params, bool trainable) {
    MlpBinding b;
    for (std::size_t i = 0; i < params.layers(); ++i) {
        b.weights.push_back(trainable ? tape.variable(params.weights[i]) : tape.constant(params.weights[i]));
        b.biases.push_back(trainable ? tape.variable(params.biases[i]) : tape.constant(params.biases[i]));
    }
    return b;
}

inline ad::NodeId activate(ad::Tape& tape, ad::NodeId x, Activation a) {
    switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return tape.relu(x);
    case Activation::Sigmoid: return tape.sigmoid(x);
    }
    return x;
}

/// Batch forward pass: `x` is (batch x input_dim).
inline ad::NodeId mlp_forward(ad::Tape& tape, const MlpSpec& spec, const MlpBinding& params, ad::NodeId x) {
    require(tape.shape(x).cols == spec.input_dim, ErrorCode::ShapeMismatch,
            "MLP expects " + std::to_string(spec.input_dim) + " inputs, got " +
                std::to_string(tape.shape(x).cols));
    ad::NodeId h = x;
    const std::size_t layers = params.weights.size();
    for (std::size_t i = 0; i < layers; ++i) {
        h = tape.add(tape.matmul(h, tape.transpose(params.weights[i])), params.biases[i]);
        h = activate(tape, h, i + 1 == layers ? spec.output_activation : spec.hidden_activation);
    }
    return h;
}

/// Forward pass without keeping a tape around.
inline Tensor mlp_apply(const MlpSpec& spec, const MlpParams& params, const Tensor& x) {
    ad::Tape tape;
    const MlpBinding b = bind(tape, params, false);
    return tape.value(mlp_forward(tape, spec, b, tape.constant(x)));
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamConfig gan() { return {1e-4, 0.5, 0.9, 1e-8}; }
    static AdamConfig vae() { return {1e-3, 0.9, 0.999, 1e-8}; }
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

inline AdamState make_adam(const AdamConfig& config, std::span<Tensor* const> params) {
    AdamState s;
    s.config = config;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->rows(), p->cols(), 0.0);
        s.v.emplace_back(p->rows(), p->cols(), 0.0);
    }
    return s;
}

/// One bias-corrected Adam update.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state) {
    require(params.size() == grads.size() && params.size() == state.m.size(), ErrorCode::ShapeMismatch,
            "Adam parameter/gradient/state counts differ");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        require(grads[i].shape() == params[i]->shape(), ErrorCode::ShapeMismatch,
                "gradient " + std::to_string(i) + " has shape " + to_string(grads[i].shape()));
        require(grads[i].all_finite(), ErrorCode::NonFiniteGradient,
                "gradient " + std::to_string(i) + " is not finite");
    }
    const AdamConfig& c = state.config;
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        auto& p = params[i]->values();
        auto& m = state.m[i].values();
        auto& v = state.v[i].values();
        const auto& g = grads[i].values();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            const double m_hat = m[k] / correction1;
            const double v_hat = v[k] / correction2;
            p[k] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

inline nlohmann::json to_json(const MlpSpec& spec) {
    return {{"input_dim", spec.input_dim},
            {"hidden_dims", spec.hidden_dims},
            {"output_dim", spec.output_dim},
            {"hidden_activation", to_string(spec.hidden_activation)},
            {"output_activation", to_string(spec.output_activation)}};
}

inline MlpSpec mlp_spec_from_json(const nlohmann::json& j) {
    MlpSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    s.output_dim = j.at("output_dim").get<std::size_t>();
    s.hidden_activation = activation_from_string(j.at("hidden_activation").get<std::string>());
    s.output_activation = activation_from_string(j.at("output_activation").get<std::string>());
    s.validate();
    return s;
}

inline nlohmann::json to_json(const AdamConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"epsilon", c.epsilon}};
}

inline AdamConfig adam_from_json(const nlohmann::json& j, AdamConfig defaults) {
    defaults.learning_rate = j.value("learning_rate", defaults.learning_rate);
    defaults.beta1 = j.value("beta1", defaults.beta1);
    defaults.beta2 = j.value("beta2", defaults.beta2);
    defaults.epsilon = j.value("epsilon", defaults.epsilon);
    return defaults;
}

} // namespace compgen
