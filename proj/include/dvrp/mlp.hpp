#pragma once

#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "dvrp/common.hpp"

namespace dvrp {

// Fully-connected network with rectified-linear hidden activations and a
// linear scalar output. Plain double math; small enough that hand-rolled
// loops beat any library dispatch overhead at our feature sizes.
class Mlp {
public:
    Mlp() = default;

    // sizes = {input, hidden..., 1}; dropout applies after each hidden layer
    // during training only.
    Mlp(std::vector<std::size_t> sizes, double dropout, Rng& rng)
        : sizes_(std::move(sizes)), dropout_(dropout) {
        if (sizes_.size() < 2 || sizes_.back() != 1)
            throw ConfigError("network needs at least input and scalar output layers");
        for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
            std::size_t in = sizes_[l], out = sizes_[l + 1];
            std::vector<double> w(in * out);
            double scale = std::sqrt(2.0 / static_cast<double>(in));
            for (auto& x : w) x = rng.normal() * scale;
            weights_.push_back(std::move(w));
            // nonzero bias init keeps pre-activations off the rectifier kink
            // even when a whole upstream layer is inactive
            std::vector<double> b(out);
            double bscale = 1.0 / std::sqrt(static_cast<double>(in));
            for (auto& x : b) x = rng.uniform(-bscale, bscale);
            biases_.push_back(std::move(b));
        }
    }

    const std::vector<std::size_t>& sizes() const { return sizes_; }
    std::size_t input_size() const { return sizes_.front(); }
    double dropout() const { return dropout_; }
    std::size_t layer_count() const { return weights_.size(); }
    std::vector<std::vector<double>>& weights() { return weights_; }
    std::vector<std::vector<double>>& biases() { return biases_; }
    const std::vector<std::vector<double>>& weights() const { return weights_; }
    const std::vector<std::vector<double>>& biases() const { return biases_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l)
            n += weights_[l].size() + biases_[l].size();
        return n;
    }

    double forward(std::span<const double> input) const {
        if (input.size() != input_size())
            throw ConfigError("feature length does not match network input size");
        std::vector<double> a(input.begin(), input.end());
        std::vector<double> next;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            affine(l, a, next);
            if (l + 1 < weights_.size())
                for (auto& x : next) x = x > 0.0 ? x : 0.0;
            a.swap(next);
        }
        return a[0];
    }

    struct Tape {
        std::vector<std::vector<double>> pre;   // pre-activation per layer
        std::vector<std::vector<double>> post;  // post-activation (input of next layer)
        std::vector<std::vector<double>> mask;  // dropout keep-scale per hidden layer
        double output = 0.0;
    };

    // Forward pass that records activations; rng != nullptr enables dropout.
    double forward_train(std::span<const double> input, Tape& tape, Rng* rng) const {
        if (input.size() != input_size())
            throw ConfigError("feature length does not match network input size");
        tape.pre.assign(weights_.size(), {});
        tape.post.assign(weights_.size(), {});
        tape.mask.assign(weights_.size(), {});
        std::vector<double> a(input.begin(), input.end());
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            std::vector<double> z;
            affine(l, a, z);
            tape.pre[l] = z;
            if (l + 1 < weights_.size()) {
                for (auto& x : z) x = x > 0.0 ? x : 0.0;
                if (rng && dropout_ > 0.0) {
                    auto& mask = tape.mask[l];
                    mask.resize(z.size());
                    for (std::size_t i = 0; i < z.size(); ++i) {
                        mask[i] = rng->uniform() < dropout_ ? 0.0 : 1.0 / (1.0 - dropout_);
                        z[i] *= mask[i];
                    }
                }
            }
            tape.post[l] = z;
            a.swap(z);
        }
        tape.output = a[0];
        return tape.output;
    }

    // Flat gradient layout: [w0, b0, w1, b1, ...].
    struct Gradients {
        std::vector<double> flat;
    };

    Gradients zero_gradients() const { return Gradients{std::vector<double>(parameter_count(), 0.0)}; }

    // Accumulates the exact gradient of 0.5 * (output - target)^2.
    void accumulate_gradient(std::span<const double> input, const Tape& tape, double target,
                             Gradients& grads) const {
        std::vector<double> delta{tape.output - target};
        double* g = grads.flat.data();
        std::vector<std::size_t> offsets(weights_.size());
        std::size_t off = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            offsets[l] = off;
            off += weights_[l].size() + biases_[l].size();
        }
        std::vector<double> input_copy(input.begin(), input.end());
        for (std::size_t ll = weights_.size(); ll-- > 0;) {
            std::size_t in = sizes_[ll], out = sizes_[ll + 1];
            const std::vector<double>& prev = ll == 0 ? input_copy : tape.post[ll - 1];
            double* gw = g + offsets[ll];
            double* gb = gw + weights_[ll].size();
            for (std::size_t o = 0; o < out; ++o) {
                gb[o] += delta[o];
                for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * prev[i];
            }
            if (ll == 0) break;
            std::vector<double> prev_delta(in, 0.0);
            const auto& w = weights_[ll];
            for (std::size_t o = 0; o < out; ++o)
                for (std::size_t i = 0; i < in; ++i) prev_delta[i] += w[o * in + i] * delta[o];
            // through dropout mask and relu of layer ll-1
            const auto& mask = tape.mask[ll - 1];
            const auto& pre = tape.pre[ll - 1];
            for (std::size_t i = 0; i < in; ++i) {
                if (!mask.empty()) prev_delta[i] *= mask[i];
                if (pre[i] <= 0.0) prev_delta[i] = 0.0;
            }
            delta.swap(prev_delta);
        }
    }

    void apply_update(const std::vector<double>& step) {
        std::size_t k = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            for (auto& w : weights_[l]) w += step[k++];
            for (auto& b : biases_[l]) b += step[k++];
        }
    }

    std::vector<double> flatten_parameters() const {
        std::vector<double> out;
        out.reserve(parameter_count());
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            out.insert(out.end(), weights_[l].begin(), weights_[l].end());
            out.insert(out.end(), biases_[l].begin(), biases_[l].end());
        }
        return out;
    }

    void set_parameters(const std::vector<double>& flat) {
        std::size_t k = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            for (auto& w : weights_[l]) w = flat[k++];
            for (auto& b : biases_[l]) b = flat[k++];
        }
    }

private:
    void affine(std::size_t layer, const std::vector<double>& in, std::vector<double>& out) const {
        std::size_t ni = sizes_[layer], no = sizes_[layer + 1];
        const auto& w = weights_[layer];
        const auto& b = biases_[layer];
        out.assign(no, 0.0);
        for (std::size_t o = 0; o < no; ++o) {
            double acc = b[o];
            const double* row = w.data() + o * ni;
            for (std::size_t i = 0; i < ni; ++i) acc += row[i] * in[i];
            out[o] = acc;
        }
    }

    std::vector<std::size_t> sizes_;
    double dropout_ = 0.0;
    std::vector<std::vector<double>> weights_;
    std::vector<std::vector<double>> biases_;
};

inline double mlp_forward(const Mlp& net, std::span<const double> input) {
    return net.forward(input);
}

// One gradient accumulation of squared error against a target.
inline void mlp_backward(const Mlp& net, std::span<const double> input, double target,
                         Mlp::Gradients& grads) {
    Mlp::Tape tape;
    net.forward_train(input, tape, nullptr);
    net.accumulate_gradient(input, tape, target, grads);
}

// Adam with the usual defaults; lr is the only externally tuned knob.
class Adam {
public:
    explicit Adam(std::size_t n, double lr = 1e-3) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

    void step(Mlp& net, const Mlp::Gradients& grads, double batch_scale) {
        ++t_;
        const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        std::vector<double> update(m_.size());
        for (std::size_t i = 0; i < m_.size(); ++i) {
            double g = grads.flat[i] * batch_scale;
            m_[i] = b1 * m_[i] + (1.0 - b1) * g;
            v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
            update[i] = -lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
        }
        net.apply_update(update);
    }

private:
    double lr_;
    std::uint64_t t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace dvrp
