#pragma once

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvrp/common.hpp"
#include "dvrp/features.hpp"
#include "dvrp/mlp.hpp"
#include "dvrp/types.hpp"

namespace dvrp {

namespace detail {

// Doubles are serialized as bit patterns so a model round-trips exactly.
inline std::string double_to_hex(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(bits));
    return buf;
}

inline double hex_to_double(const std::string& s) {
    std::uint64_t bits = std::stoull(s, nullptr, 16);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

inline nlohmann::json doubles_to_json(const std::vector<double>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (double x : v) out.push_back(double_to_hex(x));
    return out;
}

inline std::vector<double> doubles_from_json(const nlohmann::json& j) {
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) out.push_back(hex_to_double(x.get<std::string>()));
    return out;
}

}  // namespace detail

// Objective over a post-decision set of route plans: either the myopic
// idle-time heuristic or a learned network over the configured features.
class ValueFunction {
public:
    enum class Kind { heuristic, learned };

    static ValueFunction heuristic(FeatureConfig cfg = {}) {
        ValueFunction v;
        v.kind_ = Kind::heuristic;
        v.config_ = cfg;
        return v;
    }

    static ValueFunction learned(FeatureConfig cfg, Mlp net) {
        if (net.input_size() != cfg.length())
            throw ConfigError("network input size does not match feature length");
        ValueFunction v;
        v.kind_ = Kind::learned;
        v.config_ = cfg;
        v.net_ = std::move(net);
        v.mean_.assign(cfg.length(), 0.0);
        v.scale_.assign(cfg.length(), 1.0);
        return v;
    }

    Kind kind() const { return kind_; }
    const FeatureConfig& config() const { return config_; }
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }

    void set_normalization(std::vector<double> mean, std::vector<double> scale) {
        if (mean.size() != config_.length() || scale.size() != config_.length())
            throw ConfigError("normalization length does not match feature length");
        mean_ = std::move(mean);
        scale_ = std::move(scale);
    }
    const std::vector<double>& mean() const { return mean_; }
    const std::vector<double>& scale() const { return scale_; }

    std::vector<double> normalize(std::vector<double> features) const {
        for (std::size_t i = 0; i < features.size(); ++i)
            features[i] = (features[i] - mean_[i]) / scale_[i];
        return features;
    }

    double evaluate_features(const std::vector<double>& raw_features) const {
        if (kind_ == Kind::heuristic) return raw_features.at(0);
        return net_.forward(normalize(raw_features));
    }

    double evaluate(const FleetPlans& plans, const ServiceState& state) const {
        if (kind_ == Kind::heuristic)
            return idle_time_feature(plans, state, config_.horizon);
        return net_.forward(normalize(extract_features(plans, state, config_)));
    }

    std::vector<double> features(const FleetPlans& plans, const ServiceState& state) const {
        if (kind_ == Kind::heuristic) {
            return {idle_time_feature(plans, state, config_.horizon)};
        }
        return extract_features(plans, state, config_);
    }

    void save(const std::string& path) const {
        nlohmann::json j;
        j["format"] = "dvrp-model";
        j["version"] = 1;
        j["kind"] = kind_ == Kind::heuristic ? "heuristic" : "learned";
        j["feature_config"] = {
            {"horizon", config_.horizon},
            {"window", config_.window},
            {"grid", config_.grid},
            {"window_multiple", config_.window_multiple},
            {"interval_count", config_.interval_count},
            {"min_vehicles", config_.min_vehicles},
            {"feature_set", static_cast<int>(config_.feature_set)},
        };
        if (kind_ == Kind::learned) {
            j["sizes"] = net_.sizes();
            j["dropout"] = net_.dropout();
            nlohmann::json layers = nlohmann::json::array();
            for (std::size_t l = 0; l < net_.layer_count(); ++l) {
                layers.push_back({{"weights", detail::doubles_to_json(net_.weights()[l])},
                                  {"biases", detail::doubles_to_json(net_.biases()[l])}});
            }
            j["layers"] = layers;
            j["mean"] = detail::doubles_to_json(mean_);
            j["scale"] = detail::doubles_to_json(scale_);
        }
        std::ofstream out(path);
        if (!out) throw ValidationError("cannot write model file: " + path);
        out << j.dump(1) << "\n";
    }

    static ValueFunction load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open model file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ValidationError("model parse error: " + std::string(e.what()));
        }
        if (j.value("format", "") != "dvrp-model")
            throw ValidationError("not a model file: " + path);
        FeatureConfig cfg;
        const auto& fc = j.at("feature_config");
        cfg.horizon = fc.at("horizon").get<double>();
        cfg.window = fc.at("window").get<double>();
        cfg.grid = fc.at("grid").get<int>();
        cfg.window_multiple = fc.at("window_multiple").get<int>();
        cfg.interval_count = fc.at("interval_count").get<int>();
        cfg.min_vehicles = fc.at("min_vehicles").get<int>();
        cfg.feature_set = static_cast<FeatureSet>(fc.at("feature_set").get<int>());
        if (j.at("kind").get<std::string>() == "heuristic") return heuristic(cfg);

        auto sizes = j.at("sizes").get<std::vector<std::size_t>>();
        Rng rng(0);
        Mlp net(sizes, j.value("dropout", 0.0), rng);
        const auto& layers = j.at("layers");
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            net.weights()[l] = detail::doubles_from_json(layers.at(l).at("weights"));
            net.biases()[l] = detail::doubles_from_json(layers.at(l).at("biases"));
        }
        ValueFunction v = learned(cfg, std::move(net));
        v.set_normalization(detail::doubles_from_json(j.at("mean")),
                            detail::doubles_from_json(j.at("scale")));
        return v;
    }

private:
    Kind kind_ = Kind::heuristic;
    FeatureConfig config_;
    Mlp net_;
    std::vector<double> mean_;
    std::vector<double> scale_;
};

// Bounded FIFO of experiences.
class ExperienceBuffer {
public:
    explicit ExperienceBuffer(std::size_t capacity = 1'000'000) : capacity_(capacity) {}

    void push(Experience e) {
        if (data_.size() == capacity_) data_.pop_front();
        data_.push_back(std::move(e));
        ++insertions_;
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    std::size_t insertion_count() const { return insertions_; }
    const Experience& operator[](std::size_t i) const { return data_[i]; }
    Experience& operator[](std::size_t i) { return data_[i]; }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw ValidationError("cannot write experience log: " + path);
        for (const auto& e : data_) {
            nlohmann::json j = {{"features", e.features},
                                {"reward", e.reward},
                                {"next_features", e.next_features},
                                {"terminal", e.terminal},
                                {"target", e.target}};
            out << j.dump() << "\n";
        }
    }

    static ExperienceBuffer load(const std::string& path, std::size_t capacity = 1'000'000) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open experience log: " + path);
        ExperienceBuffer buf(capacity);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const std::exception& e) {
                throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
            }
            Experience e;
            e.features = j.at("features").get<std::vector<double>>();
            e.reward = j.at("reward").get<double>();
            e.next_features = j.at("next_features").get<std::vector<double>>();
            e.terminal = j.at("terminal").get<bool>();
            e.target = j.value("target", 0.0);
            buf.push(std::move(e));
        }
        return buf;
    }

private:
    std::size_t capacity_;
    std::deque<Experience> data_;
    std::size_t insertions_ = 0;
};

// Discounted sum of the next-k rewards.
inline double mc_target(const std::vector<double>& rewards, double gamma) {
    // Horner form: bit-for-bit reproducible by any right-to-left evaluation
    double acc = 0.0;
    for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) acc = *it + gamma * acc;
    return acc;
}

struct PretrainOptions {
    double learning_rate = 1e-3;
    std::size_t batch_size = 1024;
    std::size_t max_epochs = 200;
    double holdout_fraction = 0.2;
    std::size_t patience = 10;
    std::uint64_t seed = 1;
    bool use_dropout = true;
};

struct PretrainResult {
    double holdout_r2 = 0.0;
    double holdout_mse = 0.0;
    std::size_t epochs_run = 0;
    std::size_t train_count = 0;
    std::size_t holdout_count = 0;
};

// Supervised regression of the network onto Monte Carlo targets. Also fits
// the value function's input normalization from the training split.
inline PretrainResult pretrain(const ExperienceBuffer& buffer, ValueFunction& vf,
                               const PretrainOptions& opt) {
    if (buffer.size() == 0) throw ValidationError("experience buffer is empty");
    if (vf.kind() != ValueFunction::Kind::learned)
        throw ConfigError("pretrain requires a learned value function");

    Rng rng(opt.seed);
    std::vector<std::size_t> order(buffer.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    std::size_t holdout = static_cast<std::size_t>(
        static_cast<double>(order.size()) * opt.holdout_fraction);
    holdout = std::min(holdout, order.size() - 1);
    std::size_t train = order.size() - holdout;

    const std::size_t dim = vf.config().length();
    std::vector<double> mean(dim, 0.0), scale(dim, 1.0);
    for (std::size_t i = 0; i < train; ++i) {
        const auto& f = buffer[order[i]].features;
        for (std::size_t d = 0; d < dim; ++d) mean[d] += f[d];
    }
    for (auto& m : mean) m /= static_cast<double>(train);
    std::vector<double> var(dim, 0.0);
    for (std::size_t i = 0; i < train; ++i) {
        const auto& f = buffer[order[i]].features;
        for (std::size_t d = 0; d < dim; ++d) var[d] += (f[d] - mean[d]) * (f[d] - mean[d]);
    }
    for (std::size_t d = 0; d < dim; ++d) {
        scale[d] = std::sqrt(var[d] / static_cast<double>(train));
        if (scale[d] < 1e-12) scale[d] = 1.0;
    }
    vf.set_normalization(mean, scale);

    Mlp& net = vf.net();
    Adam adam(net.parameter_count(), opt.learning_rate);

    auto holdout_mse = [&]() {
        double acc = 0.0;
        for (std::size_t i = train; i < order.size(); ++i) {
            const auto& e = buffer[order[i]];
            double pred = net.forward(vf.normalize(e.features));
            acc += (pred - e.target) * (pred - e.target);
        }
        return holdout ? acc / static_cast<double>(holdout) : 0.0;
    };

    double best_mse = kInfinity;
    std::vector<double> best_params = net.flatten_parameters();
    std::size_t since_best = 0;
    std::size_t epoch = 0;
    for (; epoch < opt.max_epochs; ++epoch) {
        for (std::size_t i = train; i > 1; --i)
            std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < train; start += opt.batch_size) {
            std::size_t end = std::min(start + opt.batch_size, train);
            auto grads = net.zero_gradients();
            Mlp::Tape tape;
            for (std::size_t i = start; i < end; ++i) {
                const auto& e = buffer[order[i]];
                auto x = vf.normalize(e.features);
                net.forward_train(x, tape, opt.use_dropout ? &rng : nullptr);
                net.accumulate_gradient(x, tape, e.target, grads);
            }
            adam.step(net, grads, 1.0 / static_cast<double>(end - start));
        }
        double mse = holdout_mse();
        if (mse < best_mse - 1e-12) {
            best_mse = mse;
            best_params = net.flatten_parameters();
            since_best = 0;
        } else if (++since_best >= opt.patience) {
            ++epoch;
            break;
        }
    }
    net.set_parameters(best_params);

    PretrainResult res;
    res.epochs_run = epoch;
    res.train_count = train;
    res.holdout_count = holdout;
    res.holdout_mse = holdout ? best_mse : holdout_mse();

    // R^2 on the holdout; defined as 0 when targets have zero variance
    double tmean = 0.0;
    for (std::size_t i = train; i < order.size(); ++i) tmean += buffer[order[i]].target;
    if (holdout) tmean /= static_cast<double>(holdout);
    double ss_tot = 0.0;
    for (std::size_t i = train; i < order.size(); ++i) {
        double d = buffer[order[i]].target - tmean;
        ss_tot += d * d;
    }
    res.holdout_r2 = ss_tot > 1e-12
                         ? 1.0 - res.holdout_mse * static_cast<double>(holdout) / ss_tot
                         : 0.0;
    return res;
}

// Bellman fine-tuning with a periodically synchronized frozen target copy.
class QTrainer {
public:
    QTrainer(ValueFunction& vf, double gamma, double learning_rate = 1e-3,
             std::size_t target_sync = 500)
        : vf_(&vf),
          target_net_(vf.net()),
          gamma_(gamma),
          adam_(vf.net().parameter_count(), learning_rate),
          target_sync_(target_sync) {}

    double gamma() const { return gamma_; }
    std::size_t updates() const { return updates_; }

    // One gradient step on the batch; returns the batch MSE loss.
    double q_update(const std::vector<Experience>& batch) {
        if (batch.empty()) return 0.0;
        Mlp& net = vf_->net();
        auto grads = net.zero_gradients();
        Mlp::Tape tape;
        double loss = 0.0;
        for (const auto& e : batch) {
            double target = e.reward;
            if (!e.terminal)
                target += gamma_ * target_net_.forward(vf_->normalize(e.next_features));
            auto x = vf_->normalize(e.features);
            double pred = net.forward_train(x, tape, nullptr);
            net.accumulate_gradient(x, tape, target, grads);
            loss += (pred - target) * (pred - target);
        }
        adam_.step(net, grads, 1.0 / static_cast<double>(batch.size()));
        if (++updates_ % target_sync_ == 0) target_net_ = net;
        return loss / static_cast<double>(batch.size());
    }

private:
    ValueFunction* vf_;
    Mlp target_net_;
    double gamma_;
    Adam adam_;
    std::size_t target_sync_;
    std::size_t updates_ = 0;
};

}  // namespace dvrp
