#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvit/metrics.hpp"
#include "cvit/model.hpp"
#include "cvit/rng.hpp"
#include "cvit/samples.hpp"
#include "cvit/tensor.hpp"

// Class-weighted MSE training with Adam. The loss weights counteract the
// dominance of zero-risk cells; classes are assigned from the raw
// (unstandardized) target so normalization never changes them.

namespace cvit {

struct LossWeights {
    double zero = 0.05;    // raw risk in [0, 1)
    double low = 0.2;      // [1, 2)
    double medium = 0.25;  // [2, 3)
    double high = 0.5;     // [3, inf)

    double weight_for(double raw_risk) const {
        if (raw_risk < 1.0) return zero;
        if (raw_risk < 2.0) return low;
        if (raw_risk < 3.0) return medium;
        return high;
    }

    Tensor weight_map(const Tensor& raw_target) const {
        Tensor w = Tensor::zeros(raw_target.shape());
        for (std::size_t i = 0; i < w.size(); ++i)
            w.data()[i] = weight_for(raw_target.data()[i]);
        return w;
    }
};

// Mean over cells of w(class(raw)) * (pred - target)^2. pred and target are
// standardized; raw_target is used only for the class weights.
inline Tensor weighted_mse(const Tensor& pred, const Tensor& target, const Tensor& raw_target,
                           const LossWeights& weights) {
    if (pred.shape() != target.shape() || pred.shape() != raw_target.shape())
        throw std::invalid_argument("weighted_mse: shapes " + detail::shape_str(pred.shape()) +
                                    ", " + detail::shape_str(target.shape()) + " and " +
                                    detail::shape_str(raw_target.shape()) + " must match");
    Tensor w = weights.weight_map(raw_target);
    Tensor diff = sub(pred, target);
    return mean(mul(w, mul(diff, diff)));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double learning_rate = 0.003;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::size_t step = 0;
};

// One bias-corrected update over all parameter tensors, reading each
// tensor's accumulated gradient. Moment buffers are created on first use.
inline void adam_step(const std::vector<Tensor>& params, AdamState& state,
                      const AdamConfig& config) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0);
            state.v.emplace_back(p.size(), 0.0);
        }
    }
    if (state.m.size() != params.size())
        throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                    " tensors, got " + std::to_string(params.size()));
    ++state.step;
    const double bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i];
        const auto& g = p.grad();
        auto& m = state.m[i];
        auto& v = state.v[i];
        auto& x = p.data();
        for (std::size_t j = 0; j < x.size(); ++j) {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bias1;
            const double v_hat = v[j] / bias2;
            x[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 200;
    double learning_rate = 0.003;
    std::size_t batch_size = 32;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs == 0 || batch_size == 0 || learning_rate < 0.0 || eps <= 0.0 ||
            beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw std::invalid_argument("invalid training config");
    }
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_rmse = 0.0;
    double val_recall = 0.0;
    double val_map = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> history;
    std::size_t best_epoch = 0;  // 1-based, by validation RMSE
    double best_val_rmse = 0.0;
};

// Shuffled mini-batch training; one backward pass per batch with the batch
// loss as the mean of per-sample losses. The parameters with the best
// validation RMSE are restored into the model before returning.
inline TrainResult train_model(CvitModel& model, const std::vector<Sample>& train,
                               const std::vector<Sample>& val, const NormStats& stats,
                               const TrainConfig& config, const LossWeights& weights = {},
                               const std::function<void(const EpochLog&)>& on_epoch = {}) {
    config.validate();
    if (train.empty() || val.empty())
        throw std::invalid_argument("train_model: empty training or validation split");
    const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.eps};
    AdamState adam_state;
    Rng rng(config.seed);

    std::vector<Tensor> params;
    for (const auto& [name, tensor] : model.parameters()) params.push_back(tensor);

    // standardized copies and weight maps are fixed; build them once
    std::vector<Tensor> hist_std, ctx_std, tgt_std;
    for (const auto& s : train) {
        hist_std.push_back(standardize_history(s, stats));
        ctx_std.push_back(standardize_context(s, stats));
        tgt_std.push_back(standardize_target(s, stats));
    }

    bool val_has_positives = false;
    for (const auto& s : val)
        for (double v : s.target.data())
            if (v > 0.0) val_has_positives = true;

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    result.best_val_rmse = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> best_params = model.snapshot();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
            const std::size_t end = std::min(begin + config.batch_size, order.size());
            Tape tape;
            TapeScope scope(tape);
            Tensor batch_loss;
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t s = order[i];
                Tensor pred = model.forward(hist_std[s], ctx_std[s]);
                Tensor loss = weighted_mse(pred, tgt_std[s], train[s].target, weights);
                batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
            }
            batch_loss = scale(batch_loss, 1.0 / static_cast<double>(end - begin));
            epoch_loss += batch_loss.value() * static_cast<double>(end - begin);
            tape.backward(batch_loss);
            adam_step(params, adam_state, adam);
            model.zero_grad();
        }
        epoch_loss /= static_cast<double>(order.size());

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = epoch_loss;
        const EvalReport val_report = [&] {
            EvalReport r;
            std::vector<Tensor> preds, targets;
            for (const auto& s : val) {
                const Tensor pred_std =
                    model.forward(standardize_history(s, stats), standardize_context(s, stats));
                preds.push_back(invert_risk(pred_std, stats));
                targets.push_back(s.target);
            }
            r.rmse = rmse(preds, targets);
            r.recall = val_has_positives ? recall(preds, targets)
                                         : std::numeric_limits<double>::quiet_NaN();
            r.map = val_has_positives ? map_score(preds, targets)
                                      : std::numeric_limits<double>::quiet_NaN();
            r.n_samples = val.size();
            return r;
        }();
        log.val_rmse = val_report.rmse;
        log.val_recall = val_report.recall;
        log.val_map = val_report.map;
        log.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(log);
        if (on_epoch) on_epoch(log);

        if (log.val_rmse < result.best_val_rmse) {
            result.best_val_rmse = log.val_rmse;
            result.best_epoch = epoch;
            best_params = model.snapshot();
        }
    }
    model.restore(best_params);
    return result;
}

inline std::string training_log_csv(const std::vector<EpochLog>& history) {
    std::string out = "epoch,train_loss,val_rmse,val_recall,val_map,seconds\n";
    for (const auto& log : history) {
        out += std::to_string(log.epoch) + "," + format_double(log.train_loss) + "," +
               format_double(log.val_rmse) + "," + format_double(log.val_recall) + "," +
               format_double(log.val_map) + "," + format_double(log.seconds) + "\n";
    }
    return out;
}

}  // namespace cvit
