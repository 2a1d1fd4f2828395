// SPDX-License-Identifier: Apache-2.0
#include "harmodop/cnn/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "harmodop/error.hpp"

namespace harmodop::cnn {

template <typename T>
void AdamState<T>::validate() const
{
    if (!(lr > 0.0)) {
        throw ConfigError("adam lr must be > 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) {
        throw ConfigError("adam epsilon must be > 0");
    }
}

template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state)
{
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), T(0));
            state.v.emplace_back(p.size(), T(0));
        }
    }
    if (state.m.size() != params.size()) {
        throw DomainError("adam state does not match the parameter list");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
    const T step_size = static_cast<T>(state.lr / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(state.epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params[k];
        if (!p.has_grad() || p.grad.size() != p.size() || state.m[k].size() != p.size()) {
            throw DomainError("adam: parameter " + std::to_string(k) + " has no matching gradient");
        }
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t j = 0; j < p.size(); ++j) {
            const T g = p.grad[j];
            m[j] = b1 * m[j] + (T(1) - b1) * g;
            v[j] = b2 * v[j] + (T(1) - b2) * g * g;
            p.data[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_c2) + eps);
        }
    }
}

std::array<double, kNumClasses> one_hot(int class_id)
{
    if (class_id < 1 || class_id > static_cast<int>(kNumClasses)) {
        throw DomainError("class id " + std::to_string(class_id) + " outside 1..4");
    }
    std::array<double, kNumClasses> t{};
    t[static_cast<std::size_t>(class_id - 1)] = 1.0;
    return t;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch)
{
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed({seed, 0x5348u, epoch}));
    for (std::size_t k = n; k > 1; --k) {
        std::swap(order[k - 1], order[rng.below(k)]);
    }
    return order;
}

namespace {

template <typename T>
void check_set(const Network<T>& net, const std::vector<Example>& set, const char* what)
{
    const std::size_t expect = net.spec().input_size * net.spec().input_size;
    for (std::size_t k = 0; k < set.size(); ++k) {
        if (set[k].pixels.size() != expect) {
            throw DomainError(std::string(what) + " sample " + std::to_string(k) + " has " +
                              std::to_string(set[k].pixels.size()) + " pixels, network expects " +
                              std::to_string(expect));
        }
        one_hot(set[k].class_id);
    }
}

template <typename T>
double sample_loss(const std::vector<T>& scores, const std::array<double, kNumClasses>& target)
{
    std::array<T, kNumClasses> t{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        t[c] = static_cast<T>(target[c]);
    }
    return static_cast<double>(loss_multilabel<T>(scores, t).loss);
}

}  // namespace

template <typename T>
std::vector<EpochLog> train(Network<T>& net, const std::vector<Example>& train_set, const std::vector<Example>& eval,
                            const TrainOptions& options)
{
    if (train_set.empty()) {
        throw DomainError("training set is empty");
    }
    if (options.batch_size == 0) {
        throw ConfigError("batch_size must be > 0");
    }
    check_set(net, train_set, "training");
    check_set(net, eval, "evaluation");

    AdamState<T> adam;
    adam.lr = options.lr;
    adam.beta1 = options.beta1;
    adam.beta2 = options.beta2;
    adam.epsilon = options.epsilon;
    adam.validate();

    const std::size_t pixels = net.spec().input_size * net.spec().input_size;
    std::vector<EpochLog> log;
    Workspace<T> ws;
    std::vector<T> image(pixels);
    net.zero_grad();
    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        const auto order = epoch_order(train_set.size(), options.seed, epoch);
        Rng drop_rng(derive_seed({options.seed, 0xd120u, epoch}));
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t stop = std::min(order.size(), start + options.batch_size);
            const T inv_batch = static_cast<T>(1.0 / static_cast<double>(stop - start));
            net.zero_grad();
            for (std::size_t k = start; k < stop; ++k) {
                const auto& ex = train_set[order[k]];
                std::copy(ex.pixels.begin(), ex.pixels.end(), image.begin());
                const auto scores = net.forward(image, ws, Mode::train, &drop_rng);
                const auto target = one_hot(ex.class_id);
                loss_sum += sample_loss(scores, target);
                std::array<double, kNumClasses> s{};
                std::array<T, kNumClasses> grad{};
                for (std::size_t c = 0; c < kNumClasses; ++c) {
                    s[c] = static_cast<double>(scores[c]);
                    // Sigmoid and cross-entropy fused: dE/dz = p - t.
                    grad[c] = (scores[c] - static_cast<T>(target[c])) * inv_batch;
                }
                if (decide(s, options.hidden_threshold).label == ex.class_id) {
                    ++correct;
                }
                net.backward(ws, grad);
            }
            adam_step(net.parameters(), adam);
        }
        EpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = loss_sum / static_cast<double>(train_set.size());
        entry.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
        if (eval.empty()) {
            entry.eval_loss = entry.eval_acc = std::numeric_limits<double>::quiet_NaN();
        } else {
            const auto r = evaluate(net, eval, options.hidden_threshold);
            entry.eval_loss = r.loss;
            entry.eval_acc = r.accuracy;
        }
        log.push_back(entry);
        if (options.on_epoch) {
            options.on_epoch(entry);
        }
    }
    return log;
}

template <typename T>
EvalResult evaluate(const Network<T>& net, const std::vector<Example>& set, double hidden_threshold)
{
    check_set(net, set, "evaluation");
    EvalResult r;
    r.count = set.size();
    if (set.empty()) {
        r.loss = r.accuracy = std::numeric_limits<double>::quiet_NaN();
        return r;
    }
    Workspace<T> ws;
    std::vector<T> image(set.front().pixels.size());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& ex : set) {
        std::copy(ex.pixels.begin(), ex.pixels.end(), image.begin());
        const auto scores = net.forward(image, ws, Mode::eval);
        loss_sum += sample_loss(scores, one_hot(ex.class_id));
        std::array<double, kNumClasses> s{};
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            s[c] = static_cast<double>(scores[c]);
        }
        const auto d = decide(s, hidden_threshold);
        const auto row = static_cast<std::size_t>(ex.class_id - 1);
        if (d.hidden_class) {
            ++r.confusion[row][kNumClasses];
        } else {
            ++r.confusion[row][static_cast<std::size_t>(d.label - 1)];
        }
        if (d.label == ex.class_id) {
            ++correct;
        }
    }
    r.loss = loss_sum / static_cast<double>(set.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
    return r;
}

void write_training_log(const std::vector<EpochLog>& log, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write training log " + path.string());
    }
    out << "epoch,train_loss,eval_loss,train_acc,eval_acc\n";
    char line[160];
    for (const auto& e : log) {
        std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.6f,%.6f\n", e.epoch, e.train_loss, e.eval_loss,
                      e.train_acc, e.eval_acc);
        out << line;
    }
    if (!out) {
        throw IoError("failed writing training log " + path.string());
    }
}

std::string confusion_csv(const EvalResult& result)
{
    std::string out = "true_class,pred_1,pred_2,pred_3,pred_4,hidden\n";
    for (std::size_t r = 0; r < kNumClasses; ++r) {
        out += std::to_string(r + 1);
        for (auto v : result.confusion[r]) {
            out += ',' + std::to_string(v);
        }
        out += '\n';
    }
    return out;
}

void write_confusion_csv(const EvalResult& result, const std::filesystem::path& path)
{
    std::ofstream out(path);
    out << confusion_csv(result);
    if (!out) {
        throw IoError("failed writing confusion matrix " + path.string());
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<Tensor<float>>&, AdamState<float>&);
template void adam_step(std::vector<Tensor<double>>&, AdamState<double>&);
template std::vector<EpochLog> train(Network<float>&, const std::vector<Example>&, const std::vector<Example>&,
                                     const TrainOptions&);
template std::vector<EpochLog> train(Network<double>&, const std::vector<Example>&, const std::vector<Example>&,
                                     const TrainOptions&);
template EvalResult evaluate(const Network<float>&, const std::vector<Example>&, double);
template EvalResult evaluate(const Network<double>&, const std::vector<Example>&, double);

}  // namespace harmodop::cnn
