#include "skinfit/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "skinfit/error.hpp"
#include "skinfit/rng.hpp"

namespace skinfit {

namespace {

constexpr std::size_t F = CnnModel::kFilters;
constexpr std::size_t K = CnnModel::kKernel;
constexpr double kProbClamp = 1e-12;
constexpr const char* kTensorNames[6] = {"conv1_w", "conv1_b", "conv2_w", "conv2_b", "dense_w", "dense_b"};

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void require_input(const CnnModel& model, std::size_t len) {
    if (len < 3) throw ShapeError("CNN input needs at least 3 values, got " + std::to_string(len));
    if (len != model.input_len) {
        throw ShapeError("CNN input length " + std::to_string(len) + " does not match model input length " +
                         std::to_string(model.input_len));
    }
}

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(std::string(what) + ": length mismatch " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

// Activations kept for backpropagation.
struct ForwardCache {
    std::vector<double> z1;  // (L-1) x F pre-activation
    std::vector<double> h1;
    std::vector<double> z2;  // (L-2) x F pre-activation
    std::vector<std::size_t> argmax;  // per filter
    std::vector<double> pooled;
    std::vector<double> prob;
};

void forward(const CnnModel& m, std::span<const double> x, ForwardCache& c) {
    const std::size_t l1 = x.size() - 1;
    const std::size_t l2 = x.size() - 2;

    c.z1.resize(l1 * F);
    c.h1.resize(l1 * F);
    for (std::size_t t = 0; t < l1; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
            double z = m.conv1_b[f];
            for (std::size_t k = 0; k < K; ++k) z += m.conv1_w[f * K + k] * x[t + k];
            c.z1[t * F + f] = z;
            c.h1[t * F + f] = z > 0.0 ? z : 0.0;
        }
    }

    c.z2.resize(l2 * F);
    c.argmax.assign(F, 0);
    c.pooled.assign(F, 0.0);
    for (std::size_t t = 0; t < l2; ++t) {
        for (std::size_t g = 0; g < F; ++g) {
            double z = m.conv2_b[g];
            for (std::size_t k = 0; k < K; ++k) {
                const double* w = &m.conv2_w[(g * K + k) * F];
                const double* h = &c.h1[(t + k) * F];
                for (std::size_t f = 0; f < F; ++f) z += w[f] * h[f];
            }
            c.z2[t * F + g] = z;
            const double h2 = z > 0.0 ? z : 0.0;
            if (t == 0 || h2 > c.pooled[g]) {
                c.pooled[g] = h2;
                c.argmax[g] = t;
            }
        }
    }

    c.prob.resize(m.b_max);
    for (std::size_t b = 0; b < m.b_max; ++b) {
        double z = m.dense_b[b];
        for (std::size_t g = 0; g < F; ++g) z += m.dense_w[b * F + g] * c.pooled[g];
        c.prob[b] = sigmoid(z);
    }
}

}  // namespace

CnnModel CnnModel::zeros(std::size_t b_max, std::size_t input_len) {
    if (b_max == 0) throw InvariantError("b_max must be positive");
    CnnModel m;
    m.b_max = b_max;
    m.input_len = input_len;
    m.conv1_w.assign(F * K, 0.0);
    m.conv1_b.assign(F, 0.0);
    m.conv2_w.assign(F * K * F, 0.0);
    m.conv2_b.assign(F, 0.0);
    m.dense_w.assign(b_max * F, 0.0);
    m.dense_b.assign(b_max, 0.0);
    return m;
}

CnnModel CnnModel::initialized(std::size_t b_max, std::size_t input_len, std::uint64_t seed) {
    CnnModel m = zeros(b_max, input_len);
    const double fan_in[6] = {K * 1.0, K * 1.0, K * F * 1.0, K * F * 1.0, F * 1.0, F * 1.0};
    std::uint64_t counter = 0;
    auto tensors = m.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        const double bound = 1.0 / std::sqrt(fan_in[t]);
        for (double& v : tensors[t]) v = (2.0 * counter_uniform(seed, counter++) - 1.0) * bound;
    }
    return m;
}

std::array<std::span<double>, 6> CnnModel::tensors() {
    return {conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b};
}

std::array<std::span<const double>, 6> CnnModel::tensors() const {
    return {conv1_w, conv1_b, conv2_w, conv2_b, dense_w, dense_b};
}

std::size_t CnnModel::parameter_count() const {
    std::size_t n = 0;
    for (auto t : tensors()) n += t.size();
    return n;
}

bool CnnModel::all_finite() const {
    for (auto t : tensors()) {
        if (!std::all_of(t.begin(), t.end(), [](double v) { return std::isfinite(v); })) return false;
    }
    return true;
}

std::vector<double> cnn_forward(const CnnModel& model, std::span<const double> input) {
    require_input(model, input.size());
    ForwardCache cache;
    forward(model, input, cache);
    return std::move(cache.prob);
}

double bce_loss(std::span<const double> y, std::span<const double> y_pred) {
    require_same_length(y.size(), y_pred.size(), "bce_loss");
    if (y.empty()) throw ShapeError("bce_loss: empty vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double p = std::clamp(y_pred[i], kProbClamp, 1.0 - kProbClamp);
        sum += (1.0 - y[i]) * std::log(1.0 - p) + y[i] * std::log(p);
    }
    return -sum / static_cast<double>(y.size());
}

double binary_accuracy(std::span<const double> y, std::span<const double> y_pred) {
    require_same_length(y.size(), y_pred.size(), "binary_accuracy");
    if (y.empty()) throw ShapeError("binary_accuracy: empty vectors");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if ((y_pred[i] >= 0.5) == (y[i] == 1.0)) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

double accumulate_gradient(const CnnModel& m, std::span<const double> x, std::span<const double> y, double scale,
                           CnnModel& grad, std::vector<double>* prediction) {
    require_input(m, x.size());
    require_same_length(y.size(), m.b_max, "label vector");
    ForwardCache c;
    forward(m, x, c);
    const double loss = bce_loss(y, c.prob);
    if (prediction != nullptr) *prediction = c.prob;

    // d(mean BCE)/dz through the sigmoid is (p - y) / B; zero where the clamp is active.
    const double inv_b = 1.0 / static_cast<double>(m.b_max);
    std::vector<double> dpool(F, 0.0);
    for (std::size_t b = 0; b < m.b_max; ++b) {
        const double p = c.prob[b];
        const bool clamped = p < kProbClamp || p > 1.0 - kProbClamp;
        const double dz = clamped ? 0.0 : (p - y[b]) * inv_b * scale;
        grad.dense_b[b] += dz;
        for (std::size_t g = 0; g < F; ++g) {
            grad.dense_w[b * F + g] += dz * c.pooled[g];
            dpool[g] += dz * m.dense_w[b * F + g];
        }
    }

    std::vector<double> dh1(c.h1.size(), 0.0);
    for (std::size_t g = 0; g < F; ++g) {
        const std::size_t t = c.argmax[g];
        if (!(c.z2[t * F + g] > 0.0)) continue;
        const double dz = dpool[g];
        grad.conv2_b[g] += dz;
        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t w0 = (g * K + k) * F;
            const std::size_t h0 = (t + k) * F;
            for (std::size_t f = 0; f < F; ++f) {
                grad.conv2_w[w0 + f] += dz * c.h1[h0 + f];
                dh1[h0 + f] += dz * m.conv2_w[w0 + f];
            }
        }
    }

    const std::size_t l1 = x.size() - 1;
    for (std::size_t t = 0; t < l1; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
            if (!(c.z1[t * F + f] > 0.0)) continue;
            const double dz = dh1[t * F + f];
            if (dz == 0.0) continue;
            grad.conv1_b[f] += dz;
            for (std::size_t k = 0; k < K; ++k) grad.conv1_w[f * K + k] += dz * x[t + k];
        }
    }
    return loss;
}

CnnModel cnn_backward(const CnnModel& model, std::span<const double> input, std::span<const double> y) {
    CnnModel grad = CnnModel::zeros(model.b_max, model.input_len);
    accumulate_gradient(model, input, y, 1.0, grad);
    return grad;
}

void validate_labels(const LabelSet& labels) {
    if (labels.label_count == 0) throw InvariantError("label set has zero labels");
    if (labels.bits.size() % labels.label_count != 0) throw ShapeError("label bits not a whole number of rows");
    for (std::size_t i = 0; i < labels.vertex_count(); ++i) {
        bool any = false;
        for (auto b : labels.row(i)) {
            if (b > 1) throw InvariantError("label entry not 0/1 at vertex " + std::to_string(i));
            any = any || b == 1;
        }
        if (!any) throw InvariantError("vertex " + std::to_string(i) + " has no label set");
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InvariantError("learning rate must be positive");
    if (batch_size < 1) throw InvariantError("batch size must be at least 1");
    if (epochs < 1 || epochs > 100) throw InvariantError("epochs must be in [1, 100]");
}

void Dataset::append(std::vector<double> input, std::span<const std::uint8_t> label_row, std::size_t b_max) {
    if (label_row.size() > b_max) {
        throw ShapeError("label row has " + std::to_string(label_row.size()) + " entries, b_max is " +
                         std::to_string(b_max));
    }
    std::vector<double> y(b_max, 0.0);
    for (std::size_t k = 0; k < label_row.size(); ++k) y[k] = label_row[k] ? 1.0 : 0.0;
    inputs.push_back(std::move(input));
    labels.push_back(std::move(y));
}

TrainResult train(const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch) {
    config.validate();
    if (data.size() == 0) throw InvariantError("empty training set");
    if (data.labels.size() != data.size()) throw ShapeError("dataset inputs and labels differ in count");
    const std::size_t len = data.inputs.front().size();
    const std::size_t b_max = data.labels.front().size();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (data.inputs[i].size() != len) {
            throw ShapeError("trajectory " + std::to_string(i) + " has length " +
                             std::to_string(data.inputs[i].size()) + ", expected " + std::to_string(len));
        }
        require_same_length(data.labels[i].size(), b_max, "label vector");
    }

    TrainResult result{CnnModel::initialized(b_max, len, config.seed), {}};
    CnnModel& model = result.model;
    CnnModel grad = CnnModel::zeros(b_max, len);
    CnnModel m1 = CnnModel::zeros(b_max, len);
    CnnModel m2 = CnnModel::zeros(b_max, len);

    std::vector<std::size_t> order(data.size());
    std::vector<double> prediction;
    std::uint64_t step = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        CounterRng shuffle(splitmix64(config.seed) ^ (epoch + 1));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

        double loss_sum = 0.0;
        double acc_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const double scale = 1.0 / static_cast<double>(stop - start);
            for (auto t : grad.tensors()) std::fill(t.begin(), t.end(), 0.0);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t idx = order[k];
                loss_sum += accumulate_gradient(model, data.inputs[idx], data.labels[idx], scale, grad, &prediction);
                acc_sum += binary_accuracy(data.labels[idx], prediction);
            }

            ++step;
            const double c1 = 1.0 - std::pow(config.adam_beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(config.adam_beta2, static_cast<double>(step));
            auto params = model.tensors();
            auto grads = grad.tensors();
            auto first = m1.tensors();
            auto second = m2.tensors();
            for (std::size_t t = 0; t < params.size(); ++t) {
                for (std::size_t j = 0; j < params[t].size(); ++j) {
                    const double g = grads[t][j];
                    first[t][j] = config.adam_beta1 * first[t][j] + (1.0 - config.adam_beta1) * g;
                    second[t][j] = config.adam_beta2 * second[t][j] + (1.0 - config.adam_beta2) * g * g;
                    const double mhat = first[t][j] / c1;
                    const double vhat = second[t][j] / c2;
                    params[t][j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_eps);
                }
            }
        }
        const double count = static_cast<double>(data.size());
        EpochStats stats{epoch + 1, loss_sum / count, acc_sum / count};
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);
    }
    return result;
}

EpochStats evaluate_dataset(const CnnModel& model, const Dataset& data) {
    if (data.size() == 0) throw InvariantError("empty dataset");
    double loss = 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto p = cnn_forward(model, data.inputs[i]);
        loss += bce_loss(data.labels[i], p);
        acc += binary_accuracy(data.labels[i], p);
    }
    const double n = static_cast<double>(data.size());
    return {0, loss / n, acc / n};
}

void write_checkpoint(std::ostream& out, const CnnModel& model) {
    out << "CNN " << model.b_max << ' ' << model.input_len << '\n' << std::setprecision(17);
    const auto tensors = model.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        out << kTensorNames[t] << ' ' << tensors[t].size();
        for (double v : tensors[t]) out << ' ' << v;
        out << '\n';
    }
}

CnnModel read_checkpoint(std::istream& in) {
    std::string tag;
    std::size_t b_max = 0;
    std::size_t input_len = 0;
    if (!(in >> tag >> b_max >> input_len) || tag != "CNN" || b_max == 0 || input_len < 3) {
        throw FormatError("checkpoint: bad header");
    }
    CnnModel m = CnnModel::zeros(b_max, input_len);
    auto tensors = m.tensors();
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        std::size_t count = 0;
        if (!(in >> tag >> count) || tag != kTensorNames[t] || count != tensors[t].size()) {
            throw FormatError(std::string("checkpoint: expected tensor ") + kTensorNames[t]);
        }
        for (double& v : tensors[t]) {
            if (!(in >> v)) throw FormatError(std::string("checkpoint: truncated tensor ") + kTensorNames[t]);
        }
    }
    if (!m.all_finite()) throw FormatError("checkpoint: non-finite parameter");
    return m;
}

}  // namespace skinfit
