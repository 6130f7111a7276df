#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace skinfit {

/// Multi-label trajectory classifier:
///
///   input (L) -> Conv1D(8, k=2) + ReLU -> Conv1D(8, k=2) + ReLU
///             -> global max-pool (8) -> Dense(b_max) -> sigmoid
///
/// Convolutions are stride 1 without padding, so hidden lengths are L-1 and L-2.
struct CnnModel {
    static constexpr std::size_t kFilters = 8;
    static constexpr std::size_t kKernel = 2;

    std::size_t b_max = 0;
    std::size_t input_len = 0;

    std::vector<double> conv1_w;  ///< [filter][tap], single input channel
    std::vector<double> conv1_b;  ///< [filter]
    std::vector<double> conv2_w;  ///< [filter][tap][input channel]
    std::vector<double> conv2_b;  ///< [filter]
    std::vector<double> dense_w;  ///< [label][filter]
    std::vector<double> dense_b;  ///< [label]

    /// All parameters zero.
    static CnnModel zeros(std::size_t b_max, std::size_t input_len);
    /// Uniform in +-1/sqrt(fan_in), drawn from a counter-based generator keyed by seed.
    static CnnModel initialized(std::size_t b_max, std::size_t input_len, std::uint64_t seed);

    std::array<std::span<double>, 6> tensors();
    std::array<std::span<const double>, 6> tensors() const;
    std::size_t parameter_count() const;

    bool all_finite() const;
};

/// Probability per label, each in (0, 1). Throws ShapeError when the input is
/// shorter than 3 values or does not match model.input_len.
std::vector<double> cnn_forward(const CnnModel& model, std::span<const double> input);

/// Mean binary cross-entropy over the vector; predictions are clamped to
/// [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> y, std::span<const double> y_pred);

/// Fraction of entries where (y_pred >= 0.5) agrees with (y == 1).
double binary_accuracy(std::span<const double> y, std::span<const double> y_pred);

/// Exact gradient of bce_loss(y, cnn_forward(model, input)) with respect to
/// every parameter, returned in a model-shaped record. Max-pooling routes the
/// gradient to the first maximal position.
CnnModel cnn_backward(const CnnModel& model, std::span<const double> input, std::span<const double> y);

/// Adds scale * gradient into `grad` and returns the example's loss. Used by
/// the training loop to accumulate a minibatch without reallocating.
double accumulate_gradient(const CnnModel& model, std::span<const double> input, std::span<const double> y,
                           double scale, CnnModel& grad, std::vector<double>* prediction = nullptr);

/// Binary per-vertex membership labels, row-major (vertex x label).
struct LabelSet {
    std::size_t label_count = 0;
    std::vector<std::uint8_t> bits;

    std::size_t vertex_count() const { return label_count == 0 ? 0 : bits.size() / label_count; }
    std::span<const std::uint8_t> row(std::size_t i) const { return {bits.data() + i * label_count, label_count}; }
    std::span<std::uint8_t> row(std::size_t i) { return {bits.data() + i * label_count, label_count}; }
};

/// Throws InvariantError unless every entry is 0/1 and every row has a 1.
void validate_labels(const LabelSet& labels);

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 256;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

struct Dataset {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> labels;  ///< 0/1 targets, b_max each

    std::size_t size() const { return inputs.size(); }
    void append(std::vector<double> input, std::span<const std::uint8_t> label_row, std::size_t b_max);
};

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    double binary_accuracy = 0.0;
};

struct TrainResult {
    CnnModel model;
    std::vector<EpochStats> history;
};

/// Minibatch Adam over a per-epoch shuffle. Bit-deterministic for a given
/// (dataset order, config). `on_epoch` is invoked after every epoch.
TrainResult train(const Dataset& data, const TrainConfig& config,
                  const std::function<void(const EpochStats&)>& on_epoch = {});

/// Mean loss and binary accuracy of `model` over `data`.
EpochStats evaluate_dataset(const CnnModel& model, const Dataset& data);

/// "CNN <b_max> <input_len>" followed by one line per tensor in declaration order.
void write_checkpoint(std::ostream& out, const CnnModel& model);
CnnModel read_checkpoint(std::istream& in);

}  // namespace skinfit
