#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otsa/ascm.hpp"

namespace otsa {

// Fixed small architecture standing in for full-scale SAR classifiers:
// conv(8, 5x5, stride 2, pad 2) -> ReLU -> conv(16, 5x5, stride 2, pad 2)
// -> ReLU -> global average pool -> dense(K) -> softmax.
struct ModelSpec {
    int input_size = 88;  // square single-channel input
    int num_classes = 4;

    static constexpr int kConv1Filters = 8;
    static constexpr int kConv2Filters = 16;
    static constexpr int kKernel = 5;
    static constexpr int kStride = 2;
    static constexpr int kPad = 2;

    int conv1_out() const { return (input_size - 1) / kStride + 1; }
    int conv2_out() const { return (conv1_out() - 1) / kStride + 1; }
    void validate() const;  // num_classes >= 2, input_size large enough
};

struct Weights {
    ModelSpec spec;
    std::uint64_t init_seed = 0;
    std::vector<double> conv1_w;  // [8][1][5][5]
    std::vector<double> conv1_b;  // [8]
    std::vector<double> conv2_w;  // [16][8][5][5]
    std::vector<double> conv2_b;  // [16]
    std::vector<double> dense_w;  // [K][16]
    std::vector<double> dense_b;  // [K]

    static Weights initialized(const ModelSpec& spec, std::uint64_t seed);
    bool finite() const;
};

struct Prediction {
    std::vector<double> probabilities;
    int predicted_class = 0;
};

struct TrainSample {
    SarImage image;  // >= input_size in both dims; larger images are cropped
    int label = 0;
};

struct TrainConfig {
    int epochs = 60;
    double learning_rate = 0.1;
    int batch_size = 32;
    // When set, oversized training images get a fresh random crop each epoch
    // instead of the deterministic center crop.
    bool augment_crops = false;
    std::uint64_t seed = 1;
};

struct TrainResult {
    Weights weights;
    std::vector<double> epoch_losses;  // mean training loss per epoch
    double heldout_accuracy = 0.0;     // on the eval set passed to train()
};

// Scales an image so its maximum is 1 (no-op for non-positive maxima).
// Applied to every clean image before it reaches the model, which calibrates
// pixel values against scatterer amplitudes in [0, 10].
SarImage normalize_max(const SarImage& image);

// Plain seeded SGD. Training images larger than the input size get a fresh
// random crop each epoch; eval images use the center crop. Deterministic per
// seed. Throws parameter_error on an empty dataset or out-of-range labels.
TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& eval_set, const ModelSpec& spec,
                  const TrainConfig& config);

Prediction predict(const Weights& w, const SarImage& image);

// -log(probabilities[label]) with the probability floored at 1e-12.
double cross_entropy_loss(const Weights& w, const SarImage& image, int label);
double cross_entropy_from_prediction(const Prediction& p, int label);

// d(cross_entropy_loss)/d(pixel), backpropagated to the input.
PixelGradient input_gradient(const Weights& w, const SarImage& image, int label);

// One forward + one backward pass; what the attack loop consumes per
// iteration.
struct ModelEval {
    Prediction prediction;
    double loss = 0.0;
    PixelGradient grad;
};
ModelEval evaluate_with_input_gradient(const Weights& w, const SarImage& image, int label);

// Binary weight file: magic "OTSAW1", spec dimensions, then little-endian
// 64-bit floats per layer in declaration order.
void save_weights(const Weights& w, const std::string& path);
Weights load_weights(const std::string& path);

}  // namespace otsa
