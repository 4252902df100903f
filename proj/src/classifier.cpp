#include "otsa/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace otsa {

namespace {

constexpr int kK = ModelSpec::kKernel;
constexpr int kS = ModelSpec::kStride;
constexpr int kP = ModelSpec::kPad;
constexpr double kProbFloor = 1e-12;

// Activations kept around for the backward pass.
struct ForwardCache {
    std::vector<double> pre1, act1;  // [8][O1][O1]
    std::vector<double> pre2, act2;  // [16][O2][O2]
    std::vector<double> gap;         // [16]
    std::vector<double> logits;      // [K]
    std::vector<double> probs;       // [K]
};

void conv_forward(const std::vector<double>& in, int ci_count, int in_size,
                  const std::vector<double>& w, const std::vector<double>& b, int co_count,
                  int out_size, std::vector<double>& pre) {
    pre.assign(std::size_t(co_count) * out_size * out_size, 0.0);
    for (int co = 0; co < co_count; ++co) {
        for (int ox = 0; ox < out_size; ++ox) {
            for (int oy = 0; oy < out_size; ++oy) {
                double acc = b[co];
                for (int ci = 0; ci < ci_count; ++ci) {
                    const double* in_ch = &in[std::size_t(ci) * in_size * in_size];
                    const double* w_ch =
                        &w[((std::size_t(co) * ci_count) + ci) * kK * kK];
                    for (int kx = 0; kx < kK; ++kx) {
                        const int ix = ox * kS - kP + kx;
                        if (ix < 0 || ix >= in_size) continue;
                        for (int ky = 0; ky < kK; ++ky) {
                            const int iy = oy * kS - kP + ky;
                            if (iy < 0 || iy >= in_size) continue;
                            acc += w_ch[kx * kK + ky] * in_ch[ix * in_size + iy];
                        }
                    }
                }
                pre[(std::size_t(co) * out_size + ox) * out_size + oy] = acc;
            }
        }
    }
}

// Accumulates input gradients and, when weight_grads != nullptr, weight/bias
// gradients for the same layer.
void conv_backward(const std::vector<double>& in, int ci_count, int in_size,
                   const std::vector<double>& w, int co_count, int out_size,
                   const std::vector<double>& dpre, std::vector<double>* din,
                   std::vector<double>* dw, std::vector<double>* db) {
    if (din) din->assign(std::size_t(ci_count) * in_size * in_size, 0.0);
    for (int co = 0; co < co_count; ++co) {
        for (int ox = 0; ox < out_size; ++ox) {
            for (int oy = 0; oy < out_size; ++oy) {
                const double g = dpre[(std::size_t(co) * out_size + ox) * out_size + oy];
                if (g == 0.0) continue;
                if (db) (*db)[co] += g;
                for (int ci = 0; ci < ci_count; ++ci) {
                    const double* in_ch = &in[std::size_t(ci) * in_size * in_size];
                    const std::size_t w_base = ((std::size_t(co) * ci_count) + ci) * kK * kK;
                    for (int kx = 0; kx < kK; ++kx) {
                        const int ix = ox * kS - kP + kx;
                        if (ix < 0 || ix >= in_size) continue;
                        for (int ky = 0; ky < kK; ++ky) {
                            const int iy = oy * kS - kP + ky;
                            if (iy < 0 || iy >= in_size) continue;
                            if (din)
                                (*din)[std::size_t(ci) * in_size * in_size + ix * in_size + iy] +=
                                    w[w_base + kx * kK + ky] * g;
                            if (dw)
                                (*dw)[w_base + kx * kK + ky] += in_ch[ix * in_size + iy] * g;
                        }
                    }
                }
            }
        }
    }
}

void forward(const Weights& w, const SarImage& image, ForwardCache& c) {
    const ModelSpec& spec = w.spec;
    if (image.m != spec.input_size || image.n != spec.input_size)
        throw parameter_error("classifier: image dimensions do not match the model input");
    const int o1 = spec.conv1_out();
    const int o2 = spec.conv2_out();

    conv_forward(image.v, 1, spec.input_size, w.conv1_w, w.conv1_b, ModelSpec::kConv1Filters,
                 o1, c.pre1);
    c.act1 = c.pre1;
    for (double& x : c.act1) x = std::max(x, 0.0);

    conv_forward(c.act1, ModelSpec::kConv1Filters, o1, w.conv2_w, w.conv2_b,
                 ModelSpec::kConv2Filters, o2, c.pre2);
    c.act2 = c.pre2;
    for (double& x : c.act2) x = std::max(x, 0.0);

    c.gap.assign(ModelSpec::kConv2Filters, 0.0);
    const double inv_area = 1.0 / double(o2 * o2);
    for (int f = 0; f < ModelSpec::kConv2Filters; ++f) {
        double sum = 0.0;
        const double* ch = &c.act2[std::size_t(f) * o2 * o2];
        for (int i = 0; i < o2 * o2; ++i) sum += ch[i];
        c.gap[f] = sum * inv_area;
    }

    const int K = spec.num_classes;
    c.logits.assign(K, 0.0);
    for (int k = 0; k < K; ++k) {
        double acc = w.dense_b[k];
        for (int f = 0; f < ModelSpec::kConv2Filters; ++f)
            acc += w.dense_w[std::size_t(k) * ModelSpec::kConv2Filters + f] * c.gap[f];
        c.logits[k] = acc;
    }

    c.probs.assign(K, 0.0);
    const double peak = *std::max_element(c.logits.begin(), c.logits.end());
    double norm = 0.0;
    for (int k = 0; k < K; ++k) {
        c.probs[k] = std::exp(c.logits[k] - peak);
        norm += c.probs[k];
    }
    for (int k = 0; k < K; ++k) c.probs[k] /= norm;
}

// Backward from d(loss)/d(logits); fills the input gradient and optionally a
// weight-gradient accumulator shaped like Weights.
void backward(const Weights& w, const SarImage& image, const ForwardCache& c,
              const std::vector<double>& dlogits, std::vector<double>* dinput,
              Weights* grads) {
    const ModelSpec& spec = w.spec;
    const int o1 = spec.conv1_out();
    const int o2 = spec.conv2_out();
    const int K = spec.num_classes;

    std::vector<double> dgap(ModelSpec::kConv2Filters, 0.0);
    for (int k = 0; k < K; ++k) {
        const double g = dlogits[k];
        if (grads) grads->dense_b[k] += g;
        for (int f = 0; f < ModelSpec::kConv2Filters; ++f) {
            const std::size_t idx = std::size_t(k) * ModelSpec::kConv2Filters + f;
            if (grads) grads->dense_w[idx] += g * c.gap[f];
            dgap[f] += g * w.dense_w[idx];
        }
    }

    std::vector<double> dpre2(c.pre2.size());
    const double inv_area = 1.0 / double(o2 * o2);
    for (int f = 0; f < ModelSpec::kConv2Filters; ++f) {
        const double spread = dgap[f] * inv_area;
        const std::size_t base = std::size_t(f) * o2 * o2;
        for (int i = 0; i < o2 * o2; ++i)
            dpre2[base + i] = c.pre2[base + i] > 0.0 ? spread : 0.0;
    }

    std::vector<double> dact1;
    conv_backward(c.act1, ModelSpec::kConv1Filters, o1, w.conv2_w, ModelSpec::kConv2Filters,
                  o2, dpre2, &dact1, grads ? &grads->conv2_w : nullptr,
                  grads ? &grads->conv2_b : nullptr);

    std::vector<double> dpre1(dact1.size());
    for (std::size_t i = 0; i < dact1.size(); ++i)
        dpre1[i] = c.pre1[i] > 0.0 ? dact1[i] : 0.0;

    conv_backward(image.v, 1, spec.input_size, w.conv1_w, ModelSpec::kConv1Filters, o1, dpre1,
                  dinput, grads ? &grads->conv1_w : nullptr, grads ? &grads->conv1_b : nullptr);
}

SarImage crop(const SarImage& image, int size, int off_x, int off_y) {
    SarImage out(size, size);
    for (int x = 0; x < size; ++x)
        for (int y = 0; y < size; ++y) out.at(x, y) = image.at(x + off_x, y + off_y);
    return out;
}

SarImage fit_to_input(const SarImage& image, int input_size, std::mt19937_64* rng) {
    if (image.m == input_size && image.n == input_size) return image;
    if (image.m < input_size || image.n < input_size)
        throw parameter_error("classifier: image smaller than the model input");
    int off_x = (image.m - input_size) / 2;
    int off_y = (image.n - input_size) / 2;
    if (rng) {
        off_x = int(std::uniform_int_distribution<int>(0, image.m - input_size)(*rng));
        off_y = int(std::uniform_int_distribution<int>(0, image.n - input_size)(*rng));
    }
    return crop(image, input_size, off_x, off_y);
}

Weights zero_like(const Weights& w) {
    Weights g = w;
    auto clear = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };
    clear(g.conv1_w);
    clear(g.conv1_b);
    clear(g.conv2_w);
    clear(g.conv2_b);
    clear(g.dense_w);
    clear(g.dense_b);
    return g;
}

void axpy(std::vector<double>& dst, const std::vector<double>& src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace

void ModelSpec::validate() const {
    if (num_classes < 2) throw parameter_error("model: need at least 2 classes");
    if (input_size < kKernel) throw parameter_error("model: input size too small");
}

Weights Weights::initialized(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    Weights w;
    w.spec = spec;
    w.init_seed = seed;
    std::mt19937_64 rng(seed);
    auto he_fill = [&rng](std::vector<double>& v, std::size_t count, int fan_in) {
        v.resize(count);
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
        for (double& x : v) x = dist(rng);
    };
    he_fill(w.conv1_w, std::size_t(ModelSpec::kConv1Filters) * kK * kK, kK * kK);
    w.conv1_b.assign(ModelSpec::kConv1Filters, 0.0);
    he_fill(w.conv2_w,
            std::size_t(ModelSpec::kConv2Filters) * ModelSpec::kConv1Filters * kK * kK,
            ModelSpec::kConv1Filters * kK * kK);
    w.conv2_b.assign(ModelSpec::kConv2Filters, 0.0);
    he_fill(w.dense_w, std::size_t(spec.num_classes) * ModelSpec::kConv2Filters,
            ModelSpec::kConv2Filters);
    w.dense_b.assign(spec.num_classes, 0.0);
    return w;
}

bool Weights::finite() const {
    for (const auto* v : {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense_w, &dense_b})
        for (double x : *v)
            if (!std::isfinite(x)) return false;
    return true;
}

SarImage normalize_max(const SarImage& image) {
    SarImage out = image;
    const double peak = out.max_value();
    if (peak > 0.0)
        for (double& x : out.v) x /= peak;
    return out;
}

Prediction predict(const Weights& w, const SarImage& image) {
    ForwardCache c;
    forward(w, image, c);
    Prediction p;
    p.probabilities = c.probs;
    p.predicted_class =
        int(std::max_element(c.probs.begin(), c.probs.end()) - c.probs.begin());
    return p;
}

double cross_entropy_from_prediction(const Prediction& p, int label) {
    if (label < 0 || label >= int(p.probabilities.size()))
        throw parameter_error("loss: label out of range");
    return -std::log(std::max(p.probabilities[label], kProbFloor));
}

double cross_entropy_loss(const Weights& w, const SarImage& image, int label) {
    return cross_entropy_from_prediction(predict(w, image), label);
}

ModelEval evaluate_with_input_gradient(const Weights& w, const SarImage& image, int label) {
    if (label < 0 || label >= w.spec.num_classes)
        throw parameter_error("loss: label out of range");
    ForwardCache c;
    forward(w, image, c);

    ModelEval eval;
    eval.prediction.probabilities = c.probs;
    eval.prediction.predicted_class =
        int(std::max_element(c.probs.begin(), c.probs.end()) - c.probs.begin());
    eval.loss = -std::log(std::max(c.probs[label], kProbFloor));

    std::vector<double> dlogits = c.probs;
    dlogits[label] -= 1.0;
    std::vector<double> dinput;
    backward(w, image, c, dlogits, &dinput, nullptr);
    eval.grad = SarImage(image.m, image.n);
    eval.grad.v = std::move(dinput);
    return eval;
}

PixelGradient input_gradient(const Weights& w, const SarImage& image, int label) {
    return evaluate_with_input_gradient(w, image, label).grad;
}

TrainResult train(const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& eval_set, const ModelSpec& spec,
                  const TrainConfig& config) {
    spec.validate();
    if (train_set.empty()) throw parameter_error("train: empty dataset");
    if (config.batch_size < 1) throw parameter_error("train: batch size must be >= 1");
    for (const TrainSample& s : train_set)
        if (s.label < 0 || s.label >= spec.num_classes)
            throw parameter_error("train: label out of range");

    TrainResult result;
    result.weights = Weights::initialized(spec, derive_seed(config.seed, "init"));
    std::mt19937_64 rng(derive_seed(config.seed, "train"));

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    // Fixed center crops for the per-epoch loss metric; the augmentation
    // crops inside the epoch loop are drawn fresh from the rng.
    std::vector<SarImage> metric_crops;
    metric_crops.reserve(train_set.size());
    for (const TrainSample& s : train_set)
        metric_crops.push_back(normalize_max(fit_to_input(s.image, spec.input_size, nullptr)));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        std::size_t cursor = 0;
        while (cursor < order.size()) {
            const std::size_t batch_end =
                std::min(cursor + std::size_t(config.batch_size), order.size());
            Weights grads = zero_like(result.weights);
            const double inv_batch = 1.0 / double(batch_end - cursor);
            for (std::size_t i = cursor; i < batch_end; ++i) {
                const TrainSample& s = train_set[order[i]];
                const SarImage img =
                    config.augment_crops
                        ? normalize_max(fit_to_input(s.image, spec.input_size, &rng))
                        : metric_crops[order[i]];
                ForwardCache c;
                forward(result.weights, img, c);
                std::vector<double> dlogits = c.probs;
                dlogits[s.label] -= 1.0;
                backward(result.weights, img, c, dlogits, nullptr, &grads);
            }
            const double scale = -config.learning_rate * inv_batch;
            axpy(result.weights.conv1_w, grads.conv1_w, scale);
            axpy(result.weights.conv1_b, grads.conv1_b, scale);
            axpy(result.weights.conv2_w, grads.conv2_w, scale);
            axpy(result.weights.conv2_b, grads.conv2_b, scale);
            axpy(result.weights.dense_w, grads.dense_w, scale);
            axpy(result.weights.dense_b, grads.dense_b, scale);
            cursor = batch_end;
        }
        if (!result.weights.finite())
            throw numerical_error("train: non-finite weights after epoch " +
                                  std::to_string(epoch));
        double epoch_loss = 0.0;
        for (std::size_t i = 0; i < train_set.size(); ++i) {
            ForwardCache c;
            forward(result.weights, metric_crops[i], c);
            epoch_loss += -std::log(std::max(c.probs[train_set[i].label], kProbFloor));
        }
        result.epoch_losses.push_back(epoch_loss / double(train_set.size()));
    }

    int correct = 0;
    for (const TrainSample& s : eval_set) {
        const SarImage img = normalize_max(fit_to_input(s.image, spec.input_size, nullptr));
        if (predict(result.weights, img).predicted_class == s.label) ++correct;
    }
    result.heldout_accuracy =
        eval_set.empty() ? 0.0 : double(correct) / double(eval_set.size());
    return result;
}

namespace {

constexpr char kWeightsMagic[6] = {'O', 'T', 'S', 'A', 'W', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xffu;
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw format_error("dimensions", "weights: truncated header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
    for (double x : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = (bits >> (8 * i)) & 0xffu;
        os.write(reinterpret_cast<const char*>(b), 8);
    }
}

void read_doubles(std::istream& is, std::vector<double>& v, std::size_t count) {
    v.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        if (!is) throw format_error("layer data", "weights: truncated tensor data");
        std::uint64_t bits = 0;
        for (int j = 0; j < 8; ++j) bits |= std::uint64_t(b[j]) << (8 * j);
        std::memcpy(&v[i], &bits, 8);
    }
}

}  // namespace

void save_weights(const Weights& w, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("weights: cannot open for writing: " + path);
    os.write(kWeightsMagic, sizeof(kWeightsMagic));
    write_u32(os, std::uint32_t(w.spec.input_size));
    write_u32(os, std::uint32_t(w.spec.num_classes));
    write_doubles(os, w.conv1_w);
    write_doubles(os, w.conv1_b);
    write_doubles(os, w.conv2_w);
    write_doubles(os, w.conv2_b);
    write_doubles(os, w.dense_w);
    write_doubles(os, w.dense_b);
    if (!os) throw io_error("weights: write failed: " + path);
}

Weights load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("weights: cannot open: " + path);
    char magic[sizeof(kWeightsMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kWeightsMagic, sizeof(magic)) != 0)
        throw format_error("magic", "weights: bad magic bytes (expected OTSAW1)");
    ModelSpec spec;
    spec.input_size = int(read_u32(is));
    spec.num_classes = int(read_u32(is));
    spec.validate();
    Weights w;
    w.spec = spec;
    read_doubles(is, w.conv1_w, std::size_t(ModelSpec::kConv1Filters) * kK * kK);
    read_doubles(is, w.conv1_b, ModelSpec::kConv1Filters);
    read_doubles(is, w.conv2_w,
                 std::size_t(ModelSpec::kConv2Filters) * ModelSpec::kConv1Filters * kK * kK);
    read_doubles(is, w.conv2_b, ModelSpec::kConv2Filters);
    read_doubles(is, w.dense_w, std::size_t(spec.num_classes) * ModelSpec::kConv2Filters);
    read_doubles(is, w.dense_b, spec.num_classes);
    return w;
}

}  // namespace otsa
