#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>
#include <vector>

#include "otsa/classifier.hpp"

using namespace otsa;

namespace {

// Bright block on the left vs on the right; linearly separable by design.
std::vector<TrainSample> toy_blobs(int per_class, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> bright(0.7, 1.0);
    std::uniform_int_distribution<int> jitter(-1, 1);
    std::vector<TrainSample> samples;
    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < per_class; ++i) {
            SarImage img(16, 16, 0.05);
            const int col0 = (cls == 0 ? 2 : 9) + jitter(rng);
            const int row0 = 5 + jitter(rng);
            const double level = bright(rng);
            for (int x = row0; x < row0 + 6; ++x)
                for (int y = col0; y < col0 + 5; ++y) img.at(x, y) = level;
            samples.push_back({std::move(img), cls});
        }
    }
    return samples;
}

// Nearest-centroid oracle confirming the toy set is separable before asking
// the network to fit it.
double centroid_accuracy(const std::vector<TrainSample>& train,
                         const std::vector<TrainSample>& test) {
    const std::size_t dim = train.front().image.v.size();
    std::vector<std::vector<double>> centroids(2, std::vector<double>(dim, 0.0));
    std::vector<int> counts(2, 0);
    for (const TrainSample& s : train) {
        for (std::size_t i = 0; i < dim; ++i) centroids[s.label][i] += s.image.v[i];
        ++counts[s.label];
    }
    for (int c = 0; c < 2; ++c)
        for (double& v : centroids[c]) v /= counts[c];
    int correct = 0;
    for (const TrainSample& s : test) {
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            d0 += (s.image.v[i] - centroids[0][i]) * (s.image.v[i] - centroids[0][i]);
            d1 += (s.image.v[i] - centroids[1][i]) * (s.image.v[i] - centroids[1][i]);
        }
        if ((d0 < d1 ? 0 : 1) == s.label) ++correct;
    }
    return double(correct) / double(test.size());
}

ModelSpec toy_spec() {
    ModelSpec spec;
    spec.input_size = 16;
    spec.num_classes = 2;
    return spec;
}

SarImage random_image(int size, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pix(0.0, 1.0);
    SarImage img(size, size);
    for (double& p : img.v) p = pix(rng);
    return img;
}

}  // namespace

TEST_CASE("toy separable set trains to perfect held-out accuracy") {
    const std::vector<TrainSample> train_set = toy_blobs(12, 1);
    const std::vector<TrainSample> test_set = toy_blobs(6, 2);
    REQUIRE(centroid_accuracy(train_set, test_set) == 1.0);

    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 4;
    cfg.seed = 3;
    const TrainResult result = train(train_set, test_set, toy_spec(), cfg);
    CHECK(result.heldout_accuracy == 1.0);
    CHECK(result.epoch_losses.back() < result.epoch_losses.front());
}

TEST_CASE("zero epochs returns the seeded initialization unchanged") {
    const std::vector<TrainSample> set = toy_blobs(3, 4);
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.seed = 77;
    const TrainResult result = train(set, set, toy_spec(), cfg);
    const Weights init = Weights::initialized(toy_spec(), derive_seed(77, "init"));
    CHECK(result.weights.conv1_w == init.conv1_w);
    CHECK(result.weights.conv2_w == init.conv2_w);
    CHECK(result.weights.dense_w == init.dense_w);
}

TEST_CASE("training rejects bad inputs") {
    TrainConfig cfg;
    CHECK_THROWS_AS(train({}, {}, toy_spec(), cfg), parameter_error);
    std::vector<TrainSample> bad = toy_blobs(2, 5);
    bad[0].label = 7;
    CHECK_THROWS_AS(train(bad, bad, toy_spec(), cfg), parameter_error);
}

TEST_CASE("predictions are normalized, deterministic, dimension-checked") {
    const Weights w = Weights::initialized(toy_spec(), 11);
    const SarImage img = random_image(16, 21);
    const Prediction p = predict(w, img);
    double sum = 0.0;
    for (double q : p.probabilities) {
        CHECK(q >= 0.0);
        CHECK(q <= 1.0);
        sum += q;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    const Prediction again = predict(w, img);
    CHECK(p.probabilities == again.probabilities);

    CHECK_THROWS_AS(predict(w, random_image(20, 3)), parameter_error);
}

TEST_CASE("zero final layer predicts the uniform distribution") {
    Weights w = Weights::initialized(toy_spec(), 13);
    std::fill(w.dense_w.begin(), w.dense_w.end(), 0.0);
    std::fill(w.dense_b.begin(), w.dense_b.end(), 0.0);
    const Prediction p = predict(w, random_image(16, 5));
    for (double q : p.probabilities) CHECK(q == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("cross-entropy values") {
    CHECK(cross_entropy_from_prediction({{1.0, 0.0}, 0}, 0) == 0.0);
    Prediction uniform;
    uniform.probabilities.assign(10, 0.1);
    CHECK(cross_entropy_from_prediction(uniform, 3) ==
          doctest::Approx(2.3025850929940457).epsilon(1e-12));
    CHECK(cross_entropy_from_prediction({{0.5, 0.5}, 0}, 1) ==
          doctest::Approx(0.69314718055994531).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy_from_prediction(uniform, 10), parameter_error);
}

TEST_CASE("input gradient of a constant classifier is zero") {
    Weights w = Weights::initialized(toy_spec(), 17);
    std::fill(w.dense_w.begin(), w.dense_w.end(), 0.0);
    const PixelGradient g = input_gradient(w, random_image(16, 23), 0);
    for (double v : g.v) CHECK(v == 0.0);
}

TEST_CASE("input gradient matches finite differences") {
    const Weights w = Weights::initialized(toy_spec(), 19);
    SarImage img = random_image(16, 29);
    const int label = 1;
    const PixelGradient g = input_gradient(w, img, label);
    CHECK(g.finite());

    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> pick(0, int(img.v.size()) - 1);
    const double h = 1e-5;
    for (int i = 0; i < 20; ++i) {
        const int p = pick(rng);
        const double orig = img.v[p];
        img.v[p] = orig + h;
        const double fp = cross_entropy_loss(w, img, label);
        img.v[p] = orig - h;
        const double fm = cross_entropy_loss(w, img, label);
        img.v[p] = orig;
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::abs(g.v[p] - fd) <= 1e-3 * std::max(std::abs(fd), 1e-6));
    }
}

TEST_CASE("single evaluation is pure and self-consistent") {
    const Weights w = Weights::initialized(toy_spec(), 37);
    const SarImage img = random_image(16, 41);
    const PixelGradient first = input_gradient(w, img, 0);
    predict(w, random_image(16, 43));  // unrelated evaluation in between
    const ModelEval eval = evaluate_with_input_gradient(w, img, 0);
    CHECK(eval.grad.v == first.v);
    CHECK(eval.loss == cross_entropy_loss(w, img, 0));
}

TEST_CASE("normalize_max scales the peak to one") {
    SarImage img(4, 4, 0.0);
    img.at(1, 2) = 2.5;
    img.at(3, 3) = 1.25;
    const SarImage norm = normalize_max(img);
    CHECK(norm.at(1, 2) == 1.0);
    CHECK(norm.at(3, 3) == 0.5);
    const SarImage zeros = normalize_max(SarImage(3, 3, 0.0));
    for (double p : zeros.v) CHECK(p == 0.0);
}

TEST_CASE("weights round-trip through the binary format") {
    const Weights w = Weights::initialized(toy_spec(), 53);
    const std::string path = "weights_roundtrip.bin";
    save_weights(w, path);
    const Weights r = load_weights(path);
    CHECK(r.spec.input_size == w.spec.input_size);
    CHECK(r.spec.num_classes == w.spec.num_classes);
    CHECK(r.conv1_w == w.conv1_w);
    CHECK(r.conv1_b == w.conv1_b);
    CHECK(r.conv2_w == w.conv2_w);
    CHECK(r.conv2_b == w.conv2_b);
    CHECK(r.dense_w == w.dense_w);
    CHECK(r.dense_b == w.dense_b);

    // corrupt the magic
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_weights(path), format_error);
    std::remove(path.c_str());
}
