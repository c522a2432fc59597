#include <doctest.h>

#include <cmath>
#include <cstring>

#include "colearn/binary_io.hpp"
#include "colearn/errors.hpp"
#include "colearn/model.hpp"
#include "gradcheck.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace colearn;

namespace {

AdaptationModel zero_model(std::vector<std::size_t> dims, std::size_t classes) {
    Rng rng(0);
    AdaptationModel m = init_model(dims, classes, rng);
    for (auto& l : m.extractor.layers) {
        for (double& w : l.weight.data()) w = 0.0;
        for (double& b : l.bias) b = 0.0;
    }
    for (double& w : m.classifier.weight.data()) w = 0.0;
    for (double& b : m.classifier.bias) b = 0.0;
    return m;
}

}  // namespace

TEST_CASE("zero parameters give uniform probabilities") {
    const AdaptationModel m = zero_model({3, 5, 4}, 3);
    const ForwardResult r = forward(m, std::vector<double>{0.3, -2.0, 7.0});
    CHECK(r.features.size() == 4);
    for (double g : r.logits) CHECK(g == 0.0);
    for (double p : r.probs) CHECK(p == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("single linear layer matches a hand multiply") {
    AdaptationModel m;
    m.extractor.layers.push_back({Matrix(2, 2, std::vector<double>{1, 2, 3, 4}), Vector{0.5, -0.5}});
    m.classifier = {Matrix(2, 2, std::vector<double>{1, 0, 0, 1}), Vector{0, 1}};
    const ForwardResult r = forward(m, std::vector<double>{1, -1});
    // features = [1-2+0.5, 3-4-0.5] = [-0.5, -1.5]; logits add bias [0, 1]
    CHECK(r.features == Vector{-0.5, -1.5});
    CHECK(r.logits == Vector{-0.5, -0.5});
    CHECK(r.probs[0] == doctest::Approx(0.5));
}

TEST_CASE("forward rejects a wrong input length") {
    const AdaptationModel m = zero_model({3, 4}, 2);
    CHECK_THROWS_AS(forward(m, std::vector<double>{1, 2}), InvalidArgument);
    CHECK_THROWS_AS(forward_batch(m, Matrix(2, 4)), InvalidArgument);
}

TEST_CASE("batch forward equals per-sample forward") {
    Rng rng(21);
    const std::vector<std::size_t> dims{5, 7, 6, 3};
    const AdaptationModel m = init_model(dims, 4, rng);
    const Matrix x = testing::random_matrix(rng, 9, 5, -2, 2);
    const BatchForward b = forward_batch(m, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const ForwardResult r = forward(m, x.row(i));
        for (std::size_t k = 0; k < 3; ++k) CHECK(b.features(i, k) == r.features[k]);
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(b.logits(i, c) == r.logits[c]);
            CHECK(b.probs(i, c) == r.probs[c]);
        }
        const auto g = oracle::logits(m, std::vector<double>(x.row(i).begin(), x.row(i).end()));
        for (std::size_t c = 0; c < 4; ++c) CHECK(std::abs(g[c] - r.logits[c]) < 1e-12);
    }
}

TEST_CASE("cross entropy on two tied logits is ln 2") {
    const AdaptationModel m = zero_model({2, 3}, 2);
    const Vector x{1.0, 2.0};
    const std::vector<LabeledSample> batch{{x, 0}};
    const LossAndGradients lg = cross_entropy_grad(m, batch);
    CHECK(std::abs(lg.loss - std::log(2.0)) < 1e-15);
    CHECK(lg.loss == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK_FALSE(lg.grads.classifier.has_value());
}

TEST_CASE("saturated correct prediction has near-zero loss") {
    AdaptationModel m = zero_model({2, 2}, 2);
    m.extractor.layers[0].bias = {1.0, 0.0};
    m.classifier.weight = Matrix(2, 2, std::vector<double>{100, 0, 0, 0});
    const Vector x{0.0, 0.0};
    const std::vector<LabeledSample> batch{{x, 0}};
    CHECK(cross_entropy_grad(m, batch).loss < 1e-40);
}

TEST_CASE("empty batch gives zero loss and zero gradients") {
    Rng rng(2);
    const AdaptationModel m = init_model(std::vector<std::size_t>{3, 4, 2}, 3, rng);
    const LossAndGradients lg = cross_entropy_grad(m, {});
    CHECK(lg.loss == 0.0);
    for (const auto& l : lg.grads.extractor) {
        for (double v : l.weight.data()) CHECK(v == 0.0);
        for (double v : l.bias) CHECK(v == 0.0);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(1234);
    for (int trial = 0; trial < 10; ++trial) {
        const gradcheck::Instance inst = gradcheck::random_instance(rng);
        const gradcheck::Result r = gradcheck::run(inst);
        CHECK(r.worst < gradcheck::kTolerance);
    }
}

TEST_CASE("soft targets reduce to hard targets on one-hot rows") {
    Rng rng(8);
    const AdaptationModel m = init_model(std::vector<std::size_t>{4, 5, 3}, 3, rng);
    const Matrix x = testing::random_matrix(rng, 6, 4);
    const std::vector<std::size_t> y{0, 2, 1, 1, 0, 2};
    const Matrix t = testing::one_hot(y, 3);
    std::vector<LabeledSample> hard;
    std::vector<SoftSample> soft;
    for (std::size_t i = 0; i < 6; ++i) {
        hard.push_back({x.row(i), y[i]});
        soft.push_back({x.row(i), t.row(i)});
    }
    const auto a = cross_entropy_grad(m, hard);
    const auto b = soft_cross_entropy_grad(m, soft, true);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-14));
    REQUIRE(b.grads.classifier.has_value());
    for (std::size_t l = 0; l < a.grads.extractor.size(); ++l) {
        const auto& ga = a.grads.extractor[l].weight.data();
        const auto& gb = b.grads.extractor[l].weight.data();
        for (std::size_t k = 0; k < ga.size(); ++k) CHECK(std::abs(ga[k] - gb[k]) < 1e-14);
    }
}

TEST_CASE("sgd without momentum is theta - lr * g") {
    Rng rng(4);
    AdaptationModel m = init_model(std::vector<std::size_t>{3, 4, 2}, 2, rng);
    m.classifier_frozen = true;
    const AdaptationModel before = m;
    Gradients g = Gradients::zeros_like(m, false);
    SgdState opt = SgdState::for_model(m, 0.01, 0.0);

    sgd_step(m, g, opt);
    CHECK(m == before);

    for (auto& l : g.extractor) {
        for (double& v : l.weight.data()) v = rng.uniform(-1, 1);
        for (double& v : l.bias) v = rng.uniform(-1, 1);
    }
    sgd_step(m, g, opt);
    for (std::size_t l = 0; l < m.extractor.layers.size(); ++l) {
        const auto w0 = before.extractor.layers[l].weight.data();
        const auto w1 = m.extractor.layers[l].weight.data();
        const auto gw = g.extractor[l].weight.data();
        for (std::size_t k = 0; k < w0.size(); ++k) CHECK(w1[k] == w0[k] - 0.01 * gw[k]);
        for (std::size_t k = 0; k < before.extractor.layers[l].bias.size(); ++k) {
            CHECK(m.extractor.layers[l].bias[k] ==
                  before.extractor.layers[l].bias[k] - 0.01 * g.extractor[l].bias[k]);
        }
    }
    CHECK(m.classifier == before.classifier);
}

TEST_CASE("two momentum steps follow the velocity recursion") {
    AdaptationModel m;
    m.extractor.layers.push_back({Matrix(1, 1, std::vector<double>{2.0}), Vector{-1.0}});
    m.classifier = {Matrix(1, 1, std::vector<double>{1.0}), Vector{0.0}};
    m.classifier_frozen = true;
    SgdState opt = SgdState::for_model(m, 0.1, 0.9);
    Gradients g = Gradients::zeros_like(m, false);

    g.extractor[0].weight(0, 0) = 1.0;
    g.extractor[0].bias[0] = -2.0;
    sgd_step(m, g, opt);
    g.extractor[0].weight(0, 0) = 0.5;
    g.extractor[0].bias[0] = 3.0;
    sgd_step(m, g, opt);

    // v1 = g1, w1 = w0 - lr v1; v2 = 0.9 v1 + g2, w2 = w1 - lr v2
    const double vw1 = 1.0, vw2 = 0.9 * vw1 + 0.5;
    const double vb1 = -2.0, vb2 = 0.9 * vb1 + 3.0;
    CHECK(m.extractor.layers[0].weight(0, 0) == doctest::Approx(2.0 - 0.1 * vw1 - 0.1 * vw2).epsilon(1e-15));
    CHECK(m.extractor.layers[0].bias[0] == doctest::Approx(-1.0 - 0.1 * vb1 - 0.1 * vb2).epsilon(1e-15));
    CHECK(m.extractor.layers[0].weight(0, 0) == doctest::Approx(1.76));
    CHECK(m.extractor.layers[0].bias[0] == doctest::Approx(-0.92));
}

TEST_CASE("frozen classifier is never written") {
    Rng rng(6);
    AdaptationModel m = init_model(std::vector<std::size_t>{3, 4, 2}, 3, rng);
    m.classifier_frozen = true;
    const LinearClassifier clf = m.classifier;
    Gradients g = Gradients::zeros_like(m, true);
    for (double& v : g.classifier->weight.data()) v = 1.0;
    SgdState opt = SgdState::for_model(m, 0.5, 0.9);
    for (int i = 0; i < 20; ++i) sgd_step(m, g, opt);
    CHECK(std::memcmp(clf.weight.data().data(), m.classifier.weight.data().data(),
                      clf.weight.data().size() * sizeof(double)) == 0);
    CHECK(clf.bias == m.classifier.bias);
}

TEST_CASE("sgd rejects mismatched gradients") {
    Rng rng(7);
    AdaptationModel m = init_model(std::vector<std::size_t>{3, 4, 2}, 2, rng);
    const AdaptationModel other = init_model(std::vector<std::size_t>{3, 5, 2}, 2, rng);
    SgdState opt = SgdState::for_model(m, 0.1, 0.0);
    CHECK_THROWS_AS(sgd_step(m, Gradients::zeros_like(other, false), opt), InvalidArgument);
}

TEST_CASE("full-batch descent on a separable batch never increases the loss") {
    Rng rng(31);
    AdaptationModel m = init_model(std::vector<std::size_t>{2, 6, 3}, 2, rng);
    m.classifier_frozen = true;
    std::vector<Vector> xs;
    std::vector<LabeledSample> batch;
    for (int i = 0; i < 20; ++i) {
        const std::size_t y = i % 2;
        xs.push_back({(y ? 2.0 : -2.0) + rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)});
    }
    for (int i = 0; i < 20; ++i) batch.push_back({xs[static_cast<std::size_t>(i)], static_cast<std::size_t>(i % 2)});
    SgdState opt = SgdState::for_model(m, 0.01, 0.0);
    double prev = INFINITY;
    for (int step = 0; step < 50; ++step) {
        const LossAndGradients lg = cross_entropy_grad(m, batch);
        CHECK(lg.loss <= prev + 1e-12);
        prev = lg.loss;
        sgd_step(m, lg.grads, opt);
    }
}

TEST_CASE("init is deterministic and shaped by dims") {
    const std::vector<std::size_t> dims{4, 8, 3};
    Rng a(10), b(10), c(11);
    const MlpExtractor ea = init_extractor(dims, a), eb = init_extractor(dims, b), ec = init_extractor(dims, c);
    CHECK(ea == eb);
    CHECK_FALSE(ea == ec);
    REQUIRE(ea.layers.size() == 2);
    CHECK(ea.layers[0].weight.rows() == 8);
    CHECK(ea.layers[0].weight.cols() == 4);
    CHECK(ea.layers[1].weight.rows() == 3);
    CHECK(ea.layers[1].weight.cols() == 8);
    CHECK(ea.dims() == dims);
    for (double w : ea.layers[0].weight.data()) CHECK(std::abs(w) <= 0.5);

    Rng r(0);
    CHECK_THROWS_AS(init_extractor(std::vector<std::size_t>{4, 0, 3}, r), InvalidArgument);
    CHECK_THROWS_AS(init_extractor(std::vector<std::size_t>{}, r), InvalidArgument);
}

TEST_CASE("checkpoint round trip and corruption") {
    Rng rng(12);
    AdaptationModel m = init_model(std::vector<std::size_t>{5, 6, 4}, 3, rng);
    m.classifier_frozen = true;
    const std::string bytes = encode_model(m);
    const AdaptationModel back = decode_model(bytes);
    CHECK(back == m);
    CHECK(encode_model(back) == bytes);
    CHECK(bytes.substr(0, 4) == "CFMD");

    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_model(bad), FormatError);
    try {
        decode_model(bytes.substr(0, bytes.size() - 3));
        FAIL("truncated checkpoint accepted");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("expected") != std::string::npos);
    }
    CHECK_THROWS_AS(decode_model(bytes + "x"), FormatError);
}
