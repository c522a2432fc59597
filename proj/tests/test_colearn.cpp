#include <doctest.h>

#include <cmath>
#include <memory>

#include "colearn/colearn.hpp"
#include "colearn/config.hpp"
#include "colearn/data.hpp"
#include "colearn/errors.hpp"
#include "colearn/eval.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace colearn;

namespace {

struct Problem {
    SyntheticProblem data;
    AdaptationModel source;
    std::shared_ptr<const FeatureBank> bank;
};

Problem small_problem(std::uint64_t seed, std::size_t per_class = 40) {
    RunConfig c;
    c.set_seed(seed);
    c.synthetic.source_per_class = per_class;
    c.synthetic.target_per_class = per_class;
    Problem p{generate(c.synthetic), {}, nullptr};
    c.source_train.epochs = 15;
    p.source = train_source(p.data.source, c.model.extractor_dims(c.synthetic.input_dim), c.synthetic.classes,
                            c.source_train);
    p.bank = std::make_shared<const FeatureBank>(p.data.bank);
    return p;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    const ColearnConfig c;
    CHECK(c.scheme.kind == SchemeKind::MatchOrConf);
    CHECK(c.scheme.gamma == 0.5);
    CHECK(c.episodes == 15);
    CHECK(c.batch_size == 50);
    CHECK(c.lr == 0.01);
    CHECK(c.lr_after_decay == 0.001);
    CHECK(c.decay_episode == 10);
    CHECK(c.temperature == 0.01);
    CHECK(c.centroid_subset == CentroidSubset::All);
    CHECK(c.centroid_iterations == 1);
    CHECK(c.loss_coefficient == 1.0);
    c.validate();

    for (std::size_t e = 1; e <= 10; ++e) CHECK(c.learning_rate(e) == 0.01);
    for (std::size_t e = 11; e <= 15; ++e) CHECK(c.learning_rate(e) == 0.001);

    auto bad = [](auto mutate) {
        ColearnConfig k;
        mutate(k);
        CHECK_THROWS_AS(k.validate(), InvalidArgument);
    };
    bad([](ColearnConfig& k) { k.episodes = 0; });
    bad([](ColearnConfig& k) { k.lr = 0.0; });
    bad([](ColearnConfig& k) { k.batch_size = 0; });
    bad([](ColearnConfig& k) { k.scheme.gamma = 1.1; });
    bad([](ColearnConfig& k) { k.temperature = 0.0; });
    bad([](ColearnConfig& k) { k.centroid_iterations = 0; });
    bad([](ColearnConfig& k) { k.loss_coefficient = -1.0; });
}

TEST_CASE("initial centroids come from the source model's probabilities") {
    const Problem p = small_problem(3);
    const ColearnSession s(p.source, p.bank, p.data.target.inputs, ColearnConfig{});
    CHECK(s.model().classifier_frozen);
    CHECK(s.model().extractor == p.source.extractor);

    const Matrix probs = forward_batch(p.source, p.data.target.inputs).probs;
    const auto mu = oracle::centroids(oracle::to_rows(p.bank->features()), oracle::to_rows(probs),
                                      std::vector<bool>(p.bank->size(), true));
    for (std::size_t i = 0; i < mu.size(); ++i)
        for (std::size_t k = 0; k < mu[i].size(); ++k) CHECK(std::abs(s.centroids().centroids(i, k) - mu[i][k]) < 1e-10);
}

TEST_CASE("uniform source outputs give identical centroids") {
    Problem p = small_problem(4);
    for (double& w : p.source.classifier.weight.data()) w = 0.0;
    for (double& b : p.source.classifier.bias) b = 0.0;
    const ColearnSession s(p.source, p.bank, p.data.target.inputs, ColearnConfig{});
    const Matrix& c = s.centroids().centroids;
    for (std::size_t i = 1; i < c.rows(); ++i)
        for (std::size_t k = 0; k < c.cols(); ++k) CHECK(std::abs(c(i, k) - c(0, k)) < 1e-12);
}

TEST_CASE("misaligned inputs are rejected") {
    const Problem p = small_problem(5);
    Matrix fewer(p.data.target.inputs.rows() - 1, p.data.target.inputs.cols());
    CHECK_THROWS_AS(ColearnSession(p.source, p.bank, fewer, ColearnConfig{}), InvalidArgument);
    Matrix narrow(p.data.target.inputs.rows(), 3);
    CHECK_THROWS_AS(ColearnSession(p.source, p.bank, narrow, ColearnConfig{}), InvalidArgument);
    CHECK_THROWS_AS(ColearnSession(p.source, p.bank, p.data.target.inputs, ColearnConfig{}, Labels{0, 1}),
                    InvalidArgument);
}

TEST_CASE("an empty pseudolabel set skips training but refreshes centroids") {
    const Problem p = small_problem(6);
    ColearnConfig cfg;
    cfg.scheme = {SchemeKind::MatchAndConf, 1.0};
    ColearnSession s(p.source, p.bank, p.data.target.inputs, cfg, p.data.target_truth);
    const CentroidClassifier before = s.centroids();
    const EpisodeRecord r = s.run_episode();
    CHECK(r.pseudolabel_count == 0);
    CHECK(r.pseudolabel_proportion == 0.0);
    CHECK(r.steps == 0);
    CHECK_FALSE(r.mean_loss.has_value());
    CHECK_FALSE(r.pseudolabel_accuracy.has_value());
    CHECK(s.model().extractor == p.source.extractor);
    CHECK(s.centroids() == before);
}

TEST_CASE("centroid refresh uses the updated model") {
    const Problem p = small_problem(7);
    ColearnSession s(p.source, p.bank, p.data.target.inputs, ColearnConfig{});
    const CentroidClassifier initial = s.centroids();
    const EpisodeRecord r = s.run_episode();
    REQUIRE(r.steps > 0);
    CHECK_FALSE(s.model().extractor == p.source.extractor);
    const CentroidClassifier want = compute_centroids(*p.bank, forward_batch(s.model(), p.data.target.inputs).probs);
    CHECK(s.centroids() == want);
    CHECK_FALSE(s.centroids() == initial);
}

TEST_CASE("a run leaves the classifier and bank untouched") {
    const Problem p = small_problem(8);
    const std::string bank_bytes = encode_bank(*p.bank);
    ColearnConfig cfg;
    ColearnSession s(p.source, p.bank, p.data.target.inputs, cfg, p.data.target_truth);
    const ColearnResult res = s.run();
    CHECK(res.model.classifier == p.source.classifier);
    CHECK(res.model.classifier_frozen);
    CHECK(encode_bank(*p.bank) == bank_bytes);
    REQUIRE(res.records.size() == 15);
    for (std::size_t i = 0; i < 15; ++i) {
        const EpisodeRecord& r = res.records[i];
        CHECK(r.episode == i + 1);
        CHECK(r.learning_rate == (i < 10 ? 0.01 : 0.001));
        CHECK(r.pseudolabel_proportion >= 0.0);
        CHECK(r.pseudolabel_proportion <= 1.0);
        REQUIRE(r.adaptation_accuracy.has_value());
        REQUIRE(r.pretrained_accuracy.has_value());
    }
    CHECK(res.model == s.model());
    CHECK(res.centroids == s.centroids());
}

TEST_CASE("runs are deterministic in the seed") {
    const Problem p = small_problem(9);
    ColearnConfig cfg;
    cfg.episodes = 4;
    ColearnSession a(p.source, p.bank, p.data.target.inputs, cfg, p.data.target_truth);
    ColearnSession b(p.source, p.bank, p.data.target.inputs, cfg, p.data.target_truth);
    const ColearnResult ra = a.run(), rb = b.run();
    CHECK(ra.records == rb.records);
    CHECK(encode_model(ra.model) == encode_model(rb.model));

    cfg.seed = 99;
    ColearnSession c(p.source, p.bank, p.data.target.inputs, cfg, p.data.target_truth);
    CHECK_FALSE(encode_model(c.run().model) == encode_model(ra.model));
}

TEST_CASE("steps per episode override") {
    const Problem p = small_problem(10);
    ColearnConfig cfg;
    cfg.episodes = 2;
    cfg.steps_per_episode = 3;
    ColearnSession s(p.source, p.bank, p.data.target.inputs, cfg);
    for (const auto& r : s.run().records) CHECK(r.steps == 3);
}

TEST_CASE("pseudolabeled-only centroids and extra iterations run") {
    const Problem p = small_problem(11);
    ColearnConfig cfg;
    cfg.episodes = 3;
    cfg.centroid_subset = CentroidSubset::Pseudolabeled;
    cfg.centroid_iterations = 2;
    ColearnSession s(p.source, p.bank, p.data.target.inputs, cfg, p.data.target_truth);
    const auto res = s.run();
    const CentroidClassifier last = s.centroids();
    CentroidOptions opt;
    opt.subset = s.last_pseudolabels().mask();
    opt.iterations = 2;
    CHECK(last == compute_centroids(*p.bank, forward_batch(s.model(), p.data.target.inputs).probs, opt));
}

TEST_CASE("co-learning loss term scales linearly") {
    const Problem p = small_problem(12);
    const ColearnSession s(p.source, p.bank, p.data.target.inputs, ColearnConfig{});
    const PseudolabelSet set = s.current_pseudolabels();
    REQUIRE(set.size() > 0);

    std::vector<LabeledSample> batch;
    for (const auto& a : set.assigned) batch.push_back({p.data.target.inputs.row(a.sample), a.label});
    const LossAndGradients direct = cross_entropy_grad(s.model(), batch);
    const LossAndGradients one = colearn_loss_term(s.model(), set, p.data.target.inputs, 1.0);
    const LossAndGradients part = colearn_loss_term(s.model(), set, p.data.target.inputs, 0.3);
    const LossAndGradients none = colearn_loss_term(s.model(), set, p.data.target.inputs, 0.0);
    CHECK(one.loss == direct.loss);
    CHECK(std::abs(part.loss - 0.3 * direct.loss) < 1e-12);
    CHECK(none.loss == 0.0);
    for (std::size_t l = 0; l < direct.grads.extractor.size(); ++l) {
        const auto d = direct.grads.extractor[l].weight.data();
        const auto o = one.grads.extractor[l].weight.data();
        const auto q = part.grads.extractor[l].weight.data();
        const auto z = none.grads.extractor[l].weight.data();
        for (std::size_t k = 0; k < d.size(); ++k) {
            CHECK(o[k] == d[k]);
            CHECK(std::abs(q[k] - 0.3 * d[k]) < 1e-12);
            CHECK(z[k] == 0.0);
        }
    }
    CHECK_THROWS_AS(colearn_loss_term(s.model(), set, p.data.target.inputs, -0.1), InvalidArgument);
}

TEST_CASE("SelfConf on a model already perfect on the target is stable") {
    RunConfig c;
    c.set_seed(13);
    c.synthetic.separation = 8.0;
    c.synthetic.target_per_class = 50;
    const SyntheticProblem d = generate(c.synthetic);
    Dataset labeled = d.target;
    labeled.labels = d.target_truth;
    const AdaptationModel m =
        train_source(labeled, c.model.extractor_dims(c.synthetic.input_dim), c.synthetic.classes, c.source_train);
    const double start = accuracy(argmax_rows(forward_batch(m, d.target.inputs).probs), d.target_truth);
    REQUIRE(start == 1.0);

    ColearnConfig cfg;
    cfg.scheme = {SchemeKind::SelfConf, 0.5};
    ColearnSession s(m, std::make_shared<const FeatureBank>(d.bank), d.target.inputs, cfg, d.target_truth);
    for (const auto& r : s.run().records) {
        CHECK(r.pseudolabel_accuracy.value_or(0.0) == 1.0);
        CHECK(*r.adaptation_accuracy >= start);
    }
}

TEST_CASE("co-learning improves on the source model for the reference seed") {
    RunConfig c;
    c.set_seed(7);
    const SyntheticProblem d = generate(c.synthetic);
    const AdaptationModel m =
        train_source(d.source, c.model.extractor_dims(c.synthetic.input_dim), c.synthetic.classes, c.source_train);
    const double before = accuracy(argmax_rows(forward_batch(m, d.target.inputs).probs), d.target_truth);
    ColearnSession s(m, std::make_shared<const FeatureBank>(d.bank), d.target.inputs, c.colearn, d.target_truth);
    const auto res = s.run();
    CHECK(*res.records.back().adaptation_accuracy > before);
    CHECK(res.records.back().pseudolabel_proportion >= res.records.front().pseudolabel_proportion);
}

TEST_CASE("episode records serialize to one JSON object per line") {
    EpisodeRecord r;
    r.episode = 2;
    r.learning_rate = 0.01;
    r.pseudolabel_count = 3;
    r.pseudolabel_proportion = 0.75;
    r.steps = 1;
    r.mean_loss = 0.5;
    CHECK(to_json_line(r) ==
          R"({"episode":2,"learning_rate":0.01,"pseudolabel_count":3,"pseudolabel_proportion":0.75,)"
          R"("steps":1,"mean_loss":0.5,"pseudolabel_accuracy":null,"adaptation_accuracy":null,)"
          R"("pretrained_accuracy":null})");
}
