#include <doctest.h>

#include <array>

#include "colearn/errors.hpp"
#include "colearn/pseudolabel.hpp"
#include "helpers.hpp"

using namespace colearn;

namespace {

const Scheme kMoc{SchemeKind::MatchOrConf, 0.5};

BranchPrediction pred(std::size_t c, double conf) { return {c, conf}; }

}  // namespace

TEST_CASE("MatchOrConf rows") {
    CHECK(fuse(kMoc, pred(3, 0.1), pred(3, 0.2)) == 3u);
    CHECK(fuse(kMoc, pred(3, 0.9), pred(3, 0.9)) == 3u);
    CHECK_FALSE(fuse(kMoc, pred(1, 0.9), pred(2, 0.9)).has_value());
    CHECK(fuse(kMoc, pred(1, 0.9), pred(2, 0.3)) == 1u);
    CHECK(fuse(kMoc, pred(1, 0.3), pred(2, 0.9)) == 2u);
    CHECK_FALSE(fuse(kMoc, pred(1, 0.3), pred(2, 0.3)).has_value());
}

TEST_CASE("confidence threshold is strict") {
    CHECK_FALSE(fuse(kMoc, pred(1, 0.5), pred(2, 0.5)).has_value());
    CHECK(fuse(kMoc, pred(1, 0.5000001), pred(2, 0.5)) == 1u);
    CHECK_FALSE(fuse({SchemeKind::SelfConf, 0.5}, pred(1, 0.5), pred(1, 1.0)).has_value());
}

TEST_CASE("provenance follows the branch that decided") {
    CHECK(fuse_labeled(kMoc, pred(0, 0.1), pred(0, 0.1), 4)->provenance == Provenance::Match);
    CHECK(fuse_labeled(kMoc, pred(0, 0.9), pred(1, 0.1))->provenance == Provenance::AdaptConf);
    CHECK(fuse_labeled(kMoc, pred(0, 0.1), pred(1, 0.9))->provenance == Provenance::PretrainedConf);
    CHECK(fuse_labeled({SchemeKind::SelfConf, 0.5}, pred(0, 0.9), pred(1, 0.9))->provenance == Provenance::Self);
    CHECK(fuse_labeled({SchemeKind::OtherConf, 0.5}, pred(0, 0.9), pred(1, 0.9))->provenance == Provenance::Other);
    CHECK(fuse_labeled(kMoc, pred(0, 0.1), pred(0, 0.1), 4)->sample == 4);
}

TEST_CASE("ablation schemes") {
    const Scheme self{SchemeKind::SelfConf, 0.5}, other{SchemeKind::OtherConf, 0.5};
    const Scheme match{SchemeKind::Match, 0.5}, mac{SchemeKind::MatchAndConf, 0.5};
    CHECK(fuse(self, pred(1, 0.9), pred(2, 0.9)) == 1u);
    CHECK_FALSE(fuse(self, pred(1, 0.4), pred(1, 0.9)).has_value());
    CHECK(fuse(other, pred(1, 0.9), pred(2, 0.9)) == 2u);
    CHECK_FALSE(fuse(other, pred(1, 0.9), pred(1, 0.4)).has_value());
    CHECK(fuse(match, pred(2, 0.0), pred(2, 0.0)) == 2u);
    CHECK_FALSE(fuse(match, pred(1, 1.0), pred(2, 1.0)).has_value());
    CHECK(fuse(mac, pred(2, 0.9), pred(2, 0.6)) == 2u);
    CHECK_FALSE(fuse(mac, pred(2, 0.9), pred(2, 0.4)).has_value());
    CHECK_FALSE(fuse(mac, pred(1, 0.9), pred(2, 0.9)).has_value());
}

TEST_CASE("scheme names and validation") {
    for (auto k : {SchemeKind::MatchOrConf, SchemeKind::SelfConf, SchemeKind::OtherConf, SchemeKind::Match,
                   SchemeKind::MatchAndConf}) {
        CHECK(parse_scheme(to_string(k)) == k);
    }
    CHECK(to_string(SchemeKind::MatchOrConf) == "match-or-conf");
    CHECK_THROWS_AS(parse_scheme("best"), InvalidArgument);
    CHECK_THROWS_AS((Scheme{SchemeKind::Match, 1.5}.validate()), InvalidArgument);
    CHECK_THROWS_AS((Scheme{SchemeKind::Match, -0.1}.validate()), InvalidArgument);
}

TEST_CASE("identical branches label everything as matches") {
    Rng rng(1);
    const Matrix p = testing::random_stochastic(rng, 25, 4);
    const PseudolabelSet s = build_pseudolabel_set(kMoc, p, p);
    CHECK(s.size() == 25);
    CHECK(s.total_samples == 25);
    for (const auto& a : s.assigned) {
        CHECK(a.provenance == Provenance::Match);
        CHECK(a.label == argmax(p.row(a.sample)));
    }
}

TEST_CASE("gamma 0 and gamma 1 boundaries") {
    // Four samples: two agreements, two confident disagreements.
    const Matrix a(4, 2, std::vector<double>{0.9, 0.1, 0.2, 0.8, 0.7, 0.3, 0.4, 0.6});
    const Matrix p(4, 2, std::vector<double>{0.6, 0.4, 0.1, 0.9, 0.2, 0.8, 0.55, 0.45});
    const PseudolabelSet zero = build_pseudolabel_set({SchemeKind::MatchOrConf, 0.0}, a, p);
    REQUIRE(zero.size() == 2);
    CHECK(zero.assigned[0].sample == 0);
    CHECK(zero.assigned[0].label == 0);
    CHECK(zero.assigned[1].sample == 1);
    CHECK(zero.assigned[1].label == 1);
    CHECK(zero.mask() == std::vector<bool>{true, true, false, false});

    const PseudolabelSet one = build_pseudolabel_set({SchemeKind::MatchOrConf, 1.0}, a, p);
    CHECK(one == build_pseudolabel_set({SchemeKind::Match, 0.3}, a, p));
    CHECK(one.size() == 2);

    CHECK_THROWS_AS(build_pseudolabel_set(kMoc, a, Matrix(3, 2, 0.5)), InvalidArgument);
}

TEST_CASE("raising gamma never grows the confidence-gated schemes") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 30, l = 2 + rng.index(4);
        const Matrix a = testing::random_stochastic(rng, n, l), p = testing::random_stochastic(rng, n, l);
        const double g1 = rng.uniform(), g2 = g1 + (1 - g1) * rng.uniform();
        for (auto k : {SchemeKind::SelfConf, SchemeKind::OtherConf, SchemeKind::MatchAndConf}) {
            CHECK(build_pseudolabel_set({k, g2}, a, p).size() <= build_pseudolabel_set({k, g1}, a, p).size());
        }
        CHECK(build_pseudolabel_set({SchemeKind::Match, g1}, a, p) ==
              build_pseudolabel_set({SchemeKind::Match, g2}, a, p));
        // MatchOrConf always keeps every agreement.
        const PseudolabelSet m = build_pseudolabel_set({SchemeKind::MatchOrConf, g1}, a, p);
        const auto mask = m.mask();
        for (std::size_t x = 0; x < n; ++x) {
            if (argmax(a.row(x)) == argmax(p.row(x))) CHECK(mask[x]);
        }
    }
}

TEST_CASE("confidence override changes gating but not classes") {
    // Adaptation branch unsure of class 1, pre-trained branch sure of class 0.
    const Matrix a(2, 3, std::vector<double>{0.3, 0.4, 0.3, 0.3, 0.4, 0.3});
    const Matrix p(2, 3, std::vector<double>{0.98, 0.01, 0.01, 0.98, 0.01, 0.01});
    CHECK(build_pseudolabel_set(kMoc, a, p).size() == 2);
    const PseudolabelSet s = build_pseudolabel_set(kMoc, a, p, Vector{0.4, 0.6});
    REQUIRE(s.size() == 1);
    CHECK(s.assigned[0].sample == 1);
    CHECK(s.assigned[0].label == 0);
    CHECK_THROWS_AS(build_pseudolabel_set(kMoc, a, p, Vector{0.4}), InvalidArgument);
}

TEST_CASE("pseudolabel metrics") {
    PseudolabelSet s;
    s.total_samples = 4;
    s.assigned = {{0, 1, Provenance::Match}, {1, 0, Provenance::Match}, {3, 2, Provenance::AdaptConf}};
    const PseudolabelMetrics m = pseudolabel_metrics(s, Labels{1, 1, 0, 2});
    CHECK(m.proportion == 0.75);
    REQUIRE(m.accuracy.has_value());
    CHECK(*m.accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

    PseudolabelSet empty;
    empty.total_samples = 3;
    const PseudolabelMetrics e = pseudolabel_metrics(empty, Labels{0, 1, 2});
    CHECK(e.proportion == 0.0);
    CHECK_FALSE(e.accuracy.has_value());

    PseudolabelSet all;
    all.total_samples = 2;
    all.assigned = {{0, 0, Provenance::Match}, {1, 1, Provenance::Match}};
    const PseudolabelMetrics f = pseudolabel_metrics(all, Labels{0, 1});
    CHECK(f.proportion == 1.0);
    CHECK(*f.accuracy == 1.0);

    CHECK_THROWS_AS(pseudolabel_metrics(s, Labels{0, 1}), InvalidArgument);
}

TEST_CASE("pseudolabel csv") {
    PseudolabelSet s;
    s.total_samples = 5;
    s.assigned = {{0, 1, Provenance::Match}, {4, 2, Provenance::PretrainedConf}};
    CHECK(pseudolabels_to_csv(s) == "sample_id,class,provenance\n0,1,match\n4,2,pretrained_conf\n");
}
