#include "oracle.hpp"
#include "testkit.hpp"

#include "zsar/classifier.hpp"
#include "zsar/errors.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <limits>

using namespace zsar;

namespace {

EmbeddingMatrix rows(std::initializer_list<std::vector<float>> r) {
    EmbeddingMatrix m(r.begin()->size());
    for (const auto& x : r) m.append_row(x);
    return m;
}

ClassEmbedding cls(const std::string& id, std::size_t index, std::vector<double> z) {
    return {ActionClass::from_raw(id, index), EmbeddingVector{std::move(z)}, 1};
}

std::vector<std::string> order(const Prediction& p) {
    std::vector<std::string> out;
    for (const auto& [c, s] : p.ranking) out.push_back(c.raw_id);
    return out;
}

}  // namespace

TEST(Means, VideoAndClassAverages) {
    const auto v = video_embedding(rows({{1, 0}, {0, 1}, {2, 2}}));
    EXPECT_EQ(v.values, (std::vector<double>{1.0, 1.0}));
    const auto z = class_embedding(rows({{3, 4}, {0, 2}}), true);
    EXPECT_DOUBLE_EQ(z.values[0], 0.3);
    EXPECT_DOUBLE_EQ(z.values[1], 0.9);
    EXPECT_THROW(mean_rows(EmbeddingMatrix(4)), DomainError);
    EXPECT_THROW(video_embedding(rows({{0, 0}}), true), DegenerateEmbeddingError);
}

TEST(Predict, HandExample) {
    const std::vector<ClassEmbedding> classes{cls("A", 0, {1, 0}), cls("B", 1, {0, 1}), cls("C", 2, {1, 1})};
    const auto p = predict(EmbeddingVector{{2.0, 1.0}}, classes);
    EXPECT_EQ(p.predicted.raw_id, "C");
    EXPECT_EQ(order(p), (std::vector<std::string>{"C", "A", "B"}));
    EXPECT_NEAR(p.ranking[0].second, 3.0 / std::sqrt(10.0), 1e-15);
    EXPECT_NEAR(p.ranking[1].second, 2.0 / std::sqrt(5.0), 1e-15);
}

TEST(Predict, TiesGoToLowestIndex) {
    const std::vector<ClassEmbedding> classes{cls("late", 5, {1, 0}), cls("early", 2, {2, 0}), cls("off", 0, {0, 1})};
    const auto p = predict(EmbeddingVector{{1.0, 0.0}}, classes);
    EXPECT_EQ(p.predicted.raw_id, "early");
    EXPECT_EQ(order(p), (std::vector<std::string>{"early", "late", "off"}));
}

TEST(Predict, ScoresAreClampedCosines) {
    const std::vector<ClassEmbedding> classes{cls("same", 0, {1e-3, 3e-3, 7e-3}), cls("opp", 1, {-1, -3, -7})};
    const auto p = predict(EmbeddingVector{{1, 3, 7}}, classes);
    for (const auto& [c, s] : p.ranking) {
        EXPECT_LE(s, 1.0);
        EXPECT_GE(s, -1.0);
    }
    EXPECT_NEAR(p.ranking.front().second, 1.0, 1e-15);
}

TEST(Predict, Errors) {
    const std::vector<ClassEmbedding> none;
    EXPECT_THROW(predict(EmbeddingVector{{1.0}}, none), DomainError);
    const std::vector<ClassEmbedding> two{cls("a", 0, {1, 0})};
    EXPECT_THROW(predict(EmbeddingVector{{1.0, 0.0, 0.0}}, two), ShapeError);
    EXPECT_THROW(predict(EmbeddingVector{{0.0, 0.0}}, two), DegenerateEmbeddingError);
    const std::vector<ClassEmbedding> zero{cls("z", 0, {0, 0})};
    EXPECT_THROW(predict(EmbeddingVector{{1.0, 0.0}}, zero), DegenerateEmbeddingError);
    EXPECT_THROW(predict(EmbeddingVector{{std::numeric_limits<double>::quiet_NaN(), 1.0}}, two),
                 DegenerateEmbeddingError);
}

TEST(Predict, MatchesBruteForceOracle) {
    std::mt19937_64 rng(1);
    const auto start = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 1000; ++trial) {
        const auto inst = oracle::random_instance(rng);
        const auto want = oracle::scores(inst);
        const auto p = predict(video_embedding(oracle::to_matrix(inst.frames)), oracle::class_embeddings(inst));
        ASSERT_EQ(p.predicted.index, oracle::argmax(want)) << trial;
        for (const auto& [c, s] : p.ranking) ASSERT_NEAR(s, want[c.index], 1e-6) << trial;
    }
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 10.0);
}

TEST(Predict, RankingInvariantUnderPositiveScaling) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = oracle::random_instance(rng);
        const auto classes = oracle::class_embeddings(inst);
        auto v = video_embedding(oracle::to_matrix(inst.frames));
        const auto base = predict(v, classes);
        const double c = scale(rng);
        for (auto& x : v.values) x *= c;
        const auto scaled = predict(v, classes);
        ASSERT_EQ(base.predicted, scaled.predicted);
        for (std::size_t r = 0; r < base.ranking.size(); ++r) {
            ASSERT_EQ(base.ranking[r].first, scaled.ranking[r].first);
            ASSERT_NEAR(base.ranking[r].second, scaled.ranking[r].second, 1e-12);
        }
    }
}

TEST(Predict, RankingInvariantUnderClassPermutation) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = oracle::random_instance(rng);
        auto classes = oracle::class_embeddings(inst);
        const auto v = video_embedding(oracle::to_matrix(inst.frames));
        const auto base = predict(v, classes);
        std::shuffle(classes.begin(), classes.end(), rng);
        const auto shuffled = predict(v, classes);
        ASSERT_EQ(base.predicted, shuffled.predicted);
        for (std::size_t r = 0; r < base.ranking.size(); ++r) {
            ASSERT_EQ(base.ranking[r].first, shuffled.ranking[r].first);
            ASSERT_EQ(base.ranking[r].second, shuffled.ranking[r].second);
        }
    }
}

TEST(TopK, MonotoneInK) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        const auto inst = oracle::random_instance(rng);
        const auto classes = oracle::class_embeddings(inst);
        const auto p = predict(video_embedding(oracle::to_matrix(inst.frames)), classes);
        const auto& truth = classes[rng() % classes.size()].action;
        bool prev = false;
        for (std::size_t k = 1; k <= classes.size(); ++k) {
            const bool hit = topk_hit(p, truth, k);
            ASSERT_TRUE(!prev || hit);
            prev = hit;
        }
        ASSERT_TRUE(prev);
        ASSERT_EQ(topk_hit(p, truth, 1), p.predicted == truth);
    }
}

TEST(TopK, RejectsOutOfRangeK) {
    const std::vector<ClassEmbedding> classes{cls("A", 0, {1, 0}), cls("B", 1, {0, 1})};
    const auto p = predict(EmbeddingVector{{1.0, 0.0}}, classes);
    EXPECT_THROW(topk_hit(p, classes[0].action, 0), DomainError);
    EXPECT_THROW(topk_hit(p, classes[0].action, 3), DomainError);
    EXPECT_FALSE(topk_hit(p, classes[1].action, 1));
    EXPECT_TRUE(topk_hit(p, classes[1].action, 2));
}

TEST(ClassEmbeddingTable, KeyedByRawId) {
    testkit::TempDir dir;
    const std::vector<ClassEmbedding> classes{cls("Fencing", 0, {0.5, 0.25}), cls("Drumming", 1, {1, 2})};
    write_class_embeddings(dir / "c.emb", classes);
    const auto t = EmbeddingTable::read(dir / "c.emb");
    EXPECT_EQ(t.keys(), (std::vector<std::string>{"Drumming", "Fencing"}));
    EXPECT_EQ((*t.find("Fencing"))[1], 0.25f);
}
