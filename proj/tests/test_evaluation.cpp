#include "testkit.hpp"

#include "zsar/errors.hpp"
#include "zsar/evaluation.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <random>

using namespace zsar;
using namespace zsar::testkit;
using nlohmann::json;

namespace {

void expect_same_results(const EvalReport& a, const EvalReport& b) {
    ASSERT_EQ(a.per_split.size(), b.per_split.size());
    EXPECT_EQ(a.mean.top1, b.mean.top1);
    EXPECT_EQ(a.mean.top5, b.mean.top5);
    EXPECT_EQ(a.prompts_per_class, b.prompts_per_class);
    for (std::size_t s = 0; s < a.per_split.size(); ++s) {
        const auto& x = a.per_split[s];
        const auto& y = b.per_split[s];
        EXPECT_EQ(x.top1, y.top1);
        EXPECT_EQ(x.top5, y.top5);
        ASSERT_EQ(x.samples.size(), y.samples.size());
        for (std::size_t i = 0; i < x.samples.size(); ++i) {
            EXPECT_EQ(x.samples[i].path, y.samples[i].path);
            EXPECT_EQ(x.samples[i].top, y.samples[i].top);
            EXPECT_EQ(x.samples[i].top_scores, y.samples[i].top_scores);
        }
    }
}

}  // namespace

TEST(ParseSplit, ColumnsIndicesAndInference) {
    const LabelSpace classes({"ApplyEyeMakeup", "BandMarching"});
    const auto s = parse_split(
        "# comment\n"
        "a/one.avi\t1\n"
        "b/two.avi   ApplyEyeMakeup\n"
        "\n"
        "BandMarching/v_BandMarching_g01_c01.avi\n",
        classes, "/data", "test");
    ASSERT_EQ(s.entries.size(), 3u);
    EXPECT_EQ(s.entries[0].class_index, 1u);
    EXPECT_EQ(s.entries[0].path, std::filesystem::path("/data/a/one.avi"));
    EXPECT_EQ(s.entries[1].class_index, 0u);
    EXPECT_EQ(s.entries[2].class_index, 1u);
    EXPECT_THROW(parse_split("x.avi\t7\n", classes, "/d", "t"), FormatError);
    EXPECT_THROW(parse_split("x.avi\tSkiing\n", classes, "/d", "t"), FormatError);
    EXPECT_THROW(parse_split("# nothing\n", classes, "/d", "t"), FormatError);
}

TEST(Metrics, AggregateIsUnweightedMean) {
    std::vector<SplitResult> splits(3);
    splits[0].top1 = 0.5;
    splits[1].top1 = 0.6;
    splits[2].top1 = 0.7;
    EXPECT_EQ(aggregate(splits).top1, 0.6);
    EXPECT_THROW(aggregate({}), DomainError);
}

TEST(Metrics, ScoreSplitExcludesFailures) {
    std::vector<SampleOutcome> samples(4);
    samples[0] = {"a", 2, false, "", {2, 0, 1}, {0.9, 0.5, 0.1}};
    samples[1] = {"b", 1, false, "", {2, 0, 1}, {0.9, 0.5, 0.1}};
    samples[2] = {"c", 0, true, "DecodeError: x", {}, {}};
    samples[3] = {"d", 0, false, "", {0, 1, 2}, {0.9, 0.5, 0.1}};
    const auto r = score_split("s", samples);
    EXPECT_EQ(r.scored, 3u);
    EXPECT_EQ(r.failed, 1u);
    EXPECT_EQ(r.top1, 2.0 / 3.0);
    EXPECT_EQ(r.top5, 1.0);
}

TEST(Metrics, TopOneNeverExceedsTopFiveOnFuzzedReports) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t classes = 1 + rng() % 20;
        const std::size_t n = 1 + rng() % 40;
        std::vector<SampleOutcome> samples;
        std::size_t want1 = 0, want5 = 0, scored = 0;
        for (std::size_t i = 0; i < n; ++i) {
            SampleOutcome o;
            o.truth = rng() % classes;
            o.failed = rng() % 10 == 0;
            if (!o.failed) {
                std::vector<std::size_t> perm(classes);
                for (std::size_t c = 0; c < classes; ++c) perm[c] = c;
                std::shuffle(perm.begin(), perm.end(), rng);
                perm.resize(std::min<std::size_t>(5, classes));
                o.top = perm;
                ++scored;
                want1 += perm[0] == o.truth;
                want5 += std::count(perm.begin(), perm.end(), o.truth) > 0;
            }
            samples.push_back(o);
        }
        const auto r = score_split("f", samples);
        ASSERT_LE(r.top1, r.top5);
        ASSERT_EQ(r.scored, scored);
        if (scored > 0) {
            ASSERT_EQ(r.top1, static_cast<double>(want1) / scored);
            ASSERT_EQ(r.top5, static_cast<double>(want5) / scored);
        }
    }
}

TEST(RunConfig, ParsesAndRoundTrips) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), four_video_spec());
    const auto cfg = ds.config();
    EXPECT_EQ(cfg.backbone, "ViT-B/16");
    EXPECT_EQ(cfg.encoder.embedding_table, ds.tables.at("ViT-B/16"));
    EXPECT_EQ(cfg.frames, 4u);
    EXPECT_EQ(cfg.descriptors.templates, (std::vector<std::string>{"a photo of {}.", "a video of a person {}."}));
    EXPECT_EQ(cfg.dataset.root, dir / "videos");
    EXPECT_EQ(cfg.workers, 2u);

    const auto again = RunConfig::from_json(cfg.to_json());
    EXPECT_EQ(again.to_json(), cfg.to_json());
    EXPECT_EQ(again.encoder.embedding_table, cfg.encoder.embedding_table);
    EXPECT_EQ(again.descriptors, cfg.descriptors);
    EXPECT_EQ(again.ablation.frames, cfg.ablation.frames);
}

TEST(RunConfig, RejectsUnknownKeysButAllowsComments) {
    const std::string base = R"({"encoder": {"backend": "file", "embedding_table": "t.emb"}, "frames": 8)";
    EXPECT_NO_THROW(RunConfig::from_json(base + R"(, "_comment": "x"})", "/tmp"));
    EXPECT_THROW(RunConfig::from_json(base + R"(, "frame": 3})", "/tmp"), ConfigError);
    EXPECT_THROW(RunConfig::from_json("[1]", "/tmp"), ConfigError);
    EXPECT_THROW(RunConfig::from_json(R"({"frames": 8})", "/tmp"), ConfigError);
    auto cfg = RunConfig::from_json(base + "}", "/tmp");
    EXPECT_EQ(cfg.encoder.embedding_table, std::filesystem::path("/tmp/t.emb"));
    cfg.frames = 0;
    EXPECT_THROW(cfg.validate(false), ConfigError);
}

TEST(RunConfig, CacheNamingPerLlm) {
    RunConfig cfg;
    cfg.cache = "/c/descriptors.json";
    cfg.llm.model_id = "gpt-3.5-turbo";
    EXPECT_EQ(cfg.cache_for("gpt-3.5-turbo"), std::filesystem::path("/c/descriptors.json"));
    const auto other = cfg.cache_for("meta/llama-2-70b");
    EXPECT_EQ(other.parent_path(), std::filesystem::path("/c"));
    EXPECT_NE(other, cfg.cache);
    EXPECT_EQ(other.extension(), ".json");
    EXPECT_EQ(other.filename().string().find('/'), std::string::npos);
    cfg.llm_caches["x"] = "/elsewhere/x.json";
    EXPECT_EQ(cfg.cache_for("x"), std::filesystem::path("/elsewhere/x.json"));
}

TEST(Evaluate, FourVideoFixture) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), four_video_spec());
    const auto report = evaluate(ds.config());
    ASSERT_EQ(report.per_split.size(), 1u);
    const auto& s = report.per_split[0];
    EXPECT_EQ(s.scored, 4u);
    EXPECT_EQ(s.top1, 0.75);
    EXPECT_EQ(s.top5, 1.0);
    EXPECT_EQ(report.mean.top1, 0.75);
    EXPECT_EQ(report.mean.top5, 1.0);
    EXPECT_EQ(report.classes, 5u);
    EXPECT_EQ(report.prompts_per_class, std::vector<std::size_t>(5, 1));
    const std::vector<std::size_t> predicted{0, 1, 2, 4};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(s.samples[i].top.front(), predicted[i]);
        EXPECT_EQ(s.samples[i].top.size(), 5u);
    }
    EXPECT_NEAR(s.samples[3].top_scores[0], 0.9 / std::sqrt(0.01 + 0.25 + 0.81), 1e-6);

    const auto doc = json::parse(report.to_json());
    EXPECT_EQ(doc["splits"][0]["top1"], 0.75);
    EXPECT_EQ(doc["config"]["frames"], 4);
    const std::string table = report.to_table();
    EXPECT_NE(table.find("75.00"), std::string::npos);
    EXPECT_NE(table.find("100.00"), std::string::npos);
    EXPECT_NE(table.find("Mean"), std::string::npos);
}

TEST(Evaluate, DeterministicAcrossRunsAndWorkers) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), ablation_spec());
    auto cfg = ds.config();
    cfg.workers = 1;
    const auto a = evaluate(cfg);
    const auto b = evaluate(cfg);
    cfg.workers = 8;
    const auto c = evaluate(cfg);
    expect_same_results(a, b);
    expect_same_results(a, c);
    EXPECT_EQ(a.prompts_per_class.front(), 8u * 2u);
}

TEST(Evaluate, SnapshotReproducesRun) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), ablation_spec());
    const auto first = evaluate(ds.config());
    const auto snapshot = RunConfig::from_json(first.config_json);
    const auto second = evaluate(snapshot);
    expect_same_results(first, second);
    EXPECT_EQ(second.config_json, first.config_json);
}

TEST(Evaluate, MissingDescriptorsNameTheClasses) {
    TempDir dir;
    auto spec = four_video_spec();
    spec.write_caches = false;
    spec.kinds = "combination";
    const auto ds = build_dataset(dir.path(), spec);
    try {
        evaluate(ds.config());
        FAIL();
    } catch (const MissingDescriptorsError& e) {
        const std::string msg = e.what();
        for (const char* id : {"ApplyEyeMakeup", "BandMarching", "CliffDiving", "Drumming", "Fencing"}) {
            EXPECT_NE(msg.find(id), std::string::npos) << msg;
        }
        EXPECT_NE(msg.find("gen-descriptors"), std::string::npos);
    }
}

TEST(Evaluate, TransportFillsColdCacheOnce) {
    TempDir dir;
    auto spec = four_video_spec();
    spec.write_caches = false;
    spec.kinds = "combination";
    const auto ds = build_dataset(dir.path(), spec);
    MockTransport transport;
    EvalDeps deps;
    deps.transport = &transport;
    const auto report = evaluate(ds.config(), deps);
    EXPECT_EQ(transport.calls(), 15u);
    EXPECT_EQ(report.prompts_per_class, std::vector<std::size_t>(5, 8));
    EXPECT_EQ(DescriptorCache::open(ds.config().cache).size(), 5u);
    const auto warm = evaluate(ds.config(), deps);
    EXPECT_EQ(transport.calls(), 15u);
    expect_same_results(report, warm);
}

TEST(Evaluate, DecodeFailuresExcludedOrAbort) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), four_video_spec());
    write_file(dir / "videos" / "broken.avi", "not a video");
    std::string split = read_file(ds.split_files[0]);
    split += "broken.avi\t0\n";
    write_file(ds.split_files[0], split);

    auto cfg = ds.config();
    EXPECT_THROW(evaluate(cfg), EvaluationAborted);

    cfg.max_failure_rate = 0.25;
    const auto r = evaluate(cfg);
    const auto& s = r.per_split[0];
    EXPECT_EQ(s.failed, 1u);
    EXPECT_EQ(s.scored, 4u);
    EXPECT_EQ(s.top1, 0.75);
    ASSERT_EQ(s.samples.size(), 5u);
    EXPECT_TRUE(s.samples[4].failed);
    EXPECT_EQ(s.samples[4].error.rfind("DecodeError", 0), 0u);
}

TEST(Evaluate, AllFailedAborts) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), four_video_spec());
    write_file(ds.split_files[0], "missing.avi\t0\n");
    auto cfg = ds.config();
    cfg.max_failure_rate = 1.0;
    EXPECT_THROW(evaluate(cfg), EvaluationAborted);
}

TEST(Evaluate, MissingEncoderTableIsEnvironmentError) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), four_video_spec());
    std::filesystem::remove(ds.tables.at("ViT-B/16"));
    EXPECT_THROW(evaluate(ds.config()), EnvironmentError);
}
