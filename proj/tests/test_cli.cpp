#include "cli.hpp"
#include "testkit.hpp"

#include "zsar/embedding.hpp"
#include "zsar/video.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <sys/wait.h>

using namespace zsar;
using namespace zsar::testkit;

namespace {

struct Captured {
    int code = -1;
    std::string out;
    std::string err;
};

struct Harness {
    std::shared_ptr<MockTransport> transport = std::make_shared<MockTransport>();
    std::size_t transports_made = 0;

    Captured run(const std::vector<std::string>& args) {
        std::ostringstream out, err;
        cli::Environment env;
        env.out = &out;
        env.err = &err;
        env.transport_factory = [this](const LlmConfig&, bool) -> std::unique_ptr<ChatTransport> {
            ++transports_made;
            struct Forward : ChatTransport {
                std::shared_ptr<MockTransport> target;
                std::string complete(const ChatRequest& r) override { return target->complete(r); }
            };
            auto f = std::make_unique<Forward>();
            f->target = transport;
            return f;
        };
        env.encoder_factory = make_encoder;
        Captured c;
        c.code = cli::run(args, env);
        c.out = out.str();
        c.err = err.str();
        return c;
    }
};

// Three classes with fixed directions; the clip's frames lean towards
// snowboarding, so it ranks first.
struct SnowboardingFixture {
    TempDir dir;
    std::vector<float> snow{1.0f, 0.2f, 0.0f, 0.1f};
    std::vector<float> ski{0.6f, 0.8f, 0.0f, 0.0f};
    std::vector<float> surf{0.0f, 0.1f, 1.0f, 0.3f};
    std::vector<std::vector<float>> frames{{0.9f, 0.3f, 0.1f, 0.0f}, {0.7f, 0.1f, 0.2f, 0.4f}};

    SnowboardingFixture() {
        write_file(dir / "classes.txt", "snowboarding\nskiing\nsurfing\n");
        const auto keys = write_frame_dir(dir / "clip", frames.size(), 42);
        EmbeddingTable t(4);
        t.put("snowboarding", snow);
        t.put("skiing", ski);
        t.put("surfing", surf);
        for (std::size_t i = 0; i < keys.size(); ++i) t.put(keys[i], frames[i]);
        t.write(dir / "table.emb");
        write_file(dir / "run.json", R"({
          "encoder": {"backend": "file", "embedding_table": "table.emb", "embed_dim": 4, "model_tag": "fixture"},
          "frames": 2,
          "descriptors": {"kinds": "class"},
          "dataset": {"classes": "classes.txt"},
          "llm": {"api_key_env": "ZSAR_TEST_UNSET_API_KEY"}
        })");
    }

    double oracle_score(const std::vector<float>& cls) const {
        double v[4] = {0, 0, 0, 0};
        for (const auto& f : frames) {
            for (int k = 0; k < 4; ++k) v[k] += f[k] / 2.0;
        }
        double dot = 0, nv = 0, nc = 0;
        for (int k = 0; k < 4; ++k) {
            dot += v[k] * cls[k];
            nv += v[k] * v[k];
            nc += static_cast<double>(cls[k]) * cls[k];
        }
        return dot / std::sqrt(nv * nc);
    }
};

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST(Cli, ClassifyPrintsTopClassAndScore) {
    SnowboardingFixture fx;
    Harness h;
    const auto r = h.run({"classify", "--config", (fx.dir / "run.json").string(), "--video", (fx.dir / "clip").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto lines = lines_of(r.out);
    ASSERT_EQ(lines.size(), 3u);
    std::istringstream first(lines[0]);
    int rank = 0;
    std::string name;
    double score = 0;
    first >> rank >> name >> score;
    EXPECT_EQ(rank, 1);
    EXPECT_EQ(name, "snowboarding");
    EXPECT_NEAR(score, fx.oracle_score(fx.snow), 5e-7);
    EXPECT_GT(fx.oracle_score(fx.snow), fx.oracle_score(fx.ski));
    EXPECT_GT(fx.oracle_score(fx.snow), fx.oracle_score(fx.surf));
    EXPECT_EQ(h.transports_made, 0u);

    const auto j = h.run({"classify", "--config", (fx.dir / "run.json").string(), "--video",
                          (fx.dir / "clip").string(), "--format", "json"});
    ASSERT_EQ(j.code, 0);
    const auto doc = nlohmann::json::parse(j.out);
    EXPECT_EQ(doc["ranking"][0]["class"], "snowboarding");
    EXPECT_NEAR(doc["ranking"][0]["score"].get<double>(), fx.oracle_score(fx.snow), 1e-12);
}

TEST(Cli, GenDescriptorsIsIdempotent) {
    TempDir dir;
    write_file(dir / "classes.txt", "Drumming\nFencing\n");
    const std::string cache = (dir / "cache.json").string();
    Harness h;
    const std::vector<std::string> args{"gen-descriptors", "--classes", (dir / "classes.txt").string(), "--cache",
                                        cache};
    auto r = h.run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(h.transport->calls(), 6u);
    EXPECT_NE(r.out.find("generated: 2"), std::string::npos);
    r = h.run(args);
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(h.transport->calls(), 6u);
    EXPECT_NE(r.out.find("cached: 2"), std::string::npos);
    EXPECT_NE(r.out.find("generated: 0"), std::string::npos);
}

TEST(Cli, GenDescriptorsReportsFailedClasses) {
    TempDir dir;
    write_file(dir / "classes.txt", "Drumming\nFencing\n");
    Harness h;
    h.transport = std::make_shared<MockTransport>([](const ChatRequest& r, std::size_t) {
        return r.user_message == "fencing" ? std::string("nope") : mock_response(r);
    });
    const auto r = h.run({"gen-descriptors", "--classes", (dir / "classes.txt").string(), "--cache",
                          (dir / "cache.json").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("failed: Fencing: ParseError"), std::string::npos) << r.err;
    EXPECT_EQ(DescriptorCache::open(dir / "cache.json").size(), 1u);
}

TEST(Cli, EvaluateWithoutManifestIsUsageError) {
    SnowboardingFixture fx;
    Harness h;
    const auto r = h.run({"evaluate", "--config", (fx.dir / "run.json").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("error: UsageError:", 0), 0u) << r.err;
    EXPECT_NE(r.err.find("--manifest"), std::string::npos);
}

TEST(Cli, ParseErrorsAreUsageErrors) {
    Harness h;
    EXPECT_EQ(h.run({}).code, 2);
    EXPECT_EQ(h.run({"bogus"}).code, 2);
    EXPECT_EQ(h.run({"classify", "--video"}).code, 2);
    SnowboardingFixture fx;
    const auto r = h.run({"classify", "--config", (fx.dir / "run.json").string(), "--video",
                          (fx.dir / "clip").string(), "--prepend-class", "maybe"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(h.run({"classify", "--help"}).code, 0);
}

TEST(Cli, DryRunWritesNothingAndCallsNothing) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), four_video_spec());
    std::filesystem::remove(dir / "descriptors.json");
    Harness h;
    auto r = h.run({"gen-descriptors", "--config", ds.config_file.string(), "--dry-run"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("dry run: 5 classes, 0 cached, 5 to generate"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("API key missing"), std::string::npos);
    r = h.run({"evaluate", "--config", ds.config_file.string(), "--output", (dir / "out" / "r.json").string(),
               "--dry-run"});
    ASSERT_EQ(r.code, 0) << r.err;
    r = h.run({"ablate", "--config", ds.config_file.string(), "--output", (dir / "abl").string(), "--dry-run"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("ablation prompts, 8 evaluations"), std::string::npos) << r.out;
    EXPECT_EQ(h.transport->calls(), 0u);
    EXPECT_EQ(h.transports_made, 0u);
    EXPECT_FALSE(std::filesystem::exists(dir / "out"));
    EXPECT_FALSE(std::filesystem::exists(dir / "abl"));
    EXPECT_FALSE(std::filesystem::exists(dir / "descriptors.json"));
}

TEST(Cli, MissingApiKeyIsEnvironmentError) {
    ::unsetenv("ZSAR_TEST_UNSET_API_KEY");
    SnowboardingFixture fx;
    std::ostringstream out, err;
    auto env = cli::default_environment();
    env.out = &out;
    env.err = &err;
    const int code = cli::run({"gen-descriptors", "--config", (fx.dir / "run.json").string(), "--cache",
                               (fx.dir / "c.json").string()},
                              env);
    EXPECT_EQ(code, 3);
    EXPECT_EQ(err.str().rfind("error: EnvironmentError:", 0), 0u) << err.str();
    EXPECT_NE(err.str().find("ZSAR_TEST_UNSET_API_KEY"), std::string::npos);
}

TEST(Cli, RuntimeErrorsExitOne) {
    SnowboardingFixture fx;
    write_file(fx.dir / "broken.avi", "not a video");
    Harness h;
    const auto r = h.run({"classify", "--config", (fx.dir / "run.json").string(), "--video",
                          (fx.dir / "broken.avi").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("error: DecodeError:", 0), 0u) << r.err;
    const auto m = h.run({"classify", "--config", (fx.dir / "run.json").string(), "--video",
                          (fx.dir / "clip").string(), "--kinds", "combination"});
    EXPECT_EQ(m.code, 1);
    EXPECT_EQ(m.err.rfind("error: BackendError:", 0), 0u) << m.err;
    EXPECT_EQ(h.transport->calls(), 9u);
}

TEST(Cli, EmbedClassesWritesTable) {
    SnowboardingFixture fx;
    Harness h;
    const auto target = fx.dir / "classes.emb";
    const auto r = h.run({"embed-classes", "--config", (fx.dir / "run.json").string(), "--output", target.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto t = EmbeddingTable::read(target);
    EXPECT_EQ(t.keys(), (std::vector<std::string>{"skiing", "snowboarding", "surfing"}));
    EXPECT_EQ((*t.find("skiing"))[1], 0.8f);
}

TEST(Cli, EvaluateAndAblateWriteReports) {
    TempDir dir;
    const auto ds = build_dataset(dir.path(), four_video_spec());
    Harness h;
    const auto report = dir / "out" / "report.json";
    auto r = h.run({"evaluate", "--config", ds.config_file.string(), "--manifest", ds.split_files[0].string(),
                    "--output", report.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = nlohmann::json::parse(read_file(report));
    EXPECT_EQ(doc["mean"]["top1"], 0.75);
    EXPECT_EQ(doc["mean"]["top5"], 1.0);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "report.txt"));
    EXPECT_NE(r.out.find("75.00"), std::string::npos);

    r = h.run({"ablate", "--config", ds.config_file.string(), "--grid", "prompts,descriptors", "--output",
               (dir / "abl").string(), "--format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto prompts = nlohmann::json::parse(read_file(dir / "abl" / "ablation-prompts.json"));
    EXPECT_EQ(prompts["rows"].size(), 8u);
    EXPECT_TRUE(std::filesystem::exists(dir / "abl" / "ablation-descriptors.txt"));
    EXPECT_EQ(h.transport->calls(), 0u);
}

TEST(Cli, BinaryExitCodes) {
    const std::string bin = ZSAR_CLI_BINARY;
    auto status = [](const std::string& cmd) {
        const int s = std::system(cmd.c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status(bin + " --help > /dev/null"), 0);
    EXPECT_EQ(status(bin + " evaluate > /dev/null 2>&1"), 2);
    SnowboardingFixture fx;
    EXPECT_EQ(status(bin + " classify --config " + (fx.dir / "run.json").string() + " --video " +
                     (fx.dir / "clip").string() + " > /dev/null"),
              0);
}
