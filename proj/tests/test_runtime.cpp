// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <json.hpp>

#include "harmodop/binary_io.hpp"
#include "harmodop/cnn/model.hpp"
#include "harmodop/dataset.hpp"
#include "harmodop/error.hpp"
#include "harmodop/runtime/cli.hpp"
#include "harmodop/runtime/config.hpp"
#include "harmodop/runtime/queue.hpp"
#include "harmodop/runtime/stream.hpp"
#include "test_util.hpp"

using namespace harmodop;
using namespace harmodop::runtime;

namespace {

constexpr std::size_t kImage = 32;

/// Small model trained once on a 32x32 Case 3 set and shared by the stream tests.
class TrainedModel : public ::testing::Environment {
public:
    void SetUp() override
    {
        dir_ = std::make_unique<test::TempDir>();
        dataset::DatasetPlan plan;
        plan.case_id = 3;
        plan.per_class_count = 80;
        plan.image_size = kImage;
        plan.seed = 3;
        plan.windows_per_trajectory = 2;
        dataset::generate_dataset(plan, dir_->path() / "data");
        const auto data = dataset::load_dataset(dir_->path() / "data" / "manifest.jsonl");

        cnn::NetworkSpec spec;
        spec.input_size = kImage;
        spec.conv_blocks = {{8}, {16}, {16}};
        spec.dense_widths = {32, 4};
        spec.precision = cnn::Precision::f32;
        cnn::Network<float> net(spec, 17);
        cnn::TrainOptions opt;
        opt.epochs = 15;
        opt.batch_size = 16;
        opt.seed = 4;
        opt.lr = 2e-3;
        cnn::train(net, data.train, data.eval, opt);
        eval_accuracy_ = cnn::evaluate(net, data.eval).accuracy;
        model_ = std::make_unique<cnn::Model>(std::move(net));
        cnn::save_model(*model_, path());
    }
    void TearDown() override
    {
        model_.reset();
        dir_.reset();
    }

    static const cnn::Model& model() { return *model_; }
    static std::filesystem::path path() { return dir_->path() / "model.hmnn"; }
    static std::filesystem::path data_dir() { return dir_->path() / "data"; }
    static double eval_accuracy() { return eval_accuracy_; }

private:
    static inline std::unique_ptr<test::TempDir> dir_;
    static inline std::unique_ptr<cnn::Model> model_;
    static inline double eval_accuracy_ = 0.0;
};

const auto* const kEnv = ::testing::AddGlobalTestEnvironment(new TrainedModel);

StreamConfig base_config(std::vector<Segment> scenario)
{
    StreamConfig cfg;
    cfg.scenario = std::move(scenario);
    cfg.chain.image_size = kImage;
    cfg.threaded = false;
    cfg.seed = 9;
    return cfg;
}

std::map<int, std::size_t> label_counts(const StreamReport& r, double t0, double t1)
{
    std::map<int, std::size_t> counts;
    for (const auto& d : r.decisions) {
        if (d.t > t0 && d.t <= t1) {
            ++counts[d.decision.label];
        }
    }
    return counts;
}

int majority(const std::map<int, std::size_t>& counts)
{
    int best = 0;
    std::size_t n = 0;
    for (const auto& [label, c] : counts) {
        if (c > n) {
            n = c;
            best = label;
        }
    }
    return best;
}

struct CliResult {
    int code = 0;
    std::string out, err;
};

CliResult cli(std::vector<std::string> args)
{
    args.insert(args.begin(), "harmodop");
    std::vector<const char*> argv;
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out, err;
    CliResult r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

}  // namespace

// Queue ------------------------------------------------------------------------

TEST(Queue, DropOldestKeepsFreshest)
{
    BoundedQueue<int> q(3, QueuePolicy::drop_oldest);
    for (int k = 0; k < 10; ++k) {
        EXPECT_TRUE(q.push(k));
    }
    EXPECT_EQ(q.size(), 3U);
    EXPECT_EQ(q.dropped(), 7U);
    EXPECT_EQ(q.max_depth(), 3U);
    EXPECT_EQ(q.pop(), 7);
    EXPECT_EQ(q.pop(), 8);
    EXPECT_EQ(q.pop(), 9);
    q.close();
    EXPECT_EQ(q.pop(), std::nullopt);
    EXPECT_FALSE(q.push(1));
}

TEST(Queue, BlockingPolicyWaitsForSpace)
{
    BoundedQueue<int> q(2, QueuePolicy::block);
    std::thread producer([&] {
        for (int k = 0; k < 100; ++k) {
            q.push(k);
        }
        q.close();
    });
    int expect = 0;
    while (auto v = q.pop()) {
        EXPECT_EQ(*v, expect++);
    }
    producer.join();
    EXPECT_EQ(expect, 100);
    EXPECT_EQ(q.dropped(), 0U);
    EXPECT_LE(q.max_depth(), 2U);
}

// Config -----------------------------------------------------------------------

TEST(Config, ParsesKeyValueText)
{
    const auto entries = parse_config("# comment\nseed = 42\n\n  train.epochs=7  # trailing\n", "t");
    ASSERT_EQ(entries.size(), 2U);
    EXPECT_EQ(entries[0], (std::pair<std::string, std::string>{"seed", "42"}));
    EXPECT_EQ(entries[1], (std::pair<std::string, std::string>{"train.epochs", "7"}));
    EXPECT_THROW(parse_config("no equals sign\n", "t"), Error);
}

TEST(Config, AppliesAndValidatesKeys)
{
    Settings s;
    s.apply(parse_config("seed = 42\ntrain.epochs = 7\nimage_size = 48\ncnn.filters = 4,8\n"
                         "stream.scenario = 1:5,3:5:untrained\nclassify.hidden_threshold = 1.7\n",
                         "t"));
    EXPECT_EQ(s.seed, 42U);
    EXPECT_EQ(s.train_options().epochs, 7U);
    EXPECT_EQ(s.train_options().seed, 42U);
    EXPECT_EQ(s.dataset_plan().image_size, 48U);
    EXPECT_EQ(s.network.input_size, 48U);
    EXPECT_EQ(s.stream_config().chain.image_size, 48U);
    EXPECT_EQ(s.network.conv_blocks.size(), 2U);
    EXPECT_EQ(s.stream.scenario.size(), 2U);
    EXPECT_EQ(s.stream.scenario[1].cohort, motion::Cohort::untrained);
    EXPECT_EQ(s.stream_config().hidden_threshold, 1.7);
    EXPECT_THROW(s.apply("no.such.key", "1"), UsageError);
    EXPECT_THROW(s.apply("train.epochs", "many"), ConfigError);
    EXPECT_THROW(s.apply("cnn.precision", "f16"), ConfigError);
    EXPECT_FALSE(config_keys().empty());
}

TEST(Config, ScenarioParsing)
{
    const auto sc = parse_scenario("1:20,3:12.5:untrained,4:3");
    ASSERT_EQ(sc.size(), 3U);
    EXPECT_EQ(sc[0].class_id, 1);
    EXPECT_DOUBLE_EQ(sc[1].duration, 12.5);
    EXPECT_EQ(sc[1].cohort, motion::Cohort::untrained);
    EXPECT_THROW(parse_scenario("5:10"), Error);
    EXPECT_THROW(parse_scenario("1:-3"), Error);
    EXPECT_THROW(parse_scenario(""), Error);
}

// Stream -----------------------------------------------------------------------

TEST(Stream, ModelIsUsable)
{
    EXPECT_GT(TrainedModel::eval_accuracy(), 0.6);
}

TEST(Stream, SinusoidalStreamDecidesThreePerSecond)
{
    const auto cfg = base_config({{3, 30.0}});
    const auto r = stream(cfg, TrainedModel::model());
    // First decision once a full window exists, then every third of a second.
    EXPECT_NEAR(static_cast<double>(r.decisions.size()), 85.0, 2.0);
    EXPECT_NEAR(r.decision_rate(), 3.0, 0.05);
    EXPECT_EQ(majority(label_counts(r, 0.0, 1e9)), 3);
    EXPECT_NEAR(r.decisions.front().t, 2.0, 1e-9);
    for (std::size_t k = 1; k < r.decisions.size(); ++k) {
        EXPECT_NEAR(r.decisions[k].t - r.decisions[k - 1].t, 1.0 / 3.0, 1e-3);
    }
}

TEST(Stream, NoMotionShortCircuits)
{
    const auto r = stream(base_config({{4, 15.0}}), TrainedModel::model());
    ASSERT_FALSE(r.decisions.empty());
    for (const auto& d : r.decisions) {
        EXPECT_EQ(d.decision.label, 4);
        EXPECT_TRUE(d.short_circuit);
    }
}

TEST(Stream, SegmentSwitchIsTrackedWithinTwoWindows)
{
    const auto cfg = base_config({{1, 12.0}, {3, 12.0}});
    const auto r = stream(cfg, TrainedModel::model());
    EXPECT_EQ(majority(label_counts(r, 2.0, 12.0)), 1);
    EXPECT_EQ(majority(label_counts(r, 12.0 + cfg.window_seconds, 24.0)), 3);
    double first_three = 1e9;
    for (const auto& d : r.decisions) {
        if (d.t > 12.0 && d.decision.label == 3) {
            first_three = d.t;
            break;
        }
    }
    EXPECT_LE(first_three, 12.0 + 2.0 * cfg.window_seconds);
}

TEST(Stream, ThreadedMatchesSingleThreaded)
{
    auto cfg = base_config({{2, 8.0}, {3, 8.0}});
    const auto a = stream(cfg, TrainedModel::model());
    cfg.threaded = true;
    const auto b = stream(cfg, TrainedModel::model());
    ASSERT_EQ(a.decisions.size(), b.decisions.size());
    for (std::size_t k = 0; k < a.decisions.size(); ++k) {
        EXPECT_EQ(a.decisions[k].t, b.decisions[k].t);
        EXPECT_EQ(a.decisions[k].decision.scores, b.decisions[k].decision.scores);
        EXPECT_EQ(a.decisions[k].decision.label, b.decisions[k].decision.label);
    }
    EXPECT_EQ(b.windows_dropped, 0U);
}

TEST(Stream, WritesLogAndFrames)
{
    test::TempDir dir;
    auto cfg = base_config({{3, 5.0}});
    cfg.log_path = dir.path() / "log.jsonl";
    cfg.frame_dir = dir.path() / "frames";
    const auto r = stream(cfg, TrainedModel::model());
    std::ifstream in(cfg.log_path);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_TRUE(j.contains("t") && j.contains("scores") && j.contains("label") && j.contains("hidden") &&
                    j.contains("proc_ms"));
        EXPECT_EQ(j["scores"].size(), 4U);
        ++lines;
    }
    EXPECT_EQ(lines, r.decisions.size());
    std::size_t frames = 0;
    for (const auto& entry : std::filesystem::directory_iterator(*cfg.frame_dir)) {
        const auto img = dsp::read_pgm(entry.path());
        EXPECT_EQ(img.n, kImage);
        ++frames;
    }
    EXPECT_EQ(frames, r.decisions.size());
}

TEST(Stream, IqReplayAndMalformedFiles)
{
    test::TempDir dir;
    auto cfg = base_config({{3, 6.0}});
    const auto sig = synthesize_scenario(cfg);
    channel::write_baseband(sig, dir.path() / "ok.hmiq");
    cfg.source = SourceKind::iq_file;
    cfg.iq_path = dir.path() / "ok.hmiq";
    const auto good = stream(cfg, TrainedModel::model());
    EXPECT_FALSE(good.decisions.empty());
    EXPECT_TRUE(good.events.empty());

    // Truncated file: a source_error event, no exception, no abort.
    auto bytes = io::read_file(cfg.iq_path);
    bytes.resize(bytes.size() / 2 + 3);
    io::write_file(dir.path() / "bad.hmiq", bytes);
    cfg.iq_path = dir.path() / "bad.hmiq";
    StreamReport bad;
    ASSERT_NO_THROW(bad = stream(cfg, TrainedModel::model()));
    EXPECT_TRUE(std::any_of(bad.events.begin(), bad.events.end(),
                            [](const StreamEvent& e) { return e.kind == "source_error"; }));

    std::ofstream(dir.path() / "junk.hmiq") << "garbage";
    cfg.iq_path = dir.path() / "junk.hmiq";
    StreamReport junk;
    ASSERT_NO_THROW(junk = stream(cfg, TrainedModel::model()));
    EXPECT_TRUE(junk.decisions.empty());
    EXPECT_FALSE(junk.events.empty());

    cfg.iq_path = dir.path() / "missing.hmiq";
    EXPECT_THROW(stream(cfg, TrainedModel::model()), IoError);
}

TEST(Stream, ModelSizeMismatchIsFatalAtStartup)
{
    auto cfg = base_config({{3, 5.0}});
    cfg.chain.image_size = 48;
    EXPECT_THROW(stream(cfg, TrainedModel::model()), DomainError);
}

TEST(Stream, PacedRunKeepsQueuesBounded)
{
    // Five minutes of stream time, paced at 20x real time.
    auto cfg = base_config({{1, 60.0}, {2, 60.0}, {3, 60.0}, {4, 60.0}, {3, 60.0}});
    cfg.threaded = true;
    cfg.speed = 20.0;
    const auto r = stream(cfg, TrainedModel::model());
    EXPECT_NEAR(r.decision_rate(), 3.0, 0.1);
    EXPECT_LE(r.max_queue_depth, cfg.queue_capacity);
    EXPECT_NEAR(r.stream_seconds, 300.0, 0.5);
    EXPECT_GE(r.wall_seconds, 300.0 / cfg.speed * 0.9);
}

// CLI --------------------------------------------------------------------------

TEST(Cli, LinkBudgetReportsCrossSection)
{
    const auto r = cli({"linkbudget", "--eps", "0.016", "--f1", "2.39e9", "--gtag1-dbi", "2.1", "--gtag2-dbi", "2.15"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("harmonic_rcs_cm2=0.53"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("reference_rcs_cm2=0.61"), std::string::npos);
    EXPECT_NE(r.out.find("delta_db="), std::string::npos);
    EXPECT_NE(r.out.find("range_m,received_power_w"), std::string::npos);
}

TEST(Cli, ErrorCategoriesAndExitCodes)
{
    auto r = cli({"bogus"});
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("error: usage:", 0), 0U) << r.err;

    r = cli({"linkbudget", "--no-such-flag"});
    EXPECT_EQ(r.code, 2);

    r = cli({"--set", "no.such.key=1", "linkbudget"});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error: usage:"), std::string::npos);

    r = cli({"--set", "train.epochs=lots", "linkbudget"});
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(r.err.rfind("error: config:", 0), 0U) << r.err;

    r = cli({"classify", "--model", "/nonexistent/m.hmnn", "--image", "/nonexistent/x.pgm"});
    EXPECT_EQ(r.code, 4);
    EXPECT_EQ(r.err.rfind("error: io:", 0), 0U) << r.err;

    test::TempDir dir;
    std::ofstream(dir.path() / "bad.hmnn") << "not a model";
    r = cli({"classify", "--model", (dir.path() / "bad.hmnn").string(), "--image", "x.pgm"});
    EXPECT_EQ(r.code, 5);
    EXPECT_EQ(r.err.rfind("error: format:", 0), 0U) << r.err;

    r = cli({"linkbudget", "--eps", "2.0"});
    EXPECT_EQ(r.code, 6);
    EXPECT_EQ(r.err.rfind("error: domain:", 0), 0U) << r.err;
}

TEST(Cli, ConfigFileAndEnvironment)
{
    test::TempDir dir;
    std::ofstream(dir.path() / "a.conf") << "radar.f1 = 2.39e9\n";
    auto r = cli({"--config", (dir.path() / "a.conf").string(), "linkbudget"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto base = cli({"linkbudget"});
    EXPECT_NE(r.out, base.out);

    std::ofstream(dir.path() / "bad.conf") << "bogus.key = 1\n";
    ::setenv(kConfigEnvVar, (dir.path() / "bad.conf").c_str(), 1);
    r = cli({"linkbudget"});
    ::unsetenv(kConfigEnvVar);
    EXPECT_EQ(r.code, 2);
    r = cli({"--config", (dir.path() / "missing.conf").string(), "linkbudget"});
    EXPECT_EQ(r.code, 4);
}

TEST(Cli, ClassifyEvalAndSimulate)
{
    test::TempDir dir;
    const auto model = TrainedModel::path().string();
    const auto manifest = dataset::read_manifest(TrainedModel::data_dir() / "manifest.jsonl");
    const auto& entry = *std::find_if(manifest.entries.begin(), manifest.entries.end(),
                                      [](const auto& e) { return e.class_id == 2; });
    const auto image = (TrainedModel::data_dir() / entry.image_path).string();
    auto r = cli({"classify", "--model", model, "--image", image});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto expected = cnn::classify(TrainedModel::model(), dsp::read_pgm(image)).label;
    EXPECT_EQ(r.out, std::to_string(expected) + "\n");

    r = cli({"eval", "--manifest", (TrainedModel::data_dir() / "manifest.jsonl").string(), "--model", model});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("accuracy="), std::string::npos);
    EXPECT_NE(r.out.find("true_class"), std::string::npos) << r.out;

    r = cli({"--seed", "3", "simulate", "--out", (dir.path() / "sim").string(), "--class", "2", "--duration", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"trajectory.hmdt", "trajectory.csv", "baseband.hmiq", "spectrogram.pgm", "spectrogram.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir.path() / "sim" / f)) << f;
    }
    r = cli({"--set", "image_size=32", "classify", "--model", model, "--iq", (dir.path() / "sim" / "baseband.hmiq").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_FALSE(r.out.empty());
}

TEST(Cli, StreamSubcommand)
{
    const auto r = cli({"--set", "image_size=32", "stream", "--model", TrainedModel::path().string(), "--scenario",
                        "3:6", "--single-threaded"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("decisions=13"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("rate_hz="), std::string::npos);
}
