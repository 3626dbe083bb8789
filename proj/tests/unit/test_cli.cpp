#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <layoutforge/app.hpp>

using namespace layoutforge;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("layoutforge_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        unsetenv("LAYOUTFORGE_SEED");
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(std::vector<std::string> args) {
        out_.str("");
        err_.str("");
        args.insert(args.begin(), {"--out-dir", dir_.string()});
        return run_cli(args, out_, err_);
    }

    std::string read(const std::string& name) const { return nn::read_file((dir_ / name).string()); }
    bool exists(const std::string& name) const { return fs::exists(dir_ / name); }

    // A small model so a full train/evaluate cycle takes seconds.
    std::vector<std::string> small(std::vector<std::string> rest) {
        std::vector<std::string> a = {"--seed", "4", "--resolution", "8", "--epochs", "2"};
        a.insert(a.end(), rest.begin(), rest.end());
        return a;
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

// Enough of JSON Schema for the published report schema: type, enum,
// required, properties, additionalProperties, items, minimum, maximum.
bool type_matches(const Json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "integer") return v.is_number_integer();
    if (t == "number") return v.is_number();
    if (t == "null") return v.is_null();
    if (t == "boolean") return v.is_boolean();
    return false;
}

void validate(const Json& v, const Json& schema, const std::string& path, std::vector<std::string>& errors) {
    if (schema.contains("type")) {
        const auto& t = schema["type"];
        bool ok = false;
        if (t.is_string()) ok = type_matches(v, t.get<std::string>());
        else
            for (const auto& alt : t) ok = ok || type_matches(v, alt.get<std::string>());
        if (!ok) {
            errors.push_back(path + ": wrong type");
            return;
        }
    }
    if (schema.contains("enum") && std::find(schema["enum"].begin(), schema["enum"].end(), v) == schema["enum"].end())
        errors.push_back(path + ": not in enum");
    if (v.is_number()) {
        if (schema.contains("minimum") && v.get<double>() < schema["minimum"].get<double>()) errors.push_back(path + ": below minimum");
        if (schema.contains("maximum") && v.get<double>() > schema["maximum"].get<double>()) errors.push_back(path + ": above maximum");
    }
    if (v.is_object()) {
        for (const auto& key : schema.value("required", Json::array()))
            if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing " + key.get<std::string>());
        const auto props = schema.value("properties", Json::object());
        for (const auto& [key, child] : v.items()) {
            if (props.contains(key)) validate(child, props[key], path + "/" + key, errors);
            else if (schema.value("additionalProperties", true) == false) errors.push_back(path + ": unexpected " + key);
        }
    }
    if (v.is_array() && schema.contains("items"))
        for (std::size_t i = 0; i < v.size(); ++i) validate(v[i], schema["items"], path + "/" + std::to_string(i), errors);
}

std::vector<std::string> schema_errors(const Json& report) {
    const auto schema = Json::parse(nn::read_file(LAYOUTFORGE_SOURCE_DIR "/docs/report.schema.json"));
    std::vector<std::string> errors;
    validate(report, schema, "", errors);
    return errors;
}

}  // namespace

TEST(ConfigText, ParsesKeysCommentsAndQuotes) {
    RunConfig c;
    apply_config_text(c, "# comment\nseed = 12\n\ndataset = \"rooms.json\"  # trailing\nmetric = L1\nlambda_adv = 0\n"
                         "bedroom_thresholds = 2.6, 3.4, 4.4\nepochs=7\noptimizer = sgd\n");
    EXPECT_EQ(c.root_seed(), 12u);
    EXPECT_EQ(c.dataset, "rooms.json");
    EXPECT_EQ(c.model.metric, ad::Metric::L1);
    EXPECT_EQ(c.model.lambda_adv[2], 0.0);
    EXPECT_EQ(c.model.labels.table(RoomType::Bedroom).thresholds, (std::vector<double>{2.6, 3.4, 4.4}));
    EXPECT_EQ(c.epochs, 7);
    EXPECT_EQ(c.model.optimizer, nn::OptimizerKind::SGD);
    EXPECT_EQ(c.effective_split_seed(), 12u);
}

TEST(ConfigText, ErrorsNameTheLine) {
    RunConfig c;
    try {
        apply_config_text(c, "seed = 1\nbogus = 3\n");
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
        EXPECT_NE(msg.find("bogus"), std::string::npos) << msg;
    }
    EXPECT_THROW(apply_config_text(c, "resolution = 2\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "learning_rate = -1\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "metric = L7\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "optimizer = rmsprop\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "epochs = many\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "just some words\n"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "bedroom_range = 2\n"), ConfigError);
}

TEST(ConfigText, ShippedConfigsLoad) {
    RunConfig c;
    apply_config_file(c, LAYOUTFORGE_SOURCE_DIR "/configs/default.toml");
    c.validate();
    EXPECT_EQ(c.root_seed(), 7u);
    EXPECT_EQ(c.checkpoint_every, 50);
    EXPECT_EQ(c.model.labels.table(RoomType::Bedroom).bins(), 5);
    RunConfig smoke;
    apply_config_file(smoke, LAYOUTFORGE_SOURCE_DIR "/configs/smoke.toml");
    EXPECT_EQ(smoke.model.resolution, 8);
}

TEST(ConfigText, LabelParsing) {
    const auto labels = LabelConfig::defaults();
    EXPECT_EQ(parse_label("study:3", labels), (RoomLabel{RoomType::Study, 3}));
    EXPECT_THROW(parse_label("study:4", labels), ConfigError);
    EXPECT_THROW(parse_label("kitchen:0", labels), ConfigError);
    EXPECT_THROW(parse_label("bedroom", labels), ConfigError);
}

TEST_F(Cli, UsageErrorsExitWithConfigCode) {
    EXPECT_EQ(run({}), kExitConfig);
    EXPECT_EQ(run({"--set", "nope=1", "synth-data"}), kExitConfig);
    EXPECT_EQ(run({"--set", "noequals", "synth-data"}), kExitConfig);
    EXPECT_EQ(run({"--resolution", "2", "synth-data"}), kExitConfig);
    EXPECT_EQ(run({"--config", (dir_ / "missing.toml").string(), "synth-data"}), kExitConfig);
    EXPECT_EQ(run({"frobnicate"}), kExitConfig);
}

TEST_F(Cli, SynthDataIsByteIdenticalForASeed) {
    ASSERT_EQ(run({"--seed", "9", "--dataset", "a.json", "synth-data", "--count", "30"}), kExitOk);
    ASSERT_EQ(run({"--seed", "9", "--dataset", "b.json", "synth-data", "--count", "30"}), kExitOk);
    ASSERT_EQ(run({"--seed", "10", "--dataset", "c.json", "synth-data", "--count", "30"}), kExitOk);
    EXPECT_EQ(read("a.json"), read("b.json"));
    EXPECT_NE(read("a.json"), read("c.json"));
    EXPECT_EQ(parse_dataset(read("a.json")).scenes.size(), 30u);
    EXPECT_NE(out_.str().find("bedroom:0"), std::string::npos);
}

TEST_F(Cli, SeedFallsBackToEnvironment) {
    ASSERT_EQ(run({"--seed", "5", "--dataset", "flag.json", "synth-data", "--count", "6"}), kExitOk);
    setenv("LAYOUTFORGE_SEED", "5", 1);
    ASSERT_EQ(run({"--dataset", "env.json", "synth-data", "--count", "6"}), kExitOk);
    // an explicit seed wins over the environment
    ASSERT_EQ(run({"--seed", "6", "--dataset", "explicit.json", "synth-data", "--count", "6"}), kExitOk);
    unsetenv("LAYOUTFORGE_SEED");
    EXPECT_EQ(read("flag.json"), read("env.json"));
    EXPECT_NE(read("flag.json"), read("explicit.json"));
}

TEST_F(Cli, ZeroCountWarnsAndWritesEmptyDataset) {
    ASSERT_EQ(run({"synth-data", "--count", "0"}), kExitOk);
    EXPECT_NE(err_.str().find("warning"), std::string::npos);
    EXPECT_TRUE(parse_dataset(read("dataset.json")).scenes.empty());
    EXPECT_EQ(run({"train"}), kExitData);
}

TEST_F(Cli, ConfigFileAndOverridesCompose) {
    nn::write_file((dir_ / "run.toml").string(), "seed = 3\ndataset = \"from_file.json\"\n");
    ASSERT_EQ(run({"--config", (dir_ / "run.toml").string(), "--set", "dataset=override.json", "synth-data", "--count", "3"}), kExitOk);
    EXPECT_TRUE(exists("override.json"));
    EXPECT_FALSE(exists("from_file.json"));
}

TEST_F(Cli, MissingOrCorruptDatasetIsADataError) {
    EXPECT_EQ(run(small({"train"})), kExitData);
    nn::write_file((dir_ / "dataset.json").string(), "{\"schema_version\": 1, \"scenes\": [");
    EXPECT_EQ(run(small({"train"})), kExitData);
    EXPECT_NE(err_.str().find("line"), std::string::npos) << err_.str();
}

TEST_F(Cli, TrainGenerateEvaluateRender) {
    ASSERT_EQ(run(small({"synth-data", "--count", "14"})), kExitOk);
    ASSERT_EQ(run(small({"train"})), kExitOk) << err_.str();
    ASSERT_TRUE(exists("checkpoint.bin"));
    const auto csv = read("losses.csv");
    // 13 training scenes (round(0.9 * 14)) for 2 epochs, plus the header
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 27);

    ASSERT_EQ(run(small({"generate", "--label", "study:1", "--count", "3", "--scale", "2"})), kExitOk) << err_.str();
    const auto id0 = generated_scene_id(4, 0);
    const std::string stem = std::to_string(id0) + "_generate";
    ASSERT_TRUE(exists(stem + ".json"));
    ASSERT_TRUE(exists(stem + ".ppm"));
    EXPECT_TRUE(exists("legend.txt"));
    const auto j = Json::parse(read(stem + ".json"));
    EXPECT_EQ(j["scenes"][0]["room_type"], "study");
    EXPECT_TRUE(j["scenes"][0].contains("degenerate"));
    EXPECT_EQ(read(stem + ".ppm").substr(0, 9), "P6\n16 16\n");

    // a longer run reproduces the shorter one as a prefix
    const auto first = read(stem + ".json");
    ASSERT_EQ(run(small({"generate", "--label", "study:1", "--count", "5", "--scale", "2"})), kExitOk);
    EXPECT_EQ(read(stem + ".json"), first);
    EXPECT_TRUE(exists(std::to_string(generated_scene_id(4, 4)) + "_generate.json"));
    EXPECT_EQ(run(small({"generate", "--label", "attic:0"})), kExitConfig);

    ASSERT_EQ(run(small({"evaluate"})), kExitOk) << err_.str();
    const auto report = Json::parse(read("report.json"));
    EXPECT_EQ(report["source"], "checkpoint");
    EXPECT_EQ(report["test_scenes"], 1);
    EXPECT_TRUE(exists("report.txt"));

    ASSERT_EQ(run(small({"render", "--stage", "predicted", "--scale", "1"})), kExitOk) << err_.str();
    const auto ds = parse_dataset(read("dataset.json"));
    EXPECT_TRUE(exists(std::to_string(ds.scenes[0].scene_id) + "_predicted.ppm"));
    EXPECT_EQ(run(small({"render", "--stage", "wireframe"})), kExitConfig);
    EXPECT_EQ(run(small({"render", "--scene-id", "12345"})), kExitData);
    ASSERT_EQ(run(small({"render", "--stage", "plan", "--scene-id", std::to_string(ds.scenes[2].scene_id)})), kExitOk);
    EXPECT_TRUE(exists(std::to_string(ds.scenes[2].scene_id) + "_plan.ppm"));

    EXPECT_EQ(run(small({"generate", "--checkpoint", "nothing.bin"})), kExitData);
}

TEST_F(Cli, GroundTruthEvaluationScoresOne) {
    ASSERT_EQ(run({"--seed", "2", "synth-data", "--count", "40"}), kExitOk);
    ASSERT_EQ(run({"--seed", "2", "evaluate", "--ground-truth"}), kExitOk) << err_.str();
    const auto report = Json::parse(read("report.json"));
    EXPECT_EQ(report["source"], "ground_truth");
    EXPECT_DOUBLE_EQ(report["overall"]["mode_mean"].get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(report["overall"]["iou_mean"].get<double>(), 1.0);
    EXPECT_NE(out_.str().find("1.000 \xC2\xB1 0.000"), std::string::npos);
    ASSERT_EQ(run({"--seed", "2", "--resolution", "8", "evaluate", "--untrained"}), kExitOk);
    EXPECT_EQ(Json::parse(read("report.json"))["source"], "untrained");
    EXPECT_EQ(run({"--seed", "2", "evaluate", "--untrained", "--ground-truth"}), kExitConfig);
}

TEST_F(Cli, ReportsValidateAgainstPublishedSchema) {
    ASSERT_EQ(run(small({"synth-data", "--count", "30"})), kExitOk);
    ASSERT_EQ(run(small({"evaluate", "--ground-truth"})), kExitOk);
    auto report = Json::parse(read("report.json"));
    EXPECT_TRUE(schema_errors(report).empty());
    ASSERT_EQ(run(small({"evaluate", "--untrained"})), kExitOk);
    EXPECT_TRUE(schema_errors(Json::parse(read("report.json"))).empty());

    // the validator is not vacuous
    report["rows"][0]["iou_mean"] = 1.5;
    report["source"] = "oracle";
    report.erase("warnings");
    EXPECT_EQ(schema_errors(report).size(), 3u);
}

TEST_F(Cli, CheckpointCadence) {
    ASSERT_EQ(run(small({"synth-data", "--count", "3"})), kExitOk);
    ASSERT_EQ(run({"--seed", "4", "--resolution", "8", "--epochs", "4", "--checkpoint-every", "2", "train"}), kExitOk);
    EXPECT_NE(err_.str().find("too few"), std::string::npos);
    EXPECT_TRUE(exists("checkpoint_epoch2.bin"));
    EXPECT_FALSE(exists("checkpoint_epoch4.bin"));
    EXPECT_TRUE(exists("checkpoint.bin"));
}

TEST_F(Cli, BinaryRunsAsAProcess) {
    const std::string bin = LAYOUTFORGE_CLI;
    const std::string base = bin + " --out-dir " + dir_.string();
    EXPECT_EQ(WEXITSTATUS(std::system((base + " --seed 1 synth-data --count 5 > /dev/null").c_str())), 0);
    EXPECT_TRUE(exists("dataset.json"));
    EXPECT_EQ(WEXITSTATUS(std::system((base + " --set bogus=1 synth-data 2> /dev/null").c_str())), 2);
    EXPECT_EQ(WEXITSTATUS(std::system((bin + " --help > /dev/null").c_str())), 0);
}
