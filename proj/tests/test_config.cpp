#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace vlearn;

TEST(Config, DefaultsAreValidAndMatchTrainingDefaults) {
    const RunConfig cfg;
    EXPECT_NO_THROW(validate(cfg));
    EXPECT_EQ(cfg.pipeline.translator.batch, 60u);
    EXPECT_EQ(cfg.pipeline.translator.epochs, 500u);
    EXPECT_EQ(cfg.pipeline.translator.lambda_kl, 5.0);
    EXPECT_EQ(cfg.pipeline.regressor.batch, 60u);
    EXPECT_EQ(cfg.pipeline.regressor.lambda_p, 0.5);
    EXPECT_EQ(cfg.pipeline.regressor.arch.dropout, 0.5);
    EXPECT_EQ(cfg.pipeline.regressor.lr, 1e-3);
}

TEST(Config, WriteThenParseRoundTrips) {
    RunConfig cfg;
    set_config_value(cfg, "seeds", "4,5");
    set_config_value(cfg, "translator.epochs", "7");
    set_config_value(cfg, "regressor.channels", "4,8,8,16");
    set_config_value(cfg, "perturb.noise_sigma", "0.125");
    set_config_value(cfg, "phantom.radii", "50,40,30");
    std::stringstream s;
    write_run_config(s, cfg);
    const RunConfig back = parse_run_config(text::read_key_values(s));
    EXPECT_EQ(config_values(back), config_values(cfg));
    EXPECT_EQ(back.pipeline.seeds, (std::vector<std::uint64_t>{4, 5}));
    EXPECT_EQ(back.pipeline.regressor.arch.channels[3], 16u);
    EXPECT_EQ(back.pipeline.dataset.phantom.radii, Vec3(50, 40, 30));
}

TEST(Config, EveryKeyIsListedOnce) {
    const auto names = config_key_names();
    std::set<std::string> unique(names.begin(), names.end());
    EXPECT_EQ(unique.size(), names.size());
    EXPECT_EQ(config_values(RunConfig{}).size(), names.size());
}

TEST(Config, RangePresetAppliesBeforeOverrides) {
    text::KeyValues kv{{"ranges.half_widths", "1,2,3,4,5,0.1"}, {"ranges.preset", "left"}};
    const RunConfig cfg = parse_run_config(kv);
    EXPECT_EQ(cfg.pipeline.dataset.ranges.half_widths, (ParamArray{1, 2, 3, 4, 5, 0.1}));
    const RunConfig left = parse_run_config({{"ranges.preset", "left"}});
    EXPECT_EQ(left.pipeline.dataset.ranges, ParamRanges::left_lung());
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
    RunConfig cfg;
    EXPECT_THROW(set_config_value(cfg, "translator.epoch", "3"), ConfigError);
    EXPECT_THROW(set_config_value(cfg, "translator.epochs", "three"), ConfigError);
    EXPECT_THROW(set_config_value(cfg, "translator.reduction", "max"), ConfigError);
    EXPECT_THROW(set_config_value(cfg, "ranges.preset", "middle"), ConfigError);
    EXPECT_THROW(set_config_value(cfg, "regressor.channels", "1,2,3"), ConfigError);
    try {
        set_config_value(cfg, "threads", "x");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("threads"), std::string::npos);
    }
}

TEST(Config, CrossFieldValidation) {
    auto invalid = [](const std::string& key, const std::string& value) {
        RunConfig cfg;
        set_config_value(cfg, key, value);
        EXPECT_THROW(validate(cfg), ConfigError) << key << '=' << value;
    };
    invalid("test_fraction", "0");
    invalid("test_fraction", "1");
    invalid("translator.batch", "0");
    invalid("regressor.dropout", "1");
    invalid("threads", "0");
    invalid("perturb.noise_sigma", "-1");
    invalid("phantom.rings", "2");
    invalid("intrinsics.near", "0");
}

TEST(Config, LoadFromFileReportsPath) {
    const auto path = std::filesystem::temp_directory_path() / "vlearn_test_config.cfg";
    {
        std::ofstream out(path);
        out << "# comment\nseed = 9\nn_sim = 40\n";
    }
    const RunConfig cfg = load_run_config(path);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.pipeline.dataset.n_sim, 40u);
    {
        std::ofstream out(path);
        out << "this line has no separator\n";
    }
    try {
        load_run_config(path);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
    }
    std::filesystem::remove(path);
    EXPECT_THROW(load_run_config(path), ConfigError);
}
