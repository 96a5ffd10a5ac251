#include "ehstack/config.hpp"
#include "ehstack/errors.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

using namespace ehstack;
using namespace ehstack::cli;

namespace {

constexpr const char* kMinimal = R"({
  "seed": 5,
  "trace": {"synthetic": {"days": 2, "cadence_s": 60}},
  "app": {"preset": "TOF"},
  "ess": {"storage": {"buffer_capacitance": 4e-4}},
  "plan": {"mode": "st-sp", "s_tp": "max"}
})";

}  // namespace

TEST_CASE("config dump parses back to the same document") {
    const auto cfg = parse_config(kMinimal);
    CHECK(cfg.seed == 5);
    REQUIRE(cfg.trace.synthetic);
    CHECK(cfg.trace.synthetic->days == 2);
    CHECK(cfg.trace.synthetic->seed == 5);  // generator seeds default to the top-level seed
    CHECK(cfg.app.name == "TOF");
    CHECK(cfg.ess.storage.buffer_capacitance == 4e-4);
    CHECK(cfg.plan.mode == PlanMode::st_sp);
    CHECK_FALSE(cfg.plan.s_tp);

    const auto text = dump_config(cfg);
    const auto back = parse_config(text);
    CHECK(dump_config(back) == text);
    CHECK(config_hash(back) == config_hash(cfg));
}

TEST_CASE("preset fields can be overridden") {
    const auto cfg = parse_config(R"({"trace": {"synthetic": {}}, "app": {"preset": "TMP1", "t_comm": 2.0}})");
    CHECK(cfg.app.t_comm == 2.0);
    CHECK(cfg.app.t_sample_period == preset("TMP1").t_sample_period);
}

TEST_CASE("bad documents are config errors") {
    CHECK_THROWS_AS(parse_config("{"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trace": {"synthetic": {}}, "bogus": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trace": {"synthetic": {"dayz": 1}}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trace": {"synthetic": {}}, "ess": {"storage": {"esr": "x"}}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({})"), ConfigError);  // no trace
    CHECK_THROWS_AS(parse_config(R"({"trace": {"path": "does/not/exist.csv"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trace": {"synthetic": {}}, "plan": {"s_tp": 0.5}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trace": {"synthetic": {}}, "plan": {"mode": "warp"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"trace": {"synthetic": {}}, "sweep": {"workers": 0}})"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/ehstack.json"), ConfigError);
}

TEST_CASE("relative paths resolve against the config file") {
    const auto dir = std::filesystem::temp_directory_path() / "ehstack_config_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "trace.csv") << "0,0\n60,100\n";
        std::ofstream(dir / "cfg.json") << R"({"trace": {"path": "trace.csv"}, "app": {"preset": "TMP1"}})";
    }
    const auto cfg = load_config((dir / "cfg.json").string());
    CHECK(std::filesystem::path(cfg.trace.path).is_absolute());
    CHECK(std::filesystem::equivalent(cfg.trace.path, dir / "trace.csv"));

    // the hash covers referenced file contents
    const auto h1 = config_hash(cfg);
    std::ofstream(dir / "trace.csv") << "0,0\n60,101\n";
    CHECK(config_hash(cfg) != h1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("reseeding touches every generator") {
    auto cfg = parse_config(R"({"trace": {"synthetic": {"seed": 3}}, "events": {"parking": {"seed": 4}}})");
    reseed(cfg, 99);
    CHECK(cfg.seed == 99);
    CHECK(cfg.trace.synthetic->seed == 99);
    CHECK(cfg.events.parking->seed == 99);
}

TEST_CASE("sha256 of known inputs") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
