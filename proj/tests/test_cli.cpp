#include "qns/cli.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qns;
using nlohmann::json;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("qns_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST_CASE("empty config resolves to defaults") {
    const auto c = parse_config(json::object(), {}, "train");
    CHECK(c.rows == 3);
    CHECK(*c.coupling_mhz == 2.185);
    CHECK(*c.readout_index == 4);
    CHECK(c.epochs == 25);
    CHECK(c.learning_rate == 0.05);
    CHECK(c.w_ergodic == 3.0);
    CHECK(c.gradient_mode == "chain-shift");
    CHECK(c.times_ns.size() == 81);
    CHECK(c.times_ns.back() == 400.0);
    CHECK(*c.realizations == 200);
    CHECK(*c.sector_excitations == 5);
    CHECK_FALSE(*c.calibrate_threshold);
    CHECK(c.threads >= 1);

    CHECK(*parse_config(json::object(), {}, "ramping").coupling_mhz == 2.0);
    CHECK(*parse_config(json::object(), {}, "imbalance").realizations == 50);
    CHECK(*parse_config(json::object(), {}, "probe").calibrate_threshold);
    CHECK(parse_config(json::object(), {}, "sweep-disorder").h_over_g->front() == 0.46);
    CHECK(*parse_config(json{{"rows", 4}, {"cols", 4}}, {}, "train").readout_index == 5);
}

TEST_CASE("flags override file values") {
    const auto c = parse_config(json{{"epochs", 3}, {"seed", 5}}, {{"epochs", "7"}, {"h_over_g", "1:2:3"}}, "level-stats");
    CHECK(c.epochs == 7);
    CHECK(c.seed == 5);
    CHECK(*c.h_over_g == std::vector<double>{1.0, 1.5, 2.0});
    CHECK(parse_config(json::object(), {{"noise_enabled", "true"}}, "train").noise_enabled);
    CHECK_THROWS_AS(parse_config(json::object(), {{"epochs", "7x"}}, "train"), ConfigError);
}

TEST_CASE("invalid keys and values name the key") {
    const auto message = [](const json& j, const std::string& exp = "train") {
        try {
            parse_config(j, {}, exp);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message(json{{"epoch", 3}}).find("unknown config key 'epoch'") != std::string::npos);
    CHECK(message(json{{"epochs", 0}}).find("epochs") != std::string::npos);
    CHECK(message(json{{"epochs", "three"}}).find("epochs") != std::string::npos);
    CHECK(message(json{{"learning_rate", -1.0}}).find("learning_rate") != std::string::npos);
    CHECK(message(json{{"gradient_mode", "exact"}}).find("gradient_mode") != std::string::npos);
    CHECK(message(json{{"times_ns", "0:1"}}).find("times_ns") != std::string::npos);
    CHECK(message(json{{"experiment", "probe"}}).find("experiment") != std::string::npos);
    CHECK(message(json{{"rows", 8}, {"cols", 8}}).find("lattice") != std::string::npos);
    CHECK_THROWS_AS(parse_config(json::array(), {}, "train"), ConfigError);
}

TEST_CASE("range strings") {
    CHECK(parse_range("0:400:5") == std::vector<double>{0, 100, 200, 300, 400});
    CHECK(parse_range("2:2:1") == std::vector<double>{2});
    const auto g = parse_range("log:1:100:3");
    CHECK(g[1] == doctest::Approx(10.0));
    CHECK(g.back() == 100.0);
    CHECK_THROWS_AS(parse_range("log:0:10:3"), std::invalid_argument);
    CHECK_THROWS_AS(parse_range("1:2:0"), std::invalid_argument);
    CHECK_THROWS_AS(parse_range("a:2:3"), std::invalid_argument);
}

TEST_CASE("emitted config reparses to itself") {
    for (const auto& kind : experiment_kinds()) {
        json file{{"seed", 12345678901234ULL}, {"h_mhz", 0.1}};
        if (kind == "classify") file["model_path"] = "model.json";
        const auto c = parse_config(file, {}, kind);
        const json emitted = to_json(c);
        const auto back = parse_config(json::parse(emitted.dump()), {}, kind);
        CHECK(back == c);
        CHECK(to_json(back) == emitted);
        CHECK(emitted.size() == config_keys().size());
    }
}

TEST_CASE("lattice presets fill absent keys") {
    const auto dir = scratch("preset");
    std::filesystem::create_directories(dir);
    const auto path = (dir / "p.json").string();
    std::ofstream(path) << R"({"rows": 2, "cols": 3, "coupling_mhz": 1.5})";
    const auto c = parse_config(json{{"lattice_preset", path}, {"coupling_mhz", 2.5}}, {}, "imbalance");
    CHECK(c.rows == 2);
    CHECK(c.cols == 3);
    CHECK(*c.coupling_mhz == 2.5);
    CHECK(build_lattice(c).num_qubits() == 6);
    CHECK_THROWS_AS(parse_config(json{{"lattice_preset", (dir / "missing.json").string()}}, {}, "train"), ConfigError);
}

TEST_CASE("exit codes and error lines") {
    const auto dir = scratch("exit");
    std::ostringstream err;
    CHECK(run_command("train", "", {{"bogus", "1"}}, err) == kExitConfig);
    const auto line = json::parse(err.str());
    CHECK(line["error"] == "config");
    CHECK(line["message"].get<std::string>().find("bogus") != std::string::npos);

    std::ostringstream err2;
    CHECK(run_command("classify", "", {{"output_dir", dir.string()}, {"model_path", (dir / "none.json").string()}},
                      err2) == kExitRuntime);
    CHECK(json::parse(err2.str())["error"] == "runtime");

    std::ostringstream err3;
    CHECK(run_command("imbalance", "",
                      {{"output_dir", dir.string()}, {"rows", "2"}, {"cols", "2"}, {"realizations", "2"},
                       {"times_ns", "0:10:3"}},
                      err3) == kExitOk);
    CHECK(err3.str().empty());
    CHECK(std::filesystem::exists(dir / "imbalance.csv"));
    CHECK(std::filesystem::exists(dir / "config.json"));
    CHECK(std::filesystem::exists(dir / "record.json"));
}
