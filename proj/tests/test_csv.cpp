#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "seqcls/csv_io.hpp"
#include "seqcls/rng.hpp"

using namespace seqcls;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("seqcls-test-" + std::to_string(::getpid()) + "-" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Scenario random_scenario(Rng& rng, const std::string& id, std::size_t len,
                         const std::vector<std::string>& names) {
    Scenario s;
    s.id = id;
    s.var_names = names;
    s.values = Tensor(len, names.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) {
        s.values[i] = rng.uniform(-1e4, 1e4) * std::pow(10.0, rng.uniform(-6.0, 6.0));
    }
    double t = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
        t += rng.uniform(0.01, 100.0);
        s.time_stamps.push_back(t);
    }
    return s;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

} // namespace

TEST_CASE("scenario CSV round trip is bit exact") {
    TempDir dir;
    Rng rng(2024);
    const Scenario s = random_scenario(rng, "rt", 17, {"alpha", "beta gamma", "delta"});
    const fs::path p = dir.path / "s.csv";
    write_scenario_csv(p, s);
    const Scenario r = read_scenario_csv(p, "rt");

    REQUIRE(r.id == s.id);
    REQUIRE(r.var_names == s.var_names);
    REQUIRE(r.length() == s.length());
    for (std::size_t i = 0; i < s.values.size(); ++i) REQUIRE(r.values[i] == s.values[i]);
    for (std::size_t t = 0; t < s.length(); ++t) REQUIRE(r.time_stamps[t] == s.time_stamps[t]);
}

TEST_CASE("scenario CSV parse errors carry file and line context") {
    TempDir dir;
    const fs::path p = dir.path / "bad.csv";
    write_text(p, "time,a\n0,1\n1,zzz\n");
    try {
        read_scenario_csv(p, "bad");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("bad.csv") != std::string::npos);
        REQUIRE(msg.find("3") != std::string::npos);
    }

    write_text(p, "wrong,a\n0,1\n");
    REQUIRE_THROWS_AS(read_scenario_csv(p, "bad"), ParseError);
}

TEST_CASE("manifest round trip and header enforcement") {
    TempDir dir;
    const fs::path p = dir.path / "manifest.csv";
    const std::vector<ManifestEntry> entries = {{"a", "scenarios/a.csv"}, {"b", "x/b.csv"}};
    write_manifest_csv(p, entries);
    const auto back = read_manifest_csv(p);
    REQUIRE(back.size() == 2);
    REQUIRE(back[0].scenario_id == "a");
    REQUIRE(back[1].path == "x/b.csv");

    write_text(p, "id,path\na,b.csv\n");
    REQUIRE_THROWS_AS(read_manifest_csv(p), ParseError);
}

TEST_CASE("load_scenarios resolves paths and recomputes labels") {
    TempDir dir;
    fs::create_directories(dir.path / "scenarios");
    Rng rng(8);

    std::vector<ManifestEntry> entries;
    const std::vector<double> finals = {1000.0, 2100.0, 3000.0};
    for (std::size_t i = 0; i < finals.size(); ++i) {
        Scenario s = random_scenario(rng, "s" + std::to_string(i), 5, {"maxPCTdegF", "other"});
        for (std::size_t t = 0; t < 5; ++t) s.values(t, 0) = 500.0 + 10.0 * t;
        s.values(4, 0) = finals[i];
        const std::string rel = "scenarios/s" + std::to_string(i) + ".csv";
        write_scenario_csv(dir.path / rel, s);
        entries.push_back({s.id, rel});
    }
    write_manifest_csv(dir.path / "manifest.csv", entries);

    const LabeledDataset ds = load_scenarios(dir.path / "manifest.csv");
    REQUIRE(ds.size() == 3);
    REQUIRE(ds.labels[0] == Label::Ok);
    REQUIRE(ds.labels[1] == Label::CoreDamage);
    REQUIRE(ds.labels[2] == Label::CoreDamage);
}

TEST_CASE("empty manifest loads an empty dataset without error") {
    TempDir dir;
    write_manifest_csv(dir.path / "manifest.csv", {});
    const LabeledDataset ds = load_scenarios(dir.path / "manifest.csv");
    REQUIRE(ds.size() == 0);
}

TEST_CASE("strict schema mode lists missing and extra variables") {
    TempDir dir;
    Rng rng(9);
    Scenario s = random_scenario(rng, "full", 4, standard_schema());
    write_scenario_csv(dir.path / "full.csv", s);
    write_manifest_csv(dir.path / "manifest.csv", {{"full", "full.csv"}});
    REQUIRE_NOTHROW(load_scenarios(dir.path / "manifest.csv", true));

    Scenario off = random_scenario(rng, "off", 4, {"maxPCTdegF", "bogusVar"});
    write_scenario_csv(dir.path / "off.csv", off);
    write_manifest_csv(dir.path / "manifest.csv", {{"off", "off.csv"}});
    try {
        load_scenarios(dir.path / "manifest.csv", true);
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("bogusVar") != std::string::npos);   // extra
        REQUIRE(msg.find("PCTdegK") != std::string::npos);    // one of the missing
    }
}

TEST_CASE("split CSV round trip") {
    TempDir dir;
    LabeledDataset ds;
    Rng rng(10);
    for (int i = 0; i < 5; ++i) {
        ds.push(random_scenario(rng, "sc" + std::to_string(i), 3, {"v"}), Label::Ok);
    }
    const SplitAssignment a = split_dataset(ds.size(), SplitFractions{}, 3);
    const fs::path p = dir.path / "split.csv";
    write_split_csv(p, ds, a);
    const auto back = read_split_csv(p);
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
        REQUIRE(back[i].first == ds.scenarios[i].id);
        REQUIRE(back[i].second == a.tags[i]);
    }

    write_text(p, "scenario_id,split\nx,nonsense\n");
    REQUIRE_THROWS_AS(read_split_csv(p), ParseError);
}

TEST_CASE("canonical double formatting survives extremes") {
    for (double v : {0.0, -0.0, 1.0 / 3.0, 1e-300, -2.5e300, 6.02214076e23, 2100.0}) {
        REQUIRE(parse_double(format_double(v), "test") == v);
    }
    REQUIRE_THROWS_AS(parse_double("12abc", "ctx"), ParseError);
    REQUIRE_THROWS_AS(parse_double("", "ctx"), ParseError);
}
