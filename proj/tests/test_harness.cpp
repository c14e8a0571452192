#include <catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "fracflow/harness.hpp"

using namespace fracflow;
using namespace fracflow::harness;
using Catch::Matchers::ContainsSubstring;

namespace {

std::filesystem::path scratch(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("fracflow_test_" + name);
    std::filesystem::remove_all(p);
    return p;
}

std::string resolve_error(Config c)
{
    try {
        resolve(c);
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

Config with_kind(const std::string& kind)
{
    Config c = Config::defaults();
    c.set("run.kind=" + kind);
    return c;
}

} // namespace

TEST_CASE("config text round trip")
{
    Config a = with_kind("fmcf");
    a.set("physics.r0 = 0.3");
    const std::string text = a.serialize();
    Config b;
    b.merge_text(text);
    CHECK(b.values == a.values);
    CHECK(b.serialize() == text);
}

TEST_CASE("config precedence and comments")
{
    Config c = Config::defaults();
    c.merge_text("# a comment\n[grid]\nn = 128   # trailing\nbox = 2\n[run]\nkind = layer\n");
    CHECK(c.raw("grid.n") == "128");
    c.set("grid.n=64");
    CHECK(c.raw("grid.n") == "64");
    CHECK(c.raw("grid.box") == "2");
    CHECK(c.raw("order.s") == "0.25");  // untouched default
    CHECK_THROWS_AS(c.merge_text("n = 3\n"), Error);
    CHECK_THROWS_AS(c.merge_text("[grid\n"), Error);
    CHECK_THROWS_AS(c.set("gridn"), Error);
}

TEST_CASE("validation")
{
    SECTION("the defaults are valid for every kind")
    {
        for (const auto& k : experiment_kinds()) CHECK(resolve_error(with_kind(k)).empty());
    }
    SECTION("s = 1/2 names the order check")
    {
        Config c = with_kind("layer");
        c.set("order.s=0.5");
        CHECK_THAT(resolve_error(c), ContainsSubstring("FracOrder"));
    }
    SECTION("every violation is reported")
    {
        Config c = with_kind("barrier-check");
        c.set("grid.n=15");
        c.set("physics.sigma=0.2");
        c.set("physics.bogus=1");
        const auto m = resolve_error(c);
        CHECK_THAT(m, ContainsSubstring("grid.n"));
        CHECK_THAT(m, ContainsSubstring("rho/2"));
        CHECK_THAT(m, ContainsSubstring("unknown key physics.bogus"));
    }
    SECTION("under-resolved epsilons list the feasible ones")
    {
        Config c = with_kind("compare");
        c.set("grid.n=128");
        CHECK_THAT(resolve_error(c), ContainsSubstring("feasible: {0.080000000000000002, 0.040000000000000001}"));
    }
    SECTION("numbers are checked")
    {
        Config c = with_kind("fmcf");
        c.set("physics.r0=abc");
        CHECK_THAT(resolve_error(c), ContainsSubstring("'abc' is not a number"));
    }
}

TEST_CASE("hashing and formatting")
{
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    for (double x : {0.1, 1.0 / 3, 7.416298709205487, -2.5e-300})
        CHECK(std::stod(fmt17(x)) == x);
}

TEST_CASE("output directory records files")
{
    const auto root = scratch("out");
    OutputDir out(root);
    ScalarField f(3, 2, 0.5);
    for (std::size_t k = 0; k < f.size(); ++k) f.data[k] = 0.25 * double(k) - 1;
    out.f64("u.f64", f, 0.1, 0.02, 0.25, "field");
    out.csv("t.csv", {"a", "b"}, {{1, 2}, {0.1, 3}}, "table");
    CHECK_THROWS_AS(out.csv("bad.csv", {"a"}, {{1, 2}}, "table"), Error);

    const std::string bytes = read_file(root / "u.f64");
    REQUIRE(bytes.size() == 48);
    for (std::size_t k = 0; k < f.size(); ++k) {
        unsigned char b[8];
        std::memcpy(b, bytes.data() + 8 * k, 8);
        std::uint64_t bits = 0;
        for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
        double v;
        std::memcpy(&v, &bits, 8);
        CHECK(v == f.data[k]);
    }
    const auto side = json::parse(read_file(root / "u.f64.json"));
    CHECK(side["shape"] == json::array({2, 3}));
    CHECK(side["h"] == 0.5);
    CHECK(read_file(root / "t.csv") == "a,b\n1,2\n0.10000000000000001,3\n");

    const auto& files = out.files();
    REQUIRE(files.size() == 3);
    CHECK(files[0]["path"] == "u.f64");
    CHECK(files[0]["sha256"] == sha256_hex(bytes));
    CHECK(files[1]["role"] == "field-sidecar");
    std::filesystem::remove_all(root);
}

TEST_CASE("layer runs are reproducible and verify against the goldens")
{
    Config c = with_kind("layer");
    json m[2];
    for (int k = 0; k < 2; ++k) {
        const auto dir = scratch("layer" + std::to_string(k));
        c.set("output.dir=" + dir.string());
        m[k] = run(resolve(c));
        CHECK(std::filesystem::exists(dir / "manifest.json"));
        CHECK(std::filesystem::exists(dir / "layer.json"));
    }
    auto hash_of = [](const json& man, const std::string& name) {
        for (const auto& f : man["files"])
            if (f["path"] == name) return f["sha256"].get<std::string>();
        return std::string();
    };
    CHECK_FALSE(hash_of(m[0], "layer.csv").empty());
    CHECK(hash_of(m[0], "layer.csv") == hash_of(m[1], "layer.csv"));
    CHECK(m[0]["kind"] == "layer");
    CHECK(m[0]["version"] == kVersion);

    const auto golden = std::filesystem::path(FRACFLOW_SOURCE_DIR) / "goldens";
    for (const auto& g : verify_goldens(golden)) CHECK(g.status == "pass");

    // a 1% change in c0 trips exactly that entry; a missing file shows as absent
    const auto dir = scratch("goldens");
    std::filesystem::create_directories(dir);
    auto j = json::parse(read_file(golden / "constants.json"));
    j["quantities"]["c0"]["value"] = j["quantities"]["c0"]["value"].get<double>() * 1.01;
    std::ofstream(dir / "constants.json") << j.dump(2);
    for (const auto& g : verify_goldens(dir)) {
        if (g.file == "constants.json") CHECK(g.status == (g.name == "c0" ? "fail" : "pass"));
        else CHECK(g.status == "absent");
    }
    for (int k = 0; k < 2; ++k) std::filesystem::remove_all(scratch("layer" + std::to_string(k)));
    std::filesystem::remove_all(dir);
}
