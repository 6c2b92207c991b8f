#include "doctest.h"

#include "sfcausal/cli.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace sfcausal;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "sfcausal_cli_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("simulate then fit the DiD frontier") {
    const auto csv = scratch("did.csv").string();
    REQUIRE(run({"simulate", "--design", "did_2x2", "--seed", "7", "--out", csv}).code == 0);
    const auto r = run({"fit", "--model", "did-sfa", "--in", csv});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    for (const char* p : {"beta0", "beta1", "beta2", "beta3", "gamma1", "gamma2", "gamma3", "sigma_u", "sigma_v"}) {
        CAPTURE(p);
        CHECK(j["estimates"].contains(p));
        CHECK(j["std_errors"].contains(p));
    }
    const auto& d = j["decomposition"];
    CHECK(d["total"].get<double>() == doctest::Approx(d["direct"].get<double>() - d["indirect"].get<double>()));
    CHECK(std::abs(j["estimates"]["beta3"].get<double>() - 0.5) < 0.1);
    CHECK(j["n"]["in"] == 16000);
    CHECK(j["n"]["excluded"] == 0);
    CHECK(j["config"]["input"] == csv);
    CHECK(j.contains("loglik"));
    CHECK(j["flags"].is_array());
}

TEST_CASE("round trip is byte identical across runs and worker counts") {
    const auto a = scratch("rt_a.csv").string(), b = scratch("rt_b.csv").string();
    REQUIRE(run({"simulate", "--design", "rdd_sharp", "--seed", "3", "--n", "4000", "--workers", "1", "--out", a}).code == 0);
    REQUIRE(run({"simulate", "--design", "rdd_sharp", "--seed", "3", "--n", "4000", "--workers", "4", "--out", b}).code == 0);
    CHECK(slurp(a) == slurp(b));
    const auto fa = run({"fit", "--model", "srd-sfa", "--in", a, "--bandwidth", "0.5"});
    const auto fb = run({"fit", "--model", "srd-sfa", "--in", a, "--bandwidth", "0.5"});
    CHECK(fa.code == 0);
    CHECK(fa.out == fb.out);
    const auto j = nlohmann::json::parse(fa.out);
    CHECK(j["n"]["used"].get<int>() < j["n"]["in"].get<int>());
    CHECK(j["n"]["used"].get<int>() + j["n"]["excluded"].get<int>() == j["n"]["in"].get<int>());
}

TEST_CASE("inline designs embed the full configuration") {
    const auto r = run({"fit", "--model", "two-group", "--design", "two_group", "--seed", "9", "--n", "2000",
                        "--set", "gamma1=0.3"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["config"]["seed"] == 9);
    CHECK(j["config"]["design"]["params"]["gamma1"] == 0.3);
    CHECK(j["config"]["design"]["n"] == 2000);
    const auto again = run({"fit", "--model", "two-group", "--design", "two_group", "--seed", "9", "--n", "2000",
                            "--set", "gamma1=0.3", "--workers", "4"});
    CHECK(again.out == r.out);
}

TEST_CASE("exit codes") {
    const auto csv = scratch("two.csv").string();
    REQUIRE(run({"simulate", "--design", "two_group", "--n", "500", "--out", csv}).code == 0);

    const auto missing = run({"fit", "--model", "did-sfa", "--in", csv});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("'t'") != std::string::npos);

    const auto unknown = run({"fit", "--model", "magic", "--in", csv});
    CHECK(unknown.code == 1);
    CHECK(unknown.err.find("did-sfa") != std::string::npos);

    CHECK(run({"fit", "--model", "two-group", "--in", csv, "--design", "two_group"}).code == 1);
    CHECK(run({"fit", "--model", "two-group"}).code == 1);
    CHECK(run({"simulate", "--design", "galaxy"}).code == 1);
    CHECK(run({"simulate", "--design", "two_group", "--set", "nope=1"}).code == 1);
    CHECK(run({"fit", "--model", "srd-ll", "--in", csv, "--bandwidth", "-1"}).code == 1);
    CHECK(run({"frobnicate"}).code == 1);
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"fit", "--model", "two-group", "--in", scratch("absent.csv").string()}).code == 2);
}

TEST_CASE("test, audit and bench subcommands") {
    const auto t = run({"test", "--design", "did_2x2", "--n", "1000", "--restriction", "gamma3"});
    REQUIRE(t.code == 0);
    const auto jt = nlohmann::json::parse(t.out);
    CHECK(jt["df"] == 1);
    CHECK(jt["pvalue"].get<double>() >= 0.0);

    const auto a = run({"audit", "--design", "staggered", "--n", "400", "--reps", "3"});
    REQUIRE(a.code == 0);
    CHECK(a.out.rfind("e,l,mean_delta,true_tech,true_indirect,gap,mc_se\n", 0) == 0);

    const auto s = run({"audit", "--design", "two_group", "--n", "1000", "--reps", "3", "--model", "naive-mean"});
    REQUIRE(s.code == 0);
    CHECK(s.out.rfind("param,truth,mean,mc_sd,mc_se,bias,reps_used\nnaive_mean_difference,", 0) == 0);

    const auto b = run({"bench", "--design", "did_2x2", "--n", "1000"});
    REQUIRE(b.code == 0);
    const auto jb = nlohmann::json::parse(b.out);
    CHECK(jb["results"].size() == 3);
    CHECK(jb["truth"].contains("naive_did"));
}

TEST_CASE("output directory override") {
    const auto dir = scratch("outdir");
    fs::create_directories(dir);
    ::setenv("SFCAUSAL_OUTPUT_DIR", dir.c_str(), 1);
    const auto r = run({"simulate", "--design", "two_group", "--n", "50", "--out", "rel.csv"});
    ::unsetenv("SFCAUSAL_OUTPUT_DIR");
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "rel.csv"));
}
