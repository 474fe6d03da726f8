#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fixtures.hpp"
#include "hat/io.hpp"

namespace fs = std::filesystem;

namespace {

struct Workdir {
    fs::path dir;
    Workdir() {
        dir = fs::temp_directory_path() / ("hat_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::create_directories(dir);
    }
    ~Workdir() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::string path(const std::string& name) const { return (dir / name).string(); }
    void write(const std::string& name, const std::string& text) const {
        std::ofstream(path(name), std::ios::binary) << text;
    }
    std::string read(const std::string& name) const {
        std::ifstream in(path(name), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    // Runs the binary with SOURCE_DATE_EPOCH pinned; stdout and stderr go to
    // files in the work directory.
    int run(const std::string& args, const std::string& tag = "run") const {
        const std::string cmd = "cd '" + dir.string() + "' && SOURCE_DATE_EPOCH=1700000000 '" HAT_BIN "' " + args +
                                " > '" + path(tag + ".out") + "' 2> '" + path(tag + ".err") + "'";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }
};

std::string fig2_pvalues(bool drop_c5 = false) {
    std::string csv = "node,pvalue\n";
    for (const char* n : {"root", "b1", "b2", "c1", "c2", "c3", "c4", "c5"}) {
        if (drop_c5 && std::string(n) == "c5") continue;
        const bool low = std::string(n) == "b1" || std::string(n) == "c1";
        csv += std::string(n) + "," + (low ? "1e-6" : "0.9") + "\n";
    }
    return csv;
}

}  // namespace

TEST_CASE("help and version") {
    Workdir w;
    CHECK(w.run("--help") == 0);
    CHECK(w.run("--version") == 0);
    CHECK(w.run("") != 0);
    CHECK(w.run("bogus") != 0);
}

TEST_CASE("test command on the figure-2 fixture") {
    Workdir w;
    w.write("tree.nwk", std::string(fixtures::kFig2Newick) + "\n");
    w.write("pv.csv", fig2_pvalues());
    REQUIRE(w.run("test --tree tree.nwk --pvalues pv.csv --alpha 0.2 --out part.json --audit audit.csv") == 0);
    const auto part = nlohmann::json::parse(w.read("part.json"));
    CHECK(part["p"] == 11);
    CHECK(part["sizes"] == nlohmann::json::array({1, 1, 2, 2, 5}));
    CHECK(part["rejected"] == nlohmann::json::array({"root", "b1", "c1"}));
    CHECK(part["groups"][4] == nlohmann::json::array({"d7", "d8", "d9", "d10", "d11"}));

    const std::string audit = w.read("audit.csv");
    CHECK(audit.rfind("node,depth,pvalue,threshold,rejected\n", 0) == 0);
    CHECK(audit.find("\nroot,1,0.90000000000000002,,1\n") != std::string::npos);
    CHECK(std::count(audit.begin(), audit.end(), '\n') == 9);

    const auto manifest = nlohmann::json::parse(w.read("part.json.manifest.json"));
    CHECK(manifest["command"] == "test");
    CHECK(manifest["parameters"]["alpha"] == 0.2);
    CHECK(manifest["inputs"]["tree"]["sha256"].get<std::string>().size() == 64);
    CHECK(manifest["timestamp"] == "2023-11-14T22:13:20Z");

    // The partition feeds straight into metrics.
    w.write("truth.json", R"({"sizes": [1, 1, 2, 2, 5]})");
    REQUIRE(w.run("metrics --truth truth.json --achieved part.json", "m") == 0);
    CHECK(w.read("m.out").rfind("fsp 0/1 0\ntpp 1/1 1\n", 0) == 0);
}

TEST_CASE("test command input errors") {
    Workdir w;
    w.write("tree.nwk", fixtures::kFig2Newick);
    w.write("pv.csv", fig2_pvalues());
    w.write("short.csv", fig2_pvalues(true));
    CHECK(w.run("test --tree tree.nwk --pvalues short.csv", "missing") == 2);
    CHECK(w.read("missing.err").find("c5") != std::string::npos);
    CHECK(w.run("test --tree tree.nwk --pvalues pv.csv --alpha 1.5") == 2);
    CHECK(w.run("test --tree tree.nwk --pvalues pv.csv --alpha 0") == 2);
    CHECK(w.run("test --tree tree.nwk --pvalues pv.csv --family nope") == 2);
    CHECK(w.run("test --tree tree.nwk --pvalues nowhere.csv") == 2);
    w.write("bad.csv", "node,pvalue\nroot,0.5\nb1,abc\n");
    CHECK(w.run("test --tree tree.nwk --pvalues bad.csv", "bad") == 2);
    CHECK(w.read("bad.err").find("line 3") != std::string::npos);
    w.write("broken.nwk", "((a,b)x,(c,d)y;");
    CHECK(w.run("test --tree broken.nwk --pvalues pv.csv") == 2);
}

TEST_CASE("metrics command") {
    Workdir w;
    w.write("truth.json", R"({"sizes": [2, 3, 4, 3]})");
    w.write("est.json", R"({"sizes": [5, 3, 1, 3]})");
    w.write("short.json", R"({"sizes": [2, 3]})");
    REQUIRE(w.run("metrics --truth truth.json --achieved est.json") == 0);
    const std::string out = w.read("run.out");
    CHECK(out.find("fsp 1/3 ") != std::string::npos);
    CHECK(out.find("tpp 2/3 ") != std::string::npos);
    CHECK(out.find("truth_barriers 01001000100") != std::string::npos);
    CHECK(out.find("achieved_barriers 00001001100") != std::string::npos);
    REQUIRE(w.run("metrics --truth truth.json --achieved truth.json") == 0);
    CHECK(w.read("run.out").rfind("fsp 0/1 0\ntpp 1/1 1\n", 0) == 0);
    CHECK(w.run("metrics --truth truth.json --achieved short.json") == 2);
    CHECK(w.run("metrics --truth truth.json") != 0);
}

TEST_CASE("simulate command") {
    Workdir w;
    CHECK(w.run("simulate --reps 0") == 2);
    CHECK(w.run("simulate --scenario nowhere") == 2);
    CHECK(w.run("simulate --alphas 0.2,1.4 --p 20 --k 4 --reps 2") == 2);

    const std::string args = "simulate --scenario idealized-nonbinary --nonbinary-k 2 --k 5 --reps 30 --seed 4 "
                             "--alphas 0.1,0.2 --families independent,lg --quiet";
    REQUIRE(w.run(args + " --out a.csv --threads 2") == 0);
    REQUIRE(w.run(args + " --out b.csv --threads 1") == 0);
    const std::string a = w.read("a.csv");
    CHECK(a == w.read("b.csv"));
    CHECK(a.rfind("scenario,family,alpha,fsr,fsr_se,power,power_se,reps\n", 0) == 0);
    CHECK(a.find("idealized-nonbinary,independent,0.10000000000000001,") != std::string::npos);
    CHECK(a.find("idealized-nonbinary,lg,0.20000000000000001,") != std::string::npos);
    CHECK(std::count(a.begin(), a.end(), '\n') == 5);

    // Progress goes to stderr, never to the CSV on stdout.
    REQUIRE(w.run("simulate --p 30 --k 6 --reps 20 --threads 1", "prog") == 0);
    CHECK(w.read("prog.out").find("replicates") == std::string::npos);
    CHECK(w.read("prog.err").find("replicates 20/20") != std::string::npos);
}

TEST_CASE("pvalues-anova command") {
    Workdir w;
    w.write("tree.nwk", "((a,b)x,(c,d,e)y)r;");
    w.write("y.csv", "leaf,y\ne,5\nd,2\nc,2\nb,3\na,1\n");
    REQUIRE(w.run("pvalues-anova --tree tree.nwk --y y.csv --sigma 1 --out pv.csv") == 0);
    const std::string pv = w.read("pv.csv");
    CHECK(pv.rfind("node,pvalue\n", 0) == 0);
    // exp(-3)
    CHECK(pv.find("y,0.049787068367863") != std::string::npos);
    CHECK(w.run("pvalues-anova --tree tree.nwk --y y.csv --sigma -1") == 2);
    w.write("y4.csv", "leaf,y\na,1\nb,2\nc,3\nd,4\n");
    CHECK(w.run("pvalues-anova --tree tree.nwk --y y4.csv") == 2);

    // The output is a valid input to the test command.
    REQUIRE(w.run("pvalues-anova --tree tree.nwk --y y.csv --simes --out s.csv") == 0);
    CHECK(w.run("test --tree tree.nwk --pvalues s.csv --family reshaped --out part.json") == 0);
}

TEST_CASE("pvalues-regression command") {
    Workdir w;
    w.write("tree.nwk", "((a,b,c)u,(d,e,f)v,(g,h,i)w)r;");
    // Leaf effects are constant within u and w; v carries a split.
    const double theta[9] = {0, 0, 0, 2, 2, -2, 1, 1, 1};
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    std::string X = "i,h,g,f,e,d,c,b,a\n", y = "y\n";
    for (int r = 0; r < 60; ++r) {
        double row[9], resp = 0;
        for (int j = 0; j < 9; ++j) {
            row[j] = z(rng);
            resp += row[j] * theta[j];
        }
        resp += 0.5 * z(rng);
        for (int j = 8; j >= 0; --j) X += hat::format_double(row[j]) + (j ? "," : "\n");
        y += hat::format_double(resp) + "\n";
    }
    w.write("X.csv", X);
    w.write("y.csv", y);
    const std::string args = "pvalues-regression --tree tree.nwk --X X.csv --y y.csv --folds 5 --seed 3";
    REQUIRE(w.run(args + " --out a.csv --diagnostics a.json --threads 2") == 0);
    REQUIRE(w.run(args + " --out b.csv --diagnostics b.json --threads 1") == 0);
    CHECK(w.read("a.csv") == w.read("b.csv"));
    CHECK(w.read("a.json") == w.read("b.json"));
    CHECK(w.read("a.csv.manifest.json") != w.read("b.csv.manifest.json"));  // output paths differ
    const auto diag = nlohmann::json::parse(w.read("a.json"));
    CHECK(diag["nodes"].size() == 4);
    CHECK(diag["sigma_hat"].get<double>() > 0.0);

    w.write("y_short.csv", "y\n1\n2\n");
    CHECK(w.run("pvalues-regression --tree tree.nwk --X X.csv --y y_short.csv") == 2);
    w.write("X_bad.csv", "a,b,c\n1,2,3\n");
    CHECK(w.run("pvalues-regression --tree tree.nwk --X X_bad.csv --y y.csv") == 2);
}

TEST_CASE("every command is byte-reproducible") {
    Workdir w;
    w.write("tree.nwk", fixtures::kFig2Newick);
    w.write("pv.csv", fig2_pvalues());
    w.write("y.csv", "leaf,y\nd1,1\nd2,2\nd3,3\nd4,3\nd5,0\nd6,0.5\nd7,1\nd8,1\nd9,1.2\nd10,4\nd11,4\n");
    w.write("truth.json", R"({"sizes": [2, 3, 4, 2]})");
    w.write("est.json", R"({"sizes": [5, 3, 1, 2]})");
    const std::vector<std::pair<std::string, std::vector<std::string>>> runs = {
        {"test --tree tree.nwk --pvalues pv.csv --out o.json --audit o.csv", {"o.json", "o.csv", "o.json.manifest.json"}},
        {"metrics --truth truth.json --achieved est.json", {"run.out"}},
        {"simulate --p 40 --k 8 --reps 10 --seed 9 --quiet --out o.csv", {"o.csv", "o.csv.manifest.json"}},
        {"pvalues-anova --tree tree.nwk --y y.csv --out o.csv", {"o.csv", "o.csv.manifest.json"}},
    };
    for (const auto& [args, outputs] : runs) {
        CAPTURE(args);
        REQUIRE(w.run(args) == 0);
        std::vector<std::string> first;
        for (const auto& o : outputs) first.push_back(w.read(o));
        REQUIRE(w.run(args) == 0);
        for (std::size_t k = 0; k < outputs.size(); ++k) {
            CHECK(!first[k].empty());
            CHECK(first[k] == w.read(outputs[k]));
        }
    }
}
