// End-to-end checks of the installed command surface: exit codes, file
// outputs, and the synth -> fit -> labels -> annotate -> eval workflow.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

std::string binary() {
    const char* env = std::getenv("TIMELINER_BIN");
    REQUIRE_MESSAGE(env != nullptr, "TIMELINER_BIN must point at the CLI binary");
    return env;
}

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

RunResult run(const std::string& args) {
    const std::string cmd = binary() + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::fgets(buf.data(), buf.size(), pipe)) {
        r.output += buf.data();
    }
    const int status = ::pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / "timeliner_test_cli";
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string p(const std::string& rel) const { return (root / rel).string(); }
};

std::string slurp(const fs::path& path) {
    std::ifstream is(path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

TEST_CASE("usage errors exit 1") {
    CHECK(run("").exit_code == 1);
    CHECK(run("frobnicate").exit_code == 1);
    CHECK(run("sweep --region brow").exit_code == 1); // --gt is required
    // randomized commands require a seed
    const RunResult r = run("synth -o /tmp/timeliner_test_cli_noseed");
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("--seed") != std::string::npos);
}

TEST_CASE("fit without a corpus exits 2 naming the manifest") {
    Workspace ws;
    const RunResult r =
        run("fit --seed 1 --manifest " + ws.p("nope/manifest.json") + " -o " + ws.p("out"));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("manifest") != std::string::npos);
}

TEST_CASE("synth then fit then labels then annotate then eval") {
    Workspace ws;

    // generate a small corpus with ground truth
    REQUIRE(run("synth --seed 11 -o " + ws.p("data")).exit_code == 0);
    REQUIRE(fs::exists(ws.p("data/corpus/manifest.json")));
    REQUIRE(fs::exists(ws.p("data/gt/synth0.json")));

    // ingest validates it
    const RunResult ing = run("ingest --manifest " + ws.p("data/corpus/manifest.json") +
                              " --json");
    CHECK(ing.exit_code == 0);
    CHECK(nlohmann::json::parse(ing.output)["clips"] == 50);

    // a config tuned for the synthetic plant
    {
        std::ofstream os(ws.p("run.toml"));
        os << "seed = 11\n[paths]\nmanifest = \"" << ws.p("data/corpus/manifest.json")
           << "\"\nmodel_dir = \"" << ws.p("models") << "\"\nlabel_dir = \""
           << ws.p("labels") << "\"\n[ticc.brow]\nclusters = 4\n[ticc.eye]\nclusters = "
              "5\n[ticc.mouth]\nclusters = 5\n";
    }

    // fit writes models and the report
    REQUIRE(run("fit -c " + ws.p("run.toml") + " -o " + ws.p("fit_out")).exit_code == 0);
    CHECK(fs::exists(ws.p("models/brow.json")));
    CHECK(fs::exists(ws.p("models/eye.json")));
    CHECK(fs::exists(ws.p("models/mouth.json")));
    CHECK(fs::exists(ws.p("fit_out/report.html")));

    // annotate without labels: exit 2, skeletons appear
    const RunResult need = run("annotate -c " + ws.p("run.toml") + " -o " + ws.p("ann1"));
    CHECK(need.exit_code == 2);
    CHECK(need.output.find("labels required") != std::string::npos);
    REQUIRE(fs::exists(ws.p("labels/brow.json")));

    // labels apply accepts the skeletons (they are total maps)
    CHECK(run("labels apply -c " + ws.p("run.toml")).exit_code == 0);

    // hand-label the brow map poorly on purpose: everything neutral is fine
    // for exercising the command surface
    REQUIRE(run("annotate -c " + ws.p("run.toml") + " -o " + ws.p("ann2")).exit_code == 0);
    REQUIRE(fs::exists(ws.p("ann2/annotations/synth0.csv")));
    REQUIRE(fs::exists(ws.p("ann2/timelines/synth0.json")));

    // eval scores the annotations against the planted truth
    const RunResult ev = run("eval --pred " + ws.p("ann2/annotations") + " --gt " +
                             ws.p("data/gt") + " -o " + ws.p("eval_out") + " --json");
    CHECK(ev.exit_code == 0);
    const auto metrics = nlohmann::json::parse(ev.output);
    CHECK(metrics["clip_count"] == 50);
    CHECK(metrics["tas_mean"].get<double>() > 0.0);
    CHECK(fs::exists(ws.p("eval_out/metrics.json")));
    CHECK(fs::exists(ws.p("eval_out/metrics.txt")));
}

TEST_CASE("roundtrip prints TAS and exits 0") {
    Workspace ws;
    {
        std::ofstream os(ws.p("rt.toml"));
        os << "seed = 7\n[synth]\nclips = 10\nlen_min = 200\nlen_max = 350\n";
    }
    const RunResult r = run("roundtrip --seed 7 -c " + ws.p("rt.toml") + " -o " + ws.p("rt"));
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("TAS") != std::string::npos);
    CHECK(fs::exists(ws.p("rt/metrics.json")));

    // identical invocation produces byte-identical outputs
    const RunResult again =
        run("roundtrip --seed 7 -c " + ws.p("rt.toml") + " -o " + ws.p("rt_b"));
    REQUIRE(again.exit_code == 0);
    CHECK(slurp(ws.p("rt/metrics.json")) == slurp(ws.p("rt_b/metrics.json")));
    CHECK(slurp(ws.p("rt/annotations/synth0.csv")) ==
          slurp(ws.p("rt_b/annotations/synth0.csv")));
}

TEST_CASE("output directory lock blocks concurrent runs") {
    Workspace ws;
    fs::create_directories(ws.p("locked"));
    std::ofstream(ws.p("locked/.timeliner.lock")) << "12345\n";
    const RunResult r = run("synth --seed 3 -o " + ws.p("locked"));
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("lock") != std::string::npos);
}
