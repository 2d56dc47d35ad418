#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "mixedq/tensor_io.hpp"

namespace {

namespace fs = std::filesystem;

const std::string cli = MIXEDQ_CLI_PATH;

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run(const std::string &args, const std::string &env = "") {
    const fs::path tmp = fs::temp_directory_path() / "mixedq_cli_out.txt";
    const std::string cmd = env + " " + cli + " " + args + " > " + tmp.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    std::ifstream f(tmp);
    std::ostringstream ss;
    ss << f.rdbuf();
    return {WEXITSTATUS(rc), ss.str()};
}

std::string slurp(const fs::path &p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const fs::path workdir = fs::temp_directory_path() / "mixedq_cli_test";

} // namespace

TEST_CASE("searchspace prints exact products and counts") {
    auto r = run("searchspace 1 1 1");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("search_space = 18") != std::string::npos);
    CHECK(r.out.find("evaluations  = 8") != std::string::npos);

    r = run("searchspace 0 0 0");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("search_space = 1\n") != std::string::npos);
    CHECK(r.out.find("evaluations  = 0") != std::string::npos);

    r = run("searchspace 12 12 25");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("1844362878529525198848") != std::string::npos);
    CHECK(r.out.find("evaluations  = 135") != std::string::npos);

    r = run("searchspace -1 0 0");
    CHECK(r.exit_code == 1);
}

TEST_CASE("kernels subcommand summarizes errors and rejects unknown names") {
    auto r = run("kernels shift_exp --grid -8 0 20000");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("max_rel_err") != std::string::npos);

    r = run("kernels gelu_ivit --grid 0 0 16");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("max_abs_err=0 ") != std::string::npos); // x = 0 -> all zero

    r = run("kernels not_a_kernel --grid 0 1 10");
    CHECK(r.exit_code == 1);
    CHECK(r.out.find("valid:") != std::string::npos);

    r = run("kernels shift_exp"); // neither grid nor input
    CHECK(r.exit_code == 1);
}

TEST_CASE("analyze is byte-deterministic and select/eval consume its outputs") {
    fs::remove_all(workdir);
    fs::create_directories(workdir);
    const std::string base = " analyze --depth 2 --embed-dim 32 --heads 4 --seq-len 8 "
                             "--input-dim 32 --bits 8 --seed 5 --batches 1 --batch-size 2 ";
    const fs::path o1 = workdir / "run1", o2 = workdir / "run2";
    auto r1 = run(base + "--out " + o1.string());
    CHECK(r1.exit_code == 0);
    auto r2 = run(base + "--out " + o2.string(), "MIXEDQ_THREADS=4");
    CHECK(r2.exit_code == 0);
    for (const char *f : {"sensitivity.csv", "sensitivity.json", "assignment.json", "histogram.json",
                          "plot_sensitivity.csv", "report.json"}) {
        CHECK(fs::exists(o1 / f));
        CHECK(slurp(o1 / f) == slurp(o2 / f));
    }
    // 2*d + 2*d + ... records: depth 2 -> 3*2 + 2*2 + 3*5 = 25 rows + header
    std::istringstream csv(slurp(o1 / "sensitivity.csv"));
    int lines = 0;
    std::string line;
    while (std::getline(csv, line))
        if (!line.empty()) ++lines;
    CHECK(lines == 26);

    // select with the other rule on the emitted table
    const fs::path alt = workdir / "assignment_out.json";
    auto rs = run("select " + (o1 / "sensitivity.csv").string() + " --rule sqnr-output --out " +
                  alt.string());
    CHECK(rs.exit_code == 0);
    CHECK(fs::exists(alt));

    // eval against the stored assignment
    auto re = run(base + "--out " + (workdir / "eval").string() + " " +
                  (o1 / "assignment.json").string());
    // note: "analyze" flags reused; eval shares the run options
    re = run(" eval --depth 2 --embed-dim 32 --heads 4 --seq-len 8 --input-dim 32 --bits 8 "
             "--seed 5 --batches 1 --batch-size 2 --out " +
             (workdir / "eval").string() + " " + (o1 / "assignment.json").string());
    CHECK(re.exit_code == 0);
    CHECK(re.out.find("mixed logit SQNR") != std::string::npos);
    CHECK(fs::exists(workdir / "eval" / "metrics.json"));
    CHECK(fs::exists(workdir / "eval" / "plot_eval.csv"));
}

TEST_CASE("histogram totals match the layer counts") {
    // depth 2 artifacts written by the determinism test above
    const auto h = nlohmann::json::parse(slurp(workdir / "run1" / "histogram.json"));
    auto total = [&](const char *kind) {
        int t = 0;
        for (const auto &[k, v] : h[kind].items()) {
            (void)k;
            t += v.get<int>();
        }
        return t;
    };
    CHECK(total("softmax") == 2);
    CHECK(total("gelu") == 2);
    CHECK(total("layernorm") == 5);
}

TEST_CASE("analyze ingests raw tensor files") {
    fs::create_directories(workdir);
    std::mt19937_64 g(3);
    std::vector<std::string> files;
    for (int s = 0; s < 2; ++s) {
        mixedq::Tensor t(mixedq::Shape{8, 32});
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = 2.0 * (static_cast<double>(g() >> 11) * 0x1.0p-53) - 1.0;
        const fs::path p = workdir / ("sample" + std::to_string(s) + ".mxqt");
        mixedq::save_tensor(p.string(), t);
        files.push_back(p.string());
    }
    auto r = run(" analyze --depth 1 --embed-dim 32 --heads 4 --seq-len 8 --input-dim 32 "
                 "--bits 8 --seed 5 --out " +
                 (workdir / "filerun").string() + " --data " + files[0] + " " + files[1]);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(workdir / "filerun" / "report.json"));

    // wrong sample shape is a validation error
    auto bad = run(" analyze --depth 1 --embed-dim 32 --heads 4 --seq-len 4 --input-dim 32 "
                   "--bits 8 --out " +
                   (workdir / "filerun2").string() + " --data " + files[0]);
    CHECK(bad.exit_code == 1);
}

TEST_CASE("eval rejects stale assignments") {
    const fs::path stale = workdir / "stale.json";
    std::ofstream(stale) << "{\"99.softmax\": \"ivit\"}";
    auto r = run(" eval --depth 1 --embed-dim 32 --heads 4 --seq-len 8 --input-dim 32 --bits 8 "
                 "--seed 5 --out " +
                 (workdir / "eval2").string() + " " + stale.string());
    CHECK(r.exit_code == 1);
}

TEST_CASE("io failures exit with code 2") {
    auto r = run("select /nonexistent/sensitivity.csv --out /tmp/x.json");
    CHECK(r.exit_code == 2);
    r = run(" analyze --depth 1 --embed-dim 16 --heads 2 --seq-len 4 --input-dim 16 "
            "--out /proc/version/cannot_write");
    CHECK(r.exit_code == 2);
}

TEST_CASE("config file drives the run") {
    fs::create_directories(workdir);
    const fs::path cfg = workdir / "run.cfg";
    std::ofstream(cfg) << "depth = 3\nembed-dim = 16\nheads = 2\nseq-len = 4\ninput-dim = 16\n"
                       << "bits = 8\nseed = 2\nbatch-size = 1\n";
    auto r = run(" analyze --config " + cfg.string() + " --out " + (workdir / "cfgrun").string());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("24.layernorm") != std::string::npos); // final LN of a depth-3 model
}

TEST_CASE("bench subcommand emits csv and table") {
    auto r = run("bench --sizes 16x16 --reps 3 --seed 3 --out " + (workdir / "bench").string());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("16x16") != std::string::npos);
    CHECK(fs::exists(workdir / "bench" / "bench.csv"));
    CHECK(fs::exists(workdir / "bench" / "bench.txt"));
}
