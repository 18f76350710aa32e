#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args) {
    static int counter = 0;
    std::string out_path = "/tmp/nst_cli_out_" + std::to_string(counter);
    std::string err_path = "/tmp/nst_cli_err_" + std::to_string(counter);
    ++counter;
    std::string cmd = std::string(NST_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
    int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    std::remove(out_path.c_str());
    std::remove(err_path.c_str());
    return r;
}

void write_gradient_ppm(const std::string& path, int w, int h, bool flip) {
    std::ofstream out(path, std::ios::binary);
    out << "P6\n" << w << " " << h << "\n255\n";
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int v = (x * 255) / (w - 1);
            out.put(static_cast<char>(flip ? 255 - v : v));
            out.put(static_cast<char>((y * 255) / (h - 1)));
            out.put(static_cast<char>(128));
        }
}

int count_lines(const std::string& s) {
    int n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("help exits 0 and no subcommand is a usage error") {
    CHECK(run_cli("--help").code == 0);
    RunResult bare = run_cli("");
    CHECK(bare.code == 2);

    RunResult unknown = run_cli("frobnicate");
    CHECK(unknown.code == 2);
}

TEST_CASE("transfer runs end to end and writes image plus trace") {
    write_gradient_ppm("/tmp/nst_cli_content.ppm", 80, 60, false);
    write_gradient_ppm("/tmp/nst_cli_style.ppm", 70, 70, true);
    RunResult r = run_cli(
        "transfer --content /tmp/nst_cli_content.ppm --style /tmp/nst_cli_style.ppm "
        "--out /tmp/nst_cli_result.png --size 64 --iters 3 --seed 11");
    INFO(r.err);
    CHECK(r.code == 0);
    CHECK(r.out.find("wrote /tmp/nst_cli_result.png") != std::string::npos);

    std::string trace = slurp("/tmp/nst_cli_result_trace.csv");
    CHECK(trace.rfind("iteration,content_loss,style_loss,total_loss,seconds\n", 0) == 0);
    CHECK(count_lines(trace) == 4);  // header + 3 iterations

    std::ifstream img("/tmp/nst_cli_result.png", std::ios::binary);
    char sig[4] = {};
    img.read(sig, 4);
    CHECK(img.gcount() == 4);
    CHECK(static_cast<unsigned char>(sig[0]) == 0x89);
    CHECK(sig[1] == 'P');

    std::remove("/tmp/nst_cli_result.png");
    std::remove("/tmp/nst_cli_result_trace.csv");
}

TEST_CASE("unsupported size is a usage error, exit 2") {
    RunResult r = run_cli(
        "transfer --content a.ppm --style b.ppm --out c.png --size 100");
    CHECK(r.code == 2);
    CHECK(r.err.find("--size") != std::string::npos);
}

TEST_CASE("missing content file is a runtime error naming the path, exit 1") {
    write_gradient_ppm("/tmp/nst_cli_style2.ppm", 16, 16, true);
    RunResult r = run_cli(
        "transfer --content /tmp/nst_cli_missing.ppm --style /tmp/nst_cli_style2.ppm "
        "--out /tmp/nst_cli_x.png --size 64 --iters 1");
    CHECK(r.code == 1);
    CHECK(r.err.rfind("error:", 0) == 0);
    CHECK(r.err.find("/tmp/nst_cli_missing.ppm") != std::string::npos);
    std::remove("/tmp/nst_cli_style2.ppm");
}

TEST_CASE("transfer over the memory budget is refused, exit 1") {
    write_gradient_ppm("/tmp/nst_cli_c3.ppm", 16, 16, false);
    RunResult r = run_cli(
        "transfer --content /tmp/nst_cli_c3.ppm --style /tmp/nst_cli_c3.ppm "
        "--out /tmp/nst_cli_x3.png --size 512 --iters 1 --mem-budget 1000000");
    CHECK(r.code == 1);
    CHECK(r.err.find("budget") != std::string::npos);
    std::ifstream img("/tmp/nst_cli_x3.png");
    CHECK(!img.good());
    std::remove("/tmp/nst_cli_c3.ppm");
}

TEST_CASE("bench writes a CSV with the fixed header") {
    std::string csv = "/tmp/nst_cli_bench.csv";
    RunResult r = run_cli(
        "bench --models vgg-desk --sizes 64 --backends fast --iterations 2 --warmup 0 "
        "--csv " + csv);
    INFO(r.err);
    CHECK(r.code == 0);
    std::string contents = slurp(csv);
    CHECK(contents.rfind(
              "model,backend,resolution,iterations,elapsed_s,iters_per_min,peak_mem_bytes,status\n",
              0) == 0);
    CHECK(count_lines(contents) == 2);
    CHECK(contents.find("vgg-desk,fast,64,2,") != std::string::npos);
    CHECK(r.out.find("iters/min") != std::string::npos);
    std::remove(csv.c_str());
}

TEST_CASE("bench refuses over-budget cells but still exits 0") {
    std::string csv = "/tmp/nst_cli_bench_refused.csv";
    std::string report = "/tmp/nst_cli_bench_refused.md";
    RunResult r = run_cli(
        "bench --models vgg-desk --sizes 512 --backends fast --iterations 1 --warmup 0 "
        "--mem-budget 1000000 --csv " + csv + " --report " + report);
    INFO(r.err);
    CHECK(r.code == 0);
    std::string contents = slurp(csv);
    CHECK(contents.find("refused-memory") != std::string::npos);
    CHECK(contents.find("vgg-desk,fast,512,0,") != std::string::npos);
    CHECK(slurp(report).find("—") != std::string::npos);
    std::remove(csv.c_str());
    std::remove(report.c_str());
}

TEST_CASE("bench rejects combining --seconds and --iterations") {
    RunResult r = run_cli("bench --seconds 1 --iterations 5 --csv /tmp/nst_cli_x.csv");
    CHECK(r.code == 2);
}

TEST_CASE("weights init and inspect round trip") {
    std::string path = "/tmp/nst_cli_weights.nswf";
    RunResult init = run_cli("weights init --model nin-desk --seed 9 --out " + path);
    CHECK(init.code == 0);
    RunResult inspect = run_cli("weights inspect " + path);
    CHECK(inspect.code == 0);
    CHECK(inspect.out.find("kind: nin-desk") != std::string::npos);
    CHECK(inspect.out.find("conv layers: 12") != std::string::npos);
    std::remove(path.c_str());

    RunResult missing = run_cli("weights inspect /tmp/nst_cli_no_such.nswf");
    CHECK(missing.code == 1);
}

TEST_CASE("gradcheck subcommand passes and reports per-op lines") {
    RunResult r = run_cli("gradcheck --seed 17");
    INFO(r.out);
    CHECK(r.code == 0);
    CHECK(r.out.find("conv2d_input_fast") != std::string::npos);
    CHECK(r.out.find("max rel err") != std::string::npos);
}
