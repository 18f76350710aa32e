#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "nst/bench.hpp"
#include "nst/gradcheck.hpp"
#include "nst/image_io.hpp"
#include "nst/models.hpp"
#include "nst/style.hpp"

namespace {

struct TransferArgs {
    std::string content, style, out;
    std::string model = "vgg-desk";
    int size = 128;
    int iters = 500;
    std::string backend = "fast";
    std::uint64_t seed = 0;
    double content_weight = 1.0;
    double style_weight = 1e3;
    std::string init = "content";
    int snapshot_every = 0;
    std::string weights_path;
    std::uint64_t mem_budget = 4ull << 30;
};

struct BenchArgs {
    std::vector<std::string> models = {"vgg-desk", "nin-desk"};
    std::vector<int> sizes = {64, 128, 256};
    std::vector<std::string> backends = {"naive", "fast"};
    double seconds = 0.0;
    int iterations = 0;
    int warmup = 3;
    std::uint64_t seed = 0;
    std::uint64_t mem_budget = 4ull << 30;
    std::string csv_path;
    std::string report_path;
};

std::pair<std::string, std::string> split_stem(const std::string& path) {
    auto slash = path.find_last_of('/');
    auto dot = path.rfind('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return {path, "png"};
    return {path.substr(0, dot), path.substr(dot + 1)};
}

int run_transfer_cmd(const TransferArgs& a) {
    nst::ModelSpec spec = nst::build_model(nst::parse_model_kind(a.model));
    nst::Backend backend = nst::parse_backend(a.backend);

    nst::MemoryEstimate est = nst::estimate_memory(spec, a.size, sizeof(float));
    if (est.total_bytes > a.mem_budget)
        throw nst::ConfigError("estimated peak memory " + std::to_string(est.total_bytes) +
                               " bytes exceeds budget " + std::to_string(a.mem_budget) +
                               " bytes; refusing to run at " + std::to_string(a.size) + " px");

    nst::WeightStore weights = a.weights_path.empty()
                                   ? nst::init_weights(spec, a.seed)
                                   : nst::load_weights(a.weights_path);

    nst::Tensor content = nst::load_image(a.content, a.size);
    nst::Tensor style = nst::load_image(a.style, a.size);

    nst::StyleConfig cfg;
    cfg.content_weight = a.content_weight;
    cfg.style_weight = a.style_weight;
    cfg.iterations = a.iters;
    cfg.init = a.init == "noise" ? nst::StyleConfig::Init::noise
                                 : nst::StyleConfig::Init::content_image;
    cfg.snapshot_interval = a.snapshot_every;
    cfg.seed = a.seed;
    cfg.validate();

    auto [stem, ext] = split_stem(a.out);
    auto [final_image, report] = nst::run_transfer(
        spec, weights, content, style, cfg, backend, stem, ext,
        [&](const nst::IterationRecord& rec) {
            if (rec.iteration % 25 == 0 || rec.iteration == 1)
                std::fprintf(stderr, "iter %d  total %.6g  content %.6g  style %.6g\n",
                             rec.iteration, rec.total_loss, rec.content_loss, rec.style_loss);
        });

    nst::save_image(final_image, a.out);

    std::string trace_path = stem + "_trace.csv";
    std::ofstream trace(trace_path, std::ios::binary);
    if (!trace) throw nst::IoError("cannot open '" + trace_path + "' for writing");
    trace << "iteration,content_loss,style_loss,total_loss,seconds\n";
    char line[160];
    for (const auto& r : report.records) {
        std::snprintf(line, sizeof line, "%d,%.9g,%.9g,%.9g,%.9g\n", r.iteration,
                      r.content_loss, r.style_loss, r.total_loss, r.seconds);
        trace << line;
    }
    std::cout << "wrote " << a.out << " and " << trace_path << " (" << report.records.size()
              << " iterations)\n";
    return 0;
}

int run_bench_cmd(const BenchArgs& a) {
    nst::BenchConfig cfg;
    cfg.models.clear();
    for (const auto& m : a.models) cfg.models.push_back(nst::parse_model_kind(m));
    cfg.resolutions = a.sizes;
    cfg.backends.clear();
    for (const auto& b : a.backends) cfg.backends.push_back(nst::parse_backend(b));
    if (a.seconds > 0) {
        cfg.mode = nst::BenchConfig::Mode::fixed_duration;
        cfg.duration_s = a.seconds;
    } else {
        cfg.mode = nst::BenchConfig::Mode::fixed_iterations;
        cfg.iterations = a.iterations > 0 ? a.iterations : 50;
    }
    cfg.warmup = a.warmup;
    cfg.seed = a.seed;
    cfg.memory_budget_bytes = a.mem_budget;

    nst::SteadyClock clock;
    auto records = nst::run_bench(cfg, clock);
    nst::emit_csv(records, a.csv_path);
    if (!a.report_path.empty()) nst::emit_report(records, a.report_path);

    for (const auto& r : records) {
        if (r.status == nst::BenchRecord::Status::refused_memory)
            std::printf("%-8s %-5s %4d px   refused-memory (estimate %llu bytes)\n",
                        nst::model_kind_name(r.model), nst::backend_name(r.backend),
                        r.resolution, static_cast<unsigned long long>(r.peak_mem_bytes));
        else
            std::printf("%-8s %-5s %4d px   %8.2f iters/min  (%lld iters in %.2f s)\n",
                        nst::model_kind_name(r.model), nst::backend_name(r.backend),
                        r.resolution, r.iters_per_min, static_cast<long long>(r.iterations),
                        r.elapsed_s);
    }
    return 0;
}

int run_gradcheck_cmd(std::uint64_t seed) {
    auto results = nst::gradcheck_suite(seed);
    bool ok = true;
    for (const auto& r : results) {
        std::printf("%-24s %2d instances  max rel err %.3e\n", r.name.c_str(), r.instances,
                    r.max_rel_err);
        if (!(r.max_rel_err < 1e-4)) ok = false;
    }
    if (!ok) {
        std::fprintf(stderr, "error: gradient check exceeded 1e-4\n");
        return 1;
    }
    return 0;
}

int run_weights_init(const std::string& model, std::uint64_t seed, const std::string& out) {
    nst::ModelSpec spec = nst::build_model(nst::parse_model_kind(model));
    nst::WeightStore store = nst::init_weights(spec, seed);
    nst::save_weights(store, out);
    std::cout << "wrote " << out << " (" << store.entries.size() << " conv layers)\n";
    return 0;
}

int run_weights_inspect(const std::string& path) {
    nst::WeightStore store = nst::load_weights(path);
    std::cout << "kind: " << nst::model_kind_name(store.kind) << "\n";
    std::cout << "conv layers: " << store.entries.size() << "\n";
    std::size_t params = 0;
    for (const auto& [idx, wb] : store.entries) {
        std::cout << "  layer " << idx << ": weights " << wb.first.shape_str() << ", bias "
                  << wb.second.size() << "\n";
        params += wb.first.size() + wb.second.size();
    }
    std::cout << "total parameters: " << params << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nst: neural style transfer engine and iterations-per-minute benchmark"};
    app.require_subcommand(1);

    TransferArgs ta;
    auto* transfer = app.add_subcommand("transfer", "Run style transfer on two images");
    transfer->add_option("--content", ta.content, "Content image (PNG or PPM)")->required();
    transfer->add_option("--style", ta.style, "Style image (PNG or PPM)")->required();
    transfer->add_option("--out", ta.out, "Output image path (.png or .ppm)")->required();
    transfer->add_option("--model", ta.model, "Model architecture")
        ->check(CLI::IsMember({"vgg-desk", "nin-desk"}))
        ->capture_default_str();
    transfer->add_option("--size", ta.size, "Square working resolution")
        ->check(CLI::IsMember({64, 128, 256, 512}))
        ->capture_default_str();
    transfer->add_option("--iters", ta.iters, "Optimization iterations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    transfer->add_option("--backend", ta.backend, "Compute backend")
        ->check(CLI::IsMember({"naive", "fast"}))
        ->capture_default_str();
    transfer->add_option("--seed", ta.seed, "Seed for weights and noise init")
        ->capture_default_str();
    transfer->add_option("--content-weight", ta.content_weight, "Content term weight (alpha)")
        ->capture_default_str();
    transfer->add_option("--style-weight", ta.style_weight, "Style term weight (beta)")
        ->capture_default_str();
    transfer->add_option("--init", ta.init, "Starting image")
        ->check(CLI::IsMember({"content", "noise"}))
        ->capture_default_str();
    transfer->add_option("--snapshot-every", ta.snapshot_every, "Snapshot interval (0 = off)")
        ->capture_default_str();
    transfer->add_option("--weights", ta.weights_path, "Weight file instead of seeded init");
    transfer->add_option("--mem-budget", ta.mem_budget, "Memory budget in bytes")
        ->capture_default_str();

    BenchArgs ba;
    auto* bench = app.add_subcommand("bench", "Measure iterations per minute per cell");
    bench->add_option("--models", ba.models, "Comma-separated model list")
        ->delimiter(',')
        ->capture_default_str();
    bench->add_option("--sizes", ba.sizes, "Comma-separated resolutions")
        ->delimiter(',')
        ->capture_default_str();
    bench->add_option("--backends", ba.backends, "Comma-separated backends")
        ->delimiter(',')
        ->capture_default_str();
    auto* secs = bench->add_option("--seconds", ba.seconds, "Fixed-duration mode, seconds per cell");
    bench->add_option("--iterations", ba.iterations, "Fixed-iteration mode, iterations per cell (default 50)")
        ->excludes(secs);
    bench->add_option("--warmup", ba.warmup, "Unmeasured warmup iterations")
        ->capture_default_str();
    bench->add_option("--seed", ba.seed, "Workload seed")->capture_default_str();
    bench->add_option("--mem-budget", ba.mem_budget, "Memory budget in bytes")
        ->capture_default_str();
    bench->add_option("--csv", ba.csv_path, "CSV output path")->required();
    bench->add_option("--report", ba.report_path, "Markdown report output path");

    std::uint64_t gc_seed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gradcheck->add_option("--seed", gc_seed, "Seed for random instances")->capture_default_str();

    auto* weights = app.add_subcommand("weights", "Create or describe weight files");
    weights->require_subcommand(1);
    std::string wi_model, wi_out, win_path;
    std::uint64_t wi_seed = 0;
    auto* winit = weights->add_subcommand("init", "Create a seeded weight file");
    winit->add_option("--model", wi_model, "Model architecture")
        ->check(CLI::IsMember({"vgg-desk", "nin-desk"}))
        ->required();
    winit->add_option("--seed", wi_seed, "Init seed")->capture_default_str();
    winit->add_option("--out", wi_out, "Output weight file")->required();
    auto* winspect = weights->add_subcommand("inspect", "Describe a weight file");
    winspect->add_option("path", win_path, "Weight file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*transfer) return run_transfer_cmd(ta);
        if (*bench) return run_bench_cmd(ba);
        if (*gradcheck) return run_gradcheck_cmd(gc_seed);
        if (*winit) return run_weights_init(wi_model, wi_seed, wi_out);
        if (*winspect) return run_weights_inspect(win_path);
    } catch (const nst::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
