#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "nst/bench.hpp"
#include "oracles.hpp"

using namespace nst;

namespace {

// Manually advanced time source shared with a synthetic workload.
class FakeClock : public Clock {
public:
    double now() override { return t_; }
    void advance(double dt) { t_ += dt; }

private:
    double t_ = 1000.0;
};

WorkloadFactory constant_rate_factory(FakeClock& clock, double seconds_per_iter) {
    return [&clock, seconds_per_iter](ModelKind, Backend, int, std::uint64_t) -> Workload {
        return [&clock, seconds_per_iter] { clock.advance(seconds_per_iter); };
    };
}

BenchConfig one_cell_config() {
    BenchConfig cfg;
    cfg.models = {ModelKind::vgg_desk};
    cfg.resolutions = {128};
    cfg.backends = {Backend::fast};
    cfg.warmup = 0;
    return cfg;
}

// Independent layer walk for the golden estimate: hardcodes the
// desk-model block structure instead of consulting ModelSpec.
std::uint64_t vgg_desk_estimate_oracle(std::uint64_t s, std::uint64_t prec) {
    const std::uint64_t chans[4] = {32, 64, 128, 256};
    std::uint64_t act = 3 * s * s * prec;  // input image
    std::uint64_t img = act;
    std::uint64_t workspace = 0;
    std::uint64_t in_c = 3;
    for (int b = 0; b < 4; ++b) {
        std::uint64_t c = chans[b];
        // conv, relu, conv, relu all at s x s with c channels
        act += 4 * c * s * s * prec;
        // im2col workspace candidates for the two 3x3 convs
        workspace = std::max(workspace, in_c * 9 * s * s * prec);
        workspace = std::max(workspace, c * 9 * s * s * prec);
        s /= 2;  // pool 2,2
        act += c * s * s * prec;
        in_c = c;
    }
    return act + 2 * act + 2 * img + workspace;
}

}  // namespace

TEST_CASE("memory estimate matches the independent walk and the golden value") {
    ModelSpec spec = build_model(ModelKind::vgg_desk);
    MemoryEstimate est = estimate_memory(spec, 128, 4);
    CHECK(est.total_bytes == vgg_desk_estimate_oracle(128, 4));
    CHECK(est.total_bytes == 69992448ull);  // frozen from the oracle walk
    CHECK(est.total_bytes == est.activation_bytes + est.tape_saved_bytes +
                                 est.optimizer_state_bytes + est.workspace_bytes);
    CHECK(est.tape_saved_bytes == 2 * est.activation_bytes);
}

TEST_CASE("memory estimate grows with resolution; conv activations scale 4x") {
    for (ModelKind kind : {ModelKind::vgg_desk, ModelKind::nin_desk}) {
        ModelSpec spec = build_model(kind);
        std::uint64_t prev = 0;
        for (int res : {64, 128, 256, 512}) {
            MemoryEstimate est = estimate_memory(spec, res, 4);
            CHECK(est.total_bytes > prev);
            prev = est.total_bytes;
        }
        MemoryEstimate lo = estimate_memory(spec, 128, 4);
        MemoryEstimate hi = estimate_memory(spec, 256, 4);
        REQUIRE(lo.per_layer_activation_bytes.size() == hi.per_layer_activation_bytes.size());
        for (std::size_t i = 0; i < lo.per_layer_activation_bytes.size(); ++i)
            CHECK(hi.per_layer_activation_bytes[i] == 4 * lo.per_layer_activation_bytes[i]);
    }
}

TEST_CASE("120 iterations in a simulated 60 s is exactly 120 iters/min") {
    FakeClock clock;
    BenchConfig cfg = one_cell_config();
    cfg.mode = BenchConfig::Mode::fixed_iterations;
    cfg.iterations = 120;
    auto records = run_bench(cfg, clock, constant_rate_factory(clock, 0.5));
    REQUIRE(records.size() == 1);
    CHECK(records[0].iterations == 120);
    CHECK(records[0].elapsed_s == doctest::Approx(60.0).epsilon(1e-12));
    CHECK(records[0].iters_per_min == doctest::Approx(120.0).epsilon(1e-12));
}

TEST_CASE("constant-rate simulation gives linear cumulative counts") {
    const double rate = 120.0;  // iters per minute
    for (int minutes = 1; minutes <= 5; ++minutes) {
        FakeClock clock;
        BenchConfig cfg = one_cell_config();
        cfg.mode = BenchConfig::Mode::fixed_duration;
        cfg.duration_s = 60.0 * minutes;
        auto records = run_bench(cfg, clock, constant_rate_factory(clock, 60.0 / rate));
        REQUIRE(records.size() == 1);
        CHECK(std::abs(static_cast<double>(records[0].iterations) - minutes * rate) < 1e-9);
        CHECK(records[0].iters_per_min == doctest::Approx(rate).epsilon(1e-9));
    }
}

TEST_CASE("rate identity holds on every record") {
    FakeClock clock;
    BenchConfig cfg;
    cfg.models = {ModelKind::vgg_desk, ModelKind::nin_desk};
    cfg.resolutions = {64, 128};
    cfg.backends = {Backend::naive, Backend::fast};
    cfg.mode = BenchConfig::Mode::fixed_iterations;
    cfg.iterations = 7;
    cfg.warmup = 2;
    auto records = run_bench(cfg, clock, constant_rate_factory(clock, 0.25));
    CHECK(records.size() == 8);
    for (const auto& r : records)
        CHECK(std::abs(r.iters_per_min - 60.0 * static_cast<double>(r.iterations) / r.elapsed_s) <
              1e-9);
}

TEST_CASE("cells over the memory budget are refused without allocating") {
    FakeClock clock;
    BenchConfig cfg = one_cell_config();
    cfg.resolutions = {512};
    // pin the budget below the analytically known 512 px estimate
    MemoryEstimate est = estimate_memory(build_model(ModelKind::vgg_desk), 512, 4);
    cfg.memory_budget_bytes = est.total_bytes - 1;

    int factory_calls = 0;
    std::uint64_t allocs_before = tensor_alloc_count().load();
    auto records = run_bench(cfg, clock,
                             [&](ModelKind, Backend, int, std::uint64_t) -> Workload {
                                 ++factory_calls;
                                 return [] {};
                             });
    REQUIRE(records.size() == 1);
    CHECK(records[0].status == BenchRecord::Status::refused_memory);
    CHECK(records[0].iterations == 0);
    CHECK(records[0].peak_mem_bytes == est.total_bytes);
    CHECK(factory_calls == 0);
    CHECK(tensor_alloc_count().load() == allocs_before);
}

TEST_CASE("config validation") {
    BenchConfig cfg;
    cfg.resolutions = {100};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = BenchConfig{};
    cfg.models.clear();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = BenchConfig{};
    cfg.mode = BenchConfig::Mode::fixed_duration;
    cfg.duration_s = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("CSV header is byte-exact and rows count cells") {
    FakeClock clock;
    BenchConfig cfg;
    cfg.models = {ModelKind::vgg_desk, ModelKind::nin_desk};
    cfg.resolutions = {64, 128, 256};
    cfg.backends = {Backend::naive, Backend::fast};
    cfg.mode = BenchConfig::Mode::fixed_iterations;
    cfg.iterations = 2;
    cfg.warmup = 0;
    auto records = run_bench(cfg, clock, constant_rate_factory(clock, 0.5));
    std::string csv = format_csv(records);
    std::string header = csv.substr(0, csv.find('\n'));
    CHECK(header ==
          "model,backend,resolution,iterations,elapsed_s,iters_per_min,peak_mem_bytes,status");
    int rows = 0;
    for (char ch : csv)
        if (ch == '\n') ++rows;
    CHECK(rows == 13);  // header + 12 cells

    std::string path = "/tmp/nst_bench_test.csv";
    emit_csv(records, path);
    std::ifstream in(path, std::ios::binary);
    std::string contents((std::istreambuf_iterator<char>(in)), {});
    CHECK(contents == csv);
    CHECK(contents.find("\r") == std::string::npos);
    std::remove(path.c_str());

    CHECK_THROWS_AS(emit_csv({}, path), ContractError);
}

TEST_CASE("markdown report renders refused cells as an em dash") {
    BenchRecord ok;
    ok.model = ModelKind::vgg_desk;
    ok.backend = Backend::fast;
    ok.resolution = 128;
    ok.iterations = 10;
    ok.elapsed_s = 10;
    ok.iters_per_min = 60;
    BenchRecord refused = ok;
    refused.resolution = 512;
    refused.status = BenchRecord::Status::refused_memory;
    refused.iterations = 0;
    std::string report = format_report({ok, refused});
    CHECK(report.find("vgg-desk (fast)") != std::string::npos);
    CHECK(report.find("60.0") != std::string::npos);
    CHECK(report.find("—") != std::string::npos);
}
