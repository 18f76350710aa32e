#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nst/models.hpp"

namespace nst {

// Injectable time source (seconds). The per-minute tables are pure
// arithmetic over it, so rate logic is testable without wall time.
class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;
};

class SteadyClock : public Clock {
public:
    double now() override;
};

struct BenchConfig {
    std::vector<ModelKind> models = {ModelKind::vgg_desk, ModelKind::nin_desk};
    std::vector<int> resolutions = {64, 128, 256};
    std::vector<Backend> backends = {Backend::naive, Backend::fast};

    enum class Mode { fixed_duration, fixed_iterations };
    Mode mode = Mode::fixed_iterations;
    double duration_s = 60.0;  // fixed_duration
    int iterations = 50;       // fixed_iterations
    int warmup = 3;            // unmeasured iterations per cell
    std::uint64_t seed = 0;
    std::uint64_t memory_budget_bytes = 4ull << 30;  // 4 GiB

    void validate() const;  // ConfigError on violation
};

struct MemoryEstimate {
    std::vector<std::uint64_t> per_layer_activation_bytes;  // [0] is the input image
    std::uint64_t activation_bytes = 0;
    std::uint64_t tape_saved_bytes = 0;      // forward values + gradient buffers
    std::uint64_t optimizer_state_bytes = 0; // Adam moments over the pixels
    std::uint64_t workspace_bytes = 0;       // im2col buffer of the largest conv
    std::uint64_t total_bytes = 0;
};

// Analytic peak-allocation prediction for one optimization run; pure
// arithmetic over the model's shape algebra, no tensor is touched.
MemoryEstimate estimate_memory(const ModelSpec& spec, std::int64_t resolution,
                               int precision_bytes);

struct BenchRecord {
    ModelKind model = ModelKind::vgg_desk;
    Backend backend = Backend::fast;
    int resolution = 0;
    std::int64_t iterations = 0;
    double elapsed_s = 0.0;
    double iters_per_min = 0.0;
    std::uint64_t peak_mem_bytes = 0;
    enum class Status { ok, refused_memory };
    Status status = Status::ok;
};

const char* bench_status_name(BenchRecord::Status s);

// One measured iteration of the cell's workload.
using Workload = std::function<void()>;
// Builds the workload for a cell; invoked only after the memory check.
using WorkloadFactory = std::function<Workload(ModelKind, Backend, int resolution,
                                               std::uint64_t seed)>;

// Default workload: a seeded synthetic style transfer whose iteration
// is one optimizer step (forward, backward, pixel update).
Workload make_style_workload(ModelKind kind, Backend backend, int resolution,
                             std::uint64_t seed);

// Measures every (model, backend, resolution) cell sequentially.
// Cells whose memory estimate exceeds the budget are refused without
// allocating anything.
std::vector<BenchRecord> run_bench(const BenchConfig& cfg, Clock& clock,
                                   const WorkloadFactory& factory = make_style_workload);

// CSV with the fixed header
// model,backend,resolution,iterations,elapsed_s,iters_per_min,peak_mem_bytes,status
void emit_csv(const std::vector<BenchRecord>& records, const std::string& path);
std::string format_csv(const std::vector<BenchRecord>& records);

// Markdown table: one row per resolution, one column per model/backend
// pair; refused cells render as an em dash.
void emit_report(const std::vector<BenchRecord>& records, const std::string& path);
std::string format_report(const std::vector<BenchRecord>& records);

}  // namespace nst
