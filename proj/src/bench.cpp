#include "nst/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>

#include "nst/style.hpp"

namespace nst {

double SteadyClock::now() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void BenchConfig::validate() const {
    if (models.empty() || resolutions.empty() || backends.empty())
        throw ConfigError("bench config needs at least one model, resolution and backend");
    for (int r : resolutions) {
        if (r != 64 && r != 128 && r != 256 && r != 512)
            throw ConfigError("unsupported resolution " + std::to_string(r) +
                              " (expected 64, 128, 256 or 512)");
    }
    if (mode == Mode::fixed_duration && !(duration_s > 0))
        throw ConfigError("bench duration must be > 0");
    if (mode == Mode::fixed_iterations && iterations < 1)
        throw ConfigError("bench iteration count must be >= 1");
    if (warmup < 0) throw ConfigError("warmup must be >= 0");
}

const char* bench_status_name(BenchRecord::Status s) {
    return s == BenchRecord::Status::ok ? "ok" : "refused-memory";
}

MemoryEstimate estimate_memory(const ModelSpec& spec, std::int64_t resolution,
                               int precision_bytes) {
    MemoryEstimate est;
    const std::uint64_t prec = static_cast<std::uint64_t>(precision_bytes);
    auto trace = spec.shape_trace(resolution);
    for (const auto& [c, h, w] : trace) {
        std::uint64_t bytes = static_cast<std::uint64_t>(c * h * w) * prec;
        est.per_layer_activation_bytes.push_back(bytes);
        est.activation_bytes += bytes;
    }
    // tape: forward values are held for backward, gradients mirror them
    est.tape_saved_bytes = 2 * est.activation_bytes;
    est.optimizer_state_bytes = 2 * est.per_layer_activation_bytes[0];
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.type != LayerSpec::Type::conv) continue;
        const auto& in = trace[i];
        std::int64_t oh = l.conv.out_size(in[1]), ow = l.conv.out_size(in[2]);
        std::uint64_t ws = static_cast<std::uint64_t>(l.conv.in_channels) * l.conv.kernel_size *
                           l.conv.kernel_size * static_cast<std::uint64_t>(oh * ow) * prec;
        est.workspace_bytes = std::max(est.workspace_bytes, ws);
    }
    est.total_bytes = est.activation_bytes + est.tape_saved_bytes + est.optimizer_state_bytes +
                      est.workspace_bytes;
    return est;
}

Workload make_style_workload(ModelKind kind, Backend backend, int resolution,
                             std::uint64_t seed) {
    ModelSpec spec = build_model(kind);
    auto weights = std::make_shared<WeightStore>(init_weights(spec, seed));

    Rng rng(seed ^ 0xb5297a4d3f8c6e21ull);
    Tensor content(1, 3, resolution, resolution);
    Tensor style(1, 3, resolution, resolution);
    for (std::size_t i = 0; i < content.size(); ++i)
        content[i] = static_cast<float>(rng.uniform());
    for (std::size_t i = 0; i < style.size(); ++i)
        style[i] = static_cast<float>(rng.uniform());

    StyleConfig cfg;
    cfg.init = StyleConfig::Init::noise;
    cfg.seed = seed;
    auto spec_holder = std::make_shared<ModelSpec>(std::move(spec));
    auto session = std::make_shared<TransferSession>(*spec_holder, *weights, std::move(content),
                                                     std::move(style), cfg, backend);
    return [session, spec_holder, weights] { session->step(); };
}

std::vector<BenchRecord> run_bench(const BenchConfig& cfg, Clock& clock,
                                   const WorkloadFactory& factory) {
    cfg.validate();
    // fail fast on unbuildable models, before any measurement
    for (ModelKind kind : cfg.models) build_model(kind);

    std::vector<BenchRecord> records;
    for (ModelKind kind : cfg.models) {
        ModelSpec spec = build_model(kind);
        for (Backend backend : cfg.backends) {
            for (int res : cfg.resolutions) {
                BenchRecord rec;
                rec.model = kind;
                rec.backend = backend;
                rec.resolution = res;

                MemoryEstimate est = estimate_memory(spec, res, static_cast<int>(sizeof(float)));
                rec.peak_mem_bytes = est.total_bytes;
                if (est.total_bytes > cfg.memory_budget_bytes) {
                    rec.status = BenchRecord::Status::refused_memory;
                    records.push_back(rec);
                    continue;
                }

                Workload iterate = factory(kind, backend, res, cfg.seed);
                for (int i = 0; i < cfg.warmup; ++i) iterate();

                double start = clock.now();
                std::int64_t done = 0;
                if (cfg.mode == BenchConfig::Mode::fixed_iterations) {
                    for (int i = 0; i < cfg.iterations; ++i) iterate();
                    done = cfg.iterations;
                } else {
                    while (clock.now() - start < cfg.duration_s) {
                        iterate();
                        ++done;
                    }
                }
                rec.elapsed_s = clock.now() - start;
                rec.iterations = done;
                if (!(rec.elapsed_s > 0))
                    throw ConfigError("clock did not advance during measurement");
                rec.iters_per_min = 60.0 * static_cast<double>(done) / rec.elapsed_s;
                records.push_back(rec);
            }
        }
    }
    return records;
}

std::string format_csv(const std::vector<BenchRecord>& records) {
    std::string out =
        "model,backend,resolution,iterations,elapsed_s,iters_per_min,peak_mem_bytes,status\n";
    char line[256];
    for (const auto& r : records) {
        std::snprintf(line, sizeof line, "%s,%s,%d,%lld,%.9g,%.9g,%llu,%s\n",
                      model_kind_name(r.model), backend_name(r.backend), r.resolution,
                      static_cast<long long>(r.iterations), r.elapsed_s, r.iters_per_min,
                      static_cast<unsigned long long>(r.peak_mem_bytes),
                      bench_status_name(r.status));
        out += line;
    }
    return out;
}

void emit_csv(const std::vector<BenchRecord>& records, const std::string& path) {
    if (records.empty()) throw ContractError("emit_csv: no records");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << format_csv(records);
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::string format_report(const std::vector<BenchRecord>& records) {
    // columns: model x backend pairs in first-seen order; rows: resolutions
    std::vector<std::pair<ModelKind, Backend>> cols;
    std::vector<int> rows;
    for (const auto& r : records) {
        std::pair<ModelKind, Backend> col{r.model, r.backend};
        if (std::find(cols.begin(), cols.end(), col) == cols.end()) cols.push_back(col);
        if (std::find(rows.begin(), rows.end(), r.resolution) == rows.end())
            rows.push_back(r.resolution);
    }
    std::sort(rows.begin(), rows.end());

    std::string out = "| resolution |";
    for (const auto& [kind, backend] : cols)
        out += std::string(" ") + model_kind_name(kind) + " (" + backend_name(backend) + ") |";
    out += "\n|---|";
    for (std::size_t i = 0; i < cols.size(); ++i) out += "---|";
    out += "\n";

    char cell[64];
    for (int res : rows) {
        out += "| " + std::to_string(res) + " |";
        for (const auto& [kind, backend] : cols) {
            const BenchRecord* found = nullptr;
            for (const auto& r : records)
                if (r.model == kind && r.backend == backend && r.resolution == res) found = &r;
            if (!found) {
                out += " |";
            } else if (found->status == BenchRecord::Status::refused_memory) {
                out += " — |";
            } else {
                std::snprintf(cell, sizeof cell, " %.1f |", found->iters_per_min);
                out += cell;
            }
        }
        out += "\n";
    }
    return out;
}

void emit_report(const std::vector<BenchRecord>& records, const std::string& path) {
    if (records.empty()) throw ContractError("emit_report: no records");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << "# Iterations per minute\n\n" << format_report(records);
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace nst
