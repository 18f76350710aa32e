#include "nst/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace nst {

namespace {
std::atomic<int> g_workers{1};
std::atomic<std::uint64_t> g_tensor_allocs{0};
}  // namespace

int worker_count() {
    int n = g_workers.load(std::memory_order_relaxed);
    if (n == 0) {
        n = static_cast<int>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
    }
    return n;
}

void set_worker_count(int n) {
    if (n < 0) throw ConfigError("worker count must be >= 0");
    g_workers.store(n, std::memory_order_relaxed);
}

std::atomic<std::uint64_t>& tensor_alloc_count() { return g_tensor_allocs; }

const char* backend_name(Backend b) { return b == Backend::naive ? "naive" : "fast"; }

Backend parse_backend(const std::string& name) {
    if (name == "naive") return Backend::naive;
    if (name == "fast") return Backend::fast;
    throw ConfigError("unknown backend '" + name + "' (expected naive or fast)");
}

std::int64_t pool_out_size(std::int64_t in, int k, int s) {
    if (k < 1 || s < 1) throw GeometryError("pool kernel and stride must be >= 1");
    std::int64_t span = in - k;
    if (span < 0 || span % s != 0)
        throw GeometryError("pool geometry: input " + std::to_string(in) + ", window " +
                            std::to_string(k) + ", stride " + std::to_string(s) +
                            " gives no integer output size");
    return span / s + 1;
}

namespace detail {
namespace {

// Row blocks are a fixed size so the work decomposition (and thus the
// result bits) never depends on how many workers pick blocks up.
constexpr std::int64_t kRowBlock = 16;

template <class T>
void gemm_rows(const T* a, const T* b, T* c, std::int64_t row0, std::int64_t row1,
               std::int64_t k, std::int64_t n) {
    for (std::int64_t i = row0; i < row1; ++i) {
        T* cr = c + i * n;
        std::fill(cr, cr + n, T(0));
        const T* ar = a + i * k;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            T av = ar[kk];
            const T* br = b + kk * n;
            for (std::int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
        }
    }
}

template <class T>
void gemm_impl(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    const int workers = worker_count();
    const std::int64_t blocks = (m + kRowBlock - 1) / kRowBlock;
    if (workers <= 1 || blocks <= 1 || m * k * n < (1 << 18)) {
        gemm_rows(a, b, c, 0, m, k, n);
        return;
    }
    std::atomic<std::int64_t> next{0};
    auto work = [&] {
        for (;;) {
            std::int64_t blk = next.fetch_add(1, std::memory_order_relaxed);
            if (blk >= blocks) return;
            std::int64_t row0 = blk * kRowBlock;
            gemm_rows(a, b, c, row0, std::min(m, row0 + kRowBlock), k, n);
        }
    };
    std::vector<std::thread> pool;
    int nthreads = static_cast<int>(std::min<std::int64_t>(workers, blocks));
    pool.reserve(static_cast<std::size_t>(nthreads - 1));
    for (int t = 1; t < nthreads; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
}

}  // namespace

void gemm_raw(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
              std::int64_t n) {
    gemm_impl(a, b, c, m, k, n);
}

void gemm_raw(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k,
              std::int64_t n) {
    gemm_impl(a, b, c, m, k, n);
}

}  // namespace detail
}  // namespace nst
