#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace circadia {

/// Worker-count policy for parallelizable loops. Results are always reduced
/// by item index, so the outcome is identical for any thread count.
struct ExecPolicy {
    int threads = 1;

    static ExecPolicy serial() { return {1}; }

    /// Resolve "N" / "auto" / empty, falling back to the CIRCADIA_THREADS
    /// environment variable and then to the hardware concurrency.
    static ExecPolicy resolve(const std::string& flag) {
        std::string v = flag;
        if (v.empty()) {
            if (const char* env = std::getenv("CIRCADIA_THREADS")) v = env;
        }
        if (v.empty() || v == "auto") {
            unsigned hc = std::thread::hardware_concurrency();
            return {hc == 0 ? 1 : static_cast<int>(hc)};
        }
        int n = std::atoi(v.c_str());
        return {n < 1 ? 1 : n};
    }
};

/// Run fn(i) for i in [0, count) on up to policy.threads workers. Work items
/// are claimed from a shared counter; exceptions are rethrown on the caller.
template <typename Fn>
void parallel_for_index(std::size_t count, const ExecPolicy& policy, Fn&& fn) {
    const int workers = std::max(1, std::min<int>(policy.threads, static_cast<int>(count)));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace circadia
