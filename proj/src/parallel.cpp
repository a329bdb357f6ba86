#include "gsnet/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace gsnet {

namespace {

int detect_threads() {
    if (const char* env = std::getenv("GSNET_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n >= 1) {
                return n;
            }
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int> g_threads{0};
thread_local bool g_inside_worker = false;

}  // namespace

int thread_count() {
    int n = g_threads.load();
    if (n == 0) {
        n = detect_threads();
        g_threads.store(n);
    }
    return n;
}

void set_thread_count(int n) { g_threads.store(std::max(1, n)); }

void parallel_for(std::int64_t begin, std::int64_t end, const std::function<void(std::int64_t)>& fn) {
    const std::int64_t count = end - begin;
    if (count <= 0) {
        return;
    }
    const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), count));
    // Nested calls run inline so the pool never oversubscribes.
    if (workers <= 1 || g_inside_worker) {
        for (std::int64_t i = begin; i < end; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::int64_t> next{begin};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&] {
        g_inside_worker = true;
        for (std::int64_t i = next++; i < end; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
        g_inside_worker = false;
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers - 1));
    for (int w = 1; w < workers; ++w) {
        pool.emplace_back(run);
    }
    run();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

}  // namespace gsnet
