#include "fgc/common.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

namespace fgc {

int worker_threads() {
    const char* env = std::getenv("FGC_THREADS");
    if (!env || !*env) return 1;
    int n = std::atoi(env);
    if (n < 1) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw > 0) n = std::min<int>(n, static_cast<int>(hw));
    return n;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    int workers = worker_threads();
    if (workers <= 1 || n <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    std::atomic<int64_t> next{0};
    auto body = [&] {
        for (;;) {
            int64_t i = next.fetch_add(1);
            if (i >= n) return;
            fn(i);
        }
    };
    int count = static_cast<int>(std::min<int64_t>(workers, n));
    threads.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) threads.emplace_back(body);
    for (auto& t : threads) t.join();
}

}  // namespace fgc
