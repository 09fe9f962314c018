#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace consjudge {

/// Runs work(i) for i in [0, n) on up to `threads` workers and calls emit(i, result)
/// on the calling thread strictly in index order. An exception from work(i) is
/// rethrown from emit order position i after the workers are stopped.
template <typename Work, typename Emit>
void ordered_parallel_for(std::size_t n, std::size_t threads, Work&& work, Emit&& emit) {
    using Result = decltype(work(std::size_t{0}));
    if (n == 0) return;
    threads = std::clamp<std::size_t>(threads, 1, n);

    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) emit(i, work(i));
        return;
    }

    std::vector<std::optional<Result>> slots(n);
    std::vector<std::exception_ptr> errors(n);
    std::vector<char> ready(n, 0);
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    // Workers stay at most this far ahead of the emitter.
    const std::size_t window = threads * 4;
    std::size_t emitted = 0;

    auto worker = [&] {
        for (;;) {
            if (stop.load()) return;
            const auto i = next.fetch_add(1);
            if (i >= n) return;
            {
                std::unique_lock lock(mu);
                cv.wait(lock, [&] { return stop.load() || i < emitted + window; });
                if (stop.load()) return;
            }
            std::optional<Result> r;
            std::exception_ptr err;
            try {
                r.emplace(work(i));
            } catch (...) {
                err = std::current_exception();
            }
            {
                std::lock_guard lock(mu);
                slots[i] = std::move(r);
                errors[i] = err;
                ready[i] = 1;
            }
            cv.notify_all();
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);

    std::exception_ptr failure;
    try {
        for (std::size_t i = 0; i < n; ++i) {
            std::optional<Result> r;
            {
                std::unique_lock lock(mu);
                cv.wait(lock, [&] { return ready[i] != 0; });
                if (errors[i]) std::rethrow_exception(errors[i]);
                r = std::move(slots[i]);
                slots[i].reset();
            }
            emit(i, std::move(*r));
            {
                std::lock_guard lock(mu);
                emitted = i + 1;
            }
            cv.notify_all();
        }
    } catch (...) {
        failure = std::current_exception();
    }
    {
        std::lock_guard lock(mu);
        stop.store(true);
    }
    cv.notify_all();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace consjudge
