#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace quest {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Blocks until all
/// items finish. If any call throws, the exception of the lowest failing
/// index is rethrown after every worker has stopped.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn && fn)
{
    if (n == 0) {
        return;
    }
    workers = std::clamp<std::size_t>(workers, 1, n);
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::size_t first_error_index = n;

    auto work = [&] {
        for (;;) {
            std::size_t const i = next.fetch_add(1);
            if (i >= n) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (i < first_error_index) {
                    first_error_index = i;
                    first_error = std::current_exception();
                }
            }
        }
    };

    {
        std::vector<std::jthread> threads;
        threads.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) {
            threads.emplace_back(work);
        }
        work();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

/// Counting limiter with a runtime bound and a high-water gauge.
class ConcurrencyLimiter
{
public:
    explicit ConcurrencyLimiter(std::size_t limit) : limit_(std::max<std::size_t>(limit, 1)) {}

    void acquire()
    {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return in_flight_ < limit_; });
        ++in_flight_;
        peak_ = std::max(peak_, in_flight_);
    }

    void release()
    {
        {
            std::lock_guard lock(mutex_);
            --in_flight_;
        }
        cv_.notify_one();
    }

    [[nodiscard]] std::size_t limit() const noexcept { return limit_; }

    [[nodiscard]] std::size_t in_flight() const
    {
        std::lock_guard lock(mutex_);
        return in_flight_;
    }

    /// Highest in-flight count observed since construction or reset_peak().
    [[nodiscard]] std::size_t peak() const
    {
        std::lock_guard lock(mutex_);
        return peak_;
    }

    void reset_peak()
    {
        std::lock_guard lock(mutex_);
        peak_ = in_flight_;
    }

private:
    std::size_t limit_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
    std::size_t peak_ = 0;
};

class LimiterSlot
{
public:
    explicit LimiterSlot(ConcurrencyLimiter & limiter) : limiter_(limiter) { limiter_.acquire(); }
    ~LimiterSlot() { limiter_.release(); }
    LimiterSlot(LimiterSlot const &) = delete;
    LimiterSlot & operator=(LimiterSlot const &) = delete;

private:
    ConcurrencyLimiter & limiter_;
};

} // namespace quest
