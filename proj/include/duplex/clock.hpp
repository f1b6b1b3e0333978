#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

#include "duplex/core.hpp"

namespace duplex {

enum class ClockMode { Virtual, Wall };

/// Session clock and event scheduler.
///
/// Virtual mode jumps time from callback to callback, firing them in time
/// order with ties broken by insertion order. Wall mode takes `now` from a
/// time source (steady clock by default) and fires due callbacks whenever
/// pump() is called. schedule() and now() belong to the owning thread;
/// post() may be called from any thread.
class Clock {
public:
    using Task = std::function<void()>;
    using TimeSource = std::function<Millis()>;

    explicit Clock(ClockMode mode = ClockMode::Virtual, TimeSource source = {});
    Clock(const Clock&) = delete;
    Clock& operator=(const Clock&) = delete;

    ClockMode mode() const noexcept { return mode_; }
    Millis now() const;

    /// Tasks scheduled in the past run at the current time.
    void schedule(Millis at, Task task);
    void post(Task task);

    /// Virtual: runs tasks in order until none is left or the next one is
    /// later than `limit`; time ends at the last fired task (or `limit` if
    /// it was reached). Wall: fires tasks that are due.
    void run_until(Millis limit);
    void run_until_idle();
    /// Wall mode: fire everything due now. Virtual mode: same as run_until(now()).
    void pump();

    bool idle() const;
    std::size_t pending() const;

    /// Runs `work` and hands its result to `deliver` on the clock's thread.
    /// Non-blocking work (simulated backends) runs inline and its result is
    /// delivered `latency(result)` ms later. Blocking work in wall mode runs on
    /// a worker thread and is delivered through post() once it returns; its
    /// latency has already been spent.
    template <class Result>
    void defer(std::function<Result()> work, bool blocking, std::function<void(Result)> deliver,
               std::function<Millis(const Result&)> latency);

private:
    struct Inbox {
        std::mutex mutex;
        std::vector<Task> tasks;
    };

    void drain_inbox();

    ClockMode mode_;
    TimeSource source_;
    Millis virtual_now_ = 0;
    std::uint64_t seq_ = 0;
    std::map<std::pair<Millis, std::uint64_t>, Task> queue_;
    std::shared_ptr<Inbox> inbox_;
};

template <class Result>
void Clock::defer(std::function<Result()> work, bool blocking, std::function<void(Result)> deliver,
                  std::function<Millis(const Result&)> latency) {
    if (blocking && mode_ == ClockMode::Wall) {
        std::thread([inbox = inbox_, work = std::move(work), deliver = std::move(deliver)]() mutable {
            auto result = work();
            std::lock_guard lock(inbox->mutex);
            inbox->tasks.push_back([deliver = std::move(deliver), result = std::move(result)]() mutable {
                deliver(std::move(result));
            });
        }).detach();
        return;
    }
    auto result = work();
    const Millis at = now() + std::max<Millis>(0, latency(result));
    schedule(at, [deliver = std::move(deliver), result = std::move(result)]() mutable { deliver(std::move(result)); });
}

}  // namespace duplex
