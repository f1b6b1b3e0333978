#include "duplex/clock.hpp"

#include <chrono>

namespace duplex {

Clock::Clock(ClockMode mode, TimeSource source)
    : mode_(mode), source_(std::move(source)), inbox_(std::make_shared<Inbox>()) {
    if (mode_ == ClockMode::Wall && !source_) {
        const auto origin = std::chrono::steady_clock::now();
        source_ = [origin] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - origin)
                .count();
        };
    }
}

Millis Clock::now() const {
    return mode_ == ClockMode::Virtual ? virtual_now_ : source_();
}

void Clock::schedule(Millis at, Task task) {
    queue_.emplace(std::make_pair(std::max(at, now()), seq_++), std::move(task));
}

void Clock::post(Task task) {
    std::lock_guard lock(inbox_->mutex);
    inbox_->tasks.push_back(std::move(task));
}

void Clock::drain_inbox() {
    std::vector<Task> tasks;
    {
        std::lock_guard lock(inbox_->mutex);
        tasks.swap(inbox_->tasks);
    }
    for (auto& task : tasks) schedule(now(), std::move(task));
}

void Clock::run_until(Millis limit) {
    drain_inbox();
    while (!queue_.empty()) {
        auto it = queue_.begin();
        if (it->first.first > limit) break;
        if (mode_ == ClockMode::Virtual) virtual_now_ = std::max(virtual_now_, it->first.first);
        auto task = std::move(it->second);
        queue_.erase(it);
        task();
        drain_inbox();
    }
    if (mode_ == ClockMode::Virtual) virtual_now_ = std::max(virtual_now_, limit);
}

void Clock::run_until_idle() {
    drain_inbox();
    while (!queue_.empty()) {
        auto it = queue_.begin();
        if (mode_ == ClockMode::Virtual) virtual_now_ = std::max(virtual_now_, it->first.first);
        if (mode_ == ClockMode::Wall && it->first.first > now()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(it->first.first - now()));
            drain_inbox();
            continue;
        }
        auto task = std::move(it->second);
        queue_.erase(it);
        task();
        drain_inbox();
    }
}

void Clock::pump() {
    run_until(now());
}

bool Clock::idle() const {
    std::lock_guard lock(inbox_->mutex);
    return queue_.empty() && inbox_->tasks.empty();
}

std::size_t Clock::pending() const {
    std::lock_guard lock(inbox_->mutex);
    return queue_.size() + inbox_->tasks.size();
}

}  // namespace duplex
