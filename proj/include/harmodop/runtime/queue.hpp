// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>

namespace harmodop::runtime {

enum class QueuePolicy {
    block,        // producers wait for space
    drop_oldest,  // the oldest queued item is discarded to make room
};

/// Fixed-capacity multi-producer multi-consumer FIFO.
template <typename T>
class BoundedQueue {
public:
    BoundedQueue(std::size_t capacity, QueuePolicy policy) : capacity_(capacity ? capacity : 1), policy_(policy) {}

    /// Returns false if the queue was closed.
    bool push(T item)
    {
        std::unique_lock lock(mu_);
        if (policy_ == QueuePolicy::block) {
            not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        } else if (items_.size() >= capacity_ && !closed_) {
            items_.pop_front();
            ++dropped_;
        }
        if (closed_) {
            return false;
        }
        items_.push_back(std::move(item));
        max_depth_ = std::max(max_depth_, items_.size());
        not_empty_.notify_one();
        return true;
    }

    /// Blocks until an item arrives; nullopt once closed and drained.
    std::optional<T> pop()
    {
        std::unique_lock lock(mu_);
        not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
        if (items_.empty()) {
            return std::nullopt;
        }
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    void close()
    {
        std::lock_guard lock(mu_);
        closed_ = true;
        not_empty_.notify_all();
        not_full_.notify_all();
    }

    std::size_t size() const
    {
        std::lock_guard lock(mu_);
        return items_.size();
    }
    std::size_t max_depth() const
    {
        std::lock_guard lock(mu_);
        return max_depth_;
    }
    std::size_t dropped() const
    {
        std::lock_guard lock(mu_);
        return dropped_;
    }
    std::size_t capacity() const noexcept { return capacity_; }

private:
    const std::size_t capacity_;
    const QueuePolicy policy_;
    mutable std::mutex mu_;
    std::condition_variable not_empty_, not_full_;
    std::deque<T> items_;
    std::size_t max_depth_ = 0;
    std::size_t dropped_ = 0;
    bool closed_ = false;
};

}  // namespace harmodop::runtime
