#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace olla {

/// Fan-out channel. Publishing never blocks on subscribers: a subscriber whose
/// backlog reaches `capacity` loses the backlog and keeps only the newest item.
template <class T>
class Broadcast {
  struct Queue {
    std::deque<T> items;
    bool closed = false;
    std::size_t dropped = 0;
  };

 public:
  class Subscription {
   public:
    /// Next item, waiting up to `timeout`; nullopt on timeout or once closed and drained.
    std::optional<T> next(std::chrono::milliseconds timeout) {
      std::unique_lock lock(owner_->mutex_);
      owner_->cv_.wait_for(lock, timeout, [&] { return !queue_->items.empty() || queue_->closed; });
      if (queue_->items.empty()) return std::nullopt;
      T item = std::move(queue_->items.front());
      queue_->items.pop_front();
      return item;
    }

    bool finished() const {
      std::lock_guard lock(owner_->mutex_);
      return queue_->closed && queue_->items.empty();
    }

    std::size_t dropped() const {
      std::lock_guard lock(owner_->mutex_);
      return queue_->dropped;
    }

   private:
    friend class Broadcast;
    Subscription(std::shared_ptr<Broadcast> owner, std::shared_ptr<Queue> queue)
        : owner_(std::move(owner)), queue_(std::move(queue)) {}

    std::shared_ptr<Broadcast> owner_;
    std::shared_ptr<Queue> queue_;
  };

  explicit Broadcast(std::size_t capacity = 256) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// New subscribers start with the latest published item, if any.
  static Subscription subscribe(const std::shared_ptr<Broadcast>& self) {
    auto q = std::make_shared<Queue>();
    std::lock_guard lock(self->mutex_);
    if (self->latest_) q->items.push_back(*self->latest_);
    q->closed = self->closed_;
    self->queues_.push_back(q);
    return Subscription(self, q);
  }

  void publish(const T& item) {
    {
      std::lock_guard lock(mutex_);
      if (closed_) return;
      latest_ = item;
      std::erase_if(queues_, [](const std::weak_ptr<Queue>& w) { return w.expired(); });
      for (auto& w : queues_) {
        auto q = w.lock();
        if (q->items.size() >= capacity_) {
          q->dropped += q->items.size();
          q->items.clear();
        }
        q->items.push_back(item);
      }
    }
    cv_.notify_all();
  }

  /// Publishes a terminal item and closes the channel.
  void close(const std::optional<T>& last = std::nullopt) {
    if (last) publish(*last);
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
      for (auto& w : queues_) {
        if (auto q = w.lock()) q->closed = true;
      }
    }
    cv_.notify_all();
  }

  std::optional<T> latest() const {
    std::lock_guard lock(mutex_);
    return latest_;
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<std::weak_ptr<Queue>> queues_;
  std::optional<T> latest_;
  bool closed_ = false;
  std::size_t capacity_;
};

}  // namespace olla
