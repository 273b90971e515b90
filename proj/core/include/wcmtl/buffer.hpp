#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "wcmtl/types.hpp"

namespace wcmtl {

inline constexpr double kMinCachedLoss = 1e-8;

struct QueueEntry {
  Batch batch;
  double loss = 0.0;    // loss under the model at push time, never re-evaluated
  bool refill = false;  // pushed by the round-start refill
};

/// n bounded FIFO queues, one per task. Pushing onto a full queue evicts its
/// oldest entry.
class Buffer {
 public:
  Buffer(std::size_t n_tasks, std::size_t capacity = 50);

  std::size_t n_tasks() const { return queues_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// Rejects non-finite losses; stores max(loss, kMinCachedLoss).
  void push(TaskId task, QueueEntry entry);

  /// v * mean of the cached losses in Q_task. Throws std::logic_error when
  /// the queue is empty.
  double average_loss(TaskId task, double v = 1.0) const;

  void empty_queue(TaskId task);

  const std::deque<QueueEntry>& queue(TaskId task) const;
  std::size_t size(TaskId task) const { return queue(task).size(); }
  std::vector<long> lengths() const;

 private:
  std::size_t capacity_;
  std::vector<std::deque<QueueEntry>> queues_;
};

}  // namespace wcmtl
