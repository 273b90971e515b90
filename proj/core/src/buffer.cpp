#include "wcmtl/buffer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wcmtl {

Buffer::Buffer(std::size_t n_tasks, std::size_t capacity)
    : capacity_(capacity), queues_(n_tasks) {
  if (capacity == 0) throw std::invalid_argument("Buffer: capacity must be positive");
}

void Buffer::push(TaskId task, QueueEntry entry) {
  if (!std::isfinite(entry.loss)) throw std::invalid_argument("Buffer::push: non-finite loss");
  entry.loss = std::max(entry.loss, kMinCachedLoss);
  auto& q = queues_.at(task);
  q.push_back(std::move(entry));
  while (q.size() > capacity_) q.pop_front();
}

double Buffer::average_loss(TaskId task, double v) const {
  const auto& q = queue(task);
  if (q.empty()) throw std::logic_error("Buffer::average_loss: queue is empty");
  double sum = 0.0;
  for (const auto& e : q) sum += e.loss;
  return v * (sum / static_cast<double>(q.size()));
}

void Buffer::empty_queue(TaskId task) { queues_.at(task).clear(); }

const std::deque<QueueEntry>& Buffer::queue(TaskId task) const { return queues_.at(task); }

std::vector<long> Buffer::lengths() const {
  std::vector<long> out;
  out.reserve(queues_.size());
  for (const auto& q : queues_) out.push_back(static_cast<long>(q.size()));
  return out;
}

}  // namespace wcmtl
