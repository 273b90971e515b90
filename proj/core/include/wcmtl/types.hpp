#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace wcmtl {

/// Index of a task in [0, n).
using TaskId = std::size_t;

enum class TaskKind { classification, regression };

std::string_view to_string(TaskKind kind);

/// A minibatch drawn from one task's training pool. `rows` is the handle
/// back into that pool; inputs and targets are materialized copies.
struct Batch {
  TaskId task = 0;
  std::vector<std::uint32_t> rows;
  Eigen::MatrixXd inputs;    // batch_size x d_in
  std::vector<int> labels;   // classification only
  Eigen::VectorXd targets;   // regression only

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

/// A materialized data split. Row r of `inputs` is example `ids[r]` of the
/// task's generated pool.
struct Split {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
  Eigen::VectorXd targets;
  std::vector<std::uint32_t> ids;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  bool empty() const { return size() == 0; }
};

}  // namespace wcmtl
