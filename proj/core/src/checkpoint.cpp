#include "wcmtl/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "wcmtl/errors.hpp"

namespace wcmtl {

using ordered = nlohmann::ordered_json;

namespace {

ordered matrix_json(const Eigen::MatrixXd& m) {
  ordered rows = ordered::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ordered row = ordered::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

ordered vector_json(const Eigen::VectorXd& v) {
  ordered out = ordered::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from(const ordered& j, Eigen::Index cols_if_empty = 0) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : cols_if_empty;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw IoError("checkpoint: ragged matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const ordered& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

ordered model_json(const ModelParams& p) {
  ordered j;
  j["encoder"] = matrix_json(p.encoder);
  j["encoder_bias"] = vector_json(p.encoder_bias);
  ordered heads = ordered::array();
  for (const auto& h : p.heads)
    heads.push_back({{"kind", std::string(to_string(h.kind))},
                     {"weight", matrix_json(h.weight)},
                     {"bias", vector_json(h.bias)}});
  j["heads"] = std::move(heads);
  return j;
}

ModelParams model_from(const ordered& j) {
  ModelParams p;
  p.encoder = matrix_from(j.at("encoder"));
  p.encoder_bias = vector_from(j.at("encoder_bias"));
  for (const auto& h : j.at("heads")) {
    const std::string kind = h.at("kind").get<std::string>();
    if (kind != "classification" && kind != "regression") throw IoError("checkpoint: bad head kind");
    p.heads.push_back({kind == "regression" ? TaskKind::regression : TaskKind::classification,
                       matrix_from(h.at("weight"), p.encoder.rows()), vector_from(h.at("bias"))});
  }
  if (p.encoder_bias.size() != p.encoder.rows()) throw IoError("checkpoint: encoder bias size");
  for (const auto& h : p.heads)
    if (h.weight.cols() != p.encoder.rows() || h.bias.size() != h.weight.rows())
      throw IoError("checkpoint: head shape mismatch");
  return p;
}

ordered sampler_json(const SamplerState& s) {
  return {{"gamma", s.gamma}, {"weights", s.weights}};
}

SamplerState sampler_from(const ordered& j) {
  SamplerState s;
  s.gamma = j.at("gamma").get<double>();
  s.weights = j.at("weights").get<std::vector<double>>();
  return s;
}

ordered buffer_json(const Buffer& b) {
  ordered queues = ordered::array();
  for (TaskId i = 0; i < b.n_tasks(); ++i) {
    ordered q = ordered::array();
    for (const auto& e : b.queue(i))
      q.push_back({{"rows", e.batch.rows}, {"loss", e.loss}, {"refill", e.refill}});
    queues.push_back(std::move(q));
  }
  return {{"capacity", b.capacity()}, {"queues", std::move(queues)}};
}

Buffer buffer_from(const ordered& j, const TaskSuite& suite) {
  const auto& queues = j.at("queues");
  if (queues.size() != suite.size()) throw IoError("checkpoint: buffer/suite task count mismatch");
  Buffer b(suite.size(), j.at("capacity").get<std::size_t>());
  for (TaskId i = 0; i < suite.size(); ++i)
    for (const auto& e : queues[i]) {
      const auto rows = e.at("rows").get<std::vector<std::uint32_t>>();
      b.push(i, QueueEntry{make_batch(suite.tasks[i], rows), e.at("loss").get<double>(),
                           e.at("refill").get<bool>()});
    }
  return b;
}

template <class F>
auto parse_with(std::string_view text, F&& f) {
  try {
    return f(ordered::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace

std::string model_to_json(const ModelParams& params) { return model_json(params).dump(); }
ModelParams model_from_json(std::string_view text) { return parse_with(text, model_from); }

std::string sampler_to_json(const SamplerState& state) { return sampler_json(state).dump(); }
SamplerState sampler_from_json(std::string_view text) { return parse_with(text, sampler_from); }

std::string buffer_to_json(const Buffer& buffer) { return buffer_json(buffer).dump(); }
Buffer buffer_from_json(std::string_view text, const TaskSuite& suite) {
  return parse_with(text, [&](const ordered& j) { return buffer_from(j, suite); });
}

void write_checkpoint(const std::filesystem::path& path, const ModelParams& model,
                      const SamplerState& sampler, const Buffer* buffer) {
  ordered j;
  j["model"] = model_json(model);
  j["sampler"] = sampler_json(sampler);
  if (buffer) j["buffer"] = buffer_json(*buffer);
  std::ofstream out(path, std::ios::out | std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint " + path.string());
  out << j.dump() << '\n';
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path, const TaskSuite* suite) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_with(ss.str(), [&](const ordered& j) {
    Checkpoint c{model_from(j.at("model")), sampler_from(j.at("sampler")), std::nullopt};
    if (suite && j.contains("buffer")) c.buffer = buffer_from(j.at("buffer"), *suite);
    return c;
  });
}

}  // namespace wcmtl
