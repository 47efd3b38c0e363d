#include "adf/nn.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace adf::nn {

using nlohmann::json;

namespace {

json layers_to_json(const QFunctionParams& net) {
  json layers = json::array();
  auto emit = [&](const char* name, const auto& m) {
    json data = json::array();
    const auto rows = m.rows(), cols = m.cols();
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) data.push_back(static_cast<double>(m(r, c)));
    layers.push_back({{"name", name}, {"shape", {rows, cols}}, {"data", std::move(data)}});
  };
  emit("hidden1.weight", net.hidden1.weight);
  emit("hidden1.bias", net.hidden1.bias);
  emit("hidden2.weight", net.hidden2.weight);
  emit("hidden2.bias", net.hidden2.bias);
  emit("value.weight", net.value.weight);
  emit("value.bias", net.value.bias);
  emit("advantage.weight", net.advantage.weight);
  emit("advantage.bias", net.advantage.bias);
  return layers;
}

QFunctionParams layers_from_json(const json& layers, float input_scale) {
  const auto find = [&](const std::string& name) -> const json& {
    for (const auto& l : layers)
      if (l.at("name") == name) return l;
    throw Error(ErrorCode::Parse, "checkpoint is missing layer " + name);
  };
  auto read_matrix = [&](const std::string& name, Matrix<float>& m) {
    const auto& l = find(name);
    const auto rows = l.at("shape").at(0).get<Eigen::Index>();
    const auto cols = l.at("shape").at(1).get<Eigen::Index>();
    const auto& data = l.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw Error(ErrorCode::Parse, "layer " + name + " data does not match its shape");
    m.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = static_cast<float>(data[static_cast<std::size_t>(r * cols + c)].get<double>());
  };
  auto read_layer = [&](const std::string& prefix, DenseLayer<float>& layer) {
    read_matrix(prefix + ".weight", layer.weight);
    Matrix<float> b;
    read_matrix(prefix + ".bias", b);
    layer.bias = Eigen::Map<Vector<float>>(b.data(), b.size());
  };
  QFunctionParams net;
  read_layer("hidden1", net.hidden1);
  read_layer("hidden2", net.hidden2);
  read_layer("value", net.value);
  read_layer("advantage", net.advantage);
  net.input_scale = input_scale;

  const auto hidden = net.hidden1.weight.rows();
  const bool consistent = net.hidden1.weight.cols() == static_cast<Eigen::Index>(kObservationSize) &&
                          net.hidden2.weight.rows() == hidden && net.hidden2.weight.cols() == hidden &&
                          net.value.weight.rows() == 1 && net.value.weight.cols() == hidden &&
                          net.advantage.weight.rows() == static_cast<Eigen::Index>(kActionCount) &&
                          net.advantage.weight.cols() == hidden;
  if (!consistent) throw Error(ErrorCode::Parse, "checkpoint layer shapes are inconsistent");
  return net;
}

}  // namespace

Checkpoint fresh_checkpoint(std::uint64_t seed, float input_scale, double learning_rate) {
  Rng rng(mix_seed(seed, 0xC0FFEE));
  Checkpoint ck;
  ck.online = QFunctionParams::initialized(rng, input_scale);
  ck.target = sync_target(ck.online);
  ck.optimizer = Adam::for_params(ck.online, learning_rate);
  ck.meta.seed = seed;
  return ck;
}

std::string checkpoint_to_json(const Checkpoint& ck) {
  json doc;
  doc["format"] = "adf-checkpoint";
  doc["version"] = 1;
  doc["input_scale"] = static_cast<double>(ck.online.input_scale);
  doc["layers"] = layers_to_json(ck.online);
  doc["target_layers"] = layers_to_json(ck.target.params);
  doc["optimizer"] = {{"kind", "adam"},
                      {"step", ck.optimizer.step},
                      {"learning_rate", ck.optimizer.learning_rate},
                      {"beta1", ck.optimizer.beta1},
                      {"beta2", ck.optimizer.beta2},
                      {"epsilon", ck.optimizer.epsilon},
                      {"first_moment", layers_to_json(ck.optimizer.first_moment)},
                      {"second_moment", layers_to_json(ck.optimizer.second_moment)}};
  doc["metadata"] = {{"episodes", ck.meta.episodes}, {"env_steps", ck.meta.env_steps},
                     {"updates", ck.meta.updates},   {"epsilon", ck.meta.epsilon},
                     {"seed", ck.meta.seed},         {"scenario", ck.meta.scenario},
                     {"note", ck.meta.note}};
  return doc.dump();
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("checkpoint: ") + e.what());
  }
  try {
    if (doc.at("format") != "adf-checkpoint") throw Error(ErrorCode::Parse, "not a checkpoint document");
    const auto scale = static_cast<float>(doc.at("input_scale").get<double>());
    Checkpoint ck;
    ck.online = layers_from_json(doc.at("layers"), scale);
    ck.target.params = layers_from_json(doc.at("target_layers"), scale);
    const auto& opt = doc.at("optimizer");
    ck.optimizer.step = opt.at("step").get<std::int64_t>();
    ck.optimizer.learning_rate = opt.at("learning_rate").get<double>();
    ck.optimizer.beta1 = opt.at("beta1").get<double>();
    ck.optimizer.beta2 = opt.at("beta2").get<double>();
    ck.optimizer.epsilon = opt.at("epsilon").get<double>();
    ck.optimizer.first_moment = layers_from_json(opt.at("first_moment"), scale);
    ck.optimizer.second_moment = layers_from_json(opt.at("second_moment"), scale);
    const auto& meta = doc.at("metadata");
    ck.meta.episodes = meta.at("episodes").get<std::int64_t>();
    ck.meta.env_steps = meta.at("env_steps").get<std::int64_t>();
    ck.meta.updates = meta.at("updates").get<std::int64_t>();
    ck.meta.epsilon = meta.at("epsilon").get<double>();
    ck.meta.seed = meta.at("seed").get<std::uint64_t>();
    ck.meta.scenario = meta.at("scenario").get<std::string>();
    ck.meta.note = meta.value("note", "");
    if (!ck.online.all_finite()) throw Error(ErrorCode::Parse, "checkpoint contains non-finite weights");
    return ck;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << checkpoint_to_json(ck) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace adf::nn
