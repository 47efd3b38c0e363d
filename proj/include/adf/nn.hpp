#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "adf/common.hpp"
#include "adf/env.hpp"

namespace adf::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct DenseLayer {
  Matrix<T> weight;  // out x in
  Vector<T> bias;    // out
};

// Dueling Q network: shared trunk 12 -> 64 -> 64 (ReLU), value head 64 -> 1,
// advantage head 64 -> 2. Q = V + (A - mean(A)).
template <class T>
struct QNetwork {
  DenseLayer<T> hidden1;
  DenseLayer<T> hidden2;
  DenseLayer<T> value;
  DenseLayer<T> advantage;
  // Observations are divided by this before entering the trunk (meters per unit).
  T input_scale = T(1);

  static constexpr std::array<const char*, 8> kTensorNames = {
      "hidden1.weight", "hidden1.bias", "hidden2.weight", "hidden2.bias",
      "value.weight",   "value.bias",   "advantage.weight", "advantage.bias"};

  static QNetwork zeros(std::size_t inputs = kObservationSize, std::size_t hidden = 64,
                        std::size_t actions = kActionCount) {
    QNetwork n;
    auto make = [](DenseLayer<T>& l, std::size_t in, std::size_t out) {
      l.weight = Matrix<T>::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
      l.bias = Vector<T>::Zero(static_cast<Eigen::Index>(out));
    };
    make(n.hidden1, inputs, hidden);
    make(n.hidden2, hidden, hidden);
    make(n.value, hidden, 1);
    make(n.advantage, hidden, actions);
    return n;
  }

  // Fan-in scaled uniform initialisation, bound 1/sqrt(fan_in).
  static QNetwork initialized(Rng& rng, T input_scale = T(1), std::size_t hidden = 64) {
    QNetwork n = zeros(kObservationSize, hidden, kActionCount);
    n.input_scale = input_scale;
    auto fill = [&rng](DenseLayer<T>& l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = T(rng.uniform(-bound, bound));
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = T(rng.uniform(-bound, bound));
    };
    fill(n.hidden1);
    fill(n.hidden2);
    fill(n.value);
    fill(n.advantage);
    return n;
  }

  QNetwork zeros_like() const {
    QNetwork z = zeros(static_cast<std::size_t>(hidden1.weight.cols()),
                       static_cast<std::size_t>(hidden1.weight.rows()),
                       static_cast<std::size_t>(advantage.weight.rows()));
    z.input_scale = input_scale;
    return z;
  }

  // Visits every parameter tensor as a flat column-major span, in kTensorNames order.
  template <class F>
  void for_each_tensor(F&& f) {
    f(0, std::span<T>(hidden1.weight.data(), static_cast<std::size_t>(hidden1.weight.size())));
    f(1, std::span<T>(hidden1.bias.data(), static_cast<std::size_t>(hidden1.bias.size())));
    f(2, std::span<T>(hidden2.weight.data(), static_cast<std::size_t>(hidden2.weight.size())));
    f(3, std::span<T>(hidden2.bias.data(), static_cast<std::size_t>(hidden2.bias.size())));
    f(4, std::span<T>(value.weight.data(), static_cast<std::size_t>(value.weight.size())));
    f(5, std::span<T>(value.bias.data(), static_cast<std::size_t>(value.bias.size())));
    f(6, std::span<T>(advantage.weight.data(), static_cast<std::size_t>(advantage.weight.size())));
    f(7, std::span<T>(advantage.bias.data(), static_cast<std::size_t>(advantage.bias.size())));
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    const_cast<QNetwork*>(this)->for_each_tensor(
        [&](int i, std::span<T> s) { f(i, std::span<const T>(s.data(), s.size())); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](int, std::span<const T> s) { n += s.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each_tensor([&](int, std::span<const T> s) {
      for (T v : s) ok = ok && std::isfinite(static_cast<double>(v));
    });
    return ok;
  }

  template <class U>
  QNetwork<U> cast() const {
    QNetwork<U> out;
    auto conv = [](const DenseLayer<T>& l) {
      return DenseLayer<U>{l.weight.template cast<U>(), l.bias.template cast<U>()};
    };
    out.hidden1 = conv(hidden1);
    out.hidden2 = conv(hidden2);
    out.value = conv(value);
    out.advantage = conv(advantage);
    out.input_scale = static_cast<U>(input_scale);
    return out;
  }

  bool operator==(const QNetwork& o) const {
    auto eq = [](const DenseLayer<T>& a, const DenseLayer<T>& b) {
      return a.weight == b.weight && a.bias == b.bias;
    };
    return eq(hidden1, o.hidden1) && eq(hidden2, o.hidden2) && eq(value, o.value) &&
           eq(advantage, o.advantage) && input_scale == o.input_scale;
  }
};

// Activations kept for the backward pass. Columns are batch items.
template <class T>
struct ForwardCache {
  Matrix<T> input;
  Matrix<T> pre1, act1;
  Matrix<T> pre2, act2;
  Matrix<T> value;      // 1 x B
  Matrix<T> advantage;  // A x B
  Matrix<T> q;          // A x B
};

template <class T>
Matrix<T> to_input(std::span<const Observation> batch) {
  Matrix<T> x(static_cast<Eigen::Index>(kObservationSize), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (std::size_t f = 0; f < kObservationSize; ++f)
      x(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(b)) = static_cast<T>(batch[b].features[f]);
  return x;
}

template <class T>
void forward(const QNetwork<T>& net, const Matrix<T>& input, ForwardCache<T>& c) {
  c.input = input / net.input_scale;
  c.pre1 = (net.hidden1.weight * c.input).colwise() + net.hidden1.bias;
  c.act1 = c.pre1.cwiseMax(T(0));
  c.pre2 = (net.hidden2.weight * c.act1).colwise() + net.hidden2.bias;
  c.act2 = c.pre2.cwiseMax(T(0));
  c.value = (net.value.weight * c.act2).colwise() + net.value.bias;
  c.advantage = (net.advantage.weight * c.act2).colwise() + net.advantage.bias;
  const Matrix<T> mean_adv = c.advantage.colwise().mean();
  c.q = c.advantage;
  for (Eigen::Index a = 0; a < c.q.rows(); ++a) c.q.row(a) += c.value.row(0) - mean_adv.row(0);
}

template <class T>
Matrix<T> forward(const QNetwork<T>& net, const Matrix<T>& input) {
  ForwardCache<T> c;
  forward(net, input, c);
  return c.q;
}

template <class T>
std::array<T, kActionCount> q_values(const QNetwork<T>& net, const Observation& obs) {
  const Matrix<T> q = forward(net, to_input<T>(std::span<const Observation>(&obs, 1)));
  return {q(0, 0), q(1, 0)};
}

// Exact reverse-mode gradients of sum(dq .* Q) with respect to every parameter.
template <class T>
QNetwork<T> backward(const QNetwork<T>& net, const ForwardCache<T>& c, const Matrix<T>& dq) {
  QNetwork<T> g = net.zeros_like();
  const Matrix<T> dvalue = dq.colwise().sum();
  const Matrix<T> dadv = dq.rowwise() - dq.colwise().mean();

  g.value.weight = dvalue * c.act2.transpose();
  g.value.bias = dvalue.rowwise().sum();
  g.advantage.weight = dadv * c.act2.transpose();
  g.advantage.bias = dadv.rowwise().sum();

  Matrix<T> dact2 = net.value.weight.transpose() * dvalue + net.advantage.weight.transpose() * dadv;
  const Matrix<T> dpre2 = dact2.cwiseProduct((c.pre2.array() > T(0)).matrix().template cast<T>());
  g.hidden2.weight = dpre2 * c.act1.transpose();
  g.hidden2.bias = dpre2.rowwise().sum();

  const Matrix<T> dact1 = net.hidden2.weight.transpose() * dpre2;
  const Matrix<T> dpre1 = dact1.cwiseProduct((c.pre1.array() > T(0)).matrix().template cast<T>());
  g.hidden1.weight = dpre1 * c.input.transpose();
  g.hidden1.bias = dpre1.rowwise().sum();
  return g;
}

template <class T>
void axpy(QNetwork<T>& y, T alpha, const QNetwork<T>& x) {
  std::vector<std::span<const T>> xs;
  x.for_each_tensor([&](int, std::span<const T> s) { xs.push_back(s); });
  y.for_each_tensor([&](int i, std::span<T> s) {
    const auto& src = xs[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < s.size(); ++k) s[k] += alpha * src[k];
  });
}

template <class T>
double squared_norm(const QNetwork<T>& net) {
  double acc = 0.0;
  net.for_each_tensor([&](int, std::span<const T> s) {
    for (T v : s) acc += static_cast<double>(v) * static_cast<double>(v);
  });
  return acc;
}

template <class T>
struct AdamState {
  QNetwork<T> first_moment;
  QNetwork<T> second_moment;
  std::int64_t step = 0;
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const QNetwork<T>& params, double lr = 4e-4) {
    AdamState s;
    s.first_moment = params.zeros_like();
    s.second_moment = params.zeros_like();
    s.learning_rate = lr;
    return s;
  }
};

// Bias-corrected Adam.
template <class T>
void adam_step(QNetwork<T>& params, AdamState<T>& st, const QNetwork<T>& grad) {
  ++st.step;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  std::vector<std::span<const T>> gs;
  std::vector<std::span<T>> ms, vs;
  grad.for_each_tensor([&](int, std::span<const T> s) { gs.push_back(s); });
  st.first_moment.for_each_tensor([&](int, std::span<T> s) { ms.push_back(s); });
  st.second_moment.for_each_tensor([&](int, std::span<T> s) { vs.push_back(s); });
  params.for_each_tensor([&](int i, std::span<T> p) {
    const auto idx = static_cast<std::size_t>(i);
    auto g = gs[idx];
    auto m = ms[idx];
    auto v = vs[idx];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = st.beta1 * static_cast<double>(m[k]) + (1.0 - st.beta1) * gk;
      const double vk = st.beta2 * static_cast<double>(v[k]) + (1.0 - st.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double update = st.learning_rate * (mk / c1) / (std::sqrt(vk / c2) + st.epsilon);
      p[k] = static_cast<T>(static_cast<double>(p[k]) - update);
    }
  });
}

using QFunctionParams = QNetwork<float>;
using Adam = AdamState<float>;

// Frozen copy of the online network; changes only through sync_target.
struct TargetParams {
  QFunctionParams params;
};

inline TargetParams sync_target(const QFunctionParams& online) { return TargetParams{online}; }

struct CheckpointMeta {
  std::int64_t episodes = 0;
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
  double epsilon = 1.0;
  std::uint64_t seed = 0;
  std::string scenario = "simple";
  std::string note;
};

struct Checkpoint {
  QFunctionParams online;
  TargetParams target;
  Adam optimizer;
  CheckpointMeta meta;
};

Checkpoint fresh_checkpoint(std::uint64_t seed, float input_scale, double learning_rate = 4e-4);

// JSON document with layer names, shapes, row-major data, optimizer moments, and metadata.
std::string checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace adf::nn
