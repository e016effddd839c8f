#include "xq/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <type_traits>

namespace xq::nn {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

std::string_view to_string(ActivationKind k) noexcept {
  switch (k) {
    case ActivationKind::Identity: return "identity";
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::Sigmoid: return "sigmoid";
  }
  return "?";
}

ActivationKind parse_activation(std::string_view name) {
  if (name == "identity") return ActivationKind::Identity;
  if (name == "relu") return ActivationKind::ReLU;
  if (name == "sigmoid") return ActivationKind::Sigmoid;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string describe(const LayerSpec& s) {
  std::ostringstream os;
  switch (s.kind) {
    case LayerKind::Conv2D:
      os << "Conv2D(" << s.in << "->" << s.out << ", k=" << s.kernel << ", s=" << s.stride << ", p=" << s.padding
         << ")";
      break;
    case LayerKind::BatchNorm: os << "BatchNorm(" << s.in << ", momentum=" << s.momentum << ")"; break;
    case LayerKind::Activation: os << "Activation(" << to_string(s.activation) << ")"; break;
    case LayerKind::Dropout: os << "Dropout(" << s.rate << ")"; break;
    case LayerKind::FullyConnected: os << "FullyConnected(" << s.in << "->" << s.out << ")"; break;
    case LayerKind::Dueling: os << "Dueling(" << s.in << "->" << s.out << "+1)"; break;
  }
  return os.str();
}

template <typename T>
Tensor<T> encode_batch(std::span<const StateEncoding> states) {
  Tensor<T> t;
  t.shape = kBoardInput;
  t.batch = static_cast<int>(states.size());
  t.data.setZero(2, t.batch * kNumSquares);
  for (int n = 0; n < t.batch; ++n) {
    const StateEncoding& s = states[static_cast<std::size_t>(n)];
    for (std::uint64_t m = s.own; m; m &= m - 1) t.data(0, n * kNumSquares + std::countr_zero(m)) = T(1);
    for (std::uint64_t m = s.other; m; m &= m - 1) t.data(1, n * kNumSquares + std::countr_zero(m)) = T(1);
  }
  return t;
}

template <typename T>
Shape Conv2D<T>::output_shape(Shape in) const {
  return Shape{filters, (in.height + 2 * padding - kernel) / stride + 1, (in.width + 2 * padding - kernel) / stride + 1};
}

namespace {

template <typename T>
void zero_param(Param<T>& p, int rows, int cols) {
  p.value.setZero(rows, cols);
  p.grad.setZero(rows, cols);
}

// ---------------------------------------------------------------------------
// Forward / backward per layer kind. `in` is the layer input, `out` its output.

template <typename T>
void im2col(const Conv2D<T>& conv, const Tensor<T>& in, Shape os, Matrix<T>& cols) {
  const int H = in.shape.height, W = in.shape.width, N = in.batch;
  const int Ho = os.height, Wo = os.width, k = conv.kernel;
  const int out_spatial = Ho * Wo;
  cols.resize(conv.in_channels * k * k, N * out_spatial);
  for (int c = 0; c < conv.in_channels; ++c) {
    const T* src = in.data.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.row((c * k + ky) * k + kx).data();
        for (int n = 0; n < N; ++n) {
          const T* plane = src + static_cast<std::ptrdiff_t>(n) * H * W;
          T* out_plane = dst + static_cast<std::ptrdiff_t>(n) * out_spatial;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * conv.stride + ky - conv.padding;
            T* out_row = out_plane + oy * Wo;
            if (iy < 0 || iy >= H) {
              std::fill(out_row, out_row + Wo, T(0));
              continue;
            }
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * conv.stride + kx - conv.padding;
              out_row[ox] = (ix < 0 || ix >= W) ? T(0) : plane[iy * W + ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const Conv2D<T>& conv, const Matrix<T>& dcols, Shape in_shape, int N, Shape os, Matrix<T>& gin) {
  const int H = in_shape.height, W = in_shape.width;
  const int Ho = os.height, Wo = os.width, k = conv.kernel;
  const int out_spatial = Ho * Wo;
  gin.setZero(conv.in_channels, N * H * W);
  for (int c = 0; c < conv.in_channels; ++c) {
    T* dst = gin.row(c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = dcols.row((c * k + ky) * k + kx).data();
        for (int n = 0; n < N; ++n) {
          T* plane = dst + static_cast<std::ptrdiff_t>(n) * H * W;
          const T* in_plane = src + static_cast<std::ptrdiff_t>(n) * out_spatial;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * conv.stride + ky - conv.padding;
            if (iy < 0 || iy >= H) continue;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * conv.stride + kx - conv.padding;
              if (ix >= 0 && ix < W) plane[iy * W + ix] += in_plane[oy * Wo + ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void forward_layer(Conv2D<T>& conv, const Tensor<T>& in, Tensor<T>& out, Mode, Rng&) {
  const Shape os = conv.output_shape(in.shape);
  im2col(conv, in, os, conv.cols);
  out.shape = os;
  out.batch = in.batch;
  out.data.noalias() = conv.weight.value * conv.cols;
  out.data.colwise() += conv.bias.value.col(0);
}

template <typename T>
void backward_layer(Conv2D<T>& conv, const Tensor<T>& in, const Tensor<T>& out, const Matrix<T>& g, Matrix<T>* gin) {
  conv.weight.grad.noalias() = g * conv.cols.transpose();
  conv.bias.grad = g.rowwise().sum();
  if (gin) {
    const Matrix<T> dcols = conv.weight.value.transpose() * g;
    col2im(conv, dcols, in.shape, in.batch, out.shape, *gin);
  }
}

template <typename T>
void forward_layer(BatchNorm<T>& bn, const Tensor<T>& in, Tensor<T>& out, Mode mode, Rng&) {
  const Eigen::Index m = in.data.cols();
  out.shape = in.shape;
  out.batch = in.batch;
  if (mode == Mode::Train) {
    const Matrix<T> mean = in.data.rowwise().mean();
    bn.normalized = in.data.colwise() - mean.col(0);
    const Matrix<T> var = bn.normalized.array().square().rowwise().mean();
    bn.inv_std = (var.array() + bn.epsilon).rsqrt();
    const T unbias = m > 1 ? T(m) / T(m - 1) : T(1);
    bn.running_mean = bn.momentum * bn.running_mean + (T(1) - bn.momentum) * mean;
    bn.running_var = bn.momentum * bn.running_var + (T(1) - bn.momentum) * unbias * var;
    bn.used_batch_stats = true;
  } else {
    bn.normalized = in.data.colwise() - bn.running_mean.col(0);
    bn.inv_std = (bn.running_var.array() + bn.epsilon).rsqrt();
    bn.used_batch_stats = false;
  }
  bn.normalized = bn.normalized.array().colwise() * bn.inv_std.col(0).array();
  out.data = (bn.normalized.array().colwise() * bn.gamma.value.col(0).array()).colwise() +
             bn.beta.value.col(0).array();
}

template <typename T>
void backward_layer(BatchNorm<T>& bn, const Tensor<T>& in, const Tensor<T>&, const Matrix<T>& g, Matrix<T>* gin) {
  bn.gamma.grad = (g.array() * bn.normalized.array()).rowwise().sum().matrix();
  bn.beta.grad = g.rowwise().sum();
  if (!gin) return;
  const Matrix<T> dxhat = g.array().colwise() * bn.gamma.value.col(0).array();
  if (!bn.used_batch_stats) {
    *gin = dxhat.array().colwise() * bn.inv_std.col(0).array();
    return;
  }
  const T m = static_cast<T>(in.data.cols());
  const Matrix<T> sum_dxhat = dxhat.rowwise().sum();
  const Matrix<T> sum_dxhat_xhat = (dxhat.array() * bn.normalized.array()).rowwise().sum().matrix();
  Matrix<T> centered = (dxhat * m).colwise() - sum_dxhat.col(0);
  centered -= (bn.normalized.array().colwise() * sum_dxhat_xhat.col(0).array()).matrix();
  *gin = centered.array().colwise() * (bn.inv_std.col(0).array() / m);
}

template <typename T>
void forward_layer(Activation& act, const Tensor<T>& in, Tensor<T>& out, Mode, Rng&) {
  out.shape = in.shape;
  out.batch = in.batch;
  switch (act.kind) {
    case ActivationKind::Identity: out.data = in.data; break;
    case ActivationKind::ReLU: out.data = in.data.cwiseMax(T(0)); break;
    case ActivationKind::Sigmoid: out.data = (T(1) + (-in.data.array()).exp()).inverse().matrix(); break;
  }
}

template <typename T>
void backward_layer(Activation& act, const Tensor<T>& in, const Tensor<T>& out, const Matrix<T>& g, Matrix<T>* gin) {
  if (!gin) return;
  switch (act.kind) {
    case ActivationKind::Identity: *gin = g; break;
    case ActivationKind::ReLU: *gin = (in.data.array() > T(0)).select(g, T(0)); break;
    case ActivationKind::Sigmoid:
      *gin = (g.array() * out.data.array() * (T(1) - out.data.array())).matrix();
      break;
  }
}

template <typename T>
void forward_layer(Dropout<T>& drop, const Tensor<T>& in, Tensor<T>& out, Mode mode, Rng& rng) {
  out.shape = in.shape;
  out.batch = in.batch;
  drop.active = mode == Mode::Train && drop.rate > T(0);
  if (!drop.active) {
    out.data = in.data;
    return;
  }
  const T scale = T(1) / (T(1) - drop.rate);
  const double rate = static_cast<double>(drop.rate);
  drop.mask.resize(in.data.rows(), in.data.cols());
  T* p = drop.mask.data();
  for (Eigen::Index i = 0; i < drop.mask.size(); ++i) p[i] = uniform01(rng) < rate ? T(0) : scale;
  out.data = in.data.cwiseProduct(drop.mask);
}

template <typename T>
void backward_layer(Dropout<T>& drop, const Tensor<T>&, const Tensor<T>&, const Matrix<T>& g, Matrix<T>* gin) {
  if (!gin) return;
  *gin = drop.active ? Matrix<T>(g.cwiseProduct(drop.mask)) : g;
}

// [C, N*S] -> [C*S, N]
template <typename T>
void flatten(const Tensor<T>& in, Matrix<T>& flat) {
  const int C = in.shape.channels, S = in.shape.spatial(), N = in.batch;
  if (S == 1) {
    flat = in.data;
    return;
  }
  flat.resize(static_cast<Eigen::Index>(C) * S, N);
  for (int c = 0; c < C; ++c) {
    const T* src = in.data.row(c).data();
    for (int s = 0; s < S; ++s) {
      T* dst = flat.row(static_cast<Eigen::Index>(c) * S + s).data();
      for (int n = 0; n < N; ++n) dst[n] = src[n * S + s];
    }
  }
}

template <typename T>
void unflatten(const Matrix<T>& flat, Shape shape, int N, Matrix<T>& out) {
  const int C = shape.channels, S = shape.spatial();
  if (S == 1) {
    out = flat;
    return;
  }
  out.resize(C, static_cast<Eigen::Index>(N) * S);
  for (int c = 0; c < C; ++c) {
    T* dst = out.row(c).data();
    for (int s = 0; s < S; ++s) {
      const T* src = flat.row(static_cast<Eigen::Index>(c) * S + s).data();
      for (int n = 0; n < N; ++n) dst[n * S + s] = src[n];
    }
  }
}

template <typename T>
void forward_layer(FullyConnected<T>& fc, const Tensor<T>& in, Tensor<T>& out, Mode, Rng&) {
  flatten(in, fc.input);
  out.shape = Shape{fc.units, 1, 1};
  out.batch = in.batch;
  out.data.noalias() = fc.weight.value * fc.input;
  out.data.colwise() += fc.bias.value.col(0);
}

template <typename T>
void backward_layer(FullyConnected<T>& fc, const Tensor<T>& in, const Tensor<T>&, const Matrix<T>& g, Matrix<T>* gin) {
  fc.weight.grad.noalias() = g * fc.input.transpose();
  fc.bias.grad = g.rowwise().sum();
  if (gin) {
    const Matrix<T> flat = fc.weight.value.transpose() * g;
    unflatten(flat, in.shape, in.batch, *gin);
  }
}

template <typename T>
void forward_layer(Dueling<T>& d, const Tensor<T>& in, Tensor<T>& out, Mode, Rng&) {
  flatten(in, d.input);
  out.shape = Shape{d.actions, 1, 1};
  out.batch = in.batch;
  Matrix<T> adv = d.action_weight.value * d.input;
  adv.colwise() += d.action_bias.value.col(0);
  Matrix<T> value = d.state_weight.value * d.input;
  value.array() += d.state_bias.value(0, 0);
  const Matrix<T> shift = value - adv.colwise().mean();  // [1, N]
  out.data = adv.rowwise() + shift.row(0);
}

template <typename T>
void backward_layer(Dueling<T>& d, const Tensor<T>& in, const Tensor<T>&, const Matrix<T>& g, Matrix<T>* gin) {
  const Matrix<T> g_value = g.colwise().sum();  // [1, N]
  const Matrix<T> g_adv = g.rowwise() - g.colwise().mean().row(0);
  d.action_weight.grad.noalias() = g_adv * d.input.transpose();
  d.action_bias.grad = g_adv.rowwise().sum();
  d.state_weight.grad.noalias() = g_value * d.input.transpose();
  d.state_bias.grad = g_value.rowwise().sum();
  if (gin) {
    Matrix<T> flat = d.action_weight.value.transpose() * g_adv;
    flat.noalias() += d.state_weight.value.transpose() * g_value;
    unflatten(flat, in.shape, in.batch, *gin);
  }
}

template <typename T>
Layer<T> make_layer(const LayerSpec& s, Shape in, Shape& out) {
  switch (s.kind) {
    case LayerKind::Conv2D: {
      if (s.in != in.channels) throw ConfigError("conv input channels do not match: " + describe(s));
      if (s.kernel <= 0 || s.stride <= 0 || s.padding < 0 || s.out <= 0) throw ConfigError("bad conv: " + describe(s));
      Conv2D<T> c;
      c.in_channels = s.in;
      c.filters = s.out;
      c.kernel = s.kernel;
      c.stride = s.stride;
      c.padding = s.padding;
      out = c.output_shape(in);
      if (out.height <= 0 || out.width <= 0) throw ConfigError("conv output is empty: " + describe(s));
      zero_param(c.weight, s.out, s.in * s.kernel * s.kernel);
      zero_param(c.bias, s.out, 1);
      return c;
    }
    case LayerKind::BatchNorm: {
      if (s.in != in.channels) throw ConfigError("batch norm channels do not match: " + describe(s));
      BatchNorm<T> bn;
      bn.channels = s.in;
      bn.momentum = static_cast<T>(s.momentum);
      bn.epsilon = static_cast<T>(s.epsilon);
      zero_param(bn.gamma, s.in, 1);
      zero_param(bn.beta, s.in, 1);
      bn.gamma.value.setOnes();
      bn.running_mean.setZero(s.in, 1);
      bn.running_var.setOnes(s.in, 1);
      out = in;
      return bn;
    }
    case LayerKind::Activation:
      out = in;
      return Activation{s.activation};
    case LayerKind::Dropout: {
      if (!(s.rate >= 0.0f && s.rate < 1.0f)) throw ConfigError("dropout rate must be in [0, 1)");
      Dropout<T> d;
      d.rate = static_cast<T>(s.rate);
      out = in;
      return d;
    }
    case LayerKind::FullyConnected: {
      if (s.in != in.size()) throw ConfigError("dense input size does not match: " + describe(s));
      FullyConnected<T> fc;
      fc.in_features = s.in;
      fc.units = s.out;
      zero_param(fc.weight, s.out, s.in);
      zero_param(fc.bias, s.out, 1);
      out = Shape{s.out, 1, 1};
      return fc;
    }
    case LayerKind::Dueling: {
      if (s.in != in.size()) throw ConfigError("dueling input size does not match: " + describe(s));
      Dueling<T> d;
      d.in_features = s.in;
      d.actions = s.out;
      zero_param(d.action_weight, s.out, s.in);
      zero_param(d.action_bias, s.out, 1);
      zero_param(d.state_weight, 1, s.in);
      zero_param(d.state_bias, 1, 1);
      out = Shape{s.out, 1, 1};
      return d;
    }
  }
  throw ConfigError("unknown layer kind");
}

template <typename T>
LayerSpec spec_of(const Layer<T>& layer) {
  return std::visit(Overloaded{
                        [](const Conv2D<T>& c) {
                          LayerSpec s;
                          s.kind = LayerKind::Conv2D;
                          s.in = c.in_channels;
                          s.out = c.filters;
                          s.kernel = c.kernel;
                          s.stride = c.stride;
                          s.padding = c.padding;
                          return s;
                        },
                        [](const BatchNorm<T>& bn) {
                          LayerSpec s;
                          s.kind = LayerKind::BatchNorm;
                          s.in = bn.channels;
                          s.out = bn.channels;
                          s.momentum = static_cast<float>(bn.momentum);
                          s.epsilon = static_cast<float>(bn.epsilon);
                          return s;
                        },
                        [](const Activation& a) {
                          LayerSpec s;
                          s.kind = LayerKind::Activation;
                          s.activation = a.kind;
                          return s;
                        },
                        [](const Dropout<T>& d) {
                          LayerSpec s;
                          s.kind = LayerKind::Dropout;
                          s.rate = static_cast<float>(d.rate);
                          return s;
                        },
                        [](const FullyConnected<T>& fc) {
                          LayerSpec s;
                          s.kind = LayerKind::FullyConnected;
                          s.in = fc.in_features;
                          s.out = fc.units;
                          return s;
                        },
                        [](const Dueling<T>& d) {
                          LayerSpec s;
                          s.kind = LayerKind::Dueling;
                          s.in = d.in_features;
                          s.out = d.actions;
                          return s;
                        },
                    },
                    layer);
}

template <typename T, typename Fn>
void for_each_param(Layer<T>& layer, Fn&& fn) {
  std::visit(Overloaded{
                 [&](Conv2D<T>& c) { fn(c.weight), fn(c.bias); },
                 [&](BatchNorm<T>& bn) { fn(bn.gamma), fn(bn.beta); },
                 [](Activation&) {},
                 [](Dropout<T>&) {},
                 [&](FullyConnected<T>& fc) { fn(fc.weight), fn(fc.bias); },
                 [&](Dueling<T>& d) {
                   fn(d.action_weight), fn(d.action_bias), fn(d.state_weight), fn(d.state_bias);
                 },
             },
             layer);
}

template <typename T, typename Fn>
void for_each_block(Layer<T>& layer, Fn&& fn) {
  std::visit(Overloaded{
                 [&](Conv2D<T>& c) { fn(c.weight.value), fn(c.bias.value); },
                 [&](BatchNorm<T>& bn) {
                   fn(bn.gamma.value), fn(bn.beta.value), fn(bn.running_mean), fn(bn.running_var);
                 },
                 [](Activation&) {},
                 [](Dropout<T>&) {},
                 [&](FullyConnected<T>& fc) { fn(fc.weight.value), fn(fc.bias.value); },
                 [&](Dueling<T>& d) {
                   fn(d.action_weight.value), fn(d.action_bias.value), fn(d.state_weight.value),
                       fn(d.state_bias.value);
                 },
             },
             layer);
}

}  // namespace

template <typename T>
Network<T>::Network(Shape input, const std::vector<LayerSpec>& specs, std::uint64_t seed)
    : input_shape_(input), output_shape_(input), dropout_rng_(derive_seed(seed, 0xD7)) {
  if (input.size() <= 0) throw ConfigError("network input shape is empty");
  layers_.reserve(specs.size());
  for (const LayerSpec& s : specs) {
    Shape next;
    layers_.push_back(make_layer<T>(s, output_shape_, next));
    output_shape_ = next;
  }
  activations_.resize(layers_.size() + 1);
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  Rng rng(seed);
  auto he_uniform = [&](Matrix<T>& w, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    T* p = w.data();
    for (Eigen::Index i = 0; i < w.size(); ++i) p[i] = static_cast<T>((2.0 * uniform01(rng) - 1.0) * limit);
  };
  for (Layer<T>& layer : layers_) {
    std::visit(Overloaded{
                   [&](Conv2D<T>& c) {
                     he_uniform(c.weight.value, c.in_channels * c.kernel * c.kernel);
                     c.bias.value.setZero();
                   },
                   [](BatchNorm<T>& bn) {
                     bn.gamma.value.setOnes();
                     bn.beta.value.setZero();
                     bn.running_mean.setZero();
                     bn.running_var.setOnes();
                   },
                   [](Activation&) {},
                   [](Dropout<T>&) {},
                   [&](FullyConnected<T>& fc) {
                     he_uniform(fc.weight.value, fc.in_features);
                     fc.bias.value.setZero();
                   },
                   [&](Dueling<T>& d) {
                     he_uniform(d.action_weight.value, d.in_features);
                     d.action_bias.value.setZero();
                     he_uniform(d.state_weight.value, d.in_features);
                     d.state_bias.value.setZero();
                   },
               },
               layer);
  }
  dropout_rng_.seed(derive_seed(seed, 0xD7));
}

template <typename T>
const Tensor<T>& Network<T>::forward(const Tensor<T>& input, Mode mode) {
  if (input.shape != input_shape_) throw ConfigError("network input shape mismatch");
  if (input.data.rows() != input_shape_.channels ||
      input.data.cols() != static_cast<Eigen::Index>(input.batch) * input_shape_.spatial()) {
    throw ConfigError("network input data does not match its declared shape");
  }
  activations_[0] = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    std::visit([&](auto& layer) { forward_layer(layer, activations_[i], activations_[i + 1], mode, dropout_rng_); },
               layers_[i]);
  }
  return activations_.back();
}

template <typename T>
void Network<T>::backward(const Matrix<T>& grad_output, Matrix<T>* grad_input) {
  const Tensor<T>& out = activations_.back();
  if (grad_output.rows() != out.data.rows() || grad_output.cols() != out.data.cols()) {
    throw ConfigError("gradient shape does not match the last forward output");
  }
  Matrix<T> g = grad_output;
  Matrix<T> gin;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_input_grad = i > 0 || grad_input != nullptr;
    std::visit(
        [&](auto& layer) {
          backward_layer(layer, activations_[i], activations_[i + 1], g, need_input_grad ? &gin : nullptr);
        },
        layers_[i]);
    if (need_input_grad) g.swap(gin);
  }
  if (grad_input) *grad_input = std::move(g);
}

template <typename T>
std::vector<Param<T>*> Network<T>::parameters() {
  std::vector<Param<T>*> out;
  for (Layer<T>& layer : layers_) for_each_param(layer, [&](Param<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::vector<const Param<T>*> Network<T>::parameters() const {
  std::vector<const Param<T>*> out;
  for (Param<T>* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<Matrix<T>*> Network<T>::blocks() {
  std::vector<Matrix<T>*> out;
  for (Layer<T>& layer : layers_) for_each_block(layer, [&](Matrix<T>& m) { out.push_back(&m); });
  return out;
}

template <typename T>
std::vector<const Matrix<T>*> Network<T>::blocks() const {
  std::vector<const Matrix<T>*> out;
  for (Matrix<T>* m : const_cast<Network*>(this)->blocks()) out.push_back(m);
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const Param<T>* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <typename T>
std::vector<LayerSpec> Network<T>::architecture() const {
  std::vector<LayerSpec> specs;
  specs.reserve(layers_.size());
  for (const Layer<T>& layer : layers_) specs.push_back(spec_of<T>(layer));
  return specs;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out(input_shape_, architecture());
  const auto src = blocks();
  const auto dst = out.blocks();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<U>();
  out.dropout_rng_ = dropout_rng_;
  return out;
}

std::vector<LayerSpec> backbone_specs(const BackboneOptions& opts) {
  std::vector<LayerSpec> specs;
  Shape shape = kBoardInput;
  for (int i = 0; i < opts.conv_layers; ++i) {
    LayerSpec conv;
    conv.kind = LayerKind::Conv2D;
    conv.in = shape.channels;
    conv.out = opts.filters;
    conv.kernel = 3;
    conv.stride = 1;
    conv.padding = i == 0 ? 1 : 0;
    specs.push_back(conv);
    shape = Shape{opts.filters, shape.height + 2 * conv.padding - 2, shape.width + 2 * conv.padding - 2};

    LayerSpec bn;
    bn.kind = LayerKind::BatchNorm;
    bn.in = bn.out = opts.filters;
    bn.momentum = opts.bn_momentum;
    bn.epsilon = opts.bn_epsilon;
    specs.push_back(bn);

    LayerSpec act;
    act.kind = LayerKind::Activation;
    act.activation = opts.conv_activation;
    specs.push_back(act);
  }
  LayerSpec fc;
  fc.kind = LayerKind::FullyConnected;
  fc.in = shape.size();
  fc.out = opts.fc_units;
  specs.push_back(fc);

  LayerSpec act;
  act.kind = LayerKind::Activation;
  act.activation = opts.fc_activation;
  specs.push_back(act);

  LayerSpec drop;
  drop.kind = LayerKind::Dropout;
  drop.rate = opts.dropout;
  specs.push_back(drop);
  return specs;
}

LayerSpec q_head_spec(int in_features) {
  LayerSpec s;
  s.kind = LayerKind::FullyConnected;
  s.in = in_features;
  s.out = kNumActions;
  return s;
}

LayerSpec expert_head_spec(int in_features) {
  LayerSpec s;
  s.kind = LayerKind::FullyConnected;
  s.in = in_features;
  s.out = 1;
  return s;
}

LayerSpec dueling_head_spec(int in_features) {
  LayerSpec s;
  s.kind = LayerKind::Dueling;
  s.in = in_features;
  s.out = kNumActions;
  return s;
}

template <typename T>
Network<T> build_backbone(const BackboneOptions& opts, std::uint64_t seed) {
  Network<T> net(kBoardInput, backbone_specs(opts), seed);
  net.initialize(seed);
  return net;
}

template <typename T>
Network<T> build_network(NetworkRole role, const BackboneOptions& opts, std::uint64_t seed) {
  std::vector<LayerSpec> specs = backbone_specs(opts);
  switch (role) {
    case NetworkRole::QValues: specs.push_back(q_head_spec(opts.fc_units)); break;
    case NetworkRole::StateValue: specs.push_back(expert_head_spec(opts.fc_units)); break;
    case NetworkRole::Dueling: specs.push_back(dueling_head_spec(opts.fc_units)); break;
  }
  Network<T> net(kBoardInput, specs, seed);
  net.initialize(seed);
  return net;
}

template <typename T>
T mse_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad) {
  if (pred.size() != target.size()) throw ConfigError("mse_loss: prediction and target lengths differ");
  if (!grad.empty() && grad.size() != pred.size()) throw ConfigError("mse_loss: gradient length differs");
  if (pred.empty()) return T(0);
  const T n = static_cast<T>(pred.size());
  T sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    sum += d * d;
    if (!grad.empty()) grad[i] = T(2) * d / n;
  }
  return sum / n;
}

template <typename T>
Adam<T>::Adam(const Network<T>& net, AdamOptions opts) : opts_(opts) {
  for (const Param<T>* p : net.parameters()) {
    m_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix<T>::Zero(p->value.rows(), p->value.cols()));
  }
}

template <typename T>
void Adam<T>::step(Network<T>& net) {
  const std::vector<Param<T>*> params = net.parameters();
  if (params.size() != m_.size()) throw ConfigError("optimizer was built for a different network");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->grad.allFinite()) {
      throw NonFiniteGradient("non-finite gradient in parameter block " + std::to_string(i));
    }
  }
  ++steps_;
  const T b1 = static_cast<T>(opts_.beta1);
  const T b2 = static_cast<T>(opts_.beta2);
  const double t = static_cast<double>(steps_);
  const T step_size = static_cast<T>(opts_.learning_rate / (1.0 - std::pow(opts_.beta1, t)));
  const T v_correction = static_cast<T>(1.0 / (1.0 - std::pow(opts_.beta2, t)));
  const T eps = static_cast<T>(opts_.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto g = params[i]->grad.array();
    m_[i].array() = b1 * m_[i].array() + (T(1) - b1) * g;
    v_[i].array() = b2 * v_[i].array() + (T(1) - b2) * g.square();
    params[i]->value.array() -= step_size * m_[i].array() / ((v_[i].array() * v_correction).sqrt() + eps);
  }
}

// ---------------------------------------------------------------------------
// Model files

namespace {

constexpr char kModelMagic[4] = {'X', 'Q', 'N', 'N'};
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kFlagOptimizer = 1u;

class ByteWriter {
 public:
  template <typename V>
  void put(V v) {
    static_assert(std::is_trivially_copyable_v<V>);
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_floats(const Matrix<float>& m) {
    buf_.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  }
  void put_raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  template <typename V>
  V get() {
    V v;
    need(sizeof v);
    std::memcpy(&v, data_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  void get_floats(Matrix<float>& m) {
    const std::size_t n = static_cast<std::size_t>(m.size()) * sizeof(float);
    need(n);
    std::memcpy(m.data(), data_.data() + pos_, n);
    pos_ += n;
  }
  std::string_view get_raw(std::size_t n) {
    need(n);
    const std::string_view s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw FormatError("model file is truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(const Network<float>& net, const Adam<float>* opt) {
  ByteWriter w;
  w.put_raw(kModelMagic, sizeof kModelMagic);
  w.put(kModelVersion);
  w.put(opt ? kFlagOptimizer : 0u);
  const Shape in = net.input_shape();
  w.put<std::int32_t>(in.channels);
  w.put<std::int32_t>(in.height);
  w.put<std::int32_t>(in.width);
  const std::vector<LayerSpec> specs = net.architecture();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(specs.size()));
  for (const LayerSpec& s : specs) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.kind));
    w.put<std::int32_t>(s.in);
    w.put<std::int32_t>(s.out);
    w.put<std::int32_t>(s.kernel);
    w.put<std::int32_t>(s.stride);
    w.put<std::int32_t>(s.padding);
    w.put<float>(s.rate);
    w.put<float>(s.momentum);
    w.put<float>(s.epsilon);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.activation));
  }
  for (const Matrix<float>* b : net.blocks()) w.put_floats(*b);
  if (opt) {
    const AdamOptions& o = opt->options();
    w.put<std::uint64_t>(opt->steps());
    w.put<double>(o.learning_rate);
    w.put<double>(o.beta1);
    w.put<double>(o.beta2);
    w.put<double>(o.epsilon);
    for (const Matrix<float>& m : opt->first_moments()) w.put_floats(m);
    for (const Matrix<float>& v : opt->second_moments()) w.put_floats(v);
  }
  return w.take();
}

void save_model(const std::filesystem::path& path, const Network<float>& net, const Adam<float>* opt) {
  const std::string bytes = serialize_model(net, opt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

LoadedModel deserialize_model(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.get_raw(sizeof kModelMagic) != std::string_view(kModelMagic, sizeof kModelMagic)) {
    throw FormatError("not an XQNN model file");
  }
  if (r.get<std::uint32_t>() != kModelVersion) throw FormatError("unsupported model file version");
  const auto flags = r.get<std::uint32_t>();
  if (flags & ~kFlagOptimizer) throw FormatError("unknown model file flags");
  Shape in;
  in.channels = r.get<std::int32_t>();
  in.height = r.get<std::int32_t>();
  in.width = r.get<std::int32_t>();
  const auto count = r.get<std::uint32_t>();
  if (count > 4096) throw FormatError("implausible layer count");
  std::vector<LayerSpec> specs(count);
  for (LayerSpec& s : specs) {
    const auto kind = r.get<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(LayerKind::Dueling)) throw FormatError("unknown layer kind in model file");
    s.kind = static_cast<LayerKind>(kind);
    s.in = r.get<std::int32_t>();
    s.out = r.get<std::int32_t>();
    s.kernel = r.get<std::int32_t>();
    s.stride = r.get<std::int32_t>();
    s.padding = r.get<std::int32_t>();
    s.rate = r.get<float>();
    s.momentum = r.get<float>();
    s.epsilon = r.get<float>();
    const auto act = r.get<std::uint8_t>();
    if (act > static_cast<std::uint8_t>(ActivationKind::Sigmoid)) throw FormatError("unknown activation in model file");
    s.activation = static_cast<ActivationKind>(act);
  }
  LoadedModel out;
  try {
    out.net = Network<float>(in, specs);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model architecture is inconsistent: ") + e.what());
  }
  for (Matrix<float>* b : out.net.blocks()) r.get_floats(*b);
  if (flags & kFlagOptimizer) {
    AdamOptions o;
    const auto steps = r.get<std::uint64_t>();
    o.learning_rate = r.get<double>();
    o.beta1 = r.get<double>();
    o.beta2 = r.get<double>();
    o.epsilon = r.get<double>();
    Adam<float> adam(out.net, o);
    adam.set_steps(steps);
    for (Matrix<float>& m : adam.first_moments()) r.get_floats(m);
    for (Matrix<float>& v : adam.second_moments()) r.get_floats(v);
    out.optimizer = std::move(adam);
  }
  if (!r.done()) throw FormatError("trailing bytes after model data");
  return out;
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open model file " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_model(data);
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport gradient_check(std::span<Param<double>* const> params,
                               const std::function<double(bool backprop)>& evaluate, double tolerance,
                               double step, double floor) {
  evaluate(true);
  std::vector<Matrix<double>> analytic;
  analytic.reserve(params.size());
  for (const Param<double>* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Matrix<double>& value = params[pi]->value;
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      double& w = value.data()[i];
      const double original = w;
      w = original + step;
      const double plus = evaluate(false);
      w = original - step;
      const double minus = evaluate(false);
      w = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = analytic[pi].data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++report.checked;
      if (!(rel <= report.max_rel_error)) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_index = static_cast<std::size_t>(i);
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  // Leave the analytic gradients in place for callers that inspect them.
  for (std::size_t pi = 0; pi < params.size(); ++pi) params[pi]->grad = analytic[pi];
  report.passed = report.max_rel_error < tolerance;
  return report;
}

GradCheckReport gradient_check(Network<double>& net,
                               const std::function<double(const Matrix<double>&, Matrix<double>&)>& loss,
                               const Tensor<double>& input, Mode mode, double tolerance) {
  // Reseeding before every pass fixes the dropout mask, so Train mode is
  // deterministic across the perturbed evaluations.
  constexpr std::uint64_t kMaskSeed = 0x5EED;
  auto evaluate = [&](bool backprop) {
    net.reseed_dropout(kMaskSeed);
    const Tensor<double>& out = net.forward(input, mode);
    Matrix<double> grad(out.data.rows(), out.data.cols());
    const double value = loss(out.data, grad);
    if (backprop) net.backward(grad);
    return value;
  };
  std::vector<Param<double>*> params = net.parameters();
  return gradient_check(params, evaluate, tolerance);
}

// ---------------------------------------------------------------------------

template Tensor<float> encode_batch<float>(std::span<const StateEncoding>);
template Tensor<double> encode_batch<double>(std::span<const StateEncoding>);
template struct Conv2D<float>;
template struct Conv2D<double>;
template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> build_backbone<float>(const BackboneOptions&, std::uint64_t);
template Network<double> build_backbone<double>(const BackboneOptions&, std::uint64_t);
template Network<float> build_network<float>(NetworkRole, const BackboneOptions&, std::uint64_t);
template Network<double> build_network<double>(NetworkRole, const BackboneOptions&, std::uint64_t);
template float mse_loss<float>(std::span<const float>, std::span<const float>, std::span<float>);
template double mse_loss<double>(std::span<const double>, std::span<const double>, std::span<double>);
template class Adam<float>;
template class Adam<double>;

}  // namespace xq::nn
