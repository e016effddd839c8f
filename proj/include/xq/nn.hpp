#pragma once

// Small feed-forward network library: the fixed layer set needed by the
// Q-learning agents (conv, batch norm, activations, dropout, dense, dueling
// head), reverse-mode gradients, Adam, and the XQNN model file format.
//
// Activations are stored as row-major matrices of shape
// [channels, batch * height * width]; column n * H * W + y * W + x holds
// pixel (y, x) of sample n. Dense layers see [features, batch].

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "xq/errors.hpp"
#include "xq/othello.hpp"
#include "xq/random.hpp"

namespace xq::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Mode : std::uint8_t { Train, Inference };

struct Shape {
  int channels = 0;
  int height = 1;
  int width = 1;

  int spatial() const noexcept { return height * width; }
  int size() const noexcept { return channels * height * width; }
  bool operator==(const Shape&) const = default;
};

template <typename T>
struct Tensor {
  Matrix<T> data;  // [shape.channels, batch * shape.spatial()]
  Shape shape;
  int batch = 0;
};

// Packs encoded positions into a network input of shape (2, 8, 8).
template <typename T>
Tensor<T> encode_batch(std::span<const StateEncoding> states);

template <typename T>
struct Param {
  Matrix<T> value;
  Matrix<T> grad;
};

enum class ActivationKind : std::uint8_t { Identity, ReLU, Sigmoid };

std::string_view to_string(ActivationKind k) noexcept;
ActivationKind parse_activation(std::string_view name);

enum class LayerKind : std::uint8_t { Conv2D, BatchNorm, Activation, Dropout, FullyConnected, Dueling };

// Architecture descriptor for one layer; which fields matter depends on kind.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv2D;
  int in = 0;           // input channels / features
  int out = 0;          // filters / units / actions
  int kernel = 0;
  int stride = 1;
  int padding = 0;
  float rate = 0.0f;    // dropout rate
  float momentum = 0.0f;  // batch-norm running-average momentum
  float epsilon = 0.0f;   // batch-norm variance epsilon
  ActivationKind activation = ActivationKind::Identity;

  bool operator==(const LayerSpec&) const = default;
};

std::string describe(const LayerSpec& spec);

template <typename T>
struct Conv2D {
  int in_channels = 0;
  int filters = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 0;
  Param<T> weight;  // [filters, in_channels * kernel * kernel]
  Param<T> bias;    // [filters, 1]
  Matrix<T> cols;   // im2col of the last input

  Shape output_shape(Shape in) const;
};

template <typename T>
struct BatchNorm {
  int channels = 0;
  T momentum = T(0.99);
  T epsilon = T(1e-5);
  Param<T> gamma;
  Param<T> beta;
  Matrix<T> running_mean;  // [channels, 1]
  Matrix<T> running_var;   // [channels, 1]
  Matrix<T> normalized;    // x-hat of the last forward
  Matrix<T> inv_std;       // [channels, 1] used by the last forward
  bool used_batch_stats = false;
};

struct Activation {
  ActivationKind kind = ActivationKind::ReLU;
};

template <typename T>
struct Dropout {
  T rate = T(0.3);
  Matrix<T> mask;  // already scaled by 1 / (1 - rate)
  bool active = false;
};

// Flattens its input to [in_features, batch].
template <typename T>
struct FullyConnected {
  int in_features = 0;
  int units = 0;
  Param<T> weight;  // [units, in_features]
  Param<T> bias;    // [units, 1]
  Matrix<T> input;  // flattened input of the last forward
};

// Two linear branches over the same features, combined as
// out_i = a_i - mean_k(a_k) + v.
template <typename T>
struct Dueling {
  int in_features = 0;
  int actions = 0;
  Param<T> action_weight;  // [actions, in_features]
  Param<T> action_bias;    // [actions, 1]
  Param<T> state_weight;   // [1, in_features]
  Param<T> state_bias;     // [1, 1]
  Matrix<T> input;
};

template <typename T>
using Layer = std::variant<Conv2D<T>, BatchNorm<T>, Activation, Dropout<T>, FullyConnected<T>, Dueling<T>>;

template <typename T>
class Network {
 public:
  Network() = default;
  // Builds layers from specs with zeroed parameters; call initialize() or
  // load weights afterwards. Throws ConfigError when shapes do not chain.
  Network(Shape input, const std::vector<LayerSpec>& specs, std::uint64_t seed = 0);

  // He-uniform weights, zero biases, batch norm gamma = 1, beta = 0.
  void initialize(std::uint64_t seed);

  const Tensor<T>& forward(const Tensor<T>& input, Mode mode);
  // Backpropagates d(loss)/d(output) of the last forward, overwriting every
  // parameter gradient. Returns d(loss)/d(input) when asked.
  void backward(const Matrix<T>& grad_output, Matrix<T>* grad_input = nullptr);

  std::vector<Param<T>*> parameters();
  std::vector<const Param<T>*> parameters() const;
  // Every stored block (trainable values and batch-norm statistics) in file order.
  std::vector<Matrix<T>*> blocks();
  std::vector<const Matrix<T>*> blocks() const;
  std::size_t parameter_count() const;

  std::vector<LayerSpec> architecture() const;
  Shape input_shape() const noexcept { return input_shape_; }
  Shape output_shape() const noexcept { return output_shape_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::vector<Layer<T>>& layers() noexcept { return layers_; }

  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

  template <typename U>
  Network<U> cast() const;

 private:
  template <typename U>
  friend class Network;

  Shape input_shape_;
  Shape output_shape_;
  std::vector<Layer<T>> layers_;
  std::vector<Tensor<T>> activations_;  // activations_[i] is the input of layer i
  Rng dropout_rng_;
};

struct BackboneOptions {
  int filters = 64;
  int conv_layers = 4;
  int fc_units = 512;
  float dropout = 0.3f;
  ActivationKind conv_activation = ActivationKind::ReLU;
  ActivationKind fc_activation = ActivationKind::Sigmoid;
  float bn_momentum = 0.99f;
  float bn_epsilon = 1e-5f;
};

inline const Shape kBoardInput{2, kBoardSide, kBoardSide};

// Conv(3x3, first padded) -> BN -> act, repeated, then FC -> act -> dropout.
std::vector<LayerSpec> backbone_specs(const BackboneOptions& opts = {});
LayerSpec q_head_spec(int in_features = 512);
LayerSpec expert_head_spec(int in_features = 512);
LayerSpec dueling_head_spec(int in_features = 512);

enum class NetworkRole : std::uint8_t { QValues, StateValue, Dueling };

template <typename T>
Network<T> build_backbone(const BackboneOptions& opts, std::uint64_t seed);
template <typename T>
Network<T> build_network(NetworkRole role, const BackboneOptions& opts, std::uint64_t seed);

// Mean squared error over equal-length vectors; grad (if given) receives
// 2 (pred - target) / n. Throws ConfigError on length mismatch.
template <typename T>
T mse_loss(std::span<const T> pred, std::span<const T> target, std::span<T> grad = {});

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a network's trainable parameters; batch-norm running statistics
// are not trainable and never touched.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const Network<T>& net, AdamOptions opts = {});

  // Throws NonFiniteGradient (leaving parameters untouched) if any gradient
  // is NaN or infinite.
  void step(Network<T>& net);

  const AdamOptions& options() const noexcept { return opts_; }
  std::uint64_t steps() const noexcept { return steps_; }
  std::vector<Matrix<T>>& first_moments() noexcept { return m_; }
  std::vector<Matrix<T>>& second_moments() noexcept { return v_; }
  const std::vector<Matrix<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Matrix<T>>& second_moments() const noexcept { return v_; }
  void set_steps(std::uint64_t s) noexcept { steps_ = s; }

 private:
  AdamOptions opts_;
  std::uint64_t steps_ = 0;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
};

// XQNN model files: "XQNN", u32 version, u32 flags (bit 0: optimizer state),
// input shape, layer descriptors, then every block as little-endian float32
// in declaration order, then the optional Adam state.
void save_model(const std::filesystem::path& path, const Network<float>& net, const Adam<float>* opt = nullptr);
std::string serialize_model(const Network<float>& net, const Adam<float>* opt = nullptr);

struct LoadedModel {
  Network<float> net;
  std::optional<Adam<float>> optimizer;
};

LoadedModel load_model(const std::filesystem::path& path);
LoadedModel deserialize_model(std::string_view bytes);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_param = 0;  // index into the parameter list
  std::size_t worst_index = 0;  // element inside that parameter
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = false;
};

// Compares analytic gradients against central differences for every element
// of `params`. `evaluate(backprop)` must run the forward pass, return the
// loss, and when `backprop` is true also leave analytic gradients in the
// params. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckReport gradient_check(std::span<Param<double>* const> params,
                               const std::function<double(bool backprop)>& evaluate, double tolerance,
                               double step = 1e-5, double floor = 1e-4);

// Single network with a loss on its output: loss(output, grad_out) returns the
// loss and writes d(loss)/d(output) into grad_out.
GradCheckReport gradient_check(Network<double>& net,
                               const std::function<double(const Matrix<double>&, Matrix<double>&)>& loss,
                               const Tensor<double>& input, Mode mode, double tolerance);

}  // namespace xq::nn
