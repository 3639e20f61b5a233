#pragma once

#include "cbx/rng.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cbx::nn {

struct Shape {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t size() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
};

// Dense CHW activation tensor.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(s.size(), 0.0f) {}
  void reset(Shape s) {
    shape = s;
    data.assign(s.size(), 0.0f);
  }
  float* channel(std::size_t c) { return data.data() + c * shape.h * shape.w; }
  const float* channel(std::size_t c) const { return data.data() + c * shape.h * shape.w; }
};

// Per-call scratch owned by the caller, so a module can run on many
// samples concurrently while its parameters stay shared and read-only.
struct Workspace {
  std::vector<Tensor> tensors;
  std::vector<std::unique_ptr<Workspace>> children;
  Workspace& child(std::size_t i) {
    while (children.size() <= i) children.push_back(std::make_unique<Workspace>());
    return *children[i];
  }
};

class Module {
 public:
  virtual ~Module() = default;
  virtual std::string kind() const = 0;
  virtual Shape output_shape(Shape in) const = 0;
  virtual std::size_t param_count() const { return 0; }
  virtual void init(std::span<float> params, Rng& rng) const { (void)params, (void)rng; }
  virtual void forward(std::span<const float> params, const Tensor& in, Tensor& out,
                       Workspace& ws) const = 0;
  // grad_in may be null when the input gradient is not needed.
  virtual void backward(std::span<const float> params, const Tensor& in, const Tensor& out,
                        const Tensor& grad_out, Tensor* grad_in, std::span<float> grad_params,
                        Workspace& ws) const = 0;
  // Number of weight layers on the deepest path (conv / linear).
  virtual std::size_t depth() const { return 0; }
  virtual bool has_conv() const { return false; }
};

using ModulePtr = std::shared_ptr<const Module>;

// k x k convolution, stride 1, zero "same" padding.
class Conv2d final : public Module {
 public:
  Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k);
  std::string kind() const override { return "conv"; }
  Shape output_shape(Shape in) const override;
  std::size_t param_count() const override { return out_c_ * in_c_ * k_ * k_ + out_c_; }
  void init(std::span<float> params, Rng& rng) const override;
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
  std::size_t depth() const override { return 1; }
  bool has_conv() const override { return true; }

 private:
  std::size_t in_c_, out_c_, k_;
};

// Appends two channels holding the x and y pixel coordinates in [-1, 1].
class AddCoords final : public Module {
 public:
  std::string kind() const override { return "coords"; }
  Shape output_shape(Shape in) const override { return {in.c + 2, in.h, in.w}; }
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
};

class ReLU final : public Module {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(Shape in) const override { return in; }
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
};

// 2x2 max pooling, stride 2 (odd trailing row/column dropped).
class MaxPool2 final : public Module {
 public:
  std::string kind() const override { return "maxpool2"; }
  Shape output_shape(Shape in) const override { return {in.c, in.h / 2, in.w / 2}; }
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
};

// 3x3 average pooling, stride 1, zero padding counted (count_include_pad).
class AvgPool3 final : public Module {
 public:
  std::string kind() const override { return "avgpool3"; }
  Shape output_shape(Shape in) const override { return in; }
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
};

class GlobalAvgPool final : public Module {
 public:
  std::string kind() const override { return "gap"; }
  Shape output_shape(Shape in) const override { return {in.c, 1, 1}; }
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
};

class GlobalMaxPool final : public Module {
 public:
  std::string kind() const override { return "gmp"; }
  Shape output_shape(Shape in) const override { return {in.c, 1, 1}; }
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
};

class Linear final : public Module {
 public:
  Linear(std::size_t in, std::size_t out);
  std::string kind() const override { return "linear"; }
  Shape output_shape(Shape in) const override;
  std::size_t param_count() const override { return out_ * in_ + out_; }
  void init(std::span<float> params, Rng& rng) const override;
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
  std::size_t depth() const override { return 1; }

 private:
  std::size_t in_, out_;
};

class Sequential final : public Module {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<ModulePtr> layers) : layers_(std::move(layers)) {}
  void add(ModulePtr m) { layers_.push_back(std::move(m)); }

  std::string kind() const override { return "sequential"; }
  Shape output_shape(Shape in) const override;
  std::size_t param_count() const override;
  void init(std::span<float> params, Rng& rng) const override;
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
  std::size_t depth() const override;
  bool has_conv() const override;
  const std::vector<ModulePtr>& layers() const { return layers_; }

 private:
  std::vector<ModulePtr> layers_;
};

// Parallel branches whose outputs are concatenated along channels.
class Concat final : public Module {
 public:
  explicit Concat(std::vector<ModulePtr> branches) : branches_(std::move(branches)) {}
  std::string kind() const override { return "concat"; }
  Shape output_shape(Shape in) const override;
  std::size_t param_count() const override;
  void init(std::span<float> params, Rng& rng) const override;
  void forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const override;
  void backward(std::span<const float> params, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const override;
  std::size_t depth() const override;
  bool has_conv() const override;

 private:
  std::vector<ModulePtr> branches_;
};

// Convolutional feature extractor followed by a pooled linear head.
// Gradient-based saliency reads the feature map at the boundary.
class Network {
 public:
  Network() = default;
  Network(Shape input, ModulePtr features, ModulePtr head);

  Shape input_shape() const { return input_; }
  Shape feature_shape() const { return feature_shape_; }
  std::size_t output_size() const { return output_size_; }
  std::size_t param_count() const { return features_->param_count() + head_->param_count(); }
  std::size_t depth() const { return features_->depth() + head_->depth(); }
  bool has_conv_features() const { return features_ && features_->has_conv(); }

  void init(std::vector<float>& params, Rng& rng) const;

  struct Pass {
    Workspace feature_ws, head_ws;
    Tensor features;  // last convolutional feature map
    Tensor logits;
  };
  void forward(std::span<const float> params, const Tensor& input, Pass& pass) const;
  // Backpropagates d(loss)/d(logits) through the whole network.
  void backward(std::span<const float> params, const Tensor& input, Pass& pass, const Tensor& grad_logits,
                std::span<float> grad_params, Tensor* grad_features = nullptr) const;
  // Gradient of the given logits with respect to the feature map only.
  Tensor feature_gradient(std::span<const float> params, Pass& pass, const Tensor& grad_logits) const;

 private:
  Shape input_;
  ModulePtr features_, head_;
  Shape feature_shape_;
  std::size_t output_size_ = 0;
};

// Compact desk-scale backbone: coordinate channels, four convs, global max
// pool, linear.
Network make_compact_cnn(std::size_t image_size, std::size_t outputs, std::size_t width);
// Inception-style backbone: 5-conv stem plus 12 four-branch blocks;
// 42 weight layers on the deepest path including the classifier.
Network make_inception(std::size_t image_size, std::size_t outputs, std::size_t width);

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<float>& params, std::span<const float> grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace cbx::nn
