#include "cbx/nn.hpp"

#include "cbx/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cbx::nn {

// ---- Conv2d -----------------------------------------------------------------

Conv2d::Conv2d(std::size_t in_c, std::size_t out_c, std::size_t k) : in_c_(in_c), out_c_(out_c), k_(k) {
  if (k % 2 == 0) throw DimensionError("conv kernel size must be odd");
}

Shape Conv2d::output_shape(Shape in) const {
  if (in.c != in_c_) {
    throw DimensionError("conv expects " + std::to_string(in_c_) + " channels, got " + std::to_string(in.c));
  }
  return {out_c_, in.h, in.w};
}

void Conv2d::init(std::span<float> params, Rng& rng) const {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c_ * k_ * k_));
  const std::size_t nw = out_c_ * in_c_ * k_ * k_;
  for (std::size_t i = 0; i < nw; ++i) params[i] = static_cast<float>(rng.normal(0.0, stddev));
  for (std::size_t i = nw; i < params.size(); ++i) params[i] = 0.0f;
}

void Conv2d::forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace&) const {
  const std::size_t H = in.shape.h, W = in.shape.w;
  const auto pad = static_cast<std::ptrdiff_t>(k_ / 2);
  out.reset(output_shape(in.shape));
  const float* weights = params.data();
  const float* bias = params.data() + out_c_ * in_c_ * k_ * k_;
  for (std::size_t oc = 0; oc < out_c_; ++oc) {
    float* o = out.channel(oc);
    std::fill(o, o + H * W, bias[oc]);
    for (std::size_t ic = 0; ic < in_c_; ++ic) {
      const float* src = in.channel(ic);
      const float* wk = weights + (oc * in_c_ + ic) * k_ * k_;
      for (std::size_t ky = 0; ky < k_; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
        const std::size_t y1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(H, static_cast<std::ptrdiff_t>(H) - dy));
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const float w = wk[ky * k_ + kx];
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
          const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t x1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(W, static_cast<std::ptrdiff_t>(W) - dx));
          for (std::size_t y = y0; y < y1; ++y) {
            float* orow = o + y * W;
            const float* irow = src + (static_cast<std::ptrdiff_t>(y) + dy) * static_cast<std::ptrdiff_t>(W) + dx;
            for (std::size_t x = x0; x < x1; ++x) orow[x] += w * irow[x];
          }
        }
      }
    }
  }
}

void Conv2d::backward(std::span<const float> params, const Tensor& in, const Tensor&, const Tensor& grad_out,
                      Tensor* grad_in, std::span<float> grad_params, Workspace&) const {
  const std::size_t H = in.shape.h, W = in.shape.w;
  const auto pad = static_cast<std::ptrdiff_t>(k_ / 2);
  const float* weights = params.data();
  float* gw = grad_params.data();
  float* gb = grad_params.data() + out_c_ * in_c_ * k_ * k_;
  if (grad_in) grad_in->reset(in.shape);
  for (std::size_t oc = 0; oc < out_c_; ++oc) {
    const float* g = grad_out.channel(oc);
    float bsum = 0.0f;
    for (std::size_t i = 0; i < H * W; ++i) bsum += g[i];
    gb[oc] += bsum;
    for (std::size_t ic = 0; ic < in_c_; ++ic) {
      const float* src = in.channel(ic);
      float* gsrc = grad_in ? grad_in->channel(ic) : nullptr;
      const float* wk = weights + (oc * in_c_ + ic) * k_ * k_;
      float* gwk = gw + (oc * in_c_ + ic) * k_ * k_;
      for (std::size_t ky = 0; ky < k_; ++ky) {
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::size_t y0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dy));
        const std::size_t y1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(H, static_cast<std::ptrdiff_t>(H) - dy));
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const float w = wk[ky * k_ + kx];
          const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
          const std::size_t x0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, -dx));
          const std::size_t x1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(W, static_cast<std::ptrdiff_t>(W) - dx));
          float acc = 0.0f;
          for (std::size_t y = y0; y < y1; ++y) {
            const float* grow = g + y * W;
            const std::ptrdiff_t off = (static_cast<std::ptrdiff_t>(y) + dy) * static_cast<std::ptrdiff_t>(W) + dx;
            const float* irow = src + off;
            for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (gsrc) {
              float* girow = gsrc + off;
              for (std::size_t x = x0; x < x1; ++x) girow[x] += w * grow[x];
            }
          }
          gwk[ky * k_ + kx] += acc;
        }
      }
    }
  }
}

// ---- AddCoords --------------------------------------------------------------

void AddCoords::forward(std::span<const float>, const Tensor& in, Tensor& out, Workspace&) const {
  out.reset(output_shape(in.shape));
  const std::size_t H = in.shape.h, W = in.shape.w;
  std::copy(in.data.begin(), in.data.end(), out.data.begin());
  float* xs = out.channel(in.shape.c);
  float* ys = out.channel(in.shape.c + 1);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      xs[y * W + x] = W > 1 ? 2.0f * static_cast<float>(x) / static_cast<float>(W - 1) - 1.0f : 0.0f;
      ys[y * W + x] = H > 1 ? 2.0f * static_cast<float>(y) / static_cast<float>(H - 1) - 1.0f : 0.0f;
    }
  }
}

void AddCoords::backward(std::span<const float>, const Tensor& in, const Tensor&, const Tensor& grad_out,
                         Tensor* grad_in, std::span<float>, Workspace&) const {
  if (!grad_in) return;
  grad_in->reset(in.shape);
  std::copy(grad_out.data.begin(), grad_out.data.begin() + static_cast<std::ptrdiff_t>(in.data.size()),
            grad_in->data.begin());
}

// ---- ReLU -------------------------------------------------------------------

void ReLU::forward(std::span<const float>, const Tensor& in, Tensor& out, Workspace&) const {
  out.reset(in.shape);
  for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = in.data[i] > 0.0f ? in.data[i] : 0.0f;
}

void ReLU::backward(std::span<const float>, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                    Tensor* grad_in, std::span<float>, Workspace&) const {
  if (!grad_in) return;
  grad_in->reset(in.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    grad_in->data[i] = out.data[i] > 0.0f ? grad_out.data[i] : 0.0f;
  }
}

// ---- MaxPool2 ---------------------------------------------------------------

void MaxPool2::forward(std::span<const float>, const Tensor& in, Tensor& out, Workspace&) const {
  out.reset(output_shape(in.shape));
  const std::size_t W = in.shape.w, oh = out.shape.h, ow = out.shape.w;
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float* s = in.channel(c);
    float* o = out.channel(c);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const float* p = s + 2 * y * W + 2 * x;
        o[y * ow + x] = std::max(std::max(p[0], p[1]), std::max(p[W], p[W + 1]));
      }
    }
  }
}

void MaxPool2::backward(std::span<const float>, const Tensor& in, const Tensor& out, const Tensor& grad_out,
                        Tensor* grad_in, std::span<float>, Workspace&) const {
  if (!grad_in) return;
  grad_in->reset(in.shape);
  const std::size_t W = in.shape.w, oh = out.shape.h, ow = out.shape.w;
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float* s = in.channel(c);
    const float* o = out.channel(c);
    const float* g = grad_out.channel(c);
    float* gi = grad_in->channel(c);
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const std::size_t base = 2 * y * W + 2 * x;
        const std::size_t cand[4] = {base, base + 1, base + W, base + W + 1};
        const float m = o[y * ow + x];
        for (std::size_t k : cand) {
          if (s[k] == m) {  // first maximum takes the gradient
            gi[k] += g[y * ow + x];
            break;
          }
        }
      }
    }
  }
}

// ---- AvgPool3 ---------------------------------------------------------------

void AvgPool3::forward(std::span<const float>, const Tensor& in, Tensor& out, Workspace&) const {
  out.reset(in.shape);
  const auto H = static_cast<std::ptrdiff_t>(in.shape.h), W = static_cast<std::ptrdiff_t>(in.shape.w);
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float* s = in.channel(c);
    float* o = out.channel(c);
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        float acc = 0.0f;
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
          for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const auto yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < H && xx >= 0 && xx < W) acc += s[yy * W + xx];
          }
        }
        o[y * W + x] = acc / 9.0f;
      }
    }
  }
}

void AvgPool3::backward(std::span<const float>, const Tensor& in, const Tensor&, const Tensor& grad_out,
                        Tensor* grad_in, std::span<float>, Workspace&) const {
  if (!grad_in) return;
  grad_in->reset(in.shape);
  const auto H = static_cast<std::ptrdiff_t>(in.shape.h), W = static_cast<std::ptrdiff_t>(in.shape.w);
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float* g = grad_out.channel(c);
    float* gi = grad_in->channel(c);
    for (std::ptrdiff_t y = 0; y < H; ++y) {
      for (std::ptrdiff_t x = 0; x < W; ++x) {
        const float v = g[y * W + x] / 9.0f;
        for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
          for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
            const auto yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < H && xx >= 0 && xx < W) gi[yy * W + xx] += v;
          }
        }
      }
    }
  }
}

// ---- GlobalAvgPool ----------------------------------------------------------

void GlobalAvgPool::forward(std::span<const float>, const Tensor& in, Tensor& out, Workspace&) const {
  out.reset(output_shape(in.shape));
  const std::size_t hw = in.shape.h * in.shape.w;
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float* s = in.channel(c);
    double acc = 0.0;
    for (std::size_t i = 0; i < hw; ++i) acc += s[i];
    out.data[c] = static_cast<float>(acc / static_cast<double>(hw));
  }
}

void GlobalAvgPool::backward(std::span<const float>, const Tensor& in, const Tensor&, const Tensor& grad_out,
                             Tensor* grad_in, std::span<float>, Workspace&) const {
  if (!grad_in) return;
  grad_in->reset(in.shape);
  const std::size_t hw = in.shape.h * in.shape.w;
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float v = grad_out.data[c] / static_cast<float>(hw);
    std::fill(grad_in->channel(c), grad_in->channel(c) + hw, v);
  }
}

// ---- GlobalMaxPool ----------------------------------------------------------

void GlobalMaxPool::forward(std::span<const float>, const Tensor& in, Tensor& out, Workspace&) const {
  out.reset(output_shape(in.shape));
  const std::size_t hw = in.shape.h * in.shape.w;
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float* s = in.channel(c);
    out.data[c] = *std::max_element(s, s + hw);
  }
}

void GlobalMaxPool::backward(std::span<const float>, const Tensor& in, const Tensor&, const Tensor& grad_out,
                             Tensor* grad_in, std::span<float>, Workspace&) const {
  if (!grad_in) return;
  grad_in->reset(in.shape);
  const std::size_t hw = in.shape.h * in.shape.w;
  for (std::size_t c = 0; c < in.shape.c; ++c) {
    const float* s = in.channel(c);
    const auto arg = static_cast<std::size_t>(std::max_element(s, s + hw) - s);
    grad_in->channel(c)[arg] = grad_out.data[c];
  }
}

// ---- Linear -----------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out) : in_(in), out_(out) {}

Shape Linear::output_shape(Shape in) const {
  if (in.size() != in_) {
    throw DimensionError("linear expects " + std::to_string(in_) + " inputs, got " + std::to_string(in.size()));
  }
  return {out_, 1, 1};
}

void Linear::init(std::span<float> params, Rng& rng) const {
  const double stddev = std::sqrt(1.0 / static_cast<double>(in_));
  for (std::size_t i = 0; i < out_ * in_; ++i) params[i] = static_cast<float>(rng.normal(0.0, stddev));
  for (std::size_t i = out_ * in_; i < params.size(); ++i) params[i] = 0.0f;
}

void Linear::forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace&) const {
  out.reset(output_shape(in.shape));
  const float* w = params.data();
  const float* b = params.data() + out_ * in_;
  for (std::size_t o = 0; o < out_; ++o) {
    float acc = b[o];
    const float* row = w + o * in_;
    for (std::size_t i = 0; i < in_; ++i) acc += row[i] * in.data[i];
    out.data[o] = acc;
  }
}

void Linear::backward(std::span<const float> params, const Tensor& in, const Tensor&, const Tensor& grad_out,
                      Tensor* grad_in, std::span<float> grad_params, Workspace&) const {
  const float* w = params.data();
  float* gw = grad_params.data();
  float* gb = grad_params.data() + out_ * in_;
  if (grad_in) grad_in->reset(in.shape);
  for (std::size_t o = 0; o < out_; ++o) {
    const float g = grad_out.data[o];
    gb[o] += g;
    float* grow = gw + o * in_;
    for (std::size_t i = 0; i < in_; ++i) grow[i] += g * in.data[i];
    if (grad_in) {
      const float* row = w + o * in_;
      for (std::size_t i = 0; i < in_; ++i) grad_in->data[i] += g * row[i];
    }
  }
}

// ---- Sequential -------------------------------------------------------------

Shape Sequential::output_shape(Shape in) const {
  for (const auto& l : layers_) in = l->output_shape(in);
  return in;
}

std::size_t Sequential::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l->param_count();
  return n;
}

void Sequential::init(std::span<float> params, Rng& rng) const {
  std::size_t off = 0;
  for (const auto& l : layers_) {
    l->init(params.subspan(off, l->param_count()), rng);
    off += l->param_count();
  }
}

void Sequential::forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const {
  const std::size_t n = layers_.size();
  if (n == 0) {
    out = in;
    return;
  }
  if (ws.tensors.size() < n + 1) ws.tensors.resize(n + 1);
  std::size_t off = 0;
  const Tensor* cur = &in;
  for (std::size_t i = 0; i < n; ++i) {
    Tensor& dst = i + 1 == n ? out : ws.tensors[i];
    layers_[i]->forward(params.subspan(off, layers_[i]->param_count()), *cur, dst, ws.child(i));
    off += layers_[i]->param_count();
    cur = &dst;
  }
}

void Sequential::backward(std::span<const float> params, const Tensor& in, const Tensor& out,
                          const Tensor& grad_out, Tensor* grad_in, std::span<float> grad_params,
                          Workspace& ws) const {
  const std::size_t n = layers_.size();
  if (n == 0) {
    if (grad_in) *grad_in = grad_out;
    return;
  }
  std::vector<std::size_t> offsets(n);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    offsets[i] = off;
    off += layers_[i]->param_count();
  }
  // Two scratch gradients used alternately.
  Tensor scratch_a, scratch_b;
  const Tensor* g_cur = &grad_out;
  Tensor* bufs[2] = {&scratch_a, &scratch_b};
  int which = 0;
  for (std::size_t ii = n; ii-- > 0;) {
    const Tensor& layer_in = ii == 0 ? in : ws.tensors[ii - 1];
    const Tensor& layer_out = ii + 1 == n ? out : ws.tensors[ii];
    Tensor* gin = ii == 0 ? grad_in : bufs[which];
    layers_[ii]->backward(params.subspan(offsets[ii], layers_[ii]->param_count()), layer_in, layer_out, *g_cur,
                          gin, grad_params.subspan(offsets[ii], layers_[ii]->param_count()), ws.child(ii));
    if (ii > 0) {
      g_cur = bufs[which];
      which ^= 1;
    }
  }
}

std::size_t Sequential::depth() const {
  std::size_t d = 0;
  for (const auto& l : layers_) d += l->depth();
  return d;
}

bool Sequential::has_conv() const {
  return std::any_of(layers_.begin(), layers_.end(), [](const ModulePtr& l) { return l->has_conv(); });
}

// ---- Concat -----------------------------------------------------------------

Shape Concat::output_shape(Shape in) const {
  Shape out{0, in.h, in.w};
  for (const auto& b : branches_) {
    const Shape s = b->output_shape(in);
    if (s.h != in.h || s.w != in.w) throw DimensionError("concat branches must preserve spatial size");
    out.c += s.c;
  }
  return out;
}

std::size_t Concat::param_count() const {
  std::size_t n = 0;
  for (const auto& b : branches_) n += b->param_count();
  return n;
}

void Concat::init(std::span<float> params, Rng& rng) const {
  std::size_t off = 0;
  for (const auto& b : branches_) {
    b->init(params.subspan(off, b->param_count()), rng);
    off += b->param_count();
  }
}

void Concat::forward(std::span<const float> params, const Tensor& in, Tensor& out, Workspace& ws) const {
  const std::size_t nb = branches_.size();
  if (ws.tensors.size() < nb) ws.tensors.resize(nb);
  out.reset(output_shape(in.shape));
  std::size_t off = 0, ch = 0;
  for (std::size_t b = 0; b < nb; ++b) {
    branches_[b]->forward(params.subspan(off, branches_[b]->param_count()), in, ws.tensors[b], ws.child(b));
    off += branches_[b]->param_count();
    const Tensor& bo = ws.tensors[b];
    std::memcpy(out.channel(ch), bo.data.data(), bo.data.size() * sizeof(float));
    ch += bo.shape.c;
  }
}

void Concat::backward(std::span<const float> params, const Tensor& in, const Tensor&, const Tensor& grad_out,
                      Tensor* grad_in, std::span<float> grad_params, Workspace& ws) const {
  const std::size_t nb = branches_.size();
  if (grad_in) grad_in->reset(in.shape);
  std::size_t off = 0, ch = 0;
  Tensor g_branch, g_in_branch;
  for (std::size_t b = 0; b < nb; ++b) {
    const Tensor& bo = ws.tensors[b];
    g_branch.reset(bo.shape);
    std::memcpy(g_branch.data.data(), grad_out.channel(ch), bo.data.size() * sizeof(float));
    ch += bo.shape.c;
    const std::size_t np = branches_[b]->param_count();
    branches_[b]->backward(params.subspan(off, np), in, bo, g_branch, grad_in ? &g_in_branch : nullptr,
                           grad_params.subspan(off, np), ws.child(b));
    off += np;
    if (grad_in) {
      for (std::size_t i = 0; i < grad_in->data.size(); ++i) grad_in->data[i] += g_in_branch.data[i];
    }
  }
}

std::size_t Concat::depth() const {
  std::size_t d = 0;
  for (const auto& b : branches_) d = std::max(d, b->depth());
  return d;
}

bool Concat::has_conv() const {
  return std::any_of(branches_.begin(), branches_.end(), [](const ModulePtr& b) { return b->has_conv(); });
}

// ---- Network ----------------------------------------------------------------

Network::Network(Shape input, ModulePtr features, ModulePtr head)
    : input_(input), features_(std::move(features)), head_(std::move(head)) {
  feature_shape_ = features_->output_shape(input_);
  output_size_ = head_->output_shape(feature_shape_).size();
}

void Network::init(std::vector<float>& params, Rng& rng) const {
  params.assign(param_count(), 0.0f);
  std::span<float> all(params);
  features_->init(all.subspan(0, features_->param_count()), rng);
  head_->init(all.subspan(features_->param_count()), rng);
}

void Network::forward(std::span<const float> params, const Tensor& input, Pass& pass) const {
  if (!(input.shape == input_)) throw DimensionError("network input shape mismatch");
  const std::size_t fp = features_->param_count();
  features_->forward(params.subspan(0, fp), input, pass.features, pass.feature_ws);
  head_->forward(params.subspan(fp), pass.features, pass.logits, pass.head_ws);
}

void Network::backward(std::span<const float> params, const Tensor& input, Pass& pass, const Tensor& grad_logits,
                       std::span<float> grad_params, Tensor* grad_features) const {
  const std::size_t fp = features_->param_count();
  Tensor local;
  Tensor* gf = grad_features ? grad_features : &local;
  head_->backward(params.subspan(fp), pass.features, pass.logits, grad_logits, gf, grad_params.subspan(fp),
                  pass.head_ws);
  features_->backward(params.subspan(0, fp), input, pass.features, *gf, nullptr, grad_params.subspan(0, fp),
                      pass.feature_ws);
}

Tensor Network::feature_gradient(std::span<const float> params, Pass& pass, const Tensor& grad_logits) const {
  const std::size_t fp = features_->param_count();
  std::vector<float> scratch(head_->param_count(), 0.0f);
  Tensor gf;
  head_->backward(params.subspan(fp), pass.features, pass.logits, grad_logits, &gf, scratch, pass.head_ws);
  return gf;
}

namespace {

ModulePtr conv_relu(std::size_t in, std::size_t out, std::size_t k) {
  return std::make_shared<Sequential>(
      std::vector<ModulePtr>{std::make_shared<Conv2d>(in, out, k), std::make_shared<ReLU>()});
}

ModulePtr inception_block(std::size_t in, std::size_t out) {
  const std::size_t q = std::max<std::size_t>(1, out / 4);
  const std::size_t r = std::max<std::size_t>(1, out / 8);
  const std::size_t last = out - 3 * q;
  auto b1 = conv_relu(in, q, 1);
  auto b2 = std::make_shared<Sequential>(std::vector<ModulePtr>{conv_relu(in, r, 1), conv_relu(r, q, 3)});
  auto b3 = std::make_shared<Sequential>(
      std::vector<ModulePtr>{conv_relu(in, r, 1), conv_relu(r, q, 3), conv_relu(q, q, 3)});
  auto b4 = std::make_shared<Sequential>(std::vector<ModulePtr>{std::make_shared<AvgPool3>(), conv_relu(in, last, 1)});
  return std::make_shared<Concat>(std::vector<ModulePtr>{b1, b2, b3, b4});
}

}  // namespace

Network make_compact_cnn(std::size_t image_size, std::size_t outputs, std::size_t width) {
  if (image_size < 32 || image_size % 8 != 0) {
    throw DimensionError("compact backbone needs an image size >= 32 divisible by 8, got " +
                         std::to_string(image_size));
  }
  // Coordinate channels let position-specific findings survive global pooling;
  // max pooling keeps small findings from being averaged away.
  auto features = std::make_shared<Sequential>();
  features->add(std::make_shared<AddCoords>());
  features->add(std::make_shared<Conv2d>(3, width, 3));
  features->add(std::make_shared<ReLU>());
  features->add(std::make_shared<MaxPool2>());
  features->add(std::make_shared<Conv2d>(width, 2 * width, 3));
  features->add(std::make_shared<ReLU>());
  features->add(std::make_shared<MaxPool2>());
  features->add(std::make_shared<Conv2d>(2 * width, 4 * width, 3));
  features->add(std::make_shared<ReLU>());
  features->add(std::make_shared<MaxPool2>());
  features->add(std::make_shared<Conv2d>(4 * width, 4 * width, 3));
  features->add(std::make_shared<ReLU>());
  auto head = std::make_shared<Sequential>(
      std::vector<ModulePtr>{std::make_shared<GlobalMaxPool>(), std::make_shared<Linear>(4 * width, outputs)});
  return Network({1, image_size, image_size}, features, head);
}

Network make_inception(std::size_t image_size, std::size_t outputs, std::size_t width) {
  if (image_size < 64 || image_size % 16 != 0) {
    throw DimensionError("inception backbone needs an image size >= 64 divisible by 16, got " +
                         std::to_string(image_size));
  }
  auto features = std::make_shared<Sequential>();
  // Stem: five convolutions, two poolings.
  features->add(conv_relu(1, width, 3));
  features->add(conv_relu(width, width, 3));
  features->add(conv_relu(width, 2 * width, 3));
  features->add(std::make_shared<MaxPool2>());
  features->add(conv_relu(2 * width, 2 * width, 1));
  features->add(conv_relu(2 * width, 4 * width, 3));
  features->add(std::make_shared<MaxPool2>());
  std::size_t c = 4 * width;
  for (int block = 0; block < 12; ++block) {
    const std::size_t out = block < 4 ? 4 * width : (block < 8 ? 8 * width : 12 * width);
    features->add(inception_block(c, out));
    c = out;
    if (block == 3 || block == 7) features->add(std::make_shared<MaxPool2>());
  }
  auto head = std::make_shared<Sequential>(
      std::vector<ModulePtr>{std::make_shared<GlobalAvgPool>(), std::make_shared<Linear>(c, outputs)});
  return Network({1, image_size, image_size}, features, head);
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<float>& params, std::span<const float> grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double mhat = m_[i] / c1, vhat = v_[i] / c2;
    params[i] -= static_cast<float>(lr_ * mhat / (std::sqrt(vhat) + eps_));
  }
}

}  // namespace cbx::nn
