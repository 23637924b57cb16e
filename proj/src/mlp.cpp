#include "boxprune/mlp.hpp"

#include <cmath>

namespace boxprune {

Mlp::Mlp(int in_dim, const std::vector<int>& hidden, int out_dim, uint64_t seed)
    : in_dim_(in_dim), out_dim_(out_dim) {
  Rng rng(seed);
  int prev = in_dim;
  std::vector<int> dims = hidden;
  dims.push_back(out_dim);
  for (int d : dims) {
    Tensor w({prev, d});
    const real scale = real(std::sqrt(1.0 / double(prev)));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = scale * real(rng.normal());
    ws_.push_back(std::move(w));
    bs_.emplace_back(std::vector<int>{d});
    gws_.emplace_back(std::vector<int>{prev, d});
    gbs_.emplace_back(std::vector<int>{d});
    prev = d;
  }
}

Tensor Mlp::forward(const Tensor& x) {
  inputs_.clear();
  preacts_.clear();
  Tensor h = x;
  for (size_t layer = 0; layer < ws_.size(); ++layer) {
    inputs_.push_back(h);
    Tensor z = ops::dense(h, ws_[layer], bs_[layer]);
    if (layer + 1 < ws_.size()) {
      preacts_.push_back(z);
      Tensor a(z.shape());
      for (int64_t i = 0; i < z.numel(); ++i) a[i] = std::tanh(z[i]);
      h = std::move(a);
    } else {
      h = std::move(z);
    }
  }
  return h;
}

Tensor Mlp::backward(const Tensor& dy) {
  if (inputs_.size() != ws_.size()) throw UsageError("mlp backward before forward");
  Tensor grad = dy;
  for (size_t layer = ws_.size(); layer-- > 0;) {
    if (layer + 1 < ws_.size()) {
      // through tanh: dz = dy * (1 - tanh(z)^2)
      const Tensor& z = preacts_[layer];
      for (int64_t i = 0; i < grad.numel(); ++i) {
        const real t = std::tanh(z[i]);
        grad[i] *= real(1) - t * t;
      }
    }
    Tensor dx(inputs_[layer].shape());
    ops::dense_backward(inputs_[layer], ws_[layer], grad, &dx, &gws_[layer],
                        &gbs_[layer]);
    grad = std::move(dx);
  }
  return grad;
}

void Mlp::zero_grads() {
  for (auto& g : gws_) g.fill(0);
  for (auto& g : gbs_) g.fill(0);
}

std::vector<Tensor*> Mlp::params() {
  std::vector<Tensor*> out;
  for (size_t i = 0; i < ws_.size(); ++i) {
    out.push_back(&ws_[i]);
    out.push_back(&bs_[i]);
  }
  return out;
}

std::vector<Tensor*> Mlp::grads() {
  std::vector<Tensor*> out;
  for (size_t i = 0; i < gws_.size(); ++i) {
    out.push_back(&gws_[i]);
    out.push_back(&gbs_[i]);
  }
  return out;
}

std::vector<const Tensor*> Mlp::params() const {
  std::vector<const Tensor*> out;
  for (size_t i = 0; i < ws_.size(); ++i) {
    out.push_back(&ws_[i]);
    out.push_back(&bs_[i]);
  }
  return out;
}

std::map<std::string, Tensor> Mlp::state() const {
  std::map<std::string, Tensor> s;
  for (size_t i = 0; i < ws_.size(); ++i) {
    s["w" + std::to_string(i)] = ws_[i];
    s["b" + std::to_string(i)] = bs_[i];
  }
  return s;
}

void Mlp::load_state(const std::map<std::string, Tensor>& state) {
  for (size_t i = 0; i < ws_.size(); ++i) {
    const Tensor& w = state.at("w" + std::to_string(i));
    const Tensor& b = state.at("b" + std::to_string(i));
    if (!w.same_shape(ws_[i]) || !b.same_shape(bs_[i])) {
      throw ShapeError("mlp state shape mismatch at layer " + std::to_string(i));
    }
    ws_[i] = w;
    bs_[i] = b;
  }
}

Adam::Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2,
           double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Tensor* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step(const std::vector<Tensor*>& grads) {
  if (grads.size() != params_.size()) throw UsageError("adam: grad count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, double(t_));
  const double bc2 = 1.0 - std::pow(beta2_, double(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = *params_[i];
    const Tensor& g = *grads[i];
    for (int64_t j = 0; j < p.numel(); ++j) {
      m_[i][j] = real(beta1_) * m_[i][j] + real(1 - beta1_) * g[j];
      v_[i][j] = real(beta2_) * v_[i][j] + real(1 - beta2_) * g[j] * g[j];
      const double mhat = double(m_[i][j]) / bc1;
      const double vhat = double(v_[i][j]) / bc2;
      p[j] -= real(lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

}  // namespace boxprune
