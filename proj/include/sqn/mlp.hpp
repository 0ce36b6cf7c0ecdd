#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "sqn/rng.hpp"

namespace sqn {

struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> a;

  static Matrix zeros(int r, int c) {
    Matrix m;
    m.rows = r;
    m.cols = c;
    m.a.assign(static_cast<std::size_t>(r) * c, 0.0);
    return m;
  }
  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
};

struct Layer {
  Matrix w;  // out x in
  std::vector<double> b;
};

inline double symlog(double x) { return x >= 0 ? std::log1p(x) : -std::log1p(-x); }

inline std::vector<double> symlog(const std::vector<double>& xs) {
  std::vector<double> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = symlog(xs[i]);
  return out;
}

// affine-tanh-...-affine network, double precision throughout
struct Mlp {
  std::vector<Layer> layers;

  static Mlp make(int input, const std::vector<int>& hidden, int output) {
    Mlp net;
    int in = input;
    for (int h : hidden) {
      net.layers.push_back({Matrix::zeros(h, in), std::vector<double>(h, 0.0)});
      in = h;
    }
    net.layers.push_back({Matrix::zeros(output, in), std::vector<double>(output, 0.0)});
    return net;
  }

  int input_dim() const { return layers.front().w.cols; }
  int output_dim() const { return layers.back().w.rows; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.a.size() + l.b.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(param_count());
    for (const auto& l : layers) {
      out.insert(out.end(), l.w.a.begin(), l.w.a.end());
      out.insert(out.end(), l.b.begin(), l.b.end());
    }
    return out;
  }

  void unflatten(const std::vector<double>& flat) {
    if (flat.size() != param_count())
      throw std::invalid_argument("unflatten: parameter count mismatch");
    std::size_t pos = 0;
    for (auto& l : layers) {
      std::copy(flat.begin() + pos, flat.begin() + pos + l.w.a.size(), l.w.a.begin());
      pos += l.w.a.size();
      std::copy(flat.begin() + pos, flat.begin() + pos + l.b.size(), l.b.begin());
      pos += l.b.size();
    }
  }
};

struct Activations {
  // h[0] = input, h[i] = post-activation output of layer i (raw for the last)
  std::vector<std::vector<double>> h;
};

inline const std::vector<double>& forward_cached(const Mlp& net,
                                                 const std::vector<double>& x,
                                                 Activations& acts) {
  if (static_cast<int>(x.size()) != net.input_dim())
    throw std::invalid_argument("forward: input width mismatch");
  acts.h.assign(net.layers.size() + 1, {});
  acts.h[0] = x;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const Layer& l = net.layers[li];
    const std::vector<double>& in = acts.h[li];
    std::vector<double> out(l.b);
    for (int r = 0; r < l.w.rows; ++r) {
      double acc = out[r];
      const double* wr = &l.w.a[static_cast<std::size_t>(r) * l.w.cols];
      for (int c = 0; c < l.w.cols; ++c) acc += wr[c] * in[c];
      out[r] = acc;
    }
    if (li + 1 < net.layers.size())
      for (auto& v : out) v = std::tanh(v);
    acts.h[li + 1] = std::move(out);
  }
  return acts.h.back();
}

inline std::vector<double> forward(const Mlp& net, const std::vector<double>& x) {
  Activations acts;
  return forward_cached(net, x, acts);
}

inline std::vector<double> flatten_layers(const std::vector<Layer>& layers) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.w.a.begin(), l.w.a.end());
    out.insert(out.end(), l.b.begin(), l.b.end());
  }
  return out;
}

inline void unflatten_layers(std::vector<Layer>& layers,
                             const std::vector<double>& flat) {
  std::size_t pos = 0;
  for (auto& l : layers) {
    if (pos + l.w.a.size() + l.b.size() > flat.size())
      throw std::invalid_argument("unflatten_layers: parameter count mismatch");
    std::copy(flat.begin() + pos, flat.begin() + pos + l.w.a.size(),
              l.w.a.begin());
    pos += l.w.a.size();
    std::copy(flat.begin() + pos, flat.begin() + pos + l.b.size(), l.b.begin());
    pos += l.b.size();
  }
  if (pos != flat.size())
    throw std::invalid_argument("unflatten_layers: parameter count mismatch");
}

struct GradBundle {
  std::vector<Layer> g;

  static GradBundle like(const Mlp& net) {
    GradBundle b;
    for (const auto& l : net.layers)
      b.g.push_back({Matrix::zeros(l.w.rows, l.w.cols),
                     std::vector<double>(l.b.size(), 0.0)});
    return b;
  }

  void zero() {
    for (auto& l : g) {
      std::fill(l.w.a.begin(), l.w.a.end(), 0.0);
      std::fill(l.b.begin(), l.b.end(), 0.0);
    }
  }

  void scale(double s) {
    for (auto& l : g) {
      for (auto& v : l.w.a) v *= s;
      for (auto& v : l.b) v *= s;
    }
  }

  void add(const GradBundle& o) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = 0; j < g[i].w.a.size(); ++j) g[i].w.a[j] += o.g[i].w.a[j];
      for (std::size_t j = 0; j < g[i].b.size(); ++j) g[i].b[j] += o.g[i].b[j];
    }
  }

  bool finite() const {
    for (const auto& l : g) {
      for (double v : l.w.a)
        if (!std::isfinite(v)) return false;
      for (double v : l.b)
        if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

// Accumulates d(output . dout)/dparams into `into`; optionally also the
// gradient w.r.t. the input.
inline void backward(const Mlp& net, const Activations& acts,
                     const std::vector<double>& dout, GradBundle& into,
                     std::vector<double>* dinput = nullptr) {
  if (static_cast<int>(dout.size()) != net.output_dim())
    throw std::invalid_argument("backward: output grad width mismatch");
  std::vector<double> delta = dout;
  for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
    const Layer& l = net.layers[li];
    const std::vector<double>& in = acts.h[li];
    Layer& gl = into.g[li];
    for (int r = 0; r < l.w.rows; ++r) {
      gl.b[r] += delta[r];
      double* gw = &gl.w.a[static_cast<std::size_t>(r) * l.w.cols];
      for (int c = 0; c < l.w.cols; ++c) gw[c] += delta[r] * in[c];
    }
    if (li == 0 && dinput == nullptr) break;
    std::vector<double> prev(l.w.cols, 0.0);
    for (int r = 0; r < l.w.rows; ++r) {
      const double* wr = &l.w.a[static_cast<std::size_t>(r) * l.w.cols];
      const double d = delta[r];
      for (int c = 0; c < l.w.cols; ++c) prev[c] += wr[c] * d;
    }
    if (li > 0) {
      // in = tanh output of layer li-1
      for (int c = 0; c < l.w.cols; ++c) prev[c] *= 1.0 - in[c] * in[c];
    }
    delta = std::move(prev);
    if (li == 0 && dinput) *dinput = delta;
  }
}

struct AdamState {
  std::vector<Layer> m, v;
  long long step = 0;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState like(const Mlp& net, double lr = 3e-4) {
    AdamState s;
    s.lr = lr;
    for (const auto& l : net.layers) {
      s.m.push_back({Matrix::zeros(l.w.rows, l.w.cols),
                     std::vector<double>(l.b.size(), 0.0)});
      s.v.push_back({Matrix::zeros(l.w.rows, l.w.cols),
                     std::vector<double>(l.b.size(), 0.0)});
    }
    return s;
  }
};

// gradient-descent update; throws before touching parameters if any gradient
// entry is non-finite
inline void opt_step(Mlp& net, const GradBundle& grads, AdamState& opt) {
  if (!grads.finite())
    throw std::runtime_error("non-finite gradient in optimizer step");
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    auto update = [&](double& p, double& m, double& v, double g) {
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    };
    Layer& l = net.layers[li];
    for (std::size_t j = 0; j < l.w.a.size(); ++j)
      update(l.w.a[j], opt.m[li].w.a[j], opt.v[li].w.a[j], grads.g[li].w.a[j]);
    for (std::size_t j = 0; j < l.b.size(); ++j)
      update(l.b[j], opt.m[li].b[j], opt.v[li].b[j], grads.g[li].b[j]);
  }
}

namespace detail {

// orthonormalize the longer dimension via modified Gram-Schmidt
inline void orthogonalize(Matrix& w, RandomStream& rng, double gain) {
  const bool by_cols = w.rows >= w.cols;
  const int nvec = by_cols ? w.cols : w.rows;
  const int dim = by_cols ? w.rows : w.cols;
  auto get = [&](int v, int d) -> double& { return by_cols ? w.at(d, v) : w.at(v, d); };

  for (int v = 0; v < nvec; ++v) {
    for (int attempt = 0;; ++attempt) {
      for (int d = 0; d < dim; ++d) get(v, d) = rng.normal();
      for (int u = 0; u < v; ++u) {
        double dot = 0;
        for (int d = 0; d < dim; ++d) dot += get(v, d) * get(u, d);
        for (int d = 0; d < dim; ++d) get(v, d) -= dot * get(u, d);
      }
      double norm = 0;
      for (int d = 0; d < dim; ++d) norm += get(v, d) * get(v, d);
      norm = std::sqrt(norm);
      if (norm > 1e-8) {
        for (int d = 0; d < dim; ++d) get(v, d) /= norm;
        break;
      }
      if (attempt > 16) throw std::runtime_error("orthogonal init failed");
    }
  }
  for (double& v : w.a) v *= gain;
}

}  // namespace detail

// orthogonal hidden layers, scaled output layer, zero biases
inline void init_orthogonal(Mlp& net, RandomStream& rng, double hidden_gain,
                            double out_gain) {
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    Layer& l = net.layers[li];
    for (auto& v : l.w.a) v = 0.0;
    const double gain = li + 1 == net.layers.size() ? out_gain : hidden_gain;
    detail::orthogonalize(l.w, rng, gain);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

}  // namespace sqn
