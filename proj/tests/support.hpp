#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "tggat/env.hpp"
#include "tggat/geo.hpp"
#include "tggat/model.hpp"

namespace tggat::testing {

using nx::Matrix;

inline bool inside_convex(const geo::ViewArea& a, const geo::Vec2& p) {
  for (std::size_t i = 0; i < 4; ++i) {
    const geo::Vec2 e = a.corners[(i + 1) % 4] - a.corners[i];
    const geo::Vec2 d = p - a.corners[i];
    if (e.x() * d.y() - e.y() * d.x() < 0.0) return false;
  }
  return true;
}

// Jittered raster over the joint bounding box: one uniform sample per cell of
// a side x side lattice, IoU = |A and B| / |A or B| by counting.
inline double raster_iou(const geo::ViewArea& a, const geo::ViewArea& b, int side, std::uint64_t seed) {
  double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300;
  for (const auto* area : {&a, &b}) {
    for (const geo::Vec2& c : area->corners) {
      lo_x = std::min(lo_x, c.x());
      lo_y = std::min(lo_y, c.y());
      hi_x = std::max(hi_x, c.x());
      hi_y = std::max(hi_y, c.y());
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double cw = (hi_x - lo_x) / side, ch = (hi_y - lo_y) / side;
  long both = 0, either = 0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const geo::Vec2 p(lo_x + (i + u(rng)) * cw, lo_y + (j + u(rng)) * ch);
      const bool ia = inside_convex(a, p), ib = inside_convex(b, p);
      both += ia && ib;
      either += ia || ib;
    }
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

inline geo::ViewArea square(double cx, double cy, double half, double theta) {
  return geo::view_area_from_state(geo::DroneState{{cx, cy, half}, geo::Heading(theta)}, std::numbers::pi / 2.0);
}

inline geo::ViewArea box(double x0, double y0, double x1, double y1) {
  return geo::ViewArea{{geo::Vec2(x0, y0), geo::Vec2(x1, y0), geo::Vec2(x1, y1), geo::Vec2(x0, y1)}};
}

inline gat::ModelConfig tiny_config(nx::Index vocab_size) {
  gat::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.text_layers = 1;
  cfg.mhca_layers = 1;
  cfg.gat_layers = 2;
  cfg.ffn_mult = 2;
  cfg.vocab_size = vocab_size;
  cfg.max_text_len = 24;
  cfg.grid = 8;
  cfg.channels = env::kChannels;
  cfg.max_steps = 10;
  return cfg;
}

inline Matrix random_matrix(std::mt19937_64& rng, nx::Index rows, nx::Index cols, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (nx::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

// --- plain Eigen transformer used as an independent reference --------------------

inline Matrix ref_layer_norm(const Matrix& x, const nx::LayerNorm& ln) {
  Matrix out(x.rows(), x.cols());
  for (nx::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const Eigen::RowVectorXd c = x.row(r).array() - mu;
    const double var = c.squaredNorm() / static_cast<double>(x.cols());
    out.row(r) = (c / std::sqrt(var + ln.eps)).cwiseProduct(ln.gain.value().row(0)) + ln.bias.value().row(0);
  }
  return out;
}

inline Matrix ref_linear(const Matrix& x, const nx::Linear& l) {
  Matrix y = x * l.weight.value();
  y.rowwise() += l.bias.value().row(0);
  return y;
}

inline Matrix ref_gelu(const Matrix& x) {
  const double k = std::sqrt(2.0 / std::numbers::pi);
  return x.unaryExpr([k](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v))); });
}

// `bias[h]` is added to head h's logits when non-empty.
inline Matrix ref_attention(const Matrix& x, const nx::MultiHeadAttention& attn, const std::vector<Matrix>& bias) {
  const Matrix q = ref_linear(x, attn.q_proj), k = ref_linear(x, attn.k_proj), v = ref_linear(x, attn.v_proj);
  const nx::Index hd = attn.head_dim();
  Matrix merged(x.rows(), q.cols());
  for (int h = 0; h < attn.heads(); ++h) {
    Matrix s = q.middleCols(h * hd, hd) * k.middleCols(h * hd, hd).transpose() / std::sqrt(static_cast<double>(hd));
    if (!bias.empty()) s += bias[static_cast<std::size_t>(h)];
    for (nx::Index r = 0; r < s.rows(); ++r) {
      const double m = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - m).exp();
      s.row(r) /= s.row(r).sum();
    }
    merged.middleCols(h * hd, hd) = s * v.middleCols(h * hd, hd);
  }
  return ref_linear(merged, attn.out_proj);
}

inline Matrix ref_transformer_layer(const Matrix& x, const nx::TransformerLayer& layer, const std::vector<Matrix>& bias) {
  const Matrix h = x + ref_attention(ref_layer_norm(x, layer.ln_attn), layer.attn, bias);
  return h + ref_linear(ref_gelu(ref_linear(ref_layer_norm(h, layer.ln_ffn), layer.ffn.up)), layer.ffn.down);
}

// Fused sequence through the GAT stack and final norm. Text tokens come first,
// then t image and t direction tokens; history tokens get w_e*|p_i - p_j| + b_e.
inline Matrix ref_gat_stack(const gat::TgGatModel& model, const Matrix& fused, nx::Index text_valid,
                            const std::vector<geo::Vec2>& locations, bool with_bias = true) {
  const auto t = static_cast<nx::Index>(locations.size());
  const nx::Index n = fused.rows();
  Matrix x = fused;
  for (const gat::GatLayer& layer : model.gat_layers()) {
    std::vector<Matrix> bias;
    for (int h = 0; with_bias && h < layer.block.attn.heads(); ++h) {
      Matrix b = Matrix::Zero(n, n);
      const double w = layer.w_e.value()(0, h), c = layer.b_e.value()(0, h);
      for (nx::Index i = 0; i < 2 * t; ++i) {
        for (nx::Index j = 0; j < 2 * t; ++j) {
          const double dist = (locations[static_cast<std::size_t>(i % t)] - locations[static_cast<std::size_t>(j % t)]).norm();
          b(text_valid + i, text_valid + j) = w * dist + c;
        }
      }
      bias.push_back(b);
    }
    x = ref_transformer_layer(x, layer.block, bias);
  }
  return ref_layer_norm(x, model.final_norm());
}

}  // namespace tggat::testing
