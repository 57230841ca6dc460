#include "vdls/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

namespace vdls {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;
using detail::make_result;
using detail::Node;

Tensor wrap(std::shared_ptr<Node> node) { return Tensor::from_node(std::move(node)); }

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

int normalize_axis(int axis, int rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) throw std::invalid_argument("axis out of range");
  return axis;
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// For pooling/upsampling: for each flat index of the fine tensor, the flat
// index of the coarse tensor it belongs to.
std::vector<int64_t> coarse_index_map(const Shape& fine, const Shape& coarse, const std::vector<int64_t>& divisor) {
  const auto total = shape_numel(fine);
  const auto cst = strides_of(coarse);
  const size_t r = fine.size();
  std::vector<int64_t> map(static_cast<size_t>(total));
  std::vector<int64_t> idx(r, 0);
  const int64_t inner = fine[r - 1];
  const int64_t inner_div = divisor[r - 1];
  for (int64_t flat = 0; flat < total; flat += inner) {
    int64_t base = 0;
    for (size_t a = 0; a + 1 < r; ++a) base += (idx[a] / divisor[a]) * cst[a];
    for (int64_t k = 0; k < inner; ++k) map[static_cast<size_t>(flat + k)] = base + k / inner_div;
    for (int a = static_cast<int>(r) - 2; a >= 0; --a) {
      if (++idx[a] < fine[a]) break;
      idx[a] = 0;
    }
  }
  return map;
}

// Spatial geometry shared by the 1D and 3D convolutions. A 1D signal is the
// degenerate volume 1x1xL with kernel 1x1xK.
struct ConvGeometry {
  int64_t batch = 0, c_in = 0, c_out = 0;
  int64_t d[3] = {1, 1, 1};
  int64_t k[3] = {1, 1, 1};
  int64_t positions() const { return d[0] * d[1] * d[2]; }
  int64_t taps() const { return k[0] * k[1] * k[2]; }
};

// cols is [(c_in*taps) x (batch*positions)] row-major.
void im2col(const float* in, const ConvGeometry& g, float* cols) {
  const int64_t P = g.positions();
  const int64_t NP = g.batch * P;
  const int64_t taps = g.taps();
  for (int64_t ci = 0; ci < g.c_in; ++ci) {
    for (int64_t t0 = 0; t0 < g.k[0]; ++t0) {
      for (int64_t t1 = 0; t1 < g.k[1]; ++t1) {
        for (int64_t t2 = 0; t2 < g.k[2]; ++t2) {
          const int64_t tap = (t0 * g.k[1] + t1) * g.k[2] + t2;
          float* row = cols + (ci * taps + tap) * NP;
          const int64_t o0 = t0 - g.k[0] / 2, o1 = t1 - g.k[1] / 2, o2 = t2 - g.k[2] / 2;
          const int64_t z_lo = std::max<int64_t>(0, -o2), z_hi = std::min(g.d[2], g.d[2] - o2);
          for (int64_t n = 0; n < g.batch; ++n) {
            const float* src = in + (n * g.c_in + ci) * P;
            float* dst = row + n * P;
            for (int64_t x = 0; x < g.d[0]; ++x) {
              const int64_t sx = x + o0;
              for (int64_t y = 0; y < g.d[1]; ++y) {
                const int64_t sy = y + o1;
                float* out = dst + (x * g.d[1] + y) * g.d[2];
                if (sx < 0 || sx >= g.d[0] || sy < 0 || sy >= g.d[1] || z_lo >= z_hi) {
                  std::fill(out, out + g.d[2], 0.0f);
                  continue;
                }
                const float* s = src + (sx * g.d[1] + sy) * g.d[2];
                std::fill(out, out + z_lo, 0.0f);
                std::memcpy(out + z_lo, s + z_lo + o2, static_cast<size_t>(z_hi - z_lo) * sizeof(float));
                std::fill(out + z_hi, out + g.d[2], 0.0f);
              }
            }
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, const ConvGeometry& g, float* grad_in) {
  const int64_t P = g.positions();
  const int64_t NP = g.batch * P;
  const int64_t taps = g.taps();
  for (int64_t ci = 0; ci < g.c_in; ++ci) {
    for (int64_t t0 = 0; t0 < g.k[0]; ++t0) {
      for (int64_t t1 = 0; t1 < g.k[1]; ++t1) {
        for (int64_t t2 = 0; t2 < g.k[2]; ++t2) {
          const int64_t tap = (t0 * g.k[1] + t1) * g.k[2] + t2;
          const float* row = cols + (ci * taps + tap) * NP;
          const int64_t o0 = t0 - g.k[0] / 2, o1 = t1 - g.k[1] / 2, o2 = t2 - g.k[2] / 2;
          const int64_t z_lo = std::max<int64_t>(0, -o2), z_hi = std::min(g.d[2], g.d[2] - o2);
          for (int64_t n = 0; n < g.batch; ++n) {
            float* dst = grad_in + (n * g.c_in + ci) * P;
            const float* src = row + n * P;
            for (int64_t x = 0; x < g.d[0]; ++x) {
              const int64_t sx = x + o0;
              if (sx < 0 || sx >= g.d[0]) continue;
              for (int64_t y = 0; y < g.d[1]; ++y) {
                const int64_t sy = y + o1;
                if (sy < 0 || sy >= g.d[1]) continue;
                const float* c = src + (x * g.d[1] + y) * g.d[2];
                float* o = dst + (sx * g.d[1] + sy) * g.d[2] + o2;
                for (int64_t z = z_lo; z < z_hi; ++z) o[z] += c[z];
              }
            }
          }
        }
      }
    }
  }
}

Tensor conv_impl(const Tensor& input, const Tensor& weight, const Tensor& bias, const ConvGeometry& g,
                 const Shape& out_shape) {
  const int64_t P = g.positions();
  const int64_t NP = g.batch * P;
  const int64_t rows = g.c_in * g.taps();
  auto cols = std::make_shared<std::vector<float>>(static_cast<size_t>(rows * NP));
  im2col(input.values().data(), g, cols->data());

  RowMatrix out_mat(g.c_out, NP);
  ConstMapMatrix w(weight.values().data(), g.c_out, rows);
  ConstMapMatrix c(cols->data(), rows, NP);
  out_mat.noalias() = w * c;

  std::vector<float> out(static_cast<size_t>(g.batch * g.c_out * P));
  const float* b = bias.values().data();
  for (int64_t n = 0; n < g.batch; ++n) {
    for (int64_t co = 0; co < g.c_out; ++co) {
      const float* src = out_mat.data() + co * NP + n * P;
      float* dst = out.data() + (n * g.c_out + co) * P;
      const float bv = b[co];
      for (int64_t p = 0; p < P; ++p) dst[p] = src[p] + bv;
    }
  }

  auto node = make_result(out_shape, std::move(out), {input, weight, bias});
  if (node->requires_grad) {
    Node* in_n = input.node();
    Node* w_n = weight.node();
    Node* b_n = bias.node();
    node->backward = [g, cols, in_n, w_n, b_n, P, NP, rows](Node& self) {
      RowMatrix dmat(g.c_out, NP);
      for (int64_t n = 0; n < g.batch; ++n) {
        for (int64_t co = 0; co < g.c_out; ++co) {
          std::memcpy(dmat.data() + co * NP + n * P, self.grad.data() + (n * g.c_out + co) * P,
                      static_cast<size_t>(P) * sizeof(float));
        }
      }
      ConstMapMatrix c(cols->data(), rows, NP);
      if (w_n->requires_grad) {
        MapMatrix dw(w_n->grad_data(), g.c_out, rows);
        dw.noalias() += dmat * c.transpose();
      }
      if (b_n->requires_grad) {
        float* db = b_n->grad_data();
        for (int64_t co = 0; co < g.c_out; ++co) db[co] += dmat.row(co).sum();
      }
      if (in_n->requires_grad) {
        ConstMapMatrix w(w_n->value.data(), g.c_out, rows);
        RowMatrix dcols(rows, NP);
        dcols.noalias() = w.transpose() * dmat;
        col2im_add(dcols.data(), g, in_n->grad_data());
      }
    };
  }
  return wrap(std::move(node));
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.vec());
  const auto bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto node = make_result(a.shape(), std::move(out), {a, b});
  if (node->requires_grad) {
    Node* an = a.node();
    Node* bn = b.node();
    node->backward = [an, bn](Node& self) {
      for (Node* t : {an, bn}) {
        if (!t->requires_grad) continue;
        float* g = t->grad_data();
        for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    };
  }
  return wrap(std::move(node));
}

Tensor scale(const Tensor& x, float factor) {
  std::vector<float> out(x.vec());
  for (auto& v : out) v *= factor;
  auto node = make_result(x.shape(), std::move(out), {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn, factor](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += factor * self.grad[i];
    };
  }
  return wrap(std::move(node));
}

Tensor affine(const Tensor& x, std::span<const float> scale_v, std::span<const float> shift_v) {
  const int64_t last = x.rank() == 0 ? 1 : x.dim(-1);
  auto ok = [last](size_t n) { return n == 1 || static_cast<int64_t>(n) == last; };
  if (!ok(scale_v.size()) || !ok(shift_v.size())) {
    throw std::invalid_argument("affine: scale/shift must have 1 or " + std::to_string(last) + " entries");
  }
  std::vector<float> sc(static_cast<size_t>(last)), sh(static_cast<size_t>(last));
  for (int64_t i = 0; i < last; ++i) {
    sc[i] = scale_v.size() == 1 ? scale_v[0] : scale_v[i];
    sh[i] = shift_v.size() == 1 ? shift_v[0] : shift_v[i];
  }
  std::vector<float> out(x.vec());
  for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] * sc[i % last] + sh[i % last];
  auto node = make_result(x.shape(), std::move(out), {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn, sc, last](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += sc[i % last] * self.grad[i];
    };
  }
  return wrap(std::move(node));
}

Tensor relu(const Tensor& x) {
  std::vector<float> out(x.vec());
  for (auto& v : out) v = v > 0.0f ? v : 0.0f;
  auto node = make_result(x.shape(), std::move(out), {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        if (self.value[i] > 0.0f) g[i] += self.grad[i];
      }
    };
  }
  return wrap(std::move(node));
}

Tensor tanh(const Tensor& x) {
  std::vector<float> out(x.vec());
  for (auto& v : out) v = std::tanh(v);
  auto node = make_result(x.shape(), std::move(out), {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) {
        const float y = self.value[i];
        g[i] += (1.0f - y * y) * self.grad[i];
      }
    };
  }
  return wrap(std::move(node));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw std::invalid_argument("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  auto node = make_result(std::move(shape), x.vec(), {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    };
  }
  return wrap(std::move(node));
}

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
  const int r = x.rank();
  if (static_cast<int>(perm.size()) != r) throw std::invalid_argument("permute: rank mismatch");
  std::vector<bool> used(static_cast<size_t>(r), false);
  Shape out_shape(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int p = perm[static_cast<size_t>(i)];
    if (p < 0 || p >= r || used[p]) throw std::invalid_argument("permute: invalid permutation");
    used[p] = true;
    out_shape[i] = x.shape()[p];
  }
  const auto in_st = strides_of(x.shape());
  // source flat index for every output element
  auto src = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(x.numel()));
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  for (int64_t flat = 0; flat < x.numel(); ++flat) {
    int64_t s = 0;
    for (int a = 0; a < r; ++a) s += idx[a] * in_st[perm[a]];
    (*src)[flat] = s;
    for (int a = r - 1; a >= 0; --a) {
      if (++idx[a] < out_shape[a]) break;
      idx[a] = 0;
    }
  }
  std::vector<float> out(static_cast<size_t>(x.numel()));
  const auto xv = x.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[(*src)[i]];
  auto node = make_result(out_shape, std::move(out), {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn, src](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < self.grad.size(); ++i) g[(*src)[i]] += self.grad[i];
    };
  }
  return wrap(std::move(node));
}

// ---------------------------------------------------------------------------

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() == 2) {
    auto out = conv1d(reshape(input, {1, input.dim(0), input.dim(1)}), weight, bias);
    return reshape(out, {out.dim(1), out.dim(2)});
  }
  if (input.rank() != 3) throw std::invalid_argument("conv1d: input must be [N,C,L], got " + shape_str(input.shape()));
  if (weight.rank() != 3 || weight.dim(2) % 2 == 0) {
    throw std::invalid_argument("conv1d: weight must be [C_out,C_in,K] with odd K, got " + shape_str(weight.shape()));
  }
  if (weight.dim(1) != input.dim(1)) {
    throw std::invalid_argument("conv1d: input has " + std::to_string(input.dim(1)) + " channels but weight expects " +
                                std::to_string(weight.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) throw std::invalid_argument("conv1d: bias must be [C_out]");
  ConvGeometry g;
  g.batch = input.dim(0);
  g.c_in = input.dim(1);
  g.c_out = weight.dim(0);
  g.d[2] = input.dim(2);
  g.k[2] = weight.dim(2);
  return conv_impl(input, weight, bias, g, {g.batch, g.c_out, g.d[2]});
}

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() == 4) {
    auto out = conv3d(reshape(input, {1, input.dim(0), input.dim(1), input.dim(2), input.dim(3)}), weight, bias);
    return reshape(out, {out.dim(1), out.dim(2), out.dim(3), out.dim(4)});
  }
  if (input.rank() != 5) {
    throw std::invalid_argument("conv3d: input must be [N,C,D1,D2,D3], got " + shape_str(input.shape()));
  }
  if (weight.rank() != 5 || weight.dim(2) % 2 == 0 || weight.dim(2) != weight.dim(3) || weight.dim(2) != weight.dim(4)) {
    throw std::invalid_argument("conv3d: weight must be [C_out,C_in,K,K,K] with odd K, got " +
                                shape_str(weight.shape()));
  }
  if (weight.dim(1) != input.dim(1)) {
    throw std::invalid_argument("conv3d: input has " + std::to_string(input.dim(1)) + " channels but weight expects " +
                                std::to_string(weight.dim(1)));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) throw std::invalid_argument("conv3d: bias must be [C_out]");
  ConvGeometry g;
  g.batch = input.dim(0);
  g.c_in = input.dim(1);
  g.c_out = weight.dim(0);
  for (int a = 0; a < 3; ++a) {
    g.d[a] = input.dim(2 + a);
    g.k[a] = weight.dim(2 + a);
  }
  return conv_impl(input, weight, bias, g, {g.batch, g.c_out, g.d[0], g.d[1], g.d[2]});
}

Tensor avg_pool(const Tensor& input, int factor, const std::vector<int>& axes) {
  if (factor < 1) throw std::invalid_argument("avg_pool: factor must be >= 1");
  const Shape& in_shape = input.shape();
  Shape out_shape = in_shape;
  std::vector<int64_t> div(in_shape.size(), 1);
  for (int a : axes) {
    const int ax = normalize_axis(a, input.rank());
    if (in_shape[ax] % factor != 0) {
      throw std::invalid_argument("avg_pool: extent " + std::to_string(in_shape[ax]) + " on axis " +
                                  std::to_string(ax) + " not divisible by " + std::to_string(factor));
    }
    out_shape[ax] = in_shape[ax] / factor;
    div[ax] = factor;
  }
  float window = 1.0f;
  for (auto d : div) window *= static_cast<float>(d);
  const float inv = 1.0f / window;
  auto map = std::make_shared<std::vector<int64_t>>(coarse_index_map(in_shape, out_shape, div));
  std::vector<float> out(static_cast<size_t>(shape_numel(out_shape)), 0.0f);
  const auto xv = input.values();
  for (size_t i = 0; i < map->size(); ++i) out[(*map)[i]] += xv[i];
  for (auto& v : out) v *= inv;
  auto node = make_result(out_shape, std::move(out), {input});
  if (node->requires_grad) {
    Node* xn = input.node();
    node->backward = [xn, map, inv](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < map->size(); ++i) g[i] += self.grad[(*map)[i]] * inv;
    };
  }
  return wrap(std::move(node));
}

Tensor nn_upsample(const Tensor& input, int factor, const std::vector<int>& axes) {
  if (factor < 1) throw std::invalid_argument("nn_upsample: factor must be >= 1");
  const Shape& in_shape = input.shape();
  Shape out_shape = in_shape;
  std::vector<int64_t> div(in_shape.size(), 1);
  for (int a : axes) {
    const int ax = normalize_axis(a, input.rank());
    out_shape[ax] = in_shape[ax] * factor;
    div[ax] = factor;
  }
  auto map = std::make_shared<std::vector<int64_t>>(coarse_index_map(out_shape, in_shape, div));
  std::vector<float> out(map->size());
  const auto xv = input.values();
  for (size_t i = 0; i < map->size(); ++i) out[i] = xv[(*map)[i]];
  auto node = make_result(out_shape, std::move(out), {input});
  if (node->requires_grad) {
    Node* xn = input.node();
    node->backward = [xn, map](Node& self) {
      float* g = xn->grad_data();
      for (size_t i = 0; i < map->size(); ++i) g[(*map)[i]] += self.grad[i];
    };
  }
  return wrap(std::move(node));
}

Tensor instance_norm(const Tensor& input, float eps) {
  if (input.rank() < 3) {
    if (input.rank() == 2) {
      auto out = instance_norm(reshape(input, {1, input.dim(0), input.dim(1)}), eps);
      return reshape(out, input.shape());
    }
    throw std::invalid_argument("instance_norm: need [N,C,spatial...], got " + shape_str(input.shape()));
  }
  const int64_t groups = input.dim(0) * input.dim(1);
  const int64_t P = input.numel() / groups;
  std::vector<float> out(static_cast<size_t>(input.numel()));
  auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(groups));
  const float* x = input.values().data();
  for (int64_t gi = 0; gi < groups; ++gi) {
    const float* xs = x + gi * P;
    double m = 0.0;
    for (int64_t p = 0; p < P; ++p) m += xs[p];
    m /= static_cast<double>(P);
    double var = 0.0;
    for (int64_t p = 0; p < P; ++p) {
      const double d = xs[p] - m;
      var += d * d;
    }
    var /= static_cast<double>(P);
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
    (*inv_std)[gi] = is;
    float* o = out.data() + gi * P;
    const float mf = static_cast<float>(m);
    for (int64_t p = 0; p < P; ++p) o[p] = (xs[p] - mf) * is;
  }
  auto node = make_result(input.shape(), std::move(out), {input});
  if (node->requires_grad) {
    Node* xn = input.node();
    node->backward = [xn, inv_std, groups, P](Node& self) {
      float* g = xn->grad_data();
      for (int64_t gi = 0; gi < groups; ++gi) {
        const float* dy = self.grad.data() + gi * P;
        const float* xh = self.value.data() + gi * P;
        double mdy = 0.0, mdyx = 0.0;
        for (int64_t p = 0; p < P; ++p) {
          mdy += dy[p];
          mdyx += static_cast<double>(dy[p]) * xh[p];
        }
        mdy /= static_cast<double>(P);
        mdyx /= static_cast<double>(P);
        const float is = (*inv_std)[gi];
        float* gx = g + gi * P;
        for (int64_t p = 0; p < P; ++p) {
          gx[p] += is * static_cast<float>(dy[p] - mdy - xh[p] * mdyx);
        }
      }
    };
  }
  return wrap(std::move(node));
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (input.rank() == 1) {
    auto out = linear(reshape(input, {1, input.dim(0)}), weight, bias);
    return reshape(out, {out.dim(1)});
  }
  if (input.rank() != 2 || weight.rank() != 2 || weight.dim(1) != input.dim(1)) {
    throw std::invalid_argument("linear: input " + shape_str(input.shape()) + " incompatible with weight " +
                                shape_str(weight.shape()));
  }
  if (bias.rank() != 1 || bias.dim(0) != weight.dim(0)) throw std::invalid_argument("linear: bias must be [out]");
  const int64_t n = input.dim(0), in = input.dim(1), outf = weight.dim(0);
  RowMatrix y(n, outf);
  ConstMapMatrix x(input.values().data(), n, in);
  ConstMapMatrix w(weight.values().data(), outf, in);
  y.noalias() = x * w.transpose();
  const float* b = bias.values().data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t o = 0; o < outf; ++o) y(i, o) += b[o];
  }
  std::vector<float> out(y.data(), y.data() + y.size());
  auto node = make_result({n, outf}, std::move(out), {input, weight, bias});
  if (node->requires_grad) {
    Node* xn = input.node();
    Node* wn = weight.node();
    Node* bn = bias.node();
    node->backward = [xn, wn, bn, n, in, outf](Node& self) {
      ConstMapMatrix dy(self.grad.data(), n, outf);
      if (wn->requires_grad) {
        ConstMapMatrix x(xn->value.data(), n, in);
        MapMatrix dw(wn->grad_data(), outf, in);
        dw.noalias() += dy.transpose() * x;
      }
      if (bn->requires_grad) {
        float* db = bn->grad_data();
        for (int64_t o = 0; o < outf; ++o) db[o] += dy.col(o).sum();
      }
      if (xn->requires_grad) {
        ConstMapMatrix w(wn->value.data(), outf, in);
        MapMatrix dx(xn->grad_data(), n, in);
        dx.noalias() += dy * w;
      }
    };
  }
  return wrap(std::move(node));
}

// ---------------------------------------------------------------------------

namespace {

struct PowerStep {
  std::vector<float> u, v;
  float sigma = 0.0f;
};

// v = normalize(W^T u); u' = normalize(W v); sigma = u' . W v
PowerStep power_step(const float* w, int64_t rows, int64_t cols, const std::vector<float>& u, bool advance_u,
                     float eps) {
  ConstMapMatrix W(w, rows, cols);
  Eigen::Map<const Eigen::VectorXf> uv(u.data(), rows);
  Eigen::VectorXf v = W.transpose() * uv;
  v /= std::max(v.norm(), eps);
  Eigen::VectorXf wv = W * v;
  PowerStep s;
  if (advance_u) {
    Eigen::VectorXf un = wv / std::max(wv.norm(), eps);
    s.u.assign(un.data(), un.data() + rows);
  } else {
    s.u = u;
  }
  Eigen::Map<const Eigen::VectorXf> uf(s.u.data(), rows);
  s.sigma = uf.dot(wv);
  s.v.assign(v.data(), v.data() + cols);
  return s;
}

}  // namespace

float power_iteration(std::span<const float> matrix, int64_t rows, int64_t cols, std::vector<float>& u,
                      int iterations, float eps) {
  if (static_cast<int64_t>(matrix.size()) != rows * cols) throw std::invalid_argument("power_iteration: size mismatch");
  if (static_cast<int64_t>(u.size()) != rows) throw std::invalid_argument("power_iteration: u has wrong length");
  float sigma = 0.0f;
  for (int i = 0; i < iterations; ++i) {
    auto s = power_step(matrix.data(), rows, cols, u, true, eps);
    u = std::move(s.u);
    sigma = s.sigma;
  }
  return sigma;
}

Tensor spectral_normalize(const Tensor& weight, std::vector<float>& u, bool update, float eps) {
  const int64_t rows = weight.dim(0);
  const int64_t cols = weight.numel() / rows;
  if (static_cast<int64_t>(u.size()) != rows) throw std::invalid_argument("spectral_normalize: u has wrong length");
  auto step = power_step(weight.values().data(), rows, cols, u, update, eps);
  if (update) u = step.u;
  const float sigma = std::max(step.sigma, eps);
  std::vector<float> out(weight.vec());
  for (auto& v : out) v /= sigma;
  auto node = make_result(weight.shape(), std::move(out), {weight});
  if (node->requires_grad) {
    Node* wn = weight.node();
    const bool active = step.sigma > eps;
    node->backward = [wn, sigma, active, rows, cols, uu = std::move(step.u), vv = std::move(step.v)](Node& self) {
      float* g = wn->grad_data();
      double gw = 0.0;
      if (active) {
        for (size_t i = 0; i < self.grad.size(); ++i) gw += static_cast<double>(self.grad[i]) * wn->value[i];
      }
      const float coef = active ? static_cast<float>(gw / (static_cast<double>(sigma) * sigma)) : 0.0f;
      for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c) {
          const size_t i = static_cast<size_t>(r * cols + c);
          g[i] += self.grad[i] / sigma - coef * uu[r] * vv[c];
        }
      }
    };
  }
  return wrap(std::move(node));
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (float v : x.values()) s += v;
  auto node = make_result({}, {static_cast<float>(s)}, {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn](Node& self) {
      float* g = xn->grad_data();
      const float d = self.grad[0];
      for (size_t i = 0; i < xn->value.size(); ++i) g[i] += d;
    };
  }
  return wrap(std::move(node));
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0f / static_cast<float>(x.numel())); }

Tensor l1_norm(const Tensor& x) {
  double s = 0.0;
  for (float v : x.values()) s += std::abs(v);
  auto node = make_result({}, {static_cast<float>(s)}, {x});
  if (node->requires_grad) {
    Node* xn = x.node();
    node->backward = [xn](Node& self) {
      float* g = xn->grad_data();
      const float d = self.grad[0];
      for (size_t i = 0; i < xn->value.size(); ++i) {
        const float v = xn->value[i];
        g[i] += v > 0.0f ? d : (v < 0.0f ? -d : 0.0f);
      }
    };
  }
  return wrap(std::move(node));
}

Tensor weighted_l1_loss(const Tensor& pred, const Tensor& target, std::span<const float> weights) {
  check_same_shape(pred, target, "weighted_l1_loss");
  if (static_cast<int64_t>(weights.size()) != pred.numel()) {
    throw std::invalid_argument("weighted_l1_loss: weight count does not match prediction");
  }
  const auto p = pred.values();
  const auto t = target.values();
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) s += static_cast<double>(weights[i]) * std::abs(p[i] - t[i]);
  const double n = static_cast<double>(p.size());
  auto node = make_result({}, {static_cast<float>(s / n)}, {pred});
  if (node->requires_grad) {
    Node* pn = pred.node();
    std::vector<float> w(weights.begin(), weights.end());
    auto tv = target.node_ptr();
    node->backward = [pn, tv, w = std::move(w), n](Node& self) {
      float* g = pn->grad_data();
      const float d = static_cast<float>(self.grad[0] / n);
      for (size_t i = 0; i < w.size(); ++i) {
        const float diff = pn->value[i] - tv->value[i];
        if (diff > 0.0f) g[i] += d * w[i];
        else if (diff < 0.0f) g[i] -= d * w[i];
      }
    };
  }
  return wrap(std::move(node));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  std::vector<float> ones(static_cast<size_t>(pred.numel()), 1.0f);
  return weighted_l1_loss(pred, target, ones);
}

}  // namespace vdls
