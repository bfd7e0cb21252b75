#include "stfd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stfd {
namespace {

template <typename S>
using NodePtr = std::shared_ptr<detail::Node<S>>;

template <typename S>
using MapRM = Eigen::Map<RowMatrix<S>>;
template <typename S>
using ConstMapRM = Eigen::Map<const RowMatrix<S>>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + to_string(a.shape()) +
                                      " vs " + to_string(b.shape()));
}

Index prod(const Shape& s, std::size_t from, std::size_t to) {
  Index n = 1;
  for (std::size_t i = from; i < to; ++i) n *= s[i];
  return n;
}

// Geometry of a (grouped, strided, padded) 2-D cross-correlation. conv1d maps
// onto it with H = 1.
struct ConvGeom {
  Index n, c_in, h, w;
  Index c_out, kh, kw;
  Index sh, sw, ph, pw;
  Index groups;
  Index ho, wo;

  Index cg_in() const { return c_in / groups; }
  Index cg_out() const { return c_out / groups; }
  Index patch() const { return cg_in() * kh * kw; }
  Index out_plane() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && sh == 1 && sw == 1 && ph == 0 && pw == 0; }
  bool depthwise() const { return cg_in() == 1 && cg_out() == 1; }
};

ConvGeom make_geom(Index n, Index c_in, Index h, Index w, const Shape& wshape, Index sh, Index sw,
                   Index ph, Index pw, Index groups) {
  ConvGeom g{};
  g.n = n;
  g.c_in = c_in;
  g.h = h;
  g.w = w;
  g.c_out = wshape[0];
  g.kh = wshape[2];
  g.kw = wshape[3];
  g.sh = sh;
  g.sw = sw;
  g.ph = ph;
  g.pw = pw;
  g.groups = groups;
  require(groups >= 1 && c_in % groups == 0 && g.c_out % groups == 0,
          "conv: channels not divisible by groups");
  require(wshape[1] == c_in / groups, "conv: weight input channels " + std::to_string(wshape[1]) +
                                          " != " + std::to_string(c_in / groups));
  require(sh >= 1 && sw >= 1 && ph >= 0 && pw >= 0, "conv: invalid stride/padding");
  require(h + 2 * ph >= g.kh && w + 2 * pw >= g.kw, "conv: kernel larger than padded input");
  g.ho = 1 + (h + 2 * ph - g.kh) / sh;
  g.wo = 1 + (w + 2 * pw - g.kw) / sw;
  return g;
}

// cols(patch, out_plane) for sample n, group grp.
template <typename S>
void im2col(const ConvGeom& g, const S* x, Index n, Index grp, S* cols) {
  const Index plane = g.h * g.w;
  const S* base = x + (n * g.c_in + grp * g.cg_in()) * plane;
  for (Index c = 0; c < g.cg_in(); ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        S* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.out_plane();
        for (Index oh = 0; oh < g.ho; ++oh) {
          const Index ih = oh * g.sh - g.ph + ki;
          S* dst = row + oh * g.wo;
          if (ih < 0 || ih >= g.h) {
            std::fill(dst, dst + g.wo, S(0));
            continue;
          }
          const S* src = base + c * plane + ih * g.w;
          for (Index ow = 0; ow < g.wo; ++ow) {
            const Index iw = ow * g.sw - g.pw + kj;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : S(0);
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const ConvGeom& g, const S* cols, Index n, Index grp, S* dx) {
  const Index plane = g.h * g.w;
  S* base = dx + (n * g.c_in + grp * g.cg_in()) * plane;
  for (Index c = 0; c < g.cg_in(); ++c) {
    for (Index ki = 0; ki < g.kh; ++ki) {
      for (Index kj = 0; kj < g.kw; ++kj) {
        const S* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.out_plane();
        for (Index oh = 0; oh < g.ho; ++oh) {
          const Index ih = oh * g.sh - g.ph + ki;
          if (ih < 0 || ih >= g.h) continue;
          S* dst = base + c * plane + ih * g.w;
          const S* src = row + oh * g.wo;
          for (Index ow = 0; ow < g.wo; ++ow) {
            const Index iw = ow * g.sw - g.pw + kj;
            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename S>
void depthwise_forward(const ConvGeom& g, const S* x, const S* w, S* y) {
  const Index plane = g.h * g.w;
  for (Index n = 0; n < g.n; ++n) {
    for (Index c = 0; c < g.c_in; ++c) {
      const S* xc = x + (n * g.c_in + c) * plane;
      const S* wc = w + c * g.kh * g.kw;
      S* yc = y + (n * g.c_out + c) * g.out_plane();
      for (Index oh = 0; oh < g.ho; ++oh) {
        for (Index ow = 0; ow < g.wo; ++ow) {
          S acc(0);
          for (Index ki = 0; ki < g.kh; ++ki) {
            const Index ih = oh * g.sh - g.ph + ki;
            if (ih < 0 || ih >= g.h) continue;
            for (Index kj = 0; kj < g.kw; ++kj) {
              const Index iw = ow * g.sw - g.pw + kj;
              if (iw < 0 || iw >= g.w) continue;
              acc += wc[ki * g.kw + kj] * xc[ih * g.w + iw];
            }
          }
          yc[oh * g.wo + ow] += acc;
        }
      }
    }
  }
}

template <typename S>
void depthwise_backward(const ConvGeom& g, const S* x, const S* w, const S* dy, S* dx, S* dw) {
  const Index plane = g.h * g.w;
  for (Index n = 0; n < g.n; ++n) {
    for (Index c = 0; c < g.c_in; ++c) {
      const S* xc = x + (n * g.c_in + c) * plane;
      const S* wc = w + c * g.kh * g.kw;
      const S* dyc = dy + (n * g.c_out + c) * g.out_plane();
      S* dxc = dx ? dx + (n * g.c_in + c) * plane : nullptr;
      S* dwc = dw ? dw + c * g.kh * g.kw : nullptr;
      for (Index oh = 0; oh < g.ho; ++oh) {
        for (Index ow = 0; ow < g.wo; ++ow) {
          const S d = dyc[oh * g.wo + ow];
          for (Index ki = 0; ki < g.kh; ++ki) {
            const Index ih = oh * g.sh - g.ph + ki;
            if (ih < 0 || ih >= g.h) continue;
            for (Index kj = 0; kj < g.kw; ++kj) {
              const Index iw = ow * g.sw - g.pw + kj;
              if (iw < 0 || iw >= g.w) continue;
              if (dxc) dxc[ih * g.w + iw] += d * wc[ki * g.kw + kj];
              if (dwc) dwc[ki * g.kw + kj] += d * xc[ih * g.w + iw];
            }
          }
        }
      }
    }
  }
}

template <typename S>
Vec<S> conv_forward(const ConvGeom& g, const S* x, const S* w, const S* b) {
  Vec<S> y = Vec<S>::Zero(g.n * g.c_out * g.out_plane());
  if (g.depthwise()) {
    depthwise_forward(g, x, w, y.data());
  } else {
    Vec<S> cols(g.pointwise() ? 0 : g.patch() * g.out_plane());
    for (Index n = 0; n < g.n; ++n) {
      for (Index grp = 0; grp < g.groups; ++grp) {
        const S* cols_ptr;
        if (g.pointwise()) {
          cols_ptr = x + (n * g.c_in + grp * g.cg_in()) * g.h * g.w;
        } else {
          im2col(g, x, n, grp, cols.data());
          cols_ptr = cols.data();
        }
        ConstMapRM<S> wmat(w + grp * g.cg_out() * g.patch(), g.cg_out(), g.patch());
        ConstMapRM<S> cmat(cols_ptr, g.patch(), g.out_plane());
        MapRM<S> ymat(y.data() + (n * g.c_out + grp * g.cg_out()) * g.out_plane(), g.cg_out(),
                      g.out_plane());
        ymat.noalias() += wmat.lazyProduct(cmat);
      }
    }
  }
  if (b) {
    for (Index n = 0; n < g.n; ++n) {
      for (Index c = 0; c < g.c_out; ++c) {
        y.segment((n * g.c_out + c) * g.out_plane(), g.out_plane()) += b[c];
      }
    }
  }
  return y;
}

// Accumulates into whichever of dx, dw, db is non-null.
template <typename S>
void conv_backward(const ConvGeom& g, const S* x, const S* w, const S* dy, S* dx, S* dw, S* db) {
  if (db) {
    for (Index n = 0; n < g.n; ++n) {
      for (Index c = 0; c < g.c_out; ++c) {
        Eigen::Map<const Vec<S>> seg(dy + (n * g.c_out + c) * g.out_plane(), g.out_plane());
        db[c] += seg.sum();
      }
    }
  }
  if (!dx && !dw) return;
  if (g.depthwise()) {
    depthwise_backward(g, x, w, dy, dx, dw);
    return;
  }
  const bool pw = g.pointwise();
  Vec<S> cols(pw ? 0 : g.patch() * g.out_plane());
  Vec<S> dcols(pw || !dx ? 0 : g.patch() * g.out_plane());
  for (Index n = 0; n < g.n; ++n) {
    for (Index grp = 0; grp < g.groups; ++grp) {
      ConstMapRM<S> dymat(dy + (n * g.c_out + grp * g.cg_out()) * g.out_plane(), g.cg_out(),
                          g.out_plane());
      ConstMapRM<S> wmat(w + grp * g.cg_out() * g.patch(), g.cg_out(), g.patch());
      const Index xoff = (n * g.c_in + grp * g.cg_in()) * g.h * g.w;
      if (dw) {
        const S* cols_ptr;
        if (pw) {
          cols_ptr = x + xoff;
        } else {
          im2col(g, x, n, grp, cols.data());
          cols_ptr = cols.data();
        }
        ConstMapRM<S> cmat(cols_ptr, g.patch(), g.out_plane());
        MapRM<S> dwmat(dw + grp * g.cg_out() * g.patch(), g.cg_out(), g.patch());
        dwmat.noalias() += dymat * cmat.transpose();
      }
      if (dx) {
        if (pw) {
          MapRM<S> dxmat(dx + xoff, g.patch(), g.out_plane());
          dxmat.noalias() += wmat.transpose() * dymat;
        } else {
          MapRM<S> dcmat(dcols.data(), g.patch(), g.out_plane());
          dcmat.noalias() = wmat.transpose() * dymat;
          col2im_add(g, dcols.data(), n, grp, dx);
        }
      }
    }
  }
}

template <typename S>
Tensor<S> conv_op(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, const ConvGeom& g,
                  Shape out_shape) {
  if (b.defined()) require(b.size() == g.c_out, "conv: bias size mismatch");
  Vec<S> y = conv_forward(g, x.data(), w.data(), b.defined() ? b.data() : nullptr);
  std::vector<NodePtr<S>> parents{x.node(), w.node()};
  if (b.defined()) parents.push_back(b.node());
  return Tensor<S>::from_op(std::move(out_shape), std::move(y), std::move(parents),
                            [g](detail::Node<S>& self) {
                              auto& px = *self.parents[0];
                              auto& pw = *self.parents[1];
                              S* dx = px.requires_grad ? px.grad_slot().data() : nullptr;
                              S* dw = pw.requires_grad ? pw.grad_slot().data() : nullptr;
                              S* db = nullptr;
                              if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
                                db = self.parents[2]->grad_slot().data();
                              }
                              conv_backward(g, px.value.data(), pw.value.data(), self.grad.data(),
                                            dx, dw, db);
                            });
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "add");
  return Tensor<S>::from_op(a.shape(), a.value() + b.value(), {a.node(), b.node()},
                            [](detail::Node<S>& self) {
                              for (auto& p : self.parents) {
                                if (p->requires_grad) p->grad_slot() += self.grad;
                              }
                            });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "mul");
  return Tensor<S>::from_op(a.shape(), a.value() * b.value(), {a.node(), b.node()},
                            [](detail::Node<S>& self) {
                              auto& pa = *self.parents[0];
                              auto& pb = *self.parents[1];
                              if (pa.requires_grad) pa.grad_slot() += self.grad * pb.value;
                              if (pb.requires_grad) pb.grad_slot() += self.grad * pa.value;
                            });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  return Tensor<S>::from_op(a.shape(), a.value() * factor, {a.node()},
                            [factor](detail::Node<S>& self) {
                              self.parents[0]->grad_slot() += self.grad * factor;
                            });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  Vec<S> v(1);
  v[0] = a.value().sum();
  return Tensor<S>::from_op(Shape{}, std::move(v), {a.node()}, [](detail::Node<S>& self) {
    self.parents[0]->grad_slot() += self.grad[0];
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& a) {
  require(a.size() > 0, "mean of empty tensor");
  const S inv = S(1) / static_cast<S>(a.size());
  Vec<S> v(1);
  v[0] = a.value().sum() * inv;
  return Tensor<S>::from_op(Shape{}, std::move(v), {a.node()}, [inv](detail::Node<S>& self) {
    self.parents[0]->grad_slot() += self.grad[0] * inv;
  });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  require(numel(shape) == a.size(),
          "reshape: " + to_string(a.shape()) + " -> " + to_string(shape) + " changes size");
  return Tensor<S>::from_op(std::move(shape), a.value(), {a.node()}, [](detail::Node<S>& self) {
    self.parents[0]->grad_slot() += self.grad;
  });
}

template <typename S>
Tensor<S> permute(const Tensor<S>& a, const std::vector<int>& axes) {
  const int r = a.rank();
  require(static_cast<int>(axes.size()) == r, "permute: wrong number of axes");
  std::vector<int> seen(static_cast<std::size_t>(r), 0);
  for (int ax : axes) {
    require(ax >= 0 && ax < r && !seen[static_cast<std::size_t>(ax)]++, "permute: invalid axes");
  }
  const Shape& in = a.shape();
  std::vector<Index> in_strides(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in[i + 1];
  Shape out(static_cast<std::size_t>(r));
  std::vector<Index> src_stride(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out[i] = in[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  // gather[k] = input offset of output element k
  std::vector<Index> gather(static_cast<std::size_t>(a.size()));
  std::vector<Index> counter(static_cast<std::size_t>(r), 0);
  Index offset = 0;
  for (Index k = 0; k < a.size(); ++k) {
    gather[static_cast<std::size_t>(k)] = offset;
    for (int i = r - 1; i >= 0; --i) {
      if (++counter[i] < out[i]) {
        offset += src_stride[i];
        break;
      }
      offset -= src_stride[i] * (out[i] - 1);
      counter[i] = 0;
    }
  }
  Vec<S> v(a.size());
  for (Index k = 0; k < a.size(); ++k) v[k] = a.value()[gather[static_cast<std::size_t>(k)]];
  return Tensor<S>::from_op(std::move(out), std::move(v), {a.node()},
                            [gather = std::move(gather)](detail::Node<S>& self) {
                              auto& g = self.parents[0]->grad_slot();
                              for (std::size_t k = 0; k < gather.size(); ++k) {
                                g[gather[k]] += self.grad[static_cast<Index>(k)];
                              }
                            });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const int r = parts[0].rank();
  if (axis < 0) axis += r;
  require(axis >= 0 && axis < r, "concat: axis out of range");
  const auto ax = static_cast<std::size_t>(axis);
  Shape out = parts[0].shape();
  out[ax] = 0;
  std::vector<Index> chunk;  // contiguous block length contributed per outer index
  for (const auto& p : parts) {
    Shape s = p.shape();
    require(static_cast<int>(s.size()) == r, "concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != ax) require(s[i] == parts[0].shape()[i], "concat: shape mismatch off-axis");
    }
    out[ax] += s[ax];
    chunk.push_back(prod(s, ax, s.size()));
  }
  const Index outer = prod(out, 0, ax);
  const Index total_chunk = std::accumulate(chunk.begin(), chunk.end(), Index{0});
  Vec<S> v(outer * total_chunk);
  std::vector<NodePtr<S>> parents;
  Index off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (Index o = 0; o < outer; ++o) {
      v.segment(o * total_chunk + off, chunk[k]) = parts[k].value().segment(o * chunk[k], chunk[k]);
    }
    off += chunk[k];
    parents.push_back(parts[k].node());
  }
  return Tensor<S>::from_op(std::move(out), std::move(v), std::move(parents),
                            [chunk, outer, total_chunk](detail::Node<S>& self) {
                              Index off = 0;
                              for (std::size_t k = 0; k < chunk.size(); ++k) {
                                auto& p = *self.parents[k];
                                if (p.requires_grad) {
                                  auto& g = p.grad_slot();
                                  for (Index o = 0; o < outer; ++o) {
                                    g.segment(o * chunk[k], chunk[k]) +=
                                        self.grad.segment(o * total_chunk + off, chunk[k]);
                                  }
                                }
                                off += chunk[k];
                              }
                            });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  return Tensor<S>::from_op(x.shape(), x.value().max(S(0)), {x.node()}, [](detail::Node<S>& self) {
    auto& p = *self.parents[0];
    p.grad_slot() += (p.value > S(0)).select(self.grad, S(0));
  });
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& x, S slope) {
  Vec<S> v = (x.value() > S(0)).select(x.value(), x.value() * slope);
  return Tensor<S>::from_op(x.shape(), std::move(v), {x.node()}, [slope](detail::Node<S>& self) {
    auto& p = *self.parents[0];
    p.grad_slot() += (p.value > S(0)).select(self.grad, self.grad * slope);
  });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  const S lo = static_cast<S>(kProbEps);
  const S hi = S(1) - lo;
  Vec<S> v(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const S z = x.value()[i];
    const S s = z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
    v[i] = std::clamp(s, lo, hi);
  }
  return Tensor<S>::from_op(x.shape(), std::move(v), {x.node()}, [lo, hi](detail::Node<S>& self) {
    auto& g = self.parents[0]->grad_slot();
    // self.value holds the clamped output.
    for (Index i = 0; i < g.size(); ++i) {
      const S s = self.value[i];
      if (s > lo && s < hi) g[i] += self.grad[i] * s * (S(1) - s);
    }
  });
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1),
          "linear: x " + to_string(x.shape()) + " incompatible with w " + to_string(w.shape()));
  const Index n = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  if (b.defined()) require(b.size() == fout, "linear: bias size mismatch");
  Vec<S> v(n * fout);
  MapRM<S> y(v.data(), n, fout);
  y.noalias() = ConstMapRM<S>(x.data(), n, fin) * ConstMapRM<S>(w.data(), fout, fin).transpose();
  if (b.defined()) y.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.data(), fout);
  std::vector<NodePtr<S>> parents{x.node(), w.node()};
  if (b.defined()) parents.push_back(b.node());
  return Tensor<S>::from_op(
      Shape{n, fout}, std::move(v), std::move(parents), [n, fin, fout](detail::Node<S>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        ConstMapRM<S> dy(self.grad.data(), n, fout);
        if (px.requires_grad) {
          MapRM<S>(px.grad_slot().data(), n, fin).noalias() +=
              dy * ConstMapRM<S>(pw.value.data(), fout, fin);
        }
        if (pw.requires_grad) {
          MapRM<S>(pw.grad_slot().data(), fout, fin).noalias() +=
              dy.transpose() * ConstMapRM<S>(px.value.data(), n, fin);
        }
        if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
          Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(self.parents[2]->grad_slot().data(),
                                                          fout) += dy.colwise().sum();
        }
      });
}

template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, Index stride,
                 Index pad) {
  require(x.rank() == 2 || x.rank() == 3, "conv1d: x must be (C, L) or (N, C, L)");
  require(w.rank() == 3, "conv1d: w must be (C_out, C_in, K)");
  const bool batched = x.rank() == 3;
  const Index n = batched ? x.dim(0) : 1;
  const Index c = x.dim(-2), l = x.dim(-1);
  require(w.dim(1) == c, "conv1d: input channels " + std::to_string(c) + " != weight " +
                             std::to_string(w.dim(1)));
  const ConvGeom g =
      make_geom(n, c, 1, l, Shape{w.dim(0), w.dim(1), 1, w.dim(2)}, 1, stride, 0, pad, 1);
  Shape out = batched ? Shape{n, g.c_out, g.wo} : Shape{g.c_out, g.wo};
  return conv_op(x, w, b, g, std::move(out));
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b,
                 const Conv2dOptions& opts) {
  require(x.rank() == 3 || x.rank() == 4, "conv2d: x must be (C, H, W) or (N, C, H, W)");
  require(w.rank() == 4, "conv2d: w must be (C_out, C_in/groups, Kh, Kw)");
  const bool batched = x.rank() == 4;
  const Index n = batched ? x.dim(0) : 1;
  const ConvGeom g = make_geom(n, x.dim(-3), x.dim(-2), x.dim(-1), w.shape(), opts.stride[0],
                               opts.stride[1], opts.pad[0], opts.pad[1], opts.groups);
  Shape out = batched ? Shape{n, g.c_out, g.ho, g.wo} : Shape{g.c_out, g.ho, g.wo};
  return conv_op(x, w, b, g, std::move(out));
}

template <typename S>
Tensor<S> batch_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta,
                     Tensor<S>& running_mean, Tensor<S>& running_var, Mode mode, S momentum,
                     S eps) {
  require(x.rank() >= 2, "batch_norm: x must be (N, C, ...)");
  const Index n = x.dim(0), c = x.dim(1);
  const Index inner = prod(x.shape(), 2, x.shape().size());
  for (const Tensor<S>* t : {&gamma, &beta, static_cast<const Tensor<S>*>(&running_mean),
                             static_cast<const Tensor<S>*>(&running_var)}) {
    require(t->size() == c, "batch_norm: per-channel tensor size mismatch");
  }
  const Index count = n * inner;
  Vec<S> mu(c), inv_std(c);
  const S* xv = x.data();
  if (mode == Mode::Train) {
    for (Index ch = 0; ch < c; ++ch) {
      S s(0);
      for (Index i = 0; i < n; ++i) {
        s += Eigen::Map<const Vec<S>>(xv + (i * c + ch) * inner, inner).sum();
      }
      const S m = s / static_cast<S>(count);
      S ss(0);
      for (Index i = 0; i < n; ++i) {
        ss += (Eigen::Map<const Vec<S>>(xv + (i * c + ch) * inner, inner) - m).square().sum();
      }
      const S var = ss / static_cast<S>(count);
      mu[ch] = m;
      inv_std[ch] = S(1) / std::sqrt(var + eps);
      const S unbiased = count > 1 ? ss / static_cast<S>(count - 1) : var;
      running_mean.value()[ch] = (S(1) - momentum) * running_mean.value()[ch] + momentum * m;
      running_var.value()[ch] = (S(1) - momentum) * running_var.value()[ch] + momentum * unbiased;
    }
  } else {
    mu = running_mean.value();
    inv_std = (running_var.value() + eps).rsqrt();
  }
  Vec<S> xhat(x.size());
  Vec<S> y(x.size());
  for (Index i = 0; i < n; ++i) {
    for (Index ch = 0; ch < c; ++ch) {
      const Index off = (i * c + ch) * inner;
      xhat.segment(off, inner) = (x.value().segment(off, inner) - mu[ch]) * inv_std[ch];
      y.segment(off, inner) = xhat.segment(off, inner) * gamma.value()[ch] + beta.value()[ch];
    }
  }
  const bool train = mode == Mode::Train;
  return Tensor<S>::from_op(
      x.shape(), std::move(y), {x.node(), gamma.node(), beta.node()},
      [n, c, inner, count, train, inv_std, xhat = std::move(xhat)](detail::Node<S>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const Vec<S>& dy = self.grad;
        for (Index ch = 0; ch < c; ++ch) {
          S sum_dy(0), sum_dy_xhat(0);
          for (Index i = 0; i < n; ++i) {
            const Index off = (i * c + ch) * inner;
            sum_dy += dy.segment(off, inner).sum();
            sum_dy_xhat += (dy.segment(off, inner) * xhat.segment(off, inner)).sum();
          }
          if (pg.requires_grad) pg.grad_slot()[ch] += sum_dy_xhat;
          if (pb.requires_grad) pb.grad_slot()[ch] += sum_dy;
          if (!px.requires_grad) continue;
          const S g = pg.value[ch];
          auto& dx = px.grad_slot();
          for (Index i = 0; i < n; ++i) {
            const Index off = (i * c + ch) * inner;
            if (train) {
              const S mean_dy = sum_dy / static_cast<S>(count);
              const S mean_dy_xhat = sum_dy_xhat / static_cast<S>(count);
              dx.segment(off, inner) += g * inv_std[ch] *
                                        (dy.segment(off, inner) - mean_dy -
                                         xhat.segment(off, inner) * mean_dy_xhat);
            } else {
              dx.segment(off, inner) += dy.segment(off, inner) * (g * inv_std[ch]);
            }
          }
        }
      });
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, int axis,
                     S eps) {
  const int r = x.rank();
  if (axis < 0) axis += r;
  require(axis >= 0 && axis < r, "layer_norm: axis out of range");
  const auto ax = static_cast<std::size_t>(axis);
  const Index outer = prod(x.shape(), 0, ax);
  const Index c = x.shape()[ax];
  const Index inner = prod(x.shape(), ax + 1, x.shape().size());
  require(gamma.size() == c && beta.size() == c, "layer_norm: affine size mismatch");
  Vec<S> xhat(x.size()), y(x.size()), inv_std(outer * inner);
  const S* xv = x.data();
  for (Index o = 0; o < outer; ++o) {
    for (Index i = 0; i < inner; ++i) {
      const Index base = o * c * inner + i;
      S m(0);
      for (Index k = 0; k < c; ++k) m += xv[base + k * inner];
      m /= static_cast<S>(c);
      S var(0);
      for (Index k = 0; k < c; ++k) {
        const S d = xv[base + k * inner] - m;
        var += d * d;
      }
      var /= static_cast<S>(c);
      const S is = S(1) / std::sqrt(var + eps);
      inv_std[o * inner + i] = is;
      for (Index k = 0; k < c; ++k) {
        const Index idx = base + k * inner;
        xhat[idx] = (xv[idx] - m) * is;
        y[idx] = xhat[idx] * gamma.value()[k] + beta.value()[k];
      }
    }
  }
  return Tensor<S>::from_op(
      x.shape(), std::move(y), {x.node(), gamma.node(), beta.node()},
      [outer, c, inner, inv_std = std::move(inv_std), xhat = std::move(xhat)](detail::Node<S>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const Vec<S>& dy = self.grad;
        Vec<S> g(c);
        for (Index o = 0; o < outer; ++o) {
          for (Index i = 0; i < inner; ++i) {
            const Index base = o * c * inner + i;
            S mean_g(0), mean_g_xhat(0);
            for (Index k = 0; k < c; ++k) {
              const Index idx = base + k * inner;
              if (pg.requires_grad) pg.grad_slot()[k] += dy[idx] * xhat[idx];
              if (pb.requires_grad) pb.grad_slot()[k] += dy[idx];
              g[k] = dy[idx] * pg.value[k];
              mean_g += g[k];
              mean_g_xhat += g[k] * xhat[idx];
            }
            if (!px.requires_grad) continue;
            mean_g /= static_cast<S>(c);
            mean_g_xhat /= static_cast<S>(c);
            auto& dx = px.grad_slot();
            const S is = inv_std[o * inner + i];
            for (Index k = 0; k < c; ++k) {
              const Index idx = base + k * inner;
              dx[idx] += is * (g[k] - mean_g - xhat[idx] * mean_g_xhat);
            }
          }
        }
      });
}

template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x, int first_axis) {
  const int r = x.rank();
  require(first_axis >= 1 && first_axis < r, "global_avg_pool: axis out of range");
  const auto ax = static_cast<std::size_t>(first_axis);
  const Index outer = prod(x.shape(), 0, ax);
  const Index inner = prod(x.shape(), ax, x.shape().size());
  require(inner > 0, "global_avg_pool: empty pooling region");
  Vec<S> v(outer);
  for (Index o = 0; o < outer; ++o) {
    v[o] = x.value().segment(o * inner, inner).sum() / static_cast<S>(inner);
  }
  Shape out(x.shape().begin(), x.shape().begin() + first_axis);
  return Tensor<S>::from_op(std::move(out), std::move(v), {x.node()},
                            [outer, inner](detail::Node<S>& self) {
                              auto& g = self.parents[0]->grad_slot();
                              for (Index o = 0; o < outer; ++o) {
                                g.segment(o * inner, inner) += self.grad[o] / static_cast<S>(inner);
                              }
                            });
}

#define STFD_INSTANTIATE_OPS(S)                                                                  \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                    \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                    \
  template Tensor<S> scale(const Tensor<S>&, S);                                                 \
  template Tensor<S> sum(const Tensor<S>&);                                                      \
  template Tensor<S> mean(const Tensor<S>&);                                                     \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                           \
  template Tensor<S> permute(const Tensor<S>&, const std::vector<int>&);                         \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, int);                                 \
  template Tensor<S> relu(const Tensor<S>&);                                                     \
  template Tensor<S> leaky_relu(const Tensor<S>&, S);                                            \
  template Tensor<S> sigmoid(const Tensor<S>&);                                                  \
  template Tensor<S> linear(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);               \
  template Tensor<S> conv1d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index, Index); \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,                \
                            const Conv2dOptions&);                                               \
  template Tensor<S> batch_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,            \
                                Tensor<S>&, Tensor<S>&, Mode, S, S);                             \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, int, S);   \
  template Tensor<S> global_avg_pool(const Tensor<S>&, int);

STFD_INSTANTIATE_OPS(float)
STFD_INSTANTIATE_OPS(double)

}  // namespace stfd
