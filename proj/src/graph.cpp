#include "windcast/graph.hpp"

#include <cmath>
#include <limits>

namespace windcast {

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Graph::NodeId Graph::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.grad = Tensor(n.value.shape());
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

Graph::NodeId Graph::add_node(Tensor value, std::vector<NodeId> parents, BackFn back) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (NodeId p : n.parents) {
    if (nodes_[p].requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) {
    n.grad = Tensor(n.value.shape());
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Graph::backward(NodeId root) {
  if (nodes_[root].value.numel() != 1) {
    throw ShapeError("backward root must be a scalar node");
  }
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad[0] = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.back) n.back(*this, static_cast<NodeId>(i));
  }
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

namespace kernels {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (y <= 0.0) throw NumericError("softplus inverse needs a positive value");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor softplus(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = softplus(x[i]);
  return y;
}

Tensor activation(const Tensor& x, Activation kind) {
  if (kind == Activation::kIdentity) return x;
  Tensor y(x.shape());
  if (kind == Activation::kSoftplus) {
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = softplus(x[i]);
  } else {
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * inv_sqrt2));
    }
  }
  return y;
}

Tensor masked_row_softmax(const Tensor& z, const Tensor& mask) {
  const std::size_t rows = z.dim(0), cols = z.dim(1);
  Tensor w({rows, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    double max_logit = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.at(r, c) != 0.0) {
        any = true;
        max_logit = std::max(max_logit, z.at(r, c));
      }
    }
    if (!any) continue;  // fully masked row stays all-zero
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.at(r, c) != 0.0) {
        double e = std::exp(z.at(r, c) - max_logit);
        w.at(r, c) = e;
        total += e;
      }
    }
    for (std::size_t c = 0; c < cols; ++c) {
      if (mask.at(r, c) != 0.0) w.at(r, c) /= total;
    }
  }
  return w;
}

}  // namespace kernels

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

Graph::NodeId op_add(Graph& g, Graph::NodeId a, Graph::NodeId b) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  check(va.same_shape(vb), "op_add: shape mismatch");
  Tensor out(va.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = va[i] + vb[i];
  return g.add_node(std::move(out), {a, b}, [a, b](Graph& gg, Graph::NodeId self) {
    const Tensor& d = gg.grad(self);
    if (gg.needs_grad(a)) {
      Tensor& da = gg.grad(a);
      for (std::size_t i = 0; i < d.numel(); ++i) da[i] += d[i];
    }
    if (gg.needs_grad(b)) {
      Tensor& db = gg.grad(b);
      for (std::size_t i = 0; i < d.numel(); ++i) db[i] += d[i];
    }
  });
}

Graph::NodeId op_add_rowbcast(Graph& g, Graph::NodeId a, Graph::NodeId b) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  check(va.rank() == 2 && vb.rank() == 2 && vb.dim(0) == 1 && vb.dim(1) == va.dim(1),
        "op_add_rowbcast: expected (M x d) + (1 x d)");
  const std::size_t m = va.dim(0), d = va.dim(1);
  Tensor out({m, d});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t c = 0; c < d; ++c) out.at(i, c) = va.at(i, c) + vb.at(0, c);
  }
  return g.add_node(std::move(out), {a, b}, [a, b, m, d](Graph& gg, Graph::NodeId self) {
    const Tensor& dout = gg.grad(self);
    if (gg.needs_grad(a)) {
      Tensor& da = gg.grad(a);
      for (std::size_t i = 0; i < dout.numel(); ++i) da[i] += dout[i];
    }
    if (gg.needs_grad(b)) {
      Tensor& db = gg.grad(b);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < d; ++c) db.at(0, c) += dout.at(i, c);
      }
    }
  });
}

Graph::NodeId op_scale(Graph& g, Graph::NodeId a, double c) {
  const Tensor& va = g.value(a);
  Tensor out(va.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * va[i];
  return g.add_node(std::move(out), {a}, [a, c](Graph& gg, Graph::NodeId self) {
    if (!gg.needs_grad(a)) return;
    const Tensor& d = gg.grad(self);
    Tensor& da = gg.grad(a);
    for (std::size_t i = 0; i < d.numel(); ++i) da[i] += c * d[i];
  });
}

Graph::NodeId op_matmul(Graph& g, Graph::NodeId a, Graph::NodeId b) {
  const Tensor& va = g.value(a);
  const Tensor& vb = g.value(b);
  check(va.rank() == 2 && vb.rank() == 2 && va.dim(1) == vb.dim(0), "op_matmul: shape mismatch");
  const std::size_t n = va.dim(0), k = va.dim(1), m = vb.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      double aik = va.at(i, kk);
      for (std::size_t j = 0; j < m; ++j) out.at(i, j) += aik * vb.at(kk, j);
    }
  }
  return g.add_node(std::move(out), {a, b}, [a, b, n, k, m](Graph& gg, Graph::NodeId self) {
    const Tensor& d = gg.grad(self);
    const Tensor& va = gg.value(a);
    const Tensor& vb = gg.value(b);
    if (gg.needs_grad(a)) {
      Tensor& da = gg.grad(a);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          double dij = d.at(i, j);
          for (std::size_t kk = 0; kk < k; ++kk) da.at(i, kk) += dij * vb.at(kk, j);
        }
      }
    }
    if (gg.needs_grad(b)) {
      Tensor& db = gg.grad(b);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
          double aik = va.at(i, kk);
          for (std::size_t j = 0; j < m; ++j) db.at(kk, j) += aik * d.at(i, j);
        }
      }
    }
  });
}

Graph::NodeId op_batch_matmul(Graph& g, Graph::NodeId x, Graph::NodeId w) {
  const Tensor& vx = g.value(x);
  const Tensor& vw = g.value(w);
  check(vx.rank() == 3 && vw.rank() == 2 && vx.dim(2) == vw.dim(0),
        "op_batch_matmul: expected (B x N x K) . (K x M)");
  const std::size_t b = vx.dim(0), n = vx.dim(1), k = vx.dim(2), m = vw.dim(1);
  Tensor out({b, n, m});
  for (std::size_t bb = 0; bb < b; ++bb) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        double xv = vx.at(bb, i, kk);
        for (std::size_t j = 0; j < m; ++j) out.at(bb, i, j) += xv * vw.at(kk, j);
      }
    }
  }
  return g.add_node(std::move(out), {x, w}, [x, w, b, n, k, m](Graph& gg, Graph::NodeId self) {
    const Tensor& d = gg.grad(self);
    const Tensor& vx = gg.value(x);
    const Tensor& vw = gg.value(w);
    if (gg.needs_grad(x)) {
      Tensor& dx = gg.grad(x);
      for (std::size_t bb = 0; bb < b; ++bb) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            double dij = d.at(bb, i, j);
            for (std::size_t kk = 0; kk < k; ++kk) dx.at(bb, i, kk) += dij * vw.at(kk, j);
          }
        }
      }
    }
    if (gg.needs_grad(w)) {
      Tensor& dw = gg.grad(w);
      for (std::size_t bb = 0; bb < b; ++bb) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            double xv = vx.at(bb, i, kk);
            for (std::size_t j = 0; j < m; ++j) dw.at(kk, j) += xv * d.at(bb, i, j);
          }
        }
      }
    }
  });
}

Graph::NodeId op_station_affine(Graph& g, Graph::NodeId h, Graph::NodeId gain,
                                Graph::NodeId embed, Graph::NodeId bias) {
  const Tensor& vh = g.value(h);
  const Tensor& vg = g.value(gain);
  check(vh.rank() == 3 && vg.rank() == 2 && vg.dim(0) == vh.dim(0) && vg.dim(1) == vh.dim(2),
        "op_station_affine: shape mismatch");
  check(g.value(embed).same_shape(vg) && g.value(bias).same_shape(vg),
        "op_station_affine: parameter shapes must agree");
  const std::size_t s_count = vh.dim(0), n = vh.dim(1), d = vh.dim(2);
  const Tensor& ve = g.value(embed);
  const Tensor& vb = g.value(bias);
  Tensor out({s_count, n, d});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t c = 0; c < d; ++c) {
        out.at(s, t, c) = vg.at(s, c) * (vh.at(s, t, c) + ve.at(s, c)) + vb.at(s, c);
      }
    }
  }
  return g.add_node(std::move(out), {h, gain, embed, bias},
                    [h, gain, embed, bias, s_count, n, d](Graph& gg, Graph::NodeId self) {
                      const Tensor& dout = gg.grad(self);
                      const Tensor& vh = gg.value(h);
                      const Tensor& vg = gg.value(gain);
                      const Tensor& ve = gg.value(embed);
                      for (std::size_t s = 0; s < s_count; ++s) {
                        for (std::size_t t = 0; t < n; ++t) {
                          for (std::size_t c = 0; c < d; ++c) {
                            double dv = dout.at(s, t, c);
                            if (gg.needs_grad(h)) gg.grad(h).at(s, t, c) += vg.at(s, c) * dv;
                            if (gg.needs_grad(gain)) {
                              gg.grad(gain).at(s, c) += dv * (vh.at(s, t, c) + ve.at(s, c));
                            }
                            if (gg.needs_grad(embed)) gg.grad(embed).at(s, c) += vg.at(s, c) * dv;
                            if (gg.needs_grad(bias)) gg.grad(bias).at(s, c) += dv;
                          }
                        }
                      }
                    });
}

Graph::NodeId op_depthwise_conv3(Graph& g, Graph::NodeId x, Graph::NodeId kernel,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& segments) {
  const Tensor& vx = g.value(x);
  const Tensor& vk = g.value(kernel);
  check(vx.rank() == 3 && vk.rank() == 2 && vk.dim(0) == 3 && vk.dim(1) == vx.dim(2),
        "op_depthwise_conv3: expected (S x N x d) with a (3 x d) kernel");
  const std::size_t s_count = vx.dim(0), n = vx.dim(1), d = vx.dim(2);
  Tensor out({s_count, n, d});
  for (const auto& [begin, end] : segments) {
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t t = begin; t < end; ++t) {
        for (std::size_t j = 0; j < 3; ++j) {
          // kernel tap j reads token t + j - 1
          if (t + j < begin + 1 || t + j > end) continue;
          std::size_t src = t + j - 1;
          for (std::size_t c = 0; c < d; ++c) {
            out.at(s, t, c) += vk.at(j, c) * vx.at(s, src, c);
          }
        }
      }
    }
  }
  auto segs = segments;
  return g.add_node(std::move(out), {x, kernel},
                    [x, kernel, segs, s_count, d](Graph& gg, Graph::NodeId self) {
                      const Tensor& dout = gg.grad(self);
                      const Tensor& vx = gg.value(x);
                      const Tensor& vk = gg.value(kernel);
                      for (const auto& [begin, end] : segs) {
                        for (std::size_t s = 0; s < s_count; ++s) {
                          for (std::size_t t = begin; t < end; ++t) {
                            for (std::size_t j = 0; j < 3; ++j) {
                              if (t + j < begin + 1 || t + j > end) continue;
                              std::size_t src = t + j - 1;
                              for (std::size_t c = 0; c < d; ++c) {
                                double dv = dout.at(s, t, c);
                                if (gg.needs_grad(kernel)) {
                                  gg.grad(kernel).at(j, c) += dv * vx.at(s, src, c);
                                }
                                if (gg.needs_grad(x)) {
                                  gg.grad(x).at(s, src, c) += vk.at(j, c) * dv;
                                }
                              }
                            }
                          }
                        }
                      }
                    });
}

Graph::NodeId op_tile_stations(Graph& g, Graph::NodeId x, std::size_t s_count) {
  const Tensor& vx = g.value(x);
  check(vx.rank() == 2, "op_tile_stations: expected (M x d)");
  const std::size_t m = vx.dim(0), d = vx.dim(1);
  Tensor out({s_count, m, d});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < d; ++c) out.at(s, i, c) = vx.at(i, c);
    }
  }
  return g.add_node(std::move(out), {x}, [x, s_count, m, d](Graph& gg, Graph::NodeId self) {
    if (!gg.needs_grad(x)) return;
    const Tensor& dout = gg.grad(self);
    Tensor& dx = gg.grad(x);
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < d; ++c) dx.at(i, c) += dout.at(s, i, c);
      }
    }
  });
}

AttentionNodes op_attention(Graph& g, Graph::NodeId q, Graph::NodeId k, Graph::NodeId v,
                            std::size_t n_heads) {
  const Tensor& vq = g.value(q);
  const Tensor& vk = g.value(k);
  const Tensor& vv = g.value(v);
  check(vq.rank() == 3 && vk.rank() == 3 && vv.rank() == 3, "op_attention: rank-3 inputs required");
  check(vq.dim(0) == vk.dim(0) && vk.same_shape(vv) && vq.dim(2) == vk.dim(2),
        "op_attention: Q/K/V shapes incompatible");
  const std::size_t s_count = vq.dim(0), m = vq.dim(1), n = vk.dim(1), d = vq.dim(2);
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("attention head count must divide the embedding dimension");
  }
  const std::size_t dk = d / n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

  auto heads = std::make_shared<std::vector<Tensor>>();
  heads->reserve(n_heads);
  Tensor ctx({s_count, m, d});
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * dk;
    Tensor attn({s_count, m, n});
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t i = 0; i < m; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        std::vector<double> logits(n, 0.0);
        for (std::size_t t = 0; t < n; ++t) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dk; ++c) dot += vq.at(s, i, off + c) * vk.at(s, t, off + c);
          logits[t] = dot * scale;
          max_logit = std::max(max_logit, logits[t]);
        }
        double total = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
          double e = std::exp(logits[t] - max_logit);
          attn.at(s, i, t) = e;
          total += e;
        }
        for (std::size_t t = 0; t < n; ++t) {
          attn.at(s, i, t) /= total;
          double a = attn.at(s, i, t);
          for (std::size_t c = 0; c < dk; ++c) ctx.at(s, i, off + c) += a * vv.at(s, t, off + c);
        }
      }
    }
    heads->push_back(std::move(attn));
  }

  Tensor mean({s_count, m, n});
  for (const Tensor& a : *heads) {
    for (std::size_t i = 0; i < mean.numel(); ++i) mean[i] += a[i];
  }
  for (std::size_t i = 0; i < mean.numel(); ++i) mean[i] /= static_cast<double>(n_heads);

  Graph::NodeId out = g.add_node(
      std::move(ctx), {q, k, v},
      [q, k, v, heads, s_count, m, n, dk, scale, n_heads](Graph& gg, Graph::NodeId self) {
        const Tensor& dout = gg.grad(self);
        const Tensor& vq = gg.value(q);
        const Tensor& vk = gg.value(k);
        const Tensor& vv = gg.value(v);
        for (std::size_t h = 0; h < n_heads; ++h) {
          const std::size_t off = h * dk;
          const Tensor& attn = (*heads)[h];
          for (std::size_t s = 0; s < s_count; ++s) {
            for (std::size_t i = 0; i < m; ++i) {
              std::vector<double> d_attn(n, 0.0);
              for (std::size_t t = 0; t < n; ++t) {
                double acc = 0.0;
                for (std::size_t c = 0; c < dk; ++c) {
                  acc += dout.at(s, i, off + c) * vv.at(s, t, off + c);
                }
                d_attn[t] = acc;
              }
              if (gg.needs_grad(v)) {
                Tensor& dv = gg.grad(v);
                for (std::size_t t = 0; t < n; ++t) {
                  double a = attn.at(s, i, t);
                  for (std::size_t c = 0; c < dk; ++c) {
                    dv.at(s, t, off + c) += a * dout.at(s, i, off + c);
                  }
                }
              }
              double dot = 0.0;
              for (std::size_t t = 0; t < n; ++t) dot += attn.at(s, i, t) * d_attn[t];
              for (std::size_t t = 0; t < n; ++t) {
                double ds = attn.at(s, i, t) * (d_attn[t] - dot);
                if (ds == 0.0) continue;
                if (gg.needs_grad(q)) {
                  Tensor& dq = gg.grad(q);
                  for (std::size_t c = 0; c < dk; ++c) {
                    dq.at(s, i, off + c) += ds * vk.at(s, t, off + c) * scale;
                  }
                }
                if (gg.needs_grad(k)) {
                  Tensor& dkg = gg.grad(k);
                  for (std::size_t c = 0; c < dk; ++c) {
                    dkg.at(s, t, off + c) += ds * vq.at(s, i, off + c) * scale;
                  }
                }
              }
            }
          }
        }
      });
  AttentionNodes result;
  result.context = out;
  result.attn_mean = std::move(mean);
  result.attn_heads = *heads;
  return result;
}

Graph::NodeId op_softplus(Graph& g, Graph::NodeId x) {
  const Tensor& vx = g.value(x);
  Tensor out = kernels::softplus(vx);
  return g.add_node(std::move(out), {x}, [x](Graph& gg, Graph::NodeId self) {
    if (!gg.needs_grad(x)) return;
    const Tensor& d = gg.grad(self);
    const Tensor& vx = gg.value(x);
    Tensor& dx = gg.grad(x);
    for (std::size_t i = 0; i < d.numel(); ++i) dx[i] += kernels::sigmoid(vx[i]) * d[i];
  });
}

Graph::NodeId op_physics_score(Graph& g, Graph::NodeId a_dir, Graph::NodeId a_dist,
                               Graph::NodeId beta, Graph::NodeId sigma, Graph::NodeId eps,
                               const Tensor& alignment, const Tensor& distances,
                               const Tensor& speed) {
  check(alignment.rank() == 2 && alignment.same_shape(distances), "op_physics_score: A/D mismatch");
  const std::size_t s_count = alignment.dim(0);
  check(speed.numel() == 1 || speed.numel() == s_count, "op_physics_score: bad speed length");
  const double va_dir = g.value(a_dir).item();
  const double va_dist = g.value(a_dist).item();
  const double vbeta = g.value(beta).item();
  const double vsigma = g.value(sigma).item();
  const double veps = g.value(eps).item();

  Tensor out({s_count, s_count});
  for (std::size_t s = 0; s < s_count; ++s) {
    double v = speed.numel() == 1 ? speed[0] : speed[s];
    for (std::size_t s0 = 0; s0 < s_count; ++s0) {
      double rect = std::max(0.0, alignment.at(s, s0) - veps);
      double ratio = distances.at(s, s0) / vsigma;
      out.at(s, s0) = vbeta * v * va_dir * rect - va_dist * ratio * ratio;
    }
  }
  Tensor align = alignment, dist = distances, spd = speed;
  return g.add_node(
      std::move(out), {a_dir, a_dist, beta, sigma, eps},
      [a_dir, a_dist, beta, sigma, eps, align, dist, spd, s_count, va_dir, va_dist, vbeta, vsigma,
       veps](Graph& gg, Graph::NodeId self) {
        const Tensor& dout = gg.grad(self);
        double g_adir = 0.0, g_adist = 0.0, g_beta = 0.0, g_sigma = 0.0, g_eps = 0.0;
        for (std::size_t s = 0; s < s_count; ++s) {
          double v = spd.numel() == 1 ? spd[0] : spd[s];
          for (std::size_t s0 = 0; s0 < s_count; ++s0) {
            double dphi = dout.at(s, s0);
            if (dphi == 0.0) continue;
            double margin = align.at(s, s0) - veps;
            double rect = std::max(0.0, margin);
            double d2 = dist.at(s, s0) * dist.at(s, s0);
            g_beta += dphi * v * va_dir * rect;
            g_adir += dphi * vbeta * v * rect;
            // subgradient convention: d/dx max(0, x) = 0 at x == 0
            if (margin > 0.0) g_eps -= dphi * vbeta * v * va_dir;
            g_adist -= dphi * d2 / (vsigma * vsigma);
            g_sigma += dphi * 2.0 * va_dist * d2 / (vsigma * vsigma * vsigma);
          }
        }
        if (gg.needs_grad(a_dir)) gg.grad(a_dir)[0] += g_adir;
        if (gg.needs_grad(a_dist)) gg.grad(a_dist)[0] += g_adist;
        if (gg.needs_grad(beta)) gg.grad(beta)[0] += g_beta;
        if (gg.needs_grad(sigma)) gg.grad(sigma)[0] += g_sigma;
        if (gg.needs_grad(eps)) gg.grad(eps)[0] += g_eps;
      });
}

Graph::NodeId op_masked_row_softmax(Graph& g, Graph::NodeId z, const Tensor& mask) {
  const Tensor& vz = g.value(z);
  check(vz.rank() == 2 && vz.same_shape(mask), "op_masked_row_softmax: shape mismatch");
  Tensor out = kernels::masked_row_softmax(vz, mask);
  Tensor m = mask;
  return g.add_node(std::move(out), {z}, [z, m](Graph& gg, Graph::NodeId self) {
    if (!gg.needs_grad(z)) return;
    const Tensor& w = gg.value(self);
    const Tensor& dout = gg.grad(self);
    Tensor& dz = gg.grad(z);
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        if (m.at(r, c) != 0.0) dot += w.at(r, c) * dout.at(r, c);
      }
      for (std::size_t c = 0; c < cols; ++c) {
        if (m.at(r, c) != 0.0) dz.at(r, c) += w.at(r, c) * (dout.at(r, c) - dot);
      }
    }
  });
}

Graph::NodeId op_transport_mix(Graph& g, const std::vector<Graph::NodeId>& weights,
                               Graph::NodeId context) {
  const Tensor& vg = g.value(context);
  check(vg.rank() == 3, "op_transport_mix: context must be S x M x d");
  const std::size_t s_count = vg.dim(0), m_pred = vg.dim(1), d = vg.dim(2);
  check(weights.size() == m_pred, "op_transport_mix: one weight matrix per patch required");
  for (Graph::NodeId w : weights) {
    check(g.value(w).rank() == 2 && g.value(w).dim(0) == s_count && g.value(w).dim(1) == s_count,
          "op_transport_mix: weight matrices must be S x S");
  }
  Tensor out({s_count, m_pred, d});
  for (std::size_t m = 0; m < m_pred; ++m) {
    const Tensor& w = g.value(weights[m]);
    for (std::size_t s = 0; s < s_count; ++s) {
      for (std::size_t s0 = 0; s0 < s_count; ++s0) {
        double wv = w.at(s, s0);
        if (wv == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) out.at(s, m, c) += wv * vg.at(s0, m, c);
      }
    }
  }
  std::vector<Graph::NodeId> parents = weights;
  parents.push_back(context);
  auto ws = weights;
  return g.add_node(std::move(out), std::move(parents),
                    [ws, context, s_count, m_pred, d](Graph& gg, Graph::NodeId self) {
                      const Tensor& dout = gg.grad(self);
                      const Tensor& vg = gg.value(context);
                      for (std::size_t m = 0; m < m_pred; ++m) {
                        const Tensor& w = gg.value(ws[m]);
                        for (std::size_t s = 0; s < s_count; ++s) {
                          for (std::size_t s0 = 0; s0 < s_count; ++s0) {
                            if (gg.needs_grad(ws[m])) {
                              double acc = 0.0;
                              for (std::size_t c = 0; c < d; ++c) {
                                acc += dout.at(s, m, c) * vg.at(s0, m, c);
                              }
                              gg.grad(ws[m]).at(s, s0) += acc;
                            }
                            if (gg.needs_grad(context)) {
                              double wv = w.at(s, s0);
                              if (wv != 0.0) {
                                for (std::size_t c = 0; c < d; ++c) {
                                  gg.grad(context).at(s0, m, c) += wv * dout.at(s, m, c);
                                }
                              }
                            }
                          }
                        }
                      }
                    });
}

Graph::NodeId op_fuse_gate(Graph& g, Graph::NodeId local, Graph::NodeId neighbor,
                           Graph::NodeId gamma) {
  const Tensor& vl = g.value(local);
  const Tensor& vn = g.value(neighbor);
  const Tensor& vg = g.value(gamma);
  check(vl.rank() == 3 && vl.same_shape(vn), "op_fuse_gate: local/neighbor mismatch");
  const std::size_t s_count = vl.dim(0), m = vl.dim(1), d = vl.dim(2);
  const bool per_channel = vg.rank() == 2;
  check(per_channel ? (vg.dim(0) == s_count && vg.dim(1) == d) : vg.numel() == s_count,
        "op_fuse_gate: gate must be S or S x d");
  Tensor out({s_count, m, d});
  for (std::size_t s = 0; s < s_count; ++s) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < d; ++c) {
        double gv = per_channel ? vg.at(s, c) : vg[s];
        double base = vl.at(s, i, c);
        out.at(s, i, c) = gv == 0.0 ? base : base + gv * vn.at(s, i, c);
      }
    }
  }
  return g.add_node(std::move(out), {local, neighbor, gamma},
                    [local, neighbor, gamma, s_count, m, d, per_channel](Graph& gg,
                                                                         Graph::NodeId self) {
                      const Tensor& dout = gg.grad(self);
                      const Tensor& vn = gg.value(neighbor);
                      const Tensor& vg = gg.value(gamma);
                      for (std::size_t s = 0; s < s_count; ++s) {
                        for (std::size_t i = 0; i < m; ++i) {
                          for (std::size_t c = 0; c < d; ++c) {
                            double dv = dout.at(s, i, c);
                            double gv = per_channel ? vg.at(s, c) : vg[s];
                            if (gg.needs_grad(local)) gg.grad(local).at(s, i, c) += dv;
                            if (gg.needs_grad(neighbor)) {
                              gg.grad(neighbor).at(s, i, c) += gv * dv;
                            }
                            if (gg.needs_grad(gamma)) {
                              if (per_channel) {
                                gg.grad(gamma).at(s, c) += dv * vn.at(s, i, c);
                              } else {
                                gg.grad(gamma)[s] += dv * vn.at(s, i, c);
                              }
                            }
                          }
                        }
                      }
                    });
}

Graph::NodeId op_add_bias(Graph& g, Graph::NodeId x, Graph::NodeId bias) {
  const Tensor& vx = g.value(x);
  const Tensor& vb = g.value(bias);
  check(vb.rank() == 1 && vx.rank() >= 1 && vx.shape().back() == vb.dim(0),
        "op_add_bias: bias must match the last axis");
  const std::size_t p = vb.dim(0);
  Tensor out(vx.shape());
  for (std::size_t i = 0; i < vx.numel(); ++i) out[i] = vx[i] + vb[i % p];
  return g.add_node(std::move(out), {x, bias}, [x, bias, p](Graph& gg, Graph::NodeId self) {
    const Tensor& d = gg.grad(self);
    if (gg.needs_grad(x)) {
      Tensor& dx = gg.grad(x);
      for (std::size_t i = 0; i < d.numel(); ++i) dx[i] += d[i];
    }
    if (gg.needs_grad(bias)) {
      Tensor& db = gg.grad(bias);
      for (std::size_t i = 0; i < d.numel(); ++i) db[i % p] += d[i];
    }
  });
}

Graph::NodeId op_activation(Graph& g, Graph::NodeId x, Activation kind) {
  if (kind == Activation::kIdentity) return x;
  const Tensor& vx = g.value(x);
  Tensor out = kernels::activation(vx, kind);
  return g.add_node(std::move(out), {x}, [x, kind](Graph& gg, Graph::NodeId self) {
    if (!gg.needs_grad(x)) return;
    const Tensor& d = gg.grad(self);
    const Tensor& vx = gg.value(x);
    Tensor& dx = gg.grad(x);
    if (kind == Activation::kSoftplus) {
      for (std::size_t i = 0; i < d.numel(); ++i) dx[i] += kernels::sigmoid(vx[i]) * d[i];
    } else {
      const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
      const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * M_PI);
      for (std::size_t i = 0; i < d.numel(); ++i) {
        double cdf = 0.5 * (1.0 + std::erf(vx[i] * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * vx[i] * vx[i]);
        dx[i] += (cdf + vx[i] * pdf) * d[i];
      }
    }
  });
}

Graph::NodeId op_reshape(Graph& g, Graph::NodeId x, std::vector<std::size_t> shape) {
  const Tensor& vx = g.value(x);
  Tensor out(std::move(shape), vx.values());
  return g.add_node(std::move(out), {x}, [x](Graph& gg, Graph::NodeId self) {
    if (!gg.needs_grad(x)) return;
    const Tensor& d = gg.grad(self);
    Tensor& dx = gg.grad(x);
    for (std::size_t i = 0; i < d.numel(); ++i) dx[i] += d[i];
  });
}

Graph::NodeId op_mse(Graph& g, Graph::NodeId pred, const Tensor& target) {
  const Tensor& vp = g.value(pred);
  check(vp.same_shape(target), "op_mse: prediction/target shape mismatch");
  const double n = static_cast<double>(vp.numel());
  double acc = 0.0;
  for (std::size_t i = 0; i < vp.numel(); ++i) {
    double r = vp[i] - target[i];
    acc += r * r;
  }
  Tensor t = target;
  return g.add_node(Tensor::scalar(acc / n), {pred}, [pred, t, n](Graph& gg, Graph::NodeId self) {
    if (!gg.needs_grad(pred)) return;
    double d = gg.grad(self)[0];
    const Tensor& vp = gg.value(pred);
    Tensor& dp = gg.grad(pred);
    for (std::size_t i = 0; i < vp.numel(); ++i) dp[i] += 2.0 * (vp[i] - t[i]) / n * d;
  });
}

Graph::NodeId op_add_scaled_square(Graph& g, Graph::NodeId a, Graph::NodeId b, double coeff) {
  const double va = g.value(a).item();
  const double vb = g.value(b).item();
  return g.add_node(Tensor::scalar(va + coeff * vb * vb), {a, b},
                    [a, b, coeff](Graph& gg, Graph::NodeId self) {
                      double d = gg.grad(self)[0];
                      if (gg.needs_grad(a)) gg.grad(a)[0] += d;
                      if (gg.needs_grad(b)) gg.grad(b)[0] += coeff * 2.0 * gg.value(b).item() * d;
                    });
}

}  // namespace windcast
