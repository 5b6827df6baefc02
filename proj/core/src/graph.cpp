#include "dtp/graph.hpp"

#include <cmath>
#include <memory>

namespace dtp {

int ParameterSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw TensorError("duplicate parameter name: " + name);
  const int id = static_cast<int>(values_.size());
  index_[name] = id;
  names_.push_back(name);
  values_.push_back(std::move(init));
  return id;
}

int ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

int64_t ParameterSet::total_elements() const {
  int64_t n = 0;
  for (const Tensor& t : values_) n += t.numel();
  return n;
}

std::vector<Tensor> ParameterSet::zero_like_grads() const {
  std::vector<Tensor> g;
  g.reserve(values_.size());
  for (const Tensor& t : values_) g.push_back(Tensor::zeros(t.shape()));
  return g;
}

Node* Graph::make(Tensor value, std::vector<Node*> parents) {
  nodes_.emplace_back();
  Node* n = &nodes_.back();
  n->owned = std::move(value);
  n->val = &n->owned;
  if (grad_enabled_) {
    for (Node* p : parents)
      if (p->requires_grad) {
        n->requires_grad = true;
        break;
      }
  }
  return n;
}

void Graph::ensure_grad(Node* n) {
  if (n->grad.empty()) n->grad = Tensor::zeros(n->v().shape());
}

Node* Graph::input(Tensor t) {
  nodes_.emplace_back();
  Node* n = &nodes_.back();
  n->owned = std::move(t);
  n->val = &n->owned;
  return n;
}

Node* Graph::input_borrow(const Tensor* t) {
  nodes_.emplace_back();
  Node* n = &nodes_.back();
  n->val = t;
  return n;
}

Node* Graph::param(ParameterSet& ps, int param_id) {
  if (param_id < 0 || param_id >= ps.size()) throw TensorError("bad parameter id");
  nodes_.emplace_back();
  Node* n = &nodes_.back();
  n->val = &ps.value(param_id);
  n->param_id = param_id;
  n->requires_grad = grad_enabled_;
  param_leaves_.push_back(n);
  return n;
}

Node* Graph::add(Node* a, Node* b) {
  if (!a->v().same_shape(b->v()))
    throw TensorError("add: shape mismatch " + shape_str(a->v().shape()) + " vs " +
                      shape_str(b->v().shape()));
  Tensor out(a->v().shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a->v().at(i) + b->v().at(i);
  Node* o = make(std::move(out), {a, b});
  if (o->requires_grad)
    o->backward = [o, a, b]() {
      const int64_t n = o->grad.numel();
      if (a->requires_grad) {
        ensure_grad(a);
        for (int64_t i = 0; i < n; ++i) a->grad.at(i) += o->grad.at(i);
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int64_t i = 0; i < n; ++i) b->grad.at(i) += o->grad.at(i);
      }
    };
  return o;
}

Node* Graph::sub(Node* a, Node* b) {
  if (!a->v().same_shape(b->v()))
    throw TensorError("sub: shape mismatch " + shape_str(a->v().shape()) + " vs " +
                      shape_str(b->v().shape()));
  Tensor out(a->v().shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a->v().at(i) - b->v().at(i);
  Node* o = make(std::move(out), {a, b});
  if (o->requires_grad)
    o->backward = [o, a, b]() {
      const int64_t n = o->grad.numel();
      if (a->requires_grad) {
        ensure_grad(a);
        for (int64_t i = 0; i < n; ++i) a->grad.at(i) += o->grad.at(i);
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int64_t i = 0; i < n; ++i) b->grad.at(i) -= o->grad.at(i);
      }
    };
  return o;
}

Node* Graph::mul(Node* a, Node* b) {
  if (!a->v().same_shape(b->v()))
    throw TensorError("mul: shape mismatch " + shape_str(a->v().shape()) + " vs " +
                      shape_str(b->v().shape()));
  Tensor out(a->v().shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a->v().at(i) * b->v().at(i);
  Node* o = make(std::move(out), {a, b});
  if (o->requires_grad)
    o->backward = [o, a, b]() {
      const int64_t n = o->grad.numel();
      if (a->requires_grad) {
        ensure_grad(a);
        for (int64_t i = 0; i < n; ++i) a->grad.at(i) += o->grad.at(i) * b->v().at(i);
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int64_t i = 0; i < n; ++i) b->grad.at(i) += o->grad.at(i) * a->v().at(i);
      }
    };
  return o;
}

Node* Graph::scale(Node* a, double s) {
  Tensor out(a->v().shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out.at(i) = a->v().at(i) * s;
  Node* o = make(std::move(out), {a});
  if (o->requires_grad)
    o->backward = [o, a, s]() {
      ensure_grad(a);
      const int64_t n = o->grad.numel();
      for (int64_t i = 0; i < n; ++i) a->grad.at(i) += o->grad.at(i) * s;
    };
  return o;
}

Node* Graph::add_rowvec(Node* a, Node* b) {
  const int64_t n = a->v().rows(), d = a->v().cols();
  if (b->v().numel() != d)
    throw TensorError("add_rowvec: vector length " + std::to_string(b->v().numel()) +
                      " does not match row width " + std::to_string(d));
  Tensor out(a->v().shape());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out.at(i * d + j) = a->v().at(i * d + j) + b->v().at(j);
  Node* o = make(std::move(out), {a, b});
  if (o->requires_grad)
    o->backward = [o, a, b, n, d]() {
      if (a->requires_grad) {
        ensure_grad(a);
        const int64_t total = n * d;
        for (int64_t i = 0; i < total; ++i) a->grad.at(i) += o->grad.at(i);
      }
      if (b->requires_grad) {
        ensure_grad(b);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < d; ++j) b->grad.at(j) += o->grad.at(i * d + j);
      }
    };
  return o;
}

Node* Graph::matmul(Node* a, Node* b) {
  const int64_t n = a->v().rows(), k = a->v().cols();
  if (b->v().rows() != k)
    throw TensorError("matmul: inner extents differ, " + shape_str(a->v().shape()) + " x " +
                      shape_str(b->v().shape()));
  const int64_t m = b->v().cols();
  Tensor out({n, m});
  {
    const double* A = a->v().data();
    const double* B = b->v().data();
    double* C = out.data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t l = 0; l < k; ++l) {
        const double av = A[i * k + l];
        if (av == 0.0) continue;
        const double* Brow = B + l * m;
        double* Crow = C + i * m;
        for (int64_t j = 0; j < m; ++j) Crow[j] += av * Brow[j];
      }
  }
  Node* o = make(std::move(out), {a, b});
  if (o->requires_grad)
    o->backward = [o, a, b, n, k, m]() {
      const double* U = o->grad.data();
      if (a->requires_grad) {
        ensure_grad(a);
        const double* B = b->v().data();
        double* dA = a->grad.data();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t l = 0; l < k; ++l) {
            const double* Urow = U + i * m;
            const double* Brow = B + l * m;
            double s = 0.0;
            for (int64_t j = 0; j < m; ++j) s += Urow[j] * Brow[j];
            dA[i * k + l] += s;
          }
      }
      if (b->requires_grad) {
        ensure_grad(b);
        const double* A = a->v().data();
        double* dB = b->grad.data();
        for (int64_t i = 0; i < n; ++i)
          for (int64_t l = 0; l < k; ++l) {
            const double av = A[i * k + l];
            if (av == 0.0) continue;
            const double* Urow = U + i * m;
            double* dBrow = dB + l * m;
            for (int64_t j = 0; j < m; ++j) dBrow[j] += av * Urow[j];
          }
      }
    };
  return o;
}

Node* Graph::transpose(Node* a) {
  const int64_t n = a->v().rows(), m = a->v().cols();
  Tensor out({m, n});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out.at(j * n + i) = a->v().at(i * m + j);
  Node* o = make(std::move(out), {a});
  if (o->requires_grad)
    o->backward = [o, a, n, m]() {
      ensure_grad(a);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) a->grad.at(i * m + j) += o->grad.at(j * n + i);
    };
  return o;
}

Node* Graph::slice_rows(Node* a, int64_t r0, int64_t n) {
  const int64_t rows = a->v().rows(), d = a->v().cols();
  if (r0 < 0 || n <= 0 || r0 + n > rows)
    throw TensorError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r0 + n) +
                      ") out of " + std::to_string(rows));
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out.at(i * d + j) = a->v().at((r0 + i) * d + j);
  Node* o = make(std::move(out), {a});
  if (o->requires_grad)
    o->backward = [o, a, r0, n, d]() {
      ensure_grad(a);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) a->grad.at((r0 + i) * d + j) += o->grad.at(i * d + j);
    };
  return o;
}

Node* Graph::slice_cols(Node* a, int64_t c0, int64_t n) {
  const int64_t rows = a->v().rows(), d = a->v().cols();
  if (c0 < 0 || n <= 0 || c0 + n > d)
    throw TensorError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c0 + n) +
                      ") out of " + std::to_string(d));
  Tensor out({rows, n});
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(i * n + j) = a->v().at(i * d + c0 + j);
  Node* o = make(std::move(out), {a});
  if (o->requires_grad)
    o->backward = [o, a, c0, n, rows, d]() {
      ensure_grad(a);
      for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < n; ++j) a->grad.at(i * d + c0 + j) += o->grad.at(i * n + j);
    };
  return o;
}

Node* Graph::concat_rows(const std::vector<Node*>& parts) {
  if (parts.empty()) throw TensorError("concat_rows: no parts");
  const int64_t d = parts[0]->v().cols();
  int64_t total = 0;
  for (Node* p : parts) {
    if (p->v().cols() != d) throw TensorError("concat_rows: column widths differ");
    total += p->v().rows();
  }
  Tensor out({total, d});
  int64_t r = 0;
  for (Node* p : parts) {
    const int64_t n = p->v().rows();
    for (int64_t i = 0; i < n * d; ++i) out.at(r * d + i) = p->v().at(i);
    r += n;
  }
  Node* o = make(std::move(out), parts);
  if (o->requires_grad) {
    std::vector<Node*> ps = parts;
    o->backward = [o, ps, d]() {
      int64_t r = 0;
      for (Node* p : ps) {
        const int64_t n = p->v().rows();
        if (p->requires_grad) {
          ensure_grad(p);
          for (int64_t i = 0; i < n * d; ++i) p->grad.at(i) += o->grad.at(r * d + i);
        }
        r += n;
      }
    };
  }
  return o;
}

Node* Graph::concat_cols(const std::vector<Node*>& parts) {
  if (parts.empty()) throw TensorError("concat_cols: no parts");
  const int64_t rows = parts[0]->v().rows();
  int64_t total = 0;
  for (Node* p : parts) {
    if (p->v().rows() != rows) throw TensorError("concat_cols: row counts differ");
    total += p->v().cols();
  }
  Tensor out({rows, total});
  int64_t c = 0;
  for (Node* p : parts) {
    const int64_t w = p->v().cols();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < w; ++j) out.at(i * total + c + j) = p->v().at(i * w + j);
    c += w;
  }
  Node* o = make(std::move(out), parts);
  if (o->requires_grad) {
    std::vector<Node*> ps = parts;
    o->backward = [o, ps, rows, total]() {
      int64_t c = 0;
      for (Node* p : ps) {
        const int64_t w = p->v().cols();
        if (p->requires_grad) {
          ensure_grad(p);
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < w; ++j) p->grad.at(i * w + j) += o->grad.at(i * total + c + j);
        }
        c += w;
      }
    };
  }
  return o;
}

Node* Graph::softmax_rows(Node* a) {
  const int64_t n = a->v().rows(), d = a->v().cols();
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i) {
    double mx = a->v().at(i * d);
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, a->v().at(i * d + j));
    double sum = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double e = std::exp(a->v().at(i * d + j) - mx);
      out.at(i * d + j) = e;
      sum += e;
    }
    for (int64_t j = 0; j < d; ++j) out.at(i * d + j) /= sum;
  }
  Node* o = make(std::move(out), {a});
  if (o->requires_grad)
    o->backward = [o, a, n, d]() {
      ensure_grad(a);
      for (int64_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < d; ++j) dot += o->grad.at(i * d + j) * o->v().at(i * d + j);
        for (int64_t j = 0; j < d; ++j)
          a->grad.at(i * d + j) += o->v().at(i * d + j) * (o->grad.at(i * d + j) - dot);
      }
    };
  return o;
}

Node* Graph::rms_norm(Node* x, Node* gain, double eps) {
  const int64_t n = x->v().rows(), d = x->v().cols();
  const bool scalar_gain = gain->v().numel() == 1;
  if (!scalar_gain && gain->v().numel() != d)
    throw TensorError("rms_norm: gain must be scalar or match row width " + std::to_string(d));
  auto rinv = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i) {
    double ms = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double v = x->v().at(i * d + j);
      ms += v * v;
    }
    ms /= static_cast<double>(d);
    const double ri = 1.0 / std::sqrt(ms + eps);
    (*rinv)[static_cast<size_t>(i)] = ri;
    for (int64_t j = 0; j < d; ++j) {
      const double g = scalar_gain ? gain->v().at(0) : gain->v().at(j);
      out.at(i * d + j) = g * x->v().at(i * d + j) * ri;
    }
  }
  Node* o = make(std::move(out), {x, gain});
  if (o->requires_grad)
    o->backward = [o, x, gain, rinv, n, d, scalar_gain]() {
      for (int64_t i = 0; i < n; ++i) {
        const double ri = (*rinv)[static_cast<size_t>(i)];
        if (x->requires_grad) {
          ensure_grad(x);
          double s = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            const double g = scalar_gain ? gain->v().at(0) : gain->v().at(j);
            s += o->grad.at(i * d + j) * g * x->v().at(i * d + j);
          }
          s *= ri * ri * ri / static_cast<double>(d);
          for (int64_t j = 0; j < d; ++j) {
            const double g = scalar_gain ? gain->v().at(0) : gain->v().at(j);
            x->grad.at(i * d + j) += g * o->grad.at(i * d + j) * ri - x->v().at(i * d + j) * s;
          }
        }
        if (gain->requires_grad) {
          ensure_grad(gain);
          for (int64_t j = 0; j < d; ++j) {
            const double contrib = o->grad.at(i * d + j) * x->v().at(i * d + j) * ri;
            gain->grad.at(scalar_gain ? 0 : j) += contrib;
          }
        }
      }
    };
  return o;
}

Node* Graph::layer_norm(Node* x, Node* gain, Node* bias, double eps) {
  const int64_t n = x->v().rows(), d = x->v().cols();
  if (gain->v().numel() != d || bias->v().numel() != d)
    throw TensorError("layer_norm: gain/bias must match row width " + std::to_string(d));
  auto sinv = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(n * d));
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += x->v().at(i * d + j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double c = x->v().at(i * d + j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double si = 1.0 / std::sqrt(var + eps);
    (*sinv)[static_cast<size_t>(i)] = si;
    for (int64_t j = 0; j < d; ++j) {
      const double xh = (x->v().at(i * d + j) - mu) * si;
      (*xhat)[static_cast<size_t>(i * d + j)] = xh;
      out.at(i * d + j) = gain->v().at(j) * xh + bias->v().at(j);
    }
  }
  Node* o = make(std::move(out), {x, gain, bias});
  if (o->requires_grad)
    o->backward = [o, x, gain, bias, sinv, xhat, n, d]() {
      for (int64_t i = 0; i < n; ++i) {
        const double si = (*sinv)[static_cast<size_t>(i)];
        if (x->requires_grad) {
          ensure_grad(x);
          double a1 = 0.0, a2 = 0.0;
          for (int64_t j = 0; j < d; ++j) {
            const double gu = gain->v().at(j) * o->grad.at(i * d + j);
            a1 += gu;
            a2 += gu * (*xhat)[static_cast<size_t>(i * d + j)];
          }
          for (int64_t j = 0; j < d; ++j) {
            const double gu = gain->v().at(j) * o->grad.at(i * d + j);
            const double xh = (*xhat)[static_cast<size_t>(i * d + j)];
            x->grad.at(i * d + j) += si * (gu - (a1 + xh * a2) / static_cast<double>(d));
          }
        }
        if (gain->requires_grad) {
          ensure_grad(gain);
          for (int64_t j = 0; j < d; ++j)
            gain->grad.at(j) += o->grad.at(i * d + j) * (*xhat)[static_cast<size_t>(i * d + j)];
        }
        if (bias->requires_grad) {
          ensure_grad(bias);
          for (int64_t j = 0; j < d; ++j) bias->grad.at(j) += o->grad.at(i * d + j);
        }
      }
    };
  return o;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Node* Graph::gelu(Node* a) {
  Tensor out(a->v().shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) {
    const double v = a->v().at(i);
    out.at(i) = v * 0.5 * (1.0 + std::erf(v * kInvSqrt2));
  }
  Node* o = make(std::move(out), {a});
  if (o->requires_grad)
    o->backward = [o, a, n]() {
      ensure_grad(a);
      for (int64_t i = 0; i < n; ++i) {
        const double v = a->v().at(i);
        const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        a->grad.at(i) += o->grad.at(i) * (phi + v * pdf);
      }
    };
  return o;
}

Node* Graph::gather_rows(Node* table, std::vector<int64_t> ids) {
  const int64_t v = table->v().rows(), d = table->v().cols();
  for (int64_t id : ids)
    if (id < 0 || id >= v)
      throw TensorError("gather_rows: id " + std::to_string(id) + " out of table rows " +
                        std::to_string(v));
  const int64_t n = static_cast<int64_t>(ids.size());
  if (n == 0) throw TensorError("gather_rows: empty id list");
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out.at(i * d + j) = table->v().at(ids[static_cast<size_t>(i)] * d + j);
  Node* o = make(std::move(out), {table});
  if (o->requires_grad) {
    auto idv = std::make_shared<std::vector<int64_t>>(std::move(ids));
    o->backward = [o, table, idv, n, d]() {
      ensure_grad(table);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j)
          table->grad.at((*idv)[static_cast<size_t>(i)] * d + j) += o->grad.at(i * d + j);
    };
  }
  return o;
}

Node* Graph::sum_all(Node* a) {
  double s = 0.0;
  const int64_t n = a->v().numel();
  for (int64_t i = 0; i < n; ++i) s += a->v().at(i);
  Node* o = make(Tensor::scalar(s), {a});
  if (o->requires_grad)
    o->backward = [o, a, n]() {
      ensure_grad(a);
      const double u = o->grad.at(0);
      for (int64_t i = 0; i < n; ++i) a->grad.at(i) += u;
    };
  return o;
}

Node* Graph::mean_all(Node* a) { return scale(sum_all(a), 1.0 / static_cast<double>(a->v().numel())); }

Node* Graph::mse_masked(Node* pred, Tensor target, Tensor mask) {
  if (!pred->v().same_shape(target) || !pred->v().same_shape(mask))
    throw TensorError("mse_masked: pred/target/mask shapes must match");
  const int64_t n = pred->v().numel();
  int64_t m = 0;
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (mask.at(i) != 0.0) {
      const double d = pred->v().at(i) - target.at(i);
      s += d * d;
      ++m;
    }
  }
  if (m == 0) throw TensorError("mse_masked: mask selects no elements");
  Node* o = make(Tensor::scalar(s / static_cast<double>(m)), {pred});
  if (o->requires_grad) {
    auto tgt = std::make_shared<Tensor>(std::move(target));
    auto msk = std::make_shared<Tensor>(std::move(mask));
    o->backward = [o, pred, tgt, msk, n, m]() {
      ensure_grad(pred);
      const double u = o->grad.at(0) * 2.0 / static_cast<double>(m);
      for (int64_t i = 0; i < n; ++i)
        if (msk->at(i) != 0.0) pred->grad.at(i) += u * (pred->v().at(i) - tgt->at(i));
    };
  }
  return o;
}

void Graph::backward(Node* root) {
  if (!grad_enabled_) throw TensorError("backward() on a no-grad graph");
  if (root->v().numel() != 1) throw TensorError("backward root must be scalar");
  if (!root->requires_grad) throw TensorError("backward root does not depend on parameters");
  ensure_grad(root);
  root->grad.at(0) = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = *it;
    if (n.backward && n.has_grad()) n.backward();
  }
}

void Graph::add_param_grads(std::vector<Tensor>& grads) const {
  for (const Node* leaf : param_leaves_) {
    if (!leaf->has_grad()) continue;
    Tensor& g = grads[static_cast<size_t>(leaf->param_id)];
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) g.at(i) += leaf->grad.at(i);
  }
}

}  // namespace dtp
