#include "saber/autodiff.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

#include "saber/error.hpp"

namespace saber::ad {

const Mat& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backward fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Mat value, std::span<const Var> parents, Backward fn) {
  Node n;
  n.value = std::move(value);
  for (const auto& p : parents) {
    if (p.tape() != this) throw InvalidArgument("autodiff: mixing tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root) {
  if (root.tape() != this) throw InvalidArgument("backward: foreign root");
  if (root.rows() != 1 || root.cols() != 1) {
    throw InvalidArgument("backward: root must be a scalar");
  }
  accumulate(root.id(), Mat::Ones(1, 1));
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
        n.param->grad = Mat::Zero(n.value.rows(), n.value.cols());
      }
      n.param->grad += n.grad;
    }
  }
}

namespace {

Tape& tape_of(const Var& a) { return *a.tape(); }

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument(fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, a.rows(),
                                      a.cols(), b.rows(), b.cols()));
  }
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument(fmt::format("matmul: {}x{} · {}x{}", a.rows(), a.cols(),
                                      b.rows(), b.cols()));
  }
  Mat out = a.value() * b.value();
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value().transpose());
    if (t.requires_grad(b.id())) t.accumulate(b.id(), a.value().transpose() * g);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw InvalidArgument(fmt::format("matmul_nt: {}x{} · ({}x{})ᵀ", a.rows(), a.cols(),
                                      b.rows(), b.cols()));
  }
  Mat out = a.value() * b.value().transpose();
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * b.value());
    if (t.requires_grad(b.id())) t.accumulate(b.id(), g.transpose() * a.value());
  });
}

Var transpose(const Var& a) {
  Mat out = a.value().transpose();
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self).transpose());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Mat out = a.value() + b.value();
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self));
    t.accumulate(b.id(), t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Mat out = a.value() - b.value();
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self));
    if (t.requires_grad(b.id())) t.accumulate(b.id(), -t.grad(self));
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Mat out = a.value().cwiseProduct(b.value());
  return tape_of(a).record(std::move(out), {a, b}, [a, b](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g.cwiseProduct(b.value()));
    if (t.requires_grad(b.id())) t.accumulate(b.id(), g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& a, double c) {
  Mat out = a.value() * c;
  return tape_of(a).record(std::move(out), {a}, [a, c](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self) * c);
  });
}

Var scale_by(const Var& a, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw InvalidArgument("scale_by: s must be 1x1");
  Mat out = a.value() * s.scalar();
  return tape_of(a).record(std::move(out), {a, s}, [a, s](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(a.id())) t.accumulate(a.id(), g * s.scalar());
    if (t.requires_grad(s.id())) {
      t.accumulate(s.id(), Mat::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
    }
  });
}

Var affine(const Var& a, double mul, double shift) {
  Mat out = (a.value() * mul).array() + shift;
  return tape_of(a).record(std::move(out), {a}, [a, mul](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self) * mul);
  });
}

Var add_row(const Var& a, const Var& r) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw InvalidArgument(fmt::format("add_row: {}x{} + row {}x{}", a.rows(), a.cols(),
                                      r.rows(), r.cols()));
  }
  Mat out = a.value().rowwise() + r.value().row(0);
  return tape_of(a).record(std::move(out), {a, r}, [a, r](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.accumulate(a.id(), g);
    if (t.requires_grad(r.id())) t.accumulate(r.id(), g.colwise().sum());
  });
}

Var mul_col(const Var& a, const Var& c) {
  if (c.cols() != 1 || c.rows() != a.rows()) {
    throw InvalidArgument(fmt::format("mul_col: {}x{} * col {}x{}", a.rows(), a.cols(),
                                      c.rows(), c.cols()));
  }
  Mat out = a.value().array().colwise() * c.value().col(0).array();
  return tape_of(a).record(std::move(out), {a, c}, [a, c](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.requires_grad(a.id())) {
      Mat ga = g.array().colwise() * c.value().col(0).array();
      t.accumulate(a.id(), ga);
    }
    if (t.requires_grad(c.id())) {
      Mat gc = g.cwiseProduct(a.value()).rowwise().sum();
      t.accumulate(c.id(), gc);
    }
  });
}

Var sigmoid(const Var& a) {
  Mat out = a.value().unaryExpr([](double x) {
    // Split by sign so exp never overflows.
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
  Mat s = out;
  return tape_of(a).record(std::move(out), {a}, [a, s](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self).cwiseProduct(
                             (s.array() * (1.0 - s.array())).matrix()));
  });
}

Var gelu(const Var& a) {
  Mat out = a.value().unaryExpr(
      [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); });
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, int self) {
    Mat d = a.value().unaryExpr([](double x) {
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      return cdf + x * pdf;
    });
    t.accumulate(a.id(), t.grad(self).cwiseProduct(d));
  });
}

Var log(const Var& a) {
  Mat out = a.value().array().log();
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self).cwiseQuotient(a.value()));
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Mat out = a.value().cwiseMax(lo).cwiseMin(hi);
  return tape_of(a).record(std::move(out), {a}, [a, lo, hi](Tape& t, int self) {
    const Mat& x = a.value();
    Mat g = t.grad(self);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double v = x.data()[i];
      if (v < lo || v > hi) g.data()[i] = 0.0;
    }
    t.accumulate(a.id(), g);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no parts");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw InvalidArgument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), parts, [keep](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Eigen::Index c0 = 0;
    for (const auto& p : keep) {
      if (t.requires_grad(p.id())) t.accumulate(p.id(), g.middleCols(c0, p.cols()));
      c0 += p.cols();
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no parts");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw InvalidArgument("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  std::vector<Var> keep(parts.begin(), parts.end());
  return tape_of(parts[0]).record(std::move(out), parts, [keep](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Eigen::Index r0 = 0;
    for (const auto& p : keep) {
      if (t.requires_grad(p.id())) t.accumulate(p.id(), g.middleRows(r0, p.rows()));
      r0 += p.rows();
    }
  });
}

Var slice(const Var& a, Eigen::Index r0, Eigen::Index nr, Eigen::Index c0,
          Eigen::Index nc) {
  if (r0 < 0 || c0 < 0 || r0 + nr > a.rows() || c0 + nc > a.cols()) {
    throw InvalidArgument("slice: out of range");
  }
  Mat out = a.value().block(r0, c0, nr, nc);
  return tape_of(a).record(std::move(out), {a}, [a, r0, nr, c0, nc](Tape& t, int self) {
    Mat g = Mat::Zero(a.rows(), a.cols());
    g.block(r0, c0, nr, nc) = t.grad(self);
    t.accumulate(a.id(), g);
  });
}

Var row(const Var& a, Eigen::Index r) { return slice(a, r, 1, 0, a.cols()); }

Var gather_rows(const Var& a, std::span<const int> indices) {
  Mat out(static_cast<Eigen::Index>(indices.size()), a.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= a.rows()) {
      throw InvalidArgument("gather_rows: index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(indices[i]);
  }
  std::vector<int> idx(indices.begin(), indices.end());
  return tape_of(a).record(std::move(out), {a}, [a, idx](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat ga = Mat::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(a.id(), ga);
  });
}

Var repeat_rows(const Var& a, Eigen::Index n) {
  if (a.rows() != 1) throw InvalidArgument("repeat_rows: expects a single row");
  Mat out = a.value().replicate(n, 1);
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a.id(), t.grad(self).colwise().sum());
  });
}

Var sum(const Var& a) {
  Mat out = Mat::Constant(1, 1, a.value().sum());
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a.id(), Mat::Constant(a.rows(), a.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_squares(const Var& a) {
  Mat out = Mat::Constant(1, 1, a.value().squaredNorm());
  return tape_of(a).record(std::move(out), {a}, [a](Tape& t, int self) {
    t.accumulate(a.id(), a.value() * (2.0 * t.grad(self)(0, 0)));
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 || bias.cols() != d) {
    throw InvalidArgument("layer_norm: gain/bias must be 1xd");
  }
  Mat xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.value().row(i).mean();
    const auto centered = (x.value().row(i).array() - mu).matrix();
    const double var = centered.squaredNorm() / static_cast<double>(d);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = centered * inv_std(i);
  }
  Mat out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return tape_of(x).record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat, inv_std, d](Tape& t, int self) {
        const Mat& g = t.grad(self);
        if (t.requires_grad(gain.id())) {
          t.accumulate(gain.id(), g.cwiseProduct(xhat).colwise().sum());
        }
        if (t.requires_grad(bias.id())) t.accumulate(bias.id(), g.colwise().sum());
        if (t.requires_grad(x.id())) {
          Mat dxhat = g.array().rowwise() * gain.value().row(0).array();
          Mat dx(dxhat.rows(), d);
          for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
            const double m1 = dxhat.row(i).mean();
            const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
            dx.row(i) = ((dxhat.row(i).array() - m1) - xhat.row(i).array() * m2) *
                        inv_std(i);
          }
          t.accumulate(x.id(), dx);
        }
      });
}

Var normalize_rows(const Var& x) {
  Eigen::VectorXd norms = x.value().rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (norms(i) == 0.0) throw InvalidArgument("normalize_rows: zero-norm row");
  }
  Mat y = x.value().array().colwise() / norms.array();
  Mat y_copy = y;
  return tape_of(x).record(std::move(y), {x}, [x, y_copy, norms](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Eigen::VectorXd proj = g.cwiseProduct(y_copy).rowwise().sum();
    Mat dx = (g - (y_copy.array().colwise() * proj.array()).matrix()).array().colwise() /
             norms.array();
    t.accumulate(x.id(), dx);
  });
}

Var softmax_rows(const Var& x) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mx = x.value().row(i).maxCoeff();
    y.row(i) = (x.value().row(i).array() - mx).exp();
    y.row(i) /= y.row(i).sum();
  }
  Mat y_copy = y;
  return tape_of(x).record(std::move(y), {x}, [x, y_copy](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Eigen::VectorXd dotp = g.cwiseProduct(y_copy).rowwise().sum();
    Mat dx = y_copy.cwiseProduct((g.array().colwise() - dotp.array()).matrix());
    t.accumulate(x.id(), dx);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, const Var& mask,
              const BoolMat& allowed, int n_heads, const std::string& label,
              AttentionTrace* trace) {
  const Eigen::Index L = q.rows();
  const Eigen::Index S = k.rows();
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d || v.rows() != S) {
    throw InvalidArgument("attention: q/k/v shape mismatch");
  }
  if (n_heads <= 0 || d % n_heads != 0) {
    throw InvalidArgument("attention: width not divisible by head count");
  }
  if (allowed.rows() != L || allowed.cols() != S) {
    throw InvalidArgument("attention: allowed-mask shape mismatch");
  }
  const bool has_mask = mask.valid();
  if (has_mask && (mask.rows() != L || mask.cols() != S)) {
    throw InvalidArgument("attention: mask shape mismatch");
  }
  for (Eigen::Index i = 0; i < L; ++i) {
    if (!allowed.row(i).any()) {
      throw NumericError(fmt::format("{}: row {} has no attendable position", label, i));
    }
  }

  const Eigen::Index dh = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Mat> probs(n_heads);
  Mat out(L, d);
  for (int h = 0; h < n_heads; ++h) {
    const auto qh = q.value().middleCols(h * dh, dh);
    const auto kh = k.value().middleCols(h * dh, dh);
    const auto vh = v.value().middleCols(h * dh, dh);
    Mat logits = (qh * kh.transpose()) * inv_sqrt;
    if (has_mask) logits += mask.value();
    Mat p = Mat::Zero(L, S);
    for (Eigen::Index i = 0; i < L; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < S; ++j) {
        if (allowed(i, j)) mx = std::max(mx, logits(i, j));
      }
      double z = 0.0;
      for (Eigen::Index j = 0; j < S; ++j) {
        if (allowed(i, j)) {
          p(i, j) = std::exp(logits(i, j) - mx);
          z += p(i, j);
        }
      }
      p.row(i) /= z;
      if (!p.row(i).allFinite()) {
        throw NumericError(fmt::format("{}: NaN in attention head {} row {}", label, h, i));
      }
    }
    out.middleCols(h * dh, dh) = p * vh;
    probs[h] = std::move(p);
  }
  if (trace) trace->probs = probs;

  std::vector<Var> parents{q, k, v};
  if (has_mask) parents.push_back(mask);
  return tape_of(q).record(
      std::move(out), parents,
      [q, k, v, mask, has_mask, probs = std::move(probs), n_heads, dh, inv_sqrt](
          Tape& t, int self) {
        const Mat& g = t.grad(self);
        const Eigen::Index L = q.rows();
        const Eigen::Index S = k.rows();
        Mat dq = Mat::Zero(L, q.cols());
        Mat dk = Mat::Zero(S, k.cols());
        Mat dv = Mat::Zero(S, v.cols());
        Mat dm = Mat::Zero(L, S);
        for (int h = 0; h < n_heads; ++h) {
          const Mat& p = probs[h];
          const auto gh = g.middleCols(h * dh, dh);
          const auto qh = q.value().middleCols(h * dh, dh);
          const auto kh = k.value().middleCols(h * dh, dh);
          const auto vh = v.value().middleCols(h * dh, dh);
          dv.middleCols(h * dh, dh) += p.transpose() * gh;
          Mat dp = gh * vh.transpose();
          Eigen::VectorXd rowdot = dp.cwiseProduct(p).rowwise().sum();
          Mat ds = p.cwiseProduct((dp.array().colwise() - rowdot.array()).matrix());
          dm += ds;
          dq.middleCols(h * dh, dh) += ds * kh * inv_sqrt;
          dk.middleCols(h * dh, dh) += ds.transpose() * qh * inv_sqrt;
        }
        t.accumulate(q.id(), dq);
        t.accumulate(k.id(), dk);
        t.accumulate(v.id(), dv);
        if (has_mask) t.accumulate(mask.id(), dm);
      });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  const Eigen::Index R = logits.rows();
  const Eigen::Index V = logits.cols();
  if (static_cast<Eigen::Index>(targets.size()) != R) {
    throw InvalidArgument("cross_entropy: one target per row required");
  }
  Mat p(R, V);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < R; ++i) {
    const int tgt = targets[static_cast<std::size_t>(i)];
    if (tgt < 0 || tgt >= V) {
      throw InvalidArgument(fmt::format("cross_entropy: target {} outside vocabulary of {}",
                                        tgt, V));
    }
    const double mx = logits.value().row(i).maxCoeff();
    p.row(i) = (logits.value().row(i).array() - mx).exp();
    const double z = p.row(i).sum();
    p.row(i) /= z;
    loss += -(logits.value()(i, tgt) - mx - std::log(z));
  }
  loss /= static_cast<double>(R);
  std::vector<int> tg(targets.begin(), targets.end());
  return tape_of(logits).record(
      Mat::Constant(1, 1, loss), {logits}, [logits, p, tg](Tape& t, int self) {
        Mat d = p;
        for (std::size_t i = 0; i < tg.size(); ++i) d(static_cast<Eigen::Index>(i), tg[i]) -= 1.0;
        d *= t.grad(self)(0, 0) / static_cast<double>(tg.size());
        t.accumulate(logits.id(), d);
      });
}

Var kl_to_uniform_rows(const Var& m, const BoolMat& support) {
  const Eigen::Index R = m.rows();
  const Eigen::Index C = m.cols();
  if (support.rows() != R || support.cols() != C) {
    throw InvalidArgument("kl_to_uniform_rows: support shape mismatch");
  }
  Mat p = Mat::Zero(R, C);
  Mat logp = Mat::Zero(R, C);
  Eigen::VectorXd neg_entropy(R);
  double total = 0.0;
  for (Eigen::Index i = 0; i < R; ++i) {
    const Eigen::Index n = support.row(i).count();
    if (n == 0) {
      throw InvalidArgument(fmt::format("kl_to_uniform_rows: row {} has empty support", i));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < C; ++j) {
      if (support(i, j)) mx = std::max(mx, m.value()(i, j));
    }
    double z = 0.0;
    for (Eigen::Index j = 0; j < C; ++j) {
      if (support(i, j)) z += std::exp(m.value()(i, j) - mx);
    }
    const double logz = std::log(z);
    double h = 0.0;
    for (Eigen::Index j = 0; j < C; ++j) {
      if (!support(i, j)) continue;
      logp(i, j) = m.value()(i, j) - mx - logz;
      p(i, j) = std::exp(logp(i, j));
      h += p(i, j) * logp(i, j);
    }
    neg_entropy(i) = h;
    total += h + std::log(static_cast<double>(n));
  }
  return tape_of(m).record(
      Mat::Constant(1, 1, total), {m}, [m, p, logp, neg_entropy](Tape& t, int self) {
        // d/dm_k Σ p log p = p_k (log p_k − Σ p log p)
        Mat d = p.cwiseProduct((logp.array().colwise() - neg_entropy.array()).matrix());
        t.accumulate(m.id(), d * t.grad(self)(0, 0));
      });
}

}  // namespace saber::ad
