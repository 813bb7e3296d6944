#include "paravmf/graph.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace paravmf {

Graph::Graph(bool record, std::uint64_t dropout_seed) : record_(record), rng_(dropout_seed) {
  nodes_.reserve(256);
}

Var Graph::push(Matrix value, const char* op, bool needs_grad) {
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.needs_grad = record_ && needs_grad;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

template <typename Expr>
void Graph::accumulate(Var v, const Expr& g) {
  Node& node = nodes_[static_cast<std::size_t>(v.id)];
  if (!node.needs_grad) return;
  if (node.external_grad != nullptr) {
    *node.external_grad += g;
  } else if (node.grad.size() == 0) {
    node.grad = g;
  } else {
    node.grad += g;
  }
}

Var Graph::param(ParameterStore::Entry& entry) {
  Node node;
  node.external_value = &entry.value;
  node.needs_grad = record_ && entry.trainable;
  if (node.needs_grad) node.external_grad = &entry.grad;
  node.op = "param";
  node.label = entry.name;
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Graph::constant(Matrix value) { return push(std::move(value), "constant", false); }

const Matrix& Graph::value(Var v) const {
  const Node& node = nodes_.at(static_cast<std::size_t>(v.id));
  return node.external_value != nullptr ? *node.external_value : node.value;
}

const Matrix& Graph::grad(Var v) const {
  const Node& node = nodes_.at(static_cast<std::size_t>(v.id));
  return node.external_grad != nullptr ? *node.external_grad : node.grad;
}

Var Graph::matmul(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols() != vb.rows()) throw DomainError("matmul shape mismatch");
  Var out = push(va * vb, "matmul", needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, b, out] {
      const Matrix& g = out_grad(out);
      if (needs(a)) accumulate(a, g * value(b).transpose());
      if (needs(b)) accumulate(b, value(a).transpose() * g);
    };
  }
  return out;
}

Var Graph::add(Var a, Var b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows() || va.cols() != vb.cols()) throw DomainError("add shape mismatch");
  Var out = push(va + vb, "add", needs(a) || needs(b));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, b, out] {
      accumulate(a, out_grad(out));
      accumulate(b, out_grad(out));
    };
  }
  return out;
}

Var Graph::add_row(Var a, Var row) {
  const Matrix& va = value(a);
  const Matrix& vr = value(row);
  if (vr.rows() != 1 || vr.cols() != va.cols()) throw DomainError("add_row shape mismatch");
  Matrix result = va;
  result.rowwise() += vr.row(0);
  Var out = push(std::move(result), "add_row", needs(a) || needs(row));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, row, out] {
      const Matrix& g = out_grad(out);
      accumulate(a, g);
      if (needs(row)) accumulate(row, g.colwise().sum());
    };
  }
  return out;
}

Var Graph::scale(Var a, double s) {
  Var out = push(value(a) * s, "scale", needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out, s] { accumulate(a, out_grad(out) * s); };
  }
  return out;
}

Var Graph::gelu(Var a) {
  const Matrix& x = value(a);
  Matrix y = x.unaryExpr([](double t) { return 0.5 * t * (1.0 + std::erf(t * std::numbers::sqrt2 / 2.0)); });
  Var out = push(std::move(y), "gelu", needs(a));
  if (needs(out)) {
    nodes_[out.id].backward = [this, a, out] {
      constexpr double inv_sqrt_2pi = 0.39894228040143267794;
      Matrix deriv = value(a).unaryExpr([](double t) {
        return 0.5 * (1.0 + std::erf(t * std::numbers::sqrt2 / 2.0)) + t * inv_sqrt_2pi * std::exp(-0.5 * t * t);
      });
      accumulate(a, out_grad(out).cwiseProduct(deriv));
    };
  }
  return out;
}

Var Graph::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Matrix& vx = value(x);
  const Matrix& vg = value(gain);
  const Matrix& vb = value(bias);
  const Eigen::Index n = vx.cols();
  if (vg.cols() != n || vb.cols() != n || vg.rows() != 1 || vb.rows() != 1) {
    throw DomainError("layer_norm shape mismatch");
  }
  Matrix xhat(vx.rows(), n);
  Vector inv_std(vx.rows());
  for (Eigen::Index r = 0; r < vx.rows(); ++r) {
    const double mean = vx.row(r).mean();
    const double var = (vx.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (vx.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * vg.row(0).array();
  y.rowwise() += vb.row(0);
  Var out = push(std::move(y), "layer_norm", needs(x) || needs(gain) || needs(bias));
  if (needs(out)) {
    nodes_[out.id].backward = [this, x, gain, bias, out, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
      const Matrix& g = out_grad(out);
      if (needs(gain)) accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
      if (needs(bias)) accumulate(bias, g.colwise().sum());
      if (needs(x)) {
        Matrix dxhat = g.array().rowwise() * value(gain).row(0).array();
        Matrix dx(dxhat.rows(), dxhat.cols());
        for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
          const double m1 = dxhat.row(r).mean();
          const double m2 = dxhat.row(r).dot(xhat.row(r)) / static_cast<double>(dxhat.cols());
          dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
        }
        accumulate(x, dx);
      }
    };
  }
  return out;
}

Var Graph::attention(Var q, Var k, Var v, int heads, const std::vector<Segment>& q_segments,
                     const std::vector<Segment>& k_segments, bool causal) {
  const Matrix& vq = value(q);
  const Matrix& vk = value(k);
  const Matrix& vv = value(v);
  const Eigen::Index width = vq.cols();
  if (heads <= 0 || width % heads != 0 || vk.cols() != width || vv.cols() != width || vk.rows() != vv.rows()) {
    throw DomainError("attention shape mismatch");
  }
  if (q_segments.size() != k_segments.size()) throw DomainError("attention segment mismatch");
  const Eigen::Index dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix result = Matrix::Zero(vq.rows(), width);
  std::vector<Matrix> probs;
  probs.reserve(q_segments.size() * static_cast<std::size_t>(heads));
  for (std::size_t s = 0; s < q_segments.size(); ++s) {
    const Segment qs = q_segments[s];
    const Segment ks = k_segments[s];
    if (ks.length == 0) throw DomainError("attention over an empty key segment");
    for (int h = 0; h < heads; ++h) {
      const Eigen::Index col = h * dh;
      Matrix scores = (vq.block(qs.start, col, qs.length, dh) * vk.block(ks.start, col, ks.length, dh).transpose()) * scale;
      for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        const Eigen::Index visible = causal ? std::min(i + 1, scores.cols()) : scores.cols();
        const double mx = scores.row(i).head(visible).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < visible; ++j) {
          scores(i, j) = std::exp(scores(i, j) - mx);
          total += scores(i, j);
        }
        for (Eigen::Index j = 0; j < visible; ++j) scores(i, j) /= total;
        for (Eigen::Index j = visible; j < scores.cols(); ++j) scores(i, j) = 0.0;
      }
      result.block(qs.start, col, qs.length, dh) = scores * vv.block(ks.start, col, ks.length, dh);
      probs.push_back(std::move(scores));
    }
  }

  Var out = push(std::move(result), "attention", needs(q) || needs(k) || needs(v));
  if (needs(out)) {
    nodes_[out.id].backward = [this, q, k, v, out, heads, dh, scale, q_segments, k_segments,
                               probs = std::move(probs)] {
      const Matrix& g = out_grad(out);
      const Matrix& vq = value(q);
      const Matrix& vk = value(k);
      const Matrix& vv = value(v);
      Matrix dq = Matrix::Zero(vq.rows(), vq.cols());
      Matrix dk = Matrix::Zero(vk.rows(), vk.cols());
      Matrix dv = Matrix::Zero(vv.rows(), vv.cols());
      std::size_t idx = 0;
      for (std::size_t s = 0; s < q_segments.size(); ++s) {
        const Segment qs = q_segments[s];
        const Segment ks = k_segments[s];
        for (int h = 0; h < heads; ++h, ++idx) {
          const Eigen::Index col = h * dh;
          const Matrix& p = probs[idx];
          const auto go = g.block(qs.start, col, qs.length, dh);
          dv.block(ks.start, col, ks.length, dh) += p.transpose() * go;
          Matrix dp = go * vv.block(ks.start, col, ks.length, dh).transpose();
          const Vector rowdot = dp.cwiseProduct(p).rowwise().sum();
          Matrix ds = p.cwiseProduct(dp.colwise() - rowdot) * scale;
          dq.block(qs.start, col, qs.length, dh) += ds * vk.block(ks.start, col, ks.length, dh);
          dk.block(ks.start, col, ks.length, dh) += ds.transpose() * vq.block(qs.start, col, qs.length, dh);
        }
      }
      accumulate(q, dq);
      accumulate(k, dk);
      accumulate(v, dv);
    };
  }
  return out;
}

Var Graph::gather_rows(Var table, const std::vector<TokenId>& rows) {
  const Matrix& t = value(table);
  Matrix result(static_cast<Eigen::Index>(rows.size()), t.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= t.rows()) throw DomainError("gather_rows index out of range");
    result.row(static_cast<Eigen::Index>(i)) = t.row(rows[i]);
  }
  Var out = push(std::move(result), "gather_rows", needs(table));
  if (needs(out)) {
    nodes_[out.id].backward = [this, table, out, rows] {
      const Matrix& g = out_grad(out);
      Matrix dt = Matrix::Zero(value(table).rows(), value(table).cols());
      for (std::size_t i = 0; i < rows.size(); ++i) dt.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
      accumulate(table, dt);
    };
  }
  return out;
}

Var Graph::dropout(Var x, double p) {
  if (p <= 0.0 || !record_) return x;
  const Matrix& vx = value(x);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  Matrix mask(vx.rows(), vx.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = unit(rng_) < p ? 0.0 : keep;
  Var out = push(vx.cwiseProduct(mask), "dropout", needs(x));
  if (needs(out)) {
    nodes_[out.id].backward = [this, x, out, mask = std::move(mask)] {
      accumulate(x, out_grad(out).cwiseProduct(mask));
    };
  }
  return out;
}

Var Graph::vmf_loss(Var pred, Matrix targets, const VmfConfig& cfg, std::vector<double>* per_row) {
  const Matrix& vp = value(pred);
  if (vp.rows() != targets.rows() || vp.cols() != targets.cols()) throw DomainError("vmf_loss shape mismatch");
  Matrix grads(vp.rows(), vp.cols());
  double total = 0.0;
  if (per_row != nullptr) per_row->assign(static_cast<std::size_t>(vp.rows()), 0.0);
  for (Eigen::Index r = 0; r < vp.rows(); ++r) {
    if (!vp.row(r).allFinite()) {
      // Propagate like the other ops so callers see a non-finite loss.
      total = std::numeric_limits<double>::quiet_NaN();
      grads.row(r).setConstant(total);
      if (per_row != nullptr) (*per_row)[static_cast<std::size_t>(r)] = total;
      continue;
    }
    const VmfEvaluation eval = nll_vmf(vp.row(r).transpose(), targets.row(r).transpose(), cfg);
    total += eval.loss;
    grads.row(r) = eval.grad.transpose();
    if (per_row != nullptr) (*per_row)[static_cast<std::size_t>(r)] = eval.loss;
  }
  Var out = push(Matrix::Constant(1, 1, total), "vmf_loss", needs(pred));
  if (needs(out)) {
    nodes_[out.id].backward = [this, pred, out, grads = std::move(grads)] {
      accumulate(pred, grads * out_grad(out)(0, 0));
    };
  }
  return out;
}

Var Graph::cross_entropy(Var logits, const std::vector<TokenId>& targets, std::vector<double>* per_row) {
  const Matrix& vl = value(logits);
  if (static_cast<std::size_t>(vl.rows()) != targets.size()) throw DomainError("cross_entropy shape mismatch");
  Vector lse(vl.rows());
  double total = 0.0;
  if (per_row != nullptr) per_row->assign(targets.size(), 0.0);
  for (Eigen::Index r = 0; r < vl.rows(); ++r) {
    const TokenId t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= vl.cols()) throw DomainError("cross_entropy target out of range");
    const double mx = vl.row(r).maxCoeff();
    lse(r) = mx + std::log((vl.row(r).array() - mx).exp().sum());
    const double loss = lse(r) - vl(r, t);
    total += loss;
    if (per_row != nullptr) (*per_row)[static_cast<std::size_t>(r)] = loss;
  }
  Var out = push(Matrix::Constant(1, 1, total), "cross_entropy", needs(logits));
  if (needs(out)) {
    // The softmax is recomputed here rather than stored: it is rows x |V|.
    nodes_[out.id].backward = [this, logits, out, targets, lse = std::move(lse)] {
      const Matrix& vl = value(logits);
      const double g = out_grad(out)(0, 0);
      Matrix d = (vl.colwise() - lse).array().exp().matrix();
      for (Eigen::Index r = 0; r < vl.rows(); ++r) d(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
      accumulate(logits, d * g);
    };
  }
  return out;
}

void Graph::backward(Var loss) {
  if (!record_) throw DomainError("backward on a non-recording graph");
  Node& root = nodes_.at(static_cast<std::size_t>(loss.id));
  if (root.external_value != nullptr || root.value.size() != 1) throw DomainError("backward needs a scalar loss");
  if (!root.needs_grad) return;
  root.grad = Matrix::Ones(1, 1);
  for (auto i = static_cast<std::size_t>(loss.id) + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && node.grad.size() != 0) node.backward();
  }
}

std::optional<std::string> Graph::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Matrix& v = value(Var{static_cast<std::int32_t>(i)});
    if (!v.allFinite()) {
      std::string what = "node #" + std::to_string(i) + " (" + nodes_[i].op;
      if (!nodes_[i].label.empty()) what += " " + nodes_[i].label;
      return what + ")";
    }
  }
  return std::nullopt;
}

}  // namespace paravmf
