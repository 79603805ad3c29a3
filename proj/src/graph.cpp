#include "spencer/graph.hpp"

#include <algorithm>
#include <cmath>

#include "spencer/errors.hpp"

namespace spencer {

namespace {

void require_vector_like(const Tensor& t, const char* what) {
  if (!(t.rank() == 1 || (t.rank() == 2 && t.rows() == 1)))
    throw DimensionError(std::string(what) + ": expected a vector, got " +
                         shape_str(t));
}

}  // namespace

Graph::Id Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::constant(Tensor value) {
  check_finite(value, "graph constant");
  return push({Op::kConstant, {}, std::move(value)});
}

Graph::Id Graph::param(Tensor value) {
  check_finite(value, "graph param");
  Id id = push({Op::kParam, {}, std::move(value)});
  params_.push_back(id);
  return id;
}

Graph::Id Graph::matmul(Id a, Id b) {
  return push({Op::kMatMul, {a, b}, spencer::matmul(value(a), value(b))});
}

Graph::Id Graph::transpose(Id a) {
  return push({Op::kTranspose, {a}, spencer::transpose(value(a))});
}

Graph::Id Graph::add(Id a, Id b) {
  return push({Op::kAdd, {a, b}, spencer::add(value(a), value(b))});
}

Graph::Id Graph::tanh(Id a) {
  return push({Op::kTanh, {a}, spencer::tanh(value(a))});
}

Graph::Id Graph::sigmoid(Id a) {
  return push({Op::kSigmoid, {a}, spencer::sigmoid(value(a))});
}

Graph::Id Graph::log(Id a) {
  return push({Op::kLog, {a}, spencer::log(value(a))});
}

Graph::Id Graph::abs(Id a) {
  return push({Op::kAbs, {a}, spencer::abs(value(a))});
}

Graph::Id Graph::clamp(Id a, double lo, double hi) {
  Node n{Op::kClamp, {a}, spencer::clamp(value(a), lo, hi)};
  n.p0 = lo;
  n.p1 = hi;
  return push(std::move(n));
}

Graph::Id Graph::scale(Id a, double c) {
  Node n{Op::kScale, {a}, spencer::scale(value(a), c)};
  n.p0 = c;
  return push(std::move(n));
}

Graph::Id Graph::dropout(Id a, double rate, uint64_t seed) {
  Node n{Op::kDropout, {a}, spencer::apply_dropout(value(a), rate, seed)};
  n.p0 = rate;
  n.seed = seed;
  return push(std::move(n));
}

Graph::Id Graph::concat_rows(std::span<const Id> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const size_t cols = value(parts[0]).cols();
  size_t rows = 0;
  for (Id p : parts) {
    if (value(p).cols() != cols)
      throw DimensionError("concat_rows: column mismatch, " +
                           shape_str(value(parts[0])) + " vs " +
                           shape_str(value(p)));
    rows += value(p).rows();
  }
  Tensor out({rows, cols});
  size_t r = 0;
  for (Id p : parts) {
    const Tensor& v = value(p);
    std::copy(v.data(), v.data() + v.numel(), out.data() + r * cols);
    r += v.rows();
  }
  Node n{Op::kConcatRows, std::vector<Id>(parts.begin(), parts.end()),
         std::move(out)};
  return push(std::move(n));
}

Graph::Id Graph::concat_cols(Id a, Id b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  const bool broadcast = vb.rows() == 1 && va.rows() > 1;
  if (!broadcast && va.rows() != vb.rows())
    throw DimensionError("concat_cols: row mismatch, " + shape_str(va) +
                         " vs " + shape_str(vb));
  const size_t rows = va.rows(), ca = va.cols(), cb = vb.cols();
  Tensor out({rows, ca + cb});
  for (size_t i = 0; i < rows; ++i) {
    double* orow = out.data() + i * (ca + cb);
    std::copy(va.data() + i * ca, va.data() + (i + 1) * ca, orow);
    const double* brow = vb.data() + (broadcast ? 0 : i * cb);
    std::copy(brow, brow + cb, orow + ca);
  }
  return push({Op::kConcatCols, {a, b}, std::move(out)});
}

Graph::Id Graph::row_mean(Id a) {
  const Tensor& v = value(a);
  if (v.rank() != 2)
    throw DimensionError("row_mean: expected a matrix, got " + shape_str(v));
  const size_t rows = v.rows(), cols = v.cols();
  Tensor out({1, cols});
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) out.at(0, j) += v.at(i, j);
  for (size_t j = 0; j < cols; ++j) out.at(0, j) /= static_cast<double>(rows);
  return push({Op::kRowMean, {a}, std::move(out)});
}

Graph::Id Graph::take_row(Id a, size_t row) {
  const Tensor& v = value(a);
  if (row >= v.rows())
    throw DimensionError("take_row: row " + std::to_string(row) +
                         " out of range for " + shape_str(v));
  Tensor out({1, v.cols()});
  std::copy(v.data() + row * v.cols(), v.data() + (row + 1) * v.cols(),
            out.data());
  Node n{Op::kTakeRow, {a}, std::move(out)};
  n.index = row;
  return push(std::move(n));
}

Graph::Id Graph::l2_normalize(Id a) {
  const Tensor& v = value(a);
  require_vector_like(v, "l2_normalize");
  const double norm = l2_norm(v);
  if (norm == 0.0) throw DegenerateVectorError("l2_normalize: zero vector");
  return push({Op::kL2Normalize, {a}, spencer::scale(v, 1.0 / norm)});
}

Graph::Id Graph::cosine(Id u, Id v) {
  require_vector_like(value(u), "cosine");
  require_vector_like(value(v), "cosine");
  return push(
      {Op::kCosine, {u, v}, Tensor::scalar(spencer::cosine(value(u), value(v)))});
}

Graph::Id Graph::rowwise_dot(Id a, Id b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb) || va.rank() != 2)
    throw DimensionError("rowwise_dot: need equal matrices, got " +
                         shape_str(va) + " and " + shape_str(vb));
  Tensor out({va.rows()});
  for (size_t i = 0; i < va.rows(); ++i) {
    double acc = 0.0;
    for (size_t j = 0; j < va.cols(); ++j) acc += va.at(i, j) * vb.at(i, j);
    out.at(i) = acc;
  }
  return push({Op::kRowwiseDot, {a, b}, std::move(out)});
}

Graph::Id Graph::dot(Id a, Id b) {
  return push({Op::kDot, {a, b}, Tensor::scalar(spencer::dot(value(a), value(b)))});
}

Graph::Id Graph::sum(Id a) {
  double acc = 0.0;
  for (double v : value(a).values()) acc += v;
  return push({Op::kSum, {a}, Tensor::scalar(acc)});
}

Graph::Id Graph::embed(Id table, std::vector<uint32_t> token_ids) {
  const Tensor& t = value(table);
  if (t.rank() != 2)
    throw DimensionError("embed: table must be a matrix, got " + shape_str(t));
  if (token_ids.empty()) throw ContractError("embed: empty token sequence");
  const size_t d = t.cols();
  Tensor out({token_ids.size(), d});
  for (size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] >= t.rows())
      throw DataError("embed: token id " + std::to_string(token_ids[i]) +
                      " outside table " + shape_str(t));
    std::copy(t.data() + token_ids[i] * d, t.data() + (token_ids[i] + 1) * d,
              out.data() + i * d);
  }
  Node n{Op::kEmbed, {table}, std::move(out)};
  n.token_ids = std::move(token_ids);
  return push(std::move(n));
}

Graph::Id Graph::contrastive_core(Id pos, Id sims, double tau, LossForm form) {
  const Tensor& p = value(pos);
  const Tensor& s = value(sims);
  if (tau <= 0.0)
    throw ParameterError("contrastive_core: tau must be positive");
  if (s.rank() != 2 || s.rows() != s.cols())
    throw DimensionError("contrastive_core: sims must be square, got " +
                         shape_str(s));
  const size_t n = s.rows();
  if (p.numel() != n)
    throw DimensionError("contrastive_core: pos " + shape_str(p) +
                         " does not match sims " + shape_str(s));
  if (n < 2)
    throw ParameterError(
        "contrastive_core: batch of " + std::to_string(n) +
        " leaves an empty negative set; need n >= 2");

  double loss = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double m = -HUGE_VAL;
    for (size_t j = 0; j < n; ++j)
      if (j != i) m = std::max(m, s.at(i, j) / tau);
    const double pt = p.data()[i] / tau;
    if (form == LossForm::kInclusive) m = std::max(m, pt);
    double z = 0.0;
    for (size_t j = 0; j < n; ++j)
      if (j != i) z += std::exp(s.at(i, j) / tau - m);
    if (form == LossForm::kInclusive) z += std::exp(pt - m);
    loss += -pt + m + std::log(z);
  }
  Node node{Op::kContrastiveCore, {pos, sims}, Tensor::scalar(loss)};
  node.p0 = tau;
  node.form = form;
  return push(std::move(node));
}

void Graph::accumulate(std::vector<Tensor>& grads, std::vector<char>& present,
                       Id id, const Tensor& delta) const {
  if (!present[id]) {
    grads[id] = delta;
    present[id] = 1;
    return;
  }
  double* g = grads[id].data();
  const double* d = delta.data();
  for (size_t i = 0; i < delta.numel(); ++i) g[i] += d[i];
}

void Graph::backprop_node(Id id, const Tensor& go, std::vector<Tensor>& grads,
                          std::vector<char>& present) const {
  const Node& n = nodes_[id];
  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
      return;
    case Op::kMatMul: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      accumulate(grads, present, n.inputs[0], matmul_nt(go, b));
      accumulate(grads, present, n.inputs[1], matmul_tn(a, go));
      return;
    }
    case Op::kTranspose:
      accumulate(grads, present, n.inputs[0], spencer::transpose(go));
      return;
    case Op::kAdd: {
      accumulate(grads, present, n.inputs[0], go);
      const Tensor& b = value(n.inputs[1]);
      if (b.same_shape(n.value)) {
        accumulate(grads, present, n.inputs[1], go);
      } else {  // bias row: sum over rows
        Tensor gb(b.shape());
        for (size_t i = 0; i < go.rows(); ++i)
          for (size_t j = 0; j < go.cols(); ++j) gb.data()[j] += go.at(i, j);
        accumulate(grads, present, n.inputs[1], gb);
      }
      return;
    }
    case Op::kTanh: {
      Tensor gx = go;
      for (size_t i = 0; i < gx.numel(); ++i) {
        const double y = n.value.data()[i];
        gx.data()[i] *= 1.0 - y * y;
      }
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kSigmoid: {
      Tensor gx = go;
      for (size_t i = 0; i < gx.numel(); ++i) {
        const double y = n.value.data()[i];
        gx.data()[i] *= y * (1.0 - y);
      }
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kLog: {
      const Tensor& x = value(n.inputs[0]);
      Tensor gx = go;
      for (size_t i = 0; i < gx.numel(); ++i) gx.data()[i] /= x.data()[i];
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kAbs: {
      const Tensor& x = value(n.inputs[0]);
      Tensor gx = go;
      for (size_t i = 0; i < gx.numel(); ++i) {
        const double v = x.data()[i];
        gx.data()[i] *= v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
      }
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kClamp: {
      const Tensor& x = value(n.inputs[0]);
      Tensor gx = go;
      for (size_t i = 0; i < gx.numel(); ++i) {
        const double v = x.data()[i];
        if (v < n.p0 || v > n.p1) gx.data()[i] = 0.0;
      }
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kScale:
      accumulate(grads, present, n.inputs[0], spencer::scale(go, n.p0));
      return;
    case Op::kDropout: {
      Tensor gx = go;
      const double keep_scale = 1.0 / (1.0 - n.p0);
      for (size_t i = 0; i < gx.numel(); ++i)
        gx.data()[i] = dropout_keeps(n.p0, n.seed, i) ? gx.data()[i] * keep_scale
                                                      : 0.0;
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kConcatRows: {
      size_t r = 0;
      for (Id p : n.inputs) {
        const Tensor& v = value(p);
        Tensor gp(v.shape());
        std::copy(go.data() + r * v.cols(),
                  go.data() + r * v.cols() + v.numel(), gp.data());
        accumulate(grads, present, p, gp);
        r += v.rows();
      }
      return;
    }
    case Op::kConcatCols: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      const size_t ca = a.cols(), cb = b.cols();
      Tensor ga(a.shape());
      Tensor gb(b.shape());
      const bool broadcast = b.rows() == 1 && a.rows() > 1;
      for (size_t i = 0; i < a.rows(); ++i) {
        const double* grow = go.data() + i * (ca + cb);
        std::copy(grow, grow + ca, ga.data() + i * ca);
        double* gbrow = gb.data() + (broadcast ? 0 : i * cb);
        for (size_t j = 0; j < cb; ++j) gbrow[j] += grow[ca + j];
      }
      accumulate(grads, present, n.inputs[0], ga);
      accumulate(grads, present, n.inputs[1], gb);
      return;
    }
    case Op::kRowMean: {
      const Tensor& x = value(n.inputs[0]);
      Tensor gx(x.shape());
      const double inv = 1.0 / static_cast<double>(x.rows());
      for (size_t i = 0; i < x.rows(); ++i)
        for (size_t j = 0; j < x.cols(); ++j)
          gx.at(i, j) = go.at(0, j) * inv;
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kTakeRow: {
      const Tensor& x = value(n.inputs[0]);
      Tensor gx(x.shape());
      std::copy(go.data(), go.data() + x.cols(),
                gx.data() + n.index * x.cols());
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kL2Normalize: {
      const Tensor& x = value(n.inputs[0]);
      const Tensor& y = n.value;
      const double norm = l2_norm(x);
      double gy = 0.0;
      for (size_t i = 0; i < y.numel(); ++i) gy += go.data()[i] * y.data()[i];
      Tensor gx(x.shape());
      for (size_t i = 0; i < x.numel(); ++i)
        gx.data()[i] = (go.data()[i] - gy * y.data()[i]) / norm;
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kCosine: {
      const Tensor& u = value(n.inputs[0]);
      const Tensor& v = value(n.inputs[1]);
      const double g = go.scalar_value();
      const double c = n.value.scalar_value();
      const double nu = l2_norm(u), nv = l2_norm(v);
      Tensor gu(u.shape());
      Tensor gv(v.shape());
      for (size_t i = 0; i < u.numel(); ++i) {
        gu.data()[i] =
            g * (v.data()[i] / (nu * nv) - c * u.data()[i] / (nu * nu));
        gv.data()[i] =
            g * (u.data()[i] / (nu * nv) - c * v.data()[i] / (nv * nv));
      }
      accumulate(grads, present, n.inputs[0], gu);
      accumulate(grads, present, n.inputs[1], gv);
      return;
    }
    case Op::kRowwiseDot: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      Tensor ga(a.shape());
      Tensor gb(b.shape());
      for (size_t i = 0; i < a.rows(); ++i) {
        const double g = go.data()[i];
        for (size_t j = 0; j < a.cols(); ++j) {
          ga.at(i, j) = g * b.at(i, j);
          gb.at(i, j) = g * a.at(i, j);
        }
      }
      accumulate(grads, present, n.inputs[0], ga);
      accumulate(grads, present, n.inputs[1], gb);
      return;
    }
    case Op::kDot: {
      const Tensor& a = value(n.inputs[0]);
      const Tensor& b = value(n.inputs[1]);
      const double g = go.scalar_value();
      Tensor ga(a.shape());
      Tensor gb(b.shape());
      for (size_t i = 0; i < a.numel(); ++i) {
        ga.data()[i] = g * b.data()[i];
        gb.data()[i] = g * a.data()[i];
      }
      accumulate(grads, present, n.inputs[0], ga);
      accumulate(grads, present, n.inputs[1], gb);
      return;
    }
    case Op::kSum: {
      const Tensor& x = value(n.inputs[0]);
      Tensor gx = Tensor::full(x.shape(), go.scalar_value());
      accumulate(grads, present, n.inputs[0], gx);
      return;
    }
    case Op::kEmbed: {
      const Tensor& table = value(n.inputs[0]);
      Tensor gt(table.shape());
      const size_t d = table.cols();
      for (size_t i = 0; i < n.token_ids.size(); ++i) {
        double* dst = gt.data() + n.token_ids[i] * d;
        const double* src = go.data() + i * d;
        for (size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
      accumulate(grads, present, n.inputs[0], gt);
      return;
    }
    case Op::kContrastiveCore: {
      const Tensor& p = value(n.inputs[0]);
      const Tensor& s = value(n.inputs[1]);
      const double g = go.scalar_value();
      const double tau = n.p0;
      const size_t count = s.rows();
      Tensor gp(p.shape());
      Tensor gs(s.shape());
      for (size_t i = 0; i < count; ++i) {
        double m = -HUGE_VAL;
        for (size_t j = 0; j < count; ++j)
          if (j != i) m = std::max(m, s.at(i, j) / tau);
        const double pt = p.data()[i] / tau;
        if (n.form == LossForm::kInclusive) m = std::max(m, pt);
        double z = 0.0;
        for (size_t j = 0; j < count; ++j)
          if (j != i) z += std::exp(s.at(i, j) / tau - m);
        const double zpos =
            n.form == LossForm::kInclusive ? std::exp(pt - m) : 0.0;
        z += zpos;
        gp.data()[i] = g * (-1.0 + zpos / z) / tau;
        for (size_t j = 0; j < count; ++j)
          if (j != i)
            gs.at(i, j) = g * std::exp(s.at(i, j) / tau - m) / (z * tau);
      }
      accumulate(grads, present, n.inputs[0], gp);
      accumulate(grads, present, n.inputs[1], gs);
      return;
    }
  }
}

Graph::GradientMap Graph::backward(Id loss) const {
  if (loss >= nodes_.size()) throw ContractError("backward: bad loss id");
  if (nodes_[loss].value.numel() != 1)
    throw ContractError("backward: loss must be scalar, got " +
                        shape_str(nodes_[loss].value));

  std::vector<Tensor> grads(nodes_.size());
  std::vector<char> present(nodes_.size(), 0);
  grads[loss] = Tensor::scalar(1.0);
  present[loss] = 1;

  for (size_t i = loss + 1; i-- > 0;) {
    if (!present[i]) continue;
    backprop_node(static_cast<Id>(i), grads[i], grads, present);
  }

  GradientMap out;
  for (Id p : params_) {
    if (present[p])
      out.emplace(p, std::move(grads[p]));
    else
      out.emplace(p, Tensor(value(p).shape()));
  }
  return out;
}

}  // namespace spencer
