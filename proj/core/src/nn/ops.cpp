#include "kd/nn/ops.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace kd::nn {
namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(fmt::format("{}: shape mismatch {}x{} vs {}x{}", op, a.rows(),
                                            a.cols(), b.rows(), b.cols()));
  }
}

void push(const Var& v, const Matrix& g) {
  if (v.requires_grad()) {
    v.node()->accumulate(g);
  }
}

Matrix row_softmax(const Matrix& z) {
  Matrix out(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    if (!std::isfinite(m)) {
      throw std::invalid_argument("softmax_rows: row has no finite entry");
    }
    out.row(r) = (z.row(r).array() - m).exp();
    // vectorised exp maps -inf to a denormal
    out.row(r) = (z.row(r).array() == -std::numeric_limits<double>::infinity()).select(0.0, out.row(r));
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument(fmt::format("matmul: inner dims {}x{} * {}x{}", a.rows(), a.cols(),
                                            b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value();
  return Var::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) push(a, g * b.value().transpose());
    if (b.requires_grad()) push(b, a.value().transpose() * g);
  });
}

Var matmul_bt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument(fmt::format("matmul_bt: {}x{} * ({}x{})^T", a.rows(), a.cols(),
                                            b.rows(), b.cols()));
  }
  Matrix out = a.value() * b.value().transpose();
  return Var::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) push(a, g * b.value());
    if (b.requires_grad()) push(b, g.transpose() * a.value());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return Var::from_op(a.value() + b.value(), {a, b}, [a, b](const Matrix& g) {
    push(a, g);
    push(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return Var::from_op(a.value() - b.value(), {a, b}, [a, b](const Matrix& g) {
    push(a, g);
    if (b.requires_grad()) push(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return Var::from_op(std::move(out), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) push(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) push(b, g.cwiseProduct(a.value()));
  });
}

Var scale(const Var& x, double s) {
  return Var::from_op(x.value() * s, {x}, [x, s](const Matrix& g) { push(x, g * s); });
}

Var add_row(const Var& x, const Var& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw std::invalid_argument(
        fmt::format("add_row: bias {}x{} for input {}x{}", bias.rows(), bias.cols(), x.rows(), x.cols()));
  }
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return Var::from_op(std::move(out), {x, bias}, [x, bias](const Matrix& g) {
    push(x, g);
    if (bias.requires_grad()) push(bias, g.colwise().sum());
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  return add_row(matmul(x, weight), bias);
}

Var gelu(const Var& x) {
  static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  static constexpr double kA = 0.044715;
  const Matrix& v = x.value();
  Matrix t = (kC * (v.array() + kA * v.array().cube())).tanh().matrix();
  Matrix out = (0.5 * v.array() * (1.0 + t.array())).matrix();
  return Var::from_op(std::move(out), {x}, [x, t = std::move(t)](const Matrix& g) {
    const auto& xv = x.value().array();
    auto d = 0.5 * (1.0 + t.array()) +
             0.5 * xv * (1.0 - t.array().square()) * kC * (1.0 + 3.0 * kA * xv.square());
    push(x, (g.array() * d).matrix());
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n || bias.rows() != 1 || bias.cols() != n) {
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
  }
  const Matrix& v = x.value();
  Matrix xhat(v.rows(), n);
  Eigen::VectorXd inv_std(v.rows());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double mu = v.row(r).mean();
    const double var = (v.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  return Var::from_op(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), n](const Matrix& g) {
        if (gain.requires_grad()) push(gain, g.cwiseProduct(xhat).colwise().sum());
        if (bias.requires_grad()) push(bias, g.colwise().sum());
        if (x.requires_grad()) {
          Matrix dxhat = (g.array().rowwise() * gain.value().row(0).array()).matrix();
          Matrix dx(g.rows(), n);
          const auto nd = static_cast<double>(n);
          for (Eigen::Index r = 0; r < g.rows(); ++r) {
            const double s1 = dxhat.row(r).sum();
            const double s2 = dxhat.row(r).dot(xhat.row(r));
            dx.row(r) = (inv_std(r) / nd) *
                        (nd * dxhat.row(r).array() - s1 - xhat.row(r).array() * s2);
          }
          push(x, dx);
        }
      });
}

Var embedding(const Var& table, std::span<const int> ids) {
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw std::out_of_range(fmt::format("embedding: id {} outside table of {} rows", ids[i], table.rows()));
    }
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return Var::from_op(std::move(out), {table}, [table, idx = std::move(idx)](const Matrix& g) {
    Matrix dt = Matrix::Zero(table.rows(), table.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      dt.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    push(table, dt);
  });
}

Var softmax_rows(const Var& x) {
  Matrix y = row_softmax(x.value());
  Matrix saved = y;
  return Var::from_op(std::move(y), {x}, [x, y = std::move(saved)](const Matrix& g) {
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.cwiseProduct((g.colwise() - dots));
    push(x, dx);
  });
}

Var softmax_rows(const Var& x, const Matrix& additive_mask) {
  if (additive_mask.rows() != x.rows() || additive_mask.cols() != x.cols()) {
    throw std::invalid_argument("softmax_rows: mask shape mismatch");
  }
  Matrix y = row_softmax(x.value() + additive_mask);
  Matrix saved = y;
  return Var::from_op(std::move(y), {x}, [x, y = std::move(saved)](const Matrix& g) {
    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    push(x, y.cwiseProduct((g.colwise() - dots)));
  });
}

Var log_softmax_rows(const Var& x) {
  const Matrix& v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    const double lse = m + std::log((v.row(r).array() - m).exp().sum());
    out.row(r) = v.row(r).array() - lse;
  }
  Matrix probs = out.array().exp().matrix();
  return Var::from_op(std::move(out), {x}, [x, probs = std::move(probs)](const Matrix& g) {
    Eigen::VectorXd sums = g.rowwise().sum();
    Matrix dx = g - (probs.array().colwise() * sums.array()).matrix();
    push(x, dx);
  });
}

Var slice_rows(const Var& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.rows()) {
    throw std::out_of_range(fmt::format("slice_rows: [{}, {}) of {}", begin, begin + count, x.rows()));
  }
  Matrix out = x.value().middleRows(begin, count);
  return Var::from_op(std::move(out), {x}, [x, begin, count](const Matrix& g) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    dx.middleRows(begin, count) = g;
    push(x, dx);
  });
}

Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) {
    throw std::out_of_range(fmt::format("slice_cols: [{}, {}) of {}", begin, begin + count, x.cols()));
  }
  Matrix out = x.value().middleCols(begin, count);
  return Var::from_op(std::move(out), {x}, [x, begin, count](const Matrix& g) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    dx.middleCols(begin, count) = g;
    push(x, dx);
  });
}

Var select_cols(const Var& x, std::span<const int> cols) {
  Matrix out(x.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] < 0 || cols[j] >= x.cols()) {
      throw std::out_of_range(fmt::format("select_cols: column {} of {}", cols[j], x.cols()));
    }
    out.col(static_cast<Eigen::Index>(j)) = x.value().col(cols[j]);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return Var::from_op(std::move(out), {x}, [x, idx = std::move(idx)](const Matrix& g) {
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      dx.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
    }
    push(x, dx);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: no inputs");
  }
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw std::invalid_argument("concat_cols: row count mismatch");
    }
    total += p.cols();
  }
  Matrix out(rows, total);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return Var::from_op(std::move(out), parts, [parts](const Matrix& g) {
    Eigen::Index off = 0;
    for (const auto& p : parts) {
      if (p.requires_grad()) push(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var sum(const Var& x) {
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return Var::from_op(std::move(out), {x}, [x](const Matrix& g) {
    push(x, Matrix::Constant(x.rows(), x.cols(), g(0, 0)));
  });
}

Var mean(const Var& x) {
  if (x.value().size() == 0) {
    throw std::invalid_argument("mean of an empty matrix");
  }
  return scale(sum(x), 1.0 / static_cast<double>(x.value().size()));
}

Var stop_gradient(const Var& x) { return Var::constant(x.value()); }

Var normalize_row(const Var& x) {
  if (x.rows() != 1) {
    throw std::invalid_argument("normalize_row: expects a single row");
  }
  const double s = x.value().sum();
  if (!(s > 0.0)) {
    throw std::invalid_argument("normalize_row: non-positive row sum");
  }
  return Var::from_op(x.value() / s, {x}, [x, s](const Matrix& g) {
    const double gx = g.row(0).dot(x.value().row(0));
    Matrix dx = (g.array() / s - gx / (s * s)).matrix();
    push(x, dx);
  });
}

Var attention(const Var& q, const Var& k, const Var& v, const Matrix* additive_mask) {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var scores = scale(matmul_bt(q, k), inv_sqrt);
  Var weights = additive_mask ? softmax_rows(scores, *additive_mask) : softmax_rows(scores);
  return matmul(weights, v);
}

Var weighted_cross_entropy(const Var& logits, int target, double weight) {
  if (logits.rows() != 1) {
    throw std::invalid_argument("weighted_cross_entropy: expects a 1 x C logit row");
  }
  if (target < 0 || target >= logits.cols()) {
    throw std::out_of_range(fmt::format("weighted_cross_entropy: target {} outside {} classes", target,
                                        logits.cols()));
  }
  if (weight == 0.0) {
    spdlog::warn("weighted_cross_entropy: target class {} has weight 0 (unseen in training counts)", target);
    return Var::scalar(0.0);
  }
  const auto& row = logits.value();
  const double m = row.maxCoeff();
  const double lse = m + std::log((row.array() - m).exp().sum());
  Matrix out(1, 1);
  out(0, 0) = -weight * (row(0, target) - lse);
  return Var::from_op(std::move(out), {logits}, [logits, target, weight, lse](const Matrix& g) {
    Matrix d = (logits.value().array() - lse).exp().matrix();
    d(0, target) -= 1.0;
    push(logits, d * (weight * g(0, 0)));
  });
}

Var kl_divergence(const Var& p, const Var& log_q) {
  require_same_shape(p, log_q, "kl_divergence");
  if (p.rows() != 1) {
    throw std::invalid_argument("kl_divergence: expects 1 x C rows");
  }
  const auto& pv = p.value();
  const auto& lq = log_q.value();
  double total = 0.0;
  for (Eigen::Index i = 0; i < pv.cols(); ++i) {
    if (pv(0, i) > 0.0) {
      total += pv(0, i) * (std::log(pv(0, i)) - lq(0, i));
    }
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return Var::from_op(std::move(out), {p, log_q}, [p, log_q](const Matrix& g) {
    const double s = g(0, 0);
    if (p.requires_grad()) {
      Matrix dp = Matrix::Zero(1, p.cols());
      for (Eigen::Index i = 0; i < p.cols(); ++i) {
        const double pi = p.value()(0, i);
        if (pi > 0.0) {
          dp(0, i) = s * (std::log(pi) + 1.0 - log_q.value()(0, i));
        }
      }
      push(p, dp);
    }
    if (log_q.requires_grad()) push(log_q, -s * p.value());
  });
}

Var squared_error(const Var& pred, const Var& target) {
  require_same_shape(pred, target, "squared_error");
  Matrix diff = pred.value() - target.value();
  Matrix out(1, 1);
  out(0, 0) = diff.squaredNorm();
  return Var::from_op(std::move(out), {pred, target}, [pred, target, diff = std::move(diff)](const Matrix& g) {
    if (pred.requires_grad()) push(pred, 2.0 * g(0, 0) * diff);
    if (target.requires_grad()) push(target, -2.0 * g(0, 0) * diff);
  });
}

Matrix causal_mask(Eigen::Index n) {
  Matrix m = Matrix::Zero(n, n);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = r + 1; c < n; ++c) {
      m(r, c) = neg_inf;
    }
  }
  return m;
}

Matrix key_padding_mask(const std::vector<bool>& key_is_pad) {
  const auto n = static_cast<Eigen::Index>(key_is_pad.size());
  Matrix m = Matrix::Zero(n, n);
  const double neg_inf = -std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < n; ++c) {
    if (key_is_pad[static_cast<std::size_t>(c)]) {
      m.col(c).setConstant(neg_inf);
    }
  }
  return m;
}

}  // namespace kd::nn
