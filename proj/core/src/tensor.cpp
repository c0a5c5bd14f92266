#include "sprop/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sprop/error.hpp"

namespace sprop::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

std::string shape_str(Shape s) { return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")"; }

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

ConstMapMat view(const Tensor& t) {
  return ConstMapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MapMat view(Tensor& t) {
  return MapMat(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
ConstMapMat grad_view(const Tensor& t) {
  return ConstMapMat(t.grad().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
// Gradient accumulator. Tensors are handles, so a const handle still owns a
// writable gradient.
MapMat accum(const Tensor& t) {
  return MapMat(t.grad_mut().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

bool any_requires_grad(std::initializer_list<const Tensor*> ts) {
  return std::any_of(ts.begin(), ts.end(), [](const Tensor* t) { return t->requires_grad(); });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_segments(std::span<const std::size_t> ids, std::size_t rows, std::size_t n_segments) {
  require(ids.size() == rows, "segment id count " + std::to_string(ids.size()) + " != rows " + std::to_string(rows));
  for (const auto id : ids) {
    require(id < n_segments, "segment id " + std::to_string(id) + " out of range " + std::to_string(n_segments));
  }
}

}  // namespace

// --- Tensor -----------------------------------------------------------------

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ShapeError("use of an empty tensor");
  return *impl_;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(shape, 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->shape = shape;
  impl->data.assign(shape.size(), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  require(shape.size() == data.size(),
          "shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) + " values");
  auto impl = std::make_shared<Impl>();
  impl->shape = shape;
  impl->data.assign(data.begin(), data.end());
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1, 1}, {v}, requires_grad); }

Shape Tensor::shape() const noexcept { return impl_ ? impl_->shape : Shape{}; }
std::span<double> Tensor::data() { return impl().data; }
std::span<const double> Tensor::data() const { return impl().data; }

double& Tensor::at(std::size_t r, std::size_t c) {
  auto& i = impl();
  return i.data[r * i.shape.cols + c];
}
double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& i = impl();
  return i.data[r * i.shape.cols + c];
}

double Tensor::item() const {
  require(size() == 1, "item() on non-scalar tensor " + shape_str(shape()));
  return impl().data[0];
}

bool Tensor::requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool on) { impl().requires_grad = on; }
bool Tensor::has_grad() const noexcept { return impl_ && !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl().grad; }

std::span<double> Tensor::grad_mut() const {
  auto& i = impl();
  if (i.grad.empty()) i.grad.assign(i.data.size(), 0.0);
  return i.grad;
}

void Tensor::zero_grad() {
  auto& i = impl();
  std::fill(i.grad.begin(), i.grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  const auto& src = impl();
  auto copy = std::make_shared<Impl>();
  copy->shape = src.shape;
  copy->data = src.data;
  copy->requires_grad = src.requires_grad;
  return Tensor(std::move(copy));
}

// --- Tape primitives ----------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(), "matmul shape mismatch " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  auto out = Tensor::zeros({a.rows(), b.cols()});
  view(out).noalias() = view(a) * view(b);
  if (any_requires_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) accum(a).noalias() += grad_view(out) * view(b).transpose();
      if (b.requires_grad()) accum(b).noalias() += view(a).transpose() * grad_view(out);
    });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const bool broadcast = b.rows() == 1 && a.rows() != 1 && b.cols() == a.cols();
  require(a.shape() == b.shape() || broadcast, "add shape mismatch " + shape_str(a.shape()) + " + " + shape_str(b.shape()));
  auto out = Tensor::from(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
  if (broadcast) {
    view(out).rowwise() += view(b).row(0);
  } else {
    view(out) += view(b);
  }
  if (any_requires_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out, broadcast]() mutable {
      if (!out.has_grad()) return;
      if (a.requires_grad()) accum(a) += grad_view(out);
      if (b.requires_grad()) {
        if (broadcast) {
          accum(b).row(0) += grad_view(out).colwise().sum();
        } else {
          accum(b) += grad_view(out);
        }
      }
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const bool broadcast = b.cols() == 1 && a.cols() != 1 && b.rows() == a.rows();
  require(a.shape() == b.shape() || broadcast, "mul shape mismatch " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
  auto out = Tensor::zeros(a.shape());
  if (broadcast) {
    view(out) = view(a).array().colwise() * view(b).col(0).array();
  } else {
    view(out) = view(a).cwiseProduct(view(b));
  }
  if (any_requires_grad({&a, &b})) {
    out.set_requires_grad(true);
    record([a, b, out, broadcast]() mutable {
      if (!out.has_grad()) return;
      const auto g = grad_view(out);
      if (broadcast) {
        if (a.requires_grad()) accum(a).array() += g.array().colwise() * view(b).col(0).array();
        if (b.requires_grad()) accum(b).col(0) += g.cwiseProduct(view(a)).rowwise().sum();
      } else {
        if (a.requires_grad()) accum(a) += g.cwiseProduct(view(b));
        if (b.requires_grad()) accum(b) += g.cwiseProduct(view(a));
      }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double k) {
  auto out = Tensor::zeros(a.shape());
  view(out) = view(a) * k;
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, k]() mutable {
      if (!out.has_grad()) return;
      accum(a) += grad_view(out) * k;
    });
  }
  return out;
}

Tensor Tape::concat(std::initializer_list<Tensor> parts, int axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor Tape::concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat of zero tensors");
  require(axis == 0 || axis == 1, "concat axis must be 0 or 1");
  std::vector<Tensor> ins(parts.begin(), parts.end());
  std::size_t rows = 0, cols = 0;
  if (axis == 0) {
    cols = ins.front().cols();
    for (const auto& p : ins) {
      require(p.cols() == cols, "concat(axis 0) column mismatch");
      rows += p.rows();
    }
  } else {
    rows = ins.front().rows();
    for (const auto& p : ins) {
      require(p.rows() == rows, "concat(axis 1) row mismatch");
      cols += p.cols();
    }
  }
  auto out = Tensor::zeros({rows, cols});
  std::size_t offset = 0;
  auto out_v = view(out);
  for (const auto& p : ins) {
    const auto pv = view(p);
    if (axis == 0) {
      out_v.middleRows(static_cast<Eigen::Index>(offset), pv.rows()) = pv;
      offset += p.rows();
    } else {
      out_v.middleCols(static_cast<Eigen::Index>(offset), pv.cols()) = pv;
      offset += p.cols();
    }
  }
  const bool needs = std::any_of(ins.begin(), ins.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (needs) {
    out.set_requires_grad(true);
    record([ins, out, axis]() mutable {
      if (!out.has_grad()) return;
      const auto g = grad_view(out);
      std::size_t off = 0;
      for (auto& p : ins) {
        const auto n = static_cast<Eigen::Index>(axis == 0 ? p.rows() : p.cols());
        if (p.requires_grad()) {
          if (axis == 0) {
            accum(p) += g.middleRows(static_cast<Eigen::Index>(off), n);
          } else {
            accum(p) += g.middleCols(static_cast<Eigen::Index>(off), n);
          }
        }
        off += static_cast<std::size_t>(n);
      }
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require(begin <= end && end <= a.rows(), "slice_rows range out of bounds");
  auto out = Tensor::zeros({end - begin, a.cols()});
  std::copy(a.data().begin() + static_cast<std::ptrdiff_t>(begin * a.cols()),
            a.data().begin() + static_cast<std::ptrdiff_t>(end * a.cols()), out.data().begin());
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, begin]() mutable {
      if (!out.has_grad()) return;
      auto ga = a.grad_mut();
      const auto go = out.grad();
      const auto off = begin * a.cols();
      for (std::size_t i = 0; i < go.size(); ++i) ga[off + i] += go[i];
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& a) {
  auto out = Tensor::zeros(a.shape());
  view(out) = view(a).array().tanh().matrix();
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto y = view(out).array();
      accum(a).array() += grad_view(out).array() * (1.0 - y * y);
    });
  }
  return out;
}

Tensor Tape::relu(const Tensor& a) {
  auto out = Tensor::zeros(a.shape());
  view(out) = view(a).cwiseMax(0.0);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      auto ga = a.grad_mut();
      const auto go = out.grad();
      const auto x = a.data();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (x[i] > 0.0) ga[i] += go[i];
      }
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& a) {
  auto out = Tensor::zeros(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = stable_sigmoid(x[i]);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto yv = view(out).array();
      accum(a).array() += grad_view(out).array() * yv * (1.0 - yv);
    });
  }
  return out;
}

Tensor Tape::softmax_rows(const Tensor& a) {
  auto out = Tensor::zeros(a.shape());
  const auto cols = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, a.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(a.at(r, c) - mx);
      out.at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) /= z;
  }
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const auto y = view(out);
      const auto g = grad_view(out);
      const Eigen::VectorXd dots = y.cwiseProduct(g).rowwise().sum();
      accum(a).array() += y.array() * (g.colwise() - dots).array();
    });
  }
  return out;
}

Tensor Tape::segment_softmax(const Tensor& scores, std::span<const std::size_t> segment_ids, std::size_t n_segments) {
  require(scores.cols() == 1, "segment_softmax expects an n x 1 column");
  check_segments(segment_ids, scores.rows(), n_segments);
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  const auto x = scores.data();
  std::vector<double> mx(n_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < ids.size(); ++i) mx[ids[i]] = std::max(mx[ids[i]], x[i]);
  std::vector<double> z(n_segments, 0.0);
  auto out = Tensor::zeros(scores.shape());
  auto y = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    y[i] = std::exp(x[i] - mx[ids[i]]);
    z[ids[i]] += y[i];
  }
  for (std::size_t i = 0; i < ids.size(); ++i) y[i] /= z[ids[i]];
  if (scores.requires_grad()) {
    out.set_requires_grad(true);
    record([scores, out, ids = std::move(ids), n_segments]() mutable {
      if (!out.has_grad()) return;
      const auto yv = out.data();
      const auto g = out.grad();
      std::vector<double> dots(n_segments, 0.0);
      for (std::size_t i = 0; i < ids.size(); ++i) dots[ids[i]] += yv[i] * g[i];
      auto gs = scores.grad_mut();
      for (std::size_t i = 0; i < ids.size(); ++i) gs[i] += yv[i] * (g[i] - dots[ids[i]]);
    });
  }
  return out;
}

Tensor Tape::row_gather(const Tensor& table, std::span<const std::size_t> ids) {
  for (const auto id : ids) require(id < table.rows(), "row_gather index " + std::to_string(id) + " out of range");
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  const auto cols = table.cols();
  auto out = Tensor::zeros({idx.size(), cols});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(idx[r] * cols), cols,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  if (table.requires_grad()) {
    out.set_requires_grad(true);
    record([table, out, idx = std::move(idx), cols]() mutable {
      if (!out.has_grad()) return;
      auto gt = table.grad_mut();
      const auto go = out.grad();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) gt[idx[r] * cols + c] += go[r * cols + c];
      }
    });
  }
  return out;
}

Tensor Tape::segment_sum(const Tensor& values, std::span<const std::size_t> segment_ids, std::size_t n_segments) {
  check_segments(segment_ids, values.rows(), n_segments);
  std::vector<std::size_t> ids(segment_ids.begin(), segment_ids.end());
  const auto cols = values.cols();
  auto out = Tensor::zeros({n_segments, cols});
  const auto v = values.data();
  auto o = out.data();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) o[ids[r] * cols + c] += v[r * cols + c];
  }
  if (values.requires_grad()) {
    out.set_requires_grad(true);
    record([values, out, ids = std::move(ids), cols]() mutable {
      if (!out.has_grad()) return;
      auto gv = values.grad_mut();
      const auto go = out.grad();
      for (std::size_t r = 0; r < ids.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) gv[r * cols + c] += go[ids[r] * cols + c];
      }
    });
  }
  return out;
}

Tensor Tape::dropout(const Tensor& a, double p, bool train, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "dropout probability must be in [0,1)");
  if (!train || p == 0.0) return a;
  std::vector<double> mask(a.size());
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& m : mask) m = uniform01(rng) >= p ? keep_scale : 0.0;
  auto out = Tensor::zeros(a.shape());
  const auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < mask.size(); ++i) y[i] = x[i] * mask[i];
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out, mask = std::move(mask)]() mutable {
      if (!out.has_grad()) return;
      auto ga = a.grad_mut();
      const auto go = out.grad();
      for (std::size_t i = 0; i < mask.size(); ++i) ga[i] += go[i] * mask[i];
    });
  }
  return out;
}

Tensor Tape::sum(const Tensor& a) {
  double s = 0.0;
  for (const double x : a.data()) s += x;
  auto out = Tensor::scalar(s);
  if (a.requires_grad()) {
    out.set_requires_grad(true);
    record([a, out]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      for (auto& x : a.grad_mut()) x += g;
    });
  }
  return out;
}

Tensor Tape::mse(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(), "mse shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  require(pred.size() > 0, "mse of empty tensors");
  const auto p = pred.data();
  const auto t = target.data();
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - t[i]) * (p[i] - t[i]);
  const double n = static_cast<double>(p.size());
  auto out = Tensor::scalar(s / n);
  if (any_requires_grad({&pred, &target})) {
    out.set_requires_grad(true);
    record([pred, target, out, n]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0];
      const auto pv = pred.data();
      const auto tv = target.data();
      if (pred.requires_grad()) {
        auto gp = pred.grad_mut();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * 2.0 * (pv[i] - tv[i]) / n;
      }
      if (target.requires_grad()) {
        auto gt = target.grad_mut();
        for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g * 2.0 * (pv[i] - tv[i]) / n;
      }
    });
  }
  return out;
}

Tensor Tape::cross_entropy_with_softmax(const Tensor& logits, std::span<const std::size_t> targets) {
  require(targets.size() == logits.rows(), "cross_entropy: one target per row required");
  require(logits.rows() > 0, "cross_entropy of empty batch");
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  const auto rows = logits.rows();
  const auto cols = logits.cols();
  auto probs = Tensor::zeros(logits.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    require(tgt[r] < cols, "cross_entropy target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, logits.at(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double e = std::exp(logits.at(r, c) - mx);
      probs.at(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < cols; ++c) probs.at(r, c) /= z;
    total += (mx + std::log(z)) - logits.at(r, tgt[r]);
  }
  auto out = Tensor::scalar(total / static_cast<double>(rows));
  if (logits.requires_grad()) {
    out.set_requires_grad(true);
    record([logits, out, probs, tgt = std::move(tgt), rows, cols]() mutable {
      if (!out.has_grad()) return;
      const double g = out.grad()[0] / static_cast<double>(rows);
      auto gl = logits.grad_mut();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const double onehot = c == tgt[r] ? 1.0 : 0.0;
          gl[r * cols + c] += g * (probs.at(r, c) - onehot);
        }
      }
    });
  }
  return out;
}

void Tape::backward(const Tensor& loss) {
  require(static_cast<bool>(loss) && loss.size() == 1, "backward requires a scalar loss, got " + shape_str(loss.shape()));
  // A loss that does not depend on any parameter has zero gradient everywhere.
  if (!loss.requires_grad()) {
    ops_.clear();
    return;
  }
  Tensor seed = loss;
  seed.grad_mut()[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

GradCheckResult finite_diff_check(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> params, double eps) {
  if (!(eps > 0.0)) throw ShapeError("finite_diff_check: eps must be positive");
  std::vector<Tensor> ps(params.begin(), params.end());
  for (auto& p : ps) {
    p.set_requires_grad(true);
    if (p.has_grad()) p.zero_grad();
  }
  {
    Tape tape;
    const auto loss = f(tape);
    if (!std::isfinite(loss.item())) throw ShapeError("finite_diff_check: f is not finite");
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape;
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw ShapeError("finite_diff_check: f is not finite");
    return v;
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < ps.size(); ++pi) {
    auto& p = ps[pi];
    const std::vector<double> analytic(p.grad_mut().begin(), p.grad_mut().end());
    auto data = p.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + eps;
      const double fp = eval();
      data[i] = orig - eps;
      const double fm = eval();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double rel = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = pi;
        result.worst_index = i;
      }
      ++result.checked;
    }
  }
  return result;
}

}  // namespace sprop::ad
