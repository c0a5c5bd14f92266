#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <vector>

#include "sprop/random.hpp"

namespace sprop::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

// Dense row-major matrix of doubles. Tensor is a shared handle: copies alias
// the same storage, clone() makes a deep copy. A scalar is a 1x1 tensor.
// 64-byte aligned storage. Vectorised kernels pick their code path from the
// buffer address, so unaligned heap blocks would make results depend on
// where malloc happened to put them.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  explicit operator bool() const noexcept { return impl_ != nullptr; }
  bool is(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  Shape shape() const noexcept;
  std::size_t rows() const noexcept { return shape().rows; }
  std::size_t cols() const noexcept { return shape().cols; }
  std::size_t size() const noexcept { return shape().size(); }

  std::span<double> data();
  std::span<const double> data() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  // Value of a 1x1 tensor.
  double item() const;

  bool requires_grad() const noexcept;
  void set_requires_grad(bool on);

  bool has_grad() const noexcept;
  std::span<const double> grad() const;
  // Allocates a zero gradient on first use.
  std::span<double> grad_mut() const;
  void zero_grad();

  // Deep copy of shape, data and the requires_grad flag (not the gradient).
  Tensor clone() const;

 private:
  struct Impl {
    Shape shape;
    Buffer data;
    Buffer grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

using sprop::Rng;
using sprop::uniform01;

// Records the primitives executed on it so that backward() can replay their
// adjoints in reverse. An op is recorded only when one of its inputs
// requires a gradient. Not thread-safe; use one tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // (n x k) * (k x m)
  Tensor matmul(const Tensor& a, const Tensor& b);
  // Same shape, or b is 1 x cols and is broadcast over the rows of a.
  Tensor add(const Tensor& a, const Tensor& b);
  // Same shape, or b is rows x 1 and is broadcast over the columns of a.
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double k);
  // axis 0 stacks rows, axis 1 joins columns.
  Tensor concat(std::span<const Tensor> parts, int axis);
  Tensor concat(std::initializer_list<Tensor> parts, int axis);
  Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);

  Tensor tanh(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor sigmoid(const Tensor& a);

  Tensor softmax_rows(const Tensor& a);
  // Softmax of an n x 1 column within each segment.
  Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment_ids, std::size_t n_segments);

  // out[r] = table[ids[r]]
  Tensor row_gather(const Tensor& table, std::span<const std::size_t> ids);
  // out[s] = sum of rows r with segment_ids[r] == s
  Tensor segment_sum(const Tensor& values, std::span<const std::size_t> segment_ids, std::size_t n_segments);

  // Inverted dropout. Identity (and no RNG draw) when !train or p == 0.
  Tensor dropout(const Tensor& a, double p, bool train, Rng& rng);

  Tensor sum(const Tensor& a);
  // Mean of squared differences over every element.
  Tensor mse(const Tensor& pred, const Tensor& target);
  // Mean over rows of -log softmax(logits)[target].
  Tensor cross_entropy_with_softmax(const Tensor& logits, std::span<const std::size_t> targets);

  // Populates grad on every requires_grad tensor reachable from loss, then
  // clears the tape. Gradients accumulate into existing grad buffers.
  void backward(const Tensor& loss);

  std::size_t size() const noexcept { return ops_.size(); }
  void clear() noexcept { ops_.clear(); }

 private:
  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

  std::vector<std::function<void()>> ops_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Central finite differences on every coordinate of params against the
// analytic gradient of f. Relative error uses a max(1, |analytic|)
// denominator. f must be deterministic; its tape argument is fresh per call.
GradCheckResult finite_diff_check(const std::function<Tensor(Tape&)>& f, std::span<const Tensor> params,
                                  double eps = 1e-5);

}  // namespace sprop::ad
