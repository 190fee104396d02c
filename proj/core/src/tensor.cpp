#include "gait/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <utility>

namespace gait {

namespace {

thread_local Tape* t_active_tape = nullptr;
std::atomic<uint64_t> g_tape_counter{0};

void validate_shape(const Shape& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor rank must be 1..4, got shape " + shape_str(shape));
  }
  for (int64_t d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape) {
  validate_shape(shape);
  shape_ = std::move(shape);
  data_ = std::make_shared<std::vector<double>>(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values) {
  validate_shape(shape);
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value at tensor construction");
  }
  shape_ = std::move(shape);
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, {v}); }

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (double& x : *t.data_) x = v;
  if (!std::isfinite(v)) throw NumericError("non-finite fill value");
  return t;
}

int64_t Tensor::dim(size_t i) const {
  if (i >= shape_.size()) {
    throw ShapeError("dim " + std::to_string(i) + " out of range for shape " + shape_str(shape_));
  }
  return shape_[i];
}

std::span<const double> Tensor::values() const {
  if (!data_) throw Error("values() on undefined tensor");
  return {data_->data(), data_->size()};
}

std::span<double> Tensor::mutable_values() {
  if (!data_) throw Error("mutable_values() on undefined tensor");
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() requires a scalar tensor, got shape " + shape_str(shape_));
  }
  return (*data_)[0];
}

double Tensor::at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
  if (shape_.size() != 4) {
    throw ShapeError("at4() requires rank 4, got shape " + shape_str(shape_));
  }
  const int64_t C = shape_[1], H = shape_[2], W = shape_[3];
  return (*data_)[static_cast<size_t>(((n * C + c) * H + h) * W + w)];
}

Tensor& Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  return *this;
}

Tensor Tensor::detach() const {
  Tensor t;
  t.data_ = data_;
  t.shape_ = shape_;
  t.requires_grad_ = false;
  return t;
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  auto va = a.values(), vb = b.values();
  return std::memcmp(va.data(), vb.data(), va.size() * sizeof(double)) == 0;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape() {
  id_ = ++g_tape_counter;
  prev_active_ = t_active_tape;
  t_active_tape = this;
}

Tape::~Tape() { t_active_tape = prev_active_; }

Tape* Tape::active() { return t_active_tape; }

int Tape::record(std::string op_name, Shape out_shape, std::vector<int> inputs,
                 BackwardFn backward) {
  NodeRec rec;
  rec.op = std::move(op_name);
  rec.numel = shape_numel(out_shape);
  rec.shape = std::move(out_shape);
  rec.inputs = std::move(inputs);
  rec.backward = std::move(backward);
  nodes_.push_back(std::move(rec));
  return static_cast<int>(nodes_.size()) - 1;
}

bool Tape::tracked(const Tensor& t) const {
  if (t.tape_id_ == id_ && t.node_ >= 0) return true;
  if (t.requires_grad()) return true;
  return false;
}

int Tape::node_of(const Tensor& t) {
  if (t.tape_id_ == id_ && t.node_ >= 0) return t.node_;
  if (!t.requires_grad()) return -1;
  // leaf: dedupe by storage so copies of one parameter share a gradient
  auto it = leaf_ids_.find(t.storage_key());
  if (it != leaf_ids_.end()) return it->second;
  int id = record("leaf", t.shape(), {}, nullptr);
  leaf_ids_.emplace(t.storage_key(), id);
  return id;
}

void Tape::bind(Tensor& t, int id) {
  t.node_ = id;
  t.tape_id_ = id_;
  t.requires_grad_ = true;
}

double* Tape::grad_buffer(int node) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].numel), 0.0);
  return g.data();
}

void Tape::accumulate(int node, std::span<const double> g) {
  double* buf = grad_buffer(node);
  for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

bool Tape::has_grad(int node) const {
  return !grads_[static_cast<size_t>(node)].empty();
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error("tape already consumed by a previous backward()");
  if (loss.numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (loss.tape_id_ != id_ || loss.node_ < 0) {
    throw Error("loss tensor is not recorded on this tape");
  }
  consumed_ = true;
  grads_.assign(nodes_.size(), {});
  grad_buffer(loss.node_)[0] = 1.0;
  for (int i = loss.node_; i >= 0; --i) {
    auto& g = grads_[static_cast<size_t>(i)];
    if (g.empty()) continue;
    auto& rec = nodes_[static_cast<size_t>(i)];
    if (rec.backward) rec.backward(std::span<const double>(g.data(), g.size()), *this);
  }
}

Tensor Tape::grad_of(const Tensor& t) const {
  if (!consumed_) throw Error("grad_of() before backward()");
  int node = -1;
  if (t.tape_id_ == id_ && t.node_ >= 0) {
    node = t.node_;
  } else {
    auto it = leaf_ids_.find(t.storage_key());
    if (it != leaf_ids_.end()) node = it->second;
  }
  if (node < 0) {
    if (t.requires_grad()) return Tensor::zeros(t.shape());  // never touched by the loss
    throw Error("grad_of() on a tensor the tape does not track");
  }
  const auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), g);
}

}  // namespace gait
