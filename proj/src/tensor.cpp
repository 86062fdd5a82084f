// SPDX-License-Identifier: Apache-2.0
#include "hmnet/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hmnet/errors.hpp"

namespace hmnet {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : s_(std::make_shared<Storage>()) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  s_->data.assign(shape_numel(shape), fill);
  s_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : s_(std::make_shared<Storage>()) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  s_->shape = std::move(shape);
  s_->data = std::move(data);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank())
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  return s_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return s_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  s_->requires_grad = on;
  if (!on) s_->grad.clear();
  return *this;
}

std::span<double> Tensor::mutable_grad() const {
  if (s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() const { s_->grad.assign(s_->data.size(), 0.0); }

Tensor Tensor::clone() const {
  Tensor t(s_->shape, s_->data);
  t.s_->requires_grad = s_->requires_grad;
  return t;
}

bool Graph::needs_record(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

Tensor Graph::record(Tensor out, std::vector<Tensor> inputs, BackwardFn fn) {
  out.set_requires_grad(true);
  nodes_.push_back(Node{out, std::move(inputs), std::move(fn)});
  return out;
}

void Graph::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) throw ContractError("loss does not depend on any tensor that requires a gradient");

  for (auto& node : nodes_) {
    node.out.zero_grad();
    for (auto& in : node.inputs)
      if (in.requires_grad()) in.zero_grad();
  }
  Tensor seed = loss;
  seed.mutable_grad()[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->fn) it->fn(it->out.grad());
  }
}

namespace {

constexpr char kMagic[4] = {'H', 'M', 'T', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw IoError("truncated tensor stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  for (double v : t.data()) put_le<double>(out, v);
  if (!out) throw IoError("failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("bad tensor magic");
  const auto rank = get_le<std::uint32_t>(in);
  if (rank == 0 || rank > 8) throw ParseError("bad tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(get_le<std::uint64_t>(in));
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = get_le<double>(in);
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_tensor(in);
}

}  // namespace hmnet
