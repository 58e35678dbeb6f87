#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

namespace diffkpt {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::vector<std::size_t> row_major_strides(const Shape& shape);
std::string shape_str(const Shape& shape);

// Node storage shared between Tensor handles and the tape.
struct TensorData {
    Shape shape;
    std::vector<double> data;     // row-major
    bool requires_grad = false;
    std::vector<double> grad;     // empty until backward touches it

    std::size_t size() const { return data.size(); }
    void ensure_grad();           // allocate zero-filled grad buffer
};

// Value-semantics handle onto shared node storage. Tensors are immutable
// after construction except for their grad buffers.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t extent(std::size_t axis) const { return node_->shape[axis]; }

    double* data() { return node_->data.data(); }
    const double* data() const { return node_->data.data(); }
    std::vector<double>& values() { return node_->data; }
    const std::vector<double>& values() const { return node_->data; }

    double& operator[](std::size_t i) { return node_->data[i]; }
    double operator[](std::size_t i) const { return node_->data[i]; }
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;
    double& at(std::size_t i, std::size_t j, std::size_t k);
    double at(std::size_t i, std::size_t j, std::size_t k) const;
    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l);
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const;

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    std::vector<double>& grad();
    void zero_grad();

    bool all_finite() const;

    std::shared_ptr<TensorData> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<TensorData> node) : node_(std::move(node)) {}
    std::shared_ptr<TensorData> node_;

    friend class Tape;
    friend Tensor make_tensor(std::shared_ptr<TensorData>);
};

Tensor make_tensor(std::shared_ptr<TensorData> node);

// Define-by-run tape. Operations append entries in execution order, which
// is a topological order by construction; backward walks it in reverse.
class Tape {
public:
    struct Entry {
        std::vector<std::shared_ptr<TensorData>> inputs;
        std::shared_ptr<TensorData> output;
        std::function<void()> backward;
    };

    void record(std::vector<std::shared_ptr<TensorData>> inputs,
                std::shared_ptr<TensorData> output,
                std::function<void()> backward);

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
};

// Installs a tape as the thread's active recording target for its scope.
// Ops record onto the active tape when an input requires grad; with no
// active tape, everything runs as plain evaluation.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

Tape* active_tape();

// Populates grad on every requires_grad leaf reachable from loss.
// Grads accumulate additively across uses and across calls.
void backward(const Tensor& loss, Tape& tape);

// ---- differentiable ops ------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);              // [m,k]x[k,n]
Tensor transpose(const Tensor& a);                            // [m,n]->[n,m]
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad);
Tensor softmax(const Tensor& x, int axis);
Tensor silu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);                                  // -> scalar [1]
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_axis0(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1); // [m,n]->[m,c1-c0)
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor broadcast_spatial(const Tensor& v, std::size_t h, std::size_t w); // [d]->[d,h,w]
Tensor add_row_broadcast(const Tensor& x, const Tensor& r);   // [m,n]+[n]
Tensor rows_affine(const Tensor& x, const Tensor& s, const Tensor& b); // [m,n]*s[m]+b[m]
Tensor upsample2x(const Tensor& x);                           // [c,h,w]->[c,2h,2w] bilinear

} // namespace diffkpt
