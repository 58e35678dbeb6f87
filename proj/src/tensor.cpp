#include "diffkpt/tensor.hpp"

#include "diffkpt/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace diffkpt {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) {
        strides[i - 1] = strides[i] * shape[i];
    }
    return strides;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void TensorData::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor make_tensor(std::shared_ptr<TensorData> node) { return Tensor(std::move(node)); }

static std::shared_ptr<TensorData> new_node(Shape shape, bool requires_grad) {
    for (std::size_t e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    auto node = std::make_shared<TensorData>();
    node->shape = std::move(shape);
    node->data.assign(numel(node->shape), 0.0);
    node->requires_grad = requires_grad;
    return node;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return Tensor(new_node(std::move(shape), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto node = new_node(std::move(shape), requires_grad);
    std::fill(node->data.begin(), node->data.end(), value);
    return Tensor(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    auto node = new_node(std::move(shape), requires_grad);
    node->data = std::move(data);
    return Tensor(std::move(node));
}

double& Tensor::at(std::size_t i, std::size_t j) {
    return node_->data[i * node_->shape[1] + j];
}
double Tensor::at(std::size_t i, std::size_t j) const {
    return node_->data[i * node_->shape[1] + j];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k) {
    const auto& s = node_->shape;
    return node_->data[(i * s[1] + j) * s[2] + k];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
    const auto& s = node_->shape;
    return node_->data[(i * s[1] + j) * s[2] + k];
}
double& Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    const auto& s = node_->shape;
    return node_->data[((i * s[1] + j) * s[2] + k) * s[3] + l];
}
double Tensor::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    const auto& s = node_->shape;
    return node_->data[((i * s[1] + j) * s[2] + k) * s[3] + l];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) throw ContractError("tensor has no grad buffer");
    return node_->grad;
}
std::vector<double>& Tensor::grad() {
    if (node_->grad.empty()) throw ContractError("tensor has no grad buffer");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : node_->data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// ---- tape ----------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
} // namespace

void Tape::record(std::vector<std::shared_ptr<TensorData>> inputs,
                  std::shared_ptr<TensorData> output,
                  std::function<void()> backward) {
    entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss, Tape& tape) {
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            shape_str(loss.shape()));
    }
    auto node = loss.node();
    node->ensure_grad();
    node->grad[0] += 1.0;
    const auto& entries = tape.entries();
    for (std::size_t i = entries.size(); i-- > 0;) {
        const auto& e = entries[i];
        if (e.output->grad.empty()) continue;  // not on a path to the loss
        e.backward();
    }
}

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> ins) {
    for (const Tensor* t : ins) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void maybe_record(std::initializer_list<const Tensor*> ins, const Tensor& out,
                  std::function<void()> bw) {
    if (!out.requires_grad() || g_active_tape == nullptr) return;
    std::vector<std::shared_ptr<TensorData>> nodes;
    nodes.reserve(ins.size());
    for (const Tensor* t : ins) nodes.push_back(t->node());
    g_active_tape->record(std::move(nodes), out.node(), std::move(bw));
}

} // namespace

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    Tensor out = Tensor::zeros({m, n}, any_requires_grad({&a, &b}));
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            const double* brow = pb + p * n;
            double* orow = po + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    maybe_record({&a, &b}, out, [an = a.node(), bn = b.node(), on = out.node(), m, k, n]() {
        const double* g = on->grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            double* da = an->grad.data();
            const double* pb = bn->data.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gv * pb[p * n + j];
                }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            double* db = bn->grad.data();
            const double* pa = an->data.data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = pa[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * g[i * n + j];
                }
        }
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor required, got " + shape_str(a.shape()));
    const std::size_t m = a.extent(0), n = a.extent(1);
    Tensor out = Tensor::zeros({n, m}, a.requires_grad());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    maybe_record({&a}, out, [an = a.node(), on = out.node(), m, n]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j * m + i];
    });
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    if (x.rank() != 3 || w.rank() != 4) {
        throw ShapeError("conv2d: expected x [C,H,W] and w [O,C,k,k], got " +
                         shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    const std::size_t cin = x.extent(0), h = x.extent(1), wd = x.extent(2);
    const std::size_t cout = w.extent(0), k = w.extent(2);
    if (w.extent(1) != cin || w.extent(3) != k) {
        throw ShapeError("conv2d: kernel " + shape_str(w.shape()) + " does not match input " +
                         shape_str(x.shape()));
    }
    if (k % 2 == 0) throw ConfigError("conv2d: kernel size must be odd, got " + std::to_string(k));
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: stride must be >=1 and pad >=0");
    const long hn = static_cast<long>(h) + 2 * pad - static_cast<long>(k);
    const long wn = static_cast<long>(wd) + 2 * pad - static_cast<long>(k);
    if (hn < 0 || wn < 0) {
        throw ShapeError("conv2d: kernel " + std::to_string(k) + " with pad " +
                         std::to_string(pad) + " does not fit input " + shape_str(x.shape()));
    }
    // Output extent floors, matching the usual convolution convention; any
    // trailing rows the stride never reaches are simply unused.
    const std::size_t ho = static_cast<std::size_t>(hn / stride) + 1;
    const std::size_t wo = static_cast<std::size_t>(wn / stride) + 1;

    Tensor out = Tensor::zeros({cout, ho, wo}, any_requires_grad({&x, &w}));
    const double* px = x.data();
    const double* pw = w.data();
    double* po = out.data();
    for (std::size_t co = 0; co < cout; ++co) {
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                double acc = 0.0;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    for (std::size_t ky = 0; ky < k; ++ky) {
                        const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (std::size_t kx = 0; kx < k; ++kx) {
                            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                            if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                            acc += px[(ci * h + iy) * wd + ix] * pw[((co * cin + ci) * k + ky) * k + kx];
                        }
                    }
                }
                po[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    maybe_record({&x, &w}, out,
                 [xn = x.node(), wn2 = w.node(), on = out.node(), cin, h, wd, cout, k, ho, wo,
                  stride, pad]() {
        const double* g = on->grad.data();
        const bool need_dx = xn->requires_grad;
        const bool need_dw = wn2->requires_grad;
        if (need_dx) xn->ensure_grad();
        if (need_dw) wn2->ensure_grad();
        double* dx = need_dx ? xn->grad.data() : nullptr;
        double* dw = need_dw ? wn2->grad.data() : nullptr;
        const double* px = xn->data.data();
        const double* pw = wn2->data.data();
        for (std::size_t co = 0; co < cout; ++co) {
            for (std::size_t oy = 0; oy < ho; ++oy) {
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const double gv = g[(co * ho + oy) * wo + ox];
                    if (gv == 0.0) continue;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        for (std::size_t ky = 0; ky < k; ++ky) {
                            const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
                            if (iy < 0 || iy >= static_cast<long>(h)) continue;
                            for (std::size_t kx = 0; kx < k; ++kx) {
                                const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
                                if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                                const std::size_t xi = (ci * h + iy) * wd + ix;
                                const std::size_t wi = ((co * cin + ci) * k + ky) * k + kx;
                                if (need_dw) dw[wi] += gv * px[xi];
                                if (need_dx) dx[xi] += gv * pw[wi];
                            }
                        }
                    }
                }
            }
        }
    });
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    const int r = static_cast<int>(x.rank());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(x.shape()));
    }
    if (!x.all_finite()) throw NumericError("softmax: non-finite input");
    std::size_t outer = 1, inner = 1;
    const std::size_t n = x.extent(static_cast<std::size_t>(axis));
    for (int i = 0; i < axis; ++i) outer *= x.extent(static_cast<std::size_t>(i));
    for (int i = axis + 1; i < r; ++i) inner *= x.extent(static_cast<std::size_t>(i));

    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = px[base];
            for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, px[base + i * inner]);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double e = std::exp(px[base + i * inner] - mx);
                po[base + i * inner] = e;
                s += e;
            }
            for (std::size_t i = 0; i < n; ++i) po[base + i * inner] /= s;
        }
    }
    maybe_record({&x}, out, [xn = x.node(), on = out.node(), outer, n, inner]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double* y = on->data.data();
        const double* g = on->grad.data();
        double* dx = xn->grad.data();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * n * inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i) dot += g[base + i * inner] * y[base + i * inner];
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t at = base + i * inner;
                    dx[at] += y[at] * (g[at] - dot);
                }
            }
        }
    });
    return out;
}

Tensor silu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape(), x.requires_grad());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        out[i] = v / (1.0 + std::exp(-v));
    }
    maybe_record({&x}, out, [xn = x.node(), on = out.node()]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->data.size(); ++i) {
            const double v = xn->data[i];
            const double sig = 1.0 / (1.0 + std::exp(-v));
            xn->grad[i] += on->grad[i] * sig * (1.0 + v * (1.0 - sig));
        }
    });
    return out;
}

static void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape("add", a, b);
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({&a, &b}));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    maybe_record({&a, &b}, out, [an = a.node(), bn = b.node(), on = out.node()]() {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->data.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->data.size(); ++i) bn->grad[i] += on->grad[i];
        }
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape("sub", a, b);
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({&a, &b}));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    maybe_record({&a, &b}, out, [an = a.node(), bn = b.node(), on = out.node()]() {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->data.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->data.size(); ++i) bn->grad[i] -= on->grad[i];
        }
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape("mul", a, b);
    Tensor out = Tensor::zeros(a.shape(), any_requires_grad({&a, &b}));
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    maybe_record({&a, &b}, out, [an = a.node(), bn = b.node(), on = out.node()]() {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->data.size(); ++i)
                an->grad[i] += on->grad[i] * bn->data[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->data.size(); ++i)
                bn->grad[i] += on->grad[i] * an->data[i];
        }
    });
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = Tensor::zeros(a.shape(), a.requires_grad());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    maybe_record({&a}, out, [an = a.node(), on = out.node(), s]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->data.size(); ++i) an->grad[i] += on->grad[i] * s;
    });
    return out;
}

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::zeros({1}, a.requires_grad());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    out[0] = acc;
    maybe_record({&a}, out, [an = a.node(), on = out.node()]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const double g = on->grad[0];
        for (std::size_t i = 0; i < an->data.size(); ++i) an->grad[i] += g;
    });
    return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor out = Tensor::from_data(std::move(shape), a.values(), a.requires_grad());
    maybe_record({&a}, out, [an = a.node(), on = out.node()]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->data.size(); ++i) an->grad[i] += on->grad[i];
    });
    return out;
}

Tensor concat_axis0(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank() || a.rank() == 0) {
        throw ShapeError("concat_axis0: rank mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    for (std::size_t i = 1; i < a.rank(); ++i) {
        if (a.extent(i) != b.extent(i)) {
            throw ShapeError("concat_axis0: trailing extents differ, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
        }
    }
    Shape shape = a.shape();
    shape[0] += b.extent(0);
    Tensor out = Tensor::zeros(shape, any_requires_grad({&a, &b}));
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    maybe_record({&a, &b}, out, [an = a.node(), bn = b.node(), on = out.node()]() {
        const std::size_t na = an->data.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->data.size(); ++i) bn->grad[i] += on->grad[na + i];
        }
    });
    return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (a.rank() != 2 || c0 >= c1 || c1 > a.extent(1)) {
        throw ShapeError("slice_cols: invalid range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") for " + shape_str(a.shape()));
    }
    const std::size_t m = a.extent(0), n = a.extent(1), w = c1 - c0;
    Tensor out = Tensor::zeros({m, w}, a.requires_grad());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a[i * n + c0 + j];
    maybe_record({&a}, out, [an = a.node(), on = out.node(), m, n, w, c0]() {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) an->grad[i * n + c0 + j] += on->grad[i * w + j];
    });
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts[0].extent(0);
    std::size_t n = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.extent(0) != m) {
            throw ShapeError("concat_cols: row mismatch at " + shape_str(p.shape()));
        }
        n += p.extent(1);
        rg = rg || p.requires_grad();
    }
    Tensor out = Tensor::zeros({m, n}, rg);
    std::size_t col = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.extent(1);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) out[i * n + col + j] = p[i * w + j];
        col += w;
    }
    if (rg && active_tape() != nullptr) {
        std::vector<std::shared_ptr<TensorData>> nodes;
        nodes.reserve(parts.size());
        for (const Tensor& p : parts) nodes.push_back(p.node());
        auto on = out.node();
        active_tape()->record(nodes, on, [nodes, on, m, n]() {
            std::size_t col = 0;
            for (const auto& pn : nodes) {
                const std::size_t w = pn->data.size() / m;
                if (pn->requires_grad) {
                    pn->ensure_grad();
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                            pn->grad[i * w + j] += on->grad[i * n + col + j];
                }
                col += w;
            }
        });
    }
    return out;
}

Tensor broadcast_spatial(const Tensor& v, std::size_t h, std::size_t w) {
    if (v.rank() != 1) throw ShapeError("broadcast_spatial: rank-1 input required, got " + shape_str(v.shape()));
    const std::size_t d = v.extent(0);
    Tensor out = Tensor::zeros({d, h, w}, v.requires_grad());
    for (std::size_t c = 0; c < d; ++c) {
        const double val = v[c];
        double* p = out.data() + c * h * w;
        for (std::size_t i = 0; i < h * w; ++i) p[i] = val;
    }
    maybe_record({&v}, out, [vn = v.node(), on = out.node(), d, h, w]() {
        if (!vn->requires_grad) return;
        vn->ensure_grad();
        for (std::size_t c = 0; c < d; ++c) {
            double acc = 0.0;
            const double* g = on->grad.data() + c * h * w;
            for (std::size_t i = 0; i < h * w; ++i) acc += g[i];
            vn->grad[c] += acc;
        }
    });
    return out;
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& r) {
    if (x.rank() != 2 || r.rank() != 1 || r.extent(0) != x.extent(1)) {
        throw ShapeError("add_row_broadcast: " + shape_str(x.shape()) + " + " + shape_str(r.shape()));
    }
    const std::size_t m = x.extent(0), n = x.extent(1);
    Tensor out = Tensor::zeros({m, n}, any_requires_grad({&x, &r}));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + r[j];
    maybe_record({&x, &r}, out, [xn = x.node(), rn = r.node(), on = out.node(), m, n]() {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < m * n; ++i) xn->grad[i] += on->grad[i];
        }
        if (rn->requires_grad) {
            rn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) rn->grad[j] += on->grad[i * n + j];
        }
    });
    return out;
}

Tensor rows_affine(const Tensor& x, const Tensor& s, const Tensor& b) {
    if (x.rank() != 2 || s.rank() != 1 || b.rank() != 1 || s.extent(0) != x.extent(0) ||
        b.extent(0) != x.extent(0)) {
        throw ShapeError("rows_affine: " + shape_str(x.shape()) + " with scale " +
                         shape_str(s.shape()) + " and bias " + shape_str(b.shape()));
    }
    const std::size_t m = x.extent(0), n = x.extent(1);
    Tensor out = Tensor::zeros({m, n}, any_requires_grad({&x, &s, &b}));
    for (std::size_t i = 0; i < m; ++i) {
        const double sv = s[i], bv = b[i];
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = sv * x[i * n + j] + bv;
    }
    maybe_record({&x, &s, &b}, out,
                 [xn = x.node(), sn = s.node(), bn = b.node(), on = out.node(), m, n]() {
        for (std::size_t i = 0; i < m; ++i) {
            const double sv = sn->data[i];
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t j = 0; j < n; ++j) xn->grad[i * n + j] += on->grad[i * n + j] * sv;
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += on->grad[i * n + j] * xn->data[i * n + j];
                sn->grad[i] += acc;
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += on->grad[i * n + j];
                bn->grad[i] += acc;
            }
        }
    });
    return out;
}

namespace {

// Center-aligned bilinear taps for one axis of a 2x upsample: output cell i
// samples the input at (i + 0.5)/2 - 0.5, edges replicated.
struct Tap {
    std::size_t lo, hi;
    double t;  // weight of hi
};

std::vector<Tap> upsample_taps(std::size_t n) {
    std::vector<Tap> taps(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const double s = 0.5 * double(i) - 0.25;
        const double f = std::floor(s);
        const double t = s - f;
        const long lo = std::clamp(long(f), 0L, long(n) - 1);
        const long hi = std::clamp(long(f) + 1, 0L, long(n) - 1);
        taps[i] = {std::size_t(lo), std::size_t(hi), t};
    }
    return taps;
}

} // namespace

Tensor upsample2x(const Tensor& x) {
    if (x.rank() != 3) throw ShapeError("upsample2x: rank-3 input required, got " + shape_str(x.shape()));
    const std::size_t c = x.extent(0), h = x.extent(1), w = x.extent(2);
    const std::vector<Tap> ry = upsample_taps(h), rx = upsample_taps(w);
    Tensor out = Tensor::zeros({c, 2 * h, 2 * w}, x.requires_grad());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < 2 * h; ++i) {
            const Tap& a = ry[i];
            for (std::size_t j = 0; j < 2 * w; ++j) {
                const Tap& b = rx[j];
                const double top = (1.0 - b.t) * x[(ch * h + a.lo) * w + b.lo] +
                                   b.t * x[(ch * h + a.lo) * w + b.hi];
                const double bot = (1.0 - b.t) * x[(ch * h + a.hi) * w + b.lo] +
                                   b.t * x[(ch * h + a.hi) * w + b.hi];
                out[(ch * 2 * h + i) * 2 * w + j] = (1.0 - a.t) * top + a.t * bot;
            }
        }
    }
    maybe_record({&x}, out, [xn = x.node(), on = out.node(), c, h, w, ry, rx]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t ch = 0; ch < c; ++ch) {
            for (std::size_t i = 0; i < 2 * h; ++i) {
                const Tap& a = ry[i];
                for (std::size_t j = 0; j < 2 * w; ++j) {
                    const Tap& b = rx[j];
                    const double g = on->grad[(ch * 2 * h + i) * 2 * w + j];
                    xn->grad[(ch * h + a.lo) * w + b.lo] += (1.0 - a.t) * (1.0 - b.t) * g;
                    xn->grad[(ch * h + a.lo) * w + b.hi] += (1.0 - a.t) * b.t * g;
                    xn->grad[(ch * h + a.hi) * w + b.lo] += a.t * (1.0 - b.t) * g;
                    xn->grad[(ch * h + a.hi) * w + b.hi] += a.t * b.t * g;
                }
            }
        }
    });
    return out;
}

} // namespace diffkpt
