#include "ecoc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecoc {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_string() +
                                " and " + b.shape_string());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
    throw std::invalid_argument(std::string(op) + ": bad shape " + a.shape_string());
}

}  // namespace

void Tape::check_finite(const Tensor& t, const char* where) const {
    if (checked_ && !all_finite(t)) {
        throw std::domain_error(std::string(where) + ": non-finite value");
    }
}

Var Tape::push(Node n) {
    check_finite(n.value, "tape op output");
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    check_finite(value, "tape leaf");
    Node n;
    n.op = Op::kLeaf;
    n.value = std::move(value);
    n.needs_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Tape::grad(Var v) const {
    static const Tensor kEmpty;
    const Node& n = node(v.id);
    return n.adjoint_live ? n.adjoint : kEmpty;
}

// ---- forward ---------------------------------------------------------------

Var Tape::matmul(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (a.rank() != 2) shape_error("matmul", a, b);
    const std::size_t m = a.extent(0), k = a.extent(1);
    Node n;
    n.op = Op::kMatmul;
    n.inputs = {av.id, bv.id};
    if (b.rank() == 2) {
        if (b.extent(0) != k) shape_error("matmul", a, b);
        const std::size_t p = b.extent(1);
        Tensor out({m, p});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                const double aij = a[i * k + j];
                if (aij == 0.0) continue;
                for (std::size_t c = 0; c < p; ++c) out[i * p + c] += aij * b[j * p + c];
            }
        }
        n.value = std::move(out);
    } else if (b.rank() == 1) {
        if (b.extent(0) != k) shape_error("matmul", a, b);
        Tensor out({m});
        for (std::size_t i = 0; i < m; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += a[i * k + j] * b[j];
            out[i] = s;
        }
        n.value = std::move(out);
    } else {
        shape_error("matmul", a, b);
    }
    n.needs_grad = node(av.id).needs_grad || node(bv.id).needs_grad;
    return push(std::move(n));
}

Var Tape::bias_add(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    Node n;
    n.op = Op::kBiasAdd;
    n.inputs = {av.id, bv.id};
    Tensor out = a;
    if (a.same_shape(b)) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    } else if (a.rank() == 2 && b.rank() == 1 && b.extent(0) == a.extent(1)) {
        const std::size_t cols = a.extent(1);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % cols];
    } else if (a.rank() == 3 && b.rank() == 1 && b.extent(0) == a.extent(0)) {
        const std::size_t plane = a.extent(1) * a.extent(2);
        for (std::size_t c = 0; c < a.extent(0); ++c) {
            for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += b[c];
        }
    } else {
        shape_error("bias_add", a, b);
    }
    n.value = std::move(out);
    n.needs_grad = node(av.id).needs_grad || node(bv.id).needs_grad;
    return push(std::move(n));
}

Var Tape::tanh(Var av) {
    Node n;
    n.op = Op::kTanh;
    n.inputs = {av.id};
    n.value = value(av);
    for (double& v : n.value.values()) v = std::tanh(v);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::relu(Var av) {
    Node n;
    n.op = Op::kRelu;
    n.inputs = {av.id};
    n.value = value(av);
    for (double& v : n.value.values()) v = v > 0.0 ? v : 0.0;
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::conv2d(Var inputv, Var kernelsv) {
    const Tensor& in = value(inputv);
    const Tensor& ker = value(kernelsv);
    if (in.rank() != 3 || ker.rank() != 4) shape_error("conv2d", in, ker);
    const std::size_t C = in.extent(0), H = in.extent(1), W = in.extent(2);
    const std::size_t F = ker.extent(0), KC = ker.extent(1), kh = ker.extent(2), kw = ker.extent(3);
    if (KC != C || kh != kw || kh % 2 == 0) shape_error("conv2d", in, ker);
    const std::size_t k = kh;
    const long pad = static_cast<long>(k / 2);

    Node n;
    n.op = Op::kConv2d;
    n.inputs = {inputv.id, kernelsv.id};
    Tensor out({F, H, W});
    for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t c = 0; c < C; ++c) {
            const double* kbase = ker.data() + ((f * C + c) * k) * k;
            const double* ibase = in.data() + c * H * W;
            double* obase = out.data() + f * H * W;
            for (std::size_t y = 0; y < H; ++y) {
                for (std::size_t x = 0; x < W; ++x) {
                    double s = 0.0;
                    for (std::size_t dy = 0; dy < k; ++dy) {
                        const long iy = static_cast<long>(y + dy) - pad;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t dx = 0; dx < k; ++dx) {
                            const long ix = static_cast<long>(x + dx) - pad;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            s += ibase[iy * static_cast<long>(W) + ix] * kbase[dy * k + dx];
                        }
                    }
                    obase[y * W + x] += s;
                }
            }
        }
    }
    n.value = std::move(out);
    n.needs_grad = node(inputv.id).needs_grad || node(kernelsv.id).needs_grad;
    return push(std::move(n));
}

Var Tape::maxpool2x2(Var av) {
    const Tensor& in = value(av);
    if (in.rank() != 3 || in.extent(1) % 2 != 0 || in.extent(2) % 2 != 0) {
        shape_error("maxpool2x2", in);
    }
    const std::size_t C = in.extent(0), H = in.extent(1), W = in.extent(2);
    const std::size_t OH = H / 2, OW = W / 2;
    Node n;
    n.op = Op::kMaxpool2x2;
    n.inputs = {av.id};
    Tensor out({C, OH, OW});
    n.aux.resize(C * OH * OW);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oy = 0; oy < OH; ++oy) {
            for (std::size_t ox = 0; ox < OW; ++ox) {
                std::size_t best = (c * H + oy * 2) * W + ox * 2;
                double bv = in[best];
                // window scanned row-major; strict > keeps the first maximum
                const std::size_t cand[3] = {best + 1, best + W, best + W + 1};
                for (std::size_t idx : cand) {
                    if (in[idx] > bv) {
                        bv = in[idx];
                        best = idx;
                    }
                }
                out[(c * OH + oy) * OW + ox] = bv;
                n.aux[(c * OH + oy) * OW + ox] = best;
            }
        }
    }
    n.value = std::move(out);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::flatten(Var av) {
    Node n;
    n.op = Op::kFlatten;
    n.inputs = {av.id};
    n.value = Tensor({value(av).size()}, value(av).values());
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::add(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (!a.same_shape(b)) shape_error("add", a, b);
    Node n;
    n.op = Op::kAdd;
    n.inputs = {av.id, bv.id};
    n.value = a;
    for (std::size_t i = 0; i < b.size(); ++i) n.value[i] += b[i];
    n.needs_grad = node(av.id).needs_grad || node(bv.id).needs_grad;
    return push(std::move(n));
}

Var Tape::sub(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (!a.same_shape(b)) shape_error("sub", a, b);
    Node n;
    n.op = Op::kSub;
    n.inputs = {av.id, bv.id};
    n.value = a;
    for (std::size_t i = 0; i < b.size(); ++i) n.value[i] -= b[i];
    n.needs_grad = node(av.id).needs_grad || node(bv.id).needs_grad;
    return push(std::move(n));
}

Var Tape::mul(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (!a.same_shape(b)) shape_error("mul", a, b);
    Node n;
    n.op = Op::kMul;
    n.inputs = {av.id, bv.id};
    n.value = a;
    for (std::size_t i = 0; i < b.size(); ++i) n.value[i] *= b[i];
    n.needs_grad = node(av.id).needs_grad || node(bv.id).needs_grad;
    return push(std::move(n));
}

Var Tape::scale(Var av, double factor) {
    Node n;
    n.op = Op::kScale;
    n.inputs = {av.id};
    n.scalar_param = factor;
    n.value = value(av);
    for (double& v : n.value.values()) v *= factor;
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::reduce_sum(Var av) {
    Node n;
    n.op = Op::kReduceSum;
    n.inputs = {av.id};
    double s = 0.0;
    for (double v : value(av).values()) s += v;
    n.value = Tensor::scalar(s);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::reduce_max(Var av) {
    const Tensor& a = value(av);
    if (a.size() == 0) shape_error("reduce_max", a);
    Node n;
    n.op = Op::kReduceMax;
    n.inputs = {av.id};
    std::size_t arg = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        if (a[i] > a[arg]) arg = i;
    }
    n.aux = {arg};
    n.value = Tensor::scalar(a[arg]);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::reduce_min(Var av) {
    const Tensor& a = value(av);
    if (a.size() == 0) shape_error("reduce_min", a);
    Node n;
    n.op = Op::kReduceMin;
    n.inputs = {av.id};
    std::size_t arg = 0;
    for (std::size_t i = 1; i < a.size(); ++i) {
        if (a[i] < a[arg]) arg = i;
    }
    n.aux = {arg};
    n.value = Tensor::scalar(a[arg]);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::inner_product(Var av, Var bv) {
    const Tensor& a = value(av);
    const Tensor& b = value(bv);
    if (a.size() != b.size()) shape_error("inner_product", a, b);
    Node n;
    n.op = Op::kInnerProduct;
    n.inputs = {av.id, bv.id};
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    n.value = Tensor::scalar(s);
    n.needs_grad = node(av.id).needs_grad || node(bv.id).needs_grad;
    return push(std::move(n));
}

Var Tape::softmax(Var av) {
    const Tensor& a = value(av);
    if (a.rank() != 1 || a.size() == 0) shape_error("softmax", a);
    Node n;
    n.op = Op::kSoftmax;
    n.inputs = {av.id};
    double mx = a[0];
    for (double v : a.values()) mx = std::max(mx, v);
    Tensor out = a;
    double denom = 0.0;
    for (double& v : out.values()) {
        v = std::exp(v - mx);
        denom += v;
    }
    for (double& v : out.values()) v /= denom;
    n.value = std::move(out);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::l2_norm(Var av) {
    Node n;
    n.op = Op::kL2Norm;
    n.inputs = {av.id};
    n.value = Tensor::scalar(l2_norm_of(value(av)));
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::exp(Var av) {
    Node n;
    n.op = Op::kExp;
    n.inputs = {av.id};
    n.value = value(av);
    for (double& v : n.value.values()) v = std::exp(v);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::log(Var av) {
    Node n;
    n.op = Op::kLog;
    n.inputs = {av.id};
    n.value = value(av);
    for (double& v : n.value.values()) v = std::log(v);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::softplus(Var av) {
    Node n;
    n.op = Op::kSoftplus;
    n.inputs = {av.id};
    n.value = value(av);
    for (double& v : n.value.values()) {
        v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    }
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::gather(Var av, std::vector<std::size_t> indices) {
    const Tensor& a = value(av);
    if (a.rank() != 1) shape_error("gather", a);
    Node n;
    n.op = Op::kGather;
    n.inputs = {av.id};
    Tensor out({indices.size()});
    for (std::size_t j = 0; j < indices.size(); ++j) {
        if (indices[j] >= a.size()) shape_error("gather", a);
        out[j] = a[indices[j]];
    }
    n.aux = std::move(indices);
    n.value = std::move(out);
    n.needs_grad = node(av.id).needs_grad;
    return push(std::move(n));
}

Var Tape::concat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    Node n;
    n.op = Op::kConcat;
    std::size_t total = 0;
    for (Var p : parts) {
        if (value(p).rank() != 1) shape_error("concat", value(p));
        total += value(p).size();
        n.inputs.push_back(p.id);
        n.needs_grad = n.needs_grad || node(p.id).needs_grad;
    }
    Tensor out({total});
    std::size_t pos = 0;
    for (Var p : parts) {
        for (double v : value(p).values()) out[pos++] = v;
    }
    n.value = std::move(out);
    return push(std::move(n));
}

// ---- backward ---------------------------------------------------------------

Tensor& Tape::adjoint_of(int id) {
    Node& n = node(id);
    if (!n.adjoint_live) {
        n.adjoint = Tensor::zeros_like(n.value);
        n.adjoint_live = true;
    }
    return n.adjoint;
}

void Tape::backward(Var output, const Tensor& seed) {
    Node& out = node(output.id);
    if (!seed.same_shape(out.value)) {
        throw std::invalid_argument("backward: seed shape " + seed.shape_string() +
                                    " does not match output shape " + out.value.shape_string());
    }
    // clear any previous pass
    for (Node& n : nodes_) n.adjoint_live = false;
    adjoint_of(output.id) = seed;
    node(output.id).adjoint_live = true;
    for (int id = output.id; id >= 0; --id) {
        const Node& n = node(id);
        if (!n.adjoint_live || !n.needs_grad || n.op == Op::kLeaf) continue;
        backprop_node(id);
    }
}

void Tape::backprop_node(int id) {
    Node& n = node(id);
    const Tensor& g = n.adjoint;
    auto in_needs = [&](int slot) { return node(n.inputs[static_cast<std::size_t>(slot)]).needs_grad; };
    auto in_val = [&](int slot) -> const Tensor& {
        return node(n.inputs[static_cast<std::size_t>(slot)]).value;
    };
    auto in_adj = [&](int slot) -> Tensor& { return adjoint_of(n.inputs[static_cast<std::size_t>(slot)]); };

    switch (n.op) {
        case Op::kLeaf:
            break;
        case Op::kMatmul: {
            const Tensor& a = in_val(0);
            const Tensor& b = in_val(1);
            const std::size_t m = a.extent(0), k = a.extent(1);
            if (b.rank() == 2) {
                const std::size_t p = b.extent(1);
                if (in_needs(0)) {
                    Tensor& da = in_adj(0);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < k; ++j) {
                            double s = 0.0;
                            for (std::size_t c = 0; c < p; ++c) s += g[i * p + c] * b[j * p + c];
                            da[i * k + j] += s;
                        }
                }
                if (in_needs(1)) {
                    Tensor& db = in_adj(1);
                    for (std::size_t j = 0; j < k; ++j)
                        for (std::size_t c = 0; c < p; ++c) {
                            double s = 0.0;
                            for (std::size_t i = 0; i < m; ++i) s += a[i * k + j] * g[i * p + c];
                            db[j * p + c] += s;
                        }
                }
            } else {
                if (in_needs(0)) {
                    Tensor& da = in_adj(0);
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < k; ++j) da[i * k + j] += g[i] * b[j];
                }
                if (in_needs(1)) {
                    Tensor& db = in_adj(1);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double gi = g[i];
                        if (gi == 0.0) continue;
                        for (std::size_t j = 0; j < k; ++j) db[j] += gi * a[i * k + j];
                    }
                }
            }
            break;
        }
        case Op::kBiasAdd: {
            const Tensor& a = in_val(0);
            const Tensor& b = in_val(1);
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (in_needs(1)) {
                Tensor& db = in_adj(1);
                if (a.same_shape(b)) {
                    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                } else if (a.rank() == 2) {
                    const std::size_t cols = a.extent(1);
                    for (std::size_t i = 0; i < g.size(); ++i) db[i % cols] += g[i];
                } else {
                    const std::size_t plane = a.extent(1) * a.extent(2);
                    for (std::size_t c = 0; c < a.extent(0); ++c)
                        for (std::size_t i = 0; i < plane; ++i) db[c] += g[c * plane + i];
                }
            }
            break;
        }
        case Op::kTanh: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const double y = n.value[i];
                    da[i] += g[i] * (1.0 - y * y);
                }
            }
            break;
        }
        case Op::kRelu: {
            if (in_needs(0)) {
                const Tensor& a = in_val(0);
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (a[i] > 0.0) da[i] += g[i];
                }
            }
            break;
        }
        case Op::kConv2d: {
            const Tensor& in = in_val(0);
            const Tensor& ker = in_val(1);
            const std::size_t C = in.extent(0), H = in.extent(1), W = in.extent(2);
            const std::size_t F = ker.extent(0), k = ker.extent(2);
            const long pad = static_cast<long>(k / 2);
            if (in_needs(0)) {
                Tensor& din = in_adj(0);
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t c = 0; c < C; ++c) {
                        const double* kbase = ker.data() + ((f * C + c) * k) * k;
                        const double* gbase = g.data() + f * H * W;
                        double* dbase = din.data() + c * H * W;
                        for (std::size_t y = 0; y < H; ++y)
                            for (std::size_t x = 0; x < W; ++x) {
                                const double gv = gbase[y * W + x];
                                if (gv == 0.0) continue;
                                for (std::size_t dy = 0; dy < k; ++dy) {
                                    const long iy = static_cast<long>(y + dy) - pad;
                                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                    for (std::size_t dx = 0; dx < k; ++dx) {
                                        const long ix = static_cast<long>(x + dx) - pad;
                                        if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                        dbase[iy * static_cast<long>(W) + ix] += gv * kbase[dy * k + dx];
                                    }
                                }
                            }
                    }
            }
            if (in_needs(1)) {
                Tensor& dker = in_adj(1);
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t c = 0; c < C; ++c) {
                        double* dkbase = dker.data() + ((f * C + c) * k) * k;
                        const double* gbase = g.data() + f * H * W;
                        const double* ibase = in.data() + c * H * W;
                        for (std::size_t dy = 0; dy < k; ++dy)
                            for (std::size_t dx = 0; dx < k; ++dx) {
                                double s = 0.0;
                                for (std::size_t y = 0; y < H; ++y) {
                                    const long iy = static_cast<long>(y + dy) - pad;
                                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                    for (std::size_t x = 0; x < W; ++x) {
                                        const long ix = static_cast<long>(x + dx) - pad;
                                        if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                        s += gbase[y * W + x] * ibase[iy * static_cast<long>(W) + ix];
                                    }
                                }
                                dkbase[dy * k + dx] += s;
                            }
                    }
            }
            break;
        }
        case Op::kMaxpool2x2: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[n.aux[i]] += g[i];
            }
            break;
        }
        case Op::kFlatten: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            break;
        }
        case Op::kAdd: {
            for (int slot : {0, 1}) {
                if (in_needs(slot)) {
                    Tensor& d = in_adj(slot);
                    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                }
            }
            break;
        }
        case Op::kSub: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
            }
            if (in_needs(1)) {
                Tensor& db = in_adj(1);
                for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
            break;
        }
        case Op::kMul: {
            if (in_needs(0)) {
                const Tensor& b = in_val(1);
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
            }
            if (in_needs(1)) {
                const Tensor& a = in_val(0);
                Tensor& db = in_adj(1);
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
            }
            break;
        }
        case Op::kScale: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.scalar_param;
            }
            break;
        }
        case Op::kReduceSum: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (double& v : da.values()) v += g[0];
            }
            break;
        }
        case Op::kReduceMax:
        case Op::kReduceMin: {
            if (in_needs(0)) in_adj(0)[n.aux[0]] += g[0];
            break;
        }
        case Op::kInnerProduct: {
            if (in_needs(0)) {
                const Tensor& b = in_val(1);
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < b.size(); ++i) da[i] += g[0] * b[i];
            }
            if (in_needs(1)) {
                const Tensor& a = in_val(0);
                Tensor& db = in_adj(1);
                for (std::size_t i = 0; i < a.size(); ++i) db[i] += g[0] * a[i];
            }
            break;
        }
        case Op::kSoftmax: {
            if (in_needs(0)) {
                const Tensor& p = n.value;
                double dot = 0.0;
                for (std::size_t i = 0; i < p.size(); ++i) dot += g[i] * p[i];
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < p.size(); ++i) da[i] += p[i] * (g[i] - dot);
            }
            break;
        }
        case Op::kL2Norm: {
            if (in_needs(0)) {
                const double norm = n.value[0];
                if (norm > 0.0) {
                    const Tensor& a = in_val(0);
                    Tensor& da = in_adj(0);
                    const double f = g[0] / norm;
                    for (std::size_t i = 0; i < a.size(); ++i) da[i] += f * a[i];
                }
            }
            break;
        }
        case Op::kExp: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * n.value[i];
            }
            break;
        }
        case Op::kLog: {
            if (in_needs(0)) {
                const Tensor& a = in_val(0);
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / a[i];
            }
            break;
        }
        case Op::kSoftplus: {
            if (in_needs(0)) {
                const Tensor& a = in_val(0);
                Tensor& da = in_adj(0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    // sigmoid computed from the negative side to avoid overflow
                    const double s = a[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-a[i]))
                                                 : std::exp(a[i]) / (1.0 + std::exp(a[i]));
                    da[i] += g[i] * s;
                }
            }
            break;
        }
        case Op::kGather: {
            if (in_needs(0)) {
                Tensor& da = in_adj(0);
                for (std::size_t j = 0; j < n.aux.size(); ++j) da[n.aux[j]] += g[j];
            }
            break;
        }
        case Op::kConcat: {
            std::size_t pos = 0;
            for (std::size_t s = 0; s < n.inputs.size(); ++s) {
                const std::size_t len = node(n.inputs[s]).value.size();
                if (node(n.inputs[s]).needs_grad) {
                    Tensor& d = adjoint_of(n.inputs[s]);
                    for (std::size_t i = 0; i < len; ++i) d[i] += g[pos + i];
                }
                pos += len;
            }
            break;
        }
    }
}

}  // namespace ecoc
