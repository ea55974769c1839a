#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ecoc/tensor.hpp"

namespace ecoc {

// Handle into a Tape's node list.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff tape. Records one node per forward op; node ids are
// topological by construction. backward() accumulates adjoints in reverse id
// order into every node that transitively depends on a requires-grad leaf.
//
// A tape is single-threaded during record/backward. Distinct tapes over
// shared read-only parameter tensors may run concurrently.
class Tape {
public:
    explicit Tape(bool checked = false) : checked_(checked) {}

    // Drops all nodes but keeps allocated capacity; cheap between iterations.
    void reset() { nodes_.clear(); }

    bool checked() const { return checked_; }
    std::size_t node_count() const { return nodes_.size(); }

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Var v) const { return node(v.id).value; }
    // Valid after backward() for any node on a gradient path; zero tensor otherwise.
    const Tensor& grad(Var v) const;

    // ---- forward ops ------------------------------------------------------
    Var matmul(Var a, Var b);      // [m,k]x[k,n] -> [m,n], or [m,k]x[k] -> [m]
    Var bias_add(Var a, Var b);    // same shape, [m,n]+[n], or [C,H,W]+[C]
    Var tanh(Var a);
    Var relu(Var a);
    Var conv2d(Var input, Var kernels);  // [C,H,W] * [F,C,k,k] -> [F,H,W], stride 1, zero pad k/2
    Var maxpool2x2(Var a);               // [C,H,W] -> [C,H/2,W/2], H and W even
    Var flatten(Var a);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);         // elementwise, same shape
    Var scale(Var a, double factor);
    Var reduce_sum(Var a);         // -> scalar
    Var reduce_max(Var a);         // -> scalar; ties resolve to the first attaining index
    Var reduce_min(Var a);         // -> scalar; ties resolve to the first attaining index
    Var inner_product(Var a, Var b);  // sum_i a_i*b_i over flattened values -> scalar
    Var softmax(Var a);            // rank-1, max-subtracted
    Var l2_norm(Var a);            // -> scalar; subgradient 0 at the origin
    Var exp(Var a);                // elementwise
    Var log(Var a);                // elementwise; domain error in checked mode via output scan
    Var softplus(Var a);           // elementwise log(1+e^x), overflow-safe
    Var gather(Var a, std::vector<std::size_t> indices);  // rank-1 -> rank-1
    Var concat(std::span<const Var> parts);               // rank-1 pieces -> rank-1

    // Seeds the output adjoint and runs reverse accumulation. The seed shape
    // must match the output value's shape.
    void backward(Var output, const Tensor& seed);
    void backward(Var output) { backward(output, Tensor::scalar(1.0)); }

private:
    enum class Op : std::uint8_t {
        kLeaf,
        kMatmul,
        kBiasAdd,
        kTanh,
        kRelu,
        kConv2d,
        kMaxpool2x2,
        kFlatten,
        kAdd,
        kSub,
        kMul,
        kScale,
        kReduceSum,
        kReduceMax,
        kReduceMin,
        kInnerProduct,
        kSoftmax,
        kL2Norm,
        kExp,
        kLog,
        kSoftplus,
        kGather,
        kConcat,
    };

    struct Node {
        Op op = Op::kLeaf;
        std::vector<int> inputs;
        Tensor value;
        Tensor adjoint;  // allocated lazily during backward
        bool needs_grad = false;
        bool adjoint_live = false;
        double scalar_param = 0.0;
        std::vector<std::size_t> aux;  // argmax indices / gather map
    };

    Node& node(int id) { return nodes_.at(static_cast<std::size_t>(id)); }
    const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

    Var push(Node n);
    void check_finite(const Tensor& t, const char* where) const;
    Tensor& adjoint_of(int id);
    void backprop_node(int id);

    std::vector<Node> nodes_;
    bool checked_ = false;
};

}  // namespace ecoc
