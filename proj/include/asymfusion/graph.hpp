#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "asymfusion/tensor.hpp"

namespace asymfusion {

enum class ParamKind { kConvWeight, kConvBias, kNormScale, kNormShift, kEnsembleLogit };

/// A learnable array plus its accumulated gradient.
struct Parameter {
    Parameter(std::string name_, Tensor value_, ParamKind kind_)
        : name(std::move(name_)), value(std::move(value_)), grad(value.shape()), kind(kind_) {}

    void zero_grad() { std::fill(grad.data().begin(), grad.data().end(), 0.0); }

    std::string name;
    Tensor value;
    Tensor grad;
    ParamKind kind;
};

/// Handle to a node in a Graph.
struct Var {
    std::size_t id = 0;
};

struct BackwardArgs {
    const Tensor& out;
    const Tensor& grad_out;
    std::span<const Tensor* const> inputs;
    // nullptr where the corresponding input needs no gradient.
    std::span<Tensor* const> grad_inputs;
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Tape of tensor operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so the tape is topologically
/// sorted by construction. A Parameter enters the tape at most once per
/// graph; every use shares that leaf and its gradient is the sum over uses.
class Graph {
  public:
    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is kept and readable through grad().
    Var input(Tensor value);
    /// Leaf bound to a Parameter; backward() adds into Parameter::grad.
    Var param(Parameter& p);

    /// Appends an op node. `fn` may be empty for non-differentiable ops.
    Var record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn fn);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    /// Gradient of the last backward() target w.r.t. `v`; zeros if unreachable.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    const std::string& op_name(Var v) const { return nodes_.at(v.id).op; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar node. Throws std::invalid_argument for a
    /// non-scalar target.
    void backward(Var loss);

    /// Smallest |x| fed to any relu so far; gradient checks use it to keep
    /// finite-difference probes away from the kink.
    double min_abs_relu_input() const { return min_abs_relu_input_; }
    void note_relu_input(const Tensor& x);

  private:
    struct Node {
        std::string op;
        Tensor value;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::optional<Tensor> grad;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
    double min_abs_relu_input_ = 1e300;
};

// Differentiable counterparts of the kernels in ops.hpp.
Var conv2d(Graph& g, Var x, Var weight, std::optional<Var> bias, int stride, int pad);
Var relu(Graph& g, Var x);
Var add(Graph& g, Var a, Var b);
Var mul(Graph& g, Var a, Var b);
Var scale(Graph& g, Var x, double factor);
Var sigmoid(Graph& g, Var x);
Var channel_concat(Graph& g, Var a, Var b);
/// 1-based inclusive channel range, as ops::channel_slice.
Var channel_slice(Graph& g, Var x, int lo, int hi);
Var upsample_nearest2x(Graph& g, Var x);
/// Mean softmax cross-entropy over non-ignored pixels; scalar output.
Var softmax_ce(Graph& g, Var logits, const LabelMap& labels, int ignore_index = -1);
/// Scalar sum of all elements.
Var sum(Graph& g, Var x);
/// Scalar sum of weights * x, weights held constant.
Var weighted_sum(Graph& g, Var x, const Tensor& weights);

}  // namespace asymfusion
