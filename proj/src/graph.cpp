#include "asymfusion/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "asymfusion/ops.hpp"

namespace asymfusion {

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, nullptr, std::nullopt});
    return Var{nodes_.size() - 1};
}

Var Graph::input(Tensor value) {
    nodes_.push_back(Node{"input", std::move(value), {}, {}, true, nullptr, std::nullopt});
    return Var{nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{it->second};
    nodes_.push_back(Node{"param:" + p.name, p.value, {}, {}, true, &p, std::nullopt});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var{nodes_.size() - 1};
}

Var Graph::record(std::string op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
    Node node{std::move(op), std::move(value), {}, std::move(fn), false, nullptr, std::nullopt};
    node.inputs.reserve(inputs.size());
    for (Var v : inputs) {
        if (v.id >= nodes_.size()) throw std::out_of_range("Graph::record: dangling input");
        node.inputs.push_back(v.id);
        node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
    }
    if (!node.backward) node.requires_grad = false;
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Tensor Graph::grad(Var v) const {
    const Node& node = nodes_.at(v.id);
    return node.grad ? *node.grad : Tensor::zeros(node.value.shape());
}

void Graph::note_relu_input(const Tensor& x) {
    for (double v : x.data()) min_abs_relu_input_ = std::min(min_abs_relu_input_, std::abs(v));
}

void Graph::backward(Var loss) {
    Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) {
        throw std::invalid_argument("Graph::backward: loss must be scalar, got shape " +
                                    root.value.shape().str());
    }
    for (Node& n : nodes_) n.grad.reset();
    root.grad = Tensor::ones(root.value.shape());

    std::vector<const Tensor*> in_values;
    std::vector<Tensor*> in_grads;
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& node = nodes_[id];
        if (!node.grad || !node.backward || !node.requires_grad) continue;
        in_values.clear();
        in_grads.clear();
        for (std::size_t src : node.inputs) {
            Node& in = nodes_[src];
            in_values.push_back(&in.value);
            if (in.requires_grad) {
                if (!in.grad) in.grad = Tensor::zeros(in.value.shape());
                in_grads.push_back(&*in.grad);
            } else {
                in_grads.push_back(nullptr);
            }
        }
        node.backward(BackwardArgs{node.value, *node.grad, in_values, in_grads});
    }
    // Parameter leaves are visited in tape order, which fixes the reduction order.
    for (Node& node : nodes_) {
        if (node.param == nullptr || !node.grad) continue;
        auto dst = node.param->grad.data();
        auto src = node.grad->data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

Var conv2d(Graph& g, Var x, Var weight, std::optional<Var> bias, int stride, int pad) {
    const Tensor* b = bias ? &g.value(*bias) : nullptr;
    Tensor out = ops::conv2d(g.value(x), g.value(weight), b, stride, pad);
    std::vector<Var> inputs{x, weight};
    if (bias) inputs.push_back(*bias);
    return g.record("conv2d", std::move(out), std::move(inputs), [stride, pad](const BackwardArgs& a) {
        const Tensor& xv = *a.inputs[0];
        const Tensor& wv = *a.inputs[1];
        const Shape xs = xv.shape();
        const Shape ws = wv.shape();
        const Shape os = a.out.shape();
        const int k = ws.h;
        const int ckk = ws.c * k * k;
        const int hw = os.h * os.w;
        const bool direct = (k == 1 && stride == 1 && pad == 0);
        std::vector<double> cols(static_cast<std::size_t>(ckk) * hw);
        std::vector<double> dcols(static_cast<std::size_t>(ckk) * hw);
        for (int n = 0; n < xs.n; ++n) {
            const double* gout = a.grad_out.data().data() + static_cast<std::size_t>(n) * ws.n * hw;
            const double* img = xv.data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
            if (a.grad_inputs[1] != nullptr) {
                const double* colp = img;
                if (!direct) {
                    ops::im2col(img, xs.c, xs.h, xs.w, k, stride, pad, cols.data());
                    colp = cols.data();
                }
                ops::gemm(false, true, ws.n, ckk, hw, 1.0, gout, colp, 1.0,
                          a.grad_inputs[1]->data().data());
            }
            if (a.grad_inputs[0] != nullptr) {
                double* gx = a.grad_inputs[0]->data().data() + static_cast<std::size_t>(n) * xs.c * xs.plane();
                if (direct) {
                    ops::gemm(true, false, ckk, hw, ws.n, 1.0, wv.data().data(), gout, 1.0, gx);
                } else {
                    ops::gemm(true, false, ckk, hw, ws.n, 1.0, wv.data().data(), gout, 0.0, dcols.data());
                    ops::col2im(dcols.data(), xs.c, xs.h, xs.w, k, stride, pad, gx);
                }
            }
            if (a.grad_inputs.size() > 2 && a.grad_inputs[2] != nullptr) {
                Tensor& gb = *a.grad_inputs[2];
                for (int o = 0; o < ws.n; ++o) {
                    double s = 0.0;
                    for (int p = 0; p < hw; ++p) s += gout[o * hw + p];
                    gb[o] += s;
                }
            }
        }
    });
}

Var relu(Graph& g, Var x) {
    g.note_relu_input(g.value(x));
    return g.record("relu", ops::relu(g.value(x)), {x}, [](const BackwardArgs& a) {
        if (a.grad_inputs[0] == nullptr) return;
        Tensor& gx = *a.grad_inputs[0];
        const Tensor& xv = *a.inputs[0];
        for (std::size_t i = 0; i < gx.size(); ++i) {
            if (xv[i] > 0.0) gx[i] += a.grad_out[i];
        }
    });
}

Var add(Graph& g, Var a, Var b) {
    return g.record("add", ops::add(g.value(a), g.value(b)), {a, b}, [](const BackwardArgs& args) {
        for (Tensor* gi : args.grad_inputs) {
            if (gi == nullptr) continue;
            for (std::size_t i = 0; i < gi->size(); ++i) (*gi)[i] += args.grad_out[i];
        }
    });
}

Var mul(Graph& g, Var a, Var b) {
    return g.record("mul", ops::mul(g.value(a), g.value(b)), {a, b}, [](const BackwardArgs& args) {
        for (int side = 0; side < 2; ++side) {
            Tensor* gi = args.grad_inputs[side];
            if (gi == nullptr) continue;
            const Tensor& other = *args.inputs[1 - side];
            for (std::size_t i = 0; i < gi->size(); ++i) (*gi)[i] += args.grad_out[i] * other[i];
        }
    });
}

Var scale(Graph& g, Var x, double factor) {
    return g.record("scale", ops::scale(g.value(x), factor), {x}, [factor](const BackwardArgs& a) {
        if (a.grad_inputs[0] == nullptr) return;
        Tensor& gx = *a.grad_inputs[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * a.grad_out[i];
    });
}

Var sigmoid(Graph& g, Var x) {
    return g.record("sigmoid", ops::sigmoid(g.value(x)), {x}, [](const BackwardArgs& a) {
        if (a.grad_inputs[0] == nullptr) return;
        Tensor& gx = *a.grad_inputs[0];
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const double s = a.out[i];
            gx[i] += a.grad_out[i] * s * (1.0 - s);
        }
    });
}

Var channel_concat(Graph& g, Var a, Var b) {
    return g.record("channel_concat", ops::channel_concat(g.value(a), g.value(b)), {a, b},
                    [](const BackwardArgs& args) {
                        const Shape sa = args.inputs[0]->shape();
                        const Shape sb = args.inputs[1]->shape();
                        const std::size_t pa = static_cast<std::size_t>(sa.c) * sa.plane();
                        const std::size_t pb = static_cast<std::size_t>(sb.c) * sb.plane();
                        for (int n = 0; n < sa.n; ++n) {
                            const double* src = args.grad_out.data().data() + n * (pa + pb);
                            if (Tensor* ga = args.grad_inputs[0]) {
                                double* dst = ga->data().data() + n * pa;
                                for (std::size_t i = 0; i < pa; ++i) dst[i] += src[i];
                            }
                            if (Tensor* gb = args.grad_inputs[1]) {
                                double* dst = gb->data().data() + n * pb;
                                for (std::size_t i = 0; i < pb; ++i) dst[i] += src[pa + i];
                            }
                        }
                    });
}

Var channel_slice(Graph& g, Var x, int lo, int hi) {
    return g.record("channel_slice", ops::channel_slice(g.value(x), lo, hi), {x},
                    [lo, hi](const BackwardArgs& a) {
                        if (a.grad_inputs[0] == nullptr) return;
                        Tensor& gx = *a.grad_inputs[0];
                        const Shape s = gx.shape();
                        const int count = hi - lo + 1;
                        const std::size_t plane = s.plane();
                        for (int n = 0; n < s.n; ++n) {
                            double* dst = gx.data().data() + (static_cast<std::size_t>(n) * s.c + (lo - 1)) * plane;
                            const double* src = a.grad_out.data().data() + static_cast<std::size_t>(n) * count * plane;
                            for (std::size_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                        }
                    });
}

Var upsample_nearest2x(Graph& g, Var x) {
    return g.record("upsample_nearest2x", ops::upsample_nearest2x(g.value(x)), {x},
                    [](const BackwardArgs& a) {
                        if (a.grad_inputs[0] == nullptr) return;
                        Tensor& gx = *a.grad_inputs[0];
                        const Shape os = a.grad_out.shape();
                        for (int n = 0; n < os.n; ++n)
                            for (int c = 0; c < os.c; ++c)
                                for (int y = 0; y < os.h; ++y)
                                    for (int xx = 0; xx < os.w; ++xx)
                                        gx.at(n, c, y / 2, xx / 2) += a.grad_out.at(n, c, y, xx);
                    });
}

Var softmax_ce(Graph& g, Var logits, const LabelMap& labels, int ignore_index) {
    ops::SoftmaxCe ce = ops::softmax_ce(g.value(logits), labels, ignore_index);
    auto probs = std::make_shared<Tensor>(std::move(ce.probs));
    const std::size_t counted = ce.counted;
    return g.record(
        "softmax_ce", Tensor::scalar(ce.loss), {logits},
        [probs, labels, ignore_index, counted](const BackwardArgs& a) {
            if (a.grad_inputs[0] == nullptr || counted == 0) return;
            Tensor& gl = *a.grad_inputs[0];
            const Shape s = gl.shape();
            const std::size_t plane = s.plane();
            const double coef = a.grad_out[0] / static_cast<double>(counted);
            for (int n = 0; n < s.n; ++n) {
                for (std::size_t p = 0; p < plane; ++p) {
                    const int label = labels.data[n * plane + p];
                    if (label == ignore_index) continue;
                    const std::size_t base = static_cast<std::size_t>(n) * s.c * plane + p;
                    for (int c = 0; c < s.c; ++c) {
                        const double target = (c == label) ? 1.0 : 0.0;
                        gl[base + c * plane] += coef * ((*probs)[base + c * plane] - target);
                    }
                }
            }
        });
}

Var sum(Graph& g, Var x) {
    double total = 0.0;
    for (double v : g.value(x).data()) total += v;
    return g.record("sum", Tensor::scalar(total), {x}, [](const BackwardArgs& a) {
        if (a.grad_inputs[0] == nullptr) return;
        for (double& v : a.grad_inputs[0]->data()) v += a.grad_out[0];
    });
}

Var weighted_sum(Graph& g, Var x, const Tensor& weights) {
    const Tensor& xv = g.value(x);
    if (xv.shape() != weights.shape()) {
        throw DimensionError("shape", "weighted_sum: " + xv.shape().str() + " vs " + weights.shape().str());
    }
    double total = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) total += weights[i] * xv[i];
    return g.record("weighted_sum", Tensor::scalar(total), {x}, [weights](const BackwardArgs& a) {
        if (a.grad_inputs[0] == nullptr) return;
        Tensor& gx = *a.grad_inputs[0];
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += a.grad_out[0] * weights[i];
    });
}

}  // namespace asymfusion
